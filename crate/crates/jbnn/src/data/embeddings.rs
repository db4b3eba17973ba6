//! Pretrained embedding tables in word2vec text format.
//!
//! The file starts with a `count dim` header line followed by one
//! `token v1 ... v_dim` line per token. The in-memory table keeps one row
//! per vocabulary id, so rows 0 (padding) and 1 (OOV) are zero and stay
//! that way; real tokens occupy rows 2 onward.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Vocabulary, RESERVED_IDS};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    matrix: Matrix,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Wrap a full id-indexed matrix (reserved rows included and zeroed).
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::NonFinite("embedding table".into()));
        }
        for id in 0..RESERVED_IDS.min(matrix.rows()) {
            if matrix.row(id).iter().any(|&v| v != 0.0) {
                return Err(Error::Config(format!(
                    "embedding row {id} is reserved and must be zero"
                )));
            }
        }
        Ok(EmbeddingTable {
            matrix,
            trainable: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        self.matrix.row(id)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.matrix
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a word2vec text file into a vocabulary and an id-indexed table.
/// Tokens later looked up but absent from the file resolve to the OOV id,
/// whose vector is zero.
pub fn load_embeddings(path: &Path) -> Result<(Vocabulary, EmbeddingTable)> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))??;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, 1, format!("bad header '{header}', expected 'count dim'")))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, 1, format!("bad header '{header}', expected 'count dim'")))?;
    if parts.next().is_some() || dim == 0 {
        return Err(parse_err(path, 1, format!("bad header '{header}'")));
    }

    let mut tokens = Vec::with_capacity(count);
    let mut values = vec![0.0; RESERVED_IDS * dim];
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields
            .next()
            .ok_or_else(|| parse_err(path, lineno, "missing token"))?;
        let mut row = Vec::with_capacity(dim);
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("non-numeric value '{field}'")))?;
            row.push(v);
        }
        if row.len() != dim {
            return Err(parse_err(
                path,
                lineno,
                format!("{} values for token '{token}', expected {dim}", row.len()),
            ));
        }
        if tokens.contains(&token.to_string()) {
            return Err(parse_err(path, lineno, format!("duplicate token '{token}'")));
        }
        tokens.push(token.to_string());
        values.extend_from_slice(&row);
    }
    if tokens.len() != count {
        return Err(parse_err(
            path,
            1,
            format!("header declares {count} tokens, file has {}", tokens.len()),
        ));
    }

    let vocab = Vocabulary::from_tokens(tokens)?;
    let matrix = Matrix::from_vec(vocab.id_count(), dim, values)?;
    Ok((vocab, EmbeddingTable::new(matrix)?))
}

/// Write real-token rows in word2vec text format. Values are printed with
/// 17 significant digits so reloading reproduces them bit for bit.
pub fn save_embeddings(path: &Path, vocab: &Vocabulary, table: &EmbeddingTable) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{} {}", vocab.word_count(), table.dim())?;
    for (offset, token) in vocab.words().enumerate() {
        write!(out, "{token}")?;
        for v in table.embedding(RESERVED_IDS + offset) {
            write!(out, " {v:.16e}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
