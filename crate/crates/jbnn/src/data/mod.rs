//! Vocabulary, corpus ingestion, batching, and fold splitting.
//!
//! Corpora are UTF-8 JSONL, one `{"tokens": [...], "labels": [...]}` object
//! per line, with a sidecar `<stem>.header.json` declaring `label_names`.
//! Token ids 0 and 1 are reserved: 0 pads, 1 is the shared slot for tokens
//! missing from the embedding file (their vector is zero).

mod embeddings;
mod synthetic;

pub use embeddings::{load_embeddings, save_embeddings, EmbeddingTable};
pub use synthetic::{generate_synthetic, pair_marginals, SynthSpec};

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from;

pub const PAD_ID: usize = 0;
pub const OOV_ID: usize = 1;
/// Number of reserved ids preceding real tokens.
pub const RESERVED_IDS: usize = 2;

/// Per-instance binary targets.
pub type LabelVector = Vec<u8>;

/// Token-id mapping with dense ids: 0 = padding, 1 = out-of-vocabulary,
/// real tokens from 2 upward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from real tokens in order; ids are assigned as 2, 3, ...
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut id_to_token = vec!["<pad>".to_string(), "<oov>".to_string()];
        let mut token_to_id = HashMap::new();
        for token in tokens {
            if token_to_id.contains_key(&token) {
                return Err(Error::Config(format!("duplicate token '{token}'")));
            }
            token_to_id.insert(token.clone(), id_to_token.len());
            id_to_token.push(token);
        }
        Ok(Vocabulary {
            id_to_token,
            token_to_id,
        })
    }

    /// Rebuild the lookup map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .skip(RESERVED_IDS)
            .map(|(id, t)| (t.clone(), id))
            .collect();
    }

    /// Total lookup of a token: unknown tokens map to [`OOV_ID`].
    pub fn lookup(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    /// Number of real tokens (reserved ids excluded).
    pub fn word_count(&self) -> usize {
        self.id_to_token.len() - RESERVED_IDS
    }

    /// Total id count including the reserved padding and OOV slots. This is
    /// the row count an embedding table must have.
    pub fn id_count(&self) -> usize {
        self.id_to_token.len()
    }

    /// Real tokens in id order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().skip(RESERVED_IDS).map(|s| s.as_str())
    }
}

/// One tokenized sentence; ids are unpadded here and padded per batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sentence {
    pub ids: Vec<usize>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<(Sentence, LabelVector)>,
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_count(&self) -> usize {
        self.label_names.len()
    }

    /// New dataset holding only the listed examples.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            label_names: self.label_names.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct HeaderFile {
    label_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusRecord {
    tokens: Vec<String>,
    labels: Vec<u8>,
}

/// Sidecar header path for a corpus: `data.jsonl` -> `data.header.json`.
pub fn header_path_for(corpus: &Path) -> PathBuf {
    corpus.with_extension("header.json")
}

/// Load a JSONL corpus. Sentences longer than `max_len` are truncated, not
/// rejected. Records with a wrong label arity, an empty token list, or a
/// non-binary label are rejected with their 0-based record index.
pub fn load_dataset(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Dataset> {
    let header_path = header_path_for(path);
    let header_text = std::fs::read_to_string(&header_path).map_err(|e| {
        Error::Config(format!(
            "cannot read corpus header {}: {e}",
            header_path.display()
        ))
    })?;
    let header: HeaderFile = serde_json::from_str(&header_text)
        .map_err(|e| Error::json(header_path.display().to_string(), e))?;
    let m = header.label_names.len();
    if m == 0 {
        return Err(Error::Config(format!(
            "{}: label_names is empty",
            header_path.display()
        )));
    }

    let file = std::fs::File::open(path)?;
    let mut examples = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            index,
            msg: format!("bad JSON: {e}"),
        })?;
        if record.tokens.is_empty() {
            return Err(Error::Record {
                index,
                msg: "empty token list".into(),
            });
        }
        if record.labels.len() != m {
            return Err(Error::Record {
                index,
                msg: format!("{} labels, expected {m}", record.labels.len()),
            });
        }
        if let Some(bad) = record.labels.iter().find(|&&v| v > 1) {
            return Err(Error::Record {
                index,
                msg: format!("non-binary label value {bad}"),
            });
        }
        let ids = record
            .tokens
            .iter()
            .take(max_len)
            .map(|t| vocab.lookup(t))
            .collect();
        examples.push((Sentence { ids }, record.labels));
    }
    if examples.is_empty() {
        return Err(Error::Config(format!("{}: corpus is empty", path.display())));
    }
    Ok(Dataset {
        examples,
        label_names: header.label_names,
    })
}

/// Write a dataset back out as JSONL plus its sidecar header.
pub fn save_dataset(path: &Path, vocab: &Vocabulary, ds: &Dataset) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (sentence, labels) in &ds.examples {
        let record = CorpusRecord {
            tokens: sentence.ids.iter().map(|&id| vocab.token(id).to_string()).collect(),
            labels: labels.clone(),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let header = serde_json::json!({ "label_names": ds.label_names });
    std::fs::write(header_path_for(path), format!("{header}\n"))?;
    Ok(())
}

/// One shuffled mini-batch, padded to its own longest sentence.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Row-per-instance token ids, each padded with [`PAD_ID`] to `width`.
    pub token_ids: Vec<Vec<usize>>,
    /// Valid (unpadded) length of each row.
    pub lengths: Vec<usize>,
    pub labels: Vec<LabelVector>,
    pub width: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Per-position validity mask for row `i`.
    pub fn mask(&self, i: usize) -> Vec<bool> {
        (0..self.width).map(|t| t < self.lengths[i]).collect()
    }
}

/// Shuffle deterministically under `seed` and split into batches of
/// `batch_size` (the last batch may be short).
pub fn make_batches(ds: &Dataset, batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng_from(seed));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk
                .iter()
                .map(|&i| ds.examples[i].0.len())
                .max()
                .unwrap_or(0);
            let mut token_ids = Vec::with_capacity(chunk.len());
            let mut lengths = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (sentence, y) = &ds.examples[i];
                let mut row = sentence.ids.clone();
                row.resize(width, PAD_ID);
                token_ids.push(row);
                lengths.push(sentence.len());
                labels.push(y.clone());
            }
            Batch {
                token_ids,
                lengths,
                labels,
                width,
            }
        })
        .collect()
}

/// Deterministic k-fold split of `0..n`: returns `(train, test)` index pairs.
/// Fold sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!(
            "cannot split {n} examples into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok((0..k)
        .map(|fold| {
            let test = folds[fold].clone();
            let train = folds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fold)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            (train, test)
        })
        .collect())
}

/// k-fold split over a dataset's example indices.
pub fn kfold_split(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    kfold_indices(ds.len(), k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_dataset(n: usize, m: usize) -> Dataset {
        let examples = (0..n)
            .map(|i| {
                let ids = vec![RESERVED_IDS + (i % 3); 2 + i % 4];
                let mut labels = vec![0u8; m];
                labels[i % m] = 1;
                (Sentence { ids }, labels)
            })
            .collect();
        Dataset {
            examples,
            label_names: (0..m).map(|j| format!("l{j}")).collect(),
        }
    }

    #[test]
    fn vocabulary_reserved_ids_and_lookup() {
        let vocab = Vocabulary::from_tokens(["alpha".into(), "beta".into()]).unwrap();
        assert_eq!(vocab.word_count(), 2);
        assert_eq!(vocab.id_count(), 4);
        assert_eq!(vocab.lookup("alpha"), 2);
        assert_eq!(vocab.lookup("beta"), 3);
        assert_eq!(vocab.lookup("gamma"), OOV_ID);
        assert_eq!(vocab.token(PAD_ID), "<pad>");
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        let err = Vocabulary::from_tokens(["x".into(), "x".into()]).unwrap_err();
        assert!(err.to_string().contains("x"));
    }

    #[test]
    fn load_dataset_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("train.jsonl");
        std::fs::write(
            header_path_for(&corpus),
            r#"{"label_names": ["a","b","c","d","e","f","g","h"]}"#,
        )
        .unwrap();
        std::fs::write(
            &corpus,
            concat!(
                r#"{"tokens": ["hello", "world"], "labels": [1,0,0,0,0,0,0,0]}"#,
                "\n",
                r#"{"tokens": ["unknown"], "labels": [0,1,0,0,0,0,0,1]}"#,
                "\n"
            ),
        )
        .unwrap();
        let vocab = Vocabulary::from_tokens(["hello".into(), "world".into()]).unwrap();
        let ds = load_dataset(&corpus, &vocab, 90).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.label_count(), 8);
        assert_eq!(ds.examples[0].0.ids, vec![2, 3]);
        assert_eq!(ds.examples[1].0.ids, vec![OOV_ID]);

        // Wrong label arity names the record.
        std::fs::write(
            &corpus,
            r#"{"tokens": ["hello"], "labels": [1,0,0,0,0,0,0]}"#,
        )
        .unwrap();
        let err = load_dataset(&corpus, &vocab, 90).unwrap_err().to_string();
        assert!(err.contains("record 0"), "{err}");

        // Non-binary label.
        std::fs::write(
            &corpus,
            r#"{"tokens": ["hello"], "labels": [2,0,0,0,0,0,0,0]}"#,
        )
        .unwrap();
        assert!(load_dataset(&corpus, &vocab, 90).is_err());

        // Empty token list.
        std::fs::write(&corpus, r#"{"tokens": [], "labels": [1,0,0,0,0,0,0,0]}"#).unwrap();
        assert!(load_dataset(&corpus, &vocab, 90).is_err());
    }

    #[test]
    fn load_dataset_truncates_long_sentences() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("long.jsonl");
        std::fs::write(header_path_for(&corpus), r#"{"label_names": ["a"]}"#).unwrap();
        let tokens: Vec<String> = (0..95).map(|i| format!("\"t{i}\"")).collect();
        std::fs::write(
            &corpus,
            format!(r#"{{"tokens": [{}], "labels": [1]}}"#, tokens.join(",")),
        )
        .unwrap();
        let vocab = Vocabulary::from_tokens((0..95).map(|i| format!("t{i}"))).unwrap();
        let ds = load_dataset(&corpus, &vocab, 90).unwrap();
        assert_eq!(ds.examples[0].0.len(), 90);
    }

    #[test]
    fn batches_have_expected_sizes_and_padding() {
        let ds = tiny_dataset(10, 4);
        let batches = make_batches(&ds, 3, 7);
        let sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        for batch in &batches {
            for (row, &len) in batch.token_ids.iter().zip(&batch.lengths) {
                assert_eq!(row.len(), batch.width);
                assert!(row[..len].iter().all(|&id| id != PAD_ID));
                assert!(row[len..].iter().all(|&id| id == PAD_ID));
            }
        }
    }

    #[test]
    fn batch_shuffle_is_seed_deterministic() {
        let ds = tiny_dataset(30, 4);
        let a = make_batches(&ds, 4, 9);
        let b = make_batches(&ds, 4, 9);
        let c = make_batches(&ds, 4, 10);
        let flat = |bs: &[Batch]| -> Vec<Vec<usize>> {
            bs.iter().flat_map(|b| b.token_ids.clone()).collect()
        };
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c));
    }

    #[test]
    fn kfold_singletons_and_large_n() {
        let folds = kfold_indices(10, 10, 1).unwrap();
        assert!(folds.iter().all(|(_, test)| test.len() == 1));

        let folds = kfold_indices(35096, 10, 1).unwrap();
        for (_, test) in &folds {
            assert!(test.len() == 3509 || test.len() == 3510, "{}", test.len());
        }
        let total: usize = folds.iter().map(|(_, t)| t.len()).sum();
        assert_eq!(total, 35096);
    }

    #[test]
    fn kfold_rejects_small_n() {
        assert!(kfold_indices(5, 10, 0).is_err());
        assert!(kfold_indices(10, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn kfold_folds_partition_the_index_set(n in 2usize..400, k in 2usize..12, seed in 0u64..100) {
            prop_assume!(n >= k);
            let folds = kfold_indices(n, k, seed).unwrap();
            let mut seen = vec![false; n];
            for (train, test) in &folds {
                prop_assert_eq!(train.len() + test.len(), n);
                for &i in test {
                    prop_assert!(!seen[i], "index {} in two test folds", i);
                    seen[i] = true;
                }
                let mut both = test.clone();
                both.extend_from_slice(train);
                both.sort_unstable();
                both.dedup();
                prop_assert_eq!(both.len(), n);
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }
}
