//! Synthetic corpus generation with planted label signals.
//!
//! Label vectors are drawn from an exactly enumerated pairwise-interaction
//! distribution over subsets (empty and full sets excluded), so correlated
//! labels co-occur the way the relation matrix says they should. Each label
//! owns a disjoint set of signal tokens; a sentence mixes signal tokens of
//! its active labels with shared noise tokens.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EmbeddingTable, LabelVector, Sentence, Vocabulary, RESERVED_IDS};
use crate::error::{Error, Result};
use crate::loss::{angles_for_labels, default_emotion_angles, plutchik_weights};
use crate::numerics::Matrix;
use crate::seeding::{derive_seed, rng_from};

/// Subset enumeration is exponential in the label count.
const MAX_LABELS: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub label_names: Vec<String>,
    pub n_examples: usize,
    /// Total real tokens, signal plus noise.
    pub vocab_size: usize,
    /// Inclusive sentence length range.
    pub sentence_len: (usize, usize),
    pub signal_tokens_per_label: usize,
    /// Probability that a sentence position carries a signal token of one of
    /// the active labels rather than a noise token.
    pub signal_prob: f64,
    pub embedding_dim: usize,
    /// Pairwise interaction weights between labels. When absent, the wheel
    /// relations of the default emotion angles are used, which requires the
    /// label names to be the eight default emotions.
    pub relation: Option<Vec<Vec<f64>>>,
    /// Per-label bias in the subset distribution; more negative means
    /// sparser label sets.
    pub label_bias: f64,
    /// Scale applied to `relation` in the subset distribution.
    pub pair_strength: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            // Wheel order, so neighbors in this list are correlated.
            label_names: ["joy", "love", "anxiety", "surprise", "sorrow", "hate", "anger", "expect"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            n_examples: 2000,
            vocab_size: 300,
            sentence_len: (8, 16),
            signal_tokens_per_label: 4,
            signal_prob: 0.8,
            embedding_dim: 50,
            relation: None,
            label_bias: -0.7,
            pair_strength: 1.5,
        }
    }
}

impl SynthSpec {
    pub fn label_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.label_count();
        if !(2..=MAX_LABELS).contains(&m) {
            return Err(Error::Config(format!(
                "synthetic spec needs 2..={MAX_LABELS} labels, got {m}"
            )));
        }
        if self.n_examples == 0 {
            return Err(Error::Config("n_examples must be >= 1".into()));
        }
        if self.signal_tokens_per_label == 0 {
            return Err(Error::Config("signal_tokens_per_label must be >= 1".into()));
        }
        if m * self.signal_tokens_per_label > self.vocab_size {
            return Err(Error::Config(format!(
                "signal tokens exceed vocab: {m} labels x {} > {}",
                self.signal_tokens_per_label, self.vocab_size
            )));
        }
        let (lo, hi) = self.sentence_len;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "sentence_len range ({lo}, {hi}) is invalid"
            )));
        }
        if !(0.0..=1.0).contains(&self.signal_prob) {
            return Err(Error::Config("signal_prob must be in [0, 1]".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be >= 1".into()));
        }
        if let Some(rel) = &self.relation {
            if rel.len() != m || rel.iter().any(|row| row.len() != m) {
                return Err(Error::Config(format!("relation must be {m}x{m}")));
            }
            if rel.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Config("relation entries must be finite".into()));
            }
        }
        Ok(())
    }

    /// The interaction matrix actually used: explicit `relation`, or the
    /// wheel relations of the default emotion placement.
    pub fn interaction(&self) -> Result<Vec<Vec<f64>>> {
        if let Some(rel) = &self.relation {
            return Ok(rel.clone());
        }
        let angles = angles_for_labels(&default_emotion_angles(), &self.label_names)
            .map_err(|_| {
                Error::Config(
                    "no default relations for these label names; set `relation` explicitly"
                        .into(),
                )
            })?;
        let rel = plutchik_weights(&angles)?;
        let m = self.label_count();
        Ok((0..m)
            .map(|s| (0..m).map(|t| rel.get(s, t)).collect())
            .collect())
    }
}

/// Unnormalized subset weights indexed by bitmask; empty and full sets get 0.
fn subset_weights(spec: &SynthSpec) -> Result<Vec<f64>> {
    let m = spec.label_count();
    let rel = spec.interaction()?;
    let full = (1usize << m) - 1;
    let mut weights = vec![0.0; 1 << m];
    for (mask, w) in weights.iter_mut().enumerate() {
        if mask == 0 || mask == full {
            continue;
        }
        let k = mask.count_ones() as f64;
        let mut energy = spec.label_bias * k;
        for s in 0..m {
            if mask & (1 << s) == 0 {
                continue;
            }
            for t in (s + 1)..m {
                if mask & (1 << t) != 0 {
                    energy += spec.pair_strength * rel[s][t];
                }
            }
        }
        *w = energy.exp();
    }
    Ok(weights)
}

/// Exact label co-occurrence probabilities of the generator's subset
/// distribution: entry (s, t) is P(y_s = 1 and y_t = 1); the diagonal holds
/// the per-label marginals.
pub fn pair_marginals(spec: &SynthSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let m = spec.label_count();
    let weights = subset_weights(spec)?;
    let total: f64 = weights.iter().sum();
    let mut pair = vec![vec![0.0; m]; m];
    for (mask, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let p = w / total;
        for s in 0..m {
            if mask & (1 << s) == 0 {
                continue;
            }
            for t in 0..m {
                if mask & (1 << t) != 0 {
                    pair[s][t] += p;
                }
            }
        }
    }
    Ok(pair)
}

fn signal_token_name(label: &str, k: usize) -> String {
    format!("{label}_cue{k}")
}

/// Generate a corpus, its random embedding table, and the vocabulary.
/// Deterministic under `seed`.
pub fn generate_synthetic(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(Dataset, EmbeddingTable, Vocabulary)> {
    spec.validate()?;
    let m = spec.label_count();
    let spt = spec.signal_tokens_per_label;
    let noise_count = spec.vocab_size - m * spt;

    let mut tokens = Vec::with_capacity(spec.vocab_size);
    for label in &spec.label_names {
        for k in 0..spt {
            tokens.push(signal_token_name(label, k));
        }
    }
    for k in 0..noise_count {
        tokens.push(format!("filler{k}"));
    }
    let vocab = Vocabulary::from_tokens(tokens)?;

    // Unit-norm random embeddings for real tokens; reserved rows stay zero.
    let mut emb_rng = rng_from(derive_seed(seed, 1));
    let dim = spec.embedding_dim;
    let mut matrix = Matrix::zeros(vocab.id_count(), dim);
    for id in RESERVED_IDS..vocab.id_count() {
        let row = matrix.row_mut(id);
        loop {
            for v in row.iter_mut() {
                *v = emb_rng.gen_range(-1.0..1.0);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
                break;
            }
        }
    }
    let table = EmbeddingTable::new(matrix)?;

    // Cumulative subset distribution for inverse-CDF sampling.
    let weights = subset_weights(spec)?;
    let total: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cumulative.push(acc);
    }

    let mut rng = rng_from(derive_seed(seed, 2));
    let signal_id = |label: usize, k: usize| RESERVED_IDS + label * spt + k;
    let noise_id = |k: usize| RESERVED_IDS + m * spt + k;
    let (lo, hi) = spec.sentence_len;
    let mut examples = Vec::with_capacity(spec.n_examples);
    for _ in 0..spec.n_examples {
        let u: f64 = rng.gen();
        let mask = cumulative.partition_point(|&c| c <= u).min(weights.len() - 1);
        let labels: LabelVector = (0..m).map(|j| u8::from(mask & (1 << j) != 0)).collect();
        let active: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();

        let len = rng.gen_range(lo..=hi);
        let mut ids = Vec::with_capacity(len);
        for _ in 0..len {
            let want_signal = noise_count == 0 || rng.gen::<f64>() < spec.signal_prob;
            if want_signal {
                let label = active[rng.gen_range(0..active.len())];
                ids.push(signal_id(label, rng.gen_range(0..spt)));
            } else {
                ids.push(noise_id(rng.gen_range(0..noise_count)));
            }
        }
        examples.push((Sentence { ids }, labels));
    }

    Ok((
        Dataset {
            examples,
            label_names: spec.label_names.clone(),
        },
        table,
        vocab,
    ))
}
