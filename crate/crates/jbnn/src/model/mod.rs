//! The joint binary network: embedding lookup, Bi-LSTM encoder, attention
//! pooling, and per-label logistic heads, with hand-derived gradients.
//!
//! One [`ModelParams`] value holds either a single shared network with m
//! heads (joint mode) or m independent single-head networks (binary
//! relevance); the forward/backward code is shared between the two.

mod backward;
mod checkpoint;
mod forward;
mod gradcheck;

pub use backward::{backward, Gradients};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{
    attention, forward, heads, lstm_cell, predict, AttentionTrace, CellTrace, ForwardTrace,
    NetTrace,
};
pub use gradcheck::{check_gradients, tiny_check_config, GradCheckSetup};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::seeding::rng_from;

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_OUTPUT: usize = 2;
pub const GATE_CANDIDATE: usize = 3;
pub const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "candidate"];

/// How logistic heads are wired to encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    /// One shared encoder feeding all m heads.
    Joint,
    /// m independent encoders, one head each.
    BinaryRelevance,
}

/// A complete training/evaluation configuration name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Jbnn,
    Brnn,
    JbnnNoBi,
    JbnnNoAtt,
    JbnnNoEmorel,
}

impl RunMode {
    pub const ALL: [RunMode; 5] = [
        RunMode::Jbnn,
        RunMode::Brnn,
        RunMode::JbnnNoBi,
        RunMode::JbnnNoAtt,
        RunMode::JbnnNoEmorel,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Jbnn => "jbnn",
            RunMode::Brnn => "brnn",
            RunMode::JbnnNoBi => "jbnn-no-bi",
            RunMode::JbnnNoAtt => "jbnn-no-att",
            RunMode::JbnnNoEmorel => "jbnn-no-emorel",
        }
    }

    /// The no-emorel run differs from jbnn only by forcing lambda1 to zero.
    pub fn forces_lambda1_zero(&self) -> bool {
        matches!(self, RunMode::JbnnNoEmorel)
    }

    /// Derive the architecture for this run mode from base dimensions.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        cfg.bidirectional = !matches!(self, RunMode::JbnnNoBi);
        cfg.use_attention = !matches!(self, RunMode::JbnnNoAtt);
        cfg.mode = if matches!(self, RunMode::Brnn) {
            HeadMode::BinaryRelevance
        } else {
            HeadMode::Joint
        };
        cfg
    }
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode '{s}'; expected one of jbnn, brnn, jbnn-no-bi, jbnn-no-att, jbnn-no-emorel"
                ))
            })
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Word embedding dimension d.
    pub embedding_dim: usize,
    /// Hidden size per LSTM direction.
    pub hidden: usize,
    /// Attention projection dimension.
    pub attention_dim: usize,
    /// Label count m.
    pub labels: usize,
    pub max_len: usize,
    pub bidirectional: bool,
    pub use_attention: bool,
    pub mode: HeadMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 200,
            hidden: 100,
            attention_dim: 200,
            labels: 8,
            max_len: 90,
            bidirectional: true,
            use_attention: true,
            mode: HeadMode::Joint,
        }
    }
}

impl ModelConfig {
    /// Convenience constructor; the attention dimension defaults to twice
    /// the hidden size.
    pub fn new(embedding_dim: usize, hidden: usize, labels: usize) -> Self {
        ModelConfig {
            embedding_dim,
            hidden,
            attention_dim: 2 * hidden,
            labels,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embedding_dim", self.embedding_dim),
            ("hidden", self.hidden),
            ("attention_dim", self.attention_dim),
            ("labels", self.labels),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Dimension of the per-position encoder output (and of v).
    pub fn encoder_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    pub fn net_count(&self) -> usize {
        match self.mode {
            HeadMode::Joint => 1,
            HeadMode::BinaryRelevance => self.labels,
        }
    }

    pub fn heads_per_net(&self) -> usize {
        match self.mode {
            HeadMode::Joint => self.labels,
            HeadMode::BinaryRelevance => 1,
        }
    }
}

/// Gate weights and biases for one scan direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmDirection {
    /// Per-gate weights, each `hidden x (embedding_dim + hidden)`, applied
    /// to the concatenation `[x_t; h_prev]`.
    pub w: [Matrix; 4],
    /// Per-gate biases, each `hidden`.
    pub b: [Vec<f64>; 4],
}

impl LstmDirection {
    fn zeros(hidden: usize, input_dim: usize) -> Self {
        LstmDirection {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim + hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Projection `attention_dim x encoder_dim`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// Learned global context vector scoring each projected position.
    pub u_ctx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `heads_per_net x encoder_dim`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// One encoder-plus-heads network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub fwd: LstmDirection,
    pub bwd: Option<LstmDirection>,
    pub attention: Option<AttentionParams>,
    pub heads: HeadParams,
}

impl NetParams {
    fn zeros(cfg: &ModelConfig) -> Self {
        let enc = cfg.encoder_dim();
        NetParams {
            fwd: LstmDirection::zeros(cfg.hidden, cfg.embedding_dim),
            bwd: cfg
                .bidirectional
                .then(|| LstmDirection::zeros(cfg.hidden, cfg.embedding_dim)),
            attention: cfg.use_attention.then(|| AttentionParams {
                w1: Matrix::zeros(cfg.attention_dim, enc),
                b1: vec![0.0; cfg.attention_dim],
                u_ctx: vec![0.0; cfg.attention_dim],
            }),
            heads: HeadParams {
                w: Matrix::zeros(cfg.heads_per_net(), enc),
                b: vec![0.0; cfg.heads_per_net()],
            },
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [f64], bool)) {
        for (g, name) in GATE_NAMES.iter().enumerate() {
            f(format!("{prefix}/fwd/w_{name}"), self.fwd.w[g].as_slice(), true);
            f(format!("{prefix}/fwd/b_{name}"), &self.fwd.b[g], false);
        }
        if let Some(bwd) = &self.bwd {
            for (g, name) in GATE_NAMES.iter().enumerate() {
                f(format!("{prefix}/bwd/w_{name}"), bwd.w[g].as_slice(), true);
                f(format!("{prefix}/bwd/b_{name}"), &bwd.b[g], false);
            }
        }
        if let Some(att) = &self.attention {
            f(format!("{prefix}/attn/w1"), att.w1.as_slice(), true);
            f(format!("{prefix}/attn/b1"), &att.b1, false);
            f(format!("{prefix}/attn/u_ctx"), &att.u_ctx, true);
        }
        f(format!("{prefix}/heads/w"), self.heads.w.as_slice(), true);
        f(format!("{prefix}/heads/b"), &self.heads.b, false);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut [f64], bool)) {
        for (g, name) in GATE_NAMES.iter().enumerate() {
            f(
                format!("{prefix}/fwd/w_{name}"),
                self.fwd.w[g].as_mut_slice(),
                true,
            );
        }
        for (g, name) in GATE_NAMES.iter().enumerate() {
            f(format!("{prefix}/fwd/b_{name}"), &mut self.fwd.b[g], false);
        }
        if let Some(bwd) = &mut self.bwd {
            for (g, name) in GATE_NAMES.iter().enumerate() {
                f(
                    format!("{prefix}/bwd/w_{name}"),
                    bwd.w[g].as_mut_slice(),
                    true,
                );
            }
            for (g, name) in GATE_NAMES.iter().enumerate() {
                f(format!("{prefix}/bwd/b_{name}"), &mut bwd.b[g], false);
            }
        }
        if let Some(att) = &mut self.attention {
            f(format!("{prefix}/attn/w1"), att.w1.as_mut_slice(), true);
            f(format!("{prefix}/attn/b1"), &mut att.b1, false);
            f(format!("{prefix}/attn/u_ctx"), &mut att.u_ctx, true);
        }
        f(format!("{prefix}/heads/w"), self.heads.w.as_mut_slice(), true);
        f(format!("{prefix}/heads/b"), &mut self.heads.b, false);
    }
}

/// A named view of one trainable parameter block.
pub struct BlockRef<'a> {
    pub name: String,
    pub data: &'a [f64],
    /// Whether the block participates in the L2 penalty.
    pub l2: bool,
}

pub struct BlockMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
    pub l2: bool,
}

/// All model parameters: the networks plus the embedding table copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub nets: Vec<NetParams>,
    /// Id-indexed embedding rows; row 0 pads and stays zero.
    pub embedding: Matrix,
    /// When false (the default) the embedding is frozen and excluded from
    /// the trainable blocks.
    pub train_embeddings: bool,
}

impl ModelParams {
    /// Ordered trainable blocks. The same order is used for gradients,
    /// optimizer state, and flattening.
    pub fn blocks(&self) -> Vec<BlockRef<'_>> {
        let mut out = Vec::new();
        for (i, net) in self.nets.iter().enumerate() {
            net.visit(&format!("net{i}"), &mut |name, data, l2| {
                out.push(BlockRef { name, data, l2 });
            });
        }
        if self.train_embeddings {
            out.push(BlockRef {
                name: "embedding".into(),
                data: self.embedding.as_slice(),
                l2: false,
            });
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut out = Vec::new();
        let train_embeddings = self.train_embeddings;
        for (i, net) in self.nets.iter_mut().enumerate() {
            net.visit_mut(&format!("net{i}"), &mut |name, data, l2| {
                out.push(BlockMut { name, data, l2 });
            });
        }
        if train_embeddings {
            out.push(BlockMut {
                name: "embedding".into(),
                data: self.embedding.as_mut_slice(),
                l2: false,
            });
        }
        out
    }

    /// Total trainable scalar count (embedding included only when trainable).
    pub fn trainable_len(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    /// Sum of squares over the L2-eligible blocks.
    pub fn l2_sum(&self) -> f64 {
        self.blocks()
            .iter()
            .filter(|b| b.l2)
            .map(|b| b.data.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_len());
        for block in self.blocks() {
            out.extend_from_slice(block.data);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.data.copy_from_slice(&flat[offset..offset + block.data.len()]);
            offset += block.data.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// `(block name, start offset)` pairs describing the flattened layout.
    pub fn block_layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for block in self.blocks() {
            out.push((block.name.clone(), offset));
            offset += block.data.len();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.data.iter().all(|v| v.is_finite()))
            && self.embedding.is_finite()
    }
}

/// Initialize all weights and biases i.i.d. uniform on [-0.01, 0.01] under
/// `seed`; the embedding rows are copied from `table` unchanged.
pub fn init_params(config: &ModelConfig, table: &EmbeddingTable, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    if table.dim() != config.embedding_dim {
        return Err(Error::Config(format!(
            "embedding dim {} does not match model embedding_dim {}",
            table.dim(),
            config.embedding_dim
        )));
    }
    let mut params = ModelParams {
        config: config.clone(),
        nets: (0..config.net_count()).map(|_| NetParams::zeros(config)).collect(),
        embedding: table.matrix().clone(),
        train_embeddings: table.trainable,
    };
    let mut rng = rng_from(seed);
    let train_embeddings = params.train_embeddings;
    // Temporarily exclude the embedding from the block walk so the uniform
    // init never touches it.
    params.train_embeddings = false;
    for block in params.blocks_mut() {
        for v in block.data.iter_mut() {
            *v = rng.gen_range(-0.01..0.01);
        }
    }
    params.train_embeddings = train_embeddings;
    Ok(params)
}

/// Closed-form trainable parameter count (embedding excluded).
pub fn count_params(config: &ModelConfig) -> usize {
    let d = config.embedding_dim;
    let h = config.hidden;
    let a = config.attention_dim;
    let enc = config.encoder_dim();
    let directions = if config.bidirectional { 2 } else { 1 };
    let lstm = directions * 4 * (h * (d + h) + h);
    let attention = if config.use_attention { a * enc + a + a } else { 0 };
    let heads = config.heads_per_net() * (enc + 1);
    config.net_count() * (lstm + attention + heads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_table(dim: usize) -> EmbeddingTable {
        let mut m = Matrix::zeros(5, dim);
        for r in 2..5 {
            for c in 0..dim {
                m.set(r, c, 0.1 * (r * dim + c) as f64);
            }
        }
        EmbeddingTable::new(m).unwrap()
    }

    #[test]
    fn init_values_lie_in_range_and_are_deterministic() {
        let cfg = ModelConfig::new(6, 4, 8);
        let table = unit_table(6);
        let a = init_params(&cfg, &table, 42).unwrap();
        let b = init_params(&cfg, &table, 42).unwrap();
        assert_eq!(a, b);
        for block in a.blocks() {
            for &v in block.data {
                assert!((-0.01..=0.01).contains(&v), "{} out of range: {v}", block.name);
            }
        }
        // Embedding rows come straight from the table.
        assert_eq!(a.embedding, *table.matrix());
        let c = init_params(&cfg, &table, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_sample_mean_is_near_zero() {
        // Enough parameters that the sample mean of U(-0.01, 0.01) draws
        // should sit within +-0.0005 of zero.
        let cfg = ModelConfig::new(40, 55, 8);
        assert!(count_params(&cfg) > 100_000);
        let table = unit_table(40);
        let params = init_params(&cfg, &table, 7).unwrap();
        let flat = params.flatten();
        let mean: f64 = flat.iter().sum::<f64>() / flat.len() as f64;
        assert!(mean.abs() < 5e-4, "mean {mean}");
    }

    #[test]
    fn count_params_reference_configuration() {
        let cfg = ModelConfig::default();
        assert_eq!(count_params(&cfg), 282_808);
    }

    #[test]
    fn count_params_minimal_configuration() {
        let cfg = ModelConfig {
            embedding_dim: 1,
            hidden: 1,
            attention_dim: 1,
            labels: 1,
            ..ModelConfig::default()
        };
        // 2*4*(1*2+1) + (1*2 + 1 + 1) + 1*(2+1) = 24 + 4 + 3
        assert_eq!(count_params(&cfg), 31);
    }

    #[test]
    fn joint_heads_are_cheaper_than_binary_relevance() {
        for m in 2..=8 {
            let joint = ModelConfig { labels: m, ..ModelConfig::default() };
            let br = ModelConfig {
                labels: m,
                mode: HeadMode::BinaryRelevance,
                ..ModelConfig::default()
            };
            assert!(count_params(&joint) < count_params(&br), "m={m}");
        }
    }

    #[test]
    fn dropping_the_second_direction_strictly_reduces_the_count() {
        let bi = ModelConfig::default();
        let uni = ModelConfig { bidirectional: false, ..ModelConfig::default() };
        assert!(count_params(&uni) < count_params(&bi));
    }

    #[test]
    fn trainable_len_matches_closed_form() {
        for mode in [HeadMode::Joint, HeadMode::BinaryRelevance] {
            for (bi, att) in [(true, true), (false, true), (true, false)] {
                let cfg = ModelConfig {
                    embedding_dim: 5,
                    hidden: 4,
                    attention_dim: 8,
                    labels: 8,
                    bidirectional: bi,
                    use_attention: att,
                    mode,
                    ..ModelConfig::default()
                };
                let table = unit_table(5);
                let params = init_params(&cfg, &table, 0).unwrap();
                assert_eq!(params.trainable_len(), count_params(&cfg));
            }
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let cfg = ModelConfig::new(5, 4, 3);
        let table = unit_table(5);
        let params = init_params(&cfg, &table, 9).unwrap();
        let flat = params.flatten();
        let mut other = init_params(&cfg, &table, 10).unwrap();
        other.set_from_flat(&flat);
        assert_eq!(other, params);
    }

    #[test]
    fn run_mode_parsing_and_config_derivation() {
        for mode in RunMode::ALL {
            let parsed: RunMode = mode.as_str().parse().unwrap();
            assert_eq!(parsed, mode);
        }
        assert!("jbnn-no-everything".parse::<RunMode>().is_err());

        let base = ModelConfig::default();
        assert!(!RunMode::JbnnNoBi.model_config(&base).bidirectional);
        assert!(!RunMode::JbnnNoAtt.model_config(&base).use_attention);
        assert_eq!(
            RunMode::Brnn.model_config(&base).mode,
            HeadMode::BinaryRelevance
        );
        assert!(RunMode::JbnnNoEmorel.forces_lambda1_zero());
        assert_eq!(RunMode::Jbnn.model_config(&base), base);
    }
}
