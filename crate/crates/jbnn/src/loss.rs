//! Joint binary cross entropy, the label-relation penalty, and construction
//! of the pairwise relation matrix from emotion-wheel angles.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardTrace, ModelParams};

/// Floor for log arguments so a saturated head cannot produce -inf.
pub const LOG_CLAMP: f64 = 1e-12;

/// Weights of the two loss penalties.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the label-relation penalty.
    pub lambda1: f64,
    /// Weight of the L2 penalty on weight matrices and vectors (biases and
    /// the embedding table are exempt).
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 1e-3,
            lambda2: 1e-4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config("lambda1 and lambda2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Symmetric pairwise label-relation weights with zero diagonal.
/// Every entry is one of -1, -0.5, 0, 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMatrix {
    m: usize,
    w: Vec<f64>,
}

const ALLOWED_WEIGHTS: [f64; 4] = [-1.0, -0.5, 0.0, 0.5];

impl RelationMatrix {
    /// All-zero relations; the penalty vanishes identically.
    pub fn zeros(m: usize) -> Self {
        RelationMatrix { m, w: vec![0.0; m * m] }
    }

    /// Validate and wrap an explicit matrix.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let mut w = vec![0.0; m * m];
        for (s, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Config(format!(
                    "relation matrix row {s} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (t, &v) in row.iter().enumerate() {
                if s == t && v != 0.0 {
                    return Err(Error::Config(format!(
                        "relation matrix diagonal entry ({s},{s}) must be 0, got {v}"
                    )));
                }
                if !ALLOWED_WEIGHTS.contains(&v) {
                    return Err(Error::Config(format!(
                        "relation weight ({s},{t}) = {v}; allowed values are -1, -0.5, 0, 0.5"
                    )));
                }
                w[s * m + t] = v;
            }
        }
        for s in 0..m {
            for t in 0..s {
                if w[s * m + t] != w[t * m + s] {
                    return Err(Error::Config(format!(
                        "relation matrix is not symmetric at ({s},{t})"
                    )));
                }
            }
        }
        Ok(RelationMatrix { m, w })
    }

    pub fn label_count(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.w[s * self.m + t]
    }

    /// Apply the same permutation to rows and columns (relabeling).
    pub fn permuted(&self, perm: &[usize]) -> RelationMatrix {
        let m = self.m;
        let mut w = vec![0.0; m * m];
        for s in 0..m {
            for t in 0..m {
                w[s * m + t] = self.get(perm[s], perm[t]);
            }
        }
        RelationMatrix { m, w }
    }
}

/// Derive the relation matrix from wheel angles, one angle per label.
///
/// Angles must be distinct multiples of 45 degrees in [0, 360). The weight
/// for a pair is keyed on the angular distance between the two labels:
/// 45 -> 0.5, 90 -> 0, 135 -> -0.5, 180 -> -1.
pub fn plutchik_weights(label_angles: &[f64]) -> Result<RelationMatrix> {
    let m = label_angles.len();
    let mut degrees = Vec::with_capacity(m);
    for (i, &a) in label_angles.iter().enumerate() {
        if !a.is_finite() || a.fract() != 0.0 || !(0.0..360.0).contains(&a) {
            return Err(Error::Config(format!(
                "angle for label {i} must be an integer degree in [0, 360), got {a}"
            )));
        }
        let deg = a as i64;
        if deg % 45 != 0 {
            return Err(Error::Config(format!(
                "angle for label {i} must be a multiple of 45, got {deg}"
            )));
        }
        if degrees.contains(&deg) {
            return Err(Error::Config(format!(
                "duplicate angle {deg} (labels may not share a wheel position)"
            )));
        }
        degrees.push(deg);
    }
    let mut rel = RelationMatrix::zeros(m);
    for s in 0..m {
        for t in 0..m {
            if s == t {
                continue;
            }
            let diff = (degrees[s] - degrees[t]).abs();
            let delta = diff.min(360 - diff);
            let w = match delta {
                45 => 0.5,
                90 => 0.0,
                135 => -0.5,
                180 => -1.0,
                _ => unreachable!("distinct multiples of 45 in [0,360)"),
            };
            rel.w[s * m + t] = w;
        }
    }
    Ok(rel)
}

/// The default placement of the eight blog-emotion labels on the wheel:
/// anxiety sits at fear, expect at anticipation, hate at disgust, love at
/// trust, and sorrow at sadness. This is shipped configuration, not ground
/// truth; override it with an angles file when the corpus calls for it.
pub fn default_emotion_angles() -> BTreeMap<String, f64> {
    [
        ("joy", 0.0),
        ("love", 45.0),
        ("anxiety", 90.0),
        ("surprise", 135.0),
        ("sorrow", 180.0),
        ("hate", 225.0),
        ("anger", 270.0),
        ("expect", 315.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Resolve a `{label: degrees}` map against an ordered label list.
pub fn angles_for_labels(
    angles: &BTreeMap<String, f64>,
    label_names: &[String],
) -> Result<Vec<f64>> {
    label_names
        .iter()
        .map(|name| {
            angles
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("no wheel angle for label '{name}'")))
        })
        .collect()
}

/// Load a `{label: degrees}` JSON file and build the relation matrix for the
/// given label order.
pub fn relation_from_angles_file(path: &Path, label_names: &[String]) -> Result<RelationMatrix> {
    let text = std::fs::read_to_string(path)?;
    let map: BTreeMap<String, f64> =
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    let angles = angles_for_labels(&map, label_names)?;
    plutchik_weights(&angles)
}

/// Load an explicit m-by-m relation matrix from CSV (one row per line).
pub fn relation_from_csv_file(path: &Path, m: usize) -> Result<RelationMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("not a number: '{}'", cell.trim()),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.len() != m {
        return Err(Error::Config(format!(
            "relation matrix has {} rows, expected {m}",
            rows.len()
        )));
    }
    RelationMatrix::from_dense(&rows)
}

/// Joint binary cross entropy: the sum of per-label BCE terms.
pub fn jbce(p: &[f64], y: &[u8]) -> f64 {
    debug_assert_eq!(p.len(), y.len());
    let mut loss = 0.0;
    for (&pj, &yj) in p.iter().zip(y) {
        let term = if yj == 1 {
            pj.max(LOG_CLAMP).ln()
        } else {
            (1.0 - pj).max(LOG_CLAMP).ln()
        };
        loss -= term;
    }
    loss
}

/// Relation penalty over unordered label pairs: sum over s < t of
/// `w[s,t] * (p_s - p_t)^2`. May be negative.
pub fn relation_penalty(p: &[f64], w: &RelationMatrix) -> f64 {
    debug_assert_eq!(p.len(), w.label_count());
    let m = p.len();
    let mut acc = 0.0;
    for s in 0..m {
        for t in (s + 1)..m {
            let d = p[s] - p[t];
            acc += w.get(s, t) * d * d;
        }
    }
    acc
}

/// Accumulate `scale * d(relation_penalty)/dp` into `out`.
pub fn add_relation_penalty_grad(p: &[f64], w: &RelationMatrix, scale: f64, out: &mut [f64]) {
    let m = p.len();
    debug_assert_eq!(out.len(), m);
    for s in 0..m {
        for t in (s + 1)..m {
            let g = 2.0 * w.get(s, t) * (p[s] - p[t]) * scale;
            out[s] += g;
            out[t] -= g;
        }
    }
}

/// Per-instance training loss: data term plus weighted relation penalty.
pub fn instance_loss(p: &[f64], y: &[u8], w: &RelationMatrix, cfg: &LossConfig) -> f64 {
    let mut loss = jbce(p, y);
    if cfg.lambda1 != 0.0 {
        loss += cfg.lambda1 * relation_penalty(p, w);
    }
    loss
}

/// Batch objective: mean over instances of `jbce + lambda1 * relation_penalty`,
/// plus `lambda2 * sum(weights^2)` over the L2-eligible parameter blocks.
pub fn total_loss(
    traces: &[ForwardTrace],
    labels: &[Vec<u8>],
    params: &ModelParams,
    w: &RelationMatrix,
    cfg: &LossConfig,
) -> f64 {
    assert_eq!(traces.len(), labels.len(), "total_loss: batch alignment");
    assert!(!traces.is_empty(), "total_loss: empty batch");
    let mut acc = 0.0;
    for (trace, y) in traces.iter().zip(labels) {
        acc += instance_loss(&trace.p, y, w, cfg);
    }
    acc / traces.len() as f64 + cfg.lambda2 * params.l2_sum()
}
