//! The kernel-selection objective for a single layer.
//!
//! For every candidate kernel size `k` three raw terms are computed:
//! information gain `ln(1 + k)`, modeled accuracy gain `1 - exp(-gamma k)`
//! and the layer's MAC count at `k`. Each term is min-max normalized over
//! the candidate set and combined as
//! `lambda1 * I~ + lambda2 * A~ - lambda3 * C~`. The chosen kernel is the
//! argmax, with ties going to the smallest `k`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arch::{FeatureShape, LayerSpec};
use crate::cost;
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_CANDIDATES: [u32; 5] = [1, 3, 5, 7, 9];

/// Distinct odd kernel sizes, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct KernelCandidates(Vec<u32>);

impl KernelCandidates {
    /// Sorts `sizes`; rejects empty sets, duplicates and even or zero sizes.
    pub fn new(mut sizes: Vec<u32>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Domain("candidate set is empty".into()));
        }
        if let Some(bad) = sizes.iter().find(|&&k| k == 0 || k % 2 == 0) {
            return Err(Error::Domain(format!("candidate kernel sizes must be odd and >= 1, got {bad}")));
        }
        sizes.sort_unstable();
        if let Some(w) = sizes.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!("duplicate candidate kernel size {}", w[0])));
        }
        Ok(Self(sizes))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn smallest(&self) -> u32 {
        self.0[0]
    }

    pub fn largest(&self) -> u32 {
        self.0[self.0.len() - 1]
    }

    /// The next smaller candidate than `k`, if any.
    pub fn below(&self, k: u32) -> Option<u32> {
        self.0.iter().rev().copied().find(|&c| c < k)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for KernelCandidates {
    fn default() -> Self {
        Self(DEFAULT_CANDIDATES.to_vec())
    }
}

impl TryFrom<Vec<u32>> for KernelCandidates {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<KernelCandidates> for Vec<u32> {
    fn from(c: KernelCandidates) -> Self {
        c.0
    }
}

impl fmt::Display for KernelCandidates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Trade-off weights for information, accuracy and cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ObjectiveWeights {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
}

impl ObjectiveWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let all = [lambda1, lambda2, lambda3];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain(format!("weights must be finite and >= 0, got {lambda1},{lambda2},{lambda3}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Domain("at least one weight must be positive".into()));
        }
        Ok(Self { lambda1, lambda2, lambda3 })
    }

    pub fn balanced() -> Self {
        let third = 1.0 / 3.0;
        Self { lambda1: third, lambda2: third, lambda3: third }
    }

    pub fn information(&self) -> f64 {
        self.lambda1
    }

    pub fn accuracy(&self) -> f64 {
        self.lambda2
    }

    pub fn cost(&self) -> f64 {
        self.lambda3
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }

    pub fn combine(&self, norm_i: f64, norm_a: f64, norm_c: f64) -> f64 {
        self.lambda1 * norm_i + self.lambda2 * norm_a - self.lambda3 * norm_c
    }
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self::balanced()
    }
}

impl TryFrom<[f64; 3]> for ObjectiveWeights {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<ObjectiveWeights> for [f64; 3] {
    fn from(w: ObjectiveWeights) -> Self {
        w.as_array()
    }
}

/// Shape parameter of the saturating accuracy curve; always positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Gamma(f64);

impl Gamma {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(Self(gamma))
        } else {
            Err(Error::Domain(format!("gamma must be a positive finite number, got {gamma}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Gamma {
    fn default() -> Self {
        Self(DEFAULT_GAMMA)
    }
}

impl TryFrom<f64> for Gamma {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Gamma> for f64 {
    fn from(g: Gamma) -> Self {
        g.0
    }
}

/// `ln(1 + k)`.
pub fn info_gain(k: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("kernel size must be >= 1".into()));
    }
    Ok((1.0 + f64::from(k)).ln())
}

/// `1 - exp(-gamma * k)`.
pub fn accuracy_gain(k: u32, gamma: Gamma) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("kernel size must be >= 1".into()));
    }
    Ok(-(-gamma.value() * f64::from(k)).exp_m1())
}

/// `(x - min) / (max - min)` per element; a constant series maps to zeros.
pub fn min_max_normalize(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Domain("cannot normalize an empty series".into()));
    }
    if let Some(x) = series.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("cannot normalize non-finite value {x}")));
    }
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.0; series.len()]);
    }
    Ok(series.iter().map(|x| ((x - min) / range).clamp(0.0, 1.0)).collect())
}

/// Source of the raw accuracy term for a candidate kernel size.
pub trait AccuracyModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn gain(&self, k: u32) -> Result<f64>;
}

/// The saturating exponential `1 - exp(-gamma k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialAccuracy {
    pub gamma: Gamma,
}

impl AccuracyModel for ExponentialAccuracy {
    fn name(&self) -> &str {
        "exponential"
    }

    fn gain(&self, k: u32) -> Result<f64> {
        accuracy_gain(k, self.gamma)
    }
}

/// User-supplied per-kernel accuracy estimates, e.g. from a validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalAccuracy {
    pub table: BTreeMap<u32, f64>,
}

impl EmpiricalAccuracy {
    pub fn new(table: BTreeMap<u32, f64>) -> Result<Self> {
        if let Some((k, v)) = table.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!("accuracy estimate for k={k} is not finite: {v}")));
        }
        Ok(Self { table })
    }
}

impl AccuracyModel for EmpiricalAccuracy {
    fn name(&self) -> &str {
        "empirical"
    }

    fn gain(&self, k: u32) -> Result<f64> {
        self.table
            .get(&k)
            .copied()
            .ok_or_else(|| Error::Domain(format!("accuracy table has no entry for kernel size {k}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub k: u32,
    pub raw_i: f64,
    pub raw_a: f64,
    pub raw_c: f64,
    pub norm_i: f64,
    pub norm_a: f64,
    pub norm_c: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub layer_id: String,
    pub rows: Vec<ScoreRow>,
    pub chosen_k: u32,
}

impl ScoreTable {
    pub fn row(&self, k: u32) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn score_of(&self, k: u32) -> Option<f64> {
        self.row(k).map(|r| r.score)
    }
}

/// Score precomputed raw columns. `kernels` must be ascending and each
/// column must have one entry per kernel.
pub fn score_columns(
    layer_id: &str,
    kernels: &[u32],
    raw_i: &[f64],
    raw_a: &[f64],
    raw_c: &[f64],
    weights: ObjectiveWeights,
) -> Result<ScoreTable> {
    let n = kernels.len();
    if n == 0 || raw_i.len() != n || raw_a.len() != n || raw_c.len() != n {
        return Err(Error::Domain("score columns must be non-empty and of equal length".into()));
    }
    let norm_i = min_max_normalize(raw_i)?;
    let norm_a = min_max_normalize(raw_a)?;
    let norm_c = min_max_normalize(raw_c)?;
    let rows: Vec<ScoreRow> = (0..n)
        .map(|j| ScoreRow {
            k: kernels[j],
            raw_i: raw_i[j],
            raw_a: raw_a[j],
            raw_c: raw_c[j],
            norm_i: norm_i[j],
            norm_a: norm_a[j],
            norm_c: norm_c[j],
            score: weights.combine(norm_i[j], norm_a[j], norm_c[j]),
        })
        .collect();
    let mut table = ScoreTable { layer_id: layer_id.to_string(), rows, chosen_k: 0 };
    table.chosen_k = select_kernel(&table);
    Ok(table)
}

/// Scores every candidate for `layer` with the exponential accuracy model.
pub fn score_candidates(
    layer: &LayerSpec,
    input: FeatureShape,
    candidates: &KernelCandidates,
    weights: ObjectiveWeights,
    gamma: Gamma,
) -> Result<ScoreTable> {
    score_candidates_with(layer, input, candidates, weights, &ExponentialAccuracy { gamma })
}

pub fn score_candidates_with(
    layer: &LayerSpec,
    input: FeatureShape,
    candidates: &KernelCandidates,
    weights: ObjectiveWeights,
    accuracy: &dyn AccuracyModel,
) -> Result<ScoreTable> {
    if !layer.kind.is_tunable() {
        return Err(Error::Layer {
            layer_id: layer.id.clone(),
            message: format!("{} layers have no tunable kernel", layer.kind),
        });
    }
    let ks = candidates.as_slice();
    let raw_i = ks.iter().map(|&k| info_gain(k)).collect::<Result<Vec<_>>>()?;
    let raw_a = ks.iter().map(|&k| accuracy.gain(k)).collect::<Result<Vec<_>>>()?;
    let raw_c = ks
        .iter()
        .map(|&k| cost::layer_macs(&layer.with_kernel(k), input).map(|m| m as f64))
        .collect::<Result<Vec<_>>>()?;
    score_columns(&layer.id, ks, &raw_i, &raw_a, &raw_c, weights)
}

/// Kernel with the highest score; the smallest such kernel on ties.
pub fn select_kernel(table: &ScoreTable) -> u32 {
    let mut best: Option<&ScoreRow> = None;
    for row in &table.rows {
        best = match best {
            None => Some(row),
            Some(b) if row.score > b.score || (row.score == b.score && row.k < b.k) => Some(row),
            keep => keep,
        };
    }
    best.expect("score table has at least one row").k
}
