//! Augmentation policies.
//!
//! All three policies see the model only through per-sample cross-entropy
//! losses. W-Augment and α-trimmed Augment expand every sample into its
//! `N+1` augmented versions (index 0 is the untouched original) and reduce
//! the resulting `B x (N+1)` [`LossMatrix`] to a scalar; RandAugment picks a
//! single transform for the whole mini-batch.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::transforms::{Magnitude, TransformId, TransformSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    None,
    WAugment,
    AlphaTrimmed,
    RandAugment,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::None,
        PolicyKind::WAugment,
        PolicyKind::AlphaTrimmed,
        PolicyKind::RandAugment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::None => "none",
            PolicyKind::WAugment => "waugment",
            PolicyKind::AlphaTrimmed => "alpha_trimmed",
            PolicyKind::RandAugment => "randaugment",
        }
    }

    /// Whether each sample is expanded into all `N+1` versions.
    pub fn expands(self) -> bool {
        matches!(self, PolicyKind::WAugment | PolicyKind::AlphaTrimmed)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "none" | "baseline" => Ok(PolicyKind::None),
            "waugment" | "w_augment" | "weighted" => Ok(PolicyKind::WAugment),
            "alpha_trimmed" | "alpha" | "alphatrimmed" | "trimmed" => Ok(PolicyKind::AlphaTrimmed),
            "randaugment" | "rand_augment" | "random" => Ok(PolicyKind::RandAugment),
            other => Err(Error::domain(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Resolved transforms; `transforms[0]` is Identity.
    pub transforms: Vec<TransformSpec>,
    /// Magnitude the transforms were resolved at (bookkeeping only).
    pub magnitude: Magnitude,
    /// Trim depth for [`PolicyKind::AlphaTrimmed`].
    pub alpha: usize,
    /// Seed for augmentation draws and RandAugment picks.
    pub seed: u64,
    /// Keep the W-Augment weights at their initial value.
    #[serde(default)]
    pub freeze_weights: bool,
}

impl PolicyConfig {
    pub fn none(seed: u64) -> Self {
        Self {
            kind: PolicyKind::None,
            transforms: vec![TransformSpec::Identity],
            magnitude: Magnitude::Fixed,
            alpha: 0,
            seed,
            freeze_weights: false,
        }
    }

    pub fn new(kind: PolicyKind, transforms: Vec<TransformSpec>, magnitude: Magnitude, seed: u64) -> Self {
        Self { kind, transforms, magnitude, alpha: 0, seed, freeze_weights: false }
    }

    pub fn with_alpha(mut self, alpha: usize) -> Self {
        self.alpha = alpha;
        self
    }

    /// Number of augmentations `N` (excluding the original).
    pub fn n_augmentations(&self) -> usize {
        self.transforms.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.first().map(TransformSpec::id) != Some(TransformId::Identity) {
            return Err(Error::domain("transforms[0] must be identity"));
        }
        for t in &self.transforms {
            t.validate()?;
        }
        if self.kind == PolicyKind::AlphaTrimmed && 2 * self.alpha >= self.transforms.len() {
            return Err(Error::domain(format!(
                "alpha={} trims every one of the {} versions (need 2*alpha < N+1)",
                self.alpha,
                self.transforms.len()
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Trainable logits `ω` over the `N+1` augmented versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub logits: Vec<f64>,
}

impl WeightVector {
    /// Every logit set to `1/(N+1)`; the softmax is therefore uniform.
    pub fn uniform(n_versions: usize) -> Self {
        Self { logits: vec![1.0 / n_versions as f64; n_versions] }
    }

    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() || logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::numeric("weight logits must be finite and nonempty"));
        }
        Ok(Self { logits })
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn softmax(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

/// Per-sample, per-version losses in sample-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LossMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "loss matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if cols == 0 {
            return Err(Error::shape("loss matrix needs at least one column"));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::numeric(format!("loss entry {v} is not a finite non-negative value")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged loss rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

fn check_width(losses: &LossMatrix, omega: &WeightVector) -> Result<()> {
    if losses.cols() != omega.len() {
        return Err(Error::shape(format!(
            "loss matrix has {} columns but weight vector has {} entries",
            losses.cols(),
            omega.len()
        )));
    }
    if losses.rows() == 0 {
        return Err(Error::shape("empty loss matrix"));
    }
    Ok(())
}

/// `(1/B) Σ_i Σ_j ℓ[i][j] · softmax(ω)[j]`.
pub fn w_augment_loss(losses: &LossMatrix, omega: &WeightVector) -> Result<f64> {
    check_width(losses, omega)?;
    let w = omega.softmax();
    let total: f64 = (0..losses.rows())
        .map(|i| losses.row(i).iter().zip(&w).map(|(l, s)| l * s).sum::<f64>())
        .sum();
    Ok(total / losses.rows() as f64)
}

/// Gradient of [`w_augment_loss`] with respect to the logits:
/// `∂L/∂ω_j = (1/B) Σ_i σ_j (ℓ[i][j] - Σ_m σ_m ℓ[i][m])`.
pub fn w_augment_grad_omega(losses: &LossMatrix, omega: &WeightVector) -> Result<Vec<f64>> {
    check_width(losses, omega)?;
    let w = omega.softmax();
    let b = losses.rows() as f64;
    let mut grad = vec![0.0; w.len()];
    for i in 0..losses.rows() {
        let row = losses.row(i);
        let weighted: f64 = row.iter().zip(&w).map(|(l, s)| l * s).sum();
        for (g, (l, s)) in grad.iter_mut().zip(row.iter().zip(&w)) {
            *g += s * (l - weighted);
        }
    }
    grad.iter_mut().for_each(|g| *g /= b);
    Ok(grad)
}

/// `∂L/∂ℓ[i][j] = σ_j / B`, laid out like the loss matrix.
pub fn w_augment_entry_weights(losses: &LossMatrix, omega: &WeightVector) -> Result<Vec<f64>> {
    check_width(losses, omega)?;
    let w = omega.softmax();
    let b = losses.rows() as f64;
    Ok((0..losses.rows()).flat_map(|_| w.iter().map(move |s| s / b)).collect())
}

/// Indices kept after trimming the `alpha` lowest and `alpha` highest losses.
///
/// Ranking is a stable sort on `(loss, index)`: among tied losses the lowest
/// indices are trimmed from the bottom and the highest from the top. The
/// returned indices are in ascending order.
pub fn alpha_trim_select(losses: &[f64], alpha: usize) -> Result<Vec<usize>> {
    if 2 * alpha >= losses.len() {
        return Err(Error::domain(format!(
            "alpha={alpha} leaves nothing of {} losses (need 2*alpha < N+1)",
            losses.len()
        )));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut kept = order[alpha..losses.len() - alpha].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Per-row selections of [`alpha_trim_select`].
pub fn alpha_trim_selections(losses: &LossMatrix, alpha: usize) -> Result<Vec<Vec<usize>>> {
    (0..losses.rows()).map(|i| alpha_trim_select(losses.row(i), alpha)).collect()
}

/// Mean over every retained entry.
pub fn alpha_trim_loss(losses: &LossMatrix, alpha: usize) -> Result<f64> {
    if losses.rows() == 0 {
        return Err(Error::shape("empty loss matrix"));
    }
    let selections = alpha_trim_selections(losses, alpha)?;
    let count: usize = selections.iter().map(Vec::len).sum();
    let total: f64 = selections
        .iter()
        .enumerate()
        .map(|(i, sel)| sel.iter().map(|&j| losses.row(i)[j]).sum::<f64>())
        .sum();
    Ok(total / count as f64)
}

/// Entry weights (`1/retained` on kept entries, zero elsewhere) and the
/// per-row selections behind them.
pub fn alpha_trim_entry_weights(losses: &LossMatrix, alpha: usize) -> Result<(Vec<f64>, Vec<Vec<usize>>)> {
    if losses.rows() == 0 {
        return Err(Error::shape("empty loss matrix"));
    }
    let selections = alpha_trim_selections(losses, alpha)?;
    let count: usize = selections.iter().map(Vec::len).sum();
    let w = 1.0 / count as f64;
    let mut weights = vec![0.0; losses.rows() * losses.cols()];
    for (i, sel) in selections.iter().enumerate() {
        for &j in sel {
            weights[i * losses.cols() + j] = w;
        }
    }
    Ok((weights, selections))
}

/// Uniform choice of one transform out of `k`.
pub fn rand_augment_pick(k: usize, stream: &RngStream) -> Result<usize> {
    if k == 0 {
        return Err(Error::domain("RandAugment needs at least one transform"));
    }
    Ok(stream.rng().random_range(0..k))
}
