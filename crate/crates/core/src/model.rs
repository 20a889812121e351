//! One-hidden-layer ReLU classifier with an explicit backward pass.
//!
//! The network is deliberately small: policies interact with it only
//! through unreduced per-sample cross-entropy losses and a weighted
//! backward pass, which is all this module has to get exactly right.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::{Error, Result};

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_HIDDEN: usize = 32;

/// Flat parameter (or gradient) storage. Matrices are row-major with shape
/// `w1: hidden x input` and `w2: classes x hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Params {
    pub const NAMES: [&'static str; 4] = ["w1", "b1", "w2", "b2"];

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; classes * hidden],
            b2: vec![0.0; classes],
        }
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.slices().into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub params: Params,
}

/// Activations kept from [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    inputs: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    classes: usize,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn probs_row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        (0..self.batch).map(|i| self.probs_row(i).to_vec()).collect()
    }
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases likewise.
    pub fn new(input: usize, hidden: usize, classes: usize, stream: &RngStream) -> Self {
        let mut rng = stream.rng();
        let mut fill = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let params = Params {
            w1: fill(hidden * input, input),
            b1: fill(hidden, input),
            w2: fill(classes * hidden, hidden),
            b2: fill(classes, hidden),
        };
        Self { input, hidden, classes, params }
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self { input, hidden, classes, params: Params::zeros(input, hidden, classes) }
    }

    pub fn forward<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<ForwardCache> {
        let (l, h, c) = (self.input, self.hidden, self.classes);
        let b = batch.len();
        let mut inputs = Vec::with_capacity(b * l);
        for (i, x) in batch.iter().enumerate() {
            let x = x.as_ref();
            if x.len() != l {
                return Err(Error::shape(format!("sample {i} has length {}, model expects {l}", x.len())));
            }
            inputs.extend_from_slice(x);
        }
        let p = &self.params;
        let mut pre_hidden = vec![0.0; b * h];
        let mut hidden = vec![0.0; b * h];
        let mut probs = vec![0.0; b * c];
        for i in 0..b {
            let x = &inputs[i * l..(i + 1) * l];
            for k in 0..h {
                let row = &p.w1[k * l..(k + 1) * l];
                let z = p.b1[k] + dot(row, x);
                pre_hidden[i * h + k] = z;
                hidden[i * h + k] = z.max(0.0);
            }
            let hrow = &hidden[i * h..(i + 1) * h];
            let out = &mut probs[i * c..(i + 1) * c];
            for (j, o) in out.iter_mut().enumerate() {
                *o = p.b2[j] + dot(&p.w2[j * h..(j + 1) * h], hrow);
            }
            softmax_in_place(out);
        }
        Ok(ForwardCache { batch: b, inputs, pre_hidden, hidden, probs, classes: c })
    }

    /// Gradient of `Σ_i weights[i] · ℓ_i` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize], weights: &[f64]) -> Result<Params> {
        let (l, h, c) = (self.input, self.hidden, self.classes);
        let b = cache.batch;
        if labels.len() != b || weights.len() != b {
            return Err(Error::shape(format!(
                "batch of {b} with {} labels and {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if cache.classes != c || cache.inputs.len() != b * l || cache.hidden.len() != b * h {
            return Err(Error::shape("forward cache does not match model dimensions"));
        }
        let p = &self.params;
        let mut g = Params::zeros(l, h, c);
        let mut dz2 = vec![0.0; c];
        let mut dz1 = vec![0.0; h];
        for i in 0..b {
            let wi = weights[i];
            if wi == 0.0 {
                continue;
            }
            let label = labels[i];
            if label >= c {
                return Err(Error::domain(format!("label {label} out of range for {c} classes")));
            }
            let probs = cache.probs_row(i);
            for j in 0..c {
                let y = if j == label { 1.0 } else { 0.0 };
                dz2[j] = wi * (probs[j] - y);
            }
            let hrow = &cache.hidden[i * h..(i + 1) * h];
            for j in 0..c {
                axpy(dz2[j], hrow, &mut g.w2[j * h..(j + 1) * h]);
                g.b2[j] += dz2[j];
            }
            for k in 0..h {
                dz1[k] = if cache.pre_hidden[i * h + k] > 0.0 {
                    (0..c).map(|j| p.w2[j * h + k] * dz2[j]).sum()
                } else {
                    0.0
                };
            }
            let x = &cache.inputs[i * l..(i + 1) * l];
            for k in 0..h {
                axpy(dz1[k], x, &mut g.w1[k * l..(k + 1) * l]);
                g.b1[k] += dz1[k];
            }
        }
        Ok(g)
    }

    pub fn predict_proba<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(batch)?.probs())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_checkpoint(file, path)
    }

    /// Checkpoint layout: one JSON header line, then one line per array
    /// `name,v0,v1,...` in the order of the header.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            input: self.input,
            hidden: self.hidden,
            classes: self.classes,
            arrays: self.array_shapes(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        writeln!(out)?;
        for (name, values) in Params::NAMES.iter().zip(self.params.slices()) {
            write!(out, "{name}")?;
            for v in values {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let fmt_err = |line: usize, msg: String| Error::Format { path: path.to_path_buf(), line, msg };
        let mut lines = reader.lines();
        let header_line = lines.next().ok_or_else(|| fmt_err(1, "empty checkpoint".into()))??;
        let header: CheckpointHeader =
            serde_json::from_str(&header_line).map_err(|e| fmt_err(1, format!("bad header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(fmt_err(1, format!("unexpected format `{}`", header.format)));
        }
        let mut model = Mlp::zeros(header.input, header.hidden, header.classes);
        if header.arrays != model.array_shapes() {
            return Err(fmt_err(1, "array shapes inconsistent with layer sizes".into()));
        }
        for (k, slot) in model.params.slices_mut().into_iter().enumerate() {
            let lineno = k + 2;
            let line = lines.next().ok_or_else(|| fmt_err(lineno, "missing array".into()))??;
            let mut fields = line.split(',');
            let name = fields.next().unwrap_or_default();
            if name != Params::NAMES[k] {
                return Err(fmt_err(lineno, format!("expected array `{}`, found `{name}`", Params::NAMES[k])));
            }
            let values: Vec<f64> = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(lineno, format!("bad value: {e}")))?;
            if values.len() != slot.len() {
                return Err(fmt_err(lineno, format!("expected {} values, found {}", slot.len(), values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(fmt_err(lineno, "non-finite parameter".into()));
            }
            slot.copy_from_slice(&values);
        }
        Ok(model)
    }

    fn array_shapes(&self) -> Vec<ArrayShape> {
        let shape = |name: &str, dims: Vec<usize>| ArrayShape { name: name.to_string(), shape: dims };
        vec![
            shape("w1", vec![self.hidden, self.input]),
            shape("b1", vec![self.hidden]),
            shape("w2", vec![self.classes, self.hidden]),
            shape("b2", vec![self.classes]),
        ]
    }
}

const CHECKPOINT_FORMAT: &str = "adaptaug-mlp";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    input: usize,
    hidden: usize,
    classes: usize,
    arrays: Vec<ArrayShape>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct ArrayShape {
    name: String,
    shape: Vec<usize>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Unreduced cross-entropy `-ln(max(p[label], PROB_FLOOR))` per row.
pub fn per_sample_loss<P: AsRef<[f64]>>(probs: &[P], labels: &[usize]) -> Result<Vec<f64>> {
    if probs.len() != labels.len() {
        return Err(Error::shape(format!("{} rows but {} labels", probs.len(), labels.len())));
    }
    probs
        .iter()
        .zip(labels)
        .map(|(row, &label)| {
            let row = row.as_ref();
            let p = row
                .get(label)
                .ok_or_else(|| Error::domain(format!("label {label} out of range for {} classes", row.len())))?;
            Ok(-p.max(PROB_FLOOR).ln())
        })
        .collect()
}

/// Losses straight from a forward cache.
pub fn cache_losses(cache: &ForwardCache, labels: &[usize]) -> Result<Vec<f64>> {
    let rows: Vec<&[f64]> = (0..cache.batch_size()).map(|i| cache.probs_row(i)).collect();
    per_sample_loss(&rows, labels)
}

/// One RMSProp update on a flat slice:
/// `v <- ρ v + (1-ρ) g²`, `θ <- θ - lr g / (sqrt(v) + ε)`.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], v: &mut [f64], lr: f64, rho: f64, eps: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != v.len() {
        return Err(Error::shape(format!(
            "rmsprop: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            v.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("non-finite gradient at index {i}")));
    }
    for ((theta, g), vi) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
        *vi = rho * *vi + (1.0 - rho) * g * g;
        *theta -= lr * g / (vi.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { lr: 1e-3, rho: 0.9, eps: 1e-8 }
    }
}

/// RMSProp with running averages for a model's [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    state: Params,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, model: &Mlp) -> Self {
        Self { config, state: Params::zeros(model.input, model.hidden, model.classes) }
    }

    /// Update every parameter tensor. Nothing is modified if any gradient is
    /// non-finite.
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::numeric("non-finite model gradient; step aborted"));
        }
        let RmsPropConfig { lr, rho, eps } = self.config;
        for ((p, g), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.state.slices_mut())
        {
            rmsprop_step(p, g, v, lr, rho, eps)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform() {
        let m = Mlp::zeros(4, 3, 2);
        let c = m.forward(&[vec![1.0, -2.0, 0.5, 3.0], vec![0.0; 4]]).unwrap();
        for row in c.probs() {
            assert_eq!(row, vec![0.5, 0.5]);
        }
        let empty: Vec<Vec<f64>> = vec![];
        assert_eq!(m.forward(&empty).unwrap().batch_size(), 0);
    }

    #[test]
    fn forward_rows_are_stochastic() {
        let m = Mlp::new(8, 5, 3, &RngStream::new(3));
        let mut rng = RngStream::new(4).rng();
        let batch: Vec<Vec<f64>> = (0..10).map(|_| (0..8).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        for row in m.forward(&batch).unwrap().probs() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(matches!(m.forward(&[vec![0.0; 7]]), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_examples() {
        let l = per_sample_loss(&[vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]], &[1, 0, 1]).unwrap();
        assert_eq!(l[0], 0.0);
        assert!((l[1] - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(l[2] <= -PROB_FLOOR.ln() && l[2].is_finite());
        assert!(matches!(per_sample_loss(&[vec![0.5, 0.5]], &[2]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let m = Mlp::new(6, 4, 3, &RngStream::new(1));
        let x = vec![vec![0.3; 6], vec![-1.0; 6]];
        let c = m.forward(&x).unwrap();
        let g = m.backward(&c, &[0, 2], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rmsprop_hand_example() {
        let mut theta = [0.0];
        let mut v = [0.0];
        rmsprop_step(&mut theta, &[1.0], &mut v, 0.001, 0.9, 1e-8).unwrap();
        assert!((v[0] - 0.1).abs() < 1e-16);
        assert!((theta[0] - (-0.001 / (0.1f64.sqrt() + 1e-8))).abs() < 1e-18);
        assert!((theta[0] + 0.0031623).abs() < 1e-7);
    }

    #[test]
    fn rmsprop_zero_grad_and_nan() {
        let mut theta = [1.0, 2.0];
        let mut v = [0.0, 0.0];
        rmsprop_step(&mut theta, &[0.0, 0.0], &mut v, 0.1, 0.9, 1e-8).unwrap();
        assert_eq!(theta, [1.0, 2.0]);
        let err = rmsprop_step(&mut theta, &[f64::NAN, 0.0], &mut v, 0.1, 0.9, 1e-8);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(theta, [1.0, 2.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Mlp::new(5, 3, 2, &RngStream::new(9));
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        let back = Mlp::read_checkpoint(std::io::Cursor::new(&buf), Path::new("mem")).unwrap();
        assert_eq!(back, m);
        let text = String::from_utf8(buf).unwrap();
        let broken = text.replacen("b1,", "bx,", 1);
        assert!(matches!(
            Mlp::read_checkpoint(std::io::Cursor::new(broken), Path::new("mem")),
            Err(Error::Format { line: 3, .. })
        ));
    }
}
