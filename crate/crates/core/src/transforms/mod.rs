//! Seeded, length-preserving time-series augmentations.
//!
//! Every transform maps a series of length `L` to a new series of the same
//! length with the label untouched. Operations whose raw output has another
//! length (slicing, window warping, magnifying, time warping) are resampled
//! back to `L` by linear interpolation on a uniform grid.

mod interp;
pub mod magnitude;

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::{Error, Result};

pub use interp::{resample_linear, sample_linear, uniform_knots, NaturalCubicSpline};
pub use magnitude::{
    interpolate_magnitude, resolve, resolve_list, Magnitude, MagnitudeRange, FINANCIAL_SET, UCR_SET,
};

/// Smallest value the time-warp speed curve may take.
pub const MIN_WARP_SPEED: f64 = 1e-3;

/// One univariate sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub label: usize,
}

impl TimeSeries {
    /// Checked constructor: at least two finite values.
    pub fn new(values: Vec<f64>, label: usize) -> Result<Self> {
        let ts = Self { values, label };
        ts.validate()?;
        Ok(ts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::domain(format!(
                "series length {} below minimum 2",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value at position {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformId {
    Identity,
    Magnify,
    Convolve,
    Pool,
    Jitter,
    Quantize,
    TimeWarp,
    MagnitudeWarp,
    WindowWarp,
    WindowSlice,
    Scaling,
    Reverse,
    Permutation,
    Dropout,
}

impl TransformId {
    pub const ALL: [TransformId; 14] = [
        TransformId::Identity,
        TransformId::Magnify,
        TransformId::Convolve,
        TransformId::Pool,
        TransformId::Jitter,
        TransformId::Quantize,
        TransformId::TimeWarp,
        TransformId::MagnitudeWarp,
        TransformId::WindowWarp,
        TransformId::WindowSlice,
        TransformId::Scaling,
        TransformId::Reverse,
        TransformId::Permutation,
        TransformId::Dropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformId::Identity => "identity",
            TransformId::Magnify => "magnify",
            TransformId::Convolve => "convolve",
            TransformId::Pool => "pool",
            TransformId::Jitter => "jitter",
            TransformId::Quantize => "quantize",
            TransformId::TimeWarp => "time_warp",
            TransformId::MagnitudeWarp => "magnitude_warp",
            TransformId::WindowWarp => "window_warp",
            TransformId::WindowSlice => "window_slice",
            TransformId::Scaling => "scaling",
            TransformId::Reverse => "reverse",
            TransformId::Permutation => "permutation",
            TransformId::Dropout => "dropout",
        }
    }
}

impl fmt::Display for TransformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        TransformId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == norm || id.name().replace('_', "") == norm)
            .ok_or_else(|| Error::domain(format!("unknown transform `{s}`")))
    }
}

/// A transform with fully resolved parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum TransformSpec {
    Identity,
    /// Zoom into `[t0, L)` with `t0` drawn uniformly from `t0_lo..=t0_hi`.
    Magnify { t0_lo: usize, t0_hi: usize },
    /// Normalized Hann smoothing kernel of `size` taps, reflected edges.
    Convolve { size: usize },
    Pool { size: usize },
    Jitter { sigma: f64 },
    Quantize { levels: usize },
    TimeWarp { knots: usize, sigma: f64 },
    MagnitudeWarp { knots: usize, sigma: f64 },
    WindowWarp { window_ratio: f64, scales: Vec<f64> },
    WindowSlice { ratio: f64 },
    Scaling { sigma: f64 },
    Reverse,
    Permutation { max_segments: usize },
    Dropout { p: f64 },
}

impl TransformSpec {
    pub fn id(&self) -> TransformId {
        match self {
            TransformSpec::Identity => TransformId::Identity,
            TransformSpec::Magnify { .. } => TransformId::Magnify,
            TransformSpec::Convolve { .. } => TransformId::Convolve,
            TransformSpec::Pool { .. } => TransformId::Pool,
            TransformSpec::Jitter { .. } => TransformId::Jitter,
            TransformSpec::Quantize { .. } => TransformId::Quantize,
            TransformSpec::TimeWarp { .. } => TransformId::TimeWarp,
            TransformSpec::MagnitudeWarp { .. } => TransformId::MagnitudeWarp,
            TransformSpec::WindowWarp { .. } => TransformId::WindowWarp,
            TransformSpec::WindowSlice { .. } => TransformId::WindowSlice,
            TransformSpec::Scaling { .. } => TransformId::Scaling,
            TransformSpec::Reverse => TransformId::Reverse,
            TransformSpec::Permutation { .. } => TransformId::Permutation,
            TransformSpec::Dropout { .. } => TransformId::Dropout,
        }
    }

    /// Resolved parameters as `(name, value)` pairs.
    pub fn params(&self) -> Vec<(String, f64)> {
        let p = |n: &str, v: f64| (n.to_string(), v);
        match self {
            TransformSpec::Identity | TransformSpec::Reverse => vec![],
            TransformSpec::Magnify { t0_lo, t0_hi } => {
                vec![p("t0_lo", *t0_lo as f64), p("t0_hi", *t0_hi as f64)]
            }
            TransformSpec::Convolve { size } | TransformSpec::Pool { size } => {
                vec![p("size", *size as f64)]
            }
            TransformSpec::Jitter { sigma } | TransformSpec::Scaling { sigma } => {
                vec![p("sigma", *sigma)]
            }
            TransformSpec::Quantize { levels } => vec![p("levels", *levels as f64)],
            TransformSpec::TimeWarp { knots, sigma } | TransformSpec::MagnitudeWarp { knots, sigma } => {
                vec![p("knots", *knots as f64), p("sigma", *sigma)]
            }
            TransformSpec::WindowWarp { window_ratio, scales } => {
                let mut v = vec![p("window_ratio", *window_ratio)];
                v.extend(scales.iter().enumerate().map(|(i, s)| (format!("scale{i}"), *s)));
                v
            }
            TransformSpec::WindowSlice { ratio } => vec![p("ratio", *ratio)],
            TransformSpec::Permutation { max_segments } => {
                vec![p("max_segments", *max_segments as f64)]
            }
            TransformSpec::Dropout { p: prob } => vec![p("p", *prob)],
        }
    }

    /// Build a spec from named parameters. Missing or out-of-range parameters
    /// are a [`Error::Domain`].
    pub fn from_params(id: TransformId, params: &[(String, f64)]) -> Result<Self> {
        let get = |name: &str| -> Result<f64> {
            params
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::domain(format!("{id}: missing parameter `{name}`")))
        };
        let count = |name: &str| -> Result<usize> {
            let v = get(name)?;
            if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::domain(format!("{id}: `{name}` must be a non-negative integer")));
            }
            Ok(v as usize)
        };
        let spec = match id {
            TransformId::Identity => TransformSpec::Identity,
            TransformId::Reverse => TransformSpec::Reverse,
            TransformId::Magnify => TransformSpec::Magnify { t0_lo: count("t0_lo")?, t0_hi: count("t0_hi")? },
            TransformId::Convolve => TransformSpec::Convolve { size: count("size")? },
            TransformId::Pool => TransformSpec::Pool { size: count("size")? },
            TransformId::Jitter => TransformSpec::Jitter { sigma: get("sigma")? },
            TransformId::Scaling => TransformSpec::Scaling { sigma: get("sigma")? },
            TransformId::Quantize => TransformSpec::Quantize { levels: count("levels")? },
            TransformId::TimeWarp => TransformSpec::TimeWarp { knots: count("knots")?, sigma: get("sigma")? },
            TransformId::MagnitudeWarp => {
                TransformSpec::MagnitudeWarp { knots: count("knots")?, sigma: get("sigma")? }
            }
            TransformId::WindowWarp => {
                let mut scales: Vec<(usize, f64)> = params
                    .iter()
                    .filter_map(|(n, v)| {
                        let idx = n.strip_prefix("scale")?;
                        let idx = if idx.is_empty() { 0 } else { idx.parse().ok()? };
                        Some((idx, *v))
                    })
                    .collect();
                scales.sort_by_key(|(i, _)| *i);
                TransformSpec::WindowWarp {
                    window_ratio: get("window_ratio")?,
                    scales: scales.into_iter().map(|(_, v)| v).collect(),
                }
            }
            TransformId::WindowSlice => TransformSpec::WindowSlice { ratio: get("ratio")? },
            TransformId::Permutation => TransformSpec::Permutation { max_segments: count("max_segments")? },
            TransformId::Dropout => TransformSpec::Dropout { p: get("p")? },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Check every parameter lies inside its admissible range.
    pub fn validate(&self) -> Result<()> {
        let id = self.id();
        let bad = |what: &str| Err(Error::domain(format!("{id}: {what}")));
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            TransformSpec::Identity | TransformSpec::Reverse => Ok(()),
            TransformSpec::Magnify { t0_lo, t0_hi } if t0_lo > t0_hi => bad("t0_lo > t0_hi"),
            TransformSpec::Convolve { size } | TransformSpec::Pool { size } if *size == 0 => {
                bad("size must be at least 1")
            }
            TransformSpec::Jitter { sigma } | TransformSpec::Scaling { sigma } if !nonneg(*sigma) => {
                bad("sigma must be finite and non-negative")
            }
            TransformSpec::Quantize { levels } if *levels < 2 => bad("levels must be at least 2"),
            TransformSpec::TimeWarp { knots, sigma } | TransformSpec::MagnitudeWarp { knots, sigma }
                if *knots == 0 || !nonneg(*sigma) =>
            {
                bad("knots must be >= 1 and sigma finite and non-negative")
            }
            TransformSpec::WindowWarp { window_ratio, scales }
                if !(*window_ratio > 0.0 && *window_ratio <= 1.0)
                    || scales.is_empty()
                    || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) =>
            {
                bad("window_ratio must be in (0, 1] and scales nonempty and positive")
            }
            TransformSpec::WindowSlice { ratio } if !(*ratio > 0.0 && *ratio <= 1.0) => {
                bad("ratio must be in (0, 1]")
            }
            TransformSpec::Permutation { max_segments } if *max_segments < 2 => {
                bad("max_segments must be at least 2")
            }
            TransformSpec::Dropout { p } if !(*p >= 0.0 && *p < 1.0) => bad("p must be in [0, 1)"),
            _ => Ok(()),
        }
    }

    /// Shortest series the transform accepts.
    pub fn min_len(&self) -> usize {
        match self {
            TransformSpec::Magnify { t0_hi, .. } => t0_hi + 2,
            TransformSpec::Convolve { size } => (size / 2 + 1).max(2),
            TransformSpec::Pool { size } => (*size).max(2),
            _ => 2,
        }
    }

    /// Short label such as `jitter(sigma=0.01)`.
    pub fn label(&self) -> String {
        let params = self.params();
        if params.is_empty() {
            return self.id().to_string();
        }
        let inner: Vec<String> = params.iter().map(|(n, v)| format!("{n}={v}")).collect();
        format!("{}({})", self.id(), inner.join(","))
    }
}

/// Apply `spec` to `x`, drawing randomness from `stream`.
pub fn apply(spec: &TransformSpec, x: &TimeSeries, stream: &RngStream) -> Result<TimeSeries> {
    let mut rng = stream.rng();
    let values = apply_values(spec, &x.values, &mut rng)?;
    Ok(TimeSeries { values, label: x.label })
}

/// Apply `spec` to a raw value slice with the supplied generator.
pub fn apply_values<R: Rng + ?Sized>(spec: &TransformSpec, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let len = x.len();
    if len < spec.min_len() {
        return Err(Error::domain(format!(
            "{} needs series length >= {}, got {len}",
            spec.id(),
            spec.min_len()
        )));
    }
    let out = match spec {
        TransformSpec::Identity => x.to_vec(),
        TransformSpec::Magnify { t0_lo, t0_hi } => magnify(x, *t0_lo, *t0_hi, rng),
        TransformSpec::Convolve { size } => convolve_hann(x, *size),
        TransformSpec::Pool { size } => pool(x, *size),
        TransformSpec::Jitter { sigma } => jitter(x, *sigma, rng),
        TransformSpec::Quantize { levels } => quantize(x, *levels),
        TransformSpec::TimeWarp { knots, sigma } => time_warp(x, *knots, *sigma, rng),
        TransformSpec::MagnitudeWarp { knots, sigma } => magnitude_warp(x, *knots, *sigma, rng),
        TransformSpec::WindowWarp { window_ratio, scales } => window_warp(x, *window_ratio, scales, rng),
        TransformSpec::WindowSlice { ratio } => window_slice(x, *ratio, rng),
        TransformSpec::Scaling { sigma } => scaling(x, *sigma, rng),
        TransformSpec::Reverse => x.iter().rev().copied().collect(),
        TransformSpec::Permutation { max_segments } => permutation(x, *max_segments, rng),
        TransformSpec::Dropout { p } => dropout(x, *p, rng),
    };
    debug_assert_eq!(out.len(), len);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("{} produced a non-finite value", spec.id())));
    }
    Ok(out)
}

fn normal(mean: f64, sigma: f64) -> Normal<f64> {
    // sigma validated finite and non-negative
    Normal::new(mean, sigma).expect("valid normal parameters")
}

fn jitter<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    let noise = normal(0.0, sigma);
    x.iter().map(|v| v + noise.sample(rng)).collect()
}

fn scaling<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    let factor = normal(1.0, sigma).sample(rng);
    x.iter().map(|v| v * factor).collect()
}

/// Smooth random curve around 1 evaluated at every time step.
fn random_curve<R: Rng + ?Sized>(len: usize, knots: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let xs = uniform_knots(knots, len);
    let dist = normal(1.0, sigma);
    let ys: Vec<f64> = xs.iter().map(|_| dist.sample(rng)).collect();
    let spline = NaturalCubicSpline::new(xs, ys);
    (0..len).map(|t| spline.eval(t as f64)).collect()
}

fn magnitude_warp<R: Rng + ?Sized>(x: &[f64], knots: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let curve = random_curve(x.len(), knots, sigma, rng);
    x.iter().zip(curve).map(|(v, c)| v * c).collect()
}

fn time_warp<R: Rng + ?Sized>(x: &[f64], knots: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let len = x.len();
    let speed: Vec<f64> = random_curve(len, knots, sigma, rng)
        .into_iter()
        .map(|s| s.max(MIN_WARP_SPEED))
        .collect();
    // trapezoidal integral of the speed curve, rescaled onto [0, len-1]
    let mut warped = Vec::with_capacity(len);
    let mut acc = 0.0;
    warped.push(0.0);
    for w in speed.windows(2) {
        acc += 0.5 * (w[0] + w[1]);
        warped.push(acc);
    }
    let scale = (len - 1) as f64 / acc;
    warped.iter().map(|&t| sample_linear(x, t * scale)).collect()
}

fn window_bounds<R: Rng + ?Sized>(len: usize, ratio: f64, rng: &mut R) -> (usize, usize) {
    let width = ((ratio * len as f64).round() as usize).clamp(2, len);
    let start = rng.random_range(0..=len - width);
    (start, start + width)
}

fn window_slice<R: Rng + ?Sized>(x: &[f64], ratio: f64, rng: &mut R) -> Vec<f64> {
    let (start, end) = window_bounds(x.len(), ratio, rng);
    resample_linear(&x[start..end], x.len())
}

fn window_warp<R: Rng + ?Sized>(x: &[f64], ratio: f64, scales: &[f64], rng: &mut R) -> Vec<f64> {
    let len = x.len();
    let (start, end) = window_bounds(len, ratio, rng);
    let scale = scales[rng.random_range(0..scales.len())];
    let warped_len = (((end - start) as f64 * scale).round() as usize).max(2);
    let mut out = Vec::with_capacity(len - (end - start) + warped_len);
    out.extend_from_slice(&x[..start]);
    out.extend(resample_linear(&x[start..end], warped_len));
    out.extend_from_slice(&x[end..]);
    resample_linear(&out, len)
}

fn magnify<R: Rng + ?Sized>(x: &[f64], t0_lo: usize, t0_hi: usize, rng: &mut R) -> Vec<f64> {
    let t0 = rng.random_range(t0_lo..=t0_hi);
    resample_linear(&x[t0..], x.len())
}

fn permutation<R: Rng + ?Sized>(x: &[f64], max_segments: usize, rng: &mut R) -> Vec<f64> {
    let len = x.len();
    let n_segments = rng.random_range(2..=max_segments).min(len);
    let mut cuts: Vec<usize> = index::sample(rng, len - 1, n_segments - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut bounds = Vec::with_capacity(n_segments + 1);
    bounds.push(0);
    bounds.extend(cuts);
    bounds.push(len);
    let mut order: Vec<usize> = (0..n_segments).collect();
    order.shuffle(rng);
    order
        .into_iter()
        .flat_map(|s| x[bounds[s]..bounds[s + 1]].iter().copied())
        .collect()
}

fn dropout<R: Rng + ?Sized>(x: &[f64], p: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&v| if rng.random::<f64>() < p { 0.0 } else { v })
        .collect()
}

/// Hann taps without the zero endpoints, normalized to sum one.
pub fn hann_kernel(size: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..size)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (n + 1) as f64 / (size + 1) as f64).cos())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn convolve_hann(x: &[f64], size: usize) -> Vec<f64> {
    let kernel = hann_kernel(size);
    let len = x.len() as isize;
    let half = (size / 2) as isize;
    // mirror about the edge sample: x[-1] = x[1], x[len] = x[len-2]
    let reflect = |i: isize| -> f64 {
        let j = if i < 0 {
            -i
        } else if i >= len {
            2 * (len - 1) - i
        } else {
            i
        };
        x[j as usize]
    };
    (0..len)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * reflect(t + k as isize - half))
                .sum()
        })
        .collect()
}

fn pool(x: &[f64], size: usize) -> Vec<f64> {
    x.chunks(size)
        .flat_map(|chunk| {
            let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
            std::iter::repeat_n(mean, chunk.len())
        })
        .collect()
}

/// Snap each value to the nearest of `levels` evenly spaced values between
/// the sample's min and max (inclusive).
fn quantize(x: &[f64], levels: usize) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return x.to_vec();
    }
    let steps = (levels - 1) as f64;
    x.iter()
        .map(|&v| {
            let k = ((v - lo) / (hi - lo) * steps).round().clamp(0.0, steps);
            let t = k / steps;
            lo * (1.0 - t) + hi * t
        })
        .collect()
}
