//! Parameter catalogs and the single distortion-magnitude mapping.
//!
//! Two catalogs are provided. The *fixed* catalog carries one hand-picked
//! parameter set per transform and is used for the financial pipeline. The
//! *ranged* catalog carries a parameter range per transform; a single
//! integer magnitude `M` in `1..=20` selects a point on every range at once.

use serde::{Deserialize, Serialize};

use super::{TransformId, TransformSpec};
use crate::{Error, Result};

pub const MAGNITUDE_MIN: u8 = 1;
pub const MAGNITUDE_MAX: u8 = 20;

/// Order of the fixed-parameter (financial) catalog. Index 0 is Identity.
pub const FINANCIAL_SET: [TransformId; 11] = [
    TransformId::Identity,
    TransformId::Magnify,
    TransformId::Convolve,
    TransformId::Pool,
    TransformId::Jitter,
    TransformId::Quantize,
    TransformId::TimeWarp,
    TransformId::MagnitudeWarp,
    TransformId::WindowWarp,
    TransformId::Scaling,
    TransformId::Reverse,
];

/// Order of the ranged (UCR) catalog. Index 0 is Identity.
pub const UCR_SET: [TransformId; 9] = [
    TransformId::Identity,
    TransformId::Jitter,
    TransformId::TimeWarp,
    TransformId::WindowSlice,
    TransformId::WindowWarp,
    TransformId::Scaling,
    TransformId::MagnitudeWarp,
    TransformId::Permutation,
    TransformId::Dropout,
];

/// Hann kernel length used by the fixed Convolve entry.
pub const CONVOLVE_SIZE: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeRange {
    /// `lo` maps to M=1 and `hi` to M=20; `hi < lo` is allowed.
    Continuous { lo: f64, hi: f64 },
    /// Ordered set of admissible values.
    Discrete(Vec<f64>),
}

impl MagnitudeRange {
    pub fn continuous(lo: f64, hi: f64) -> Self {
        MagnitudeRange::Continuous { lo, hi }
    }

    pub fn discrete(values: &[f64]) -> Self {
        MagnitudeRange::Discrete(values.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MagnitudeRange::Continuous { lo, hi } if lo.is_finite() && hi.is_finite() => Ok(()),
            MagnitudeRange::Continuous { .. } => Err(Error::domain("range bounds must be finite")),
            MagnitudeRange::Discrete(v) if v.is_empty() => {
                Err(Error::domain("discrete range must be nonempty"))
            }
            MagnitudeRange::Discrete(_) => Ok(()),
        }
    }

    /// Value selected by M=1.
    pub fn first(&self) -> f64 {
        match self {
            MagnitudeRange::Continuous { lo, .. } => *lo,
            MagnitudeRange::Discrete(v) => v[0],
        }
    }

    /// Value selected by M=20.
    pub fn last(&self) -> f64 {
        match self {
            MagnitudeRange::Continuous { hi, .. } => *hi,
            MagnitudeRange::Discrete(v) => v[v.len() - 1],
        }
    }
}

/// Map a magnitude `m` onto a parameter range.
///
/// Continuous ranges use `lo + (m-1)/19 * (hi-lo)`, evaluated as a convex
/// combination so both endpoints are returned exactly. Discrete ranges pick
/// the element at index `round((m-1)/19 * (len-1))`.
pub fn interpolate_magnitude(m: u8, range: &MagnitudeRange) -> Result<f64> {
    if !(MAGNITUDE_MIN..=MAGNITUDE_MAX).contains(&m) {
        return Err(Error::domain(format!(
            "magnitude {m} outside [{MAGNITUDE_MIN}, {MAGNITUDE_MAX}]"
        )));
    }
    range.validate()?;
    let t = f64::from(m - MAGNITUDE_MIN) / f64::from(MAGNITUDE_MAX - MAGNITUDE_MIN);
    Ok(match range {
        MagnitudeRange::Continuous { lo, hi } => lo * (1.0 - t) + hi * t,
        MagnitudeRange::Discrete(v) => {
            let idx = (t * (v.len() - 1) as f64).round() as usize;
            v[idx]
        }
    })
}

/// How transform parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    /// Use the fixed catalog values.
    Fixed,
    /// Interpolate every tunable range at this distortion magnitude.
    Level(u8),
}

impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Magnitude::Fixed => f.write_str("fixed"),
            Magnitude::Level(m) => write!(f, "{m}"),
        }
    }
}

impl std::str::FromStr for Magnitude {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("fixed") {
            return Ok(Magnitude::Fixed);
        }
        let m: u8 = s
            .parse()
            .map_err(|_| Error::domain(format!("invalid magnitude `{s}`")))?;
        if !(MAGNITUDE_MIN..=MAGNITUDE_MAX).contains(&m) {
            return Err(Error::domain(format!("magnitude {m} outside [1, 20]")));
        }
        Ok(Magnitude::Level(m))
    }
}

/// Tunable ranges of a transform, by parameter name. Empty when the
/// transform has no tunable parameter.
pub fn tunable_ranges(id: TransformId) -> Vec<(&'static str, MagnitudeRange)> {
    use MagnitudeRange as R;
    match id {
        TransformId::Jitter => vec![("sigma", R::continuous(0.01, 0.5))],
        TransformId::TimeWarp => vec![
            ("knots", R::discrete(&[3.0, 4.0, 5.0])),
            ("sigma", R::continuous(0.01, 0.5)),
        ],
        TransformId::WindowSlice => vec![("ratio", R::continuous(0.95, 0.6))],
        TransformId::WindowWarp => vec![("scale", R::continuous(0.1, 2.0))],
        TransformId::Scaling => vec![("sigma", R::continuous(0.1, 2.0))],
        TransformId::MagnitudeWarp => vec![
            ("knots", R::discrete(&[3.0, 4.0, 5.0])),
            ("sigma", R::continuous(0.1, 2.0)),
        ],
        TransformId::Permutation => vec![("max_segments", R::discrete(&[3.0, 4.0, 5.0, 6.0]))],
        TransformId::Dropout => vec![("p", R::continuous(0.05, 0.5))],
        _ => Vec::new(),
    }
}

/// Fixed catalog entry, if the transform has one.
pub fn fixed_spec(id: TransformId) -> Option<TransformSpec> {
    Some(match id {
        TransformId::Identity => TransformSpec::Identity,
        TransformId::Magnify => TransformSpec::Magnify { t0_lo: 50, t0_hi: 150 },
        TransformId::Convolve => TransformSpec::Convolve { size: CONVOLVE_SIZE },
        TransformId::Pool => TransformSpec::Pool { size: 3 },
        TransformId::Jitter => TransformSpec::Jitter { sigma: 0.01 },
        TransformId::Quantize => TransformSpec::Quantize { levels: 25 },
        TransformId::TimeWarp => TransformSpec::TimeWarp { knots: 4, sigma: 0.2 },
        TransformId::MagnitudeWarp => TransformSpec::MagnitudeWarp { knots: 4, sigma: 0.2 },
        TransformId::WindowWarp => TransformSpec::WindowWarp {
            window_ratio: 0.1,
            scales: vec![0.5, 2.0],
        },
        TransformId::Scaling => TransformSpec::Scaling { sigma: 0.1 },
        TransformId::Reverse => TransformSpec::Reverse,
        TransformId::WindowSlice | TransformId::Permutation | TransformId::Dropout => return None,
    })
}

/// Resolve a transform at the given magnitude.
///
/// With [`Magnitude::Level`], transforms that have tunable ranges are
/// interpolated (all ranges of one transform share the same `M`); the rest
/// fall back to their fixed entry.
pub fn resolve(id: TransformId, magnitude: Magnitude) -> Result<TransformSpec> {
    let m = match magnitude {
        Magnitude::Fixed => {
            return fixed_spec(id).ok_or_else(|| {
                Error::domain(format!("{} has no fixed parameters; use a magnitude level", id))
            })
        }
        Magnitude::Level(m) => m,
    };
    let ranges = tunable_ranges(id);
    if ranges.is_empty() {
        return fixed_spec(id).ok_or_else(|| Error::domain(format!("cannot resolve {id}")));
    }
    let value = |name: &str| -> Result<f64> {
        let (_, r) = ranges
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::domain(format!("{id}: no range for `{name}`")))?;
        interpolate_magnitude(m, r)
    };
    let spec = match id {
        TransformId::Jitter => TransformSpec::Jitter { sigma: value("sigma")? },
        TransformId::TimeWarp => TransformSpec::TimeWarp {
            knots: value("knots")? as usize,
            sigma: value("sigma")?,
        },
        TransformId::WindowSlice => TransformSpec::WindowSlice { ratio: value("ratio")? },
        TransformId::WindowWarp => TransformSpec::WindowWarp {
            window_ratio: 0.1,
            scales: vec![value("scale")?],
        },
        TransformId::Scaling => TransformSpec::Scaling { sigma: value("sigma")? },
        TransformId::MagnitudeWarp => TransformSpec::MagnitudeWarp {
            knots: value("knots")? as usize,
            sigma: value("sigma")?,
        },
        TransformId::Permutation => TransformSpec::Permutation {
            max_segments: value("max_segments")? as usize,
        },
        TransformId::Dropout => TransformSpec::Dropout { p: value("p")? },
        _ => unreachable!("transforms without ranges handled above"),
    };
    spec.validate()?;
    Ok(spec)
}

/// Resolve a list of transforms, checking that Identity comes first.
pub fn resolve_list(ids: &[TransformId], magnitude: Magnitude) -> Result<Vec<TransformSpec>> {
    if ids.first() != Some(&TransformId::Identity) {
        return Err(Error::domain("transform list must start with identity"));
    }
    ids.iter().map(|&id| resolve(id, magnitude)).collect()
}
