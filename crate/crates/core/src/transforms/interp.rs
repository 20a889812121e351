//! Resampling helpers shared by the warping transforms.

/// Linear interpolation of `x` (sampled at integer positions) at a real
/// position. Positions outside `[0, len-1]` are clamped to the ends.
#[inline]
pub fn sample_linear(x: &[f64], pos: f64) -> f64 {
    let last = x.len() - 1;
    if pos <= 0.0 {
        return x[0];
    }
    if pos >= last as f64 {
        return x[last];
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if frac == 0.0 {
        x[i]
    } else {
        x[i] * (1.0 - frac) + x[i + 1] * frac
    }
}

/// Resample `x` onto `n` uniformly spaced points spanning the same interval.
pub fn resample_linear(x: &[f64], n: usize) -> Vec<f64> {
    debug_assert!(!x.is_empty());
    if n == 0 {
        return Vec::new();
    }
    if x.len() == 1 || n == 1 {
        return vec![x[0]; n];
    }
    if x.len() == n {
        return x.to_vec();
    }
    let span = (x.len() - 1) as f64;
    let denom = (n - 1) as f64;
    (0..n).map(|i| sample_linear(x, i as f64 * span / denom)).collect()
}

/// Natural cubic spline through `(knot_x[k], knot_y[k])`.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    /// `xs` must be strictly increasing with at least two knots.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            //   h[i-1] m[i-1] + 2 (h[i-1] + h[i]) m[i] + h[i] m[i+1] = 6 (d[i] - d[i-1])
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let d: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                diag[j] = 2.0 * (h[i - 1] + h[i]);
                rhs[j] = 6.0 * (d[i] - d[i - 1]);
            }
            for j in 1..k {
                let w = h[j] / diag[j - 1];
                diag[j] -= w * h[j];
                rhs[j] -= w * rhs[j - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                m[j + 1] = (rhs[j] - h[j + 1] * m[j + 2]) / diag[j];
            }
        }
        Self { xs, ys, m }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.xs.len();
        let seg = match self.xs.partition_point(|&x| x <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.xs[seg], self.xs[seg + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.ys[seg]
            + b * self.ys[seg + 1]
            + ((a * a * a - a) * self.m[seg] + (b * b * b - b) * self.m[seg + 1]) * h * h / 6.0
    }
}

/// Knot positions for `interior` interior knots plus both endpoints over
/// `[0, len-1]`.
pub fn uniform_knots(interior: usize, len: usize) -> Vec<f64> {
    let n = interior + 2;
    let span = (len - 1) as f64;
    (0..n).map(|k| span * k as f64 / (n - 1) as f64).collect()
}
