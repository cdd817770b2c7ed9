//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes
//! with the weighted harmonic mean used by PCHIP).
//!
//! The interpolant never leaves the range of the two samples bounding a
//! cell, so nonnegative data interpolates to a nonnegative function.

/// Fills `d` with PCHIP slopes for samples `y` at strictly increasing `x`.
pub fn pchip_slopes(x: &[f64], y: &[f64], d: &mut [f64]) {
    let n = x.len();
    assert_eq!(n, y.len());
    assert_eq!(n, d.len());
    if n < 2 {
        d.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    if n == 2 {
        let s = (y[1] - y[0]) / (x[1] - x[0]);
        d[0] = s;
        d[1] = s;
        return;
    }
    for k in 1..n - 1 {
        let h0 = x[k] - x[k - 1];
        let h1 = x[k + 1] - x[k];
        let s0 = (y[k] - y[k - 1]) / h0;
        let s1 = (y[k + 1] - y[k]) / h1;
        d[k] = interior_slope(h0, h1, s0, s1);
    }
    let h0 = x[1] - x[0];
    let h1 = x[2] - x[1];
    d[0] = end_slope(h0, h1, (y[1] - y[0]) / h0, (y[2] - y[1]) / h1);
    let hn0 = x[n - 1] - x[n - 2];
    let hn1 = x[n - 2] - x[n - 3];
    d[n - 1] = end_slope(
        hn0,
        hn1,
        (y[n - 1] - y[n - 2]) / hn0,
        (y[n - 2] - y[n - 3]) / hn1,
    );
}

/// Same as [`pchip_slopes`] for nodes with uniform spacing `h`.
pub fn pchip_slopes_uniform(h: f64, y: &[f64], d: &mut [f64]) {
    let n = y.len();
    assert_eq!(n, d.len());
    if n < 2 {
        d.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let inv = 1.0 / h;
    if n == 2 {
        let s = (y[1] - y[0]) * inv;
        d[0] = s;
        d[1] = s;
        return;
    }
    let mut s0 = (y[1] - y[0]) * inv;
    for k in 1..n - 1 {
        let s1 = (y[k + 1] - y[k]) * inv;
        d[k] = if s0 * s1 <= 0.0 {
            0.0
        } else {
            2.0 * s0 * s1 / (s0 + s1)
        };
        s0 = s1;
    }
    d[0] = end_slope(h, h, (y[1] - y[0]) * inv, (y[2] - y[1]) * inv);
    d[n - 1] = end_slope(h, h, (y[n - 1] - y[n - 2]) * inv, (y[n - 2] - y[n - 3]) * inv);
}

#[inline]
fn interior_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    if s0 * s1 <= 0.0 {
        return 0.0;
    }
    let w1 = 2.0 * h1 + h0;
    let w2 = h1 + 2.0 * h0;
    (w1 + w2) / (w1 / s0 + w2 / s1)
}

#[inline]
fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d.signum() != s0.signum() || s0 == 0.0 {
        0.0
    } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// Cubic Hermite on one cell of width `h`, local coordinate `t ∈ [0, 1]`.
#[inline]
pub fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative of [`hermite`] with respect to the global coordinate.
#[inline]
pub fn hermite_derivative(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let a = 6.0 * t2 - 6.0 * t;
    let b = 3.0 * t2 - 4.0 * t + 1.0;
    let c = 3.0 * t2 - 2.0 * t;
    (a * (y0 - y1)) / h + b * d0 + c * d1
}

/// Owned monotone cubic interpolant over arbitrary increasing nodes.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2, "need at least two nodes");
        assert!(x.windows(2).all(|w| w[1] > w[0]), "nodes must increase strictly");
        let mut d = vec![0.0; x.len()];
        pchip_slopes(&x, &y, &mut d);
        Self { x, y, d }
    }

    /// Hermite interpolant with caller-supplied slopes (monotone whenever
    /// the data and slopes share the sign of every secant).
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Self {
        assert!(x.len() >= 2, "need at least two nodes");
        assert!(x.len() == y.len() && x.len() == d.len());
        assert!(x.windows(2).all(|w| w[1] > w[0]), "nodes must increase strictly");
        Self { x, y, d }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Cell index `k` with `x[k] <= v <= x[k+1]`, clamped to the table.
    pub fn cell(&self, v: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= v) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    /// Evaluates the interpolant, clamping `v` into the node range.
    pub fn eval(&self, v: f64) -> f64 {
        let k = self.cell(v);
        let h = self.x[k + 1] - self.x[k];
        let t = ((v - self.x[k]) / h).clamp(0.0, 1.0);
        hermite(self.y[k], self.y[k + 1], self.d[k], self.d[k + 1], h, t)
    }

    pub fn derivative(&self, v: f64) -> f64 {
        let k = self.cell(v);
        let h = self.x[k + 1] - self.x[k];
        let t = ((v - self.x[k]) / h).clamp(0.0, 1.0);
        hermite_derivative(self.y[k], self.y[k + 1], self.d[k], self.d[k + 1], h, t)
    }
}
