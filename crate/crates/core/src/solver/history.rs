use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::FlowCoordinates;
use crate::functions::BivariateFn;
use crate::interp::pchip_slopes_uniform;

use super::eval_uniform;

/// The datum `φ` on `[0, τ̄] × [0, g(1)]`.
#[derive(Clone)]
pub enum InitialHistory {
    /// `φ(t, m)` evaluated on demand.
    Function(BivariateFn),
    /// Slices on a uniform `x` grid, linear in time.
    Gridded(Arc<GriddedHistory>),
}

impl fmt::Debug for InitialHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialHistory::Function(_) => f.write_str("InitialHistory::Function(..)"),
            InitialHistory::Gridded(g) => write!(f, "InitialHistory::Gridded({} x {})", g.values.len(), g.nodes()),
        }
    }
}

impl InitialHistory {
    pub fn function(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        InitialHistory::Function(Arc::new(f))
    }

    pub fn zero() -> Self {
        Self::function(|_, _| 0.0)
    }

    pub fn gridded(g: GriddedHistory) -> Self {
        InitialHistory::Gridded(Arc::new(g))
    }

    /// `φ(t, m)` given both `m` and its flow coordinate `x = h(m)`.
    #[inline]
    pub fn eval_mx(&self, t: f64, m: f64, x: f64) -> f64 {
        match self {
            InitialHistory::Function(f) => f(t, m),
            InitialHistory::Gridded(g) => g.eval(t, x),
        }
    }

    pub fn eval(&self, coords: &FlowCoordinates, t: f64, m: f64) -> f64 {
        match self {
            InitialHistory::Function(f) => f(t, m),
            InitialHistory::Gridded(g) => g.eval(t, coords.h(m)),
        }
    }
}

/// `φ` sampled at times `k·dt`, `k = 0..=n`, on `x_j = j·dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedHistory {
    dt: f64,
    dx: f64,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl GriddedHistory {
    pub fn new(dt: f64, x_max: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() || values[0].len() < 3 {
            return Err(Error::Config("gridded history needs >= 1 slice of >= 3 nodes".into()));
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n) {
            return Err(Error::Config("gridded history slices differ in length".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("gridded history contains non-finite values".into()));
        }
        if !(dt > 0.0 || values.len() == 1) {
            return Err(Error::Config("gridded history dt must be > 0".into()));
        }
        let dx = x_max / (n - 1) as f64;
        let slopes = values
            .iter()
            .map(|v| {
                let mut d = vec![0.0; n];
                pchip_slopes_uniform(dx, v, &mut d);
                d
            })
            .collect();
        Ok(Self { dt, dx, values, slopes })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> usize {
        self.values[0].len()
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    /// Linear in `t`, monotone cubic in `x`; `t` is clamped into range.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let last = self.values.len() - 1;
        if last == 0 {
            return eval_uniform(self.dx, &self.values[0], &self.slopes[0], x);
        }
        let p = (t / self.dt).clamp(0.0, last as f64);
        let lo = (p.floor() as usize).min(last - 1);
        let w = p - lo as f64;
        let a = eval_uniform(self.dx, &self.values[lo], &self.slopes[lo], x);
        if w == 0.0 {
            return a;
        }
        let b = eval_uniform(self.dx, &self.values[lo + 1], &self.slopes[lo + 1], x);
        a + w * (b - a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gridded_lookup_is_bilinear_in_time_and_exact_on_linear_data() {
        let x_max = 0.5;
        let slices: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..9).map(|j| (k as f64 + 1.0) * j as f64 * x_max / 8.0).collect())
            .collect();
        let g = GriddedHistory::new(0.5, x_max, slices).unwrap();
        assert!((g.eval(0.25, 0.3) - 1.5 * 0.3).abs() < 1e-15);
        assert!((g.eval(1.0, 0.1) - 0.3).abs() < 1e-15);
        assert!((g.t_max() - 1.0).abs() < 1e-15);
        assert!(GriddedHistory::new(0.5, 1.0, vec![vec![0.0, f64::NAN, 1.0]]).is_err());
    }
}
