//! Scalar coefficient functions of maturity, plus the scan-and-refine
//! extremum search shared by the constant estimators.

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type BivariateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A nonnegative rate depending on maturity only.
#[derive(Clone)]
pub enum RateFunction {
    Constant(f64),
    /// Coefficients in increasing degree: `c[0] + c[1] m + ...`.
    Polynomial(Vec<f64>),
    Custom(ScalarFn),
}

impl RateFunction {
    pub fn zero() -> Self {
        RateFunction::Constant(0.0)
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RateFunction::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, m: f64) -> f64 {
        match self {
            RateFunction::Constant(c) => *c,
            RateFunction::Polynomial(c) => horner(c, m),
            RateFunction::Custom(f) => f(m),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            RateFunction::Constant(c) => *c == 0.0,
            RateFunction::Polynomial(c) => c.iter().all(|&v| v == 0.0),
            RateFunction::Custom(_) => false,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            RateFunction::Constant(c) => Some(*c),
            RateFunction::Polynomial(c) if c.iter().skip(1).all(|&v| v == 0.0) => {
                Some(c.first().copied().unwrap_or(0.0))
            }
            _ => None,
        }
    }

    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        match self.as_constant() {
            Some(c) => c,
            None => scan_extremum(|m| self.eval(m), a, b, 1024, Extremum::Max).1,
        }
    }

    pub fn inf_on(&self, a: f64, b: f64) -> f64 {
        match self.as_constant() {
            Some(c) => c,
            None => scan_extremum(|m| self.eval(m), a, b, 1024, Extremum::Min).1,
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            RateFunction::Constant(c) => json!(c),
            RateFunction::Polynomial(c) => json!({ "poly": c }),
            RateFunction::Custom(_) => json!("custom"),
        }
    }
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFunction::Constant(c) => write!(f, "Constant({c})"),
            RateFunction::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            RateFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<f64> for RateFunction {
    fn from(c: f64) -> Self {
        RateFunction::Constant(c)
    }
}

#[inline]
pub fn horner(c: &[f64], m: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * m + v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

/// Uniform scan of `n` points on `[a, b]` followed by golden-section
/// refinement inside the bracketing cells of the best sample.
pub fn scan_extremum<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize, kind: Extremum) -> (f64, f64) {
    let sign = match kind {
        Extremum::Max => 1.0,
        Extremum::Min => -1.0,
    };
    let g = |x: f64| sign * f(x);
    let n = n.max(2);
    let step = (b - a) / (n - 1) as f64;
    let mut best = (a, g(a));
    for i in 1..n {
        let x = if i == n - 1 { b } else { a + step * i as f64 };
        let v = g(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let lo = (best.0 - step).max(a);
    let hi = (best.0 + step).min(b);
    let refined = golden_max(&g, lo, hi, 1e-13 * (b - a).abs().max(1e-300));
    if refined.1 > best.1 {
        best = refined;
    }
    (best.0, sign * best.1)
}

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
