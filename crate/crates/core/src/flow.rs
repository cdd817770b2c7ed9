//! Maturation flow and its conjugacy coordinate.
//!
//! With `h(m) = exp(-∫_m^1 ds/V(s))` the backward flow is exact
//! multiplication in `x = h(m)`: `π_{-σ}(m) = h⁻¹(h(m) e^{-σ})`. Everything
//! here works in `ln h` to keep the deep stem-cell end (where `h` underflows
//! for superlinear `V`) representable.

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{domain, Error, Result};
use crate::functions::ScalarFn;
use crate::interp::MonotoneCubic;
use crate::quadrature::GaussLegendre;

/// Maturation velocity `dm/dt = V(m)`.
#[derive(Clone)]
pub enum VelocityModel {
    /// `V(m) = α m^p`, `α > 0`, `p ≥ 1`.
    PowerLaw { alpha: f64, p: f64 },
    /// User supplied `V` and `V'`.
    Custom { v: ScalarFn, dv: ScalarFn },
}

impl VelocityModel {
    pub fn power_law(alpha: f64, p: f64) -> Self {
        VelocityModel::PowerLaw { alpha, p }
    }

    pub fn custom(
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        VelocityModel::Custom {
            v: Arc::new(v),
            dv: Arc::new(dv),
        }
    }

    #[inline]
    pub fn v(&self, m: f64) -> f64 {
        match self {
            VelocityModel::PowerLaw { alpha, p } if *p == 1.0 => alpha * m,
            VelocityModel::PowerLaw { alpha, p } => alpha * m.powf(*p),
            VelocityModel::Custom { v, .. } => v(m),
        }
    }

    #[inline]
    pub fn dv(&self, m: f64) -> f64 {
        match self {
            VelocityModel::PowerLaw { alpha, p } if *p == 1.0 => *alpha,
            VelocityModel::PowerLaw { alpha, p } => alpha * p * m.powf(p - 1.0),
            VelocityModel::Custom { dv, .. } => dv(m),
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            VelocityModel::PowerLaw { alpha, p } => json!({ "alpha": alpha, "p": p }),
            VelocityModel::Custom { .. } => json!("custom"),
        }
    }
}

impl fmt::Debug for VelocityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocityModel::PowerLaw { alpha, p } => write!(f, "PowerLaw {{ alpha: {alpha}, p: {p} }}"),
            VelocityModel::Custom { .. } => f.write_str("Custom(..)"),
        }
    }
}

/// Daughter maturity `g(m)` for a mother of maturity `m`.
#[derive(Clone)]
pub enum MaturityMap {
    /// `g(m) = c m`, `0 < c < 1`.
    Linear { c: f64 },
    /// `g`, `g'` and `g⁻¹` on `[0, g(1)]`.
    Custom {
        g: ScalarFn,
        dg: ScalarFn,
        g_inv: ScalarFn,
    },
}

impl MaturityMap {
    pub fn linear(c: f64) -> Self {
        MaturityMap::Linear { c }
    }

    pub fn custom(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MaturityMap::Custom {
            g: Arc::new(g),
            dg: Arc::new(dg),
            g_inv: Arc::new(g_inv),
        }
    }

    #[inline]
    pub fn g(&self, m: f64) -> f64 {
        match self {
            MaturityMap::Linear { c } => c * m,
            MaturityMap::Custom { g, .. } => g(m),
        }
    }

    pub fn dg(&self, m: f64) -> f64 {
        match self {
            MaturityMap::Linear { c } => *c,
            MaturityMap::Custom { dg, .. } => dg(m),
        }
    }

    pub fn g_one(&self) -> f64 {
        self.g(1.0)
    }

    /// Inverse of `g`, extended by `1` above `g(1)`.
    #[inline]
    pub fn g_inv(&self, m: f64) -> f64 {
        match self {
            MaturityMap::Linear { c } => {
                if m >= *c {
                    1.0
                } else {
                    m / c
                }
            }
            MaturityMap::Custom { g, g_inv, .. } => {
                if m >= g(1.0) {
                    1.0
                } else {
                    g_inv(m).min(1.0)
                }
            }
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            MaturityMap::Linear { c } => json!({ "c": c }),
            MaturityMap::Custom { .. } => json!("custom"),
        }
    }
}

impl fmt::Debug for MaturityMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaturityMap::Linear { c } => write!(f, "Linear {{ c: {c} }}"),
            MaturityMap::Custom { .. } => f.write_str("Custom(..)"),
        }
    }
}

const TABLE_NODES: usize = 4096;
const TABLE_LN_M_MIN: f64 = -27.631_021_115_928_547; // ln 1e-12
const TABLE_REL_TOL: f64 = 1e-12;

/// `ln h` tabulated against `ln m` for a velocity without closed form.
struct LnHTable {
    v: ScalarFn,
    gl: GaussLegendre,
    spline: MonotoneCubic,
    lnh_min: f64,
}

impl LnHTable {
    fn build(v: ScalarFn) -> Self {
        let gl = GaussLegendre::new(15);
        let u: Vec<f64> = (0..TABLE_NODES)
            .map(|i| TABLE_LN_M_MIN * (1.0 - i as f64 / (TABLE_NODES - 1) as f64))
            .collect();
        let mut lnh = vec![0.0; TABLE_NODES];
        for i in (0..TABLE_NODES - 1).rev() {
            let piece = log_integral(&gl, &v, u[i], u[i + 1]);
            lnh[i] = lnh[i + 1] - piece;
        }
        let lnh_min = lnh[0];
        // d ln h / d ln m = m / V(m) is known exactly.
        let slopes = u.iter().map(|&ui| ui.exp() / v(ui.exp())).collect();
        Self {
            v,
            gl,
            spline: MonotoneCubic::with_slopes(u, lnh, slopes),
            lnh_min,
        }
    }

    fn ln_h(&self, m: f64) -> f64 {
        let u = m.ln();
        if u >= TABLE_LN_M_MIN {
            self.spline.eval(u)
        } else {
            self.lnh_min - log_integral(&self.gl, &self.v, u, TABLE_LN_M_MIN)
        }
    }

    fn m_of_ln_h(&self, y: f64) -> f64 {
        if y >= self.lnh_min {
            let values = self.spline.values();
            let nodes = self.spline.nodes();
            let k = values.partition_point(|&v| v <= y).clamp(1, values.len() - 1) - 1;
            let u = newton_bisect(
                |u| self.spline.eval(u) - y,
                |u| self.spline.derivative(u),
                nodes[k],
                nodes[k + 1],
            );
            return u.exp();
        }
        // Below the table: expand the bracket downward, then refine.
        let f = |u: f64| self.lnh_min - log_integral(&self.gl, &self.v, u, TABLE_LN_M_MIN) - y;
        let mut hi = TABLE_LN_M_MIN;
        let mut step = 1.0;
        let mut lo = hi - step;
        while f(lo) > 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            if lo < -745.0 {
                return 0.0;
            }
        }
        let v = &self.v;
        newton_bisect(f, |u| u.exp() / v(u.exp()), lo, hi).exp()
    }
}

/// `∫_{e^{u0}}^{e^{u1}} ds / V(s)` computed in `u = ln s`.
fn log_integral(gl: &GaussLegendre, v: &ScalarFn, u0: f64, u1: f64) -> f64 {
    gl.adaptive(u0, u1, TABLE_REL_TOL, |u| {
        let s = u.exp();
        s / v(s)
    })
}

/// Root of an increasing function inside `[lo, hi]` (assumed to bracket).
fn newton_bisect<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(f: F, df: D, mut lo: f64, mut hi: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x.abs().max(1.0) || hi - lo <= 1e-16 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

#[derive(Clone)]
enum Coordinates {
    /// `V = α m`: `ln h = ln m / α`.
    Linear { alpha: f64 },
    /// `V = α m^p`, `p > 1`: `ln h = -(m^{1-p} - 1) / (α (p - 1))`.
    Power { alpha: f64, p: f64 },
    Table(Arc<LnHTable>),
}

/// The conjugacy coordinate `h` and its inverse.
#[derive(Clone)]
pub struct FlowCoordinates {
    repr: Coordinates,
}

impl FlowCoordinates {
    fn for_velocity(v: &VelocityModel) -> Self {
        let repr = match v {
            VelocityModel::PowerLaw { alpha, p } if *p == 1.0 => Coordinates::Linear { alpha: *alpha },
            VelocityModel::PowerLaw { alpha, p } => Coordinates::Power {
                alpha: *alpha,
                p: *p,
            },
            VelocityModel::Custom { v, .. } => Coordinates::Table(Arc::new(LnHTable::build(v.clone()))),
        };
        Self { repr }
    }

    /// Whether `h` is evaluated in closed form (no quadrature table).
    pub fn is_closed_form(&self) -> bool {
        !matches!(self.repr, Coordinates::Table(_))
    }

    /// `ln h(m)`; `-∞` at `m = 0`.
    #[inline]
    pub fn ln_h(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if m >= 1.0 {
            return 0.0;
        }
        match &self.repr {
            Coordinates::Linear { alpha } => m.ln() / alpha,
            Coordinates::Power { alpha, p } => -(m.powf(1.0 - p) - 1.0) / (alpha * (p - 1.0)),
            Coordinates::Table(t) => t.ln_h(m),
        }
    }

    /// Inverse of [`ln_h`](Self::ln_h).
    #[inline]
    pub fn m_of_ln_h(&self, y: f64) -> f64 {
        if y >= 0.0 {
            return 1.0;
        }
        if y == f64::NEG_INFINITY || y.is_nan() {
            return 0.0;
        }
        match &self.repr {
            Coordinates::Linear { alpha } => (alpha * y).exp(),
            Coordinates::Power { alpha, p } => (1.0 - alpha * (p - 1.0) * y).powf(-1.0 / (p - 1.0)),
            Coordinates::Table(t) => t.m_of_ln_h(y),
        }
    }

    #[inline]
    pub fn h(&self, m: f64) -> f64 {
        self.ln_h(m).exp()
    }

    #[inline]
    pub fn h_inv(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.m_of_ln_h(x.ln())
        }
    }
}

/// Velocity, division map and the derived flow quantities.
#[derive(Clone)]
pub struct Flow {
    velocity: VelocityModel,
    map: MaturityMap,
    coords: FlowCoordinates,
    g_one: f64,
}

impl fmt::Debug for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Flow")
            .field("velocity", &self.velocity)
            .field("map", &self.map)
            .field("g_one", &self.g_one)
            .finish()
    }
}

impl Flow {
    pub fn new(velocity: VelocityModel, map: MaturityMap) -> Result<Self> {
        validate_velocity(&velocity)?;
        validate_map(&map)?;
        let coords = FlowCoordinates::for_velocity(&velocity);
        let g_one = map.g_one();
        Ok(Self {
            velocity,
            map,
            coords,
            g_one,
        })
    }

    pub fn velocity(&self) -> &VelocityModel {
        &self.velocity
    }

    pub fn map(&self) -> &MaturityMap {
        &self.map
    }

    pub fn coords(&self) -> &FlowCoordinates {
        &self.coords
    }

    /// `g(1)`, the largest daughter maturity.
    pub fn g_one(&self) -> f64 {
        self.g_one
    }

    pub fn h(&self, m: f64) -> Result<f64> {
        check_maturity(m)?;
        Ok(self.coords.h(m))
    }

    pub fn h_inv(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(domain("x", x, "[0, 1]"));
        }
        Ok(self.coords.h_inv(x))
    }

    /// Backward flow `π_s(m)` for `s ≤ 0`.
    pub fn pi(&self, s: f64, m: f64) -> Result<f64> {
        if s > 0.0 || s.is_nan() {
            return Err(domain("s", s, "(-inf, 0]"));
        }
        check_maturity(m)?;
        Ok(self.back(-s, m))
    }

    /// Division ancestry `Δ(s, m) = π_{-s}(g⁻¹(m))`.
    pub fn delta(&self, s: f64, m: f64) -> Result<f64> {
        if s < 0.0 || s.is_nan() {
            return Err(domain("s", s, "[0, inf)"));
        }
        if !(0.0..=self.g_one).contains(&m) {
            return Err(domain("m", m, "[0, g(1)]"));
        }
        Ok(self.ancestor(s, m))
    }

    /// `ln(h(g⁻¹(m)) / h(m))`: time after which the ancestor is less mature
    /// than its descendant's current position.
    pub fn crossing_time(&self, m: f64) -> Result<f64> {
        if !(m > 0.0 && m <= self.g_one) {
            return Err(domain("m", m, "(0, g(1)]"));
        }
        Ok(self.crossing(m))
    }

    /// `τ₀ = sup_{m ∈ (0, g(1)]} crossing_time(m)`.
    pub fn tau0(&self) -> Result<f64> {
        const SCAN: usize = 512;
        const DEPTH: f64 = 1e-12;
        const CAP: f64 = 1e6;
        let u_lo = (self.g_one * DEPTH).ln();
        let u_hi = self.g_one.ln();
        let at = |u: f64| self.crossing(u.exp().min(self.g_one));
        let step = (u_hi - u_lo) / (SCAN - 1) as f64;
        let mut best = (0usize, f64::NEG_INFINITY);
        for i in 0..SCAN {
            let u = if i == SCAN - 1 { u_hi } else { u_lo + step * i as f64 };
            let v = at(u);
            if v > best.1 {
                best = (i, v);
            }
        }
        if best.1 > CAP {
            let m = (u_lo + step * best.0 as f64).exp();
            return Err(Error::UnboundedTau0 { m, value: best.1 });
        }
        if best.0 == 0 {
            let m_low = u_lo.exp();
            let deeper = self.crossing(m_low * 1e-6);
            if deeper > best.1 * (1.0 + 1e-6) + 1e-9 {
                return Err(Error::UnboundedTau0 {
                    m: m_low * 1e-6,
                    value: deeper,
                });
            }
        }
        let lo = (u_lo + step * (best.0 as f64 - 1.0)).max(u_lo);
        let hi = (u_lo + step * (best.0 as f64 + 1.0)).min(u_hi);
        let refined = crate::functions::golden_max(&at, lo, hi, 1e-12);
        Ok(best.1.max(refined.1).max(0.0))
    }

    // Unchecked hot paths used by the kernels and solver.

    /// `π_{-σ}(m)` for `σ ≥ 0`.
    #[inline]
    pub fn back(&self, sigma: f64, m: f64) -> f64 {
        if sigma == 0.0 {
            return m;
        }
        self.coords.m_of_ln_h(self.coords.ln_h(m) - sigma)
    }

    /// `Δ(s, m)` without domain checks.
    #[inline]
    pub fn ancestor(&self, s: f64, m: f64) -> f64 {
        self.coords.m_of_ln_h(self.coords.ln_h(self.map.g_inv(m)) - s)
    }

    #[inline]
    fn crossing(&self, m: f64) -> f64 {
        self.coords.ln_h(self.map.g_inv(m)) - self.coords.ln_h(m)
    }
}

fn check_maturity(m: f64) -> Result<()> {
    if (0.0..=1.0).contains(&m) {
        Ok(())
    } else {
        Err(domain("m", m, "[0, 1]"))
    }
}

fn validate_velocity(v: &VelocityModel) -> Result<()> {
    match v {
        VelocityModel::PowerLaw { alpha, p } => {
            if !(alpha.is_finite() && *alpha > 0.0) {
                return Err(Error::Config(format!("velocity.alpha must be > 0, got {alpha}")));
            }
            if !(p.is_finite() && *p >= 1.0) {
                return Err(Error::Config(format!("velocity.p must be >= 1, got {p}")));
            }
            Ok(())
        }
        VelocityModel::Custom { v, .. } => {
            let v0 = v(0.0);
            if v0.abs() > 1e-14 {
                return Err(Error::Config(format!("velocity must vanish at m = 0, got V(0) = {v0}")));
            }
            for i in 1..=1024 {
                let m = i as f64 / 1024.0;
                let vm = v(m);
                if !(vm.is_finite() && vm > 0.0) {
                    return Err(Error::Config(format!("velocity must be positive on (0, 1], V({m}) = {vm}")));
                }
            }
            screen_divergence(v)
        }
    }
}

/// Screens `∫_0^m ds/V = ∞`: the per-decade increments of `∫_ε ds/V` must
/// not die out as `ε` drops from `1e-2` to `1e-10`.
pub fn screen_divergence(v: &ScalarFn) -> Result<()> {
    let gl = GaussLegendre::new(15);
    let decade = |k: i32| {
        let lo = 10f64.powi(-k - 1).ln();
        let hi = 10f64.powi(-k).ln();
        log_integral(&gl, v, lo, hi)
    };
    let first = decade(2);
    let last = decade(9);
    if !(last.is_finite() && first.is_finite()) || last < 0.1 * first {
        return Err(Error::Config(format!(
            "velocity fails the divergence screen: decade increments {first:.3e} -> {last:.3e}"
        )));
    }
    Ok(())
}

fn validate_map(map: &MaturityMap) -> Result<()> {
    match map {
        MaturityMap::Linear { c } => {
            if !(c.is_finite() && *c > 0.0 && *c < 1.0) {
                return Err(Error::Config(format!("g.c must lie in (0, 1), got {c}")));
            }
            Ok(())
        }
        MaturityMap::Custom { g, g_inv, .. } => {
            let g1 = g(1.0);
            if !(g1 > 0.0 && g1 < 1.0) {
                return Err(Error::Config(format!("g(1) must lie in (0, 1), got {g1}")));
            }
            if g(0.0).abs() > 1e-14 {
                return Err(Error::Config("g(0) must be 0".into()));
            }
            let mut prev = g(0.0);
            for i in 1..=1024 {
                let m = i as f64 / 1024.0;
                let gm = g(m);
                if gm <= prev {
                    return Err(Error::Config(format!("g must be strictly increasing (at m = {m})")));
                }
                if i < 1024 && gm >= m {
                    return Err(Error::Config(format!("g(m) < m violated at m = {m}")));
                }
                let back = g_inv(gm);
                if (back - m).abs() > 1e-8 {
                    return Err(Error::Config(format!("g_inv(g({m})) = {back} does not invert g")));
                }
                prev = gm;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> Flow {
        Flow::new(VelocityModel::power_law(1.0, 1.0), MaturityMap::linear(0.5)).unwrap()
    }

    #[test]
    fn h_closed_forms() {
        let f = Flow::new(VelocityModel::power_law(2.0, 1.0), MaturityMap::linear(0.5)).unwrap();
        assert_relative_eq!(f.h(0.25).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(f.h(0.0).unwrap(), 0.0);
        let f = Flow::new(VelocityModel::power_law(1.0, 2.0), MaturityMap::linear(0.5)).unwrap();
        assert_relative_eq!(f.h(0.5).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn p2_closed_form_matches_quadrature() {
        let gl = GaussLegendre::new(15);
        let f = Flow::new(VelocityModel::power_law(1.0, 2.0), MaturityMap::linear(0.5)).unwrap();
        for m in [0.05, 0.2, 0.5, 0.9] {
            let integral = gl.adaptive(m, 1.0, 1e-14, |s| 1.0 / (s * s));
            assert_relative_eq!(f.h(m).unwrap(), (-integral).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn domain_errors() {
        let f = reference();
        assert!(f.h(1.5).is_err());
        assert!(f.h(-0.1).is_err());
        assert!(f.pi(0.1, 0.5).is_err());
        assert!(f.delta(-1.0, 0.2).is_err());
        assert!(f.delta(1.0, 0.6).is_err());
        assert!(f.crossing_time(0.0).is_err());
        assert!(Flow::new(VelocityModel::power_law(1.0, 0.5), MaturityMap::linear(0.5)).is_err());
        assert!(Flow::new(VelocityModel::power_law(1.0, 1.0), MaturityMap::linear(1.0)).is_err());
    }

    #[test]
    fn pi_examples() {
        let f = reference();
        assert_relative_eq!(f.pi(-(2.0f64).ln(), 0.5).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(f.pi(0.0, 0.37).unwrap(), 0.37);
        assert_eq!(f.pi(-3.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn delta_examples() {
        let f = reference();
        assert_eq!(f.delta(2.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(f.delta(0.0, 0.3).unwrap(), 0.6, epsilon = 1e-15);
        assert_relative_eq!(f.delta((2.0f64).ln(), 0.25).unwrap(), 0.25, epsilon = 1e-15);
        // Composition route through h and h_inv.
        let x = f.h(f.map().g_inv(0.25)).unwrap() * (-(2.0f64).ln()).exp();
        assert_relative_eq!(f.h_inv(x).unwrap(), 0.25, epsilon = 1e-15);
        // Upper end of the bound chain.
        assert_relative_eq!(f.delta(0.7, 0.5).unwrap(), f.h_inv((-0.7f64).exp()).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn crossing_time_examples() {
        let f = reference();
        assert_relative_eq!(f.crossing_time(0.3).unwrap(), 2f64.ln(), epsilon = 1e-14);
        let f2 = Flow::new(VelocityModel::power_law(2.0, 1.0), MaturityMap::linear(0.5)).unwrap();
        assert_relative_eq!(f2.crossing_time(0.3).unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-14);
        let g1 = f2.g_one();
        assert_relative_eq!(f2.crossing_time(g1).unwrap(), -f2.h(g1).unwrap().ln(), epsilon = 1e-14);
    }

    #[test]
    fn tau0_linear_models() {
        // Oracle: quadrature of ∫_m^{2m} ds/V at 100 maturities.
        let gl = GaussLegendre::new(15);
        for alpha in [1.0, 2.0] {
            let oracle = (1..=100)
                .map(|i| {
                    let m = 0.5 * i as f64 / 100.0;
                    gl.adaptive(m, (2.0 * m).min(1.0), 1e-13, |s| 1.0 / (alpha * s))
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(oracle, 2f64.ln() / alpha, max_relative = 1e-11);
            let f = Flow::new(VelocityModel::power_law(alpha, 1.0), MaturityMap::linear(0.5)).unwrap();
            assert_relative_eq!(f.tau0().unwrap(), oracle, max_relative = 1e-11);
        }
        let f = Flow::new(VelocityModel::power_law(1.0, 1.0), MaturityMap::linear(1.0 - 1e-9)).unwrap();
        assert!(f.tau0().unwrap() < 1e-8);
    }

    #[test]
    fn tau0_reports_divergence() {
        let f = Flow::new(VelocityModel::power_law(1.0, 2.0), MaturityMap::linear(0.5)).unwrap();
        assert!(matches!(f.tau0(), Err(Error::UnboundedTau0 { .. })));
    }

    #[test]
    fn tabulated_h_matches_closed_form() {
        let custom = Flow::new(
            VelocityModel::custom(|m| m * m, |m| 2.0 * m),
            MaturityMap::linear(0.5),
        );
        // V = m² has a divergent integral, so it passes the screen.
        let custom = custom.unwrap();
        assert!(!custom.coords().is_closed_form());
        let exact = Flow::new(VelocityModel::power_law(1.0, 2.0), MaturityMap::linear(0.5)).unwrap();
        for m in [1e-3, 0.01, 0.1, 0.3, 0.5, 0.77, 0.99] {
            let c = custom.coords();
            assert_relative_eq!(c.ln_h(m), exact.coords().ln_h(m), max_relative = 1e-9);
            // h itself underflows near m = 1e-3 here; round-trip in ln h.
            assert_relative_eq!(c.m_of_ln_h(c.ln_h(m)), m, max_relative = 1e-8);
        }
        let lin = Flow::new(VelocityModel::custom(|m| 1.5 * m, |_| 1.5), MaturityMap::linear(0.5)).unwrap();
        for m in [1e-14, 1e-6, 0.2, 0.45] {
            assert_relative_eq!(lin.coords().ln_h(m), m.ln() / 1.5, max_relative = 1e-9);
            assert_relative_eq!(lin.h_inv(lin.h(m).unwrap()).unwrap(), m, max_relative = 1e-8);
        }
        assert_relative_eq!(lin.tau0().unwrap(), 2f64.ln() / 1.5, max_relative = 1e-8);
    }

    #[test]
    fn divergence_screen_rejects_integrable_velocity() {
        let sqrt = VelocityModel::custom(|m: f64| m.sqrt(), |m: f64| 0.5 / m.sqrt());
        assert!(Flow::new(sqrt, MaturityMap::linear(0.5)).is_err());
        let nonzero = VelocityModel::custom(|m| 0.1 + m, |_| 1.0);
        assert!(Flow::new(nonzero, MaturityMap::linear(0.5)).is_err());
    }

    #[test]
    fn custom_map_is_validated_and_extended() {
        let map = MaturityMap::custom(|m| 0.4 * m + 0.1 * m * m, |m| 0.4 + 0.2 * m, |y| {
            (-0.4 + (0.16 + 0.4 * y).sqrt()) / 0.2
        });
        let f = Flow::new(VelocityModel::power_law(1.0, 1.0), map).unwrap();
        assert_relative_eq!(f.g_one(), 0.5, epsilon = 1e-15);
        assert_eq!(f.map().g_inv(0.6), 1.0);
        assert_relative_eq!(f.map().g_inv(f.map().g(0.7)), 0.7, epsilon = 1e-12);
        let bad = MaturityMap::custom(|m| m, |_| 1.0, |m| m);
        assert!(Flow::new(VelocityModel::power_law(1.0, 1.0), bad).is_err());
    }

    fn lemma_cases(f: &Flow, tol: f64) {
        let g1 = f.g_one();
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..2000 {
            let s = 5.0 * next();
            let sigma = 5.0 * next();
            let m = g1 * next();
            let lhs = f.pi(-sigma, f.delta(s, m).unwrap()).unwrap();
            let rhs = f.delta(s + sigma, m).unwrap();
            assert!((lhs - rhs).abs() <= tol, "cocycle {lhs} vs {rhs}");
        }
    }

    #[test]
    fn cocycle_identity_custom_velocity() {
        let f = Flow::new(
            VelocityModel::custom(|m| m * (1.0 + m), |m| 1.0 + 2.0 * m),
            MaturityMap::linear(0.5),
        )
        .unwrap();
        lemma_cases(&f, 1e-8);
    }

    proptest! {
        #[test]
        fn conjugacy_round_trip(m in 0.0f64..=1.0, alpha in 0.2f64..4.0, p in 1.0f64..3.0) {
            let f = Flow::new(VelocityModel::power_law(alpha, p), MaturityMap::linear(0.5)).unwrap();
            let x = f.h(m).unwrap();
            if x > 0.0 {
                prop_assert!((f.h_inv(x).unwrap() - m).abs() <= 1e-12 * m.max(1e-300).max(1.0));
            }
        }

        #[test]
        fn delta_bound_chain(s in 0.0f64..8.0, frac in 0.0f64..=1.0, alpha in 0.3f64..3.0) {
            let f = Flow::new(VelocityModel::power_law(alpha, 1.0), MaturityMap::linear(0.4)).unwrap();
            let m = frac * f.g_one();
            let d = f.delta(s, m).unwrap();
            let top = f.h_inv((-s).exp()).unwrap();
            prop_assert!(d >= 0.0 && d <= top * (1.0 + 1e-14));
        }

        #[test]
        fn cocycle_power_law(s in 0.0f64..6.0, sigma in 0.0f64..6.0, frac in 0.0f64..=1.0, alpha in 0.3f64..3.0) {
            let f = Flow::new(VelocityModel::power_law(alpha, 1.0), MaturityMap::linear(0.5)).unwrap();
            let m = frac * f.g_one();
            let lhs = f.pi(-sigma, f.delta(s, m).unwrap()).unwrap();
            let rhs = f.delta(s + sigma, m).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.max(1e-300).max(1e-3));
        }

        #[test]
        fn delta_is_monotone(s in 0.0f64..6.0, ds in 0.0f64..2.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let f = Flow::new(VelocityModel::power_law(1.5, 1.0), MaturityMap::linear(0.5)).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (m1, m2) = (lo * f.g_one(), hi * f.g_one());
            prop_assert!(f.delta(s, m1).unwrap() <= f.delta(s, m2).unwrap());
            prop_assert!(f.delta(s + ds, m1).unwrap() <= f.delta(s, m1).unwrap());
        }

        // Δ(s, m) < m exactly when s exceeds the crossing time.
        #[test]
        fn crossing_time_separates(frac in 0.01f64..=1.0, c in 0.2f64..0.9, off in 0.01f64..2.0) {
            let f = Flow::new(VelocityModel::power_law(1.0, 1.0), MaturityMap::linear(c)).unwrap();
            let m = frac * f.g_one();
            let t = f.crossing_time(m).unwrap();
            prop_assert!(f.delta(t + off, m).unwrap() < m);
            if t - off >= 0.0 {
                prop_assert!(f.delta(t - off, m).unwrap() > m);
            }
        }
    }
}
