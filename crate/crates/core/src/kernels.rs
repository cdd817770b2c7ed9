//! Reintroduction law, division kernel, and the attenuation factors carried
//! along characteristics.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::functions::{golden_max, horner, scan_extremum, BivariateFn, Extremum, RateFunction, ScalarFn};
use crate::quadrature::GaussLegendre;

/// Rate `β(m, N)` at which resting cells re-enter proliferation.
#[derive(Clone)]
pub enum ReintroductionLaw {
    /// `β₀(m) θⁿ / (θⁿ + Nⁿ)`.
    Hill { beta0: RateFunction, theta: f64, n: f64 },
    /// `β₀(m)`, independent of `N`.
    Constant(RateFunction),
    /// Arbitrary `β(m, N)` with an optional Lipschitz constant for `x β(m, x)`.
    Custom { beta: BivariateFn, lipschitz: Option<f64> },
}

impl ReintroductionLaw {
    pub fn hill(beta0: impl Into<RateFunction>, theta: f64, n: f64) -> Self {
        ReintroductionLaw::Hill {
            beta0: beta0.into(),
            theta,
            n,
        }
    }

    pub fn zero() -> Self {
        ReintroductionLaw::Constant(RateFunction::zero())
    }

    pub fn custom(beta: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, lipschitz: Option<f64>) -> Self {
        ReintroductionLaw::Custom {
            beta: Arc::new(beta),
            lipschitz,
        }
    }

    /// `β(m, N)`, evaluated at `max(N, 0)`.
    #[inline]
    pub fn eval(&self, m: f64, n_val: f64) -> f64 {
        let x = n_val.max(0.0);
        match self {
            ReintroductionLaw::Hill { beta0, theta, n } => {
                let r = x / theta;
                let rn = if *n == 2.0 { r * r } else { r.powf(*n) };
                beta0.eval(m) / (1.0 + rn)
            }
            ReintroductionLaw::Constant(b) => b.eval(m),
            ReintroductionLaw::Custom { beta, .. } => beta(m, x),
        }
    }

    /// `x β(m, x)`, the reintroduction flux.
    #[inline]
    pub fn flux(&self, m: f64, x: f64) -> f64 {
        x * self.eval(m, x)
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            ReintroductionLaw::Hill { beta0, .. } | ReintroductionLaw::Constant(beta0) => beta0.is_identically_zero(),
            ReintroductionLaw::Custom { .. } => false,
        }
    }

    /// Global Lipschitz constant of `x ↦ x β(m, x)` over `m ∈ [0, 1]`, `x ≥ 0`.
    ///
    /// For Hill, with `u = (x/θ)ⁿ`, the derivative is `β₀ (1 + (1−n)u)/(1+u)²`,
    /// which equals `β₀` at `u = 0` and reaches `−β₀ (n−1)²/(4n)` at
    /// `u = (n+1)/(n−1)`.
    pub fn lipschitz(&self) -> Result<f64> {
        match self {
            ReintroductionLaw::Hill { beta0, n, .. } => {
                let b = beta0.sup_on(0.0, 1.0).max(0.0);
                Ok(b * 1f64.max((n - 1.0).powi(2) / (4.0 * n)))
            }
            ReintroductionLaw::Constant(b) => Ok(b.sup_on(0.0, 1.0).max(0.0)),
            ReintroductionLaw::Custom { lipschitz, .. } => lipschitz.ok_or_else(|| {
                Error::Config("model.beta: custom law needs a declared lipschitz constant".into())
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ReintroductionLaw::Hill { beta0, theta, n } => {
                if !(theta.is_finite() && *theta > 0.0) {
                    return Err(Error::Config(format!("model.beta.theta must be > 0, got {theta}")));
                }
                if !(n.is_finite() && *n >= 1.0) {
                    return Err(Error::Config(format!("model.beta.n must be >= 1, got {n}")));
                }
                check_nonnegative("model.beta.beta0", beta0)
            }
            ReintroductionLaw::Constant(b) => check_nonnegative("model.beta.beta0", b),
            ReintroductionLaw::Custom { lipschitz, .. } => match lipschitz {
                Some(l) if !(l.is_finite() && *l >= 0.0) => {
                    Err(Error::Config(format!("model.beta.lipschitz must be >= 0, got {l}")))
                }
                _ => Ok(()),
            },
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            ReintroductionLaw::Hill { beta0, theta, n } => {
                json!({ "form": "hill", "beta0": beta0.describe(), "theta": theta, "n": n })
            }
            ReintroductionLaw::Constant(b) => json!({ "form": "constant", "beta0": b.describe() }),
            ReintroductionLaw::Custom { lipschitz, .. } => json!({ "form": "custom", "lipschitz": lipschitz }),
        }
    }
}

impl fmt::Debug for ReintroductionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

/// Age profile `ρ(a)` of a separable division kernel.
#[derive(Clone)]
pub enum AgeDensity {
    /// `1 / (τ̄ − τ̲)`.
    Uniform,
    /// Coefficients in increasing powers of `a`.
    Polynomial(Vec<f64>),
    Custom(ScalarFn),
}

/// Division kernel `k(m, a)`, supported on `[0, g(1)) × [τ̲, τ̄]`.
#[derive(Clone)]
pub enum DivisionKernel {
    /// `κ(m) ρ(a)`, optionally tapered to zero over the last 10% below `g(1)`.
    Separable {
        kappa: RateFunction,
        rho: AgeDensity,
        taper: bool,
    },
    Custom(BivariateFn),
}

/// Fraction of `[0, g(1)]` over which the taper acts.
pub const TAPER_WIDTH: f64 = 0.1;

impl DivisionKernel {
    pub fn uniform(kappa: impl Into<RateFunction>) -> Self {
        DivisionKernel::Separable {
            kappa: kappa.into(),
            rho: AgeDensity::Uniform,
            taper: true,
        }
    }

    pub fn zero() -> Self {
        DivisionKernel::Separable {
            kappa: RateFunction::zero(),
            rho: AgeDensity::Uniform,
            taper: false,
        }
    }

    pub fn custom(k: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        DivisionKernel::Custom(Arc::new(k))
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            DivisionKernel::Separable { kappa, rho, .. } => {
                kappa.is_identically_zero() || matches!(rho, AgeDensity::Polynomial(c) if c.iter().all(|&v| v == 0.0))
            }
            DivisionKernel::Custom(_) => false,
        }
    }

    /// `k(m, a)`; zero for `m ≥ g(1)` and for `a` outside `[τ̲, τ̄]`.
    #[inline]
    pub fn eval(&self, m: f64, a: f64, g_one: f64, tau_lower: f64, tau_upper: f64) -> f64 {
        if m >= g_one || a < tau_lower || a > tau_upper {
            return 0.0;
        }
        match self {
            DivisionKernel::Separable { kappa, rho, taper } => {
                let r = match rho {
                    AgeDensity::Uniform => 1.0 / (tau_upper - tau_lower),
                    AgeDensity::Polynomial(c) => horner(c, a),
                    AgeDensity::Custom(f) => f(a),
                };
                let mut w = kappa.eval(m) * r;
                if *taper {
                    w *= taper_factor(m, g_one);
                }
                w
            }
            DivisionKernel::Custom(k) => k(m, a),
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            DivisionKernel::Separable { kappa, rho, taper } => {
                let density = match rho {
                    AgeDensity::Uniform => json!("uniform"),
                    AgeDensity::Polynomial(c) => json!({ "poly": c }),
                    AgeDensity::Custom(_) => json!("custom"),
                };
                json!({ "form": "separable", "kappa": kappa.describe(), "density": density, "taper": taper })
            }
            DivisionKernel::Custom(_) => json!({ "form": "custom" }),
        }
    }
}

impl fmt::Debug for DivisionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

/// `1 − 3u² + 2u³` on the last [`TAPER_WIDTH`] of `[0, g(1)]`, `1` below it.
#[inline]
pub fn taper_factor(m: f64, g_one: f64) -> f64 {
    let start = (1.0 - TAPER_WIDTH) * g_one;
    if m <= start {
        return 1.0;
    }
    let u = ((m - start) / (TAPER_WIDTH * g_one)).min(1.0);
    1.0 - u * u * (3.0 - 2.0 * u)
}

fn check_nonnegative(field: &str, r: &RateFunction) -> Result<()> {
    let inf = r.inf_on(0.0, 1.0);
    if !(inf >= -1e-14) {
        return Err(Error::Config(format!("{field} must be nonnegative on [0, 1] (min {inf})")));
    }
    Ok(())
}

/// Full model: flow, death rates, reintroduction, division kernel, delays.
#[derive(Clone)]
pub struct ModelParams {
    pub flow: Flow,
    pub delta: RateFunction,
    pub gamma: RateFunction,
    pub beta: ReintroductionLaw,
    pub k: DivisionKernel,
    pub tau_lower: f64,
    pub tau_upper: f64,
}

impl fmt::Debug for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

/// `l (2(τ̄ − τ̲) ζ̃ + 1) < I` and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceMargin {
    pub l: f64,
    /// `inf (δ + V′)` over `[0, g(1)]`.
    pub i: f64,
    /// `sup ζ` over `[0, g(1)] × [τ̲, τ̄]`.
    pub zeta_tilde: f64,
    pub lhs: f64,
    pub status: MarginStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginStatus {
    Satisfied,
    NotSatisfied,
    /// `I ≤ 0`: the condition is not meaningful.
    Unverifiable,
}

impl InvarianceMargin {
    pub fn satisfied(&self) -> bool {
        self.status == MarginStatus::Satisfied
    }
}

const ATTENUATION_NODES: usize = 32;
const ATTENUATION_TOL: f64 = 1e-10;

impl ModelParams {
    pub fn new(
        flow: Flow,
        delta: RateFunction,
        gamma: RateFunction,
        beta: ReintroductionLaw,
        k: DivisionKernel,
        tau_lower: f64,
        tau_upper: f64,
    ) -> Result<Self> {
        if !(tau_lower.is_finite() && tau_lower > 0.0) {
            return Err(Error::Config(format!("model.tau_lower must be > 0, got {tau_lower}")));
        }
        if !(tau_upper.is_finite() && tau_upper > tau_lower) {
            return Err(Error::Config(format!(
                "model.tau_upper must exceed model.tau_lower ({tau_upper} <= {tau_lower})"
            )));
        }
        check_nonnegative("model.delta", &delta)?;
        check_nonnegative("model.gamma", &gamma)?;
        beta.validate()?;
        let params = Self {
            flow,
            delta,
            gamma,
            beta,
            k,
            tau_lower,
            tau_upper,
        };
        let g1 = params.flow.g_one();
        for i in 0..=64 {
            let m = g1 * i as f64 / 64.0;
            for j in 0..=16 {
                let a = tau_lower + (tau_upper - tau_lower) * j as f64 / 16.0;
                let v = params.k_eval(m, a);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Config(format!("model.k must be nonnegative, k({m}, {a}) = {v}")));
                }
            }
        }
        Ok(params)
    }

    pub fn g_one(&self) -> f64 {
        self.flow.g_one()
    }

    #[inline]
    pub fn k_eval(&self, m: f64, a: f64) -> f64 {
        self.k.eval(m, a, self.flow.g_one(), self.tau_lower, self.tau_upper)
    }

    /// Resting-phase attenuation `K(t, m)`.
    pub fn kernel_k(&self, t: f64, m: f64) -> Result<f64> {
        check_time(t)?;
        if !(0.0..=1.0).contains(&m) {
            return Err(crate::error::domain("m", m, "[0, 1]"));
        }
        Ok(self.attenuation(&self.delta, t, m))
    }

    /// Proliferating-phase attenuation `ξ(m, t)`.
    pub fn xi(&self, m: f64, t: f64) -> Result<f64> {
        check_time(t)?;
        if !(0.0..=1.0).contains(&m) {
            return Err(crate::error::domain("m", m, "[0, 1]"));
        }
        Ok(self.attenuation(&self.gamma, t, m))
    }

    /// `ζ(m, a) = k(m, a) ξ(g⁻¹(m), a)`.
    pub fn zeta(&self, m: f64, a: f64) -> Result<f64> {
        if !(self.tau_lower..=self.tau_upper).contains(&a) {
            return Err(crate::error::domain("a", a, "[tau_lower, tau_upper]"));
        }
        if !(0.0..=1.0).contains(&m) {
            return Err(crate::error::domain("m", m, "[0, 1]"));
        }
        Ok(self.zeta_unchecked(m, a))
    }

    #[inline]
    pub fn zeta_unchecked(&self, m: f64, a: f64) -> f64 {
        let k = self.k_eval(m, a);
        if k == 0.0 {
            return 0.0;
        }
        k * self.attenuation(&self.gamma, a, self.flow.map().g_inv(m))
    }

    pub fn lipschitz_l(&self) -> Result<f64> {
        self.beta.lipschitz()
    }

    /// `exp(−∫₀ᵗ (r + V′)(π_{−s} m) ds)`.
    ///
    /// The `V′` part integrates exactly to `ln V(m) − ln V(π_{−t} m)`; only
    /// the rate part goes through Gauss–Legendre.
    pub fn attenuation(&self, rate: &RateFunction, t: f64, m: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        let flow = &self.flow;
        let rate_part = match rate.as_constant() {
            Some(c) => c * t,
            None if m == 0.0 => rate.eval(0.0) * t,
            None => path_integral(t, |s| rate.eval(flow.back(s, m))),
        };
        let v = flow.velocity();
        let vm = v.v(m);
        let foot = flow.back(t, m);
        let vf = v.v(foot);
        let dilation = if m > 0.0 && vm > 1e-280 && vf > 0.0 {
            (vm / vf).ln()
        } else if m == 0.0 {
            v.dv(0.0) * t
        } else {
            path_integral(t, |s| v.dv(flow.back(s, m)))
        };
        (-(rate_part + dilation)).exp()
    }

    /// Invariance condition `l (2(τ̄ − τ̲) ζ̃ + 1) < I`.
    pub fn invariance_margin(&self) -> Result<InvarianceMargin> {
        let l = self.lipschitz_l()?;
        let g1 = self.g_one();
        let v = self.flow.velocity();
        let (_, i) = scan_extremum(|m| self.delta.eval(m) + v.dv(m), 0.0, g1, 1024, Extremum::Min);
        let zeta_tilde = self.zeta_sup();
        let lhs = l * (2.0 * (self.tau_upper - self.tau_lower) * zeta_tilde + 1.0);
        let status = if !(i > 0.0) {
            MarginStatus::Unverifiable
        } else if lhs < i {
            MarginStatus::Satisfied
        } else {
            MarginStatus::NotSatisfied
        };
        Ok(InvarianceMargin {
            l,
            i,
            zeta_tilde,
            lhs,
            status,
        })
    }

    /// `sup ζ` by a 257 × 65 scan refined along both axes.
    fn zeta_sup(&self) -> f64 {
        if self.k.is_identically_zero() {
            return 0.0;
        }
        let g1 = self.g_one();
        let (lo, hi) = (self.tau_lower, self.tau_upper);
        let (nm, na) = (257usize, 65usize);
        let mut best = (0.0, lo, f64::NEG_INFINITY);
        for i in 0..nm {
            let m = g1 * i as f64 / (nm - 1) as f64;
            for j in 0..na {
                let a = lo + (hi - lo) * j as f64 / (na - 1) as f64;
                let z = self.zeta_unchecked(m, a);
                if z > best.2 {
                    best = (m, a, z);
                }
            }
        }
        let (dm, da) = (g1 / (nm - 1) as f64, (hi - lo) / (na - 1) as f64);
        let (mut m, mut a, mut z) = best;
        for _ in 0..3 {
            let (m1, z1) = golden_max(&|x| self.zeta_unchecked(x, a), (m - dm).max(0.0), (m + dm).min(g1), 1e-12);
            if z1 > z {
                m = m1;
                z = z1;
            }
            let (a1, z2) = golden_max(&|y| self.zeta_unchecked(m, y), (a - da).max(lo), (a + da).min(hi), 1e-12);
            if z2 > z {
                a = a1;
                z = z2;
            }
        }
        z.max(0.0)
    }

    pub fn describe(&self) -> Value {
        json!({
            "velocity": self.flow.velocity().describe(),
            "g": self.flow.map().describe(),
            "delta": self.delta.describe(),
            "gamma": self.gamma.describe(),
            "beta": self.beta.describe(),
            "k": self.k.describe(),
            "tau_lower": self.tau_lower,
            "tau_upper": self.tau_upper,
        })
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(crate::error::domain("t", t, "[0, inf)"))
    }
}

/// `∫₀ᵗ f(s) ds` with 32-point panels, one per unit time, doubled to tolerance.
fn path_integral<F: Fn(f64) -> f64>(t: f64, f: F) -> f64 {
    thread_local! {
        static GL: GaussLegendre = GaussLegendre::new(ATTENUATION_NODES);
    }
    GL.with(|gl| {
        let panels = (t.ceil() as usize).max(1);
        gl.composite_doubling(0.0, t, panels, ATTENUATION_TOL, 8, &f)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{MaturityMap, VelocityModel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(alpha: f64, delta: RateFunction, gamma: RateFunction, beta: ReintroductionLaw, k: DivisionKernel) -> ModelParams {
        let flow = Flow::new(VelocityModel::power_law(alpha, 1.0), MaturityMap::linear(0.5)).unwrap();
        ModelParams::new(flow, delta, gamma, beta, k, 1.0, 2.0).unwrap()
    }

    fn unit_kernel() -> DivisionKernel {
        DivisionKernel::Separable {
            kappa: 1.0.into(),
            rho: AgeDensity::Polynomial(vec![1.0]),
            taper: false,
        }
    }

    #[test]
    fn attenuation_closed_forms() {
        let p = params(1.5, 0.3.into(), 0.2.into(), ReintroductionLaw::zero(), DivisionKernel::zero());
        assert_eq!(p.kernel_k(0.0, 0.4).unwrap(), 1.0);
        assert_eq!(p.xi(0.4, 0.0).unwrap(), 1.0);
        for (t, m) in [(0.5, 0.1), (2.0, 0.49), (7.3, 0.0)] {
            assert_relative_eq!(p.kernel_k(t, m).unwrap(), (-(0.3f64 + 1.5) * t).exp(), max_relative = 1e-12);
            assert_relative_eq!(p.xi(m, t).unwrap(), (-(0.2f64 + 1.5) * t).exp(), max_relative = 1e-12);
        }
        let p = params(1.0, RateFunction::Polynomial(vec![0.0, 1.0]), 0.0.into(), ReintroductionLaw::zero(), DivisionKernel::zero());
        for (t, m) in [(0.3f64, 0.2), (1.7, 0.45), (4.0, 0.01)] {
            let exact = (-m * (1.0 - (-t).exp()) - t).exp();
            assert_relative_eq!(p.kernel_k(t, m).unwrap(), exact, max_relative = 1e-12);
        }
        assert_relative_eq!(p.xi(0.3, 1.2).unwrap(), (-1.2f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn dilation_matches_direct_quadrature_for_superlinear_velocity() {
        let flow = Flow::new(VelocityModel::power_law(0.7, 2.0), MaturityMap::linear(0.5)).unwrap();
        let p = ModelParams::new(flow, 0.1.into(), 0.0.into(), ReintroductionLaw::zero(), DivisionKernel::zero(), 1.0, 2.0).unwrap();
        let gl = GaussLegendre::new(32);
        for (t, m) in [(0.4, 0.3), (3.0, 0.45), (1.1, 0.05)] {
            let integral = gl.composite(0.0, t, 64, |s| 0.1 + p.flow.velocity().dv(p.flow.back(s, m)));
            assert_relative_eq!(p.kernel_k(t, m).unwrap(), (-integral).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn zeta_examples() {
        let p = params(1.0, 0.0.into(), 0.0.into(), ReintroductionLaw::zero(), unit_kernel());
        assert_eq!(p.zeta(0.5, 1.5).unwrap(), 0.0);
        for (m, a) in [(0.1, 1.0f64), (0.3, 1.6), (0.49, 2.0)] {
            assert_relative_eq!(p.zeta(m, a).unwrap(), (-a).exp(), max_relative = 1e-12);
        }
        assert!(p.zeta(0.1, 0.5).is_err());
        let ramp = DivisionKernel::Separable {
            kappa: 1.0.into(),
            rho: AgeDensity::Polynomial(vec![-1.0, 1.0]),
            taper: true,
        };
        let p = params(1.0, 0.0.into(), 0.0.into(), ReintroductionLaw::zero(), ramp);
        assert_eq!(p.zeta(0.2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn zeta_is_definitional() {
        let p = params(1.3, 0.1.into(), RateFunction::Polynomial(vec![0.1, 0.5]), ReintroductionLaw::zero(), DivisionKernel::uniform(RateFunction::Polynomial(vec![1.0, 2.0])));
        for i in 0..50 {
            let m = 0.5 * i as f64 / 49.0;
            let a = 1.0 + i as f64 / 49.0;
            let lhs = p.zeta(m, a).unwrap();
            let rhs = p.k_eval(m, a) * p.xi(p.flow.map().g_inv(m), a).unwrap();
            assert!((lhs - rhs).abs() <= 1e-14, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn taper_is_c1_and_cuts_to_zero() {
        assert_eq!(taper_factor(0.4, 0.5), 1.0);
        assert_eq!(taper_factor(0.5, 0.5), 0.0);
        let start = (1.0 - TAPER_WIDTH) * 0.5;
        let h = 1e-7;
        assert!((taper_factor(start + h, 0.5) - 1.0).abs() < 1e-9);
        assert!(taper_factor(0.5 - h, 0.5) < 1e-9);
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(ReintroductionLaw::Constant(0.7.into()).lipschitz().unwrap(), 0.7);
        assert_eq!(ReintroductionLaw::hill(1.3, 2.0, 1.0).lipschitz().unwrap(), 1.3);
        // Numeric oracle for n = 2, β₀ = θ = 1: max |d/dx (x/(1+x²))| on a fine grid.
        let oracle = (0..200_001)
            .map(|i| {
                let x = i as f64 * 1e-4;
                ((1.0 - x * x) / (1.0 + x * x).powi(2)).abs()
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(ReintroductionLaw::hill(1.0, 1.0, 2.0).lipschitz().unwrap(), oracle, epsilon = 1e-12);
        // Steep Hill: the negative lobe dominates.
        let n = 6.0;
        let u = (n + 1.0) / (n - 1.0);
        let slope = (1.0 + (1.0 - n) * u) / (1.0 + u * u + 2.0 * u);
        assert_relative_eq!(ReintroductionLaw::hill(1.0, 1.0, n).lipschitz().unwrap(), -slope, max_relative = 1e-14);
        assert!(ReintroductionLaw::custom(|_, _| 1.0, None).lipschitz().is_err());
        assert_eq!(ReintroductionLaw::custom(|_, _| 1.0, Some(2.0)).lipschitz().unwrap(), 2.0);
    }

    #[test]
    fn invariance_margin_cases() {
        let p = params(1.0, 0.2.into(), 0.0.into(), ReintroductionLaw::zero(), unit_kernel());
        let r = p.invariance_margin().unwrap();
        assert_eq!(r.l, 0.0);
        assert_relative_eq!(r.i, 1.2, epsilon = 1e-14);
        assert!(r.satisfied());
        let p = params(1.0, 0.2.into(), 0.0.into(), ReintroductionLaw::Constant(0.5.into()), DivisionKernel::zero());
        let r = p.invariance_margin().unwrap();
        assert_eq!(r.zeta_tilde, 0.0);
        assert_relative_eq!(r.lhs, 0.5);
        assert!(r.satisfied());
        let p = params(1.0, 0.2.into(), 0.0.into(), ReintroductionLaw::Constant(0.8.into()), unit_kernel());
        let r = p.invariance_margin().unwrap();
        assert_relative_eq!(r.zeta_tilde, (-1.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(r.lhs, 0.8 * (2.0 * (-1.0f64).exp() + 1.0), max_relative = 1e-12);
        assert_eq!(r.status, MarginStatus::NotSatisfied);
    }

    #[test]
    fn rejects_bad_delays_and_rates() {
        let flow = Flow::new(VelocityModel::power_law(1.0, 1.0), MaturityMap::linear(0.5)).unwrap();
        let mk = |lo, hi, d: f64| ModelParams::new(flow.clone(), d.into(), 0.0.into(), ReintroductionLaw::zero(), DivisionKernel::zero(), lo, hi);
        assert!(mk(1.0, 1.0, 0.0).is_err());
        assert!(mk(2.0, 1.0, 0.0).is_err());
        assert!(mk(0.0, 1.0, 0.0).is_err());
        assert!(mk(1.0, 2.0, -0.1).is_err());
        assert!(mk(1.0, 2.0, 0.1).is_ok());
    }

    proptest! {
        #[test]
        fn k_is_multiplicative_along_the_flow(t in 0.0f64..4.0, sigma in 0.0f64..4.0, m in 0.0f64..0.5) {
            let p = params(1.0, RateFunction::Polynomial(vec![0.1, 1.0, -0.5]), 0.0.into(), ReintroductionLaw::zero(), DivisionKernel::zero());
            let lhs = p.kernel_k(t + sigma, m).unwrap();
            let rhs = p.kernel_k(sigma, m).unwrap() * p.kernel_k(t, p.flow.back(sigma, m)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1e-300));
        }

        #[test]
        fn attenuations_lie_in_unit_interval(t in 0.0f64..10.0, m in 0.0f64..=1.0) {
            let p = params(0.8, RateFunction::Polynomial(vec![0.0, 0.3]), RateFunction::Polynomial(vec![0.05]), ReintroductionLaw::zero(), DivisionKernel::zero());
            let k = p.kernel_k(t, m).unwrap();
            let x = p.xi(m, t).unwrap();
            prop_assert!(k > 0.0 && k <= 1.0);
            prop_assert!(x > 0.0 && x <= 1.0);
        }

        #[test]
        fn hill_flux_respects_lipschitz(x1 in 0.0f64..20.0, x2 in 0.0f64..20.0, m in 0.0f64..1.0, n in 1.0f64..8.0) {
            prop_assume!((x1 - x2).abs() > 1e-9);
            let law = ReintroductionLaw::hill(RateFunction::Polynomial(vec![0.5, 1.0]), 1.3, n);
            let l = law.lipschitz().unwrap();
            let ratio = (law.flux(m, x1) - law.flux(m, x2)).abs() / (x1 - x2).abs();
            prop_assert!(ratio <= l * (1.0 + 1e-6));
        }
    }
}
