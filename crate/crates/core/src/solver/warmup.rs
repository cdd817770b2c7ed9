//! Produces `φ` on `[0, τ̄]` from the age densities at `t = 0`.
//!
//! Along `x_j e^{−(t_{i+1} − s)}` the resting density obeys
//! `dU/ds = −(δ + V′ + β(m, U)) U + S(s, m)` with
//!
//! ```text
//! S(t,m) = 2 ξ(g⁻¹m, t) ∫_{max(t,τ̲)}^{τ̄} k(m,a) Γ(Δ(t,m), a−t) da
//!        + 2 ∫_{τ̲}^{t} ζ(m,a) (βN)(t−a, Δ(a,m)) da      (t > τ̲ only)
//! ```
//!
//! The second integral reads `t − a ≤ t − τ̲`, already marched.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functions::{BivariateFn, ScalarFn};
use crate::interp::pchip_slopes_uniform;
use crate::kernels::ModelParams;
use crate::quadrature::GaussLegendre;

use super::history::{GriddedHistory, InitialHistory};
use super::{eval_uniform, Grid, AGE_NODES};

/// Initial proliferating age density `Γ(m, a)` and `N0(m) = ∫ Υ(m, a) da`.
#[derive(Clone)]
pub struct WarmupData {
    pub gamma: BivariateFn,
    pub n0: ScalarFn,
}

impl WarmupData {
    pub fn new(
        gamma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        n0: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            gamma: std::sync::Arc::new(gamma),
            n0: std::sync::Arc::new(n0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WarmupOptions {
    /// Fail on any negative density.
    pub check_nonnegative: bool,
}

struct Marcher<'a> {
    params: &'a ModelParams,
    grid: &'a Grid,
    data: &'a WarmupData,
    dt: f64,
    gl: GaussLegendre,
}

impl Marcher<'_> {
    fn lookup(&self, slices: &[Vec<f64>], slopes: &[Vec<f64>], t: f64, x: f64) -> f64 {
        let last = slices.len() - 1;
        let p = (t / self.dt).clamp(0.0, last as f64);
        let lo = (p.floor() as usize).min(last);
        let w = p - lo as f64;
        let dx = self.grid.dx();
        let a = eval_uniform(dx, &slices[lo], &slopes[lo], x);
        if w == 0.0 || lo == last {
            return a;
        }
        a + w * (eval_uniform(dx, &slices[lo + 1], &slopes[lo + 1], x) - a)
    }

    fn source(&self, slices: &[Vec<f64>], slopes: &[Vec<f64>], t: f64, m: f64) -> f64 {
        let p = self.params;
        let (lo, hi) = (p.tau_lower, p.tau_upper);
        let flow = &p.flow;
        let mut s = 0.0;
        let a0 = t.max(lo);
        if a0 < hi {
            let anc = flow.ancestor(t, m);
            let mut acc = 0.0;
            for (a, w) in self.gl.mapped(a0, hi) {
                let k = p.k_eval(m, a);
                if k != 0.0 {
                    acc += w * k * (self.data.gamma)(anc, a - t);
                }
            }
            if acc != 0.0 {
                s += 2.0 * p.attenuation(&p.gamma, t, flow.map().g_inv(m)) * acc;
            }
        }
        if t > lo && !p.beta.is_identically_zero() {
            let mut acc = 0.0;
            for (a, w) in self.gl.mapped(lo, t.min(hi)) {
                let z = p.zeta_unchecked(m, a);
                if z == 0.0 {
                    continue;
                }
                let anc = flow.ancestor(a, m);
                let v = self.lookup(slices, slopes, t - a, flow.coords().h(anc));
                acc += w * z * p.beta.flux(anc, v);
            }
            s += 2.0 * acc;
        }
        s
    }

    fn rhs(&self, slices: &[Vec<f64>], slopes: &[Vec<f64>], t: f64, m: f64, u: f64) -> f64 {
        let p = self.params;
        let decay = p.delta.eval(m) + p.flow.velocity().dv(m) + p.beta.eval(m, u);
        -decay * u + self.source(slices, slopes, t, m)
    }
}

/// Marches `[0, τ̄]` with step `τ̄ / ⌈τ̄ / dt⌉` and classical RK4 along each
/// grid characteristic.
pub fn solve_warmup(params: &ModelParams, grid: &Grid, data: &WarmupData, options: WarmupOptions) -> Result<InitialHistory> {
    let tau = params.tau_upper;
    let steps = (tau / grid.dt() - 1e-9).ceil().max(1.0) as usize;
    let dt = tau / steps as f64;
    let gl = GaussLegendre::new(AGE_NODES);
    let marcher = Marcher {
        params,
        grid,
        data,
        dt,
        gl,
    };
    let coords = params.flow.coords();
    let n = grid.len();
    let dx = grid.dx();
    let slope_of = |y: &[f64]| {
        let mut d = vec![0.0; y.len()];
        pchip_slopes_uniform(dx, y, &mut d);
        d
    };
    let first: Vec<f64> = grid.m().iter().map(|&m| (data.n0)(m)).collect();
    let mut slopes = vec![slope_of(&first)];
    let mut slices = vec![first];
    // Maturities at the two later RK4 stage points of every characteristic.
    let path = |j: usize, back: f64| -> (f64, f64) {
        let xj = grid.x()[j];
        if xj == 0.0 {
            return (0.0, 0.0);
        }
        let y = xj.ln() - back;
        (y.exp(), coords.m_of_ln_h(y))
    };
    let feet: Vec<(f64, f64, f64)> = (0..n)
        .map(|j| {
            let (xf, mf) = path(j, dt);
            let (_, mh) = path(j, 0.5 * dt);
            (xf, mf, mh)
        })
        .collect();

    for i in 0..steps {
        let t0 = i as f64 * dt;
        let th = t0 + 0.5 * dt;
        let t1 = t0 + dt;
        let prev = &slices[i];
        let prev_d = &slopes[i];
        let row: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let (xf, mf, mh) = feet[j];
                let m1 = grid.m()[j];
                let u0 = eval_uniform(dx, prev, prev_d, xf);
                let f = |t: f64, m: f64, u: f64| marcher.rhs(&slices, &slopes, t, m, u);
                let k1 = f(t0, mf, u0);
                let k2 = f(th, mh, u0 + 0.5 * dt * k1);
                let k3 = f(th, mh, u0 + 0.5 * dt * k2);
                let k4 = f(t1, m1, u0 + dt * k3);
                u0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            })
            .collect();
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Warmup(format!("non-finite density at t = {t1}, m = {}", grid.m()[bad])));
        }
        if options.check_nonnegative {
            let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if let Some(bad) = row.iter().position(|&v| v < -1e-12 * scale.max(f64::MIN_POSITIVE)) {
                return Err(Error::Warmup(format!(
                    "negative density {} at t = {t1}, m = {}",
                    row[bad],
                    grid.m()[bad]
                )));
            }
        }
        slopes.push(slope_of(&row));
        slices.push(row);
    }
    Ok(InitialHistory::gridded(GriddedHistory::new(dt, grid.x_max(), slices)?))
}
