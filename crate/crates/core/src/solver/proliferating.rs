//! Proliferating-phase density `P(t, m) = ∫_0^{τ̄} p(t, m, a) da` from the
//! characteristic solution of the age-structured equation:
//!
//! ```text
//! t ≤ τ̄:  P = ξ(m,t) ∫_0^{τ̄−t} Γ(π_{−t}m, a) da + ∫_0^t ξ(m,σ) f(t−σ, π_{−σ}m) dσ
//! t ≥ τ̄:  P = ∫_0^{τ̄} ξ(m,σ) f(t−σ, π_{−σ}m) dσ,      f = β(·,N) N
//! ```

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::functions::BivariateFn;
use crate::kernels::ModelParams;
use crate::quadrature::GaussLegendre;

use super::field::{DensityLookup, SolutionField};

/// Evaluates `P` at arbitrary `(t, m)`, `m ∈ [0, g(1)]`.
pub struct ProliferatingModel<'a> {
    params: &'a ModelParams,
    n: &'a dyn DensityLookup,
    gamma: Option<BivariateFn>,
    panel: f64,
    gl: GaussLegendre,
}

impl<'a> ProliferatingModel<'a> {
    /// `panel` is the width of the Gauss–Legendre panels in time; match it
    /// to the slice spacing of `n` so that every panel sees a smooth integrand.
    pub fn new(params: &'a ModelParams, n: &'a dyn DensityLookup, gamma: Option<BivariateFn>, panel: f64, nodes: usize) -> Self {
        Self {
            params,
            n,
            gamma,
            panel,
            gl: GaussLegendre::new(nodes),
        }
    }

    fn composite<F: FnMut(f64) -> Result<f64>>(&self, a: f64, b: f64, mut f: F) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        let panels = ((b - a) / self.panel - 1e-9).ceil().max(1.0) as usize;
        let width = (b - a) / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let lo = a + k as f64 * width;
            for (s, w) in self.gl.mapped(lo, lo + width) {
                total += w * f(s)?;
            }
        }
        Ok(total)
    }

    pub fn eval(&self, t: f64, m: f64) -> Result<f64> {
        let p = self.params;
        if !(0.0..=p.g_one()).contains(&m) {
            return Err(domain("m", m, "[0, g(1)]"));
        }
        if t < 0.0 {
            return Err(domain("t", t, "[0, inf)"));
        }
        let tau = p.tau_upper;
        let flow = &p.flow;
        let span = t.min(tau);
        let mut total = self.composite(0.0, span, |sigma| {
            let pm = flow.back(sigma, m);
            let v = self.n.density(t - sigma, pm)?;
            Ok(p.attenuation(&p.gamma, sigma, m) * p.beta.flux(pm, v))
        })?;
        if t < tau {
            if let Some(gamma) = &self.gamma {
                let pm = flow.back(t, m);
                let initial = self.composite(0.0, tau - t, |a| Ok(gamma(pm, a)))?;
                total += p.attenuation(&p.gamma, t, m) * initial;
            }
        }
        Ok(total)
    }
}

/// `P` on the node grid at every row of [`SolutionField::table`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProliferatingField {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Reconstructs `P` on `[0, T] × [0, g(1)]` from a solved `N` and the
/// initial proliferating density `Γ` (absent means `Γ ≡ 0`).
pub fn solve_proliferating(field: &SolutionField, gamma: Option<BivariateFn>) -> Result<ProliferatingField> {
    let params = field.params();
    let model = ProliferatingModel::new(params, field, gamma, field.grid().dt(), 2);
    let times: Vec<f64> = field.table().into_iter().map(|(t, _)| t).collect();
    let values = times
        .par_iter()
        .map(|&t| field.grid().m().iter().map(|&m| model.eval(t, m)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(ProliferatingField { times, values })
}
