//! Direct evaluation of the operators `G` and `J` of the integrated
//! formulation from `τ̄`, independent of the windowed solver.

use crate::error::{domain, Result};
use crate::quadrature::GaussLegendre;

use crate::kernels::ModelParams;

use super::field::DensityLookup;
use super::AGE_NODES;

fn outer_steps(params: &ModelParams, dt: f64, t: f64) -> Result<(usize, f64)> {
    let tau = params.tau_upper;
    if !(t >= tau) {
        return Err(domain("t", t, "[tau_upper, T]"));
    }
    if !(dt > 0.0) {
        return Err(domain("dt", dt, "(0, inf)"));
    }
    let steps = ((t - tau) / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { (t - tau) / steps as f64 };
    Ok((steps, h))
}

/// `G(N)(t, m) = 2 ∫_{τ̄}^t K(t−s, m) ∫_{τ̲}^{τ̄} ζ(π, a) (βN)(s−a, Δ(a, π)) da ds`
/// with `π = π_{−(t−s)}(m)`; trapezoid in `s` with step at most `dt`,
/// 16-point Gauss–Legendre in `a`.
pub fn eval_g(p: &ModelParams, n: &dyn DensityLookup, dt: f64, t: f64, m: f64) -> Result<f64> {
    let (steps, h) = outer_steps(p, dt, t)?;
    if steps == 0 {
        return Ok(0.0);
    }
    if p.beta.is_identically_zero() || p.k.is_identically_zero() {
        return Ok(0.0);
    }
    let gl = GaussLegendre::new(AGE_NODES);
    let tau = p.tau_upper;
    let mut total = 0.0;
    for i in 0..=steps {
        let s = tau + i as f64 * h;
        let w = if i == 0 || i == steps { 0.5 * h } else { h };
        let pm = p.flow.back(t - s, m);
        let mut inner = 0.0;
        for (a, wa) in gl.mapped(p.tau_lower, p.tau_upper) {
            let z = p.zeta_unchecked(pm, a);
            if z == 0.0 {
                continue;
            }
            let anc = p.flow.ancestor(a, pm);
            let v = n.density(s - a, anc)?;
            inner += wa * z * p.beta.flux(anc, v);
        }
        total += w * p.attenuation(&p.delta, t - s, m) * inner;
    }
    Ok(2.0 * total)
}

/// `J(N)(t, m) = ∫_{τ̄}^t K(t−s, m) (βN)(s, π_{−(t−s)} m) ds`, trapezoid in `s`.
pub fn eval_j(p: &ModelParams, n: &dyn DensityLookup, dt: f64, t: f64, m: f64) -> Result<f64> {
    let (steps, h) = outer_steps(p, dt, t)?;
    if steps == 0 {
        return Ok(0.0);
    }
    let tau = p.tau_upper;
    let mut total = 0.0;
    for i in 0..=steps {
        let s = tau + i as f64 * h;
        let w = if i == 0 || i == steps { 0.5 * h } else { h };
        let pm = p.flow.back(t - s, m);
        let v = n.density(s, pm)?;
        total += w * p.attenuation(&p.delta, t - s, m) * p.beta.flux(pm, v);
    }
    Ok(total)
}
