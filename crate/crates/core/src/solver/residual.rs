//! A-posteriori defect of the differential form
//! `∂_t N + ∂_m(VN) + (δ + β) N − 2 ∫ ζ(m,a) (βN)(t−a, Δ(a,m)) da`.

use crate::error::{domain, Result};
use crate::quadrature::GaussLegendre;

use super::field::SolutionField;
use super::AGE_NODES;

/// Five-point central derivative from samples at offsets `−2, −1, 1, 2`.
#[inline]
fn central(f: impl Fn(isize) -> f64, h: f64) -> f64 {
    (f(-2) - 8.0 * f(-1) + 8.0 * f(1) - f(2)) / (12.0 * h)
}

/// Defect at solved slice `i` and node `j`, both at least two steps from
/// the ends.
///
/// Derivatives are fourth-order central differences, so at smooth points
/// the defect measures the solution error rather than the stencil.
/// `∂_m` is taken in the flow coordinate: `∂_m(VN) = (h/V) ∂_x(VN)`.
pub fn residual(field: &SolutionField, i: usize, j: usize) -> Result<f64> {
    let slices = field.slices();
    let grid = field.grid();
    if i < 2 || i + 2 >= slices.len() {
        return Err(domain("slice", i as f64, "interior slices"));
    }
    if j < 2 || j + 2 >= grid.len() {
        return Err(domain("node", j as f64, "interior nodes"));
    }
    let p = field.params();
    let v = p.flow.velocity();
    let m = grid.m();
    let dt = grid.dt();
    let dx = grid.dx();
    let n = slices[i][j];
    let dn_dt = central(|k| slices[(i as isize + k) as usize][j], dt);
    let row = &slices[i];
    let flux = |k: isize| {
        let q = (j as isize + k) as usize;
        v.v(m[q]) * row[q]
    };
    let dvn = grid.x()[j] / v.v(m[j]) * central(flux, dx);
    let t = field.time(i);
    let mut birth = 0.0;
    if !p.beta.is_identically_zero() {
        let gl = GaussLegendre::new(AGE_NODES);
        for (a, w) in gl.mapped(p.tau_lower, p.tau_upper) {
            let z = p.zeta_unchecked(m[j], a);
            if z == 0.0 {
                continue;
            }
            let anc = p.flow.ancestor(a, m[j]);
            birth += w * z * p.beta.flux(anc, field.lookup(t - a, anc)?);
        }
    }
    Ok(dn_dt + dvn + (p.delta.eval(m[j]) + p.beta.eval(m[j], n)) * n - 2.0 * birth)
}

/// `max |residual|` over interior nodes and the solved slices with
/// `t_lo ≤ t_i ≤ t_hi`.
pub fn residual_sup(field: &SolutionField, t_lo: f64, t_hi: f64) -> Result<f64> {
    let last = field.slices().len();
    let mut sup = 0.0f64;
    for i in 2..last.saturating_sub(2) {
        let t = field.time(i);
        if t < t_lo - 1e-12 || t > t_hi + 1e-12 {
            continue;
        }
        for j in 2..field.grid().len() - 2 {
            sup = sup.max(residual(field, i, j)?.abs());
        }
    }
    Ok(sup)
}
