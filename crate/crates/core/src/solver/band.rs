//! `N` on the band `m ∈ [g(1), 1]`, where no daughters are born:
//! transport with decay `δ + β(m, N)`, fed at `m = g(1)` by the main field.
//! The main field never reads the band. Inflow at `g(1)` is interpolated
//! cubically in time from the main field's last node.

use crate::error::{Error, Result};
use crate::interp::pchip_slopes_uniform;

use super::eval_uniform;
use super::field::SolutionField;

/// Band slices at the same times as the main field's solved slices.
#[derive(Debug, Clone, PartialEq)]
pub struct BandField {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
}

/// `N(t, g(1))` at real slice index `p ∈ [0, len−1]` by cubic Lagrange
/// interpolation of the node values at `g(1)`, one-sided near the ends.
fn inflow(field: &SolutionField, p: f64) -> f64 {
    let slices = field.slices();
    let last = slices.len() - 1;
    let top = field.grid().len() - 1;
    if last < 3 {
        let lo = (p.floor() as usize).min(last.saturating_sub(1));
        let w = p - lo as f64;
        let a = slices[lo][top];
        return if last == 0 { a } else { a + w * (slices[lo + 1][top] - a) };
    }
    let first = (p.floor() as isize - 1).clamp(0, last as isize - 3) as usize;
    (0..4)
        .map(|k| {
            let weight: f64 = (0..4)
                .filter(|&q| q != k)
                .map(|q| (p - (first + q) as f64) / (k as f64 - q as f64))
                .product();
            weight * slices[first + k][top]
        })
        .sum()
}

/// Solves the band from `initial(m) = N(τ̄, m)` on `[g(1), 1]`.
pub fn solve_band(field: &SolutionField, initial: impl Fn(f64) -> f64, nodes: usize) -> Result<BandField> {
    if nodes < 3 {
        return Err(Error::Config("band needs at least 3 nodes".into()));
    }
    let p = field.params();
    let coords = p.flow.coords();
    let g1 = p.g_one();
    let x0 = coords.h(g1);
    let dx = (1.0 - x0) / (nodes - 1) as f64;
    let x: Vec<f64> = (0..nodes).map(|k| if k + 1 == nodes { 1.0 } else { x0 + k as f64 * dx }).collect();
    let mut m: Vec<f64> = x.iter().map(|&v| coords.h_inv(v)).collect();
    m[0] = g1;
    let dt = field.grid().dt();
    let rate = |mm: f64, u: f64| -(p.delta.eval(mm) + p.flow.velocity().dv(mm) + p.beta.eval(mm, u)) * u;
    // RK4 for dU/dσ along the path ending at x_end, over backward span `span`.
    let along = |x_end: f64, span: f64, u0: f64| {
        let at = |back: f64| coords.m_of_ln_h(x_end.ln() - back);
        let (ma, mh, mb) = (at(span), at(0.5 * span), at(0.0));
        let k1 = rate(ma, u0);
        let k2 = rate(mh, u0 + 0.5 * span * k1);
        let k3 = rate(mh, u0 + 0.5 * span * k2);
        let k4 = rate(mb, u0 + span * k3);
        u0 + span / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut prev: Vec<f64> = m.iter().map(|&v| initial(v)).collect();
    let mut slices = vec![prev.clone()];
    let mut d = vec![0.0; nodes];
    for i in 1..field.slices().len() {
        pchip_slopes_uniform(dx, &prev, &mut d);
        let row: Vec<f64> = x
            .iter()
            .map(|&xk| {
                let foot = xk * (-dt).exp();
                if foot >= x0 {
                    let u0 = eval_uniform(dx, &prev, &d, foot - x0);
                    along(xk, dt, u0)
                } else {
                    let span = (xk / x0).ln();
                    along(xk, span, inflow(field, i as f64 - span / dt))
                }
            })
            .collect();
        slices.push(row.clone());
        prev = row;
    }
    Ok(BandField { x, m, slices })
}
