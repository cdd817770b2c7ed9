//! Resolvent of the transport generator: for `λ > 0`, `u + λ V u′ = w` on
//! `[0, g(1)]` has the unique bounded solution
//!
//! ```text
//! u(m) = (1/h_λ(m)) ∫_0^m w(s) h_λ(s) / (λ V(s)) ds,   h_λ(m) = exp(∫_{g(1)}^m ds/(λV)).
//! ```
//!
//! With `y = (ln h(m) − ln h(s)) / λ` this is `u(m) = ∫_0^∞ w(s(y)) e^{−y} dy`,
//! `s(y) = h⁻¹(h(m) e^{−λy})`, which is evaluated on `[0, RESOLVENT_SPAN]`.
//! Near `y = 0` the integrand varies on the scale `1/λ`, so the Gauss–Legendre
//! panels start at width `0.5/max(λ, 1)` and grow geometrically to `MAX_PANEL`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::functions::{golden_max, scan_extremum, Extremum};
use crate::quadrature::GaussLegendre;

use super::random::random_smooth_function;
use super::{aligned, Report, Verdict};

/// Truncation of the `y` integral; `e^{−40} ≈ 4e−18`.
pub const RESOLVENT_SPAN: f64 = 40.0;
const NODES: usize = 16;
const MAX_PANEL: f64 = 2.0;
const GROWTH: f64 = 1.3;
/// Samples per unit of `m/g(1)` for the supremum of `w` (refined by golden section).
const SUP_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventReport {
    pub lambda: f64,
    pub nodes: usize,
    pub sup_u: f64,
    pub sup_w: f64,
    /// `sup|u| ≤ sup|w| (1 + 1e−10)`.
    pub contraction: bool,
    /// `max |u + λVu′ − w|` over interior nodes.
    pub residual: f64,
    pub residual_ok: bool,
    pub u0: f64,
    pub w0: f64,
    pub origin_ok: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventSweep {
    pub count: usize,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub worst_contraction_ratio: f64,
    pub worst_relative_residual: f64,
    pub failures: usize,
    pub verdict: Verdict,
}

struct Resolvent<'a, W> {
    flow: &'a Flow,
    w: &'a W,
    lambda: f64,
    gl: GaussLegendre,
    panels: Vec<(f64, f64)>,
}

fn panels(lambda: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = 0.0;
    let mut width = 0.5 / lambda.max(1.0);
    while lo < RESOLVENT_SPAN {
        let hi = (lo + width).min(RESOLVENT_SPAN);
        out.push((lo, hi));
        lo = hi;
        width = (width * GROWTH).min(MAX_PANEL);
    }
    out
}

impl<W: Fn(f64) -> f64> Resolvent<'_, W> {
    fn u(&self, m: f64) -> f64 {
        if m == 0.0 {
            return (self.w)(0.0);
        }
        let coords = self.flow.coords();
        let base = coords.ln_h(m);
        let mut total = 0.0;
        for &(lo, hi) in &self.panels {
            for (y, wt) in self.gl.mapped(lo, hi) {
                let s = coords.m_of_ln_h(base - self.lambda * y);
                total += wt * (self.w)(s) * (-y).exp();
            }
        }
        total
    }
}

/// `u(m)` for a single maturity.
pub fn resolvent_value(flow: &Flow, w: &impl Fn(f64) -> f64, lambda: f64, m: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
    }
    if !(0.0..=flow.g_one()).contains(&m) {
        return Err(crate::error::domain("m", m, "[0, g(1)]"));
    }
    let r = Resolvent {
        flow,
        w,
        lambda,
        gl: GaussLegendre::new(NODES),
        panels: panels(lambda),
    };
    Ok(r.u(m))
}

/// `sup |w|` on `[0, g(1)]`: a dense scan refined around its maximiser.
fn sup_abs_on(w: &impl Fn(f64) -> f64, g1: f64) -> f64 {
    let (m, v) = scan_extremum(|m| w(m).abs(), 0.0, g1, SUP_SAMPLES, Extremum::Max);
    let step = g1 / SUP_SAMPLES as f64;
    let (_, refined) = golden_max(&|x: f64| w(x).abs(), (m - step).max(0.0), (m + step).min(g1), 1e-14 * g1);
    v.max(refined)
}

/// Evaluates `u` on `nodes` uniform maturities of `[0, g(1)]` and checks
/// contraction against the true `sup |w|`, the ODE residual at interior
/// nodes (five-point derivative) and `u(0) = w(0)`.
pub fn resolvent_check(flow: &Flow, w: &(impl Fn(f64) -> f64 + Sync), lambda: f64, nodes: usize) -> Result<ResolventReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
    }
    if nodes < 5 {
        return Err(Error::Config("resolvent check needs at least 5 nodes".into()));
    }
    let g1 = flow.g_one();
    let r = Resolvent {
        flow,
        w,
        lambda,
        gl: GaussLegendre::new(NODES),
        panels: panels(lambda),
    };
    let ms: Vec<f64> = (0..nodes).map(|j| g1 * j as f64 / (nodes - 1) as f64).collect();
    let us: Vec<f64> = ms.par_iter().map(|&m| r.u(m)).collect();
    let ws: Vec<f64> = ms.iter().map(|&m| w(m)).collect();
    let sup_u = us.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let sup_w = sup_abs_on(w, g1);
    // The quadrature error is smooth in m, so a small step only costs rounding;
    // it stays well inside one node spacing.
    let h = (2e-4 * g1).min(0.25 * g1 / (nodes - 1) as f64);
    let v = flow.velocity();
    let residual = (1..nodes - 1)
        .into_par_iter()
        .map(|j| {
            let m = ms[j];
            let du = (r.u(m - 2.0 * h) - 8.0 * r.u(m - h) + 8.0 * r.u(m + h) - r.u(m + 2.0 * h)) / (12.0 * h);
            (us[j] + lambda * v.v(m) * du - ws[j]).abs()
        })
        .reduce(|| 0.0, f64::max);
    let contraction = sup_u <= sup_w * (1.0 + 1e-10);
    let residual_ok = residual <= 1e-6 * sup_w;
    let origin_ok = (us[0] - ws[0]).abs() <= 1e-14 * sup_w.max(f64::MIN_POSITIVE);
    Ok(ResolventReport {
        lambda,
        nodes,
        sup_u,
        sup_w,
        contraction,
        residual,
        residual_ok,
        u0: us[0],
        w0: ws[0],
        origin_ok,
        verdict: Verdict::from_bool(contraction && residual_ok && origin_ok),
    })
}

/// [`resolvent_check`] on `count` random smooth `w` for every `λ`.
pub fn resolvent_sweep(flow: &Flow, count: usize, lambdas: &[f64], seed: u64, nodes: usize) -> Result<ResolventSweep> {
    let g1 = flow.g_one();
    let reports = (0..count as u64)
        .into_par_iter()
        .flat_map_iter(|k| {
            let w = random_smooth_function(seed + k, g1);
            lambdas
                .iter()
                .map(move |&l| resolvent_check(flow, &w, l, nodes))
                .collect::<Vec<_>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_c = reports.iter().map(|r| r.sup_u / r.sup_w).fold(0.0f64, f64::max);
    let worst_r = reports.iter().map(|r| r.residual / r.sup_w).fold(0.0f64, f64::max);
    let failures = reports.iter().filter(|r| r.verdict != Verdict::Pass).count();
    Ok(ResolventSweep {
        count,
        lambdas: lambdas.to_vec(),
        seed,
        worst_contraction_ratio: worst_c,
        worst_relative_residual: worst_r,
        failures,
        verdict: Verdict::from_bool(failures == 0),
    })
}

impl Report for ResolventReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        format!(
            "resolvent\n{}",
            aligned(&[
                ("lambda", format!("{}", self.lambda)),
                ("sup|u|", format!("{:.12e}", self.sup_u)),
                ("sup|w|", format!("{:.12e}", self.sup_w)),
                ("residual", format!("{:.3e}", self.residual)),
                ("u(0) - w(0)", format!("{:.3e}", self.u0 - self.w0)),
                ("verdict", self.verdict.to_string()),
            ])
        )
    }
}

impl Report for ResolventSweep {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        format!(
            "resolvent sweep\n{}",
            aligned(&[
                ("functions", self.count.to_string()),
                ("lambdas", format!("{:?}", self.lambdas)),
                ("seed", self.seed.to_string()),
                ("max sup|u|/sup|w|", format!("{:.12}", self.worst_contraction_ratio)),
                ("max residual/sup|w|", format!("{:.3e}", self.worst_relative_residual)),
                ("failures", self.failures.to_string()),
                ("verdict", self.verdict.to_string()),
            ])
        )
    }
}
