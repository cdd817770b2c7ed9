//! Invariance of the ball of radius `‖φ‖_b = sup_{[0,τ̄]×[0,b]} |φ|`.

use serde::Serialize;

use crate::error::Result;
use crate::kernels::InvarianceMargin;
use crate::solver::InitialHistory;

use super::tbar::compute_tbar;
use super::uniqueness::ProfilePoint;
use super::{aligned, sup_abs, Report, Setup, Verdict, TOL_MATCH};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub b: f64,
    pub margin: InvarianceMargin,
    /// Set when the margin condition fails and nothing was run.
    pub skipped: Option<String>,
    pub norm_b: f64,
    pub t_bar: Option<f64>,
    pub horizon: Option<f64>,
    /// `sup_m |N(t, m)| / ‖φ‖_b` on the solved slices.
    pub sup_ratio: Vec<ProfilePoint>,
    pub max_ratio_after_t_bar: Option<f64>,
    /// `sup_{m ≤ b} |N(t, m)| / ‖φ‖_b` over all solved slices.
    pub max_ratio_below_b: Option<f64>,
    /// The bound on `[0, b]` for every `t ≥ τ̄`.
    pub proposition_holds: Option<bool>,
    pub verdict: Verdict,
}

/// Checks `|N^φ(t, m)| ≤ ‖φ‖_b` for `t ≥ t̄` when the margin condition
/// holds; otherwise reports a skip.
pub fn exp_invariance(setup: &Setup, phi: &InitialHistory, b: f64) -> Result<InvarianceReport> {
    let margin = setup.params.invariance_margin()?;
    if !margin.satisfied() {
        return Ok(InvarianceReport {
            b,
            margin,
            skipped: Some("condition not met".into()),
            norm_b: setup.history_sup(phi, b),
            t_bar: None,
            horizon: None,
            sup_ratio: Vec::new(),
            max_ratio_after_t_bar: None,
            max_ratio_below_b: None,
            proposition_holds: None,
            verdict: Verdict::Skipped,
        });
    }
    let seq = compute_tbar(&setup.params, b)?;
    let norm_b = setup.history_sup(phi, b);
    let horizon = seq.t_bar.max(setup.params.tau_upper) + 2.0 * setup.params.tau_upper;
    let field = setup.solve(phi, horizon)?;
    let denom = if norm_b > 0.0 { norm_b } else { 1.0 };
    let below: Vec<bool> = setup.grid.m().iter().map(|&m| m <= b).collect();
    let mut sup_ratio = Vec::with_capacity(field.slices().len());
    let mut below_max = 0.0f64;
    for (i, s) in field.slices().iter().enumerate() {
        sup_ratio.push(ProfilePoint {
            t: field.time(i),
            value: sup_abs(s) / denom,
        });
        let low = s.iter().zip(&below).filter(|(_, &k)| k).fold(0.0f64, |a, (v, _)| a.max(v.abs()));
        below_max = below_max.max(low / denom);
    }
    let after = sup_ratio
        .iter()
        .filter(|p| p.t >= seq.t_bar - 1e-12)
        .fold(0.0f64, |a, p| a.max(p.value));
    let bound = 1.0 + TOL_MATCH;
    Ok(InvarianceReport {
        b,
        margin,
        skipped: None,
        norm_b,
        t_bar: Some(seq.t_bar),
        horizon: Some(field.horizon()),
        sup_ratio,
        max_ratio_after_t_bar: Some(after),
        max_ratio_below_b: Some(below_max),
        proposition_holds: Some(below_max <= bound),
        verdict: Verdict::from_bool(after <= bound),
    })
}

impl Report for InvarianceReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        let m = &self.margin;
        let mut rows = vec![
            ("b", format!("{}", self.b)),
            ("l", format!("{:.6e}", m.l)),
            ("I", format!("{:.6e}", m.i)),
            ("zeta_tilde", format!("{:.6e}", m.zeta_tilde)),
            ("l(2(tau_upper-tau_lower)zeta_tilde+1)", format!("{:.6e}", m.lhs)),
            ("norm_b", format!("{:.6e}", self.norm_b)),
        ];
        if let (Some(t), Some(r), Some(q)) = (self.t_bar, self.max_ratio_after_t_bar, self.max_ratio_below_b) {
            rows.push(("t_bar", format!("{t:.6}")));
            rows.push(("max ratio after t_bar", format!("{r:.9}")));
            rows.push(("max ratio on [0, b]", format!("{q:.9}")));
        }
        rows.push(("verdict", self.verdict.to_string()));
        let mut out = format!("invariance\n{}", aligned(&rows));
        if let Some(reason) = &self.skipped {
            out.push_str(&format!("skipped: {reason}\n"));
        }
        out
    }
}
