//! Stem-cell determined uniqueness and its extinction corollary.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::{InitialHistory, SolutionField};

use super::tbar::{compute_tbar, TbarSequence};
use super::{aligned, sup_abs, Report, Setup, Verdict, TOL_MATCH};

/// `(t, value)` row of a time profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub b: f64,
    pub b_sequence: Vec<f64>,
    pub t_sequence: Vec<f64>,
    pub t_bar: f64,
    pub horizon: f64,
    /// `sup |φ₁|, |φ₂|` over the history; tolerances are relative to it.
    pub scale: f64,
    pub tol_match: f64,
    /// `sup_{m ≤ g(1)} |N₁ − N₂|` on every row of the run table.
    pub divergence_profile: Vec<ProfilePoint>,
    pub diff_at_tau_upper: f64,
    pub max_diff_after_t_bar: f64,
    /// Earliest row time after which the difference stays within tolerance.
    pub observed_sync_time: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionReport {
    pub b: f64,
    pub b_sequence: Vec<f64>,
    pub t_sequence: Vec<f64>,
    pub t_bar: f64,
    pub horizon: f64,
    pub scale: f64,
    pub tol_match: f64,
    /// `sup_m |N|` on every row of the run table.
    pub profile: Vec<ProfilePoint>,
    pub max_after_t_bar: f64,
    pub observed_extinction_time: Option<f64>,
    /// `sup_m |N(t̄, ·)|` of the control run, when one was given.
    pub control_at_t_bar: Option<f64>,
    pub control_survives: Option<bool>,
    pub verdict: Verdict,
}

fn row_profile(a: &SolutionField, b: Option<&SolutionField>) -> Vec<ProfilePoint> {
    let ta = a.table();
    match b {
        None => ta.iter().map(|(t, r)| ProfilePoint { t: *t, value: sup_abs(r) }).collect(),
        Some(b) => ta
            .iter()
            .zip(b.table())
            .map(|((t, ra), (_, rb))| ProfilePoint {
                t: *t,
                value: ra.iter().zip(&rb).fold(0.0f64, |s, (x, y)| s.max((x - y).abs())),
            })
            .collect(),
    }
}

/// `(max over rows with t ≥ t̄, earliest time from which all rows are ≤ limit)`.
fn tail_stats(profile: &[ProfilePoint], t_bar: f64, limit: f64) -> (f64, Option<f64>) {
    let after = profile
        .iter()
        .filter(|p| p.t >= t_bar - 1e-12)
        .fold(0.0f64, |a, p| a.max(p.value));
    let mut sync = None;
    for p in profile.iter().rev() {
        if p.value <= limit {
            sync = Some(p.t);
        } else {
            break;
        }
    }
    (after, sync)
}

fn value_at(profile: &[ProfilePoint], t: f64) -> f64 {
    profile
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .map_or(0.0, |p| p.value)
}

fn horizon(setup: &Setup, seq: &TbarSequence) -> f64 {
    seq.t_bar.max(setup.params.tau_upper) + 2.0 * setup.params.tau_upper
}

/// Solves from `φ₁` and `φ₂`, which must agree on `[0, τ̄] × [0, b]`, up to
/// `t̄ + 2τ̄`.
pub fn exp_uniqueness(setup: &Setup, phi1: &InitialHistory, phi2: &InitialHistory, b: f64) -> Result<UniquenessReport> {
    let seq = compute_tbar(&setup.params, b)?;
    let scale = setup.history_sup(phi1, f64::INFINITY).max(setup.history_sup(phi2, f64::INFINITY));
    let coords = setup.params.flow.coords();
    for t in setup.history_times() {
        for (&m, &x) in setup.grid.m().iter().zip(setup.grid.x()) {
            if m > b {
                break;
            }
            let (u, v) = (phi1.eval_mx(t, m, x), phi2.eval_mx(t, m, x));
            if (u - v).abs() > 1e-14 * scale {
                return Err(Error::Precondition(format!(
                    "histories differ at t = {t}, m = {m} <= b ({u} vs {v})"
                )));
            }
        }
        let (u, v) = (phi1.eval(coords, t, b), phi2.eval(coords, t, b));
        if (u - v).abs() > 1e-14 * scale {
            return Err(Error::Precondition(format!("histories differ at t = {t}, m = b ({u} vs {v})")));
        }
    }
    let horizon = horizon(setup, &seq);
    let (f1, f2) = rayon::join(|| setup.solve(phi1, horizon), || setup.solve(phi2, horizon));
    let (f1, f2) = (f1?, f2?);
    let profile = row_profile(&f1, Some(&f2));
    let limit = TOL_MATCH * scale;
    let (after, sync) = tail_stats(&profile, seq.t_bar, limit);
    Ok(UniquenessReport {
        b,
        diff_at_tau_upper: value_at(&profile, setup.params.tau_upper),
        b_sequence: seq.b_sequence,
        t_sequence: seq.t_sequence,
        t_bar: seq.t_bar,
        horizon: f1.horizon(),
        scale,
        tol_match: TOL_MATCH,
        divergence_profile: profile,
        max_diff_after_t_bar: after,
        observed_sync_time: sync,
        verdict: Verdict::from_bool(after <= limit),
    })
}

/// Solves from `φ`, which must vanish on `[0, τ̄] × [0, b]`, up to `t̄ + 2τ̄`.
/// A control history positive on `[0, b]` may be run alongside.
pub fn exp_extinction(setup: &Setup, phi: &InitialHistory, b: f64, control: Option<&InitialHistory>) -> Result<ExtinctionReport> {
    let seq = compute_tbar(&setup.params, b)?;
    if let Some((t, m)) = setup.history_find(phi, b, |v| v == 0.0) {
        return Err(Error::Precondition(format!("history is nonzero at t = {t}, m = {m} <= b")));
    }
    if setup.history_sup(phi, b) != 0.0 {
        return Err(Error::Precondition("history is nonzero at m = b".into()));
    }
    let scale = setup.history_sup(phi, f64::INFINITY);
    let horizon = horizon(setup, &seq);
    let (main, ctrl) = rayon::join(
        || setup.solve(phi, horizon),
        || control.map(|c| setup.solve(c, horizon)).transpose(),
    );
    let (main, ctrl) = (main?, ctrl?);
    let profile = row_profile(&main, None);
    let limit = TOL_MATCH * scale;
    let (after, extinct) = tail_stats(&profile, seq.t_bar, limit);
    let control_at_t_bar = ctrl.map(|c| value_at(&row_profile(&c, None), seq.t_bar));
    Ok(ExtinctionReport {
        b,
        b_sequence: seq.b_sequence,
        t_sequence: seq.t_sequence,
        t_bar: seq.t_bar,
        horizon: main.horizon(),
        scale,
        tol_match: TOL_MATCH,
        profile,
        max_after_t_bar: after,
        observed_extinction_time: extinct,
        control_survives: control_at_t_bar.map(|v| v > 1e-3 * scale),
        control_at_t_bar,
        verdict: Verdict::from_bool(after <= limit),
    })
}

fn seq_rows(b: f64, bs: &[f64], ts: &[f64], t_bar: f64) -> Vec<(&'static str, String)> {
    vec![
        ("b", format!("{b}")),
        ("b_n", format!("{bs:.6?}")),
        ("t_n", format!("{ts:.6?}")),
        ("t_bar", format!("{t_bar:.6}")),
    ]
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "never".into(), |t| format!("{t:.6}"))
}

impl Report for UniquenessReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        let mut rows = seq_rows(self.b, &self.b_sequence, &self.t_sequence, self.t_bar);
        rows.extend([
            ("horizon", format!("{:.6}", self.horizon)),
            ("scale", format!("{:.6e}", self.scale)),
            ("diff at tau_upper", format!("{:.3e}", self.diff_at_tau_upper)),
            ("max diff after t_bar", format!("{:.3e}", self.max_diff_after_t_bar)),
            ("observed sync time", fmt_opt(self.observed_sync_time)),
            ("verdict", self.verdict.to_string()),
        ]);
        format!("uniqueness\n{}", aligned(&rows))
    }
}

impl Report for ExtinctionReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        let mut rows = seq_rows(self.b, &self.b_sequence, &self.t_sequence, self.t_bar);
        rows.extend([
            ("horizon", format!("{:.6}", self.horizon)),
            ("scale", format!("{:.6e}", self.scale)),
            ("max sup|N| after t_bar", format!("{:.3e}", self.max_after_t_bar)),
            ("observed extinction", fmt_opt(self.observed_extinction_time)),
        ]);
        if let Some(c) = self.control_at_t_bar {
            rows.push(("control sup|N| at t_bar", format!("{c:.6e}")));
        }
        rows.push(("verdict", self.verdict.to_string()));
        format!("extinction\n{}", aligned(&rows))
    }
}
