//! Nonnegative data produce nonnegative solutions when `δ + V′ > 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{scan_extremum, Extremum};
use crate::solver::InitialHistory;

use super::random::random_history;
use super::{aligned, Report, Setup, Verdict};

/// Allowed undershoot relative to `max N`.
const UNDERSHOOT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub seed: Option<u64>,
    pub horizon: f64,
    pub min: f64,
    pub max: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivitySweep {
    pub runs: Vec<PositivityReport>,
    pub worst_relative_min: f64,
    pub verdict: Verdict,
}

fn check_hypothesis(setup: &Setup) -> Result<()> {
    let p = &setup.params;
    let v = p.flow.velocity();
    let (_, i) = scan_extremum(|m| p.delta.eval(m) + v.dv(m), 0.0, p.g_one(), 1024, Extremum::Min);
    if !(i > 0.0) {
        return Err(Error::Precondition(format!("delta + V' must be positive on [0, g(1)] (inf {i})")));
    }
    Ok(())
}

/// Solves from `φ ≥ 0` on `[0, T]` and checks `min N ≥ −1e−8 max N`.
pub fn exp_positivity(setup: &Setup, phi: &InitialHistory, horizon: f64) -> Result<PositivityReport> {
    check_hypothesis(setup)?;
    if let Some((t, m)) = setup.history_find(phi, f64::INFINITY, |v| v >= 0.0) {
        return Err(Error::Precondition(format!("history is negative at t = {t}, m = {m}")));
    }
    run(setup, phi, horizon, None)
}

fn run(setup: &Setup, phi: &InitialHistory, horizon: f64, seed: Option<u64>) -> Result<PositivityReport> {
    let field = setup.solve(phi, horizon)?;
    let (lo, hi) = field.extrema();
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    Ok(PositivityReport {
        seed,
        horizon: field.horizon(),
        min: lo,
        max: hi,
        verdict: Verdict::from_bool(lo >= -UNDERSHOOT * hi),
    })
}

/// [`exp_positivity`] on `count` random histories with seeds
/// `seed, seed + 1, ...`, solved in parallel.
pub fn positivity_sweep(setup: &Setup, count: usize, seed: u64, horizon: f64) -> Result<PositivitySweep> {
    check_hypothesis(setup)?;
    let runs = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let phi = random_history(seed + k);
            if let Some((t, m)) = setup.history_find(&phi, f64::INFINITY, |v| v >= 0.0) {
                return Err(Error::Precondition(format!("generated history is negative at t = {t}, m = {m}")));
            }
            run(setup, &phi, horizon, Some(seed + k))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = runs
        .iter()
        .map(|r| if r.max > 0.0 { r.min / r.max } else { 0.0 })
        .fold(0.0f64, f64::min);
    let verdict = Verdict::from_bool(runs.iter().all(|r| r.verdict == Verdict::Pass));
    Ok(PositivitySweep {
        runs,
        worst_relative_min: worst,
        verdict,
    })
}

impl Report for PositivityReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        let mut rows = vec![
            ("horizon", format!("{:.6}", self.horizon)),
            ("min N", format!("{:.6e}", self.min)),
            ("max N", format!("{:.6e}", self.max)),
            ("verdict", self.verdict.to_string()),
        ];
        if let Some(s) = self.seed {
            rows.insert(0, ("seed", s.to_string()));
        }
        format!("positivity\n{}", aligned(&rows))
    }
}

impl Report for PositivitySweep {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        let mut out = String::from("positivity sweep\nseed        min N           max N           verdict\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{:<10}  {:<14.6e}  {:<14.6e}  {}\n",
                r.seed.unwrap_or(0),
                r.min,
                r.max,
                r.verdict
            ));
        }
        out.push_str(&aligned(&[
            ("worst min/max", format!("{:.3e}", self.worst_relative_min)),
            ("verdict", self.verdict.to_string()),
        ]));
        out
    }
}
