//! Executable checks of the model's structural results: the stem-cell
//! uniqueness horizon, extinction, the invariance bound, positivity, the
//! resolvent identity and the Picard rate.
//!
//! Every experiment returns a serializable report with a [`Verdict`] and an
//! aligned-text rendering.

mod invariance;
mod picard;
mod positivity;
mod random;
mod resolvent;
mod tbar;
mod uniqueness;

pub use invariance::{exp_invariance, InvarianceReport};
pub use picard::{picard_rate_check, PicardReport, WindowEnvelope};
pub use positivity::{exp_positivity, positivity_sweep, PositivityReport, PositivitySweep};
pub use random::{random_bump_above, random_history, random_smooth_function};
pub use resolvent::{resolvent_check, resolvent_sweep, resolvent_value, ResolventReport, ResolventSweep, RESOLVENT_SPAN};
pub use tbar::{compute_tbar, lambda_step, TbarSequence};
pub use uniqueness::{exp_extinction, exp_uniqueness, ExtinctionReport, ProfilePoint, UniquenessReport};

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::kernels::ModelParams;
use crate::solver::{Grid, InitialHistory, SolutionField, Solver, SolverOptions};

/// Relative agreement tolerance for the post-horizon checks.
pub const TOL_MATCH: f64 = 1e-6;

/// Outcome of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The hypothesis of the result does not hold; no claim is made.
    Skipped,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self != Verdict::Fail
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "skipped",
        })
    }
}

/// Common interface of the experiment reports.
pub trait Report: Serialize {
    fn verdict(&self) -> Verdict;
    /// Human-readable aligned-text summary.
    fn render_text(&self) -> String;
}

/// Model, grid and solver options shared by the solves of one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: ModelParams,
    pub grid: Grid,
    pub options: SolverOptions,
}

impl Setup {
    pub fn new(params: ModelParams, m_nodes: usize, dt_divisor: usize) -> Result<Self> {
        let grid = Grid::new(&params, m_nodes, dt_divisor)?;
        Ok(Self {
            params,
            grid,
            options: SolverOptions::default(),
        })
    }

    pub fn solver(&self) -> Result<Solver> {
        Solver::new(&self.params, &self.grid, self.options)
    }

    pub fn solve(&self, history: &InitialHistory, horizon: f64) -> Result<SolutionField> {
        self.solver()?.solve(history, horizon)
    }

    /// History sample times `k·dt` covering `[0, τ̄]`.
    fn history_times(&self) -> Vec<f64> {
        let tau = self.params.tau_upper;
        let steps = (tau / self.grid.dt() - 1e-9).ceil() as usize;
        (0..=steps).map(|k| (k as f64 * self.grid.dt()).min(tau)).collect()
    }

    /// `sup |φ|` over the history samples with `m ≤ bound`. The maturity
    /// `bound` itself is sampled too.
    fn history_sup(&self, history: &InitialHistory, bound: f64) -> f64 {
        let coords = self.params.flow.coords();
        let mut sup = 0.0f64;
        for t in self.history_times() {
            for (&m, &x) in self.grid.m().iter().zip(self.grid.x()) {
                if m <= bound {
                    sup = sup.max(history.eval_mx(t, m, x).abs());
                }
            }
            if bound < self.params.g_one() {
                sup = sup.max(history.eval(coords, t, bound).abs());
            }
        }
        sup
    }

    /// First history sample with `m ≤ bound` where `pred` fails, as `(t, m)`.
    fn history_find(&self, history: &InitialHistory, bound: f64, pred: impl Fn(f64) -> bool) -> Option<(f64, f64)> {
        for t in self.history_times() {
            for (&m, &x) in self.grid.m().iter().zip(self.grid.x()) {
                if m <= bound && !pred(history.eval_mx(t, m, x)) {
                    return Some((t, m));
                }
            }
        }
        None
    }
}

pub(crate) fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Two-column CSV of a profile, for external plotting.
pub fn profile_csv(header: (&str, &str), rows: &[(f64, f64)]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (a, b) in rows {
        let _ = writeln!(out, "{a:.16e},{b:.16e}");
    }
    out
}

/// `label  value` lines padded to a common width.
pub(crate) fn aligned(rows: &[(&str, String)]) -> String {
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<w$}  {v}");
    }
    out
}
