//! Factorial envelope of the Picard iterates: the `n`-th recorded change
//! in a window is at most `M (ᾱ l)ⁿ Δtⁿ / n!`, with `M = sup |N₀|`,
//! `ᾱ = max K` and `Δt` the window length.

use serde::Serialize;

use crate::solver::{SolutionField, WindowStats};

use super::{aligned, Report, Verdict};

/// Slack allowed over the exact envelope for discretization.
pub const ENVELOPE_SLACK: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowEnvelope {
    pub index: usize,
    pub iterations: usize,
    pub m_sup: f64,
    pub alpha_bar: f64,
    pub lipschitz: f64,
    pub length: f64,
    pub deltas: Vec<f64>,
    pub bounds: Vec<f64>,
    /// `max_n Δₙ / bound_n` (0 for vanishing bounds and deltas).
    pub max_ratio: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardReport {
    pub slack: f64,
    pub windows: Vec<WindowEnvelope>,
    pub max_ratio: f64,
    pub max_iterations: usize,
    pub verdict: Verdict,
}

/// `M (ᾱ l Δt)ⁿ / n!` for `n = 1..=count`, built multiplicatively.
fn envelope(w: &WindowStats, count: usize) -> Vec<f64> {
    let rate = w.alpha_bar * w.lipschitz * w.length;
    let mut term = w.m_sup;
    (1..=count)
        .map(|n| {
            term *= rate / n as f64;
            term
        })
        .collect()
}

pub fn picard_rate_check(field: &SolutionField) -> PicardReport {
    let windows: Vec<WindowEnvelope> = field
        .windows()
        .iter()
        .map(|w| {
            let bounds = envelope(w, w.deltas.len());
            let mut max_ratio = 0.0f64;
            let mut violations = 0;
            for (&d, &b) in w.deltas.iter().zip(&bounds) {
                if d > ENVELOPE_SLACK * b {
                    violations += 1;
                }
                if b > 0.0 {
                    max_ratio = max_ratio.max(d / b);
                } else if d > 0.0 {
                    max_ratio = f64::INFINITY;
                }
            }
            WindowEnvelope {
                index: w.index,
                iterations: w.iterations,
                m_sup: w.m_sup,
                alpha_bar: w.alpha_bar,
                lipschitz: w.lipschitz,
                length: w.length,
                deltas: w.deltas.clone(),
                bounds,
                max_ratio,
                violations,
            }
        })
        .collect();
    let max_ratio = windows.iter().map(|w| w.max_ratio).fold(0.0f64, f64::max);
    let verdict = Verdict::from_bool(windows.iter().all(|w| w.violations == 0));
    PicardReport {
        slack: ENVELOPE_SLACK,
        max_iterations: field.max_iterations(),
        max_ratio,
        windows,
        verdict,
    }
}

impl Report for PicardReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn render_text(&self) -> String {
        let mut out = String::from("picard rate\nwindow  iters  M             alpha_bar     l             max delta/bound\n");
        for w in &self.windows {
            out.push_str(&format!(
                "{:<6}  {:<5}  {:<12.6e}  {:<12.6e}  {:<12.6e}  {:.3e}\n",
                w.index, w.iterations, w.m_sup, w.alpha_bar, w.lipschitz, w.max_ratio
            ));
        }
        out.push_str(&aligned(&[
            ("slack", format!("{}", self.slack)),
            ("max iterations", self.max_iterations.to_string()),
            ("max delta/bound", format!("{:.3e}", self.max_ratio)),
            ("verdict", self.verdict.to_string()),
        ]));
        out
    }
}
