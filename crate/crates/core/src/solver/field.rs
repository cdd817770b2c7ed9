use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::kernels::ModelParams;

use super::history::InitialHistory;
use super::{eval_uniform, Grid};

/// Per-window Picard record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStats {
    pub index: usize,
    pub t_start: f64,
    /// Window length actually solved (`steps · dt`).
    pub length: f64,
    pub iterations: usize,
    /// `sup |N_n − N_{n−1}|` for `n = 1, 2, ...`.
    pub deltas: Vec<f64>,
    /// `sup |N₀|` over the window.
    pub m_sup: f64,
    /// `max K` over the window.
    pub alpha_bar: f64,
    pub lipschitz: f64,
    /// `sup |N(t_w⁻) − N(t_w⁺)|` at the window start.
    pub junction_mismatch: f64,
}

/// Anything that can report `N(t, m)`.
pub trait DensityLookup: Sync {
    fn density(&self, t: f64, m: f64) -> Result<f64>;
}

impl<F: Fn(f64, f64) -> f64 + Sync> DensityLookup for F {
    fn density(&self, t: f64, m: f64) -> Result<f64> {
        Ok(self(t, m))
    }
}

/// `N` on `[0, T] × [0, g(1)]`: the datum `φ` on `[0, τ̄]` and solved
/// slices at `t_i = τ̄ + i·dt` beyond it.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub(crate) params: ModelParams,
    pub(crate) grid: Grid,
    pub(crate) history: InitialHistory,
    pub(crate) slices: Vec<Vec<f64>>,
    pub(crate) slopes: Vec<Vec<f64>>,
    pub(crate) horizon: f64,
    pub(crate) windows: Vec<WindowStats>,
}

impl SolutionField {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn history(&self) -> &InitialHistory {
        &self.history
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn windows(&self) -> &[WindowStats] {
        &self.windows
    }

    pub fn tau_upper(&self) -> f64 {
        self.params.tau_upper
    }

    /// Solved slices; slice `i` sits at [`time`](Self::time)`(i)`.
    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn time(&self, i: usize) -> f64 {
        self.params.tau_upper + i as f64 * self.grid.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.slices.len()).map(|i| self.time(i)).collect()
    }

    pub fn max_iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iterations).max().unwrap_or(0)
    }

    /// `sup_m |N(t_i, m)|` together with `t_i`, for every solved slice.
    pub fn sup_profile(&self) -> Vec<(f64, f64)> {
        self.slices
            .iter()
            .enumerate()
            .map(|(i, s)| (self.time(i), s.iter().fold(0.0f64, |a, v| a.max(v.abs()))))
            .collect()
    }

    /// `(min, max)` over all solved slices.
    pub fn extrema(&self) -> (f64, f64) {
        self.slices
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// `N(t, m)` for `t ∈ [0, T]`, `m ∈ [0, g(1)]`.
    pub fn lookup(&self, t: f64, m: f64) -> Result<f64> {
        if !(0.0..=self.params.g_one()).contains(&m) {
            return Err(domain("m", m, "[0, g(1)]"));
        }
        let x = self.params.flow.coords().h(m);
        self.lookup_mx(t, m, x)
    }

    pub(crate) fn lookup_mx(&self, t: f64, m: f64, x: f64) -> Result<f64> {
        let tau = self.params.tau_upper;
        if t <= tau {
            if t < 0.0 {
                return Err(Error::LookupOutOfWindow { t, lo: 0.0, hi: self.horizon });
            }
            return Ok(self.history.eval_mx(t, m, x));
        }
        let last = self.slices.len() - 1;
        let p = (t - tau) / self.grid.dt();
        if p > last as f64 + 1e-9 {
            return Err(Error::LookupOutOfWindow { t, lo: 0.0, hi: self.horizon });
        }
        let p = p.min(last as f64);
        let lo = (p.floor() as usize).min(last.saturating_sub(1));
        let w = p - lo as f64;
        let dx = self.grid.dx();
        let a = eval_uniform(dx, &self.slices[lo], &self.slopes[lo], x);
        if w == 0.0 || last == 0 {
            return Ok(a);
        }
        let b = eval_uniform(dx, &self.slices[lo + 1], &self.slopes[lo + 1], x);
        Ok(a + w * (b - a))
    }

    /// Rows `(t, N(t, m_j))` covering `[0, T]`: the datum sampled every `dt`
    /// below `τ̄`, then every solved slice.
    pub fn table(&self) -> Vec<(f64, Vec<f64>)> {
        let dt = self.grid.dt();
        let tau = self.params.tau_upper;
        let mut rows = Vec::new();
        let mut k = 0usize;
        loop {
            let t = k as f64 * dt;
            if t >= tau - 1e-12 * tau {
                break;
            }
            let row = self
                .grid
                .m()
                .iter()
                .zip(self.grid.x())
                .map(|(&m, &x)| self.history.eval_mx(t, m, x))
                .collect();
            rows.push((t, row));
            k += 1;
        }
        for (i, s) in self.slices.iter().enumerate() {
            rows.push((self.time(i), s.clone()));
        }
        rows
    }

    /// SHA-256 of the model description and grid.
    pub fn digest(&self) -> String {
        model_digest(&self.params, &self.grid)
    }
}

impl DensityLookup for SolutionField {
    fn density(&self, t: f64, m: f64) -> Result<f64> {
        self.lookup(t, m)
    }
}

pub fn model_digest(params: &ModelParams, grid: &Grid) -> String {
    let doc = json!({
        "model": params.describe(),
        "grid": { "m_nodes": grid.len(), "dt": grid.dt(), "steps_per_window": grid.steps_per_window() },
    });
    let bytes = serde_json::to_vec(&doc).unwrap_or_default();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
