//! Method-of-steps solver for the resting-phase density `N`, plus the
//! warmup producer of `φ`, the proliferating-phase reconstruction and
//! diagnostics.

mod band;
mod field;
mod history;
mod integrated;
mod picard;
mod proliferating;
mod residual;
mod warmup;

pub use band::{solve_band, BandField};
pub use field::{DensityLookup, SolutionField, WindowStats};
pub use history::{GriddedHistory, InitialHistory};
pub use integrated::{eval_g, eval_j};
pub use picard::Solver;
pub use proliferating::{solve_proliferating, ProliferatingField, ProliferatingModel};
pub use residual::{residual, residual_sup};
pub use warmup::{solve_warmup, WarmupData, WarmupOptions};

use crate::error::{Error, Result};
use crate::interp::hermite;
use crate::kernels::ModelParams;

/// Maturity grid uniform in the flow coordinate `x = h(m)` on
/// `[0, h(g(1))]`, with time step `dt = τ̲ / steps_per_window`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    x: Vec<f64>,
    m: Vec<f64>,
    dx: f64,
    dt: f64,
    steps_per_window: usize,
}

impl Grid {
    pub fn new(params: &ModelParams, m_nodes: usize, dt_divisor: usize) -> Result<Self> {
        if m_nodes < 4 {
            return Err(Error::Config(format!("grid.m_nodes must be >= 4, got {m_nodes}")));
        }
        if dt_divisor == 0 {
            return Err(Error::Config("grid.dt_divisor must be >= 1".into()));
        }
        let coords = params.flow.coords();
        let g1 = params.g_one();
        let x_max = coords.h(g1);
        if !(x_max > 0.0) {
            return Err(Error::Config(format!("h(g(1)) underflows ({x_max}); velocity too steep near 0")));
        }
        let dx = x_max / (m_nodes - 1) as f64;
        let x: Vec<f64> = (0..m_nodes)
            .map(|j| if j + 1 == m_nodes { x_max } else { j as f64 * dx })
            .collect();
        let mut m: Vec<f64> = x.iter().map(|&v| coords.h_inv(v)).collect();
        m[m_nodes - 1] = g1;
        if !m.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Config("maturity nodes are not strictly increasing; use fewer nodes".into()));
        }
        Ok(Self {
            x,
            m,
            dx,
            dt: params.tau_lower / dt_divisor as f64,
            steps_per_window: dt_divisor,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn steps_per_window(&self) -> usize {
        self.steps_per_window
    }

    pub(crate) fn stencil(&self, x: f64) -> Stencil {
        Stencil::new(self.dx, self.len(), x)
    }
}

/// Precomputed cubic Hermite weights for one evaluation point on a uniform
/// grid: `value = c₀ y_k + c₁ d_k + c₂ y_{k+1} + c₃ d_{k+1}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    k: u32,
    c: [f64; 4],
}

impl Stencil {
    pub(crate) fn new(dx: f64, n: usize, x: f64) -> Self {
        let pos = (x / dx).max(0.0);
        let mut k = pos.floor() as usize;
        if k > n - 2 {
            k = n - 2;
        }
        let t = (pos - k as f64).clamp(0.0, 1.0);
        let t2 = t * t;
        let t3 = t2 * t;
        Self {
            k: k as u32,
            c: [
                2.0 * t3 - 3.0 * t2 + 1.0,
                (t3 - 2.0 * t2 + t) * dx,
                -2.0 * t3 + 3.0 * t2,
                (t3 - t2) * dx,
            ],
        }
    }

    #[inline(always)]
    pub(crate) fn apply(&self, y: &[f64], d: &[f64]) -> f64 {
        let k = self.k as usize;
        self.c[0] * y[k] + self.c[1] * d[k] + self.c[2] * y[k + 1] + self.c[3] * d[k + 1]
    }
}

/// PCHIP evaluation of uniform samples `y` (slopes `d`, spacing `dx`) at `x`.
#[inline]
pub(crate) fn eval_uniform(dx: f64, y: &[f64], d: &[f64], x: f64) -> f64 {
    let n = y.len();
    let pos = (x / dx).max(0.0);
    let k = (pos.floor() as usize).min(n - 2);
    let t = (pos - k as f64).clamp(0.0, 1.0);
    hermite(y[k], y[k + 1], d[k], d[k + 1], dx, t)
}

/// Picard controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the sup-norm update is at most this fraction of `sup |N|`.
    pub tol_picard: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_picard: 1e-10,
            max_iterations: 50,
        }
    }
}

/// Number of Gauss–Legendre nodes in the age integral.
pub const AGE_NODES: usize = 16;
