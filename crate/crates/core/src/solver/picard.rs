//! Window-by-window Picard solve of the integrated formulation.
//!
//! Inside the window `[t_w, t_w + τ̲]`, with `r = t − s`,
//!
//! ```text
//! N(t,m) = N(t_w, π_{−(t−t_w)}m) K(t−t_w, m)
//!        + ∫_{t_w}^t K(r, m) [2 F(s, π_{−r}m) − (βN)(s, π_{−r}m)] ds
//! F(s,m) = ∫ ζ(m,a) (βN)(s−a, Δ(a,m)) da
//! ```
//!
//! which is the formulation from `τ̄` restarted at `t_w` through
//! `K(t+σ, m) = K(σ, m) K(t, π_{−σ}m)`. `F` only reads times `≤ t_w`, so it is
//! fixed during the iteration; only the `βN` term is iterated, always on
//! the previous iterate over the whole window.
//!
//! A sweep marches `N` itself by the same identity one step at a time
//! (trapezoid on each step, monotone cubic at the feet). Interpolating `N`
//! rather than separate birth and loss integrals keeps nonnegative data
//! nonnegative, and a sweep stays linear in the number of steps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::pchip_slopes_uniform;
use crate::kernels::ModelParams;
use crate::quadrature::GaussLegendre;

use super::field::{SolutionField, WindowStats};
use super::history::InitialHistory;
use super::{Grid, SolverOptions, Stencil, AGE_NODES};

type FootRow = (Vec<Stencil>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Precomputed characteristic geometry for one `(ModelParams, Grid)` pair.
#[derive(Debug, Clone)]
pub struct Solver {
    params: ModelParams,
    grid: Grid,
    options: SolverOptions,
    lipschitz: f64,
    birth: bool,
    n: usize,
    steps: usize,
    /// Index `r·n + j`: the point `x_j e^{−r dt}`.
    feet: Vec<Stencil>,
    foot_m: Vec<f64>,
    foot_x: Vec<f64>,
    /// `K(r dt, m_j)`, same indexing as `feet`.
    kt: Vec<f64>,
    /// Index `j·Q + q`: the ancestor `Δ(a_q, m_j)`.
    anc: Vec<Stencil>,
    anc_m: Vec<f64>,
    anc_x: Vec<f64>,
    /// `w_q ζ(m_j, a_q)`.
    anc_w: Vec<f64>,
    /// `a_q / dt`.
    age_offset: Vec<f64>,
}

impl Solver {
    pub fn new(params: &ModelParams, grid: &Grid, options: SolverOptions) -> Result<Self> {
        let lipschitz = params.lipschitz_l()?;
        let birth = !params.beta.is_identically_zero() && !params.k.is_identically_zero();
        let coords = params.flow.coords();
        let g1 = params.g_one();
        if birth && coords.ln_h(g1) + params.tau_lower < -1e-12 {
            return Err(Error::Config(format!(
                "model.tau_lower = {} is below -ln h(g(1)) = {}: ancestors of newborn cells would lie above g(1)",
                params.tau_lower,
                -coords.ln_h(g1)
            )));
        }
        if !(options.tol_picard > 0.0) || options.max_iterations == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        let n = grid.len();
        let steps = grid.steps_per_window();
        let dt = grid.dt();

        // Per step r: stencils, foot maturities, foot coordinates, K(r dt, ·).
        let per_r: Vec<FootRow> = (0..=steps)
            .into_par_iter()
            .map(|r| {
                let shift = r as f64 * dt;
                let mut st = Vec::with_capacity(n);
                let mut ms = Vec::with_capacity(n);
                let mut xs = Vec::with_capacity(n);
                let mut ks = Vec::with_capacity(n);
                for (&xj, &mj) in grid.x().iter().zip(grid.m()) {
                    let (x, m) = if r == 0 {
                        (xj, mj)
                    } else if xj == 0.0 {
                        (0.0, 0.0)
                    } else {
                        let y = xj.ln() - shift;
                        (y.exp(), coords.m_of_ln_h(y))
                    };
                    st.push(grid.stencil(x));
                    ms.push(m);
                    xs.push(x);
                    ks.push(params.attenuation(&params.delta, shift, mj));
                }
                (st, ms, xs, ks)
            })
            .collect();
        let mut feet = Vec::with_capacity((steps + 1) * n);
        let mut foot_m = Vec::with_capacity((steps + 1) * n);
        let mut foot_x = Vec::with_capacity((steps + 1) * n);
        let mut kt = Vec::with_capacity((steps + 1) * n);
        for (st, ms, xs, ks) in per_r {
            feet.extend(st);
            foot_m.extend(ms);
            foot_x.extend(xs);
            kt.extend(ks);
        }

        let gl = GaussLegendre::new(AGE_NODES);
        let ages: Vec<(f64, f64)> = gl.mapped(params.tau_lower, params.tau_upper).collect();
        let age_offset = ages.iter().map(|&(a, _)| a / dt).collect();
        let per_j: Vec<Vec<(Stencil, f64, f64, f64)>> = grid
            .m()
            .par_iter()
            .map(|&mj| {
                let base = coords.ln_h(params.flow.map().g_inv(mj));
                ages.iter()
                    .map(|&(a, w)| {
                        let y = base - a;
                        let x = y.exp();
                        let weight = if birth { w * params.zeta_unchecked(mj, a) } else { 0.0 };
                        (grid.stencil(x), coords.m_of_ln_h(y), x, weight)
                    })
                    .collect()
            })
            .collect();
        let mut anc = Vec::with_capacity(n * AGE_NODES);
        let mut anc_m = Vec::with_capacity(n * AGE_NODES);
        let mut anc_x = Vec::with_capacity(n * AGE_NODES);
        let mut anc_w = Vec::with_capacity(n * AGE_NODES);
        for row in per_j {
            for (s, m, x, w) in row {
                anc.push(s);
                anc_m.push(m);
                anc_x.push(x);
                anc_w.push(w);
            }
        }

        Ok(Self {
            params: params.clone(),
            grid: grid.clone(),
            options,
            lipschitz,
            birth,
            n,
            steps,
            feet,
            foot_m,
            foot_x,
            kt,
            anc,
            anc_m,
            anc_x,
            anc_w,
            age_offset,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn options(&self) -> SolverOptions {
        self.options
    }

    /// Solves on `[τ̄, T]` from the datum `φ`.
    pub fn solve(&self, history: &InitialHistory, horizon: f64) -> Result<SolutionField> {
        let tau = self.params.tau_upper;
        if !(horizon >= tau && horizon.is_finite()) {
            return Err(Error::Config(format!("run.horizon = {horizon} must be >= tau_upper = {tau}")));
        }
        let dt = self.grid.dt();
        let n_steps = ((horizon - tau) / dt - 1e-9).ceil().max(0.0) as usize;

        let first: Vec<f64> = self
            .grid
            .m()
            .iter()
            .zip(self.grid.x())
            .map(|(&m, &x)| history.eval_mx(tau, m, x))
            .collect();
        if first.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial history is not finite at t = tau_upper".into()));
        }
        let mut field = SolutionField {
            params: self.params.clone(),
            grid: self.grid.clone(),
            history: history.clone(),
            slopes: vec![self.slopes(&first)],
            slices: vec![first],
            horizon: tau + n_steps as f64 * dt,
            windows: Vec::new(),
        };

        let mut start = 0usize;
        let mut index = 0usize;
        while start < n_steps {
            let len = self.steps.min(n_steps - start);
            let rows = self.solve_window(&mut field, index, start, len)?;
            for row in rows {
                field.slopes.push(self.slopes(&row));
                field.slices.push(row);
            }
            start += len;
            index += 1;
        }
        debug_assert_eq!(field.slices.len(), n_steps + 1);
        Ok(field)
    }

    fn slopes(&self, y: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; y.len()];
        pchip_slopes_uniform(self.grid.dx(), y, &mut d);
        d
    }

    /// `N` at real slice index `p` (time `τ̄ + p dt`) at one ancestor point.
    #[inline]
    fn past(&self, field: &SolutionField, p: f64, idx: usize) -> f64 {
        if p <= 0.0 {
            let t = self.params.tau_upper + p * self.grid.dt();
            return field.history.eval_mx(t, self.anc_m[idx], self.anc_x[idx]);
        }
        let lo = p.floor() as usize;
        let w = p - lo as f64;
        let st = &self.anc[idx];
        let a = st.apply(&field.slices[lo], &field.slopes[lo]);
        if w == 0.0 {
            return a;
        }
        let hi = (lo + 1).min(field.slices.len() - 1);
        let b = st.apply(&field.slices[hi], &field.slopes[hi]);
        a + w * (b - a)
    }

    /// Birth source `F(t_i, m_j)` on every node.
    fn birth_row(&self, field: &SolutionField, i: usize) -> Vec<f64> {
        let q_len = self.age_offset.len();
        let beta = &self.params.beta;
        (0..self.n)
            .into_par_iter()
            .map(|j| {
                let mut acc = 0.0;
                for q in 0..q_len {
                    let idx = j * q_len + q;
                    let w = self.anc_w[idx];
                    if w == 0.0 {
                        continue;
                    }
                    let v = self.past(field, i as f64 - self.age_offset[q], idx);
                    acc += w * beta.flux(self.anc_m[idx], v);
                }
                acc
            })
            .collect()
    }

    /// One Picard sweep `N_n = Φ(N_{n−1})` over the window, marched by
    /// `N(L) = K N(L−1, foot) + dt/2 [K q(L−1, foot) + q(L)]`, `q = 2F − βN_{n−1}`.
    /// Interpolating `N` itself at the feet keeps nonnegative data nonnegative.
    /// `prev = None` drops the loss term.
    fn sweep(&self, base: &[f64], two_f: &[Vec<f64>], two_f_foot: &[Vec<f64>], prev: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
        let n = self.n;
        let len = two_f_foot.len();
        let half = 0.5 * self.grid.dt();
        let beta = &self.params.beta;
        let m = self.grid.m();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(len);
        for big_l in 1..=len {
            // N_n and N_{n−1} at the feet of row L−1; row 0 is the exact start.
            let (foot, foot_prev) = if big_l == 1 {
                let f: Vec<f64> = base[n..2 * n].to_vec();
                (f.clone(), f)
            } else {
                let row = &out[big_l - 2];
                let d = self.slopes(row);
                let f: Vec<f64> = (0..n).map(|j| self.feet[n + j].apply(row, &d)).collect();
                let fp = match prev {
                    Some(p) => {
                        let row = &p[big_l - 2];
                        let d = self.slopes(row);
                        (0..n).map(|j| self.feet[n + j].apply(row, &d)).collect()
                    }
                    None => vec![0.0; n],
                };
                (f, fp)
            };
            let row: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let k1 = self.kt[n + j];
                    let (mut q_foot, mut q) = (two_f_foot[big_l - 1][j], two_f[big_l][j]);
                    if let Some(p) = prev {
                        q_foot -= beta.flux(self.foot_m[n + j], foot_prev[j]);
                        q -= beta.flux(m[j], p[big_l - 1][j]);
                    }
                    k1 * foot[j] + half * (k1 * q_foot + q)
                })
                .collect();
            out.push(row);
        }
        out
    }

    fn solve_window(&self, field: &mut SolutionField, index: usize, start: usize, len: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.n;
        let tau = self.params.tau_upper;
        let beta = &self.params.beta;

        // N(t_w, x_j e^{−r dt}) for r = 0..=len.
        let base: Vec<f64> = (0..=len)
            .into_par_iter()
            .flat_map_iter(|r| {
                let off = r * n;
                let field = &*field;
                (0..n).map(move |j| {
                    if start == 0 {
                        field.history.eval_mx(tau, self.foot_m[off + j], self.foot_x[off + j])
                    } else {
                        self.feet[off + j].apply(&field.slices[start], &field.slopes[start])
                    }
                })
            })
            .collect();
        let junction_mismatch = (0..n)
            .map(|j| (base[j] - field.slices[start][j]).abs())
            .fold(0.0, f64::max);

        let transported: Vec<Vec<f64>> = (1..=len)
            .map(|l| (0..n).map(|j| base[l * n + j] * self.kt[l * n + j]).collect())
            .collect();
        let alpha_bar = self.kt[..(len + 1) * n].iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut stats = WindowStats {
            index,
            t_start: tau + start as f64 * self.grid.dt(),
            length: len as f64 * self.grid.dt(),
            iterations: 0,
            deltas: Vec::new(),
            m_sup: transported.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())),
            alpha_bar,
            lipschitz: self.lipschitz,
            junction_mismatch,
        };
        if beta.is_identically_zero() {
            // Pure transport from the start slice; a single exact sweep.
            stats.iterations = 1;
            stats.deltas.push(0.0);
            field.windows.push(stats);
            return Ok(transported);
        }

        // 2F on the nodes of every row and at the one-step feet of rows 0..len.
        let two_f: Vec<Vec<f64>> = (0..=len)
            .map(|l| {
                if self.birth {
                    self.birth_row(field, start + l).into_iter().map(|v| 2.0 * v).collect()
                } else {
                    vec![0.0; n]
                }
            })
            .collect();
        let two_f_foot: Vec<Vec<f64>> = two_f[..len]
            .iter()
            .map(|row| {
                let d = self.slopes(row);
                (0..n).map(|j| self.feet[n + j].apply(row, &d)).collect()
            })
            .collect();

        // N₀ is the sweep with the loss switched off.
        let mut cur = self.sweep(&base, &two_f, &two_f_foot, None);
        stats.m_sup = cur.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        loop {
            let next = self.sweep(&base, &two_f, &two_f_foot, Some(&cur));
            let mut delta = 0.0f64;
            let mut scale = 0.0f64;
            for (a, b) in next.iter().flatten().zip(cur.iter().flatten()) {
                delta = delta.max((a - b).abs());
                scale = scale.max(a.abs());
            }
            stats.iterations += 1;
            stats.deltas.push(delta);
            cur = next;
            if delta <= self.options.tol_picard * scale {
                break;
            }
            if !delta.is_finite() || stats.iterations >= self.options.max_iterations {
                return Err(Error::NonConvergence {
                    window: index,
                    iterations: stats.iterations,
                    last_delta: delta,
                });
            }
        }
        field.windows.push(stats);
        Ok(cur)
    }
}
