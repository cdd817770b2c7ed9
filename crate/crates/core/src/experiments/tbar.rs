//! The horizon `t̄` after which solutions agreeing on `[0, b]` coincide.
//!
//! `Λ` inverts `m ↦ Δ(τ̲, m)`. In flow coordinates `Δ(τ̲, m') = m` reads
//! `ln h(g⁻¹ m') = ln h(m) + τ̲`, so `Λ(m) = g(h⁻¹(h(m) e^{τ̲}))` while
//! `h(m) e^{τ̲} ≤ 1`, and `Λ(m) = g(1)` beyond.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::ModelParams;

/// `b₀ = b`, `b_{n+1} = Λ(b_n)` up to `b_{M+1} = g(1)`;
/// `t_n = ln(h(b_n)/h(b)) + n τ̄`, `t̄ = t_{M+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TbarSequence {
    pub b: f64,
    pub tau0: f64,
    pub b_sequence: Vec<f64>,
    pub t_sequence: Vec<f64>,
    /// Index `M` with `b_M < g(1) = b_{M+1}`.
    pub m_index: usize,
    pub t_bar: f64,
}

/// Relative distance to `g(1)` below which `Λ` snaps to `g(1)`.
const SNAP: f64 = 1e-12;

/// One step of `Λ`.
pub fn lambda_step(params: &ModelParams, m: f64) -> f64 {
    let coords = params.flow.coords();
    let map = params.flow.map();
    let g1 = params.g_one();
    let y = coords.ln_h(m) + params.tau_lower;
    if y >= 0.0 {
        return g1;
    }
    let next = map.g(coords.m_of_ln_h(y));
    if next >= g1 * (1.0 - SNAP) {
        g1
    } else {
        next
    }
}

pub fn compute_tbar(params: &ModelParams, b: f64) -> Result<TbarSequence> {
    let tau0 = params.flow.tau0()?;
    let lo = params.tau_lower;
    if !(lo > tau0) {
        return Err(Error::Precondition(format!("tau_lower = {lo} must exceed tau0 = {tau0}")));
    }
    let coords = params.flow.coords();
    let b_max = coords.m_of_ln_h(-lo);
    if !(b > 0.0 && b < b_max) {
        return Err(Error::Precondition(format!("b = {b} must lie in (0, h_inv(exp(-tau_lower))) = (0, {b_max})")));
    }
    let g1 = params.g_one();
    let ln_hb = coords.ln_h(b);
    let mut bs = vec![b];
    // τ̲ > τ₀ makes Λ(m) > m; the length cap guards degenerate custom maps.
    while *bs.last().unwrap() < g1 {
        let cur = *bs.last().unwrap();
        let next = lambda_step(params, cur);
        if !(next > cur) {
            return Err(Error::Precondition(format!("Lambda is not increasing at m = {cur}")));
        }
        bs.push(next);
        if bs.len() > 100_000 {
            return Err(Error::Precondition("b sequence does not reach g(1)".into()));
        }
    }
    let ts: Vec<f64> = bs
        .iter()
        .enumerate()
        .map(|(n, &bn)| coords.ln_h(bn) - ln_hb + n as f64 * params.tau_upper)
        .collect();
    let m_index = bs.len() - 2;
    Ok(TbarSequence {
        b,
        tau0,
        t_bar: ts[m_index + 1],
        b_sequence: bs,
        t_sequence: ts,
        m_index,
    })
}
