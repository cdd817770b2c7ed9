//! Seeded generators of test data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::solver::InitialHistory;

/// A smooth nonnegative history: a random sum of shifted sines in `(t, m)`,
/// plus a nonnegative floor, with a random zero patch.
pub fn random_history(seed: u64) -> InitialHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = rng.random_range(0.0..0.5);
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(0.5..15.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    // Cells on [lo, hi] are removed smoothly, so φ touches zero there.
    let lo = rng.random_range(0.0..0.4);
    let hi = lo + rng.random_range(0.02..0.1);
    InitialHistory::function(move |t, m| {
        let wave: f64 = modes.iter().map(|&(a, k, w, p)| a * (1.0 + (k * m + w * t + p).sin())).sum();
        let d = if m < lo {
            lo - m
        } else if m > hi {
            m - hi
        } else {
            0.0
        };
        let cut = (d / 0.05).min(1.0);
        (floor + wave) * cut * cut
    })
}

/// A random bump on `(b, g₁]`, vanishing on `[0, b]`, constant in time.
pub fn random_bump_above(seed: u64, b: f64, g1: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = rng.random_range(0.2..3.0);
    let centre = rng.random_range(b..g1);
    let width = rng.random_range(0.02..0.2);
    move |m: f64| {
        if m <= b {
            return 0.0;
        }
        let ramp = ((m - b) / 0.01).min(1.0);
        amp * ramp * (-((m - centre) / width).powi(2)).exp()
    }
}

/// A smooth function on `[0, g₁]`: constant plus five random Fourier modes.
pub fn random_smooth_function(seed: u64, g1: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = rng.random_range(-1.0..1.0);
    let modes: Vec<(f64, f64)> = (1..=5)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    move |m: f64| {
        let u = std::f64::consts::PI * m / g1;
        c0 + modes
            .iter()
            .enumerate()
            .map(|(k, &(a, p))| a * ((k + 1) as f64 * u + p).sin())
            .sum::<f64>()
    }
}
