use hemosim::solver::{
    eval_g, eval_j, residual, residual_sup, solve_band, solve_proliferating, solve_warmup, ProliferatingModel, WarmupData,
    WarmupOptions,
};
use hemosim::*;
use proptest::prelude::*;

fn flow(alpha: f64, c: f64) -> Flow {
    Flow::new(VelocityModel::power_law(alpha, 1.0), MaturityMap::linear(c)).unwrap()
}

fn linear_params(alpha: f64, d: f64) -> ModelParams {
    ModelParams::new(
        flow(alpha, 0.5),
        d.into(),
        0.05.into(),
        ReintroductionLaw::zero(),
        DivisionKernel::uniform(20.0),
        1.0,
        2.0,
    )
    .unwrap()
}

fn nonlinear_params(kappa: f64, beta0: f64) -> ModelParams {
    ModelParams::new(
        flow(1.0, 0.5),
        0.05.into(),
        0.05.into(),
        ReintroductionLaw::hill(beta0, 1.0, 2.0),
        DivisionKernel::uniform(kappa),
        1.0,
        2.0,
    )
    .unwrap()
}

fn reference_history() -> InitialHistory {
    InitialHistory::function(|t, m| 1.0 + 0.5 * (3.0 * m).sin() + 0.1 * t)
}

fn solve(params: &ModelParams, nodes: usize, div: usize, history: &InitialHistory, horizon: f64) -> SolutionField {
    let grid = Grid::new(params, nodes, div).unwrap();
    Solver::new(params, &grid, SolverOptions::default())
        .unwrap()
        .solve(history, horizon)
        .unwrap()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

#[test]
fn zero_history_stays_zero_in_one_sweep() {
    let p = nonlinear_params(20.0, 0.5);
    let field = solve(&p, 64, 16, &InitialHistory::zero(), 3.0 * p.tau_upper);
    assert!(field.slices().iter().flatten().all(|&v| v == 0.0));
    assert!(field.windows().iter().all(|w| w.iterations == 1));
    assert_eq!(field.windows().len(), 4);
}

#[test]
fn transport_decay_matches_closed_form() {
    let (alpha, d) = (1.0, 0.3);
    let p = linear_params(alpha, d);
    let field = solve(&p, 128, 16, &InitialHistory::function(|_, m| m), 5.0 * p.tau_upper);
    assert!(field.windows().iter().all(|w| w.iterations == 1));
    let tau = p.tau_upper;
    for (i, row) in field.slices().iter().enumerate() {
        let r = field.time(i) - tau;
        for (&m, &v) in field.grid().m().iter().zip(row) {
            let exact = m * (-alpha * r).exp() * (-(d + alpha) * r).exp();
            assert!((v - exact).abs() <= 1e-8 * exact.abs().max(1e-300), "t = {}, m = {m}: {v} vs {exact}", field.time(i));
        }
    }
}

#[test]
fn transport_decay_with_curved_history() {
    let p = linear_params(2.0, 0.1);
    let phi = |m: f64| 1.0 + 0.5 * (3.0 * m).sin();
    let field = solve(&p, 512, 64, &InitialHistory::function(move |_, m| phi(m)), 5.0 * p.tau_upper);
    let tau = p.tau_upper;
    let mut worst = 0.0f64;
    for (i, row) in field.slices().iter().enumerate() {
        let r = field.time(i) - tau;
        for (&m, &v) in field.grid().m().iter().zip(row) {
            let exact = phi(p.flow.back(r, m)) * p.kernel_k(r, m).unwrap();
            worst = worst.max((v - exact).abs() / exact.abs());
        }
    }
    assert!(worst < 1e-7, "{worst}");
}

#[test]
fn window_stats_are_recorded() {
    let p = nonlinear_params(20.0, 0.5);
    let field = solve(&p, 128, 32, &reference_history(), 6.0);
    assert_eq!(field.windows().len(), 4);
    for (k, w) in field.windows().iter().enumerate() {
        assert_eq!(w.index, k);
        assert!((w.t_start - (2.0 + k as f64)).abs() < 1e-12);
        assert_eq!(w.deltas.len(), w.iterations);
        assert!(w.iterations <= 10);
        assert!(w.junction_mismatch <= 1e-9 * w.m_sup);
        assert!(w.alpha_bar <= 1.0 && w.alpha_bar > 0.0);
        assert_eq!(w.lipschitz, 0.5);
    }
    assert_eq!(field.slices().len(), 4 * 32 + 1);
    assert!((field.horizon() - 6.0).abs() < 1e-12);
}

#[test]
fn partial_last_window() {
    let p = nonlinear_params(20.0, 0.5);
    let field = solve(&p, 64, 8, &reference_history(), 3.3);
    let last = field.windows().last().unwrap();
    // 11 steps of 1/8 cover 1.3: one full window and three steps.
    assert_eq!(field.windows().len(), 2);
    assert!((last.length - 0.375).abs() < 1e-12);
    assert!((field.horizon() - 3.375).abs() < 1e-12);
}

#[test]
fn rejects_bad_horizon_and_grid() {
    let p = nonlinear_params(20.0, 0.5);
    let grid = Grid::new(&p, 64, 8).unwrap();
    let s = Solver::new(&p, &grid, SolverOptions::default()).unwrap();
    assert!(matches!(s.solve(&reference_history(), 1.0), Err(Error::Config(_))));
    assert!(matches!(Grid::new(&p, 2, 8), Err(Error::Config(_))));
    assert!(matches!(Grid::new(&p, 64, 0), Err(Error::Config(_))));
    let tight = SolverOptions {
        tol_picard: 1e-10,
        max_iterations: 2,
    };
    let s = Solver::new(&p, &grid, tight).unwrap();
    match s.solve(&reference_history(), 4.0) {
        Err(Error::NonConvergence { window, iterations, last_delta }) => {
            assert_eq!(window, 0);
            assert_eq!(iterations, 2);
            assert!(last_delta > 0.0);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn ancestry_range_is_checked_when_births_are_active() {
    // -ln h(g(1)) = ln 2 for α = 1, c = 1/2.
    let mk = |beta: ReintroductionLaw| {
        ModelParams::new(flow(1.0, 0.5), 0.05.into(), 0.05.into(), beta, DivisionKernel::uniform(1.0), 0.5, 1.0).unwrap()
    };
    let p = mk(ReintroductionLaw::hill(0.5, 1.0, 2.0));
    let grid = Grid::new(&p, 64, 8).unwrap();
    assert!(matches!(Solver::new(&p, &grid, SolverOptions::default()), Err(Error::Config(_))));
    let p = mk(ReintroductionLaw::zero());
    let grid = Grid::new(&p, 64, 8).unwrap();
    assert!(Solver::new(&p, &grid, SolverOptions::default()).is_ok());
}

#[test]
fn determinism_is_bitwise() {
    let p = nonlinear_params(20.0, 0.5);
    let a = solve(&p, 128, 16, &reference_history(), 6.0);
    let b = solve(&p, 128, 16, &reference_history(), 6.0);
    assert_eq!(a.slices(), b.slices());
    assert_eq!(a.windows(), b.windows());
    assert_eq!(a.digest(), b.digest());
}

#[test]
fn windowed_solve_satisfies_the_integrated_formulation() {
    let p = nonlinear_params(20.0, 0.5);
    let h = reference_history();
    let field = solve(&p, 512, 64, &h, 5.0);
    let dt = field.grid().dt();
    let tau = p.tau_upper;
    let scale = sup(field.slices().last().unwrap());
    for &t in &[2.5, 3.0, 4.25, 5.0] {
        for &m in &[0.01, 0.1, 0.25, 0.4, 0.49] {
            let r = t - tau;
            let n0 = h.eval(p.flow.coords(), tau, p.flow.back(r, m)) * p.kernel_k(r, m).unwrap();
            let g = eval_g(&p, &field, dt, t, m).unwrap();
            let j = eval_j(&p, &field, dt, t, m).unwrap();
            let n = field.lookup(t, m).unwrap();
            assert!((n - (n0 + g - j)).abs() < 1e-3 * scale, "t = {t}, m = {m}: {n} vs {}", n0 + g - j);
        }
    }
}

#[test]
fn integral_operators_degenerate_cases() {
    let p = nonlinear_params(20.0, 0.5);
    let one = |_: f64, _: f64| 1.0;
    assert_eq!(eval_g(&p, &one, 0.01, 2.0, 0.3).unwrap(), 0.0);
    assert_eq!(eval_j(&p, &one, 0.01, 2.0, 0.3).unwrap(), 0.0);
    assert!(eval_g(&p, &one, 0.01, 1.5, 0.3).is_err());
    let no_beta = linear_params(1.0, 0.1);
    assert_eq!(eval_g(&no_beta, &one, 0.01, 3.0, 0.3).unwrap(), 0.0);
    assert_eq!(eval_j(&no_beta, &one, 0.01, 3.0, 0.3).unwrap(), 0.0);
    let no_k = ModelParams::new(
        flow(1.0, 0.5),
        0.05.into(),
        0.05.into(),
        ReintroductionLaw::hill(0.5, 1.0, 2.0),
        DivisionKernel::zero(),
        1.0,
        2.0,
    )
    .unwrap();
    assert_eq!(eval_g(&no_k, &one, 0.01, 3.0, 0.3).unwrap(), 0.0);
}

#[test]
fn eval_j_constant_oracle() {
    let (b, c, d, alpha) = (0.7, 1.3, 0.2, 1.5);
    let p = ModelParams::new(
        flow(alpha, 0.5),
        d.into(),
        0.05.into(),
        ReintroductionLaw::Constant(b.into()),
        DivisionKernel::uniform(1.0),
        1.0,
        2.0,
    )
    .unwrap();
    let r = d + alpha;
    let constant = move |_: f64, _: f64| c;
    for &t in &[2.1, 3.0, 4.5] {
        let exact = b * c * (1.0 - (-r * (t - 2.0)).exp()) / r;
        let got = eval_j(&p, &constant, 1e-3, t, 0.3).unwrap();
        assert!((got - exact).abs() < 1e-6 * exact, "{got} vs {exact}");
    }
}

#[test]
fn warmup_zero_data_gives_zero() {
    let p = nonlinear_params(20.0, 0.5);
    let grid = Grid::new(&p, 64, 16).unwrap();
    let data = WarmupData::new(|_, _| 0.0, |_| 0.0);
    let h = solve_warmup(&p, &grid, &data, WarmupOptions::default()).unwrap();
    for k in 0..=20 {
        let t = 2.0 * k as f64 / 20.0;
        for &m in grid.m() {
            assert_eq!(h.eval(p.flow.coords(), t, m), 0.0);
        }
    }
}

#[test]
fn warmup_transport_decay_closed_form() {
    let (alpha, d) = (1.0, 0.3);
    let p = linear_params(alpha, d);
    let grid = Grid::new(&p, 256, 32).unwrap();
    let n0 = |m: f64| 1.0 + m * m;
    let data = WarmupData::new(|_, _| 0.0, n0);
    let h = solve_warmup(&p, &grid, &data, WarmupOptions::default()).unwrap();
    for k in 0..=16 {
        let t = 2.0 * k as f64 / 16.0;
        for &m in grid.m().iter().step_by(7) {
            let exact = n0(m * (-alpha * t).exp()) * (-(d + alpha) * t).exp();
            let got = h.eval(p.flow.coords(), t, m);
            assert!((got - exact).abs() < 1e-6 * exact, "t = {t}, m = {m}: {got} vs {exact}");
        }
    }
}

/// RK4 with many steps along one characteristic of the `Γ ≡ γ₀` warmup.
fn constant_gamma_oracle(p: &ModelParams, gamma0: f64, n0: f64, t: f64, m: f64) -> f64 {
    let (alpha, d, g) = (1.0, p.delta.eval(0.0), p.gamma.eval(0.0));
    let (lo, hi) = (p.tau_lower, p.tau_upper);
    let source = |s: f64, ms: f64| {
        let k = p.k_eval(ms, 0.5 * (lo + hi)) * (hi - lo);
        2.0 * (-(g + alpha) * s).exp() * gamma0 * k * (hi - s.max(lo)).max(0.0) / (hi - lo)
    };
    let steps = 20_000;
    let h = t / steps as f64;
    let along = |s: f64| m * (-alpha * (t - s)).exp();
    let f = |s: f64, u: f64| -(d + alpha) * u + source(s, along(s));
    let mut u = n0;
    for i in 0..steps {
        let s = i as f64 * h;
        let k1 = f(s, u);
        let k2 = f(s + 0.5 * h, u + 0.5 * h * k1);
        let k3 = f(s + 0.5 * h, u + 0.5 * h * k2);
        let k4 = f(s + h, u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u
}

#[test]
fn warmup_constant_gamma_matches_scalar_ode() {
    let untapered = DivisionKernel::Separable {
        kappa: 1.0.into(),
        rho: AgeDensity::Uniform,
        taper: false,
    };
    let p = ModelParams::new(flow(1.0, 0.5), 0.2.into(), 0.05.into(), ReintroductionLaw::zero(), untapered, 1.0, 2.0).unwrap();
    let grid = Grid::new(&p, 256, 32).unwrap();
    let gamma0 = 0.8;
    let data = WarmupData::new(move |_, _| gamma0, |_| 1.0);
    let h = solve_warmup(&p, &grid, &data, WarmupOptions { check_nonnegative: true }).unwrap();
    let dt = p.tau_upper / 64.0;
    for k in [1usize, 8, 31, 32, 33, 50, 64] {
        let t = k as f64 * dt;
        // The untapered kernel jumps at g(1) = m[255]; stay below it.
        for &m in &[grid.m()[10], grid.m()[100], grid.m()[230], grid.m()[254]] {
            let exact = constant_gamma_oracle(&p, gamma0, 1.0, t, m);
            let got = h.eval(p.flow.coords(), t, m);
            assert!((got - exact).abs() < 1e-6 * exact.abs().max(1.0), "t = {t}, m = {m}: {got} vs {exact}");
        }
    }
}

#[test]
fn warmup_flags_negative_densities() {
    let p = nonlinear_params(20.0, 0.5);
    let grid = Grid::new(&p, 32, 8).unwrap();
    let data = WarmupData::new(|_, _| 0.0, |m| m - 0.2);
    let err = solve_warmup(&p, &grid, &data, WarmupOptions { check_nonnegative: true }).unwrap_err();
    assert!(matches!(err, Error::Warmup(_)));
    assert!(solve_warmup(&p, &grid, &data, WarmupOptions::default()).is_ok());
}

#[test]
fn warmup_feeds_the_solver() {
    let p = nonlinear_params(20.0, 0.5);
    let grid = Grid::new(&p, 128, 16).unwrap();
    let data = WarmupData::new(|m, a| (1.0 - m) * (2.0 - a).max(0.0), |m| 1.0 + m);
    let h = solve_warmup(&p, &grid, &data, WarmupOptions { check_nonnegative: true }).unwrap();
    let field = Solver::new(&p, &grid, SolverOptions::default()).unwrap().solve(&h, 6.0).unwrap();
    let (lo, hi) = field.extrema();
    assert!(lo >= 0.0 && hi.is_finite() && hi > 0.0);
    let tau = p.tau_upper;
    for &m in grid.m() {
        let before = h.eval(p.flow.coords(), tau, m);
        assert_eq!(field.lookup(tau, m).unwrap(), before);
    }
}

#[test]
fn proliferating_zero_without_sources() {
    let p = linear_params(1.0, 0.1);
    let field = solve(&p, 64, 8, &reference_history(), 6.0);
    let pf = solve_proliferating(&field, None).unwrap();
    assert!(pf.values.iter().flatten().all(|&v| v == 0.0));
    assert_eq!(pf.times.len(), field.table().len());
}

#[test]
fn proliferating_flux_balance_for_stationary_density() {
    // Stationary N*(m) = m with α = 1: for t ≥ τ̄,
    // ∂_t P + ∂_m(VP) = −γP + βN* − ξ(m, τ̄) (βN*)(π_{−τ̄} m).
    let p = ModelParams::new(
        flow(1.0, 0.5),
        0.05.into(),
        RateFunction::Polynomial(vec![0.1, 0.3]),
        ReintroductionLaw::hill(RateFunction::Polynomial(vec![0.4, 0.2]), 0.7, 3.0),
        DivisionKernel::uniform(20.0),
        1.0,
        2.0,
    )
    .unwrap();
    let stationary = |_: f64, m: f64| m;
    let model = ProliferatingModel::new(&p, &stationary, None, 0.125, 16);
    let v = p.flow.velocity();
    let gamma = &p.gamma;
    let h = 1e-3;
    for &t in &[2.5, 3.0, 4.0] {
        for &m in &[0.05, 0.13, 0.25, 0.37, 0.45] {
            let vp = |mm: f64| v.v(mm) * model.eval(t, mm).unwrap();
            let d_flux = (-vp(m + 2.0 * h) + 8.0 * vp(m + h) - 8.0 * vp(m - h) + vp(m - 2.0 * h)) / (12.0 * h);
            let pt = |tt: f64| model.eval(tt, m).unwrap();
            let d_t = (-pt(t + 2.0 * h) + 8.0 * pt(t + h) - 8.0 * pt(t - h) + pt(t - 2.0 * h)) / (12.0 * h);
            let pm = model.eval(t, m).unwrap();
            let foot = p.flow.back(p.tau_upper, m);
            let loss = p.xi(m, p.tau_upper).unwrap() * p.beta.flux(foot, foot);
            let defect = d_t + d_flux + gamma.eval(m) * pm - p.beta.flux(m, m) + loss;
            assert!(defect.abs() < 1e-6, "t = {t}, m = {m}: defect {defect:e}");
        }
    }
}

#[test]
fn proliferating_early_regime_constant_gamma() {
    // β ≡ 0, Γ ≡ γ₀: P(t,m) = ξ(m,t) γ₀ (τ̄ − t) for t < τ̄.
    let p = linear_params(1.0, 0.1);
    let gamma0 = 0.6;
    let zero = |_: f64, _: f64| 0.0;
    let model = ProliferatingModel::new(&p, &zero, Some(std::sync::Arc::new(move |_, _| gamma0)), 0.125, 4);
    for &t in &[0.0, 0.3, 1.0, 1.7] {
        for &m in &[0.1, 0.3, 0.5] {
            let exact = (-(0.05f64 + 1.0) * t).exp() * gamma0 * (2.0 - t);
            let got = model.eval(t, m).unwrap();
            assert!((got - exact).abs() < 1e-12, "{got} vs {exact}");
        }
    }
    assert!(model.eval(2.5, 0.3).unwrap().abs() == 0.0);
    assert!(model.eval(1.0, 0.6).is_err());
}

#[test]
fn residual_vanishes_on_zero_field() {
    let p = nonlinear_params(20.0, 0.5);
    let field = solve(&p, 64, 16, &InitialHistory::zero(), 6.0);
    assert_eq!(residual_sup(&field, 2.0, 6.0).unwrap(), 0.0);
    assert!(residual(&field, 1, 3).is_err());
    assert!(residual(&field, 3, 1).is_err());
    assert_eq!(residual(&field, 3, 3).unwrap(), 0.0);
}

#[test]
fn residual_of_transport_decay_is_small() {
    let p = linear_params(1.0, 0.2);
    let field = solve(&p, 512, 64, &InitialHistory::function(|_, m| 1.0 + 0.5 * (3.0 * m).sin()), 6.0);
    let r = residual_sup(&field, 2.1, 5.9).unwrap();
    assert!(r < 1e-4, "{r:e}");
}

#[test]
fn residual_is_second_order() {
    let p = nonlinear_params(20.0, 0.5);
    let coarse = solve(&p, 256, 32, &reference_history(), 4.0);
    let fine = solve(&p, 512, 64, &reference_history(), 4.0);
    let (rc, rf) = (
        residual_sup(&coarse, 2.2, 3.8).unwrap(),
        residual_sup(&fine, 2.2, 3.8).unwrap(),
    );
    assert!(rc / rf >= 3.0, "{rc:e} / {rf:e}");
}

#[test]
fn band_never_feeds_back() {
    let p = nonlinear_params(20.0, 0.5);
    let g1 = p.g_one();
    let a = InitialHistory::function(move |t, m| if m > g1 { 50.0 } else { 1.0 + m + 0.1 * t });
    let b = InitialHistory::function(move |t, m| if m > g1 { 0.0 } else { 1.0 + m + 0.1 * t });
    let fa = solve(&p, 128, 16, &a, 6.0);
    let fb = solve(&p, 128, 16, &b, 6.0);
    assert_eq!(fa.slices(), fb.slices());
    let band_a = solve_band(&fa, |_| 50.0, 33).unwrap();
    let band_b = solve_band(&fb, |_| 0.0, 33).unwrap();
    assert_ne!(band_a.slices, band_b.slices);
    assert_eq!(band_a.slices.len(), fa.slices().len());
    assert!((band_a.m[0] - g1).abs() < 1e-15 && (band_a.m[32] - 1.0).abs() < 1e-12);
}

#[test]
fn band_transport_decay_closed_form() {
    // β ≡ 0, N(τ̄, m) = m: N(t, m) = π_{−r}(m) e^{−(d+α) r}, on both sides of g(1).
    let (alpha, d) = (1.0, 0.2);
    let p = linear_params(alpha, d);
    let field = solve(&p, 256, 64, &InitialHistory::function(|_, m| m), 6.0);
    let band = solve_band(&field, |m| m, 257).unwrap();
    for (i, row) in band.slices.iter().enumerate() {
        let r = field.time(i) - p.tau_upper;
        for (&m, &v) in band.m.iter().zip(row) {
            let exact = m * (-alpha * r).exp() * (-(d + alpha) * r).exp();
            assert!((v - exact).abs() < 1e-6 * exact, "t = {}, m = {m}: {v} vs {exact}", field.time(i));
        }
    }
}

#[test]
fn gridded_history_round_trips_through_the_solver() {
    let p = nonlinear_params(20.0, 0.5);
    let grid = Grid::new(&p, 128, 16).unwrap();
    let f = reference_history();
    let dt = p.tau_upper / 32.0;
    let values: Vec<Vec<f64>> = (0..=32)
        .map(|k| grid.m().iter().zip(grid.x()).map(|(&m, &x)| f.eval_mx(k as f64 * dt, m, x)).collect())
        .collect();
    let gridded = InitialHistory::gridded(hemosim::solver::GriddedHistory::new(dt, grid.x_max(), values).unwrap());
    let s = Solver::new(&p, &grid, SolverOptions::default()).unwrap();
    let a = s.solve(&f, 5.0).unwrap();
    let b = s.solve(&gridded, 5.0).unwrap();
    let scale = sup(a.slices().last().unwrap());
    for (ra, rb) in a.slices().iter().zip(b.slices()) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-4 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn nonnegative_history_stays_nonnegative(
        a in 0.0f64..2.0, b in 0.0f64..1.0, w in 1.0f64..12.0, s in 0.0f64..0.5, beta0 in 0.1f64..1.0,
    ) {
        let p = nonlinear_params(20.0, beta0);
        let h = InitialHistory::function(move |t, m| a + b * (1.0 + (w * m + t).sin()) + s * m * t);
        let field = solve(&p, 64, 16, &h, 10.0);
        let (lo, hi) = field.extrema();
        prop_assert!(lo >= -1e-8 * hi.max(0.0));
    }

    #[test]
    fn junctions_are_continuous(beta0 in 0.1f64..1.0, kappa in 5.0f64..25.0) {
        let p = nonlinear_params(kappa, beta0);
        let field = solve(&p, 64, 16, &reference_history(), 6.0);
        for w in field.windows() {
            prop_assert!(w.junction_mismatch <= 1e-9 * w.m_sup.max(1.0));
        }
    }
}
