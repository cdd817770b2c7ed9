use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use hemosim::experiments::{
    exp_extinction, exp_invariance, exp_positivity, exp_uniqueness, picard_rate_check, positivity_sweep, profile_csv,
    resolvent_sweep, Report, Setup, Verdict,
};
use hemosim::io::{sidecar, FieldTable};
use hemosim::solver::{residual, solve_proliferating};
use hemosim::{InitialHistory, ModelParams, SolutionField};
use serde_json::{json, Value};

use crate::config::{Emit, RunConfig};
use crate::error::CliError;

pub const KINDS: [&str; 6] = ["uniqueness", "extinction", "invariance", "positivity", "resolvent", "picard-rate"];

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let params = cfg.model.build()?;
    let mut s = Setup::new(params, cfg.grid.m_nodes, cfg.grid.dt_divisor)?;
    s.options = cfg.solver_options()?;
    Ok(s)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, v).map_err(|e| CliError::Solver(e.to_string()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// `max_j |residual(i, j)|` for every slice where the stencil fits.
fn residual_profile(field: &SolutionField) -> Result<Vec<(f64, f64)>, CliError> {
    let len = field.slices().len();
    let n = field.grid().len();
    if len < 5 || n < 5 {
        return Ok(Vec::new());
    }
    (2..len - 2)
        .map(|i| {
            let mut worst = 0.0f64;
            for j in 2..n - 2 {
                worst = worst.max(residual(field, i, j)?.abs());
            }
            Ok((field.time(i), worst))
        })
        .collect()
}

pub fn run(cfg: &RunConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let history = cfg.history(seed)?;
    let horizon = cfg.horizon()?;
    let start = Instant::now();
    let field = s.solve(&history, horizon)?;
    let p = if cfg.run.emit.contains(&Emit::P) {
        Some(solve_proliferating(&field, None)?)
    } else {
        None
    };
    let residuals = if cfg.run.emit.contains(&Emit::Residuals) {
        Some(residual_profile(&field)?)
    } else {
        None
    };
    let wall = start.elapsed().as_secs_f64();

    fs::create_dir_all(out)?;
    let table = FieldTable::from_field(&field, p.as_ref())?;
    let mut f = BufWriter::new(File::create(out.join("field.csv"))?);
    table.write_csv(&mut f)?;
    f.flush()?;
    if let Some(r) = &residuals {
        fs::write(out.join("residuals.csv"), profile_csv(("t", "residual"), r))?;
    }
    let meta = sidecar(
        &field,
        json!({
            "seed": seed,
            "emit": cfg.run.emit,
            "wall_time_s": wall,
            "config": cfg,
        }),
    );
    write_json(&out.join("field.meta.json"), &meta)?;

    let (lo, hi) = field.extrema();
    println!("horizon         {:.6}", field.horizon());
    println!("slices          {}", field.slices().len());
    println!("windows         {}", field.windows().len());
    println!("max iterations  {}", field.max_iterations());
    println!("sup N           {hi:.6e}");
    println!("inf N           {lo:.6e}");
    if let Some(r) = &residuals {
        let worst = r.iter().map(|x| x.1).fold(0.0f64, f64::max);
        println!("max residual    {worst:.3e}");
    }
    println!("wall time       {wall:.3} s");
    println!("digest          {}", field.digest());
    println!("wrote {}", out.join("field.csv").display());
    Ok(())
}

fn emit_report(out: &Path, kind: &str, report: &impl Report) -> Result<Verdict, CliError> {
    fs::create_dir_all(out)?;
    let text = report.render_text();
    write_json(&out.join(format!("{kind}.json")), report)?;
    fs::write(out.join(format!("{kind}.txt")), &text)?;
    print!("{text}");
    Ok(report.verdict())
}

fn need_b(cfg: &RunConfig) -> Result<f64, CliError> {
    cfg.experiment
        .as_ref()
        .and_then(|e| e.b)
        .ok_or_else(|| CliError::Config("experiment.b: required for this experiment".into()))
}

fn second_history(cfg: &RunConfig, params: &ModelParams, b: f64, seed: u64) -> Result<InitialHistory, CliError> {
    let e = cfg.experiment.as_ref().expect("checked by caller");
    if let Some(h) = &e.history2 {
        return h.build(seed);
    }
    let bump = match &e.perturbation {
        Some(p) => p.build(b, params.g_one(), seed)?,
        None => crate::config::PerturbationSpec::Random { seed: None }.build(b, params.g_one(), seed)?,
    };
    let base = cfg.history(seed)?;
    Ok(InitialHistory::function(move |t, m| base.eval_mx(t, m, f64::NAN) + bump(m)))
}

pub fn experiment(kind: &str, cfg: &RunConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    if !KINDS.contains(&kind) {
        return Err(CliError::Config(format!("unknown experiment kind {kind:?}; expected one of {KINDS:?}")));
    }
    let e = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| CliError::Config("experiment: block required".into()))?;
    if let Some(k) = &e.kind {
        if k != kind {
            return Err(CliError::Config(format!("experiment.kind is {k:?} but the command asks for {kind:?}")));
        }
    }
    let s = setup(cfg)?;
    let verdict = match kind {
        "uniqueness" => {
            let b = need_b(cfg)?;
            let phi1 = cfg.history(seed)?;
            let phi2 = second_history(cfg, &s.params, b, seed)?;
            emit_report(out, kind, &exp_uniqueness(&s, &phi1, &phi2, b)?)?
        }
        "extinction" => {
            let b = need_b(cfg)?;
            let control = e.control.as_ref().map(|h| h.build(seed)).transpose()?;
            emit_report(out, kind, &exp_extinction(&s, &cfg.history(seed)?, b, control.as_ref())?)?
        }
        "invariance" => {
            let b = need_b(cfg)?;
            emit_report(out, kind, &exp_invariance(&s, &cfg.history(seed)?, b)?)?
        }
        "positivity" => {
            let horizon = cfg.horizon()?;
            match e.count {
                Some(count) => emit_report(out, kind, &positivity_sweep(&s, count, seed, horizon)?)?,
                None => emit_report(out, kind, &exp_positivity(&s, &cfg.history(seed)?, horizon)?)?,
            }
        }
        "resolvent" => {
            let lambdas = e.lambdas.clone().unwrap_or_else(|| vec![0.1, 1.0, 10.0]);
            let count = e.count.unwrap_or(100);
            let nodes = e.nodes.unwrap_or(65);
            emit_report(out, kind, &resolvent_sweep(&s.params.flow, count, &lambdas, seed, nodes)?)?
        }
        "picard-rate" => {
            let field = s.solve(&cfg.history(seed)?, cfg.horizon()?)?;
            emit_report(out, kind, &picard_rate_check(&field))?
        }
        _ => unreachable!("kind validated above"),
    };
    if verdict == Verdict::Fail {
        return Err(CliError::Verdict(format!("{kind} check failed")));
    }
    Ok(())
}

pub fn check(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.model.build()?;
    // Building the grid validates the grid block as well.
    hemosim::Grid::new(&p, cfg.grid.m_nodes, cfg.grid.dt_divisor)?;
    cfg.solver_options()?;
    let tau0 = p.flow.tau0()?;
    let l = p.lipschitz_l()?;
    let margin = p.invariance_margin()?;
    let rows: Vec<(&str, Value)> = vec![
        ("g(1)", json!(p.g_one())),
        ("tau0", json!(tau0)),
        ("tau_lower", json!(p.tau_lower)),
        ("tau_upper", json!(p.tau_upper)),
        ("tau_lower > tau0", json!(p.tau_lower > tau0)),
        ("I = inf(delta + V')", json!(margin.i)),
        ("l", json!(l)),
        ("zeta_tilde", json!(margin.zeta_tilde)),
        ("margin l(2(tau_upper - tau_lower) zeta_tilde + 1)", json!(margin.lhs)),
        ("invariance margin", serde_json::to_value(margin.status).unwrap_or(Value::Null)),
    ];
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    for (k, v) in rows {
        let shown = match &v {
            Value::Number(n) => format!("{:.12}", n.as_f64().unwrap_or(f64::NAN)),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        println!("{k:<width$}  {shown}");
    }
    Ok(())
}
