//! Strict JSON run configuration and its translation into model types.

use std::path::Path;
use std::sync::Arc;

use hemosim::experiments::random_history;
use hemosim::interp::MonotoneCubic;
use hemosim::{
    AgeDensity, DivisionKernel, Flow, InitialHistory, MaturityMap, ModelParams, RateFunction, ReintroductionLaw,
    SolverOptions, VelocityModel,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub history: Option<HistorySpec>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub experiment: Option<ExperimentSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub velocity: VelocitySpec,
    pub g: MapSpec,
    pub delta: RateSpec,
    pub gamma: RateSpec,
    pub beta: BetaSpec,
    pub k: KernelSpec,
    pub tau_lower: f64,
    pub tau_upper: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    PowerLaw { alpha: f64, p: f64 },
    /// Monotone cubic through `(m, v)`.
    Table { m: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Linear { c: f64 },
    /// Monotone cubic through `(m, g)` on `[0, 1]`.
    Table { m: Vec<f64>, g: Vec<f64> },
}

/// A constant or `{"poly": [c0, c1, ...]}` in increasing degree.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum RateSpec {
    Constant(f64),
    Poly(PolySpec),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PolySpec {
    pub poly: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    Hill {
        beta0: RateSpec,
        theta: f64,
        n: f64,
    },
    Constant {
        beta0: RateSpec,
    },
    Zero,
    /// Bilinear table `β(m_i, N_j) = values[i][j]`, held constant beyond the
    /// last `N` node. The Lipschitz constant of `x β(m, x)` must be declared.
    Custom {
        m: Vec<f64>,
        n: Vec<f64>,
        values: Vec<Vec<f64>>,
        #[serde(default)]
        lipschitz: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Uniform {
        kappa: RateSpec,
        #[serde(default = "yes")]
        taper: bool,
    },
    Separable {
        kappa: RateSpec,
        density: DensitySpec,
        #[serde(default = "yes")]
        taper: bool,
    },
    Zero,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum DensitySpec {
    Named(DensityName),
    Poly(PolySpec),
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityName {
    Uniform,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub m_nodes: usize,
    pub dt_divisor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum Emit {
    N,
    P,
    #[serde(rename = "residuals")]
    Residuals,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            horizon: None,
            emit: default_emit(),
            seed: 0,
        }
    }
}

fn default_emit() -> Vec<Emit> {
    vec![Emit::N]
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub picard_tol: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

/// The datum `φ` on `[0, τ̄] × [0, g(1)]`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistorySpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `(constant + slope_t t + Σ a sin(k_m m + k_t t + phase)) · cut(m)`,
    /// where `cut` vanishes on `[0, zero_below]` and rises to 1 over `ramp`.
    Modes {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        slope_t: f64,
        #[serde(default)]
        modes: Vec<Mode>,
        #[serde(default)]
        zero_below: Option<f64>,
        #[serde(default = "default_ramp")]
        ramp: f64,
    },
    /// A seeded nonnegative random history; the seed defaults to the run seed.
    Random {
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_ramp() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amplitude: f64,
    #[serde(default)]
    pub m_freq: f64,
    #[serde(default)]
    pub t_freq: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub b: Option<f64>,
    /// Uniqueness: added to `history` to form the second datum.
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    /// Uniqueness: an explicit second datum instead of a perturbation.
    #[serde(default)]
    pub history2: Option<HistorySpec>,
    /// Extinction: a control datum that is positive on `[0, b]`.
    #[serde(default)]
    pub control: Option<HistorySpec>,
    /// Positivity: number of random histories; absent means the configured history.
    /// Resolvent: number of random test functions.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    /// `amplitude · exp(−((m − centre)/width)²)` above `b`, ramped up over 0.01.
    Bump { amplitude: f64, centre: f64, width: f64 },
    /// A seeded random bump above `b`; the seed defaults to the run seed.
    Random {
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// Reads and parses a config, reporting the JSON path of the first error.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RateSpec {
    fn build(&self) -> RateFunction {
        match self {
            RateSpec::Constant(c) => RateFunction::Constant(*c),
            RateSpec::Poly(p) => RateFunction::Polynomial(p.poly.clone()),
        }
    }
}

fn check_nodes(path: &str, x: &[f64]) -> Result<(), CliError> {
    if x.len() < 2 {
        return Err(config(format!("{path}: at least 2 nodes required")));
    }
    if !x.iter().all(|v| v.is_finite()) || !x.windows(2).all(|w| w[1] > w[0]) {
        return Err(config(format!("{path}: nodes must be finite and strictly increasing")));
    }
    Ok(())
}

fn table(path: &str, x: &[f64], y: &[f64]) -> Result<MonotoneCubic, CliError> {
    check_nodes(path, x)?;
    if x.len() != y.len() {
        return Err(config(format!("{path}: {} nodes but {} values", x.len(), y.len())));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(config(format!("{path}: values must be finite")));
    }
    Ok(MonotoneCubic::new(x.to_vec(), y.to_vec()))
}

/// Inverse of an increasing function on `[lo, hi]` by bisection.
fn invert(f: &MonotoneCubic, y: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if f.eval(mid) < y {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

impl VelocitySpec {
    fn build(&self) -> Result<VelocityModel, CliError> {
        match self {
            VelocitySpec::PowerLaw { alpha, p } => Ok(VelocityModel::power_law(*alpha, *p)),
            VelocitySpec::Table { m, v } => {
                let t = Arc::new(table("model.velocity", m, v)?);
                let d = t.clone();
                Ok(VelocityModel::custom(move |x| t.eval(x), move |x| d.derivative(x)))
            }
        }
    }
}

impl MapSpec {
    fn build(&self) -> Result<MaturityMap, CliError> {
        match self {
            MapSpec::Linear { c } => Ok(MaturityMap::linear(*c)),
            MapSpec::Table { m, g } => {
                let t = table("model.g", m, g)?;
                if m[0] != 0.0 || *m.last().unwrap() != 1.0 || g[0] != 0.0 {
                    return Err(config("model.g: table must span m in [0, 1] with g(0) = 0"));
                }
                if !g.windows(2).all(|w| w[1] > w[0]) {
                    return Err(config("model.g: values must be strictly increasing"));
                }
                let t = Arc::new(t);
                let (d, inv) = (t.clone(), t.clone());
                Ok(MaturityMap::custom(
                    move |x| t.eval(x),
                    move |x| d.derivative(x),
                    move |y| invert(&inv, y, 0.0, 1.0),
                ))
            }
        }
    }
}

impl BetaSpec {
    fn build(&self) -> Result<ReintroductionLaw, CliError> {
        match self {
            BetaSpec::Hill { beta0, theta, n } => Ok(ReintroductionLaw::hill(beta0.build(), *theta, *n)),
            BetaSpec::Constant { beta0 } => Ok(ReintroductionLaw::Constant(beta0.build())),
            BetaSpec::Zero => Ok(ReintroductionLaw::zero()),
            BetaSpec::Custom {
                m,
                n,
                values,
                lipschitz,
            } => {
                check_nodes("model.beta.m", m)?;
                check_nodes("model.beta.n", n)?;
                if values.len() != m.len() || values.iter().any(|r| r.len() != n.len()) {
                    return Err(config("model.beta.values: shape must be [len(m)][len(n)]"));
                }
                if !values.iter().flatten().all(|&v| v.is_finite() && v >= 0.0) {
                    return Err(config("model.beta.values: rates must be finite and >= 0"));
                }
                let (ms, vals, ns) = (m.clone(), values.clone(), n.clone());
                Ok(ReintroductionLaw::custom(move |mm, x| bilinear(&ms, &ns, &vals, mm, x), *lipschitz))
            }
        }
    }
}

/// Bilinear interpolation, clamped to the table's bounding box.
fn bilinear(xs: &[f64], ys: &[f64], v: &[Vec<f64>], x: f64, y: f64) -> f64 {
    let locate = |nodes: &[f64], p: f64| -> (usize, f64) {
        let p = p.clamp(nodes[0], *nodes.last().unwrap());
        let i = nodes.partition_point(|&q| q <= p).clamp(1, nodes.len() - 1) - 1;
        (i, (p - nodes[i]) / (nodes[i + 1] - nodes[i]))
    };
    let (i, s) = locate(xs, x);
    let (j, t) = locate(ys, y);
    let lo = v[i][j] + t * (v[i][j + 1] - v[i][j]);
    let hi = v[i + 1][j] + t * (v[i + 1][j + 1] - v[i + 1][j]);
    lo + s * (hi - lo)
}

impl KernelSpec {
    fn build(&self) -> DivisionKernel {
        match self {
            KernelSpec::Uniform { kappa, taper } => DivisionKernel::Separable {
                kappa: kappa.build(),
                rho: AgeDensity::Uniform,
                taper: *taper,
            },
            KernelSpec::Separable { kappa, density, taper } => DivisionKernel::Separable {
                kappa: kappa.build(),
                rho: match density {
                    DensitySpec::Named(DensityName::Uniform) => AgeDensity::Uniform,
                    DensitySpec::Poly(p) => AgeDensity::Polynomial(p.poly.clone()),
                },
                taper: *taper,
            },
            KernelSpec::Zero => DivisionKernel::zero(),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelParams, CliError> {
        let flow = Flow::new(self.velocity.build()?, self.g.build()?)?;
        Ok(ModelParams::new(
            flow,
            self.delta.build(),
            self.gamma.build(),
            self.beta.build()?,
            self.k.build(),
            self.tau_lower,
            self.tau_upper,
        )?)
    }
}

impl HistorySpec {
    pub fn build(&self, seed: u64) -> Result<InitialHistory, CliError> {
        match self {
            HistorySpec::Zero => Ok(InitialHistory::zero()),
            HistorySpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(config("history.value must be finite"));
                }
                let v = *value;
                Ok(InitialHistory::function(move |_, _| v))
            }
            HistorySpec::Modes {
                constant,
                slope_t,
                modes,
                zero_below,
                ramp,
            } => {
                if !(*ramp > 0.0) {
                    return Err(config("history.ramp must be > 0"));
                }
                let (c, s, r) = (*constant, *slope_t, *ramp);
                let modes: Vec<(f64, f64, f64, f64)> = modes.iter().map(|m| (m.amplitude, m.m_freq, m.t_freq, m.phase)).collect();
                let cut_at = *zero_below;
                Ok(InitialHistory::function(move |t, m| {
                    let wave: f64 = modes.iter().map(|&(a, km, kt, p)| a * (km * m + kt * t + p).sin()).sum();
                    let cut = match cut_at {
                        Some(b) if m <= b => 0.0,
                        Some(b) => smoothstep(((m - b) / r).min(1.0)),
                        None => 1.0,
                    };
                    (c + s * t + wave) * cut
                }))
            }
            HistorySpec::Random { seed: own } => Ok(random_history(own.unwrap_or(seed))),
        }
    }
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

impl PerturbationSpec {
    pub fn build(&self, b: f64, g1: f64, seed: u64) -> Result<Arc<dyn Fn(f64) -> f64 + Send + Sync>, CliError> {
        match self {
            PerturbationSpec::Bump {
                amplitude,
                centre,
                width,
            } => {
                if !(*width > 0.0) {
                    return Err(config("experiment.perturbation.width must be > 0"));
                }
                let (a, c, w) = (*amplitude, *centre, *width);
                Ok(Arc::new(move |m: f64| {
                    if m <= b {
                        0.0
                    } else {
                        a * ((m - b) / 0.01).min(1.0) * (-((m - c) / w).powi(2)).exp()
                    }
                }))
            }
            PerturbationSpec::Random { seed: own } => Ok(Arc::new(hemosim::experiments::random_bump_above(
                own.unwrap_or(seed),
                b,
                g1,
            ))),
        }
    }
}

impl RunConfig {
    pub fn solver_options(&self) -> Result<SolverOptions, CliError> {
        let mut o = SolverOptions::default();
        if let Some(s) = &self.solver {
            if let Some(t) = s.picard_tol {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(config(format!("solver.picard_tol must be > 0, got {t}")));
                }
                o.tol_picard = t;
            }
            if let Some(m) = s.max_iterations {
                if m == 0 {
                    return Err(config("solver.max_iterations must be >= 1"));
                }
                o.max_iterations = m;
            }
        }
        Ok(o)
    }

    pub fn history(&self, seed: u64) -> Result<InitialHistory, CliError> {
        self.history
            .as_ref()
            .ok_or_else(|| config("history: required for this command"))?
            .build(seed)
    }

    pub fn horizon(&self) -> Result<f64, CliError> {
        self.run.horizon.ok_or_else(|| config("run.horizon: required for this command"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {
            "velocity": {"form": "power_law", "alpha": 1, "p": 1},
            "g": {"form": "linear", "c": 0.5},
            "delta": 0.05, "gamma": {"poly": [0.05, 0.01]},
            "beta": {"form": "hill", "beta0": 0.5, "theta": 1, "n": 2},
            "k": {"form": "uniform", "kappa": 20},
            "tau_lower": 1, "tau_upper": 2
        },
        "grid": {"m_nodes": 64, "dt_divisor": 8}
    }"#;

    #[test]
    fn minimal_config_builds() {
        let c = parse(MINIMAL).unwrap();
        let p = c.model.build().unwrap();
        assert_eq!(p.g_one(), 0.5);
        assert_eq!(c.run.emit, vec![Emit::N]);
        assert_eq!(c.run.seed, 0);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = MINIMAL.replace("\"theta\": 1", "\"theta\": 1, \"thta\": 2");
        let e = parse(&text).unwrap_err().to_string();
        assert!(e.contains("model.beta"), "{e}");
        assert!(e.contains("thta"), "{e}");
    }

    #[test]
    fn wrong_type_names_its_path() {
        let text = MINIMAL.replace("\"m_nodes\": 64", "\"m_nodes\": \"many\"");
        let e = parse(&text).unwrap_err().to_string();
        assert!(e.contains("grid.m_nodes"), "{e}");
    }

    #[test]
    fn bilinear_reproduces_nodes_and_clamps() {
        let xs = [0.0, 1.0];
        let ys = [0.0, 2.0, 4.0];
        let v = vec![vec![1.0, 2.0, 3.0], vec![3.0, 4.0, 5.0]];
        assert_eq!(bilinear(&xs, &ys, &v, 1.0, 2.0), 4.0);
        assert_eq!(bilinear(&xs, &ys, &v, 0.5, 1.0), 2.5);
        assert_eq!(bilinear(&xs, &ys, &v, 0.0, 10.0), 3.0);
    }

    #[test]
    fn table_map_is_inverted() {
        let spec = MapSpec::Table {
            m: vec![0.0, 0.5, 1.0],
            g: vec![0.0, 0.2, 0.6],
        };
        let g = spec.build().unwrap();
        for m in [0.1, 0.4, 0.9] {
            assert!((g.g_inv(g.g(m)) - m).abs() < 1e-12);
        }
    }

    #[test]
    fn modes_history_vanishes_below_cut() {
        let h = HistorySpec::Modes {
            constant: 1.0,
            slope_t: 0.0,
            modes: vec![],
            zero_below: Some(0.2),
            ramp: 0.1,
        }
        .build(0)
        .unwrap();
        assert_eq!(h.eval_mx(1.0, 0.2, f64::NAN), 0.0);
        assert_eq!(h.eval_mx(1.0, 0.35, f64::NAN), 1.0);
    }
}
