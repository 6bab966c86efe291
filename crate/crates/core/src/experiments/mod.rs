//! Configuration files, sweeps and the command implementations behind the
//! `cogstab` binary.
//!
//! Every command returns the exact bytes it would write, so output can be
//! compared across runs and job counts.

mod battery;
mod table;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    analyze_network, analyze_symmetric, lambda_p_max_relay, mu_p_imperfect_general, mu_p_imperfect_symmetric,
    mu_p_max, mu_p_max_symmetric, mu_p_relay, protection_constraints, relay_asymmetric, relay_decode_prob,
    relay_queue_rates, relay_success_prob, secondary_rate_imperfect_symmetric, secondary_rate_perfect_symmetric,
    secondary_rate_relay, AnalyticalReport,
};
use crate::config::{power_serde, NetworkConfig, Scenario, SymmetricConfig};
use crate::error::Error;
use crate::optimizer::{maximize_sum_throughput, GridSpec};
use crate::sim::{simulate, Estimate, SimConfig, SimMode, SimResult};

pub use battery::{
    check_equivalence, equivalence_cases, equivalence_pairs, run_battery, saturating_population, Battery, BatteryReport,
    CheckResult, EquivalenceCase,
};
pub use table::{Row, Table, TABLE_COLUMNS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable overriding the default worker count.
pub const JOBS_ENV: &str = "COGSTAB_JOBS";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("{failed} of {total} validation checks failed")]
    Validation { failed: usize, total: usize },
}

impl RunError {
    /// 1 for usage and parse problems, 2 for infeasible operating points,
    /// 3 for failed validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Model(Error::InfeasiblePrimary { .. } | Error::Unstable { .. }) => 2,
            RunError::Validation { .. } => 3,
            _ => 1,
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// `COGSTAB_JOBS` if set, else the number of available cores.
pub fn default_jobs() -> usize {
    std::env::var(JOBS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Parses JSON, reporting the failing field path and position.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> RunResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        RunError::Parse(format!("{origin}: field `{path}`: {}", e.into_inner()))
    })
}

fn read_file(path: &Path) -> RunResult<String> {
    std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> RunResult<T> {
    parse_json(&read_file(path)?, &path.display().to_string())
}

fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// A system description: normalised scenario, symmetric physical
/// parameters, a full network, or a path to a file holding one of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Scenario(Scenario),
    Symmetric(SymmetricConfig),
    Network(NetworkConfig),
    File(PathBuf),
}

impl System {
    /// Loads `File` references, relative to `dir`.
    pub fn resolve(&self, dir: &Path) -> RunResult<System> {
        match self {
            System::File(p) => {
                let path = if p.is_absolute() { p.clone() } else { dir.join(p) };
                let inner: System = load_json(&path)?;
                let next = path.parent().map(Path::to_path_buf).unwrap_or_default();
                inner.resolve(&next)
            }
            other => Ok(other.clone()),
        }
    }

    pub fn symmetric(&self) -> RunResult<Option<SymmetricConfig>> {
        Ok(match self {
            System::Scenario(s) => Some(s.build()?),
            System::Symmetric(c) => {
                c.validate()?;
                Some(c.clone())
            }
            System::Network(_) => None,
            System::File(p) => return Err(RunError::Parse(format!("unresolved file reference {}", p.display()))),
        })
    }

    pub fn network(&self) -> RunResult<NetworkConfig> {
        match self.symmetric()? {
            Some(c) => Ok(c.to_network()),
            None => match self {
                System::Network(n) => {
                    n.validate()?;
                    Ok(n.clone())
                }
                _ => unreachable!(),
            },
        }
    }
}

/// Primary arrival rate, absolute or relative to a reference rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Load {
    Absolute(f64),
    /// Fraction of the interference-free service rate.
    OfMuPMax(f64),
    /// Fraction of the closed-form stability bound of the selected mode.
    OfBound(f64),
}

impl Default for Load {
    fn default() -> Self {
        Load::Absolute(0.0)
    }
}

impl Load {
    pub fn with_value(self, v: f64) -> Load {
        match self {
            Load::Absolute(_) => Load::Absolute(v),
            Load::OfMuPMax(_) => Load::OfMuPMax(v),
            Load::OfBound(_) => Load::OfBound(v),
        }
    }

    pub fn resolve(self, sys: &System, mode: SimMode) -> RunResult<f64> {
        Ok(match self {
            Load::Absolute(v) => v,
            Load::OfMuPMax(v) => v * mu_max_of(sys)?,
            Load::OfBound(v) => v * bound_of(sys, mode)?,
        })
    }
}

fn mu_max_of(sys: &System) -> RunResult<f64> {
    Ok(match sys.symmetric()? {
        Some(c) => mu_p_max_symmetric(&c),
        None => mu_p_max(&sys.network()?),
    })
}

/// Closed-form stability bound of the primary queue in the given mode.
pub fn bound_of(sys: &System, mode: SimMode) -> RunResult<f64> {
    let sym = sys.symmetric()?;
    Ok(match (mode, sym) {
        (SimMode::NoRelayPerfectSensing, _) => mu_max_of(sys)?,
        (SimMode::NoRelayImperfectSensing, Some(c)) => mu_p_imperfect_symmetric(&c),
        (SimMode::NoRelayImperfectSensing, None) => mu_p_imperfect_general(&sys.network()?)?,
        (SimMode::RelayPerfectSensing, Some(c)) => lambda_p_max_relay(&c)?,
        (SimMode::RelayPerfectSensing, None) => relay_asymmetric(&sys.network()?)?.lambda_p_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub n_slots: u64,
    pub seed: u64,
    pub replications: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_slots: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<u64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { n_slots: 1_000_000, seed: 1, replications: 1, warmup_slots: None, trace_every: None }
    }
}

/// Command-line overrides of the file settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub slots: Option<u64>,
    pub replications: Option<u32>,
}

impl SimSettings {
    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.slots {
            self.n_slots = n;
            if self.warmup_slots.is_some_and(|w| w >= n) {
                self.warmup_slots = None;
            }
        }
        if let Some(r) = o.replications {
            self.replications = r;
        }
    }

    fn sim_config(&self, network: NetworkConfig, lambda_p: f64, mode: SimMode) -> SimConfig {
        let mut c = SimConfig::new(network, lambda_p, self.n_slots, self.seed, mode);
        c.warmup_slots = self.warmup_slots;
        c.trace_every = self.trace_every;
        c
    }
}

/// Input of `analyze` and `simulate`: one system at one load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: System,
    #[serde(default)]
    pub load: Load,
    #[serde(default = "default_mode")]
    pub mode: SimMode,
    /// Include the relaying block in the analytic report even when the
    /// mode does not relay.
    #[serde(default)]
    pub relay_analysis: bool,
    #[serde(default)]
    pub sim: SimSettings,
}

fn default_mode() -> SimMode {
    SimMode::NoRelayImperfectSensing
}

impl RunConfig {
    pub fn load(path: &Path) -> RunResult<RunConfig> {
        let mut c: RunConfig = load_json(path)?;
        c.system = c.system.resolve(path.parent().unwrap_or(Path::new(".")))?;
        Ok(c)
    }

    pub fn lambda_p(&self) -> RunResult<f64> {
        self.load.resolve(&self.system, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutput {
    pub version: String,
    pub config_sha256: String,
    pub mode: SimMode,
    pub report: AnalyticalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub result: SimResult,
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serialises");
    s.push('\n');
    s
}

pub fn analyze(cfg: &RunConfig) -> RunResult<AnalyzeOutput> {
    let lambda = cfg.lambda_p()?;
    let mut report = match cfg.system.symmetric()? {
        Some(c) => {
            let c = if cfg.mode.perfect_sensing() { perfect(&c) } else { c };
            analyze_symmetric(&c, lambda, cfg.mode.relays() || cfg.relay_analysis)?
        }
        None => {
            let net = cfg.system.network()?;
            let net = if cfg.mode.perfect_sensing() { net.with_perfect_sensing() } else { net };
            analyze_network(&net, lambda)?
        }
    };
    if cfg.mode.relays() {
        if let Some(r) = &report.relay {
            report.mu_p = r.mu_p_relay;
            report.idle_fraction = 1.0 - lambda / r.mu_p_relay;
        }
    }
    Ok(AnalyzeOutput { version: VERSION.into(), config_sha256: config_hash(cfg), mode: cfg.mode, report })
}

/// `analyze`: closed-form report for one configuration file, as JSON.
pub fn cmd_analyze(config_path: &Path) -> RunResult<String> {
    let cfg = RunConfig::load(config_path)?;
    Ok(to_json(&analyze(&cfg)?))
}

pub fn simulate_config(cfg: &RunConfig, jobs: usize) -> RunResult<SimulateOutput> {
    let lambda = cfg.lambda_p()?;
    let sc = cfg.sim.sim_config(cfg.system.network()?, lambda, cfg.mode);
    let result = simulate(&sc, cfg.sim.replications, jobs)?;
    Ok(SimulateOutput { version: VERSION.into(), config_sha256: config_hash(cfg), seed: cfg.sim.seed, result })
}

/// `simulate`: slot simulation of one configuration file, as JSON.
pub fn cmd_simulate(config_path: &Path, overrides: &Overrides, jobs: usize) -> RunResult<String> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.sim.apply(overrides);
    Ok(to_json(&simulate_config(&cfg, jobs)?))
}

fn perfect(c: &SymmetricConfig) -> SymmetricConfig {
    let mut c = c.clone();
    c.pe = 0.0;
    c.pf = 0.0;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    Simulate,
}

impl Engine {
    fn as_str(&self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Simulate => "simulate",
        }
    }
}

/// Named parameter overrides forming one curve of a figure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Series {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub set: BTreeMap<String, f64>,
}

/// Parameters that change other derived quantities come first.
const APPLY_ORDER: [&str; 11] = ["N", "mu_p_max", "Pd", "Pd-SNR", "P0", "P0_dBW", "a", "beta", "q", "Pe", "Pf"];

impl Series {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            self.ordered().iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
        })
    }

    fn ordered(&self) -> Vec<(&str, f64)> {
        let rank = |k: &str| APPLY_ORDER.iter().position(|o| *o == k).unwrap_or(APPLY_ORDER.len());
        let mut v: Vec<(&str, f64)> = self.set.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by_key(|(k, _)| rank(k));
        v
    }

    pub fn apply(&self, cfg: &mut SymmetricConfig) -> crate::Result<()> {
        for (k, v) in self.ordered() {
            cfg.set_param(k, v)?;
        }
        Ok(())
    }
}

pub const ANALYTIC_METRICS: [&str; 14] = [
    "mu_p_max",
    "mu_p",
    "mu_p_ratio",
    "capacity",
    "secondary_rate",
    "sum_throughput",
    "idle_fraction",
    "q_max",
    "p0_max",
    "p_d",
    "p_s",
    "lambda_p_max",
    "lambda_ext",
    "mu_ext",
];

pub const SIMULATED_METRICS: [&str; 8] = [
    "mu_p",
    "mu_p_ratio",
    "capacity",
    "secondary_rate",
    "sum_throughput",
    "idle_fraction",
    "lambda_ext",
    "mu_ext",
];

/// A one-dimensional sweep, optionally repeated for several series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: System,
    #[serde(default = "default_mode")]
    pub mode: SimMode,
    #[serde(default)]
    pub load: Load,
    pub sweep_axis: String,
    #[serde(deserialize_with = "power_serde::deserialize_vec")]
    pub grid: Vec<f64>,
    #[serde(default)]
    pub series: Vec<Series>,
    pub engines: Vec<Engine>,
    pub metrics: Vec<String>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> RunResult<ExperimentSpec> {
        let mut s: ExperimentSpec = load_json(path)?;
        s.base = s.base.resolve(path.parent().unwrap_or(Path::new(".")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> RunResult<()> {
        let bad = |m: String| Err(RunError::Parse(format!("experiment {:?}: {m}", self.name)));
        if self.grid.is_empty() {
            return bad("grid must not be empty".into());
        }
        if self.engines.is_empty() {
            return bad("engines must not be empty".into());
        }
        for m in &self.metrics {
            if !ANALYTIC_METRICS.contains(&m.as_str()) && !SIMULATED_METRICS.contains(&m.as_str()) {
                return bad(format!("unknown metric {m:?}"));
            }
        }
        let Some(base) = self.base.symmetric()? else {
            return bad("sweeps need a symmetric base (scenario or symmetric)".into());
        };
        if self.sweep_axis != "lambda_p" {
            let mut probe = base.clone();
            if let Err(e) = probe.set_param(&self.sweep_axis, self.grid[0]) {
                if matches!(e, Error::Config(_)) {
                    return bad(format!("sweep_axis: {e}"));
                }
            }
        }
        for s in &self.series {
            for k in s.set.keys() {
                if !APPLY_ORDER.contains(&k.as_str()) {
                    return bad(format!("series sets unknown parameter {k:?}"));
                }
            }
        }
        Ok(())
    }

    fn series_or_default(&self) -> Vec<Series> {
        if self.series.is_empty() {
            vec![Series::default()]
        } else {
            self.series.clone()
        }
    }
}

fn point_config(spec: &ExperimentSpec, series: &Series, x: f64) -> RunResult<(SymmetricConfig, f64)> {
    let mut cfg = spec.base.symmetric()?.expect("validated symmetric base");
    series.apply(&mut cfg)?;
    let load = if spec.sweep_axis == "lambda_p" {
        spec.load.with_value(x)
    } else {
        cfg.set_param(&spec.sweep_axis, x)?;
        spec.load
    };
    let lambda = load.resolve(&System::Symmetric(cfg.clone()), spec.mode)?;
    Ok((cfg, lambda))
}

/// Closed-form value of a named metric.
pub fn analytic_metric(cfg: &SymmetricConfig, mode: SimMode, lambda_p: f64, name: &str) -> crate::Result<f64> {
    let c = if mode.perfect_sensing() { perfect(cfg) } else { cfg.clone() };
    let n = c.n_secondary as f64;
    let mu_max = mu_p_max_symmetric(&c);
    let mu = || match mode {
        SimMode::NoRelayPerfectSensing => mu_max,
        SimMode::NoRelayImperfectSensing => mu_p_imperfect_symmetric(&c),
        SimMode::RelayPerfectSensing => mu_p_relay(&c),
    };
    let rate = || match mode {
        SimMode::NoRelayPerfectSensing => secondary_rate_perfect_symmetric(&c, lambda_p),
        SimMode::NoRelayImperfectSensing => secondary_rate_imperfect_symmetric(&c, lambda_p),
        SimMode::RelayPerfectSensing => secondary_rate_relay(&c, lambda_p),
    };
    Ok(match name {
        "mu_p_max" => mu_max,
        "mu_p" => mu(),
        "mu_p_ratio" => mu() / mu_max,
        "capacity" => match mode {
            SimMode::RelayPerfectSensing => lambda_p_max_relay(&c)?,
            _ => mu(),
        },
        "secondary_rate" => rate()?,
        "sum_throughput" => n * rate()?,
        "idle_fraction" => 1.0 - lambda_p / mu(),
        "q_max" => protection_constraints(cfg, lambda_p)?.q_max,
        "p0_max" => protection_constraints(cfg, lambda_p)?.p0_max.finite().unwrap_or(f64::INFINITY),
        "p_d" => relay_decode_prob(&c),
        "p_s" => relay_success_prob(&c)?,
        "lambda_p_max" => lambda_p_max_relay(&c)?,
        "lambda_ext" => relay_queue_rates(&c, lambda_p)?.lambda_ext,
        "mu_ext" => relay_queue_rates(&c, lambda_p)?.mu_ext,
        other => return Err(Error::Config(format!("unknown metric {other:?}"))),
    })
}

fn mean_estimate(v: &[Estimate]) -> Estimate {
    let n = v.len().max(1) as f64;
    let value = v.iter().map(|e| e.value).sum::<f64>() / n;
    let se = v.iter().map(|e| e.se * e.se).sum::<f64>().sqrt() / n;
    Estimate::new(value, se)
}

/// Simulated estimate of a named metric, or `None` if the simulator has no
/// counterpart.
pub fn simulated_metric(r: &SimResult, mu_max: f64, name: &str) -> Option<Estimate> {
    let sum = |v: &[Estimate]| {
        let m = mean_estimate(v);
        Estimate::new(m.value * v.len() as f64, m.se * v.len() as f64)
    };
    Some(match name {
        "mu_p" => r.empirical_mu_p,
        "mu_p_ratio" => Estimate::new(r.empirical_mu_p.value / mu_max, r.empirical_mu_p.se / mu_max),
        "capacity" => r.stability.capacity,
        "secondary_rate" => mean_estimate(&r.empirical_lambda_j),
        "sum_throughput" => sum(&r.empirical_lambda_j),
        "idle_fraction" => r.idle_fraction,
        "lambda_ext" => mean_estimate(&r.relay_stats.as_ref()?.lambda_ext),
        "mu_ext" => mean_estimate(&r.relay_stats.as_ref()?.mu_ext),
        _ => return None,
    })
}

fn sweep_point(spec: &ExperimentSpec, series: &Series, x: f64) -> Vec<Row> {
    let label = series.label();
    let metric_name = |m: &str| if label.is_empty() { m.to_string() } else { format!("{m}[{label}]") };
    let row = |engine: Engine, m: &str, value: Option<f64>, se: Option<f64>, verdict: String| Row {
        axis_name: spec.sweep_axis.clone(),
        axis_value: x,
        engine: engine.as_str().into(),
        metric_name: metric_name(m),
        value,
        stderr: se,
        verdict,
    };
    let mut rows = Vec::new();
    let point = point_config(spec, series, x);
    for &engine in &spec.engines {
        let (cfg, lambda) = match &point {
            Ok(p) => p,
            Err(e) => {
                rows.push(row(engine, "*", None, None, format!("error: {e}")));
                continue;
            }
        };
        match engine {
            Engine::Analytic => {
                for m in spec.metrics.iter().filter(|m| ANALYTIC_METRICS.contains(&m.as_str())) {
                    rows.push(match analytic_metric(cfg, spec.mode, *lambda, m) {
                        Ok(v) => row(engine, m, Some(v), None, "ok".into()),
                        Err(e) => row(engine, m, None, None, format!("error: {e}")),
                    });
                }
            }
            Engine::Simulate => {
                let sc = spec.sim.sim_config(cfg.to_network(), *lambda, spec.mode);
                match simulate(&sc, spec.sim.replications, 1) {
                    Ok(r) => {
                        let mu_max = mu_p_max_symmetric(cfg);
                        let verdict = r.stability_verdict().as_str().to_string();
                        for m in &spec.metrics {
                            if let Some(e) = simulated_metric(&r, mu_max, m) {
                                rows.push(row(engine, m, Some(e.value), Some(e.se), verdict.clone()));
                            }
                        }
                    }
                    Err(e) => rows.push(row(engine, "*", None, None, format!("error: {e}"))),
                }
            }
        }
    }
    rows
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> RunResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Io(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every (series, grid value) point; rows come out in grid order
/// whatever the completion order.
pub fn run_sweep(spec: &ExperimentSpec, jobs: usize) -> RunResult<Table> {
    spec.validate()?;
    let series = spec.series_or_default();
    let points: Vec<(&Series, f64)> = series.iter().flat_map(|s| spec.grid.iter().map(move |&x| (s, x))).collect();
    let rows: Vec<Vec<Row>> = with_pool(jobs, || points.par_iter().map(|(s, x)| sweep_point(spec, s, *x)).collect())?;
    let mut t = Table::new("sweep", &spec.name, config_hash(spec), Some(spec.sim.seed));
    t.rows = rows.into_iter().flatten().collect();
    Ok(t)
}

/// `sweep`: runs an experiment spec. Returns the table text and the output
/// path named in the spec, if any.
pub fn cmd_sweep(spec_path: &Path, overrides: &Overrides, jobs: usize) -> RunResult<(String, Option<PathBuf>)> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    spec.sim.apply(overrides);
    Ok((run_sweep(&spec, jobs)?.to_csv(), spec.output.map(PathBuf::from)))
}

/// Optimal-throughput curves over the normalised primary load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    pub name: String,
    pub base: System,
    /// Values of `lambda_p / mu_p_max`.
    pub lambda_ratios: Vec<f64>,
    /// One curve per entry, typically setting `N`, `Pe` and `Pf`.
    pub combos: Vec<Series>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl OptimizeSpec {
    pub fn load(path: &Path) -> RunResult<OptimizeSpec> {
        let mut s: OptimizeSpec = load_json(path)?;
        s.base = s.base.resolve(path.parent().unwrap_or(Path::new(".")))?;
        if s.base.symmetric()?.is_none() {
            return Err(RunError::Parse(format!("optimize spec {:?}: base must be symmetric", s.name)));
        }
        if s.lambda_ratios.is_empty() || s.combos.is_empty() {
            return Err(RunError::Parse(format!("optimize spec {:?}: lambda_ratios and combos must be non-empty", s.name)));
        }
        Ok(s)
    }
}

fn optimize_point(spec: &OptimizeSpec, combo: &Series, ratio: f64) -> Vec<Row> {
    let label = combo.label();
    let row = |m: &str, value: Option<f64>, verdict: &str| Row {
        axis_name: "lambda_ratio".into(),
        axis_value: ratio,
        engine: "optimize".into(),
        metric_name: format!("{m}[{label}]"),
        value,
        stderr: None,
        verdict: verdict.into(),
    };
    let result = (|| -> RunResult<_> {
        let mut cfg = spec.base.symmetric()?.expect("checked at load");
        combo.apply(&mut cfg)?;
        let lambda = ratio * mu_p_max_symmetric(&cfg);
        Ok(maximize_sum_throughput(&cfg, lambda, spec.grid)?)
    })();
    match result {
        Ok(o) => vec![
            row("sum_throughput", Some(o.value), "ok"),
            row("q_star", Some(o.q), "ok"),
            row("p0_star", Some(o.p0), "ok"),
        ],
        Err(RunError::Model(Error::InfeasiblePrimary { .. })) => ["sum_throughput", "q_star", "p0_star"]
            .iter()
            .map(|m| row(m, None, "infeasible"))
            .collect(),
        Err(e) => vec![row("*", None, &format!("error: {e}"))],
    }
}

pub fn run_optimize(spec: &OptimizeSpec, jobs: usize) -> RunResult<Table> {
    let points: Vec<(&Series, f64)> =
        spec.combos.iter().flat_map(|c| spec.lambda_ratios.iter().map(move |&r| (c, r))).collect();
    let rows: Vec<Vec<Row>> = with_pool(jobs, || points.par_iter().map(|(c, r)| optimize_point(spec, c, *r)).collect())?;
    let mut t = Table::new("optimize", &spec.name, config_hash(spec), None);
    t.rows = rows.into_iter().flatten().collect();
    Ok(t)
}

/// `optimize`: optimal secondary throughput per load and combination.
/// `lambda_ratios`, when given, replaces the grid in the file.
pub fn cmd_optimize(
    config_path: &Path,
    lambda_ratios: Option<Vec<f64>>,
    jobs: usize,
) -> RunResult<(String, Option<PathBuf>)> {
    let mut spec = OptimizeSpec::load(config_path)?;
    if let Some(r) = lambda_ratios {
        spec.lambda_ratios = r;
    }
    Ok((run_optimize(&spec, jobs)?.to_csv(), spec.output.map(PathBuf::from)))
}

/// `validate`: runs a check battery; the text is JSON lines, one per check.
pub fn cmd_validate(battery: Battery, seed: u64, jobs: usize) -> (String, RunResult<()>) {
    let report = run_battery(battery, seed, jobs);
    let text = report.to_json_lines();
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    let status = if failed == 0 { Ok(()) } else { Err(RunError::Validation { failed, total: report.checks.len() }) };
    (text, status)
}
