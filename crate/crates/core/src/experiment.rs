//! Experiment configuration and the Monte-Carlo driver.
//!
//! A run writes into its output directory:
//!
//! * `noise_free.csv`: the noise-free reference trace;
//! * `eps_<e>/replica_<m>.csv` and `eps_<e>/aggregate.csv` per privacy level;
//! * `budget.json`, `analysis.json`, `metadata.json`, `summary.json`;
//! * `timing.json`, the only file whose content depends on wall-clock time.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisReport, NormSurrogates};
use crate::engine::{self, RunConfig, RunState, Trace};
use crate::graph::{self, NetworkTopology, WeightParams, WeightSystem};
use crate::privacy::{NoNoise, PrivacyBudget, DEFAULT_SLACK};
use crate::problem::{self, ObjectiveSuite, RidgeInstance, RidgeOptimum};
use crate::{Error, Result};

/// Environment variable capping the number of replica worker threads.
pub const WORKERS_ENV: &str = "SDPP_WORKERS";

/// Named five-agent topology used by the benchmark preset.
pub const RING_CHORDS: &str = "ring-chords";
/// Directed ring over `n` agents.
pub const RING: &str = "ring";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Uniform(f64),
    PerAgent(Vec<f64>),
}

impl BetaSpec {
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            BetaSpec::Uniform(b) => Ok(vec![*b; n]),
            BetaSpec::PerAgent(v) if v.len() == n => Ok(v.clone()),
            BetaSpec::PerAgent(v) => Err(Error::Config(format!(
                "beta lists {} values for {n} agents",
                v.len()
            ))),
        }
    }
}

/// Flat key-value experiment description. Every field has a default (the
/// benchmark preset), and the resolved values are echoed into `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `ring-chords`, `ring`, or a path to an edge-list file.
    pub topology: String,
    pub c_r: f64,
    pub zeta: f64,
    pub c_c: f64,
    pub beta: BetaSpec,
    pub n: usize,
    pub p: usize,
    pub penalty: f64,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub horizon: usize,
    pub slack: f64,
    pub noise_free: bool,
    pub eta: f64,
    pub replicas: usize,
    pub out_dir: PathBuf,
    /// Multiplier on the largest observed gradient norm.
    pub gradient_safety: f64,
    /// Added to each spectral radius for the surrogate contraction factors.
    pub margin: f64,
    /// Trailing fraction of iterations averaged into the plateau.
    pub plateau_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::ridge5()
    }
}

impl ExperimentConfig {
    /// Five agents, `p = 10`, stepsize and penalty `0.01`, `beta = 0.5`,
    /// `alpha_i = 0.01`, `eps in {1, 5, 10}`, 50 replicas of 5000 iterations.
    pub fn ridge5() -> Self {
        Self {
            topology: RING_CHORDS.into(),
            c_r: 1.0,
            zeta: 0.01,
            c_c: 1.0,
            beta: BetaSpec::Uniform(0.5),
            n: 5,
            p: 10,
            penalty: 0.01,
            seed: 2022,
            epsilons: vec![1.0, 5.0, 10.0],
            horizon: 5000,
            slack: DEFAULT_SLACK,
            noise_free: false,
            eta: 0.01,
            replicas: 50,
            out_dir: PathBuf::from("out"),
            gradient_safety: 2.0,
            margin: analysis::DEFAULT_MARGIN,
            plateau_fraction: 0.1,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ridge5" => Ok(Self::ridge5()),
            other => Err(Error::Config(format!("unknown preset `{other}` (available: ridge5)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.p == 0 {
            return fail(format!("n and p must be positive, got n = {}, p = {}", self.n, self.p));
        }
        if self.replicas == 0 {
            return fail("replica count must be at least 1".into());
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return fail(format!("stepsize eta must be positive, got {}", self.eta));
        }
        if !(self.penalty > 0.0) {
            return fail(format!("penalty must be positive for strong convexity, got {}", self.penalty));
        }
        if !self.noise_free {
            if self.epsilons.is_empty() {
                return fail("at least one privacy level is required unless noise_free is set".into());
            }
            if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0)) {
                return fail(format!("privacy levels must be positive, got {e}"));
            }
        }
        if !(self.gradient_safety > 0.0) {
            return fail(format!("gradient_safety must be positive, got {}", self.gradient_safety));
        }
        if !(self.plateau_fraction > 0.0 && self.plateau_fraction <= 1.0) {
            return fail(format!("plateau_fraction must lie in (0, 1], got {}", self.plateau_fraction));
        }
        if self.topology != RING_CHORDS && self.topology != RING && !Path::new(&self.topology).exists() {
            return fail(format!("topology file `{}` does not exist", self.topology));
        }
        Ok(())
    }

    pub fn load_topology(&self) -> Result<NetworkTopology> {
        let topo = match self.topology.as_str() {
            RING_CHORDS => NetworkTopology::ring_with_chords(),
            RING => NetworkTopology::directed_ring(self.n)?,
            path => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                NetworkTopology::from_edge_list(&text)?
            }
        };
        if topo.n() != self.n {
            return Err(Error::Config(format!(
                "topology `{}` has {} agents but n = {}",
                self.topology,
                topo.n(),
                self.n
            )));
        }
        Ok(topo)
    }

    pub fn weight_params(&self) -> Result<WeightParams> {
        Ok(WeightParams {
            c_r: self.c_r,
            zeta: self.zeta,
            c_c: self.c_c,
            beta: self.beta.resolve(self.n)?,
        })
    }
}

/// Seed derivation: stream `label`, slot `index` of a generator keyed by the
/// master seed.
pub fn derive_seed(seed: u64, label: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

const INIT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Seed for replica `m`'s noise, shared across privacy levels.
pub fn noise_seed(seed: u64, replica: usize) -> u64 {
    derive_seed(seed, NOISE_STREAM, replica as u64)
}

pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, INIT_STREAM, 0)
}

/// Instance, network and starting point shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub topology: NetworkTopology,
    pub weights: WeightSystem,
    pub instance: RidgeInstance,
    pub suite: ObjectiveSuite,
    pub optimum: RidgeOptimum,
    pub initial: RunState,
}

impl Setup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let topology = cfg.load_topology()?;
        let weights = WeightSystem::from_topology(&topology, &cfg.weight_params()?)?;
        let (instance, suite) = problem::generate_ridge(cfg.n, cfg.p, cfg.penalty, cfg.seed)?;
        let optimum = problem::closed_form_optimum(&instance)?;
        let initial = RunState::uniform(cfg.n, cfg.p, init_seed(cfg.seed), cfg.eta)?;
        Ok(Self {
            topology,
            weights,
            instance,
            suite,
            optimum,
            initial,
        })
    }

    pub fn noise_free(&self, horizon: usize, record_iterates: bool) -> Result<engine::RunOutput> {
        let cfg = RunConfig {
            record_iterates,
            ..RunConfig::new(horizon)
        };
        engine::run(&self.weights, &self.suite, &mut NoNoise, self.initial.clone(), &cfg)
    }

    pub fn noisy(&self, budget: &PrivacyBudget, noise_seed: u64, horizon: usize) -> Result<Trace> {
        let mut noise = budget.streams(noise_seed)?;
        Ok(engine::run(&self.weights, &self.suite, &mut noise, self.initial.clone(), &RunConfig::new(horizon))?.trace)
    }
}

/// Mean and standard deviation curves over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean_residual: Vec<f64>,
    pub std_residual: Vec<f64>,
    pub mean_consensus: Vec<f64>,
    pub std_consensus: Vec<f64>,
    pub mean_tracking: Vec<f64>,
    pub std_tracking: Vec<f64>,
}

/// Arithmetic mean and sample standard deviation (zero for one sample).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn of(traces: &[Trace]) -> Self {
        let len = traces.iter().map(Trace::len).min().unwrap_or(0);
        let column = |pick: fn(&Trace) -> &Vec<f64>, k: usize| -> (f64, f64) {
            let vals: Vec<f64> = traces.iter().map(|t| pick(t)[k]).collect();
            mean_std(&vals)
        };
        let mut out = Aggregate {
            mean_residual: Vec::with_capacity(len),
            std_residual: Vec::with_capacity(len),
            mean_consensus: Vec::with_capacity(len),
            std_consensus: Vec::with_capacity(len),
            mean_tracking: Vec::with_capacity(len),
            std_tracking: Vec::with_capacity(len),
        };
        for k in 0..len {
            let (m, s) = column(|t| &t.residual, k);
            out.mean_residual.push(m);
            out.std_residual.push(s);
            let (m, s) = column(|t| &t.consensus_error, k);
            out.mean_consensus.push(m);
            out.std_consensus.push(s);
            let (m, s) = column(|t| &t.tracking_error, k);
            out.mean_tracking.push(m);
            out.std_tracking.push(s);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,mean_residual,std_residual,mean_consensus_error,std_consensus_error,mean_tracking_error,std_tracking_error\n",
        );
        for k in 0..self.mean_residual.len() {
            out.push_str(&format!(
                "{k},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.mean_residual[k],
                self.std_residual[k],
                self.mean_consensus[k],
                self.std_consensus[k],
                self.mean_tracking[k],
                self.std_tracking[k]
            ));
        }
        out
    }
}

/// Plateau statistics for one privacy level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateauStat {
    pub epsilon: f64,
    pub theta_bar: f64,
    pub replicas: usize,
    /// Per-replica plateau residuals, in replica order.
    pub plateaus: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// `std / sqrt(M)`.
    pub standard_error: f64,
    /// Mean over replicas and trailing iterations of `||xbar_k - x*||^2`.
    pub mean_optimality_error: f64,
    pub final_mean_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonResult {
    pub budget: PrivacyBudget,
    pub stat: PlateauStat,
    #[serde(skip)]
    pub traces: Vec<Trace>,
    #[serde(skip)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisEntry {
    pub epsilon: Option<f64>,
    pub theta_bar: f64,
    pub report: Option<AnalysisReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub gradient_bound: f64,
    pub max_reference_gradient: f64,
    pub noise_free_final_residual: f64,
    pub norms: Option<NormSurrogates>,
    pub analysis: Vec<AnalysisEntry>,
    pub results: Vec<EpsilonResult>,
    #[serde(skip)]
    pub noise_free: Trace,
}

impl ExperimentSummary {
    pub fn plateaus(&self) -> Vec<&PlateauStat> {
        self.results.iter().map(|r| &r.stat).collect()
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(WORKERS_ENV) {
        let workers: usize = value
            .parse()
            .ok()
            .filter(|w| *w > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{value}`")))?;
        builder = builder.num_threads(workers);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Noise-free reference run, gradient bound and analysis for every privacy
/// level; no Monte-Carlo simulation.
pub fn analyze(cfg: &ExperimentConfig, setup: &Setup) -> Result<(Trace, f64, Option<NormSurrogates>, Vec<AnalysisEntry>)> {
    let reference = setup.noise_free(cfg.horizon, true)?;
    let iterates = reference.iterates.as_deref().unwrap_or_default();
    let max_gradient = problem::estimate_gradient_bound(&setup.suite, iterates, 1.0)?;
    let gradient_bound = max_gradient * cfg.gradient_safety;

    let mut levels: Vec<(Option<f64>, f64)> = vec![(None, 0.0)];
    if !cfg.noise_free {
        for &eps in &cfg.epsilons {
            let budget = PrivacyBudget::uniform(cfg.n, eps, cfg.horizon, gradient_bound, cfg.p, cfg.slack)?;
            levels.push((Some(eps), budget.theta_bar()));
        }
    }
    let norms = analysis::default_norm_surrogates(&setup.weights, cfg.margin);
    let entries = levels
        .into_iter()
        .map(|(epsilon, theta_bar)| {
            let result = norms
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|n| {
                    analysis::compute_report(&setup.weights, &setup.suite, n, theta_bar, cfg.eta)
                        .map_err(|e| e.to_string())
                });
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e)),
            };
            AnalysisEntry {
                epsilon,
                theta_bar,
                report,
                error,
            }
        })
        .collect();
    Ok((reference.trace, gradient_bound, norms.ok(), entries))
}

fn plateau_stat(cfg: &ExperimentConfig, budget: &PrivacyBudget, traces: &[Trace], aggregate: &Aggregate) -> PlateauStat {
    let plateaus: Vec<f64> = traces.iter().map(|t| t.plateau(cfg.plateau_fraction)).collect();
    let (mean, std) = mean_std(&plateaus);
    let opt: Vec<f64> = traces
        .iter()
        .map(|t| engine::tail_mean(&t.optimality_error, cfg.plateau_fraction))
        .collect();
    PlateauStat {
        epsilon: budget.epsilon[0],
        theta_bar: budget.theta_bar(),
        replicas: traces.len(),
        mean,
        std,
        standard_error: std / (traces.len() as f64).sqrt(),
        plateaus,
        mean_optimality_error: mean_std(&opt).0,
        final_mean_residual: aggregate.mean_residual.last().copied().unwrap_or(f64::NAN),
    }
}

/// Runs the full experiment in memory without touching the filesystem.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(Setup, ExperimentSummary)> {
    let setup = Setup::build(cfg)?;
    let (noise_free, gradient_bound, norms, analysis) = analyze(cfg, &setup)?;
    let mut results = Vec::new();
    if !cfg.noise_free {
        let pool = worker_pool()?;
        for &eps in &cfg.epsilons {
            let budget = PrivacyBudget::uniform(cfg.n, eps, cfg.horizon, gradient_bound, cfg.p, cfg.slack)?;
            let traces: Vec<Trace> = pool.install(|| {
                (0..cfg.replicas)
                    .into_par_iter()
                    .map(|m| setup.noisy(&budget, noise_seed(cfg.seed, m), cfg.horizon))
                    .collect::<Result<Vec<_>>>()
            })?;
            let aggregate = Aggregate::of(&traces);
            let stat = plateau_stat(cfg, &budget, &traces, &aggregate);
            results.push(EpsilonResult {
                budget,
                stat,
                traces,
                aggregate,
            });
        }
    }
    let summary = ExperimentSummary {
        gradient_bound,
        max_reference_gradient: gradient_bound / cfg.gradient_safety,
        noise_free_final_residual: noise_free.residual.last().copied().unwrap_or(f64::NAN),
        norms,
        analysis,
        results,
        noise_free,
    };
    Ok((setup, summary))
}

/// Directory name for a privacy level, e.g. `eps_1`, `eps_0.5`.
pub fn epsilon_dir(eps: f64) -> String {
    format!("eps_{eps}")
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ExperimentConfig,
    topology_edges: String,
    anchor_rule: &'static str,
    output_noise: &'static str,
    initialization: &'static str,
    replica_noise: &'static str,
    init_seed: u64,
    noise_seeds: Vec<u64>,
    gradient_bound: f64,
    max_reference_gradient: f64,
    optimum: &'a RidgeOptimum,
    instance: &'a RidgeInstance,
    weights: WeightMetadata,
    version: &'static str,
}

#[derive(Serialize)]
struct WeightMetadata {
    r: Vec<Vec<f64>>,
    ctilde: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    roots: Vec<usize>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn metadata_json(cfg: &ExperimentConfig, setup: &Setup, summary: &ExperimentSummary) -> Result<String> {
    let w = &setup.weights;
    to_json(&Metadata {
        config: cfg,
        topology_edges: setup.topology.to_edge_list(),
        anchor_rule: "x~_i = 10 (i - 1) / (n - 1) in every coordinate; 5 when n = 1",
        output_noise: "gamma_i ~ N(0, 5), variance 5",
        initialization: "x_i0 ~ U[0,1]^p from init_seed, y_alpha_0 = y_beta_0 = 0; shared by all replicas",
        replica_noise: "replica m uses noise seed noise_seeds[m] at every privacy level",
        init_seed: init_seed(cfg.seed),
        noise_seeds: if cfg.noise_free {
            Vec::new()
        } else {
            (0..cfg.replicas).map(|m| noise_seed(cfg.seed, m)).collect()
        },
        gradient_bound: summary.gradient_bound,
        max_reference_gradient: summary.max_reference_gradient,
        optimum: &setup.optimum,
        instance: &setup.instance,
        weights: WeightMetadata {
            r: rows(&w.r),
            ctilde: rows(&w.ctilde),
            alpha: w.alpha.iter().copied().collect(),
            beta: w.beta.iter().copied().collect(),
            u: w.u.iter().copied().collect(),
            v: w.v.iter().copied().collect(),
            roots: w.roots.common_roots.iter().map(|r| r + 1).collect(),
        },
        version: env!("CARGO_PKG_VERSION"),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs the experiment and writes every artifact under `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let started = std::time::Instant::now();
    let (setup, summary) = simulate(cfg)?;
    let out = &cfg.out_dir;
    create_dir(out)?;
    write(out.join("noise_free.csv"), &summary.noise_free.to_csv())?;
    let mut timing = vec![("noise_free".to_string(), summary.noise_free.elapsed_secs)];
    for result in &summary.results {
        let dir = out.join(epsilon_dir(result.stat.epsilon));
        create_dir(&dir)?;
        for (m, trace) in result.traces.iter().enumerate() {
            write(dir.join(format!("replica_{m:03}.csv")), &trace.to_csv())?;
            timing.push((format!("{}/replica_{m:03}", epsilon_dir(result.stat.epsilon)), trace.elapsed_secs));
        }
        write(dir.join("aggregate.csv"), &result.aggregate.to_csv())?;
    }
    let budgets: Vec<&PrivacyBudget> = summary.results.iter().map(|r| &r.budget).collect();
    write(out.join("budget.json"), &to_json(&budgets)?)?;
    write(out.join("analysis.json"), &to_json(&summary.analysis)?)?;
    write(out.join("metadata.json"), &metadata_json(cfg, &setup, &summary)?)?;
    write(out.join("summary.json"), &to_json(&summary)?)?;
    timing.push(("total".into(), started.elapsed().as_secs_f64()));
    let timing: serde_json::Map<String, serde_json::Value> =
        timing.into_iter().map(|(k, v)| (k, serde_json::json!(v))).collect();
    write(out.join("timing.json"), &to_json(&timing)?)?;
    Ok(summary)
}

/// Writes `analysis.json` and `metadata.json` only.
pub fn run_analysis_only(cfg: &ExperimentConfig) -> Result<Vec<AnalysisEntry>> {
    let setup = Setup::build(cfg)?;
    let (noise_free, gradient_bound, norms, analysis) = analyze(cfg, &setup)?;
    let summary = ExperimentSummary {
        gradient_bound,
        max_reference_gradient: gradient_bound / cfg.gradient_safety,
        noise_free_final_residual: noise_free.residual.last().copied().unwrap_or(f64::NAN),
        norms,
        analysis,
        results: Vec::new(),
        noise_free,
    };
    create_dir(&cfg.out_dir)?;
    write(cfg.out_dir.join("analysis.json"), &to_json(&summary.analysis)?)?;
    write(cfg.out_dir.join("metadata.json"), &metadata_json(cfg, &setup, &summary)?)?;
    Ok(summary.analysis)
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineComparison {
    pub noise_free_final: f64,
    pub noisy_final: Option<f64>,
    pub noisy_plateau: Option<f64>,
    pub baseline_final: f64,
    #[serde(skip)]
    pub csv: String,
}

/// Private iteration with and without noise next to plain push-pull on the
/// same instance and starting point. The noisy column uses the first privacy
/// level and replica 0's noise.
pub fn compare_baseline(cfg: &ExperimentConfig) -> Result<BaselineComparison> {
    let setup = Setup::build(cfg)?;
    let reference = setup.noise_free(cfg.horizon, true)?;
    let noisy = if cfg.noise_free {
        None
    } else {
        let iterates = reference.iterates.as_deref().unwrap_or_default();
        let bound = problem::estimate_gradient_bound(&setup.suite, iterates, cfg.gradient_safety)?;
        let budget = PrivacyBudget::uniform(cfg.n, cfg.epsilons[0], cfg.horizon, bound, cfg.p, cfg.slack)?;
        Some(setup.noisy(&budget, noise_seed(cfg.seed, 0), cfg.horizon)?)
    };
    let c_plain = graph::build_plain_push_matrix(&setup.topology, cfg.c_c)?;
    let baseline = engine::run_baseline_push_pull(
        &setup.weights.r,
        &c_plain,
        &setup.suite,
        setup.initial.x.clone(),
        cfg.eta,
        cfg.horizon,
    )?;

    let mut csv = String::from("k,sd_noise_free,sd_noisy,baseline\n");
    for k in 0..=cfg.horizon {
        let noisy_k = noisy.as_ref().map_or(String::new(), |t| format!("{:e}", t.residual[k]));
        csv.push_str(&format!(
            "{k},{:e},{noisy_k},{:e}\n",
            reference.trace.residual[k], baseline.residual[k]
        ));
    }
    create_dir(&cfg.out_dir)?;
    write(cfg.out_dir.join("comparison.csv"), &csv)?;
    let last = |t: &Trace| t.residual.last().copied().unwrap_or(f64::NAN);
    Ok(BaselineComparison {
        noise_free_final: last(&reference.trace),
        noisy_final: noisy.as_ref().map(last),
        noisy_plateau: noisy.as_ref().map(|t| t.plateau(cfg.plateau_fraction)),
        baseline_final: last(&baseline),
        csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trips_through_toml() {
        let cfg = ExperimentConfig::ridge5();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("replicas = 3\nbeta = [0.1, 0.2, 0.3, 0.4, 0.5]\n").unwrap();
        assert_eq!(cfg.replicas, 3);
        assert_eq!(cfg.n, 5);
        assert_eq!(cfg.beta.resolve(5).unwrap()[4], 0.5);
        assert!(ExperimentConfig::from_toml("unknown_key = 1").is_err());
    }

    #[test]
    fn validation_names_the_constraint() {
        let mut cfg = ExperimentConfig::ridge5();
        cfg.replicas = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("replica"));
        let mut cfg = ExperimentConfig::ridge5();
        cfg.eta = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("eta"));
        let mut cfg = ExperimentConfig::ridge5();
        cfg.topology = "/nonexistent/edges.txt".into();
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
    }

    #[test]
    fn mean_std_small_cases() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(noise_seed(1, 0), noise_seed(1, 1));
        assert_ne!(noise_seed(1, 0), noise_seed(2, 0));
        assert_ne!(noise_seed(1, 0), init_seed(1));
        assert_eq!(noise_seed(7, 3), noise_seed(7, 3));
    }

    #[test]
    fn epsilon_directory_names() {
        assert_eq!(epsilon_dir(1.0), "eps_1");
        assert_eq!(epsilon_dir(0.5), "eps_0.5");
    }
}
