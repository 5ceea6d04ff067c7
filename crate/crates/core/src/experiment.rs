//! Experiment configuration, presets and the runner that writes traces and
//! a comparison summary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{run_baseline, Baseline, BaselineConfig};
use crate::consensus::ProblemInstance;
use crate::error::{Error, Result};
use crate::graph::{generate_random_graph, Graph};
use crate::newton::{self, NewtonConfig, StepMode};
use crate::problems::{
    build_logistic, build_regression, build_rl, generate_synthetic_logistic, generate_synthetic_regression,
    generate_synthetic_rl, InstanceManifest, Regularizer, DEFAULT_SMOOTHING,
};
use crate::sim::{relative_gap, MessageUnit, RunTrace};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SDDN_OUT_DIR";

/// Pooled problems with more unknowns than this skip the centralized oracle.
pub const ORACLE_MAX_DIM: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Random { n: usize, m: usize, seed: Option<u64> },
    File { path: PathBuf },
}

fn default_noise() -> f64 {
    1.0
}

fn default_mu() -> f64 {
    0.05
}

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Regression {
        p: usize,
        points: usize,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
        #[serde(default = "default_mu")]
        mu: f64,
    },
    LogisticL2 {
        p: usize,
        points: usize,
        #[serde(default = "default_mu")]
        mu: f64,
    },
    LogisticL1 {
        p: usize,
        points: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    ReinforcementLearning {
        p: usize,
        trajectories_per_node: usize,
        horizon: usize,
        #[serde(default = "default_mu")]
        mu: f64,
    },
    /// Instance stored on disk; the graph spec is ignored.
    Manifest { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    SddNewton(NewtonConfig),
    Admm(BaselineConfig),
    Averaging(BaselineConfig),
    Subgradient(BaselineConfig),
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::SddNewton(_) => "sdd_newton",
            AlgorithmSpec::Admm(_) => "admm",
            AlgorithmSpec::Averaging(_) => "averaging",
            AlgorithmSpec::Subgradient(_) => "subgradient",
        }
    }

    fn cap_iters(&mut self, cap: usize) {
        match self {
            AlgorithmSpec::SddNewton(c) => c.max_iters = c.max_iters.min(cap),
            AlgorithmSpec::Admm(c) | AlgorithmSpec::Averaging(c) | AlgorithmSpec::Subgradient(c) => {
                c.max_iters = c.max_iters.min(cap)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub message_unit: MessageUnit,
    /// Relative objective gap used for iterations-to-tolerance.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-6
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms: at least one algorithm is required".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Limits every algorithm to a few iterations for smoke runs.
    pub fn quick(mut self) -> Self {
        for a in &mut self.algorithms {
            a.cap_iters(200);
        }
        self
    }

    /// Builds the problem instance described by the config.
    pub fn build_instance(&self) -> Result<ProblemInstance> {
        if let ProblemSpec::Manifest { path } = &self.problem {
            let base = path.parent().unwrap_or(Path::new("."));
            return InstanceManifest::load(path)?.build(base);
        }
        let graph = match &self.graph {
            GraphSpec::Random { n, m, seed } => generate_random_graph(*n, *m, seed.unwrap_or(self.seed))?,
            GraphSpec::File { path } => Graph::load(path)?,
        };
        let n = graph.n();
        match self.problem {
            ProblemSpec::Regression { p, points, noise_sigma, mu } => {
                let data = generate_synthetic_regression(n, p, points, noise_sigma, self.seed)?;
                build_regression(graph, &data.nodes, mu)
            }
            ProblemSpec::LogisticL2 { p, points, mu } => {
                let data = generate_synthetic_logistic(n, p, points, self.seed)?;
                build_logistic(graph, &data.nodes, mu, Regularizer::L2)
            }
            ProblemSpec::LogisticL1 { p, points, mu, smoothing } => {
                let data = generate_synthetic_logistic(n, p, points, self.seed)?;
                build_logistic(graph, &data.nodes, mu, Regularizer::SmoothedL1 { alpha: smoothing })
            }
            ProblemSpec::ReinforcementLearning { p, trajectories_per_node, horizon, mu } => {
                let trajs = generate_synthetic_rl(n, p, trajectories_per_node, horizon, self.seed)?;
                build_rl(graph, &trajs, mu)
            }
            ProblemSpec::Manifest { .. } => unreachable!("handled above"),
        }
    }
}

fn newton_grid() -> AlgorithmSpec {
    AlgorithmSpec::SddNewton(NewtonConfig { step_mode: StepMode::grid(), ..NewtonConfig::default() })
}

fn baseline(beta: f64, max_iters: usize) -> BaselineConfig {
    BaselineConfig { beta, max_iters, target_gap: None }
}

pub const PRESETS: [&str; 5] = [
    "synthetic-regression-small",
    "paper-synthetic",
    "logistic-l2-small",
    "logistic-l1-small",
    "rl-small",
];

/// Built-in experiment configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = |graph, problem, algorithms| ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed: 1,
        graph,
        problem,
        algorithms,
        output_dir: None,
        message_unit: MessageUnit::Vector,
        tolerance: 1e-6,
    };
    let small = GraphSpec::Random { n: 20, m: 40, seed: None };
    Ok(match name {
        "synthetic-regression-small" => cfg(
            small,
            ProblemSpec::Regression { p: 5, points: 200, noise_sigma: 1.0, mu: 0.05 },
            vec![
                newton_grid(),
                AlgorithmSpec::Admm(baseline(3.0, 2000)),
                AlgorithmSpec::Averaging(baseline(2e-5, 30000)),
                AlgorithmSpec::Subgradient(baseline(2e-5, 30000)),
            ],
        ),
        "paper-synthetic" => cfg(
            GraphSpec::Random { n: 100, m: 250, seed: None },
            ProblemSpec::Regression { p: 80, points: 25000, noise_sigma: 1.0, mu: 0.05 },
            vec![
                newton_grid(),
                AlgorithmSpec::Admm(baseline(3.0, 200)),
                AlgorithmSpec::Averaging(baseline(1e-5, 200)),
                AlgorithmSpec::Subgradient(baseline(1e-5, 200)),
            ],
        ),
        "logistic-l2-small" => cfg(
            small,
            ProblemSpec::LogisticL2 { p: 5, points: 400, mu: 0.05 },
            vec![
                newton_grid(),
                AlgorithmSpec::Admm(baseline(1.0, 1000)),
                AlgorithmSpec::Averaging(baseline(1e-3, 5000)),
                AlgorithmSpec::Subgradient(baseline(1e-3, 5000)),
            ],
        ),
        "logistic-l1-small" => cfg(
            small,
            ProblemSpec::LogisticL1 { p: 5, points: 400, mu: 0.05, smoothing: DEFAULT_SMOOTHING },
            vec![
                newton_grid(),
                AlgorithmSpec::Admm(baseline(1.0, 1000)),
                AlgorithmSpec::Averaging(baseline(1e-3, 5000)),
                AlgorithmSpec::Subgradient(baseline(1e-3, 5000)),
            ],
        ),
        "rl-small" => cfg(
            small,
            ProblemSpec::ReinforcementLearning { p: 6, trajectories_per_node: 10, horizon: 15, mu: 0.05 },
            vec![
                newton_grid(),
                AlgorithmSpec::Admm(baseline(3.0, 2000)),
                AlgorithmSpec::Averaging(baseline(1e-5, 20000)),
                AlgorithmSpec::Subgradient(baseline(1e-5, 20000)),
            ],
        ),
        other => {
            return Err(Error::Config(format!("unknown preset {other:?}; available: {}", PRESETS.join(", "))))
        }
    })
}

/// Per-algorithm line of the summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub file_stem: String,
    pub iterations: usize,
    pub iterations_to_tolerance: Option<usize>,
    pub messages_to_tolerance: Option<u64>,
    pub final_objective: f64,
    pub final_objective_gap: Option<f64>,
    pub final_consensus_error: f64,
    pub total_messages: u64,
    pub converged: bool,
    pub diverged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub message_unit: MessageUnit,
    pub tolerance: f64,
    pub centralized_objective: Option<f64>,
    pub notes: Vec<String>,
    pub runs: Vec<RunSummary>,
}

impl Summary {
    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(|r| r.error.is_none())
    }

    pub fn run(&self, algorithm: &str) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }

    /// Fixed-width comparison table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>8} {:>10} {:>14} {:>12} {:>12}\n",
            "algorithm", "iters", "to_tol", "messages", "obj_gap", "consensus"
        );
        for r in &self.runs {
            let opt = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
            out += &format!(
                "{:<14} {:>8} {:>10} {:>14} {:>12} {:>12.3e}\n",
                r.file_stem,
                r.iterations,
                opt(r.iterations_to_tolerance),
                r.total_messages,
                r.final_objective_gap.map_or("-".to_string(), |g| format!("{g:.3e}")),
                r.final_consensus_error,
            );
        }
        out
    }
}

/// Runtime overrides applied on top of a config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub message_unit: Option<MessageUnit>,
    pub quick: bool,
    /// Skip writing files.
    pub dry: bool,
}

/// Resolves the output directory: explicit option, then config, then the
/// environment, then `./runs`.
pub fn resolve_out_dir(opts: &RunOptions, cfg: &ExperimentConfig) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Traces and summary of one experiment.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: Summary,
    pub traces: Vec<RunTrace>,
    pub out_dir: Option<PathBuf>,
}

fn run_one(inst: &ProblemInstance, spec: &AlgorithmSpec, unit: MessageUnit) -> Result<RunTrace> {
    match spec {
        AlgorithmSpec::SddNewton(c) => Ok(newton::run(inst, c, unit)?.trace),
        AlgorithmSpec::Admm(c) => run_baseline(inst, Baseline::Admm, c, unit),
        AlgorithmSpec::Averaging(c) => run_baseline(inst, Baseline::Averaging, c, unit),
        AlgorithmSpec::Subgradient(c) => run_baseline(inst, Baseline::Subgradient, c, unit),
    }
}

fn stems(algos: &[AlgorithmSpec]) -> Vec<String> {
    algos
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let dup = algos.iter().filter(|b| b.name() == a.name()).count() > 1;
            if dup {
                format!("{}_{k}", a.name())
            } else {
                a.name().to_string()
            }
        })
        .collect()
}

/// Runs every configured algorithm (in parallel threads) and writes
/// `<out>/<name>/<algorithm>.csv`, the JSON sidecars and `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(unit) = opts.message_unit {
        cfg.message_unit = unit;
    }
    if opts.quick {
        cfg = cfg.quick();
    }
    cfg.validate()?;
    let hash = cfg.hash();
    let inst = cfg.build_instance()?;
    let mut notes = Vec::new();
    let f_star = if inst.p() <= ORACLE_MAX_DIM {
        let c = inst.centralized_optimum().map(|c| c.objective);
        if c.is_none() {
            notes.push("centralized oracle failed; objective gaps unavailable".to_string());
        }
        c
    } else {
        notes.push(format!("centralized oracle skipped: dimension {} exceeds {ORACLE_MAX_DIM}", inst.p()));
        None
    };

    let unit = cfg.message_unit;
    let results: Vec<Result<RunTrace>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .algorithms
            .iter()
            .map(|a| {
                let inst = &inst;
                s.spawn(move || run_one(inst, a, unit))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("algorithm thread panicked")).collect()
    });

    let out_dir = (!opts.dry).then(|| resolve_out_dir(opts, &cfg).join(&cfg.name));
    let mut runs = Vec::new();
    let mut traces = Vec::new();
    for ((spec, stem), res) in cfg.algorithms.iter().zip(stems(&cfg.algorithms)).zip(results) {
        match res {
            Ok(mut trace) => {
                trace.meta.config_hash = hash.clone();
                trace.meta.seed = cfg.seed;
                trace.meta.params.insert("quick".into(), opts.quick.into());
                if let Some(dir) = &out_dir {
                    trace.save(dir, &stem)?;
                }
                let last = trace.last().expect("traces start with an initial row");
                let hit = f_star.and_then(|fs| trace.first_within_gap(fs, cfg.tolerance));
                runs.push(RunSummary {
                    algorithm: spec.name().to_string(),
                    file_stem: stem,
                    iterations: trace.iterations(),
                    iterations_to_tolerance: hit.map(|r| r.iter),
                    messages_to_tolerance: hit.map(|r| r.messages_cumulative),
                    final_objective: last.objective,
                    final_objective_gap: f_star.map(|fs| relative_gap(last.objective, fs)),
                    final_consensus_error: last.consensus_error,
                    total_messages: last.messages_cumulative,
                    converged: trace.meta.converged,
                    diverged: trace.meta.diverged,
                    error: None,
                });
                traces.push(trace);
            }
            Err(e) => runs.push(RunSummary {
                algorithm: spec.name().to_string(),
                file_stem: stem,
                iterations: 0,
                iterations_to_tolerance: None,
                messages_to_tolerance: None,
                final_objective: f64::NAN,
                final_objective_gap: None,
                final_consensus_error: f64::NAN,
                total_messages: 0,
                converged: false,
                diverged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    let summary = Summary {
        name: cfg.name.clone(),
        config_hash: hash,
        seed: cfg.seed,
        message_unit: unit,
        tolerance: cfg.tolerance,
        centralized_objective: f_star,
        notes,
        runs,
    };
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        std::fs::write(dir.join("config.json"), cfg.to_json()?)?;
    }
    Ok(Outcome { summary, traces, out_dir })
}
