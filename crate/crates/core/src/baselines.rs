//! Baseline consensus optimizers: sequential ADMM, accelerated distributed
//! averaging and distributed (sub)gradient descent.
//!
//! Every algorithm runs node programs on a [`Network`]: a node reads only
//! its own state and values delivered by neighbors.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::consensus::ProblemInstance;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sim::{consensus_error, relative_gap, MessageUnit, Network, RunTrace, TraceRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Admm,
    Averaging,
    Subgradient,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Admm => "admm",
            Baseline::Averaging => "averaging",
            Baseline::Subgradient => "subgradient",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// ADMM penalty or gradient step size.
    pub beta: f64,
    pub max_iters: usize,
    /// Stop once the relative objective gap to the centralized optimum
    /// drops below this value.
    pub target_gap: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { beta: 1.0, max_iters: 500, target_gap: None }
    }
}

/// Sequential ADMM state. Multiplier `λ_ab` (with `a < b`) belongs to edge
/// `(a, b)`; node `b` updates it.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub theta: Vec<DVector<f64>>,
    pub lambda: BTreeMap<(usize, usize), DVector<f64>>,
    pub beta: f64,
    /// `known[i][k]`: latest value received from the `k`-th neighbor of `i`.
    known: Vec<Vec<DVector<f64>>>,
}

impl AdmmState {
    pub fn new(graph: &Graph, theta: Vec<DVector<f64>>, beta: f64) -> Self {
        let p = theta[0].len();
        let lambda = graph.edges().iter().map(|&e| (e, DVector::zeros(p))).collect();
        let known = (0..graph.n())
            .map(|i| graph.neighbors(i).iter().map(|&j| theta[j].clone()).collect())
            .collect();
        AdmmState { theta, lambda, beta, known }
    }
}

/// One sweep over nodes in index order. Node `i` minimizes
/// `f_i(θ) + (β d(i)/2)‖θ‖² - θᵀ[Σ_{j>i}(βθ_j + λ_ij) + Σ_{j<i}(βθ_j - λ_ji)]`
/// and then updates `λ_ji ← λ_ji - β(θ_j - θ_i)` for its predecessors.
pub fn admm_step(inst: &ProblemInstance, s: &mut AdmmState, net: &mut Network<'_>) -> Result<()> {
    let g = inst.graph();
    let beta = s.beta;
    for i in 0..g.n() {
        let mut linear = DVector::zeros(inst.p());
        for (k, &j) in g.neighbors(i).iter().enumerate() {
            let theta_j = &s.known[i][k];
            if j > i {
                linear += theta_j * beta + &s.lambda[&(i, j)];
            } else {
                linear += theta_j * beta - &s.lambda[&(j, i)];
            }
        }
        let shift = beta * g.degree(i) as f64;
        s.theta[i] = inst
            .local(i)
            .minimize_shifted(shift, &linear)
            .map_err(|f| Error::InnerSolver { node: i, iterations: f.iterations })?;
        for (k, &j) in g.neighbors(i).iter().enumerate() {
            if j < i {
                let upd = (&s.known[i][k] - &s.theta[i]) * beta;
                *s.lambda.get_mut(&(j, i)).expect("edge multiplier") -= upd;
            }
        }
        let boxes = net.broadcast(i, &s.theta[i])?;
        for &j in g.neighbors(i) {
            let (_, v) = &boxes.inbox(j)[0];
            let slot = g.neighbors(j).iter().position(|&x| x == i).expect("symmetric adjacency");
            s.known[j][slot] = v.clone();
        }
    }
    Ok(())
}

/// Three-variable accelerated averaging state.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragingState {
    pub theta: Vec<DVector<f64>>,
    pub omega: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub beta: f64,
    /// Running sum of `ω(1..=t)`.
    pub omega_sum: Vec<DVector<f64>>,
    pub t: usize,
}

impl AveragingState {
    pub fn new(theta: Vec<DVector<f64>>, beta: f64) -> Self {
        AveragingState {
            omega: theta.clone(),
            z: theta.clone(),
            omega_sum: theta.clone(),
            theta,
            beta,
            t: 1,
        }
    }

    /// `(1/T) Σ_t ω(t)`.
    pub fn running_average(&self) -> Vec<DVector<f64>> {
        self.omega_sum.iter().map(|s| s / self.t as f64).collect()
    }
}

/// ```text
/// ω(t+1) = θ(t) + ½ Σ_j (θ_j(t) - θ_i(t)) / max(d_i, d_j) - β g_i(t)
/// z(t+1) = ω(t) - β g_i(t)
/// θ(t+1) = ω(t+1) + (1 - 2/(9n+1)) (ω(t+1) - z(t+1))
/// ```
/// with `g_i(t) = ∇f_i(ω_i(t))`.
pub fn averaging_step(inst: &ProblemInstance, s: &mut AveragingState, net: &mut Network<'_>) -> Result<()> {
    let g = inst.graph();
    let n = g.n();
    let momentum = 1.0 - 2.0 / (9.0 * n as f64 + 1.0);
    let boxes = net.exchange(&s.theta)?;
    for i in 0..n {
        let grad = inst.local(i).gradient(&s.omega[i]) * s.beta;
        let di = g.degree(i);
        let mix = boxes.inbox(i).iter().fold(DVector::zeros(inst.p()), |acc, (j, tj)| {
            acc + (tj - &s.theta[i]) / di.max(g.degree(*j)) as f64
        });
        let omega_next = &s.theta[i] + mix * 0.5 - &grad;
        let z_next = &s.omega[i] - &grad;
        s.theta[i] = &omega_next + (&omega_next - &z_next) * momentum;
        s.omega_sum[i] += &omega_next;
        s.omega[i] = omega_next;
        s.z[i] = z_next;
    }
    s.t += 1;
    Ok(())
}

/// Metropolis weight `1/(1 + max(d_i, d_j))`.
pub fn metropolis_weight(g: &Graph, i: usize, j: usize) -> f64 {
    1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64)
}

/// `θ_i ← Σ_j W_ij θ_j - β ∇f_i(θ_i)` with Metropolis weights.
pub fn subgradient_step(
    inst: &ProblemInstance,
    theta: &mut [DVector<f64>],
    beta: f64,
    net: &mut Network<'_>,
) -> Result<()> {
    let g = inst.graph();
    let boxes = net.exchange(theta)?;
    let next: Vec<DVector<f64>> = (0..g.n())
        .map(|i| {
            let grad = inst.local(i).gradient(&theta[i]);
            let mut acc = &theta[i] * 1.0;
            for (j, tj) in boxes.inbox(i) {
                acc += (tj - &theta[i]) * metropolis_weight(g, i, *j);
            }
            acc - grad * beta
        })
        .collect();
    theta.clone_from_slice(&next);
    Ok(())
}

/// Runs a baseline from `θ = 0` and records the iterates fed to the
/// objective (`θ` for ADMM and subgradient, `ω` for averaging).
pub fn run_baseline(
    inst: &ProblemInstance,
    algo: Baseline,
    cfg: &BaselineConfig,
    unit: MessageUnit,
) -> Result<RunTrace> {
    if !(cfg.beta >= 0.0) || !cfg.beta.is_finite() {
        return Err(Error::Config(format!("beta must be finite and >= 0, got {}", cfg.beta)));
    }
    let start = Instant::now();
    let g = inst.graph();
    let mut net = Network::new(g, unit);
    let zeros = vec![DVector::zeros(inst.p()); g.n()];
    let f_star = if cfg.target_gap.is_some() { inst.centralized_optimum().map(|c| c.objective) } else { None };
    let mut trace = RunTrace::new(algo.name(), unit);
    trace.meta.params.insert("beta".into(), cfg.beta.into());

    let mut admm = AdmmState::new(g, zeros.clone(), cfg.beta);
    let mut avg = AveragingState::new(zeros.clone(), cfg.beta);
    let mut plain = zeros;
    let record = |k: usize, iterate: &[DVector<f64>], net: &Network<'_>| TraceRow {
        iter: k,
        objective: inst.objective(iterate),
        consensus_error: consensus_error(g, iterate),
        grad_mnorm: None,
        phase: None,
        messages_cumulative: net.messages(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    trace.push(record(0, &plain, &net));
    for k in 1..=cfg.max_iters {
        if let (Some(tol), Some(fs)) = (cfg.target_gap, f_star) {
            if relative_gap(trace.last().expect("initial row").objective, fs) <= tol {
                trace.meta.converged = true;
                break;
            }
        }
        let iterate: &[DVector<f64>] = match algo {
            Baseline::Admm => {
                admm_step(inst, &mut admm, &mut net)?;
                &admm.theta
            }
            Baseline::Averaging => {
                averaging_step(inst, &mut avg, &mut net)?;
                &avg.omega
            }
            Baseline::Subgradient => {
                subgradient_step(inst, &mut plain, cfg.beta, &mut net)?;
                &plain
            }
        };
        let row = record(k, iterate, &net);
        if !row.objective.is_finite() {
            trace.meta.diverged = true;
            trace.meta.notes.push(format!("objective became non-finite at k = {k}"));
            trace.push(row);
            break;
        }
        trace.push(row);
    }
    if let (Some(tol), Some(fs)) = (cfg.target_gap, f_star) {
        trace.meta.converged |= relative_gap(trace.last().expect("row").objective, fs) <= tol;
    }
    trace.final_iterate = match algo {
        Baseline::Admm => admm.theta,
        Baseline::Averaging => {
            trace.meta.notes.push("final_iterate is ω; the running average is available from AveragingState".into());
            avg.omega
        }
        Baseline::Subgradient => plain,
    };
    net.audit()?;
    Ok(trace)
}
