//! Distributed Newton ascent on the consensus dual.
//!
//! The Newton system `M Q⁻¹ M d = M y` (with `Q = ∇²f(y)`) is reduced to
//! Laplacian solves:
//!
//! 1. `L z_r = L y_r` for every coordinate block `r`,
//! 2. `b(i) = Q_i (z(i) + c)`, where the shared shift `c` makes every block
//!    of `b` sum to zero,
//! 3. `L d_r = b_r`.
//!
//! The update is `λ ← λ + α d`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::consensus::{
    node_vector, split_nodes, stack_nodes, ConstantInputs, ConvergenceConstants, DualState, ProblemInstance,
};
use crate::error::{Error, Result};
use crate::sdd::{exact_solve, SolverWork};
use crate::sim::{consensus_error, MessageUnit, Network, Phase, RunTrace, TraceRow};

/// Step grid searched by [`StepMode::Grid`].
pub const STEP_GRID: [f64; 8] = [0.01, 0.1, 0.2, 0.3, 0.5, 0.6, 0.9, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepMode {
    /// The step size guaranteed by the convergence analysis.
    TheoremAlphaStar,
    Fixed { alpha: f64 },
    /// Short pilot runs at every candidate; the one with the largest final
    /// dual value wins.
    Grid {
        #[serde(default = "default_grid")]
        candidates: Vec<f64>,
        #[serde(default = "default_pilot")]
        pilot_iters: usize,
    },
}

fn default_grid() -> Vec<f64> {
    STEP_GRID.to_vec()
}

fn default_pilot() -> usize {
    10
}

impl StepMode {
    pub fn grid() -> Self {
        StepMode::Grid { candidates: default_grid(), pilot_iters: default_pilot() }
    }
}

/// How the first solve's kernel component is fixed before forming `b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Shift `z` by `1 ⊗ c` so that `Q z` lies in the range of `M`
    /// (one all-reduce per iteration). Yields the exact Newton direction.
    #[default]
    KernelCorrected,
    /// Only project `b` onto the range of `M`.
    ProjectOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub eps0: f64,
    pub step_mode: StepMode,
    pub direction: DirectionMode,
    pub max_iters: usize,
    /// Absolute threshold on `‖g‖_M`; defaults to `1e-6 ‖g_0‖_M`.
    pub tol_grad_mnorm: Option<f64>,
    pub tol_consensus: f64,
    /// Optional cap on refinement steps per Laplacian solve.
    pub max_richardson: Option<usize>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            eps0: 0.1,
            step_mode: StepMode::grid(),
            direction: DirectionMode::KernelCorrected,
            max_iters: 500,
            tol_grad_mnorm: None,
            tol_consensus: 1e-8,
            max_richardson: None,
        }
    }
}

/// Newton direction and the solver work spent on it.
#[derive(Clone, Debug)]
pub struct Direction {
    pub d: DVector<f64>,
    /// Solution of the first system after the kernel shift.
    pub z: DVector<f64>,
    pub work: SolverWork,
    /// Whether every inner solve certified its accuracy.
    pub certified: bool,
}

fn solve_blocks(inst: &ProblemInstance, rhs: &DVector<f64>, eps0: f64, cap: Option<usize>) -> Result<(DVector<f64>, SolverWork, bool)> {
    let (n, p) = (inst.n(), inst.p());
    let chain = inst.chain();
    let mut out = DVector::zeros(n * p);
    let mut work = SolverWork::default();
    let mut certified = true;
    for r in 0..p {
        let b = rhs.rows(r * n, n).into_owned();
        let rep = exact_solve(&chain, &b, eps0, cap)
            .map_err(|e| Error::Coordinate { coordinate: r, source: Box::new(e) })?;
        out.rows_mut(r * n, n).copy_from(&rep.solution);
        work += rep.work;
        certified &= rep.converged;
    }
    Ok((out, work, certified))
}

/// Approximate Newton direction at `state` with inner accuracy `eps0`.
pub fn newton_direction(
    inst: &ProblemInstance,
    state: &DualState,
    eps0: f64,
    mode: DirectionMode,
    max_richardson: Option<usize>,
) -> Result<Direction> {
    let (n, p) = (inst.n(), inst.p());
    let (z, mut work, c1) = solve_blocks(inst, &state.g, eps0, max_richardson)?;
    let hessians: Vec<DMatrix<f64>> =
        (0..n).map(|i| inst.local(i).hessian(&node_vector(&state.y, n, i))).collect();
    let mut z_nodes = split_nodes(&z, n, p);
    if mode == DirectionMode::KernelCorrected {
        let total = hessians.iter().fold(DMatrix::zeros(p, p), |a: DMatrix<f64>, h| a + h);
        let pulled = hessians
            .iter()
            .zip(&z_nodes)
            .fold(DVector::zeros(p), |a: DVector<f64>, (h, zi)| a + h * zi);
        let shift = -total.cholesky().ok_or(Error::SingularHessian(0))?.solve(&pulled);
        for zi in &mut z_nodes {
            *zi += &shift;
        }
    }
    let b_nodes: Vec<DVector<f64>> = hessians.iter().zip(&z_nodes).map(|(h, zi)| h * zi).collect();
    let mut b = stack_nodes(&b_nodes, p);
    for r in 0..p {
        let mut block = b.rows_mut(r * n, n);
        let mean = block.mean();
        block.add_scalar_mut(-mean);
    }
    let (d, w2, c2) = solve_blocks(inst, &b, eps0, max_richardson)?;
    work += w2;
    Ok(Direction { d, z: stack_nodes(&z_nodes, p), work, certified: c1 && c2 })
}

/// One Newton iteration.
#[derive(Clone, Debug)]
pub struct NewtonIterate {
    pub k: usize,
    pub state: DualState,
    pub d_tilde: DVector<f64>,
    pub phase: Phase,
    pub grad_mnorm: f64,
}

/// Classifies `‖g‖_M` against the thresholds `η₀ <= η₁`.
pub fn classify(grad_mnorm: f64, c: &ConvergenceConstants) -> Phase {
    if grad_mnorm >= c.eta1 {
        Phase::StrictDecrease
    } else if grad_mnorm > c.eta0 {
        Phase::Quadratic
    } else {
        Phase::Terminal
    }
}

/// Newton run bound to one instance and network.
pub struct NewtonSolver<'a> {
    inst: &'a ProblemInstance,
    cfg: NewtonConfig,
    alpha: f64,
    constants: ConvergenceConstants,
    net: Network<'a>,
}

impl<'a> NewtonSolver<'a> {
    pub fn new(inst: &'a ProblemInstance, cfg: NewtonConfig, unit: MessageUnit) -> Result<Self> {
        if !(cfg.eps0 > 0.0) {
            return Err(Error::Config(format!("eps0 must be positive, got {}", cfg.eps0)));
        }
        if cfg.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        let inputs = ConstantInputs::of(inst);
        let alpha = match &cfg.step_mode {
            StepMode::Fixed { alpha } => *alpha,
            StepMode::TheoremAlphaStar => ConvergenceConstants::from_inputs(&inputs, cfg.eps0)?.alpha_star,
            StepMode::Grid { candidates, pilot_iters } => pick_step(inst, &cfg, candidates, *pilot_iters)?,
        };
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("step size must be finite and >= 0, got {alpha}")));
        }
        let constants = ConvergenceConstants::at_step(&inputs, cfg.eps0, alpha)?;
        Ok(NewtonSolver { inst, cfg, alpha, constants, net: Network::new(inst.graph(), unit) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn constants(&self) -> &ConvergenceConstants {
        &self.constants
    }

    pub fn network(&self) -> &Network<'a> {
        &self.net
    }

    /// Recovers `y(λ)` and `g = M y` through two neighbor exchanges.
    pub fn evaluate(&mut self, lambda: DVector<f64>) -> Result<DualState> {
        let (n, p) = (self.inst.n(), self.inst.p());
        let lam_nodes = split_nodes(&lambda, n, p);
        let z_nodes = self.net.laplacian_apply(&lam_nodes)?;
        let y_nodes = z_nodes
            .iter()
            .enumerate()
            .map(|(i, z)| {
                self.inst
                    .local(i)
                    .recover_primal(z)
                    .map_err(|f| Error::InnerSolver { node: i, iterations: f.iterations })
            })
            .collect::<Result<Vec<_>>>()?;
        let g_nodes = self.net.laplacian_apply(&y_nodes)?;
        Ok(DualState { lambda, y: stack_nodes(&y_nodes, p), g: stack_nodes(&g_nodes, p) })
    }

    pub fn grad_mnorm(&self, state: &DualState) -> f64 {
        crate::consensus::m_norm(self.inst, &state.g).unwrap_or(f64::NAN)
    }

    /// `λ ← λ + α d̃` followed by re-evaluation.
    pub fn step(&mut self, k: usize, state: &DualState) -> Result<NewtonIterate> {
        let dir = newton_direction(self.inst, state, self.cfg.eps0, self.cfg.direction, self.cfg.max_richardson)?;
        let chain = self.inst.chain();
        self.net.charge_sdd(&dir.work, chain.splitting());
        if self.cfg.direction == DirectionMode::KernelCorrected {
            let p = self.inst.p();
            self.net.charge_all_reduce(p * p + p);
        }
        let next = if self.alpha == 0.0 {
            state.clone()
        } else {
            self.evaluate(&state.lambda + &dir.d * self.alpha)?
        };
        let grad_mnorm = self.grad_mnorm(&next);
        Ok(NewtonIterate { k, phase: classify(grad_mnorm, &self.constants), grad_mnorm, state: next, d_tilde: dir.d })
    }

    fn row(&self, k: usize, state: &DualState, grad_mnorm: f64, start: Instant) -> TraceRow {
        let ys = split_nodes(&state.y, self.inst.n(), self.inst.p());
        TraceRow {
            iter: k,
            objective: self.inst.objective(&ys),
            consensus_error: consensus_error(self.inst.graph(), &ys),
            grad_mnorm: Some(grad_mnorm),
            phase: Some(classify(grad_mnorm, &self.constants)),
            messages_cumulative: self.net.messages(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }

    /// Iterates from `λ = 0` until a tolerance or the iteration cap is met.
    pub fn run(mut self) -> Result<NewtonReport> {
        let start = Instant::now();
        let mut trace = RunTrace::new("sdd-newton", self.net.unit());
        let mut state = self.evaluate(DVector::zeros(self.inst.n() * self.inst.p()))?;
        let mut gnorm = self.grad_mnorm(&state);
        let tol = self.cfg.tol_grad_mnorm.unwrap_or(1e-6 * gnorm);
        trace.push(self.row(0, &state, gnorm, start));

        let mut dual = crate::consensus::dual_value(self.inst, &state.lambda)?;
        let mut falls = 0;
        let mut converged = false;
        for k in 1..=self.cfg.max_iters {
            let cons = trace.last().map_or(f64::INFINITY, |r| r.consensus_error);
            if gnorm <= tol || cons <= self.cfg.tol_consensus {
                converged = true;
                break;
            }
            let it = self.step(k, &state)?;
            state = it.state;
            gnorm = it.grad_mnorm;
            trace.push(self.row(k, &state, gnorm, start));

            let q = crate::consensus::dual_value(self.inst, &state.lambda)?;
            falls = if q < dual { falls + 1 } else { 0 };
            dual = q;
            if falls >= 10 && !trace.meta.diverged {
                trace.meta.diverged = true;
                trace.meta.notes.push(format!("dual value fell for 10 consecutive iterations at k = {k}"));
            }
        }
        if !converged {
            let cons = trace.last().map_or(f64::INFINITY, |r| r.consensus_error);
            converged = gnorm <= tol || cons <= self.cfg.tol_consensus;
        }
        trace.meta.converged = converged;
        let params = &mut trace.meta.params;
        params.insert("alpha".into(), self.alpha.into());
        params.insert("eps0".into(), self.cfg.eps0.into());
        params.insert("tol_grad_mnorm".into(), tol.into());
        params.insert("direction".into(), serde_json::to_value(self.cfg.direction)?);
        self.net.audit()?;
        trace.final_iterate = split_nodes(&state.y, self.inst.n(), self.inst.p());
        Ok(NewtonReport { trace, state, alpha: self.alpha, constants: self.constants, rounds: self.net.rounds() })
    }
}

/// Result of a full Newton run.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub trace: RunTrace,
    pub state: DualState,
    pub alpha: f64,
    pub constants: ConvergenceConstants,
    pub rounds: usize,
}

fn pick_step(inst: &ProblemInstance, cfg: &NewtonConfig, candidates: &[f64], pilot_iters: usize) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Config("step grid is empty".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for &alpha in candidates {
        let pilot_cfg = NewtonConfig { step_mode: StepMode::Fixed { alpha }, ..cfg.clone() };
        let mut solver = NewtonSolver::new(inst, pilot_cfg, MessageUnit::Vector)?;
        let mut state = solver.evaluate(DVector::zeros(inst.n() * inst.p()))?;
        for k in 1..=pilot_iters {
            state = solver.step(k, &state)?.state;
        }
        let q = crate::consensus::dual_value(inst, &state.lambda)?;
        // Ties keep the earlier (smaller) candidate.
        if q.is_finite() && best.is_none_or(|(_, bq)| q > bq) {
            best = Some((alpha, q));
        }
    }
    best.map(|(a, _)| a).ok_or_else(|| Error::Config("no step candidate produced a finite dual value".into()))
}

/// Single step with the configured step size, starting a fresh solver.
pub fn step(inst: &ProblemInstance, state: &DualState, cfg: &NewtonConfig) -> Result<NewtonIterate> {
    NewtonSolver::new(inst, cfg.clone(), MessageUnit::Vector)?.step(1, state)
}

pub fn run(inst: &ProblemInstance, cfg: &NewtonConfig, unit: MessageUnit) -> Result<NewtonReport> {
    NewtonSolver::new(inst, cfg.clone(), unit)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{dual_gradient, m_norm, recover_primal};
    use crate::graph::{generate_random_graph, Graph};
    use crate::problems::{build_regression, generate_synthetic_regression};

    fn small(n: usize, p: usize, seed: u64) -> ProblemInstance {
        let g = generate_random_graph(n, (2 * n).min(n * (n - 1) / 2), seed).unwrap();
        let data = generate_synthetic_regression(n, p, 6 * n, 0.5, seed).unwrap();
        build_regression(g, &data.nodes, 0.05).unwrap()
    }

    fn fixed(alpha: f64, eps0: f64) -> NewtonConfig {
        NewtonConfig { eps0, step_mode: StepMode::Fixed { alpha }, ..NewtonConfig::default() }
    }

    #[test]
    fn exact_newton_step_reaches_consensus() {
        let inst = small(8, 3, 3);
        let s0 = DualState::zero(&inst).unwrap();
        let it = step(&inst, &s0, &fixed(1.0, 1e-12)).unwrap();
        assert!(it.grad_mnorm <= 1e-8, "{}", it.grad_mnorm);
    }

    #[test]
    fn zero_step_leaves_state() {
        let inst = small(6, 2, 1);
        let s0 = DualState::at(&inst, DVector::from_fn(12, |k, _| k as f64 * 0.1)).unwrap();
        let it = step(&inst, &s0, &fixed(0.0, 0.1)).unwrap();
        assert_eq!(it.state.lambda, s0.lambda);
        assert_eq!(it.state.y, s0.y);
    }

    #[test]
    fn direction_vanishes_at_optimum() {
        let inst = small(6, 2, 4);
        let s0 = DualState::zero(&inst).unwrap();
        let it = step(&inst, &s0, &fixed(1.0, 1e-12)).unwrap();
        let d = newton_direction(&inst, &it.state, 1e-12, DirectionMode::KernelCorrected, None).unwrap();
        assert!(d.d.amax() < 1e-6);
    }

    #[test]
    fn simulated_evaluation_matches_matrix_form() {
        let inst = small(7, 3, 9);
        let lambda = DVector::from_fn(21, |k, _| ((k * 7) % 5) as f64 - 2.0);
        let mut solver = NewtonSolver::new(&inst, fixed(1.0, 0.1), MessageUnit::Vector).unwrap();
        let s = solver.evaluate(lambda.clone()).unwrap();
        assert!((s.y - recover_primal(&inst, &lambda).unwrap()).amax() < 1e-12);
        assert!((s.g - dual_gradient(&inst, &lambda).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn run_on_triangle_passes_audit() {
        let g = Graph::complete(3).unwrap();
        let data = generate_synthetic_regression(3, 2, 12, 0.3, 2).unwrap();
        let inst = build_regression(g, &data.nodes, 0.05).unwrap();
        let rep = run(&inst, &NewtonConfig::default(), MessageUnit::Vector).unwrap();
        assert!(rep.trace.meta.converged);
        let msgs: Vec<u64> = rep.trace.rows.iter().map(|r| r.messages_cumulative).collect();
        assert!(msgs.windows(2).all(|w| w[0] <= w[1]));
        assert!(m_norm(&inst, &rep.state.g).unwrap() <= rep.trace.meta.params["tol_grad_mnorm"].as_f64().unwrap());
    }

    #[test]
    fn project_only_is_weaker() {
        let inst = small(10, 3, 5);
        let s0 = DualState::zero(&inst).unwrap();
        let mut cfg = fixed(1.0, 1e-10);
        let exact = step(&inst, &s0, &cfg).unwrap().grad_mnorm;
        cfg.direction = DirectionMode::ProjectOnly;
        let crude = step(&inst, &s0, &cfg).unwrap().grad_mnorm;
        assert!(exact < crude);
    }
}
