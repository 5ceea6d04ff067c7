//! The consensus problem `min Σ f_i(θ_i)` s.t. `θ_1 = … = θ_n`, its dual, and
//! the dual calculus used by the Newton method.
//!
//! Stacked vectors in `R^{np}` are block-major: block `r` (length `n`) holds
//! coordinate `r` of every node, so entry `r*n + i` belongs to node `i`.
//! The constraint matrix is `M = I_p ⊗ L`, applied blockwise by
//! [`big_m_apply`] without ever being materialized.
//!
//! For dual variables `λ` the primal minimizer `y(λ)` solves, node by node,
//! `∇f_i(y_i) = -(M λ)_i`, and
//!
//! * `∇q(λ) = M y(λ)`,
//! * `∇²q(λ) = -M (∇²f(y(λ)))⁻¹ M`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::graph::{laplacian, spectral_info, Graph, Laplacian, SpectralInfo};
use crate::problems::{self, QuadraticLocal};
use crate::sdd::{default_chain_depth, InverseChain};

/// Failure of a node-local inner solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InnerFailure {
    pub iterations: usize,
}

/// A node's private, strongly convex objective `f_i : R^p → R`.
pub trait LocalObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, theta: &DVector<f64>) -> f64;

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Symmetric positive definite `p × p` Hessian.
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    /// `argmin_θ f(θ) + (shift/2)‖θ‖² - linearᵀθ`.
    ///
    /// Shared by primal recovery (`shift = 0`) and the ADMM node update.
    fn minimize_shifted(&self, shift: f64, linear: &DVector<f64>) -> Result<DVector<f64>, InnerFailure>;

    /// Solves `∇f(θ) = -z`.
    fn recover_primal(&self, z: &DVector<f64>) -> Result<DVector<f64>, InnerFailure> {
        self.minimize_shifted(0.0, &-z)
    }

    fn as_quadratic(&self) -> Option<&QuadraticLocal> {
        None
    }
}

/// Curvature constants: `γ ⪯ ∇²f_i ⪯ Γ` and the inverse-Hessian Lipschitz
/// constant `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub big_gamma: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Regression,
    LogisticL2,
    LogisticL1,
    ReinforcementLearning,
    Custom,
}

/// Solution of the pooled problem `min_θ Σ f_i(θ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CentralizedOptimum {
    pub theta: DVector<f64>,
    pub objective: f64,
}

/// A consensus problem on a processor graph.
#[derive(Clone)]
pub struct ProblemInstance {
    graph: Graph,
    laplacian: Laplacian,
    spectral: SpectralInfo,
    p: usize,
    locals: Vec<Arc<dyn LocalObjective>>,
    curvature: Curvature,
    kind: ProblemKind,
    chain: OnceLock<Arc<InverseChain>>,
    centralized: OnceLock<Option<CentralizedOptimum>>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("n", &self.n())
            .field("p", &self.p)
            .field("kind", &self.kind)
            .field("curvature", &self.curvature)
            .field("spectral", &self.spectral)
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        graph: Graph,
        locals: Vec<Arc<dyn LocalObjective>>,
        curvature: Curvature,
        kind: ProblemKind,
    ) -> Result<Self> {
        check_len(graph.n(), locals.len())?;
        let p = locals[0].dim();
        if p == 0 {
            return Err(Error::Config("primal dimension must be positive".into()));
        }
        for l in &locals {
            check_len(p, l.dim())?;
        }
        let Curvature { gamma, big_gamma, delta } = curvature;
        if !(gamma > 0.0) || !(gamma <= big_gamma) || !(delta >= 0.0) {
            return Err(Error::Config(format!(
                "curvature constants must satisfy 0 < gamma <= Gamma, delta >= 0 (got {gamma}, {big_gamma}, {delta})"
            )));
        }
        let laplacian = laplacian(&graph);
        let spectral = spectral_info(&laplacian)?;
        Ok(ProblemInstance {
            graph,
            laplacian,
            spectral,
            p,
            locals,
            curvature,
            kind,
            chain: OnceLock::new(),
            centralized: OnceLock::new(),
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    pub fn spectral(&self) -> SpectralInfo {
        self.spectral
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn locals(&self) -> &[Arc<dyn LocalObjective>] {
        &self.locals
    }

    pub fn local(&self, i: usize) -> &dyn LocalObjective {
        self.locals[i].as_ref()
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    /// Inverse chain for `L`, built on first use with the default depth.
    pub fn chain(&self) -> Arc<InverseChain> {
        self.chain
            .get_or_init(|| {
                let depth = default_chain_depth(self.n());
                Arc::new(
                    InverseChain::from_matrix(self.laplacian.matrix(), Some(depth))
                        .expect("a connected graph Laplacian always splits"),
                )
            })
            .clone()
    }

    /// Pooled optimum, computed once by damped Newton on `Σ f_i`.
    pub fn centralized_optimum(&self) -> Option<&CentralizedOptimum> {
        self.centralized
            .get_or_init(|| problems::centralized_optimum(&self.locals).ok())
            .as_ref()
    }

    /// `Σ_i f_i(θ_i)` for per-node iterates.
    pub fn objective(&self, thetas: &[DVector<f64>]) -> f64 {
        self.locals.iter().zip(thetas).map(|(f, t)| f.value(t)).sum()
    }

    /// Objective of a block-major stacked vector.
    pub fn stacked_objective(&self, y: &DVector<f64>) -> f64 {
        self.objective(&split_nodes(y, self.n(), self.p))
    }
}

/// Coordinates of node `i` from a block-major stacked vector.
pub fn node_vector(v: &DVector<f64>, n: usize, i: usize) -> DVector<f64> {
    let p = v.len() / n;
    DVector::from_fn(p, |r, _| v[r * n + i])
}

pub fn split_nodes(v: &DVector<f64>, n: usize, p: usize) -> Vec<DVector<f64>> {
    debug_assert_eq!(v.len(), n * p);
    (0..n).map(|i| node_vector(v, n, i)).collect()
}

pub fn stack_nodes(nodes: &[DVector<f64>], p: usize) -> DVector<f64> {
    let n = nodes.len();
    DVector::from_fn(n * p, |k, _| nodes[k % n][k / n])
}

/// `(I_p ⊗ L) v`, one Laplacian product per block.
pub fn big_m_apply(l: &Laplacian, p: usize, v: &DVector<f64>) -> Result<DVector<f64>> {
    let n = l.n();
    check_len(n * p, v.len())?;
    let mut out = DVector::zeros(n * p);
    for r in 0..p {
        let block = l.matrix() * v.rows(r * n, n);
        out.rows_mut(r * n, n).copy_from(&block);
    }
    Ok(out)
}

/// `sqrt(vᵀ M v)`.
pub fn m_norm(inst: &ProblemInstance, v: &DVector<f64>) -> Result<f64> {
    Ok(v.dot(&big_m_apply(inst.laplacian(), inst.p(), v)?).max(0.0).sqrt())
}

/// Per-node primal recovery `y(λ)`.
pub fn recover_primal(inst: &ProblemInstance, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let z = big_m_apply(inst.laplacian(), inst.p(), lambda)?;
    recover_from_z(inst, &z)
}

/// Primal recovery given `z = M λ` already gathered.
pub(crate) fn recover_from_z(inst: &ProblemInstance, z: &DVector<f64>) -> Result<DVector<f64>> {
    let n = inst.n();
    let nodes = (0..n)
        .map(|i| {
            inst.local(i)
                .recover_primal(&node_vector(z, n, i))
                .map_err(|f| Error::InnerSolver { node: i, iterations: f.iterations })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(stack_nodes(&nodes, inst.p()))
}

/// Dual iterate with its recovered primal and gradient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: DVector<f64>,
    pub y: DVector<f64>,
    pub g: DVector<f64>,
}

impl DualState {
    pub fn at(inst: &ProblemInstance, lambda: DVector<f64>) -> Result<Self> {
        let y = recover_primal(inst, &lambda)?;
        let g = big_m_apply(inst.laplacian(), inst.p(), &y)?;
        Ok(DualState { lambda, y, g })
    }

    pub fn zero(inst: &ProblemInstance) -> Result<Self> {
        Self::at(inst, DVector::zeros(inst.n() * inst.p()))
    }
}

/// `∇q(λ) = M y(λ)`.
pub fn dual_gradient(inst: &ProblemInstance, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let y = recover_primal(inst, lambda)?;
    big_m_apply(inst.laplacian(), inst.p(), &y)
}

/// `q(λ) = Σ_i f_i(y_i) + y_iᵀ (Mλ)_i`, exact up to the accuracy of `y(λ)`.
pub fn dual_value(inst: &ProblemInstance, lambda: &DVector<f64>) -> Result<f64> {
    let z = big_m_apply(inst.laplacian(), inst.p(), lambda)?;
    let y = recover_from_z(inst, &z)?;
    Ok(inst.stacked_objective(&y) + y.dot(&z))
}

/// `-M (∇²f(y(λ)))⁻¹ M v`. Monitoring and tests only; the Newton solver
/// never forms it.
pub fn dual_hessian_apply(
    inst: &ProblemInstance,
    lambda: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (n, p) = (inst.n(), inst.p());
    check_len(n * p, v.len())?;
    let y = recover_primal(inst, lambda)?;
    let mv = big_m_apply(inst.laplacian(), p, v)?;
    let nodes = (0..n)
        .map(|i| {
            let h = inst.local(i).hessian(&node_vector(&y, n, i));
            h.cholesky()
                .map(|c| c.solve(&node_vector(&mv, n, i)))
                .ok_or(Error::SingularHessian(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(-big_m_apply(inst.laplacian(), p, &stack_nodes(&nodes, p))?)
}

/// Inputs of the convergence constants, separated from an instance so they
/// can be evaluated for synthetic values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantInputs {
    pub gamma: f64,
    pub big_gamma: f64,
    pub delta: f64,
    pub p: usize,
    pub mu2: f64,
    pub mu_n: f64,
}

impl ConstantInputs {
    pub fn of(inst: &ProblemInstance) -> Self {
        let c = inst.curvature();
        let s = inst.spectral();
        ConstantInputs {
            gamma: c.gamma,
            big_gamma: c.big_gamma,
            delta: c.delta,
            p: inst.p(),
            mu2: s.mu2,
            mu_n: s.mu_n,
        }
    }

    /// Dual-Hessian Lipschitz constant `B = (δp/γ) μ_n² √μ_n`.
    pub fn lipschitz_b(&self) -> f64 {
        self.delta * self.p as f64 / self.gamma * self.mu_n.powi(2) * self.mu_n.sqrt()
    }

    /// Largest admissible direction accuracy, `(μ₂/μ_n) √((Γ/γ)(μ₂/μ_n))`.
    pub fn eps_upper(&self) -> f64 {
        let k = self.mu2 / self.mu_n;
        k * (self.big_gamma / self.gamma * k).sqrt()
    }

    /// `α* = (γ/Γ)² (μ₂/μ_n)⁴ (1-ε)/(1+ε)²`.
    pub fn alpha_star(&self, eps: f64) -> f64 {
        (self.gamma / self.big_gamma).powi(2) * (self.mu2 / self.mu_n).powi(4) * (1.0 - eps)
            / (1.0 + eps).powi(2)
    }
}

/// Phase thresholds and step size of the convergence analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceConstants {
    pub eps: f64,
    /// Step size the phase constants were evaluated at.
    pub alpha: f64,
    pub alpha_star: f64,
    pub b: f64,
    pub zeta: f64,
    pub xi: f64,
    pub eta0: f64,
    pub eta1: f64,
    /// Guaranteed dual increase per iteration in the strict-decrease phase.
    pub strict_decrease: f64,
    /// Whether `eps` lies in the admissible interval.
    pub admissible: bool,
    /// Whether `ζ` had to be clamped below one.
    pub zeta_clamped: bool,
}

const ZETA_CAP: f64 = 1.0 - 1e-12;

impl ConvergenceConstants {
    /// Constants at an arbitrary step `alpha`; `α*` is still reported for `eps < 1`.
    pub fn at_step(inputs: &ConstantInputs, eps: f64, alpha: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("direction accuracy must be finite and >= 0, got {eps}")));
        }
        let ConstantInputs { gamma, big_gamma, mu2, mu_n, .. } = *inputs;
        let kappa = big_gamma / gamma;
        let b = inputs.lipschitz_b();
        let radicand = 1.0 - alpha + eps * alpha * (kappa * (mu_n / mu2).powi(3)).sqrt();
        let mut zeta = radicand.max(0.0).sqrt();
        let zeta_clamped = zeta > ZETA_CAP;
        if zeta_clamped {
            zeta = ZETA_CAP;
        }
        let xi = b * (alpha * big_gamma * (1.0 + eps)).powi(2) / (2.0 * mu2.powi(4));
        let (eta0, eta1) = if xi > 0.0 {
            (zeta * (1.0 - zeta) / xi, (1.0 - zeta) / xi)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let strict_decrease = gamma.powi(3) / big_gamma.powi(2)
            * ((1.0 - eps) / (1.0 + eps)).powi(2)
            * mu2.powi(4)
            / mu_n.powi(7)
            * eta1.powi(2);
        Ok(ConvergenceConstants {
            eps,
            alpha,
            alpha_star: inputs.alpha_star(eps),
            b,
            zeta,
            xi,
            eta0,
            eta1,
            strict_decrease,
            admissible: eps <= inputs.eps_upper(),
            zeta_clamped,
        })
    }

    /// Constants at `α = α*`. Requires `0 <= eps < 1` so that `α* > 0`.
    pub fn from_inputs(inputs: &ConstantInputs, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Config(format!("direction accuracy {eps} outside [0, 1): no positive step size")));
        }
        Self::at_step(inputs, eps, inputs.alpha_star(eps))
    }
}

pub fn compute_constants(inst: &ProblemInstance, eps: f64) -> Result<ConvergenceConstants> {
    ConvergenceConstants::from_inputs(&ConstantInputs::of(inst), eps)
}
