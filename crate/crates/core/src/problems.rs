//! Machine-learning problems recast as consensus instances: ridge regression,
//! logistic regression (L2 or smoothed-L1 penalty) and reward-weighted least
//! squares for policy search, plus synthetic data generators and CSV loading.
//!
//! Feature matrices are stored `p × m` with one sample per column.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consensus::{CentralizedOptimum, Curvature, InnerFailure, LocalObjective, ProblemInstance, ProblemKind};
use crate::error::{check_len, Error, Result};
use crate::graph::Graph;

/// Samples held by one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeData {
    /// `p × m`, one sample per column.
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl NodeData {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        check_len(features.ncols(), labels.len())?;
        if labels.is_empty() {
            return Err(Error::Config("a node needs at least one sample".into()));
        }
        Ok(NodeData { features, labels })
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn samples(&self) -> usize {
        self.features.ncols()
    }
}

/// `f(θ) = θᵀPθ - 2cᵀθ + u`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticLocal {
    p_mat: DMatrix<f64>,
    c: DVector<f64>,
    u: f64,
}

impl QuadraticLocal {
    pub fn new(p_mat: DMatrix<f64>, c: DVector<f64>, u: f64) -> Self {
        assert_eq!(p_mat.nrows(), c.len());
        assert!(p_mat.is_square());
        QuadraticLocal { p_mat, c, u }
    }

    /// Ridge loss `Σ_j (a_j - θᵀb_j)² + μ m ‖θ‖²`.
    pub fn regression(data: &NodeData, mu: f64) -> Self {
        let b = &data.features;
        let m = data.samples() as f64;
        let p_mat = b * b.transpose() + DMatrix::identity(b.nrows(), b.nrows()) * (mu * m);
        let c = b * &data.labels;
        QuadraticLocal::new(p_mat, c, data.labels.norm_squared())
    }

    pub fn p_matrix(&self) -> &DMatrix<f64> {
        &self.p_mat
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    /// Extreme eigenvalues of the Hessian `2P`.
    pub fn hessian_bounds(&self) -> (f64, f64) {
        let ev = SymmetricEigen::new(&self.p_mat * 2.0).eigenvalues;
        (ev.min(), ev.max())
    }
}

impl LocalObjective for QuadraticLocal {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        theta.dot(&(&self.p_mat * theta)) - 2.0 * self.c.dot(theta) + self.u
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        (&self.p_mat * theta - &self.c) * 2.0
    }

    fn hessian(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        &self.p_mat * 2.0
    }

    fn minimize_shifted(&self, shift: f64, linear: &DVector<f64>) -> Result<DVector<f64>, InnerFailure> {
        let p = self.dim();
        let h = &self.p_mat * 2.0 + DMatrix::identity(p, p) * shift;
        let rhs = &self.c * 2.0 + linear;
        h.cholesky().map(|c| c.solve(&rhs)).ok_or(InnerFailure { iterations: 0 })
    }

    fn as_quadratic(&self) -> Option<&QuadraticLocal> {
        Some(self)
    }
}

/// Penalty `Ψ` applied with weight `μ m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Regularizer {
    /// `‖θ‖²`
    L2,
    /// `Σ_r |θ_r|_(α)`, a smooth stand-in for the L1 norm.
    SmoothedL1 { alpha: f64 },
}

pub const DEFAULT_SMOOTHING: f64 = 20.0;

/// Coordinates are assumed to stay within this radius when bounding the
/// curvature of the smoothed-L1 penalty from below.
pub const L1_BOX_RADIUS: f64 = 1.0;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `|x|_(α) = (1/α)[log(1 + e^{-αx}) + log(1 + e^{αx})]`.
pub fn smooth_abs(x: f64, alpha: f64) -> f64 {
    (softplus(-alpha * x) + softplus(alpha * x)) / alpha
}

/// First derivative of [`smooth_abs`], `(e^{αx} - 1)/(e^{αx} + 1)`.
pub fn smooth_abs_grad(x: f64, alpha: f64) -> f64 {
    (alpha * x / 2.0).tanh()
}

/// Second derivative of [`smooth_abs`], `2α e^{αx}/(1 + e^{αx})²`.
pub fn smooth_abs_hess(x: f64, alpha: f64) -> f64 {
    let s = sigmoid(alpha * x);
    2.0 * alpha * s * (1.0 - s)
}

/// Logistic loss with labels in `{0, 1}`:
/// `Σ_j [log(1 + e^{θᵀb_j}) - a_j θᵀb_j] + μ m Ψ(θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticLocal {
    b: DMatrix<f64>,
    a: DVector<f64>,
    mu_m: f64,
    reg: Regularizer,
    inner_tol: f64,
    inner_max: usize,
}

impl LogisticLocal {
    pub fn new(data: &NodeData, mu: f64, reg: Regularizer) -> Result<Self> {
        if data.labels.iter().any(|&a| a != 0.0 && a != 1.0) {
            return Err(Error::Config("logistic labels must be 0 or 1".into()));
        }
        if let Regularizer::SmoothedL1 { alpha } = reg {
            if !(alpha > 0.0) {
                return Err(Error::Config(format!("smoothing parameter must be positive, got {alpha}")));
            }
        }
        Ok(LogisticLocal {
            b: data.features.clone(),
            a: data.labels.clone(),
            mu_m: mu * data.samples() as f64,
            reg,
            inner_tol: 1e-10,
            inner_max: 100,
        })
    }

    pub fn regularizer(&self) -> Regularizer {
        self.reg
    }

    /// `(γ, Γ)` for this node. The smoothed-L1 lower bound holds on the box
    /// `|θ_r| <= L1_BOX_RADIUS`.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        let gram = &self.b * self.b.transpose();
        let top = SymmetricEigen::new(gram).eigenvalues.max().max(0.0) / 4.0;
        match self.reg {
            Regularizer::L2 => (2.0 * self.mu_m, top + 2.0 * self.mu_m),
            Regularizer::SmoothedL1 { alpha } => (
                self.mu_m * smooth_abs_hess(L1_BOX_RADIUS, alpha),
                top + self.mu_m * alpha / 2.0,
            ),
        }
    }

    fn margins(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.b.tr_mul(theta)
    }

    fn penalty(&self, theta: &DVector<f64>) -> f64 {
        match self.reg {
            Regularizer::L2 => theta.norm_squared(),
            Regularizer::SmoothedL1 { alpha } => theta.iter().map(|&x| smooth_abs(x, alpha)).sum(),
        }
    }
}

impl LocalObjective for LogisticLocal {
    fn dim(&self) -> usize {
        self.b.nrows()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let t = self.margins(theta);
        let loss: f64 = t.iter().zip(self.a.iter()).map(|(&t, &a)| softplus(t) - a * t).sum();
        loss + self.mu_m * self.penalty(theta)
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let delta = self.margins(theta).zip_map(&self.a, |t, a| sigmoid(t) - a);
        let mut g = &self.b * delta;
        match self.reg {
            Regularizer::L2 => g.axpy(2.0 * self.mu_m, theta, 1.0),
            Regularizer::SmoothedL1 { alpha } => {
                g.zip_apply(theta, |gi, x| *gi += self.mu_m * smooth_abs_grad(x, alpha))
            }
        }
        g
    }

    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let w = self.margins(theta).map(|t| {
            let s = sigmoid(t);
            s * (1.0 - s)
        });
        let mut scaled = self.b.clone();
        for (mut col, wj) in scaled.column_iter_mut().zip(w.iter()) {
            col *= *wj;
        }
        let mut h = scaled * self.b.transpose();
        for r in 0..self.dim() {
            h[(r, r)] += self.mu_m
                * match self.reg {
                    Regularizer::L2 => 2.0,
                    Regularizer::SmoothedL1 { alpha } => smooth_abs_hess(theta[r], alpha),
                };
        }
        h
    }

    /// Damped Newton from the origin with step halving.
    fn minimize_shifted(&self, shift: f64, linear: &DVector<f64>) -> Result<DVector<f64>, InnerFailure> {
        let phi = |t: &DVector<f64>| self.value(t) + 0.5 * shift * t.norm_squared() - linear.dot(t);
        let grad = |t: &DVector<f64>| self.gradient(t) + t * shift - linear;
        let p = self.dim();
        let mut theta = DVector::zeros(p);
        let mut g = grad(&theta);
        let tol = self.inner_tol * g.norm().max(1.0);
        let mut f = phi(&theta);
        for it in 0..self.inner_max {
            if g.norm() <= tol {
                return Ok(theta);
            }
            let h = self.hessian(&theta) + DMatrix::identity(p, p) * shift;
            let step = h.cholesky().ok_or(InnerFailure { iterations: it })?.solve(&g);
            let decrement = g.dot(&step);
            if decrement < 1e-12 * (1.0 + f.abs()) {
                // Inside the quadratic-convergence region function values stop
                // resolving progress; take the full step.
                theta -= step;
                g = grad(&theta);
                f = phi(&theta);
                continue;
            }
            let mut t = 1.0;
            loop {
                let cand = &theta - &step * t;
                let fc = phi(&cand);
                if fc <= f - 1e-4 * t * decrement {
                    theta = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    return Err(InnerFailure { iterations: it + 1 });
                }
            }
            g = grad(&theta);
        }
        if g.norm() <= tol {
            Ok(theta)
        } else {
            Err(InnerFailure { iterations: self.inner_max })
        }
    }
}

/// One policy-search rollout: per-step features `B_j` (`p × T`), actions
/// `a_j` and a nonnegative return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub features: DMatrix<f64>,
    pub actions: DVector<f64>,
    pub reward: f64,
}

/// Reward-weighted least squares for a node's trajectories:
/// `F = Σ R_j B_j B_jᵀ + μ m I`, `g = Σ R_j B_j a_j`, `u = Σ R_j a_jᵀa_j`.
pub fn rl_local(trajectories: &[Trajectory], mu: f64) -> Result<QuadraticLocal> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Config("a node needs at least one trajectory".into()))?;
    let p = first.features.nrows();
    let m = trajectories.len() as f64;
    let mut f = DMatrix::identity(p, p) * (mu * m);
    let mut g = DVector::zeros(p);
    let mut u = 0.0;
    for t in trajectories {
        check_len(p, t.features.nrows())?;
        check_len(t.features.ncols(), t.actions.len())?;
        if !(t.reward >= 0.0) {
            return Err(Error::Config(format!("rewards must be nonnegative, got {}", t.reward)));
        }
        f += &t.features * t.features.transpose() * t.reward;
        g += &t.features * &t.actions * t.reward;
        u += t.reward * t.actions.norm_squared();
    }
    Ok(QuadraticLocal::new(f, g, u))
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("regularization weight must be positive, got {mu}")))
    }
}

fn quadratic_instance(graph: Graph, locals: Vec<QuadraticLocal>, kind: ProblemKind) -> Result<ProblemInstance> {
    let (mut gamma, mut big_gamma) = (f64::INFINITY, 0.0f64);
    for l in &locals {
        let (lo, hi) = l.hessian_bounds();
        gamma = gamma.min(lo);
        big_gamma = big_gamma.max(hi);
    }
    if !(gamma > 0.0) {
        return Err(Error::Config("local Hessians are not positive definite".into()));
    }
    let locals = locals.into_iter().map(|l| Arc::new(l) as Arc<dyn LocalObjective>).collect();
    ProblemInstance::new(graph, locals, Curvature { gamma, big_gamma, delta: 0.0 }, kind)
}

pub fn build_regression(graph: Graph, data: &[NodeData], mu: f64) -> Result<ProblemInstance> {
    check_mu(mu)?;
    check_len(graph.n(), data.len())?;
    let locals = data.iter().map(|d| QuadraticLocal::regression(d, mu)).collect();
    quadratic_instance(graph, locals, ProblemKind::Regression)
}

pub fn build_rl(graph: Graph, trajectories: &[Vec<Trajectory>], mu: f64) -> Result<ProblemInstance> {
    check_mu(mu)?;
    check_len(graph.n(), trajectories.len())?;
    let locals = trajectories.iter().map(|t| rl_local(t, mu)).collect::<Result<Vec<_>>>()?;
    quadratic_instance(graph, locals, ProblemKind::ReinforcementLearning)
}

pub fn build_logistic(graph: Graph, data: &[NodeData], mu: f64, reg: Regularizer) -> Result<ProblemInstance> {
    check_mu(mu)?;
    check_len(graph.n(), data.len())?;
    let locals = data.iter().map(|d| LogisticLocal::new(d, mu, reg)).collect::<Result<Vec<_>>>()?;
    let (mut gamma, mut big_gamma) = (f64::INFINITY, 0.0f64);
    for l in &locals {
        let (lo, hi) = l.curvature_bounds();
        gamma = gamma.min(lo);
        big_gamma = big_gamma.max(hi);
    }
    let delta = estimate_delta(&locals, graph.seed().unwrap_or(0));
    let kind = match reg {
        Regularizer::L2 => ProblemKind::LogisticL2,
        Regularizer::SmoothedL1 { .. } => ProblemKind::LogisticL1,
    };
    let locals = locals.into_iter().map(|l| Arc::new(l) as Arc<dyn LocalObjective>).collect();
    ProblemInstance::new(graph, locals, Curvature { gamma, big_gamma, delta }, kind)
}

/// Sampled Lipschitz constant of `θ ↦ (∇²f_i(θ))⁻¹` in the spectral norm.
/// An empirical estimate, not a bound.
pub fn estimate_delta(locals: &[LogisticLocal], seed: u64) -> f64 {
    const PAIRS: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_de17a);
    let mut best = 0.0f64;
    for l in locals {
        let p = l.dim();
        for _ in 0..PAIRS {
            let x = DVector::from_fn(p, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
            let dir = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = &x + dir * 0.05;
            let (Some(hx), Some(hy)) = (l.hessian(&x).try_inverse(), l.hessian(&y).try_inverse()) else {
                continue;
            };
            let diff = hx - hy;
            let norm = SymmetricEigen::new((&diff + diff.transpose()) * 0.5)
                .eigenvalues
                .amax();
            best = best.max(norm / (&x - &y).norm());
        }
    }
    best
}

/// Damped Newton on `Σ f_i`.
pub fn centralized_optimum(locals: &[Arc<dyn LocalObjective>]) -> Result<CentralizedOptimum> {
    let p = locals[0].dim();
    let total = |t: &DVector<f64>| locals.iter().map(|f| f.value(t)).sum::<f64>();
    let grad = |t: &DVector<f64>| {
        locals.iter().fold(DVector::zeros(p), |acc: DVector<f64>, f| acc + f.gradient(t))
    };
    let mut theta = DVector::zeros(p);
    let mut f = total(&theta);
    let mut g = grad(&theta);
    let tol = 1e-12 * g.norm().max(1.0);
    for _ in 0..200 {
        if g.norm() <= tol {
            break;
        }
        let h = locals.iter().fold(DMatrix::zeros(p, p), |acc: DMatrix<f64>, l| acc + l.hessian(&theta));
        let step = h.cholesky().ok_or(Error::SingularHessian(0))?.solve(&g);
        let decrement = g.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &theta - &step * t;
            let fc = total(&cand);
            if fc <= f - 1e-4 * t * decrement || decrement < 1e-12 * (1.0 + f.abs()) || t < 1e-10 {
                theta = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
        g = grad(&theta);
    }
    Ok(CentralizedOptimum { objective: total(&theta), theta })
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Column-major fill keeps the draw order equal to sample order.
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn chunk_sizes(total: usize, parts: usize) -> impl Iterator<Item = usize> {
    (0..parts).map(move |i| total / parts + usize::from(i < total % parts))
}

/// Synthetic regression data split evenly across nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub nodes: Vec<NodeData>,
    pub theta_true: DVector<f64>,
}

impl SyntheticData {
    /// Concatenated `(features, labels)` of all nodes.
    pub fn pooled(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.theta_true.len();
        let total: usize = self.nodes.iter().map(NodeData::samples).sum();
        let mut x = DMatrix::zeros(p, total);
        let mut y = DVector::zeros(total);
        let mut at = 0;
        for d in &self.nodes {
            x.columns_mut(at, d.samples()).copy_from(&d.features);
            y.rows_mut(at, d.samples()).copy_from(&d.labels);
            at += d.samples();
        }
        (x, y)
    }
}

/// Standard-normal features, labels `xᵀθ + σ ζ` with `ζ ~ N(0, 1)`.
///
/// The ground truth is the normalized sum of the first `min(p, total)`
/// feature vectors.
pub fn generate_synthetic_regression(
    n_nodes: usize,
    p: usize,
    total_points: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if n_nodes == 0 || p == 0 || total_points < n_nodes {
        return Err(Error::Config(format!(
            "need p > 0 and at least one point per node (nodes {n_nodes}, points {total_points})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, p, total_points);
    let k = p.min(total_points);
    let theta_true = x.columns(0, k).column_sum() / (k as f64).sqrt();
    let noise = DVector::from_fn(total_points, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = x.tr_mul(&theta_true) + noise * noise_sigma;
    Ok(SyntheticData { nodes: split_points(&x, &y, n_nodes), theta_true })
}

fn split_points(x: &DMatrix<f64>, y: &DVector<f64>, n_nodes: usize) -> Vec<NodeData> {
    let mut at = 0;
    chunk_sizes(x.ncols(), n_nodes)
        .map(|m| {
            let d = NodeData {
                features: x.columns(at, m).into_owned(),
                labels: y.rows(at, m).into_owned(),
            };
            at += m;
            d
        })
        .collect()
}

/// Features as for regression; labels drawn from `Bernoulli(σ(xᵀθ))`.
pub fn generate_synthetic_logistic(n_nodes: usize, p: usize, total_points: usize, seed: u64) -> Result<SyntheticData> {
    let mut data = generate_synthetic_regression(n_nodes, p, total_points, 0.0, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    for node in &mut data.nodes {
        let margins = node.features.tr_mul(&data.theta_true);
        node.labels = margins.map(|t| f64::from(u8::from(rng.random::<f64>() < sigmoid(t))));
    }
    Ok(data)
}

/// Rollouts with Gaussian features and actions around a reference policy.
/// Returns decay with the squared deviation from that policy.
pub fn generate_synthetic_rl(
    n_nodes: usize,
    p: usize,
    trajectories_per_node: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Vec<Trajectory>>> {
    if n_nodes == 0 || p == 0 || trajectories_per_node == 0 || horizon == 0 {
        return Err(Error::Config("rollout generator needs positive sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)) / (p as f64).sqrt();
    Ok((0..n_nodes)
        .map(|_| {
            (0..trajectories_per_node)
                .map(|_| {
                    let features = normal_matrix(&mut rng, p, horizon);
                    let exploration = DVector::from_fn(horizon, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let actions = features.tr_mul(&policy) + &exploration * 0.5;
                    let reward = (-exploration.norm_squared() / horizon as f64).exp();
                    Trajectory { features, actions, reward }
                })
                .collect()
        })
        .collect())
}

/// Reads samples from a headerless CSV: one sample per row, label last.
pub fn load_node_csv(path: impl AsRef<Path>) -> Result<NodeData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad CSV value {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            check_len(first.len(), row.len())?;
        }
        if row.len() < 2 {
            return Err(Error::Config("CSV rows need at least one feature and a label".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Config("CSV file has no samples".into()));
    }
    let p = rows[0].len() - 1;
    let features = DMatrix::from_fn(p, rows.len(), |r, j| rows[j][r]);
    let labels = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[p]));
    NodeData::new(features, labels)
}

/// Reads rollouts from a headerless CSV with columns
/// `trajectory, reward, features…, action`; consecutive rows sharing an id
/// form one trajectory.
pub fn load_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let raw = load_node_csv(path)?;
    let m = raw.samples();
    let width = raw.dim() + 1;
    if width < 4 {
        return Err(Error::Config("trajectory CSV needs id, reward, features and action".into()));
    }
    let mut out = Vec::new();
    let mut start = 0;
    for j in 1..=m {
        if j == m || raw.features[(0, j)] != raw.features[(0, start)] {
            let feats = raw.features.view((2, start), (width - 3, j - start)).into_owned();
            out.push(Trajectory {
                features: feats,
                actions: raw.labels.rows(start, j - start).into_owned(),
                reward: raw.features[(1, start)],
            });
            start = j;
        }
    }
    Ok(out)
}

/// On-disk description of an instance. Paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceManifest {
    pub graph: PathBuf,
    pub kind: ProblemKind,
    pub nodes: Vec<PathBuf>,
    pub mu: f64,
    #[serde(default)]
    pub smoothing: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default, rename = "Gamma")]
    pub big_gamma: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl InstanceManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Builds the instance; declared curvature constants override the
    /// builder's.
    pub fn build(&self, base: &Path) -> Result<ProblemInstance> {
        let graph = Graph::load(base.join(&self.graph))?;
        let inst = match self.kind {
            ProblemKind::Regression | ProblemKind::LogisticL2 | ProblemKind::LogisticL1 => {
                let data = self
                    .nodes
                    .iter()
                    .map(|f| load_node_csv(base.join(f)))
                    .collect::<Result<Vec<_>>>()?;
                match self.kind {
                    ProblemKind::Regression => build_regression(graph, &data, self.mu)?,
                    ProblemKind::LogisticL2 => build_logistic(graph, &data, self.mu, Regularizer::L2)?,
                    _ => {
                        let alpha = self.smoothing.unwrap_or(DEFAULT_SMOOTHING);
                        build_logistic(graph, &data, self.mu, Regularizer::SmoothedL1 { alpha })?
                    }
                }
            }
            ProblemKind::ReinforcementLearning => {
                let trajs = self
                    .nodes
                    .iter()
                    .map(|f| load_trajectory_csv(base.join(f)))
                    .collect::<Result<Vec<_>>>()?;
                build_rl(graph, &trajs, self.mu)?
            }
            ProblemKind::Custom => {
                return Err(Error::Config("custom instances cannot be loaded from a manifest".into()))
            }
        };
        if self.gamma.is_none() && self.big_gamma.is_none() && self.delta.is_none() {
            return Ok(inst);
        }
        let c = inst.curvature();
        let curvature = Curvature {
            gamma: self.gamma.unwrap_or(c.gamma),
            big_gamma: self.big_gamma.unwrap_or(c.big_gamma),
            delta: self.delta.unwrap_or(c.delta),
        };
        ProblemInstance::new(inst.graph().clone(), inst.locals().to_vec(), curvature, inst.kind())
    }
}
