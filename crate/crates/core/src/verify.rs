//! Runtime property suites behind `sddn verify`: each check compares the
//! library against a dense oracle on randomly generated instances.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::consensus::{
    dual_gradient, dual_hessian_apply, dual_value, recover_primal, ConstantInputs, ConvergenceConstants, Curvature,
    DualState, LocalObjective, ProblemInstance, ProblemKind,
};
use crate::error::{Error, Result};
use crate::graph::{generate_random_graph, laplacian, Graph};
use crate::newton::{newton_direction, DirectionMode, NewtonConfig, NewtonSolver, StepMode};
use crate::problems::{build_regression, generate_synthetic_regression, QuadraticLocal};
use crate::sdd::{exact_solve_with, m_norm, split, InverseChain, SolveOptions};
use crate::sim::MessageUnit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Sdd,
    Dual,
    Newton,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdd" => Ok(Suite::Sdd),
            "dual" => Ok(Suite::Dual),
            "newton" => Ok(Suite::Newton),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!("unknown suite {other:?} (sdd, dual, newton, all)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Fewer random instances.
    pub quick: bool,
    /// Corrupt every inverse chain before solving.
    pub inject_fault: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub elapsed_ms: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<7} {:<24} {:>4}  {:>5} cases  {}",
                c.suite,
                c.property,
                if c.passed { "PASS" } else { "FAIL" },
                c.cases,
                c.detail
            )?;
        }
        write!(f, "{} of {} properties passed in {:.1} s", self.checks.iter().filter(|c| c.passed).count(), self.checks.len(), self.elapsed_ms / 1e3)
    }
}

pub fn verify(suite: Suite, opts: &VerifyOptions) -> Result<VerifyReport> {
    let start = Instant::now();
    let mut checks = Vec::new();
    if matches!(suite, Suite::Sdd | Suite::All) {
        checks.extend(sdd_suite(opts)?);
    }
    if matches!(suite, Suite::Dual | Suite::All) {
        checks.extend(dual_suite(opts)?);
    }
    if matches!(suite, Suite::Newton | Suite::All) {
        checks.extend(newton_suite(opts)?);
    }
    Ok(VerifyReport { checks, elapsed_ms: start.elapsed().as_secs_f64() * 1e3 })
}

fn count(opts: &VerifyOptions, full: usize, quick: usize) -> usize {
    if opts.quick {
        quick
    } else {
        full
    }
}

fn random_graph(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Result<Graph> {
    let n = rng.random_range(lo..=hi);
    let max_m = n * (n - 1) / 2;
    let m = rng.random_range(n - 1..=max_m.min(3 * n));
    generate_random_graph(n, m, rng.random())
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `L⁺ = (L + 11ᵀ/n)⁻¹ - 11ᵀ/n` for a connected-graph Laplacian.
fn laplacian_pinv(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    (l + &j).try_inverse().expect("shifted Laplacian is invertible") - j
}

/// Pseudo-inverse of a symmetric PSD matrix, dropping tiny eigenvalues.
fn psd_pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let cut = 1e-10 * eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|v| if v > cut { 1.0 / v } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

fn sdd_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cases = count(opts, 50, 10);
    let (mut worst, mut monotone, mut kernel) = (0.0f64, true, 0.0f64);
    for _ in 0..cases {
        let g = random_graph(&mut rng, 3, 40)?;
        let l = laplacian(&g).matrix().clone();
        let mut chain = InverseChain::from_matrix(&l, None)?;
        if opts.inject_fault {
            chain.inject_fault();
        }
        let mut b = gaussian(&mut rng, g.n());
        b.add_scalar_mut(-b.mean());
        let exact = laplacian_pinv(&l) * &b;
        let xnorm = m_norm(&l, &exact);
        for eps in [0.1, 0.01, 1e-4] {
            let mut errs = Vec::new();
            let rep = exact_solve_with(&chain, &b, &SolveOptions::new(eps), |_, y| {
                errs.push(m_norm(&l, &(y - &exact)));
            })?;
            worst = worst.max(m_norm(&l, &(&rep.solution - &exact)) / (eps * xnorm));
            monotone &= errs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14 * xnorm);
            kernel = kernel.max(rep.solution.mean().abs());
        }
    }
    let mut checks = vec![
        Check {
            suite: "sdd",
            property: "eps-certification",
            passed: worst <= 1.0,
            cases,
            detail: format!("worst error/bound ratio {worst:.3e}"),
        },
        Check {
            suite: "sdd",
            property: "monotone-refinement",
            passed: monotone,
            cases,
            detail: "M-norm error non-increasing per iteration".into(),
        },
        Check {
            suite: "sdd",
            property: "kernel-safety",
            passed: kernel <= 1e-10,
            cases,
            detail: format!("max |mean(x)| {kernel:.1e}"),
        },
    ];

    let id_cases = count(opts, 20, 5);
    let mut worst_id = 0.0f64;
    for _ in 0..id_cases {
        let n = rng.random_range(2..=10);
        let m = random_sdd(&mut rng, n);
        let s = split(&m)?;
        let d_inv = DMatrix::from_diagonal(&s.diag().map(|d| 1.0 / d));
        let a = s.off_diagonal();
        let eye = DMatrix::<f64>::identity(n, n);
        let inner = (DMatrix::from_diagonal(s.diag()) - a * &d_inv * a).try_inverse().expect("nonsingular");
        let formula = (&d_inv + (&eye + &d_inv * a) * inner * (&eye + a * &d_inv)) * 0.5;
        let direct = m.clone().try_inverse().expect("nonsingular");
        worst_id = worst_id.max((formula - &direct).norm() / direct.norm());
    }
    checks.push(Check {
        suite: "sdd",
        property: "splitting-identity",
        passed: worst_id <= 1e-10,
        cases: id_cases,
        detail: format!("worst relative error {worst_id:.1e}"),
    });

    let mut worst_chain = 0.0f64;
    for _ in 0..id_cases {
        let g = random_graph(&mut rng, 3, 10)?;
        let l = laplacian(&g).matrix().clone();
        let chain = InverseChain::from_matrix(&l, Some(4))?;
        let d = chain.diag();
        let t = DMatrix::from_diagonal(&d.map(|x| 1.0 / x)) * chain.splitting().off_diagonal();
        let mut power = t.clone();
        for i in 0..=chain.depth() {
            let expect = DMatrix::from_diagonal(d) * &power;
            worst_chain = worst_chain.max((chain.level(i) - &expect).norm() / expect.norm().max(1e-300));
            power = &power * &power;
        }
    }
    checks.push(Check {
        suite: "sdd",
        property: "chain-consistency",
        passed: worst_chain <= 1e-10,
        cases: id_cases,
        detail: format!("worst relative error {worst_chain:.1e}"),
    });
    Ok(checks)
}

/// Strictly diagonally dominant with nonpositive off-diagonals.
fn random_sdd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < 0.6 {
                let w = rng.random_range(0.1..2.0);
                m[(i, j)] = -w;
                m[(j, i)] = -w;
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| -m[(i, j)]).sum();
        m[(i, i)] = off + rng.random_range(0.05..1.0);
    }
    m
}

fn random_quadratic(rng: &mut ChaCha8Rng, max_n: usize, max_p: usize) -> Result<ProblemInstance> {
    let g = random_graph(rng, 3, max_n)?;
    let p = rng.random_range(1..=max_p);
    let data = generate_synthetic_regression(g.n(), p, 3 * g.n(), 0.5, rng.random())?;
    build_regression(g, &data.nodes, 0.05)
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn dual_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xd0a1);
    let cases = count(opts, 20, 5);
    let h = 1e-5;
    let (mut worst_g, mut worst_h, mut worst_rec) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cases {
        let inst = random_quadratic(&mut rng, 10, 3)?;
        let np = inst.n() * inst.p();
        let lambda = gaussian(&mut rng, np) * 0.3;
        let g = dual_gradient(&inst, &lambda)?;
        let mut fd = DVector::zeros(np);
        for k in 0..np {
            let mut a = lambda.clone();
            let mut b = lambda.clone();
            a[k] += h;
            b[k] -= h;
            fd[k] = (dual_value(&inst, &a)? - dual_value(&inst, &b)?) / (2.0 * h);
        }
        worst_g = worst_g.max(rel(&fd, &g));

        let v = gaussian(&mut rng, np);
        let hv = dual_hessian_apply(&inst, &lambda, &v)?;
        let fd_h = (dual_gradient(&inst, &(&lambda + &v * h))? - dual_gradient(&inst, &(&lambda - &v * h))?) / (2.0 * h);
        worst_h = worst_h.max(rel(&fd_h, &hv));

        let y = recover_primal(&inst, &lambda)?;
        let state = DualState::at(&inst, lambda.clone())?;
        let z = crate::consensus::big_m_apply(inst.laplacian(), inst.p(), &lambda)?;
        for i in 0..inst.n() {
            let yi = crate::consensus::node_vector(&y, inst.n(), i);
            let zi = crate::consensus::node_vector(&z, inst.n(), i);
            worst_rec = worst_rec.max((inst.local(i).gradient(&yi) + zi).amax());
        }
        worst_rec = worst_rec.max((state.g - crate::consensus::big_m_apply(inst.laplacian(), inst.p(), &y)?).amax());
    }
    Ok(vec![
        Check {
            suite: "dual",
            property: "gradient-fd",
            passed: worst_g <= 1e-4,
            cases,
            detail: format!("worst relative error {worst_g:.1e}"),
        },
        Check {
            suite: "dual",
            property: "hessian-fd",
            passed: worst_h <= 1e-4,
            cases,
            detail: format!("worst relative error {worst_h:.1e}"),
        },
        Check {
            suite: "dual",
            property: "primal-recovery",
            passed: worst_rec <= 1e-8,
            cases,
            detail: format!("max |grad f_i(y_i) + (M lambda)_i| {worst_rec:.1e}"),
        },
    ])
}

/// Composed accuracy of the two-solve Newton direction for inner accuracy `eps0`.
pub fn composed_accuracy(inputs: &ConstantInputs, eps0: f64) -> f64 {
    let k = inputs.big_gamma / inputs.gamma;
    let r = inputs.mu_n / inputs.mu2;
    eps0 * (k * r).sqrt() * (1.0 + eps0 * r * k.sqrt() + r.sqrt())
}

/// Dense `M Q⁻¹ M` at `y(λ)`.
fn dense_neg_hessian(inst: &ProblemInstance, state: &DualState) -> DMatrix<f64> {
    let (n, p) = (inst.n(), inst.p());
    let mut qinv = DMatrix::zeros(n * p, n * p);
    for i in 0..n {
        let h = inst.local(i).hessian(&crate::consensus::node_vector(&state.y, n, i));
        let hi = h.try_inverse().expect("local Hessian invertible");
        for r in 0..p {
            for c in 0..p {
                qinv[(r * n + i, c * n + i)] = hi[(r, c)];
            }
        }
    }
    let big_m = DMatrix::identity(p, p).kronecker(inst.laplacian().matrix());
    &big_m * qinv * &big_m
}

fn well_conditioned(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Result<ProblemInstance> {
    let locals: Vec<Arc<dyn LocalObjective>> = (0..n)
        .map(|_| {
            let s = rng.random_range(1.0..1.2);
            let c = gaussian(rng, p);
            Arc::new(QuadraticLocal::new(DMatrix::identity(p, p) * s, c, 0.0)) as Arc<dyn LocalObjective>
        })
        .collect();
    let bounds = locals.iter().map(|l| l.hessian(&DVector::zeros(p))[(0, 0)]);
    let (lo, hi) = bounds.fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
    ProblemInstance::new(
        Graph::complete(n)?,
        locals,
        Curvature { gamma: lo, big_gamma: hi, delta: 0.0 },
        ProblemKind::Custom,
    )
}

fn newton_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37);
    let cases = count(opts, 20, 5);

    let mut worst_one = 0.0f64;
    let mut worst_l3 = 0.0f64;
    for _ in 0..cases {
        let inst = random_quadratic(&mut rng, 15, 4)?;
        let s0 = DualState::zero(&inst)?;
        let cfg = NewtonConfig { eps0: 1e-12, step_mode: StepMode::Fixed { alpha: 1.0 }, ..NewtonConfig::default() };
        let mut solver = NewtonSolver::new(&inst, cfg, MessageUnit::Vector)?;
        worst_one = worst_one.max(solver.step(1, &s0)?.grad_mnorm);

        let lambda = gaussian(&mut rng, inst.n() * inst.p());
        let state = DualState::at(&inst, lambda)?;
        let hm = dense_neg_hessian(&inst, &state);
        let d_star = psd_pinv(&hm) * &state.g;
        let hnorm = |v: &DVector<f64>| v.dot(&(&hm * v)).max(0.0).sqrt();
        let inputs = ConstantInputs::of(&inst);
        for eps0 in [0.1, 0.01] {
            let dir = newton_direction(&inst, &state, eps0, DirectionMode::KernelCorrected, None)?;
            let ratio = hnorm(&(&dir.d - &d_star)) / hnorm(&d_star);
            worst_l3 = worst_l3.max(ratio / composed_accuracy(&inputs, eps0));
        }
    }

    let phase_cases = count(opts, 5, 5);
    let mut worst_term = 0.0f64;
    for _ in 0..phase_cases {
        let n = rng.random_range(4..=9);
        let inst = well_conditioned(&mut rng, n, 2)?;
        let inputs = ConstantInputs::of(&inst);
        let eps0 = 0.1;
        let consts = ConvergenceConstants::from_inputs(&inputs, eps0)?;
        let cfg = NewtonConfig { eps0, step_mode: StepMode::TheoremAlphaStar, ..NewtonConfig::default() };
        let mut solver = NewtonSolver::new(&inst, cfg, MessageUnit::Vector)?;
        let mut state = solver.evaluate(gaussian(&mut rng, n * 2))?;
        let mut g = solver.grad_mnorm(&state);
        for k in 1..=15 {
            let it = solver.step(k, &state)?;
            if g <= consts.eta0 && g > 1e-10 {
                worst_term = worst_term.max(it.grad_mnorm / g / consts.zeta);
            }
            g = it.grad_mnorm;
            state = it.state;
        }
    }

    Ok(vec![
        Check {
            suite: "newton",
            property: "one-step-exactness",
            passed: worst_one <= 1e-8,
            cases,
            detail: format!("worst ||g||_M after one step {worst_one:.1e}"),
        },
        Check {
            suite: "newton",
            property: "composed-accuracy",
            passed: worst_l3 <= 1.0,
            cases,
            detail: format!("worst measured/bound {worst_l3:.2e}"),
        },
        Check {
            suite: "newton",
            property: "terminal-contraction",
            passed: worst_term <= 1.0,
            cases: phase_cases,
            detail: format!("worst ratio/zeta {worst_term:.3}"),
        },
    ])
}
