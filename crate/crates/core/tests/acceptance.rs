//! Acceptance gate. Prints one `criterion N: PASS|FAIL ...` line per
//! criterion and exits non-zero if any of them fails.
//!
//! Every check compares library output against an oracle written here from
//! scratch: dense pseudo-inverses, a cyclic Jacobi eigensolver, central finite
//! differences and straight-line reimplementations of the baselines.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sdd_newton::baselines::{admm_step, averaging_step, AdmmState, AveragingState};
use sdd_newton::consensus::{
    dual_gradient, dual_hessian_apply, dual_value, ConstantInputs, ConvergenceConstants, Curvature, DualState,
    InnerFailure, LocalObjective, ProblemInstance, ProblemKind,
};
use sdd_newton::experiment::{preset, run_experiment, RunOptions};
use sdd_newton::graph::{generate_random_graph, laplacian, Graph};
use sdd_newton::newton::{newton_direction, DirectionMode, NewtonConfig, NewtonSolver, StepMode};
use sdd_newton::problems::QuadraticLocal;
use sdd_newton::sdd::{exact_solve, InverseChain};
use sdd_newton::sim::{MessageUnit, Network, RunTrace};

type Outcome = Result<String, String>;

// ---------------------------------------------------------------- oracles

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn random_connected(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Graph {
    let n = rng.random_range(lo..=hi);
    let max_m = n * (n - 1) / 2;
    let m = rng.random_range(n - 1..=max_m);
    generate_random_graph(n, m, rng.random()).expect("valid edge count")
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Columns of the
/// returned matrix are eigenvectors.
fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * a.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Pseudo-inverse of a symmetric PSD matrix, dropping eigenvalues below
/// `1e-10 · λ_max`.
fn psd_pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eigen(a);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(a.nrows(), a.nrows());
    for (k, &lam) in vals.iter().enumerate() {
        if lam > 1e-10 * top {
            let u = vecs.column(k);
            out += u * u.transpose() / lam;
        }
    }
    out
}

/// `L⁺ = (L + 11ᵀ/n)⁻¹ - 11ᵀ/n` for a connected Laplacian.
fn laplacian_pinv(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    (l + &j).try_inverse().expect("connected Laplacian") - j
}

fn energy(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x)).max(0.0).sqrt()
}

/// `I_p ⊗ L` acting on block-major stacked vectors.
fn kron_laplacian(l: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    DMatrix::<f64>::identity(p, p).kronecker(l)
}

fn random_spd(rng: &mut ChaCha8Rng, p: usize, lo: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    &b * b.transpose() * 0.5 + DMatrix::identity(p, p) * lo
}

fn quadratic_instance(rng: &mut ChaCha8Rng, graph: Graph, p: usize) -> ProblemInstance {
    let n = graph.n();
    let locals: Vec<QuadraticLocal> =
        (0..n).map(|_| QuadraticLocal::new(random_spd(rng, p, 0.5), gaussian(rng, p), 0.0)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for l in &locals {
        let (vals, _) = jacobi_eigen(&(l.p_matrix() * 2.0));
        for v in vals {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let locals = locals.into_iter().map(|l| Arc::new(l) as Arc<dyn LocalObjective>).collect();
    ProblemInstance::new(graph, locals, Curvature { gamma: lo, big_gamma: hi, delta: 0.0 }, ProblemKind::Custom)
        .expect("valid instance")
}

/// Dense `M Q⁻¹ M`, the negated dual Hessian, at the primal point `y`.
fn dense_neg_hessian(inst: &ProblemInstance, y: &DVector<f64>) -> DMatrix<f64> {
    let (n, p) = (inst.n(), inst.p());
    let mut qinv = DMatrix::zeros(n * p, n * p);
    for i in 0..n {
        let yi = DVector::from_fn(p, |r, _| y[r * n + i]);
        let h = inst.local(i).hessian(&yi).try_inverse().expect("invertible local Hessian");
        for r in 0..p {
            for c in 0..p {
                qinv[(r * n + i, c * n + i)] = h[(r, c)];
            }
        }
    }
    let m = kron_laplacian(inst.laplacian().matrix(), p);
    &m * qinv * &m
}

/// `f(θ) = (a/2)‖θ‖² + b Σ_k log cosh(θ_k - c_k)`. Its Hessian is diagonal
/// with entries in `[a, a + b]`, and each entry of the inverse Hessian is
/// Lipschitz with constant `max |2 b sech² tanh| / a² = 4b / (3√3 a²)`.
#[derive(Debug)]
struct LogCosh {
    a: f64,
    b: f64,
    c: DVector<f64>,
}

impl LogCosh {
    fn delta(&self) -> f64 {
        4.0 * self.b / (3.0 * 3f64.sqrt() * self.a * self.a)
    }
}

impl LocalObjective for LogCosh {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, t: &DVector<f64>) -> f64 {
        let lc: f64 = t.iter().zip(self.c.iter()).map(|(x, c)| (x - c).cosh().ln()).sum();
        0.5 * self.a * t.norm_squared() + self.b * lc
    }

    fn gradient(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(t.len(), |k, _| self.a * t[k] + self.b * (t[k] - self.c[k]).tanh())
    }

    fn hessian(&self, t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(t.len(), |k, _| {
            let s = 1.0 / (t[k] - self.c[k]).cosh();
            self.a + self.b * s * s
        }))
    }

    /// Each coordinate solves the monotone scalar equation
    /// `(a + shift) x + b tanh(x - c) = l` by bisection.
    fn minimize_shifted(&self, shift: f64, linear: &DVector<f64>) -> Result<DVector<f64>, InnerFailure> {
        let k = self.a + shift;
        Ok(DVector::from_fn(linear.len(), |r, _| {
            let l = linear[r];
            let (mut lo, mut hi) = ((l - self.b) / k - 1.0, (l + self.b) / k + 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if k * mid + self.b * (mid - self.c[r]).tanh() < l {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }))
    }
}

fn logcosh_instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> ProblemInstance {
    let (a, b) = (1.0, 1.0);
    let locals: Vec<LogCosh> = (0..n).map(|_| LogCosh { a, b, c: gaussian(rng, p) * 2.0 }).collect();
    let delta = locals[0].delta();
    let locals = locals.into_iter().map(|l| Arc::new(l) as Arc<dyn LocalObjective>).collect();
    ProblemInstance::new(
        Graph::complete(n).expect("n >= 2"),
        locals,
        Curvature { gamma: a, big_gamma: a + b, delta },
        ProblemKind::Custom,
    )
    .expect("valid instance")
}

fn archive_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("create archive dir");
    dir
}

// ---------------------------------------------------------------- criteria

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst, mut worst_shallow, mut iters) = (0.0f64, 0.0f64, 0usize);
    let mut uncertified = 0usize;
    for case in 0..50 {
        let g = random_connected(&mut rng, 3, 40);
        let mut l = laplacian(&g).matrix().clone();
        if case % 2 == 1 {
            // Weighted variant with the same sparsity.
            l.fill(0.0);
            for &(a, b) in g.edges() {
                let w = rng.random_range(0.5..2.0);
                l[(a, b)] -= w;
                l[(b, a)] -= w;
                l[(a, a)] += w;
                l[(b, b)] += w;
            }
        }
        let pinv = laplacian_pinv(&l);
        let mut b = gaussian(&mut rng, g.n());
        b.add_scalar_mut(-b.mean());
        let x_star = &pinv * &b;
        // The default chain is usually accurate enough that refinement stops
        // at once; a one-level chain forces Richardson to do the work.
        for (depth, worst) in [(None, &mut worst), (Some(1), &mut worst_shallow)] {
            let chain = InverseChain::from_matrix(&l, depth).map_err(|e| e.to_string())?;
            for eps in [0.1, 0.01, 1e-4] {
                let rep = exact_solve(&chain, &b, eps, None).map_err(|e| e.to_string())?;
                let ratio = energy(&l, &(&rep.solution - &x_star)) / energy(&l, &x_star);
                if rep.converged {
                    *worst = worst.max(ratio / eps);
                } else {
                    uncertified += 1;
                }
                iters += rep.richardson_iters;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "50 Laplacians, worst error/eps {worst:.1e} (default chain), {worst_shallow:.1e} (one-level chain), \
         {iters} refinement steps, {uncertified} solves hit the iteration cap, {secs:.1}s"
    );
    if worst <= 1.0 && worst_shallow <= 1.0 && uncertified == 0 && secs < 30.0 { Ok(detail) } else { Err(detail) }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=10);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    let w = rng.random_range(0.1..3.0);
                    m[(i, j)] = -w;
                    m[(j, i)] = -w;
                    m[(i, i)] += w;
                    m[(j, j)] += w;
                }
            }
        }
        // Strict dominance on at least one row keeps M nonsingular even when
        // the sparsity pattern is disconnected.
        for i in 0..n {
            if i == 0 || m[(i, i)] == 0.0 || rng.random_bool(0.4) {
                m[(i, i)] += rng.random_range(0.1..2.0);
            }
        }
        let chain = InverseChain::from_matrix(&m, Some(1)).map_err(|e| e.to_string())?;
        let d = DMatrix::from_diagonal(chain.diag());
        let d_inv = DMatrix::from_diagonal(&chain.diag().map(|x| 1.0 / x));
        let a0 = chain.level(0);
        let a1 = chain.level(1);
        let eye = DMatrix::<f64>::identity(n, n);
        let inner = (&d - a1).try_inverse().ok_or("D0 - A1 singular")?;
        let formula = (&d_inv + (&eye + &d_inv * a0) * inner * (&eye + a0 * &d_inv)) * 0.5;
        let exact = m.clone().try_inverse().ok_or("M singular")?;
        worst = worst.max((&formula - &exact).norm() / exact.norm());
        worst = worst.max((a1 - a0 * &d_inv * a0).norm() / a0.norm().max(1e-300));
    }
    let detail = format!("20 SDD matrices, worst relative error {worst:.1e}");
    if worst <= 1e-10 { Ok(detail) } else { Err(detail) }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-5;
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let g = random_connected(&mut rng, 3, 12);
        let p = rng.random_range(1..=4);
        let inst = quadratic_instance(&mut rng, g, p);
        let np = inst.n() * p;
        let lambda = gaussian(&mut rng, np) * 0.3;
        let e = |e: sdd_newton::Error| e.to_string();

        let grad = dual_gradient(&inst, &lambda).map_err(e)?;
        let fd = DVector::from_fn(np, |k, _| {
            let mut up = lambda.clone();
            let mut dn = lambda.clone();
            up[k] += h;
            dn[k] -= h;
            (dual_value(&inst, &up).unwrap() - dual_value(&inst, &dn).unwrap()) / (2.0 * h)
        });
        worst_g = worst_g.max((&grad - &fd).norm() / grad.norm().max(1e-12));

        let v = gaussian(&mut rng, np);
        let hv = dual_hessian_apply(&inst, &lambda, &v).map_err(e)?;
        let fd_h = (dual_gradient(&inst, &(&lambda + &v * h)).map_err(e)?
            - dual_gradient(&inst, &(&lambda - &v * h)).map_err(e)?)
            / (2.0 * h);
        worst_h = worst_h.max((&hv - &fd_h).norm() / hv.norm().max(1e-12));
    }
    let detail = format!("20 instances, worst gradient {worst_g:.1e}, Hessian {worst_h:.1e}");
    if worst_g <= 1e-4 && worst_h <= 1e-4 { Ok(detail) } else { Err(detail) }
}

/// `ε = ε₀ √(κ r) [1 + ε₀ r √κ + √r]`, `κ = Γ/γ`, `r = μ_n/μ₂`.
fn composed_eps(eps0: f64, c: &Curvature, mu2: f64, mu_n: f64) -> f64 {
    let kappa = c.big_gamma / c.gamma;
    let r = mu_n / mu2;
    eps0 * (kappa * r).sqrt() * (1.0 + eps0 * r * kappa.sqrt() + r.sqrt())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    let mut worst_raw = 0.0f64;
    for _ in 0..20 {
        let g = random_connected(&mut rng, 3, 14);
        let p = rng.random_range(1..=3);
        let inst = quadratic_instance(&mut rng, g, p);
        let (vals, _) = jacobi_eigen(inst.laplacian().matrix());
        let mut vals = vals;
        vals.sort_by(|a, b| a.total_cmp(b));
        let (mu2, mu_n) = (vals[1], vals[vals.len() - 1]);
        let state = DualState::at(&inst, gaussian(&mut rng, inst.n() * p)).map_err(|e| e.to_string())?;
        let hm = dense_neg_hessian(&inst, &state.y);
        let g_dense = kron_laplacian(inst.laplacian().matrix(), p) * &state.y;
        let d_star = psd_pinv(&hm) * &g_dense;
        for eps0 in [0.1, 0.01] {
            let dir = newton_direction(&inst, &state, eps0, DirectionMode::KernelCorrected, None)
                .map_err(|e| e.to_string())?;
            let ratio = energy(&hm, &(&dir.d - &d_star)) / energy(&hm, &d_star);
            worst_raw = worst_raw.max(ratio);
            worst = worst.max(ratio / composed_eps(eps0, &inst.curvature(), mu2, mu_n));
        }
    }
    let detail = format!("20 instances x eps0 {{0.1, 0.01}}, worst error {worst_raw:.1e}, worst error/bound {worst:.1e}");
    if worst <= 1.0 { Ok(detail) } else { Err(detail) }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let g = random_connected(&mut rng, 3, 15);
        let p = rng.random_range(1..=4);
        let inst = quadratic_instance(&mut rng, g, p);
        let cfg = NewtonConfig {
            eps0: 1e-12,
            step_mode: StepMode::Fixed { alpha: 1.0 },
            tol_grad_mnorm: Some(1e-8),
            max_iters: 5,
            ..NewtonConfig::default()
        };
        let mut solver = NewtonSolver::new(&inst, cfg, MessageUnit::Vector).map_err(|e| e.to_string())?;
        let s0 = DualState::zero(&inst).map_err(|e| e.to_string())?;
        let s1 = solver.step(1, &s0).map_err(|e| e.to_string())?.state;
        let m = kron_laplacian(inst.laplacian().matrix(), p);
        worst = worst.max(energy(&m, &(&m * &s1.y)));
    }
    let detail = format!("20 instances, worst ||g||_M after one step {worst:.1e}");
    if worst <= 1e-8 { Ok(detail) } else { Err(detail) }
}

fn well_conditioned_quadratic(rng: &mut ChaCha8Rng, n: usize, p: usize) -> ProblemInstance {
    let locals: Vec<Arc<dyn LocalObjective>> = (0..n)
        .map(|_| {
            let s = rng.random_range(0.5..0.6);
            Arc::new(QuadraticLocal::new(DMatrix::identity(p, p) * s, gaussian(rng, p), 0.0)) as Arc<dyn LocalObjective>
        })
        .collect();
    let diag: Vec<f64> = locals.iter().map(|l| l.hessian(&DVector::zeros(p))[(0, 0)]).collect();
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = diag.iter().cloned().fold(0.0, f64::max);
    ProblemInstance::new(
        Graph::complete(n).expect("n >= 2"),
        locals,
        Curvature { gamma: lo, big_gamma: hi, delta: 0.0 },
        ProblemKind::Custom,
    )
    .expect("valid instance")
}

struct PhaseTally {
    strict_checked: usize,
    strict_worst: f64,
    terminal_checked: usize,
    terminal_worst: f64,
}

/// Runs Newton at `α*` and checks both phase inequalities along the way.
fn check_phases(inst: &ProblemInstance, lambda0: DVector<f64>, eps0: f64, iters: usize, tally: &mut PhaseTally) -> Result<(), String> {
    let e = |e: sdd_newton::Error| e.to_string();
    let consts = ConvergenceConstants::from_inputs(&ConstantInputs::of(inst), eps0).map_err(e)?;
    if !consts.admissible {
        return Err(format!("eps0 {eps0} not admissible"));
    }
    let cfg = NewtonConfig { eps0, step_mode: StepMode::TheoremAlphaStar, ..NewtonConfig::default() };
    let mut solver = NewtonSolver::new(inst, cfg, MessageUnit::Vector).map_err(e)?;
    let m = kron_laplacian(inst.laplacian().matrix(), inst.p());
    let gnorm = |y: &DVector<f64>| energy(&m, &(&m * y));
    let mut state = solver.evaluate(lambda0).map_err(e)?;
    for k in 1..=iters {
        let g = gnorm(&state.y);
        if g <= 1e-9 {
            break;
        }
        let q = dual_value(inst, &state.lambda).map_err(e)?;
        let next = solver.step(k, &state).map_err(e)?.state;
        let g_next = gnorm(&next.y);
        if g >= consts.eta1 {
            let gain = dual_value(inst, &next.lambda).map_err(e)? - q;
            tally.strict_checked += 1;
            tally.strict_worst = tally.strict_worst.max(consts.strict_decrease / gain.max(1e-300));
        }
        if g <= consts.eta0 {
            tally.terminal_checked += 1;
            tally.terminal_worst = tally.terminal_worst.max(g_next / g / consts.zeta);
        }
        state = next;
    }
    Ok(())
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut quad = PhaseTally { strict_checked: 0, strict_worst: 0.0, terminal_checked: 0, terminal_worst: 0.0 };
    for _ in 0..5 {
        let n = rng.random_range(4..=8);
        let inst = well_conditioned_quadratic(&mut rng, n, 2);
        let lambda0 = gaussian(&mut rng, n * 2);
        check_phases(&inst, lambda0, 0.1, 20, &mut quad)?;
    }
    // Quadratics have δ = 0, so η₁ = ∞ and the strict-decrease branch is
    // never entered. Smooth non-quadratic objectives with a known δ exercise it.
    let mut smooth = PhaseTally { strict_checked: 0, strict_worst: 0.0, terminal_checked: 0, terminal_worst: 0.0 };
    for _ in 0..5 {
        let n = rng.random_range(4..=6);
        let inst = logcosh_instance(&mut rng, n, 2);
        let lambda0 = gaussian(&mut rng, n * 2) * 3.0;
        check_phases(&inst, lambda0, 0.1, 40, &mut smooth)?;
    }
    let detail = format!(
        "quadratic: terminal {} steps worst ratio/zeta {:.3}, strict-decrease vacuous (eta1 = inf); \
         logcosh: strict {} steps worst bound/gain {:.3}, terminal {} steps worst ratio/zeta {:.3}",
        quad.terminal_checked,
        quad.terminal_worst,
        smooth.strict_checked,
        smooth.strict_worst,
        smooth.terminal_checked,
        smooth.terminal_worst
    );
    let ok = quad.terminal_checked >= 5
        && quad.terminal_worst <= 1.0
        && quad.strict_checked == 0
        && smooth.strict_checked >= 5
        && smooth.strict_worst <= 1.0
        && smooth.terminal_worst <= 1.0;
    if ok { Ok(detail) } else { Err(detail) }
}

struct DeskRun {
    traces: Vec<RunTrace>,
    f_star: f64,
    stationarity: f64,
}

fn desk_scale() -> Result<DeskRun, String> {
    let cfg = preset("synthetic-regression-small").map_err(|e| e.to_string())?;
    let inst = cfg.build_instance().map_err(|e| e.to_string())?;
    let opt = inst.centralized_optimum().ok_or("centralized oracle failed")?;
    let grad_sum = inst.locals().iter().fold(DVector::zeros(inst.p()), |acc, l| acc + l.gradient(&opt.theta));
    let scale = inst.locals().iter().map(|l| l.gradient(&DVector::zeros(inst.p())).norm()).sum::<f64>();
    let opts = RunOptions { dry: true, ..RunOptions::default() };
    let out = run_experiment(&cfg, &opts).map_err(|e| e.to_string())?;
    Ok(DeskRun { traces: out.traces, f_star: opt.objective, stationarity: grad_sum.norm() / scale.max(1.0) })
}

fn trace<'a>(run: &'a DeskRun, name: &str) -> &'a RunTrace {
    run.traces.iter().find(|t| t.meta.algorithm == name).expect("algorithm present")
}

fn criterion_7(run: &DeskRun) -> Outcome {
    if run.stationarity > 1e-10 {
        return Err(format!("centralized optimum not stationary: {:.1e}", run.stationarity));
    }
    let newton = trace(run, "sdd-newton");
    let eps0 = newton.meta.params.get("eps0").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    if eps0 != 0.1 {
        return Err(format!("expected eps0 = 0.1, got {eps0}"));
    }
    let hit = |t: &RunTrace| t.first_within_gap(run.f_star, 1e-6).map(|r| r.iter);
    let final_gap = |t: &RunTrace| {
        let last = t.last().expect("non-empty trace").objective;
        (last - run.f_star).abs() / run.f_star.abs()
    };
    let k_newton = hit(newton).ok_or("sdd-newton never reached 1e-6")?;
    let mut parts = vec![format!("sdd-newton {k_newton} iters")];
    let mut ok = final_gap(newton) <= 1e-3;
    for name in ["admm", "averaging", "subgradient"] {
        let t = trace(run, name);
        let k = hit(t);
        ok &= k.is_none_or(|k| k > k_newton);
        ok &= final_gap(t) <= 1e-3;
        parts.push(format!(
            "{name} {} (final gap {:.1e})",
            k.map_or(format!(">{}", t.iterations()), |k| format!("{k} iters")),
            final_gap(t)
        ));
    }
    let detail = parts.join(", ");
    if ok { Ok(detail) } else { Err(detail) }
}

/// Cumulative messages when the relative gap first drops below each target;
/// unreached targets report the run's total as a lower bound.
fn messages_at(t: &RunTrace, f_star: f64, targets: &[f64]) -> Vec<(u64, bool)> {
    targets
        .iter()
        .map(|&tol| match t.first_within_gap(f_star, tol) {
            Some(r) => (r.messages_cumulative, true),
            None => (t.last().expect("non-empty").messages_cumulative, false),
        })
        .collect()
}

fn criterion_8(run: &DeskRun) -> Outcome {
    let targets = [1e-2, 1e-4, 1e-6];
    let newton = trace(run, "sdd-newton");
    let sub = trace(run, "subgradient");
    let dir = archive_dir();
    for t in [newton, sub] {
        t.save(&dir, &format!("criterion8_{}", t.meta.algorithm)).map_err(|e| e.to_string())?;
    }
    let mn = messages_at(newton, run.f_star, &targets);
    let ms = messages_at(sub, run.f_star, &targets);
    if mn.iter().any(|&(_, reached)| !reached) {
        return Err(format!("sdd-newton missed a target: {mn:?}"));
    }
    let growth_n = mn[2].0 as f64 / mn[0].0 as f64;
    // An unreached 1e-6 target makes the subgradient ratio a lower bound,
    // which still decides the ordering.
    let growth_s = ms[2].0 as f64 / ms[0].0 as f64;
    let fmt = |v: &[(u64, bool)]| {
        v.iter().map(|(m, r)| if *r { m.to_string() } else { format!(">={m}") }).collect::<Vec<_>>().join("/")
    };
    let detail = format!(
        "messages at 1e-2/1e-4/1e-6: sdd-newton {} (x{growth_n:.2}), subgradient {} (x{growth_s:.2}); traces in {}",
        fmt(&mn),
        fmt(&ms),
        dir.display()
    );
    if growth_n < growth_s { Ok(detail) } else { Err(detail) }
}

fn criterion_9() -> Outcome {
    let e = |e: sdd_newton::Error| e.to_string();
    // Two nodes, p = 2, f_i(θ) = θᵀP_iθ - 2c_iᵀθ + u_i.
    let p0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let p1 = DMatrix::from_row_slice(2, 2, &[1.5, -0.25, -0.25, 3.0]);
    let c0 = DVector::from_vec(vec![1.0, -2.0]);
    let c1 = DVector::from_vec(vec![0.5, 4.0]);
    let graph = Graph::new(2, vec![(0, 1)]).map_err(e)?;
    let locals: Vec<Arc<dyn LocalObjective>> = vec![
        Arc::new(QuadraticLocal::new(p0.clone(), c0.clone(), 1.0)),
        Arc::new(QuadraticLocal::new(p1.clone(), c1.clone(), 2.0)),
    ];
    let inst = ProblemInstance::new(graph, locals, Curvature { gamma: 1.0, big_gamma: 7.0, delta: 0.0 }, ProblemKind::Custom)
        .map_err(e)?;
    let beta = 0.7;

    // 2 × 2 solve by Cramer's rule.
    let solve2 = |a: &DMatrix<f64>, b: &DVector<f64>| {
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        DVector::from_vec(vec![
            (a[(1, 1)] * b[0] - a[(0, 1)] * b[1]) / det,
            (a[(0, 0)] * b[1] - a[(1, 0)] * b[0]) / det,
        ])
    };
    let eye = DMatrix::<f64>::identity(2, 2);
    // Node 0 has successor 1; node 1 has predecessor 0; d(i) = 1.
    let mut th0 = DVector::from_vec(vec![0.3, -0.1]);
    let mut th1 = DVector::from_vec(vec![-0.4, 0.2]);
    let mut lam = DVector::from_vec(vec![0.25, -0.5]);

    let mut state = AdmmState::new(inst.graph(), vec![th0.clone(), th1.clone()], beta);
    state.lambda.insert((0, 1), lam.clone());
    let mut net = Network::new(inst.graph(), MessageUnit::Vector);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let new0 = solve2(&(&p0 + &eye * (beta / 2.0)), &(&c0 + (&th1 + &lam / beta) * (beta / 2.0)));
        let new1 = solve2(&(&p1 + &eye * (beta / 2.0)), &(&c1 + (&new0 - &lam / beta) * (beta / 2.0)));
        lam -= (&new0 - &new1) * beta;
        th0 = new0;
        th1 = new1;

        admm_step(&inst, &mut state, &mut net).map_err(e)?;
        worst = worst
            .max((&state.theta[0] - &th0).amax())
            .max((&state.theta[1] - &th1).amax())
            .max((&state.lambda[&(0, 1)] - &lam).amax());
    }

    // Averaging on a random graph, reimplemented without any library helper.
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let g = random_connected(&mut rng, 5, 9);
    let n = g.n();
    let qinst = quadratic_instance(&mut rng, g, 3);
    let b_avg = 0.01;
    let theta0: Vec<DVector<f64>> = (0..n).map(|_| gaussian(&mut rng, 3)).collect();
    let mut lib = AveragingState::new(theta0.clone(), b_avg);
    let mut net = Network::new(qinst.graph(), MessageUnit::Vector);
    let (mut th, mut w) = (theta0.clone(), theta0);
    let mut z: Vec<DVector<f64>>;
    let deg: Vec<f64> = (0..n).map(|i| qinst.graph().neighbors(i).len() as f64).collect();
    let mut worst_avg = 0.0f64;
    for _ in 0..25 {
        let mut th_new = Vec::new();
        let mut w_new = Vec::new();
        let mut z_new = Vec::new();
        for i in 0..n {
            let grad = qinst.local(i).gradient(&w[i]);
            let mut mix = DVector::zeros(3);
            for &j in qinst.graph().neighbors(i) {
                mix += (&th[j] - &th[i]) / deg[i].max(deg[j]);
            }
            let wi = &th[i] + mix * 0.5 - &grad * b_avg;
            let zi = &w[i] - &grad * b_avg;
            let ti = &wi + (&wi - &zi) * (1.0 - 2.0 / (9.0 * n as f64 + 1.0));
            th_new.push(ti);
            w_new.push(wi);
            z_new.push(zi);
        }
        th = th_new;
        w = w_new;
        z = z_new;

        averaging_step(&qinst, &mut lib, &mut net).map_err(e)?;
        for i in 0..n {
            worst_avg = worst_avg
                .max((&lib.theta[i] - &th[i]).amax())
                .max((&lib.omega[i] - &w[i]).amax())
                .max((&lib.z[i] - &z[i]).amax());
        }
    }
    let detail = format!("ADMM 10 sweeps max deviation {worst:.1e}; averaging 25 steps max deviation {worst_avg:.1e}");
    if worst <= 1e-12 && worst_avg <= 1e-12 { Ok(detail) } else { Err(detail) }
}

fn criterion_10() -> Outcome {
    let mut compared = 0;
    for (name, quick) in [("synthetic-regression-small", true), ("logistic-l1-small", true), ("rl-small", true)] {
        let cfg = preset(name).map_err(|e| e.to_string())?;
        let run = |seed| {
            let opts = RunOptions { seed: Some(seed), quick, dry: true, ..RunOptions::default() };
            run_experiment(&cfg, &opts).map(|o| o.traces)
        };
        let a = run(7).map_err(|e| e.to_string())?;
        let b = run(7).map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(&b) {
            if x.to_csv_string(false) != y.to_csv_string(false) {
                return Err(format!("{name}/{} differs between identical runs", x.meta.algorithm));
            }
            compared += 1;
        }
        let c = run(8).map_err(|e| e.to_string())?;
        if a.iter().zip(&c).all(|(x, y)| x.to_csv_string(false) == y.to_csv_string(false)) {
            return Err(format!("{name}: changing the seed changed nothing"));
        }
    }
    Ok(format!("{compared} traces byte-identical across repeated runs"))
}

fn main() -> ExitCode {
    let mut all_ok = true;
    let mut report = |k: usize, outcome: Outcome| {
        match outcome {
            Ok(d) => println!("criterion {k}: PASS {d}"),
            Err(d) => {
                all_ok = false;
                println!("criterion {k}: FAIL {d}");
            }
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    match desk_scale() {
        Ok(run) => {
            report(7, criterion_7(&run));
            report(8, criterion_8(&run));
        }
        Err(e) => {
            report(7, Err(e.clone()));
            report(8, Err(e));
        }
    }
    report(9, criterion_9());
    report(10, criterion_10());
    if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
