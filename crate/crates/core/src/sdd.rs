//! Solvers for symmetric diagonally dominant (SDD) systems `M x = b`.
//!
//! The pipeline is
//!
//! 1. [`split`] `M = D0 - A0` into its diagonal and (negated) off-diagonal part,
//! 2. [`build_chain`] the inverse-approximated chain `A_i = D0 (D0⁻¹ A0)^(2^i)`,
//!    `i = 0..=d`, obtained by repeated squaring,
//! 3. [`crude_solve`], a forward/backward sweep over the chain that applies a
//!    fixed-accuracy approximate inverse `Z0 ≈ M⁻¹`,
//! 4. [`exact_solve`], preconditioned Richardson refinement
//!    `y_k = y_{k-1} + Z0 (b - M y_{k-1})` run until the M-norm error is
//!    certified below `eps · ‖x*‖_M`.
//!
//! Graph Laplacians are singular with kernel `span(1)`. For those inputs the
//! right-hand side is projected onto `1⊥` on entry and every iterate is
//! re-projected, so the returned solution is the minimum-norm one.
//!
//! Everything is dense; chain levels fill in under squaring anyway.

use std::ops::{Add, AddAssign};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Standard splitting `M = diag(D0) - A0`.
#[derive(Clone, Debug)]
pub struct Splitting {
    diag: DVector<f64>,
    off: DMatrix<f64>,
    off_rows: Vec<Vec<(usize, f64)>>,
    laplacian: bool,
}

impl Splitting {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    /// `A0`, entrywise nonnegative with zero diagonal.
    pub fn off_diagonal(&self) -> &DMatrix<f64> {
        &self.off
    }

    /// True when every row sums to zero, i.e. `M` is a graph Laplacian and
    /// `1` spans its kernel.
    pub fn is_laplacian(&self) -> bool {
        self.laplacian
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag) - &self.off
    }

    /// `M x`, touching only the nonzero pattern of `A0`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| {
            let off: f64 = self.off_rows[i].iter().map(|&(j, a)| a * x[j]).sum();
            self.diag[i] * x[i] - off
        })
    }

    /// Pairs `(i, j)` such that row `i` of `M` reads entry `j`, `i != j`.
    pub fn pattern(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.off_rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, _)| (i, j)))
    }
}

/// Splits a symmetric diagonally dominant matrix with nonpositive
/// off-diagonals. The error names the first row that violates a condition.
pub fn split(m: &DMatrix<f64>) -> Result<Splitting> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension { expected: n, got: m.ncols() });
    }
    let scale = m.amax().max(1.0);
    let mut diag = DVector::zeros(n);
    let mut off = DMatrix::zeros(n, n);
    let mut off_rows = vec![Vec::new(); n];
    let mut laplacian = n > 0;
    for i in 0..n {
        let mut row_off = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = m[(i, j)];
            if (v - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSdd { row: i, reason: "not symmetric" });
            }
            if v > 0.0 {
                return Err(Error::NotSdd { row: i, reason: "positive off-diagonal entry" });
            }
            if v != 0.0 {
                off[(i, j)] = -v;
                off_rows[i].push((j, -v));
                row_off += -v;
            }
        }
        let d = m[(i, i)];
        if d < row_off - SYMMETRY_TOL * scale {
            return Err(Error::NotSdd { row: i, reason: "not diagonally dominant" });
        }
        if (d - row_off).abs() > SYMMETRY_TOL * scale {
            laplacian = false;
        }
        diag[i] = d;
    }
    Ok(Splitting { diag, off, off_rows, laplacian })
}

/// Chain length used when none is given: `ceil(log2 n) + 2`, clamped to `[2, 30]`.
pub fn default_chain_depth(n: usize) -> usize {
    let log = (n.max(2) as f64).log2().ceil() as usize;
    (log + 2).clamp(2, 30)
}

/// The inverse-approximated chain `{D0, A_i}` for `i = 0..=d`.
#[derive(Clone, Debug)]
pub struct InverseChain {
    base: Splitting,
    inv_diag: DVector<f64>,
    levels: Vec<DMatrix<f64>>,
    forward_sign: f64,
    contraction: OnceLock<f64>,
}

pub fn build_chain(s: &Splitting, depth: usize) -> Result<InverseChain> {
    if depth < 1 {
        return Err(Error::Config("chain depth must be at least 1".into()));
    }
    if let Some(row) = s.diag.iter().position(|&d| d == 0.0) {
        return Err(Error::SingularSplitting(row));
    }
    let inv_diag = s.diag.map(|d| 1.0 / d);
    let mut levels = Vec::with_capacity(depth + 1);
    levels.push(s.off.clone());
    for _ in 0..depth {
        let prev = levels.last().expect("level 0 present");
        // A_{i+1} = A_i D0⁻¹ A_i, kept exactly symmetric.
        let mut scaled = prev.clone();
        for (mut row, &w) in scaled.row_iter_mut().zip(inv_diag.iter()) {
            row *= w;
        }
        let next = prev * scaled;
        levels.push((&next + next.transpose()) * 0.5);
    }
    Ok(InverseChain { base: s.clone(), inv_diag, levels, forward_sign: 1.0, contraction: OnceLock::new() })
}

impl InverseChain {
    pub fn from_matrix(m: &DMatrix<f64>, depth: Option<usize>) -> Result<Self> {
        let s = split(m)?;
        let depth = depth.unwrap_or_else(|| default_chain_depth(s.n()));
        build_chain(&s, depth)
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// Chain length `d` (there are `d + 1` levels).
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn splitting(&self) -> &Splitting {
        &self.base
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.base.diag
    }

    /// `A_i`; level 0 is `A0` itself.
    pub fn level(&self, i: usize) -> &DMatrix<f64> {
        &self.levels[i]
    }

    pub fn is_laplacian(&self) -> bool {
        self.base.laplacian
    }

    /// Flips the sign of the forward sweep, which wrecks the preconditioner.
    /// Only used to check that verification reports go red.
    #[doc(hidden)]
    pub fn inject_fault(&mut self) {
        self.forward_sign = -self.forward_sign;
        self.contraction = OnceLock::new();
    }

    /// `ρ = ‖I - Z0 M‖_M` on `range(M)`: the per-step contraction of
    /// Richardson refinement with this chain's crude solver.
    ///
    /// Measured once from dense `Z0` (n crude solves) and two symmetric
    /// eigendecompositions, then cached. With `R = M^{1/2}` and `P` the
    /// projector onto `range(M)`, `ρ = ‖P - R Z0 R‖₂`.
    pub fn crude_contraction(&self) -> f64 {
        *self.contraction.get_or_init(|| {
            let n = self.n();
            let m = self.base.reconstruct();
            let eig = SymmetricEigen::new(m);
            let tol = 1e-12 * eig.eigenvalues.amax().max(1e-300);
            let mut root = DMatrix::zeros(n, n);
            let mut proj = DMatrix::zeros(n, n);
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > tol {
                    let u = eig.eigenvectors.column(k);
                    let uut = u * u.transpose();
                    root += &uut * lam.sqrt();
                    proj += uut;
                }
            }
            let mut z0 = DMatrix::zeros(n, n);
            let mut work = SolverWork::default();
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                if self.base.laplacian {
                    center(&mut e);
                }
                let mut col = crude_apply(self, &e, &mut work);
                if self.base.laplacian {
                    center(&mut col);
                }
                z0.set_column(j, &col);
            }
            let e = proj - &root * z0 * &root;
            e.singular_values().max()
        })
    }

    fn scale_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_mul(&self.inv_diag)
    }
}

/// Counts of the operator applications performed by a solve. The message
/// accounting in [`crate::sim`] is derived from these.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverWork {
    pub crude_solves: u64,
    /// Applications of a chain level `A_i` to a vector.
    pub level_applies: u64,
    /// Applications of `M` itself (Richardson residuals).
    pub matrix_applies: u64,
}

impl SolverWork {
    /// Total operator applications, each of which costs one neighbor exchange.
    pub fn operator_applies(&self) -> u64 {
        self.level_applies + self.matrix_applies
    }
}

impl Add for SolverWork {
    type Output = SolverWork;
    fn add(self, o: SolverWork) -> SolverWork {
        SolverWork {
            crude_solves: self.crude_solves + o.crude_solves,
            level_applies: self.level_applies + o.level_applies,
            matrix_applies: self.matrix_applies + o.matrix_applies,
        }
    }
}

impl AddAssign for SolverWork {
    fn add_assign(&mut self, o: SolverWork) {
        *self = *self + o;
    }
}

fn crude_apply(chain: &InverseChain, b0: &DVector<f64>, work: &mut SolverWork) -> DVector<f64> {
    let d = chain.depth();
    let mut bs = Vec::with_capacity(d + 1);
    bs.push(b0.clone());
    for i in 1..=d {
        let prev = &bs[i - 1];
        let pushed = &chain.levels[i - 1] * chain.scale_inv(prev);
        bs.push(prev + pushed * chain.forward_sign);
    }
    let mut x = chain.scale_inv(&bs[d]);
    for i in (0..d).rev() {
        let coupled = chain.scale_inv(&(&chain.levels[i] * &x));
        x = (chain.scale_inv(&bs[i]) + &x + coupled) * 0.5;
    }
    work.crude_solves += 1;
    work.level_applies += 2 * d as u64;
    x
}

/// One forward/backward pass over the chain: `x0 = Z0 b0`.
pub fn crude_solve(chain: &InverseChain, b0: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(chain.n(), b0.len())?;
    Ok(crude_apply(chain, b0, &mut SolverWork::default()))
}

/// Outcome of [`exact_solve`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    /// `‖M x̃ - b‖₂` after projection (the computable surrogate).
    pub residual_norm: f64,
    /// Bound on `‖x̃ - x*‖_M` from the chain's measured contraction, once a
    /// refinement step has run.
    pub error_bound: Option<f64>,
    pub richardson_iters: usize,
    pub chain_depth: usize,
    pub converged: bool,
    pub work: SolverWork,
}

/// Richardson refinement options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub eps: f64,
    /// Iteration cap; `None` means `ceil(iteration_constant · ln(1/eps))`.
    pub max_iters: Option<usize>,
    pub iteration_constant: f64,
}

impl SolveOptions {
    pub fn new(eps: f64) -> Self {
        SolveOptions { eps, max_iters: None, iteration_constant: 10.0 }
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iters.unwrap_or_else(|| {
            if self.eps >= 1.0 {
                0
            } else {
                (self.iteration_constant * (1.0 / self.eps).ln()).ceil().max(1.0) as usize
            }
        })
    }
}

fn center(v: &mut DVector<f64>) {
    let mean = v.mean();
    v.add_scalar_mut(-mean);
}

/// Solves `M x = b` to relative M-norm accuracy `eps`.
pub fn exact_solve(
    chain: &InverseChain,
    b0: &DVector<f64>,
    eps: f64,
    max_iters: Option<usize>,
) -> Result<SolveReport> {
    let opts = SolveOptions { max_iters, ..SolveOptions::new(eps) };
    exact_solve_with(chain, b0, &opts, |_, _| {})
}

/// [`exact_solve`] with an observer called on `y_0` and on every refined iterate.
pub fn exact_solve_with(
    chain: &InverseChain,
    b0: &DVector<f64>,
    opts: &SolveOptions,
    mut observe: impl FnMut(usize, &DVector<f64>),
) -> Result<SolveReport> {
    check_len(chain.n(), b0.len())?;
    if !(opts.eps > 0.0) {
        return Err(Error::Config(format!("solver accuracy must be positive, got {}", opts.eps)));
    }
    let project = chain.is_laplacian();
    let m = &chain.base;
    let mut work = SolverWork::default();

    let mut b = b0.clone();
    if project {
        center(&mut b);
    }
    let mut y = crude_apply(chain, &b, &mut work);
    if project {
        center(&mut y);
    }
    observe(0, &y);

    let mut residual = &b - m.apply(&y);
    work.matrix_applies += 1;
    let report = |y: DVector<f64>, residual: &DVector<f64>, iters, bound, converged, work| SolveReport {
        residual_norm: residual.norm(),
        solution: y,
        error_bound: bound,
        richardson_iters: iters,
        chain_depth: chain.depth(),
        converged,
        work,
    };

    // Z0 M has spectrum in (0, 1] on range(M), so the crude answer already
    // satisfies ‖x0 - x*‖_M ≤ ‖x*‖_M.
    if opts.eps >= 1.0 {
        return Ok(report(y, &residual, 0, None, true, work));
    }

    let cap = opts.iteration_cap();
    let rho = chain.crude_contraction();
    let mut bound = None;
    for k in 1..=cap {
        let mut u = crude_apply(chain, &residual, &mut work);
        if project {
            center(&mut u);
        }
        y += &u;
        let new_residual = &b - m.apply(&y);
        work.matrix_applies += 1;
        // M u = r_{k-1} - r_k, so both norms come for free.
        let step = u.dot(&(&residual - &new_residual)).max(0.0).sqrt();
        let y_norm = y.dot(&(&b - &new_residual)).max(0.0).sqrt();
        residual = new_residual;
        observe(k, &y);

        if step == 0.0 {
            return Ok(report(y, &residual, k, Some(0.0), true, work));
        }
        // e_k = (I - Z0 M) e_{k-1} and u_k = e_{k-1} - e_k give
        // ‖e_k‖_M <= ρ/(1-ρ) ‖u_k‖_M, and ‖x*‖_M >= ‖y_k‖_M - ‖e_k‖_M.
        if rho < 1.0 {
            let b_k = rho / (1.0 - rho) * step;
            bound = Some(b_k);
            if b_k <= opts.eps * (y_norm - b_k) {
                return Ok(report(y, &residual, k, bound, true, work));
            }
        }
    }
    Ok(report(y, &residual, cap, bound, false, work))
}

/// `sqrt(xᵀ M x)`, clamped at zero.
pub fn m_norm(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x)).max(0.0).sqrt()
}
