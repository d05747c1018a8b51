//! Resolvent kernels, the state solver and the split `X = psi + Theta u`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta as beta_fn;
use statrs::function::gamma::ln_gamma;

use crate::blocks::{GridFunction, LowerBlocks};
use crate::error::{argument, dimension, numerical, require_lq_beta, Result};
use crate::grid_quad::{interval_weights, Grid, GridKind, JacobiRule, SingularWeights};
use crate::problem::{KernelFn, ProblemData, SampledProblem, TimeVectorFn};

/// `K(t,s) = C(t,s) (t-s)^(beta-1) + D(t,s)` sampled on node pairs `j <= i`.
#[derive(Debug, Clone)]
pub struct FactoredKernel {
    grid: Arc<Grid>,
    weights: Arc<SingularWeights>,
    coeff: LowerBlocks,
    regular: LowerBlocks,
    coeff_bound: f64,
}

impl FactoredKernel {
    pub fn new(
        grid: Arc<Grid>,
        weights: Arc<SingularWeights>,
        coeff: LowerBlocks,
        regular: LowerBlocks,
    ) -> Result<Self> {
        if coeff.shape() != regular.shape()
            || coeff.nodes() != grid.len()
            || regular.nodes() != grid.len()
            || weights.nodes() != grid.len()
        {
            return Err(dimension("factored kernel parts do not match the grid"));
        }
        if !coeff.is_finite() || !regular.is_finite() {
            return Err(numerical("factored kernel has non-finite samples"));
        }
        let mut coeff_bound: f64 = 0.0;
        for i in 0..grid.len() {
            for j in 0..=i {
                coeff_bound = coeff_bound.max(coeff.block(i, j).norm());
            }
        }
        Ok(Self {
            grid,
            weights,
            coeff,
            regular,
            coeff_bound,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn weights(&self) -> &Arc<SingularWeights> {
        &self.weights
    }

    pub fn beta(&self) -> f64 {
        self.weights.beta()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeff.shape()
    }

    pub fn singular_coeff(&self) -> &LowerBlocks {
        &self.coeff
    }

    pub fn regular_part(&self) -> &LowerBlocks {
        &self.regular
    }

    /// Largest Frobenius norm of the singular coefficient over all samples.
    pub fn coeff_bound(&self) -> f64 {
        self.coeff_bound
    }

    /// Pointwise value for `i > j`.
    pub fn value(&self, i: usize, j: usize) -> DMatrix<f64> {
        assert!(i > j, "kernel value requested on or above the diagonal");
        let r = self.grid.t(i) - self.grid.t(j);
        self.coeff.block(i, j) * r.powf(self.beta() - 1.0) + self.regular.block(i, j)
    }

    /// Quadrature block: the singular part against product weights, the regular part against
    /// trapezoid weights of `[0, t_i]`.
    pub fn operator_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        if j > i {
            let (r, c) = self.shape();
            return DMatrix::zeros(r, c);
        }
        self.coeff.block(i, j) * self.weights.get(i, j)
            + self.regular.block(i, j) * self.grid.row_trapezoid(i, j)
    }

    /// `(K g)(t_i) ≈ ∫_0^{t_i} K(t_i,s) g(s) ds`.
    pub fn apply(&self, g: &GridFunction) -> Result<GridFunction> {
        let (r, c) = self.shape();
        if g.dim() != c || g.nodes() != self.grid.len() {
            return Err(dimension("kernel application"));
        }
        let n = self.grid.len();
        let mut out = GridFunction::zeros(n, r);
        for i in 1..n {
            let mut acc = DVector::zeros(r);
            for j in 0..=i {
                acc += self.operator_block(i, j) * g.at(j);
            }
            out.set(i, &acc);
        }
        Ok(out)
    }

    /// Adjoint of [`apply`](Self::apply) in the trapezoid inner product:
    /// `(K* g)(s_j) ≈ ∫_{s_j}^T K(t,s_j)^T g(t) dt`.
    pub fn apply_adjoint(&self, g: &GridFunction) -> Result<GridFunction> {
        let (r, c) = self.shape();
        if g.dim() != r || g.nodes() != self.grid.len() {
            return Err(dimension("adjoint kernel application"));
        }
        let n = self.grid.len();
        let w = self.grid.weights();
        let mut out = GridFunction::zeros(n, c);
        for j in 0..n {
            let mut acc = DVector::zeros(c);
            for i in j.max(1)..n {
                acc += self.operator_block(i, j).transpose() * (g.at(i) * w[i]);
            }
            out.set(j, &(acc / w[j]));
        }
        Ok(out)
    }

    /// Dense `(nodes*r) x (nodes*c)` matrix of quadrature blocks.
    pub fn dense_operator(&self) -> DMatrix<f64> {
        let (r, c) = self.shape();
        let n = self.grid.len();
        let mut out = DMatrix::zeros(n * r, n * c);
        for i in 1..n {
            for j in 0..=i {
                out.view_mut((i * r, j * c), (r, c))
                    .copy_from(&self.operator_block(i, j));
            }
        }
        out
    }
}

/// Implicit forward stepping for `X = F + A_h X` with the product-integration operator `A_h`.
pub(crate) struct Stepper<'a> {
    sp: &'a SampledProblem,
    diag_inv: Vec<DMatrix<f64>>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(sp: &'a SampledProblem) -> Result<Self> {
        let n = sp.state_dim;
        let mut diag_inv = Vec::with_capacity(sp.nodes());
        for i in 0..sp.nodes() {
            let m = DMatrix::identity(n, n) - sp.a.block(i, i) * sp.weights.get(i, i);
            let inv = m.try_inverse().ok_or_else(|| {
                numerical(format!(
                    "implicit step singular at node {i}; the grid is too coarse for this kernel"
                ))
            })?;
            diag_inv.push(inv);
        }
        Ok(Self { sp, diag_inv })
    }

    /// Solves for a block right-hand side with `nodes*state_dim` rows.
    pub(crate) fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.sp.state_dim;
        let len = self.sp.nodes();
        let mut x = rhs.clone();
        for i in 0..len {
            let row = self.sp.weights.row(i);
            let mut acc = rhs.rows(i * n, n).into_owned();
            for (k, wk) in row.iter().enumerate().take(i) {
                if *wk != 0.0 {
                    acc += self.sp.a.block(i, k) * x.rows(k * n, n) * *wk;
                }
            }
            let xi = &self.diag_inv[i] * acc;
            x.rows_mut(i * n, n).copy_from(&xi);
        }
        x
    }
}

/// Time-stepped solution of `X = xi + ∫_0^t A(t,s) X(s) (t-s)^(beta-1) ds`.
pub fn solve_state(sp: &SampledProblem, xi: &GridFunction) -> Result<GridFunction> {
    if xi.dim() != sp.state_dim || xi.nodes() != sp.nodes() {
        return Err(dimension("forcing must be a state trajectory on the problem grid"));
    }
    let stepper = Stepper::new(sp)?;
    let rhs = DMatrix::from_column_slice(xi.flat().len(), 1, xi.flat().as_slice());
    let x = stepper.solve(&rhs);
    let out = GridFunction::from_flat(sp.state_dim, x.column(0).into_owned())?;
    if !out.is_finite() {
        return Err(numerical("state solve produced non-finite values"));
    }
    Ok(out)
}

/// Free term plus the control contribution `∫ B(t,s) u(s) (t-s)^(beta-1) ds`.
pub fn controlled_forcing(sp: &SampledProblem, u: &GridFunction) -> Result<GridFunction> {
    if u.dim() != sp.control_dim || u.nodes() != sp.nodes() {
        return Err(dimension("control must be sampled on the problem grid"));
    }
    let mut xi = sp.phi.clone();
    for i in 1..sp.nodes() {
        let mut acc = DVector::zeros(sp.state_dim);
        for (j, wj) in sp.weights.row(i).iter().enumerate() {
            acc += sp.b.block(i, j) * u.at(j) * *wj;
        }
        xi.add_at(i, &acc);
    }
    Ok(xi)
}

/// State driven by the free term and control `u`.
pub fn solve_controlled(sp: &SampledProblem, u: &GridFunction) -> Result<GridFunction> {
    solve_state(sp, &controlled_forcing(sp, u)?)
}

/// Resolvent of the discrete product-integration operator, `(I - A_h)^-1 - I`, in factored form.
///
/// Its quadrature blocks reproduce [`solve_state`] exactly through the variation-of-constants
/// formula.
pub fn discrete_resolvent(sp: &SampledProblem) -> Result<FactoredKernel> {
    let n = sp.state_dim;
    let len = sp.nodes();
    let stepper = Stepper::new(sp)?;
    let grid = &sp.grid;
    let mut regular = LowerBlocks::zeros(len, n, n);
    // column j of A_h as right-hand side
    for j in 0..len {
        let mut rhs = DMatrix::zeros(len * n, n);
        for i in j..len {
            let w = sp.weights.get(i, j);
            if w != 0.0 {
                rhs.view_mut((i * n, 0), (n, n)).copy_from(&(sp.a.block(i, j) * w));
            }
        }
        let phi = stepper.solve(&rhs);
        for i in j.max(1)..len {
            let tau = grid.row_trapezoid(i, j);
            let block = phi.view((i * n, 0), (n, n)) - sp.a.block(i, j) * sp.weights.get(i, j);
            regular.set(i, j, &(block / tau));
        }
    }
    FactoredKernel::new(grid.clone(), sp.weights.clone(), sp.a.clone(), regular)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventOptions {
    /// Subdivisions of each grid interval on the coarser of the two column meshes.
    pub subdivisions: usize,
    /// Gauss–Jacobi points for the closed-form leading terms.
    pub quadrature_points: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            subdivisions: 2,
            quadrature_points: 8,
        }
    }
}

/// Pointwise resolvent together with the residuals of its two defining identities.
#[derive(Debug, Clone)]
pub struct Resolvent {
    pub kernel: FactoredKernel,
    /// Relative weighted L² residual of the forward identity.
    pub residual: f64,
    /// Relative weighted L² residual of the dual identity.
    pub dual_residual: f64,
}

/// Resolvent `Phi = A r^(beta-1) + ∫ A(t,τ)(t-τ)^(beta-1) Phi(τ,s) dτ` at the grid nodes.
pub fn resolvent(problem: &ProblemData, grid: Arc<Grid>) -> Result<Resolvent> {
    resolvent_with(problem, grid, ResolventOptions::default())
}

pub fn resolvent_with(
    problem: &ProblemData,
    grid: Arc<Grid>,
    opts: ResolventOptions,
) -> Result<Resolvent> {
    let chain = KernelChain::new(problem, grid.clone(), &problem.a, problem.state_dim, opts)?;
    let kernel = chain.solve()?;
    let (residual, dual_residual) = chain.residuals(&kernel)?;
    Ok(Resolvent {
        kernel,
        residual,
        dual_residual,
    })
}

/// Pointwise `Psi = B r^(beta-1) + ∫ A(t,τ)(t-τ)^(beta-1) Psi(τ,s) dτ` at the grid nodes.
pub fn pointwise_control_kernel(
    problem: &ProblemData,
    grid: Arc<Grid>,
    opts: ResolventOptions,
) -> Result<FactoredKernel> {
    KernelChain::new(problem, grid, &problem.b, problem.control_dim, opts)?.solve()
}

/// Column solver for `K = S r^(beta-1) + ∫ A(t,τ)(t-τ)^(beta-1) K(τ,s) dτ`.
///
/// The first three Neumann terms are integrated by Gauss–Jacobi rules; the smoother remainder is
/// stepped on two nested refinements of the grid and combined by Richardson extrapolation.
struct KernelChain<'a> {
    a: &'a KernelFn,
    src: &'a KernelFn,
    beta: f64,
    n: usize,
    cols: usize,
    grid: Arc<Grid>,
    weights: Arc<SingularWeights>,
    opts: ResolventOptions,
    first: JacobiRule,
    second: JacobiRule,
}

impl<'a> KernelChain<'a> {
    fn new(
        problem: &'a ProblemData,
        grid: Arc<Grid>,
        src: &'a KernelFn,
        cols: usize,
        opts: ResolventOptions,
    ) -> Result<Self> {
        if opts.subdivisions == 0 || opts.quadrature_points == 0 {
            return Err(argument("resolvent options must be positive"));
        }
        let beta = problem.beta;
        let weights = Arc::new(SingularWeights::new(&grid, beta)?);
        Ok(Self {
            a: &problem.a,
            src,
            beta,
            n: problem.state_dim,
            cols,
            first: JacobiRule::new(opts.quadrature_points, beta - 1.0, beta - 1.0)?,
            second: JacobiRule::new(opts.quadrature_points, beta - 1.0, 2.0 * beta - 1.0)?,
            grid,
            weights,
            opts,
        })
    }

    /// Smooth factor of the second term: `∫_0^1 (1-x)^(beta-1) x^(beta-1) A(t,τ) S(τ,s) dx`.
    fn second_factor(&self, t: f64, s: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.n, self.cols);
        for (x, w) in self.first.nodes.iter().zip(&self.first.weights) {
            let tau = s + x * (t - s);
            acc += ((self.a)(t, tau) * (self.src)(tau, s)) * *w;
        }
        acc
    }

    fn second_term(&self, t: f64, s: f64) -> DMatrix<f64> {
        self.second_factor(t, s) * (t - s).powf(2.0 * self.beta - 1.0)
    }

    fn third_term(&self, t: f64, s: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.n, self.cols);
        for (x, w) in self.second.nodes.iter().zip(&self.second.weights) {
            let tau = s + x * (t - s);
            acc += ((self.a)(t, tau) * self.second_factor(tau, s)) * *w;
        }
        acc * (t - s).powf(3.0 * self.beta - 1.0)
    }

    fn solve(&self) -> Result<FactoredKernel> {
        let p = self.opts.subdivisions;
        let coarse = self.grid.len();
        let fine = self.grid.subdivided(2 * p)?;
        let fine_len = fine.len();
        let x = fine.nodes();
        let n = self.n;
        let a_fine = LowerBlocks::from_fn(fine_len, n, n, |i, j| (self.a)(x[i], x[j]));
        let mesh_fine = Arc::new(fine.clone());
        let w_fine = SingularWeights::new(&mesh_fine, self.beta)?;
        let half = self.grid.subdivided(p)?;
        let w_half = SingularWeights::new(&half, self.beta)?;
        let diag = |w: &SingularWeights, stride: usize| -> Result<Vec<DMatrix<f64>>> {
            (0..w.nodes())
                .map(|l| {
                    (DMatrix::identity(n, n) - a_fine.block(l * stride, l * stride) * w.get(l, l))
                        .try_inverse()
                        .ok_or_else(|| numerical("refined column step singular"))
                })
                .collect()
        };
        let diag_fine = diag(&w_fine, 1)?;
        let diag_half = diag(&w_half, 2)?;

        let mut coeff = LowerBlocks::zeros(coarse, n, self.cols);
        let mut regular = LowerBlocks::zeros(coarse, n, self.cols);
        let gx = self.grid.nodes();
        for i in 0..coarse {
            coeff.set(i, i, &(self.src)(gx[i], gx[i]));
        }
        for j in 0..coarse - 1 {
            let s = gx[j];
            let start = j * 2 * p;
            let third: Vec<DMatrix<f64>> = (start..fine_len)
                .map(|l| {
                    if l == start {
                        DMatrix::zeros(n, self.cols)
                    } else {
                        self.third_term(x[l], s)
                    }
                })
                .collect();
            let step = |stride: usize, w: &SingularWeights, dinv: &[DMatrix<f64>]| {
                let first = start / stride;
                let last = (fine_len - 1) / stride;
                let mut e: Vec<DMatrix<f64>> = Vec::with_capacity(last - first + 1);
                e.push(DMatrix::zeros(n, self.cols));
                for l in first + 1..=last {
                    let mut acc = third[(l - first) * stride].clone();
                    for m in first + 1..l {
                        let wm = w.get(l, m);
                        acc += a_fine.block(l * stride, m * stride) * &e[m - first] * wm;
                    }
                    e.push(&dinv[l] * acc);
                }
                e
            };
            let e_fine = step(1, &w_fine, &diag_fine);
            let e_half = step(2, &w_half, &diag_half);
            for i in j + 1..coarse {
                let t = gx[i];
                let ef = &e_fine[(i - j) * 2 * p];
                let eh = &e_half[(i - j) * p];
                let rem = (ef * 4.0 - eh) / 3.0;
                coeff.set(i, j, &(self.src)(t, s));
                regular.set(i, j, &(self.second_term(t, s) + rem));
            }
        }
        FactoredKernel::new(self.grid.clone(), self.weights.clone(), coeff, regular)
    }

    /// Residuals of both identities using only node values and the closed-form leading terms.
    fn residuals(&self, kernel: &FactoredKernel) -> Result<(f64, f64)> {
        let gx = self.grid.nodes();
        let len = self.grid.len();
        let w = self.grid.weights();
        let beta = self.beta;
        let n = self.n;
        // remainder after two Neumann terms, zero on the diagonal
        let mut rem = LowerBlocks::zeros(len, n, self.cols);
        let mut second = LowerBlocks::zeros(len, n, self.cols);
        let mut third = LowerBlocks::zeros(len, n, self.cols);
        for i in 1..len {
            for j in 0..i {
                let s2 = self.second_term(gx[i], gx[j]);
                rem.set(i, j, &(kernel.regular_part().block(i, j) - &s2));
                second.set(i, j, &s2);
                third.set(i, j, &self.third_term(gx[i], gx[j]));
            }
        }
        let mut num = 0.0;
        let mut num_dual = 0.0;
        let mut den = 0.0;
        for i in 1..len {
            for j in 0..i {
                let value = kernel.value(i, j);
                let lead = kernel.singular_coeff().block(i, j)
                    * (gx[i] - gx[j]).powf(beta - 1.0)
                    + second.block(i, j)
                    + third.block(i, j);
                // forward identity: integrate in the first argument
                let mut fwd = DMatrix::zeros(n, self.cols);
                for k in j + 1..=i {
                    fwd += (self.a)(gx[i], gx[k]) * rem.block(k, j) * self.weights.get(i, k);
                }
                let r = &value - &lead - fwd;
                // dual identity: integrate in the second argument, singular at τ = s_j
                let mut dual = DMatrix::zeros(n, self.cols);
                for k in j..i {
                    let (wl, wr) = interval_weights(-gx[j], -gx[k + 1], -gx[k], beta);
                    dual += rem.block(i, k) * (self.src)(gx[k], gx[j]) * wr;
                    if k + 1 < i {
                        dual += rem.block(i, k + 1) * (self.src)(gx[k + 1], gx[j]) * wl;
                    }
                }
                let rd = &value - &lead - dual;
                let ww = w[i] * w[j];
                num += ww * r.norm_squared();
                num_dual += ww * rd.norm_squared();
                den += ww * value.norm_squared();
            }
        }
        if den == 0.0 {
            return Ok((num.sqrt(), num_dual.sqrt()));
        }
        Ok(((num / den).sqrt(), (num_dual / den).sqrt()))
    }
}

/// Split of the state into the control-free part and the control-to-state kernel.
#[derive(Debug, Clone)]
pub struct StateDecomposition {
    pub psi: GridFunction,
    pub psi_t: DVector<f64>,
    /// Control kernel in factored form.
    pub kernel: FactoredKernel,
    /// Pointwise samples of the control kernel at `t = T`, nodes `0..N-1`.
    pub terminal_row: Vec<DMatrix<f64>>,
}

/// Builds `psi = phi + ∫ Phi phi` and `Psi = B r^(beta-1) + ∫ Phi(t,τ) B(τ,s) (τ-s)^(beta-1) dτ`.
pub fn decompose(sp: &SampledProblem, resolvent: &FactoredKernel) -> Result<StateDecomposition> {
    let (n, m) = (sp.state_dim, sp.control_dim);
    let len = sp.nodes();
    if resolvent.grid().nodes() != sp.grid.nodes() || resolvent.shape() != (n, n) {
        return Err(dimension("resolvent grid or shape differs from the problem"));
    }
    let psi = sp.phi.add(&resolvent.apply(&sp.phi)?);
    let psi_t = psi.at(len - 1).into_owned();
    let ops: Vec<Vec<DMatrix<f64>>> = (0..len)
        .map(|i| (0..=i).map(|k| resolvent.operator_block(i, k)).collect())
        .collect();
    let mut regular = LowerBlocks::zeros(len, n, m);
    for j in 0..len {
        for i in j.max(1)..len {
            let mut blk = DMatrix::zeros(n, m);
            for k in j..=i {
                let w = sp.weights.get(k, j);
                if w != 0.0 {
                    blk += &ops[i][k] * sp.b.block(k, j) * w;
                }
            }
            regular.set(i, j, &(blk / sp.grid.row_trapezoid(i, j)));
        }
    }
    let kernel = FactoredKernel::new(sp.grid.clone(), sp.weights.clone(), sp.b.clone(), regular)?;
    let terminal_row = (0..len - 1).map(|j| kernel.value(len - 1, j)).collect();
    Ok(StateDecomposition {
        psi,
        psi_t,
        kernel,
        terminal_row,
    })
}

/// Relative difference between the time-stepped state and `xi + ∫ Phi xi`.
pub fn verify_variation_of_constants(
    sp: &SampledProblem,
    resolvent: &FactoredKernel,
    xi: &GridFunction,
) -> Result<f64> {
    let stepped = solve_state(sp, xi)?;
    let formula = xi.add(&resolvent.apply(xi)?);
    let w = sp.grid.weights();
    let scale = stepped.weighted_norm(w).max(f64::MIN_POSITIVE);
    Ok(stepped.sub(&formula).weighted_norm(w) / scale)
}

/// Resolvent majorant for a scalar kernel of size `a`: `Σ a^k Γ(β)^k r^(kβ-1) / Γ(kβ)`.
pub fn majorant_series(a: f64, beta: f64, r: f64, terms: usize) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let lg = ln_gamma(beta);
    (1..=terms)
        .map(|k| {
            let kf = k as f64;
            (kf * (a.ln() + lg) + (kf * beta - 1.0) * r.ln() - ln_gamma(kf * beta)).exp()
        })
        .sum()
}

/// Resolvent of the constant scalar kernel `a`: `Σ sign(a)^k |a|^k Γ(β)^k r^(kβ-1) / Γ(kβ)`.
pub fn constant_resolvent_series(a: f64, beta: f64, r: f64, terms: usize) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let lg = ln_gamma(beta);
    (1..=terms)
        .map(|k| {
            let kf = k as f64;
            let term = (kf * (a.abs().ln() + lg) + (kf * beta - 1.0) * r.ln() - ln_gamma(kf * beta)).exp();
            if a < 0.0 && k % 2 == 1 {
                -term
            } else {
                term
            }
        })
        .sum()
}

/// Smallest constant `K` with `r^(1-β) Phi_maj(r) <= a + K a² B(β,β) r^β` on `(0, T]`.
pub fn gronwall_constant(a: f64, beta: f64, horizon: f64) -> f64 {
    if a == 0.0 {
        return 1.0;
    }
    let total = majorant_series(a, beta, horizon, 200) * horizon.powf(1.0 - beta);
    (total - a) / (a * a * beta_fn(beta, beta) * horizon.powf(beta))
}

/// Largest Frobenius norm of `A` over the sampled node pairs.
pub fn sup_norm(blocks: &LowerBlocks) -> f64 {
    let mut a: f64 = 0.0;
    for i in 0..blocks.nodes() {
        for j in 0..=i {
            a = a.max(blocks.block(i, j).norm());
        }
    }
    a
}

/// Checks `|Phi(t,s)| (t-s)^(1-β) <= a + K a² B(β,β) (t-s)^β` at every off-diagonal sample.
///
/// The bound is attained by constant positive kernels, so samples may exceed it by the
/// quadrature error; the allowance is `h^(1+β)` relative, `h` the largest step.
pub fn check_resolvent_bound(kernel: &FactoredKernel, a: f64) -> bool {
    let grid = kernel.grid();
    let beta = kernel.beta();
    let k = gronwall_constant(a, beta, grid.horizon());
    let b = beta_fn(beta, beta);
    let slack = 1.0 + grid.max_step().powf(1.0 + beta);
    for i in 1..grid.len() {
        for j in 0..i {
            let r = grid.t(i) - grid.t(j);
            let lhs = kernel.value(i, j).norm() * r.powf(1.0 - beta);
            let rhs = a + k * a * a * b * r.powf(beta);
            if lhs > rhs * slack + 1e-300 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub sizes: Vec<usize>,
    /// `max |X(t) - X(T)|` over the ten nodes preceding `T`, per refinement.
    pub gaps: Vec<f64>,
    pub passed: bool,
}

/// Refinement study of `X(t) -> X(T)` on grids with `n`, `2n-1` and `4n-3` nodes.
pub fn check_continuity_at_t(
    problem: &ProblemData,
    n: usize,
    kind: GridKind,
    control: &TimeVectorFn,
) -> Result<ContinuityReport> {
    require_lq_beta(problem.beta)?;
    let sizes = vec![n, 2 * n - 1, 4 * n - 3];
    let mut gaps = Vec::with_capacity(3);
    for &size in &sizes {
        let grid = Arc::new(Grid::build(size, problem.horizon, kind)?);
        let sp = SampledProblem::new(problem, grid.clone())?;
        let u = GridFunction::from_fn(size, problem.control_dim, |i| control(grid.t(i)));
        let x = solve_controlled(&sp, &u)?;
        let last = size - 1;
        let xt = x.at(last).into_owned();
        let gap = (last.saturating_sub(10)..last)
            .map(|i| (x.at(i) - &xt).norm())
            .fold(0.0, f64::max);
        gaps.push(gap);
    }
    let passed = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(ContinuityReport {
        sizes,
        gaps,
        passed,
    })
}
