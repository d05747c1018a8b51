//! Fredholm equations for the feedback kernel and their solvers.
//!
//! For a cut node `σ` the kernel solves `M(t,s) = f(t,s) + ∫_σ^T K(t,τ) M(τ,s) dτ` with
//! `K(t,ξ) = -R(t)⁻¹ [∫_{t∨ξ}^T Ψ(τ,t)ᵀ Q(τ) Ψ(τ,ξ) dτ + Ψ(T,t)ᵀ G Ψ(T,ξ)]` and `f = K`.
//! Kernels are stored as dense block matrices, block `(i,j)` holding `M(t_i, s_j)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::blocks::{expand_weights, GridFunction};
use crate::error::{argument, dimension, numerical, Error, Result};
use crate::grid_quad::Grid;
use crate::lq::block_diag;
use crate::model::LqModel;
use crate::registry::Registry;
use crate::volterra::solve_controlled;

#[derive(Debug, Clone)]
pub struct FredholmSystem {
    pub grid: Arc<Grid>,
    pub beta: f64,
    pub dim: usize,
    pub sigma: usize,
    pub kernel: Arc<DMatrix<f64>>,
    pub forcing: Arc<DMatrix<f64>>,
}

impl FredholmSystem {
    pub fn new(
        grid: Arc<Grid>,
        beta: f64,
        dim: usize,
        sigma: usize,
        kernel: Arc<DMatrix<f64>>,
        forcing: Arc<DMatrix<f64>>,
    ) -> Result<Self> {
        let size = grid.len() * dim;
        if kernel.shape() != (size, size) || forcing.nrows() != size {
            return Err(dimension(format!(
                "kernel must be {size}x{size} and forcing must have {size} rows"
            )));
        }
        if sigma >= grid.len() {
            return Err(argument(format!("sigma index {sigma} out of range 0..{}", grid.len())));
        }
        Ok(Self {
            grid,
            beta,
            dim,
            sigma,
            kernel,
            forcing,
        })
    }

    /// Kernel from the assembled cost form: `K_ij = -R_i⁻¹ (H_ij - δ_ij W_i R_i) / (W_i W_j)`.
    pub fn assemble(model: &LqModel, sigma: usize) -> Result<Self> {
        let cost = &model.cost;
        if !cost.has_no_cross_terms() {
            return Err(Error::Precondition(
                "the feedback equation needs S = 0 and rho = 0; use the reduced system".into(),
            ));
        }
        let dlq = &model.dlq;
        let len = dlq.nodes();
        let m = dlq.control_dim;
        let w = &dlq.norm_weights;
        let mut l = dlq.gram.clone() - block_diag(&cost.r, w);
        for i in 0..len {
            let ri = cost.r[i]
                .clone()
                .try_inverse()
                .ok_or_else(|| numerical(format!("R singular at node {i}")))?;
            let rows = l.rows(i * m, m).into_owned();
            l.rows_mut(i * m, m).copy_from(&(-ri * rows / w[i]));
        }
        for j in 0..len {
            l.columns_mut(j * m, m).scale_mut(1.0 / w[j]);
        }
        let kernel = Arc::new(l);
        Self::new(
            model.grid().clone(),
            model.problem.beta(),
            m,
            sigma,
            kernel.clone(),
            kernel,
        )
    }

    /// Same kernel and forcing with another cut node.
    pub fn at_sigma(&self, sigma: usize) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.beta,
            self.dim,
            sigma,
            self.kernel.clone(),
            self.forcing.clone(),
        )
    }

    pub fn size(&self) -> usize {
        self.grid.len() * self.dim
    }

    /// Trapezoid weights with nodes before `σ` zeroed.
    pub fn cut_weights(&self) -> DVector<f64> {
        let mut w = expand_weights(self.grid.weights(), self.dim);
        w.rows_mut(0, self.sigma * self.dim).fill(0.0);
        w
    }

    /// `∫_σ^T K(t,τ) Y(τ,·) dτ`.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.cut_weights();
        let mut scaled = y.clone();
        for (r, wr) in w.iter().enumerate() {
            scaled.row_mut(r).scale_mut(*wr);
        }
        &*self.kernel * scaled
    }

    /// Relative residual of `M = f + K M`.
    pub fn residual(&self, m: &DMatrix<f64>) -> f64 {
        let r = m - &*self.forcing - self.apply(m);
        let w = expand_weights(self.grid.weights(), self.dim);
        kernel_norm(&r, &w) / kernel_norm(m, &w).max(f64::MIN_POSITIVE)
    }
}

/// `(Σ_rc w_r w_c M_rc²)^½`, the discrete L² norm over `[0,T]²`.
pub fn kernel_norm(m: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            acc += w[r] * w[c] * m[(r, c)] * m[(r, c)];
        }
    }
    acc.sqrt()
}

/// Solved kernel for one cut node.
#[derive(Debug, Clone)]
pub struct FeedbackKernel {
    pub sigma: usize,
    pub method: String,
    pub beta: f64,
    pub dim: usize,
    pub grid: Arc<Grid>,
    pub m: DMatrix<f64>,
    pub residual: f64,
    /// Per-iteration record; errors against a reference when one was supplied, increments
    /// otherwise.
    pub history: Vec<f64>,
}

impl FeedbackKernel {
    fn from_solution(sys: &FredholmSystem, method: &str, m: DMatrix<f64>, history: Vec<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(numerical(format!("{method} solve produced non-finite values")));
        }
        Ok(Self {
            sigma: sys.sigma,
            method: method.to_string(),
            beta: sys.beta,
            dim: sys.dim,
            grid: sys.grid.clone(),
            residual: sys.residual(&m),
            m,
            history,
        })
    }

    pub fn block(&self, i: usize, j: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.m.view((i * self.dim, j * self.dim), (self.dim, self.dim))
    }

    /// Relative discrete L² distance to `other` over `[0,T] x [σ,T]`.
    pub fn distance(&self, other: &FeedbackKernel) -> Result<f64> {
        if self.m.shape() != other.m.shape() {
            return Err(dimension("kernels live on different grids"));
        }
        let w = expand_weights(self.grid.weights(), self.dim);
        let mut cut = w.clone();
        cut.rows_mut(0, self.sigma * self.dim).fill(0.0);
        let d = &self.m - &other.m;
        let num = weighted_norm_cols(&d, &w, &cut);
        let den = weighted_norm_cols(&other.m, &w, &cut).max(f64::MIN_POSITIVE);
        Ok(num / den)
    }
}

fn weighted_norm_cols(m: &DMatrix<f64>, rows: &DVector<f64>, cols: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for c in 0..m.ncols() {
        if cols[c] == 0.0 {
            continue;
        }
        for r in 0..m.nrows() {
            acc += rows[r] * cols[c] * m[(r, c)] * m[(r, c)];
        }
    }
    acc.sqrt()
}

/// Piecewise-linear reconstruction in `s` of one row of kernel samples.
pub fn reconstruct_in_s(nodes: &[f64], values: &[DMatrix<f64>], s: f64) -> Result<DMatrix<f64>> {
    if nodes.len() != values.len() || nodes.is_empty() {
        return Err(dimension("need one kernel sample per node"));
    }
    let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
    if !(first..=last).contains(&s) {
        return Err(argument(format!("s = {s} outside [{first}, {last}]")));
    }
    let k = nodes.partition_point(|&x| x <= s).clamp(1, nodes.len().max(2) - 1);
    if nodes.len() == 1 {
        return Ok(values[0].clone());
    }
    let (a, b) = (nodes[k - 1], nodes[k]);
    let th = (s - a) / (b - a);
    Ok(&values[k - 1] * (1.0 - th) + &values[k] * th)
}

pub trait FredholmSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, sys: &FredholmSystem) -> Result<FeedbackKernel>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverSettings {
    pub subspace_dim: usize,
    pub iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            subspace_dim: 16,
            iterations: 3,
        }
    }
}

pub fn solver_registry() -> Registry<dyn FredholmSolver, SolverSettings> {
    let mut reg: Registry<dyn FredholmSolver, SolverSettings> = Registry::new("fredholm solver");
    reg.register("direct", "dense solve on the cut nodes", |_| Ok(Box::new(DirectSolver)));
    reg.register("galerkin", "projection onto coarse hat functions", |s| {
        Ok(Box::new(GalerkinSolver {
            subspace_dim: s.subspace_dim,
        }))
    });
    reg.register("iterated-galerkin", "one Picard sweep after the projection", |s| {
        Ok(Box::new(IteratedGalerkinSolver {
            subspace_dim: s.subspace_dim,
        }))
    });
    reg.register("superconvergent", "iterated projection with defect correction", |s| {
        Ok(Box::new(SuperconvergentSolver {
            subspace_dim: s.subspace_dim,
            iterations: s.iterations,
        }))
    });
    reg
}

#[derive(Debug, Clone, Copy)]
pub struct DirectSolver;

impl FredholmSolver for DirectSolver {
    fn name(&self) -> &'static str {
        "direct"
    }

    /// Solves on the nodes `>= σ` first, then fills the earlier rows by quadrature.
    fn solve(&self, sys: &FredholmSystem) -> Result<FeedbackKernel> {
        let m = solve_direct(sys)?;
        FeedbackKernel::from_solution(sys, self.name(), m, Vec::new())
    }
}

fn solve_direct(sys: &FredholmSystem) -> Result<DMatrix<f64>> {
    let size = sys.size();
    let start = sys.sigma * sys.dim;
    let tail = size - start;
    let w = sys.cut_weights();
    let mut a = -sys.kernel.view((start, start), (tail, tail)).into_owned();
    for c in 0..tail {
        a.column_mut(c).scale_mut(w[start + c]);
    }
    for d in 0..tail {
        a[(d, d)] += 1.0;
    }
    let f_tail = sys.forcing.rows(start, tail).into_owned();
    let m_tail = a
        .lu()
        .solve(&f_tail)
        .ok_or_else(|| numerical(format!("Fredholm operator singular at sigma index {}", sys.sigma)))?;
    let mut out = DMatrix::zeros(size, sys.forcing.ncols());
    out.rows_mut(start, tail).copy_from(&m_tail);
    if start > 0 {
        let mut scaled = m_tail;
        for r in 0..tail {
            scaled.row_mut(r).scale_mut(w[start + r]);
        }
        let head = sys.forcing.rows(0, start) + sys.kernel.view((0, start), (start, tail)) * scaled;
        out.rows_mut(0, start).copy_from(&head);
    }
    Ok(out)
}

/// Continuous piecewise-linear functions on a coarse subset of the grid nodes.
#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    pub coarse: Vec<usize>,
    /// Basis values at the fine nodes, one column per coarse hat and component.
    pub basis: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    weights: DVector<f64>,
}

impl GalerkinSpace {
    pub fn new(grid: &Grid, dim: usize, subspace_dim: usize) -> Result<Self> {
        let len = grid.len();
        if subspace_dim < 2 || subspace_dim > len {
            return Err(argument(format!(
                "subspace dimension must lie in 2..={len}, got {subspace_dim}"
            )));
        }
        let last = len - 1;
        let coarse: Vec<usize> = (0..subspace_dim)
            .map(|k| ((k * last) as f64 / (subspace_dim - 1) as f64).round() as usize)
            .collect();
        let t = grid.nodes();
        let mut basis = DMatrix::zeros(len * dim, subspace_dim * dim);
        for (k, &c) in coarse.iter().enumerate() {
            let lo = if k > 0 { coarse[k - 1] } else { c };
            let hi = if k + 1 < subspace_dim { coarse[k + 1] } else { c };
            for i in lo..=hi {
                let v = if i == c {
                    1.0
                } else if i < c {
                    (t[i] - t[lo]) / (t[c] - t[lo])
                } else {
                    (t[hi] - t[i]) / (t[hi] - t[c])
                };
                for p in 0..dim {
                    basis[(i * dim + p, k * dim + p)] = v;
                }
            }
        }
        let weights = expand_weights(grid.weights(), dim);
        let gram = weighted_tr_mul(&basis, &weights, &basis);
        Ok(Self {
            coarse,
            basis,
            gram,
            weights,
        })
    }

    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthogonal projection in the trapezoid inner product.
    pub fn project(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rhs = weighted_tr_mul(&self.basis, &self.weights, y);
        let c = self.solve_gram(&rhs)?;
        Ok(&self.basis * c)
    }

    pub fn projection_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.basis.nrows();
        self.project(&DMatrix::identity(n, n))
    }

    fn solve_gram(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.gram
            .clone()
            .cholesky()
            .map(|c| c.solve(rhs))
            .ok_or_else(|| numerical("Galerkin Gram matrix not positive definite"))
    }

    /// Factors `VᵀW(I - K)V` once for repeated projected solves.
    fn projected_operator(&self, sys: &FredholmSystem) -> Result<ProjectedOperator<'_>> {
        let kv = sys.apply(&self.basis);
        let a = &self.gram - weighted_tr_mul(&self.basis, &self.weights, &kv);
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(numerical(format!(
                "projected Fredholm operator singular at sigma index {}",
                sys.sigma
            )));
        }
        Ok(ProjectedOperator { space: self, lu })
    }
}

struct ProjectedOperator<'a> {
    space: &'a GalerkinSpace,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl ProjectedOperator<'_> {
    /// Solves `(I - PK) e = P g` inside the subspace.
    fn solve(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rhs = weighted_tr_mul(&self.space.basis, &self.space.weights, g);
        let c = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| numerical("projected solve failed"))?;
        Ok(&self.space.basis * c)
    }
}

fn weighted_tr_mul(a: &DMatrix<f64>, w: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut wb = b.clone();
    for (r, wr) in w.iter().enumerate() {
        wb.row_mut(r).scale_mut(*wr);
    }
    a.tr_mul(&wb)
}

#[derive(Debug, Clone, Copy)]
pub struct GalerkinSolver {
    pub subspace_dim: usize,
}

impl FredholmSolver for GalerkinSolver {
    fn name(&self) -> &'static str {
        "galerkin"
    }

    fn solve(&self, sys: &FredholmSystem) -> Result<FeedbackKernel> {
        let space = GalerkinSpace::new(&sys.grid, sys.dim, self.subspace_dim)?;
        let m = space.projected_operator(sys)?.solve(&sys.forcing)?;
        FeedbackKernel::from_solution(sys, self.name(), m, Vec::new())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IteratedGalerkinSolver {
    pub subspace_dim: usize,
}

impl FredholmSolver for IteratedGalerkinSolver {
    fn name(&self) -> &'static str {
        "iterated-galerkin"
    }

    fn solve(&self, sys: &FredholmSystem) -> Result<FeedbackKernel> {
        let space = GalerkinSpace::new(&sys.grid, sys.dim, self.subspace_dim)?;
        let mn = space.projected_operator(sys)?.solve(&sys.forcing)?;
        let m = &*sys.forcing + sys.apply(&mn);
        FeedbackKernel::from_solution(sys, self.name(), m, Vec::new())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuperconvergentSolver {
    pub subspace_dim: usize,
    pub iterations: usize,
}

impl SuperconvergentSolver {
    /// Runs the iteration; the history holds the distance to `reference` after the iterated
    /// projection and after every correction, or the relative increments without a reference.
    pub fn solve_tracked(
        &self,
        sys: &FredholmSystem,
        reference: Option<&DMatrix<f64>>,
    ) -> Result<FeedbackKernel> {
        let space = GalerkinSpace::new(&sys.grid, sys.dim, self.subspace_dim)?;
        let op = space.projected_operator(sys)?;
        let mn = op.solve(&sys.forcing)?;
        let start = &*sys.forcing + sys.apply(&mn);
        self.iterate(sys, &op, start, reference)
    }

    /// Runs the corrections from an arbitrary starting kernel instead of the iterated projection.
    pub fn refine(
        &self,
        sys: &FredholmSystem,
        start: DMatrix<f64>,
        reference: Option<&DMatrix<f64>>,
    ) -> Result<FeedbackKernel> {
        if start.shape() != sys.forcing.shape() {
            return Err(dimension("starting kernel does not match the system"));
        }
        let space = GalerkinSpace::new(&sys.grid, sys.dim, self.subspace_dim)?;
        let op = space.projected_operator(sys)?;
        self.iterate(sys, &op, start, reference)
    }

    fn iterate(
        &self,
        sys: &FredholmSystem,
        op: &ProjectedOperator<'_>,
        mut current: DMatrix<f64>,
        reference: Option<&DMatrix<f64>>,
    ) -> Result<FeedbackKernel> {
        let w = expand_weights(sys.grid.weights(), sys.dim);
        let f = &*sys.forcing;
        let mut history = Vec::with_capacity(self.iterations + 1);
        let dist = |m: &DMatrix<f64>, r: &DMatrix<f64>| {
            kernel_norm(&(m - r), &w) / kernel_norm(r, &w).max(f64::MIN_POSITIVE)
        };
        if let Some(r) = reference {
            history.push(dist(&current, r));
        }
        for _ in 0..self.iterations {
            let second = f + sys.apply(&current);
            let defect = &second - &current;
            let e = op.solve(&defect)?;
            let next = second + sys.apply(&e);
            match reference {
                Some(r) => history.push(dist(&next, r)),
                None => history.push(dist(&next, &current)),
            }
            current = next;
        }
        FeedbackKernel::from_solution(sys, "superconvergent", current, history)
    }
}

impl FredholmSolver for SuperconvergentSolver {
    fn name(&self) -> &'static str {
        "superconvergent"
    }

    fn solve(&self, sys: &FredholmSystem) -> Result<FeedbackKernel> {
        self.solve_tracked(sys, None)
    }
}

/// `M_σ = -R⁻¹[I - (Λ-R) Z_σ](Λ-R)` as a kernel, with `Z_σ` the inverse of `Λ` restricted to
/// nodes `>= σ`.
pub fn kernel_from_definition(model: &LqModel, sigma: usize) -> Result<DMatrix<f64>> {
    let dlq = &model.dlq;
    let len = dlq.nodes();
    let m = dlq.control_dim;
    let w = &dlq.norm_weights;
    if sigma >= len {
        return Err(argument(format!("sigma index {sigma} out of range 0..{len}")));
    }
    let mut l = dlq.lambda_operator();
    for i in 0..len {
        let mut blk = l.view_mut((i * m, i * m), (m, m));
        blk -= &model.cost.r[i];
    }
    let size = len * m;
    let start = sigma * m;
    let tail = size - start;
    let restricted = crate::causal::lambda_sigma(dlq, sigma)?;
    // Z L: zero above the cut, Λ_σ⁻¹ applied to the trailing rows of L
    let l_tail = l.rows(start, tail).into_owned();
    let mut zl = DMatrix::zeros(size, size);
    for c in 0..size {
        let col = restricted.solve(&l_tail.column(c).into_owned());
        zl.view_mut((start, c), (tail, 1)).copy_from(&col);
    }
    let inner = &l - &l * zl;
    let mut out = DMatrix::zeros(size, size);
    for i in 0..len {
        let ri = model.cost.r[i]
            .clone()
            .try_inverse()
            .ok_or_else(|| numerical(format!("R singular at node {i}")))?;
        out.rows_mut(i * m, m).copy_from(&(-ri * inner.rows(i * m, m)));
    }
    for j in 0..len {
        out.columns_mut(j * m, m).scale_mut(1.0 / w[j]);
    }
    Ok(out)
}

/// Largest relative deviation of sampled kernel blocks from the same entries computed from
/// impulse responses of the state equation and explicit quadrature over `[t∨ξ, T]`.
pub fn cross_check(model: &LqModel, sys: &FredholmSystem, entries: &[(usize, usize)]) -> Result<f64> {
    let sp = &model.problem;
    let cost = &model.cost;
    let len = sp.nodes();
    let (n, m) = (sp.state_dim, sp.control_dim);
    let w = sp.grid.weights();
    let mut free = sp.clone();
    free.phi = GridFunction::zeros(len, n);
    let mut responses: std::collections::HashMap<usize, Vec<GridFunction>> = Default::default();
    let mut response = |j: usize| -> Result<Vec<GridFunction>> {
        if let Some(r) = responses.get(&j) {
            return Ok(r.clone());
        }
        let mut cols = Vec::with_capacity(m);
        for c in 0..m {
            let mut u = GridFunction::zeros(len, m);
            let mut e = DVector::zeros(m);
            e[c] = 1.0 / w[j];
            u.set(j, &e);
            cols.push(solve_controlled(&free, &u)?);
        }
        responses.insert(j, cols.clone());
        Ok(cols)
    };
    let scale = sys
        .kernel
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for &(i, j) in entries {
        if i >= len || j >= len {
            return Err(argument(format!("entry ({i}, {j}) outside the grid")));
        }
        let pi = response(i)?;
        let pj = response(j)?;
        let mut inner = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for k in i.max(j)..len {
                    acc += w[k] * pi[a].at(k).dot(&(&cost.q[k] * pj[b].at(k)));
                }
                acc += pi[a].at(len - 1).dot(&(&cost.g * pj[b].at(len - 1)));
                inner[(a, b)] = acc;
            }
        }
        let ri = cost.r[i]
            .clone()
            .try_inverse()
            .ok_or_else(|| numerical(format!("R singular at node {i}")))?;
        let expected = -ri * inner;
        let got = sys.kernel.view((i * m, j * m), (m, m));
        worst = worst.max((got - expected).abs().max() / scale);
    }
    Ok(worst)
}
