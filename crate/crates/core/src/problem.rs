//! Coefficients of the controlled state equation and the quadratic cost.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::blocks::{GridFunction, LowerBlocks};
use crate::error::{argument, dimension, Error, Result};
use crate::grid_quad::{Grid, SingularWeights};

pub type KernelFn = Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>;
pub type TimeMatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type TimeVectorFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

pub fn constant_kernel(m: DMatrix<f64>) -> KernelFn {
    Arc::new(move |_, _| m.clone())
}

pub fn constant_matrix(m: DMatrix<f64>) -> TimeMatrixFn {
    Arc::new(move |_| m.clone())
}

pub fn constant_vector(v: DVector<f64>) -> TimeVectorFn {
    Arc::new(move |_| v.clone())
}

/// State equation `X(t) = phi(t) + ∫_0^t [A(t,s)X(s) + B(t,s)u(s)] (t-s)^(beta-1) ds`.
#[derive(Clone)]
pub struct ProblemData {
    pub state_dim: usize,
    pub control_dim: usize,
    pub beta: f64,
    pub horizon: f64,
    pub a: KernelFn,
    pub b: KernelFn,
    pub phi: TimeVectorFn,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("beta", &self.beta)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl ProblemData {
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        beta: f64,
        horizon: f64,
        a: KernelFn,
        b: KernelFn,
        phi: TimeVectorFn,
    ) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(argument("state and control dimensions must be positive"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(argument(format!("singularity order beta must lie in (0,1), got {beta}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(argument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            state_dim,
            control_dim,
            beta,
            horizon,
            a,
            b,
            phi,
        })
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(
            self.state_dim,
            self.control_dim,
            beta,
            self.horizon,
            self.a.clone(),
            self.b.clone(),
            self.phi.clone(),
        )
    }
}

/// Running weights `Q, S, R, q, rho` and terminal weights `G, g`.
#[derive(Clone)]
pub struct CostData {
    pub q: TimeMatrixFn,
    pub s: TimeMatrixFn,
    pub r: TimeMatrixFn,
    pub q_lin: TimeVectorFn,
    pub rho: TimeVectorFn,
    pub g: DMatrix<f64>,
    pub g_lin: DVector<f64>,
    /// Coercivity floor; defaults to the smallest eigenvalue of `R` over the nodes.
    pub delta: Option<f64>,
}

impl fmt::Debug for CostData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostData")
            .field("g", &self.g)
            .field("g_lin", &self.g_lin)
            .field("delta", &self.delta)
            .finish_non_exhaustive()
    }
}

impl CostData {
    /// Only `R = I` nonzero.
    pub fn control_only(state_dim: usize, control_dim: usize) -> Self {
        Self {
            q: constant_matrix(DMatrix::zeros(state_dim, state_dim)),
            s: constant_matrix(DMatrix::zeros(control_dim, state_dim)),
            r: constant_matrix(DMatrix::identity(control_dim, control_dim)),
            q_lin: constant_vector(DVector::zeros(state_dim)),
            rho: constant_vector(DVector::zeros(control_dim)),
            g: DMatrix::zeros(state_dim, state_dim),
            g_lin: DVector::zeros(state_dim),
            delta: None,
        }
    }
}

/// Coefficients sampled on a grid, with the product weights of that grid.
#[derive(Debug, Clone)]
pub struct SampledProblem {
    pub grid: Arc<Grid>,
    pub weights: Arc<SingularWeights>,
    pub state_dim: usize,
    pub control_dim: usize,
    pub a: LowerBlocks,
    pub b: LowerBlocks,
    pub phi: GridFunction,
}

impl SampledProblem {
    pub fn new(problem: &ProblemData, grid: Arc<Grid>) -> Result<Self> {
        let weights = Arc::new(SingularWeights::new(&grid, problem.beta)?);
        Self::with_weights(problem, grid, weights)
    }

    pub fn with_weights(
        problem: &ProblemData,
        grid: Arc<Grid>,
        weights: Arc<SingularWeights>,
    ) -> Result<Self> {
        if (weights.beta() - problem.beta).abs() > 0.0 || weights.nodes() != grid.len() {
            return Err(argument("weights do not match the problem and grid"));
        }
        if (grid.horizon() - problem.horizon).abs() > 1e-12 * problem.horizon {
            return Err(argument(format!(
                "grid horizon {} differs from problem horizon {}",
                grid.horizon(),
                problem.horizon
            )));
        }
        let (n, m) = (problem.state_dim, problem.control_dim);
        let x = grid.nodes();
        let len = grid.len();
        let a = sample_kernel(&problem.a, x, n, n, "A")?;
        let b = sample_kernel(&problem.b, x, n, m, "B")?;
        let mut phi = GridFunction::zeros(len, n);
        for i in 0..len {
            let mut v = (problem.phi)(x[i]);
            if i == 0 && !v.iter().all(|c| c.is_finite()) {
                // integrable blow-up at the origin: borrow the first positive node
                v = (problem.phi)(x[1]);
            }
            if v.len() != n {
                return Err(dimension(format!("free term has length {}, expected {n}", v.len())));
            }
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Numerical(format!("free term not finite at t = {}", x[i])));
            }
            phi.set(i, &v);
        }
        Ok(Self {
            grid,
            weights,
            state_dim: n,
            control_dim: m,
            a,
            b,
            phi,
        })
    }

    pub fn beta(&self) -> f64 {
        self.weights.beta()
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }
}

fn sample_kernel(
    f: &KernelFn,
    x: &[f64],
    rows: usize,
    cols: usize,
    name: &str,
) -> Result<LowerBlocks> {
    let mut out = LowerBlocks::zeros(x.len(), rows, cols);
    for i in 0..x.len() {
        for j in 0..=i {
            let m = f(x[i], x[j]);
            if m.shape() != (rows, cols) {
                return Err(dimension(format!(
                    "{name} has shape {:?}, expected ({rows}, {cols})",
                    m.shape()
                )));
            }
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "{name} not finite at ({}, {})",
                    x[i], x[j]
                )));
            }
            out.set(i, j, &m);
        }
    }
    Ok(out)
}

/// Cost weights sampled at the nodes.
#[derive(Debug, Clone)]
pub struct SampledCost {
    pub q: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub q_lin: GridFunction,
    pub rho: GridFunction,
    pub g: DMatrix<f64>,
    pub g_lin: DVector<f64>,
    pub delta: f64,
}

const PSD_TOL: f64 = 1e-10;

impl SampledCost {
    /// Samples the weights and checks the standard coercivity assumption at every node.
    pub fn new(cost: &CostData, grid: &Grid, state_dim: usize, control_dim: usize) -> Result<Self> {
        let (n, m) = (state_dim, control_dim);
        let x = grid.nodes();
        let mut q = Vec::with_capacity(x.len());
        let mut s = Vec::with_capacity(x.len());
        let mut r = Vec::with_capacity(x.len());
        let mut q_lin = GridFunction::zeros(x.len(), n);
        let mut rho = GridFunction::zeros(x.len(), m);
        for (i, &t) in x.iter().enumerate() {
            let (qi, si, ri) = ((cost.q)(t), (cost.s)(t), (cost.r)(t));
            if qi.shape() != (n, n) || si.shape() != (m, n) || ri.shape() != (m, m) {
                return Err(dimension(format!("cost weight shapes at t = {t}")));
            }
            let (ql, rl) = ((cost.q_lin)(t), (cost.rho)(t));
            if ql.len() != n || rl.len() != m {
                return Err(dimension(format!("linear cost weight lengths at t = {t}")));
            }
            q.push(qi);
            s.push(si);
            r.push(ri);
            q_lin.set(i, &ql);
            rho.set(i, &rl);
        }
        if cost.g.shape() != (n, n) || cost.g_lin.len() != n {
            return Err(dimension("terminal weight shapes"));
        }
        let min_r = r
            .iter()
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        let delta = cost.delta.unwrap_or(min_r);
        let out = Self {
            q,
            s,
            r,
            q_lin,
            rho,
            g: cost.g.clone(),
            g_lin: cost.g_lin.clone(),
            delta,
        };
        out.check_coercivity(grid)?;
        Ok(out)
    }

    pub fn check_coercivity(&self, grid: &Grid) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Assumption(format!(
                "coercivity floor delta must be positive, got {}",
                self.delta
            )));
        }
        for (i, &t) in grid.nodes().iter().enumerate() {
            let ri = &self.r[i];
            let sym = (ri - ri.transpose()).amax();
            if sym > 1e-12 * (1.0 + ri.amax()) {
                return Err(Error::Assumption(format!("R is not symmetric at t = {t}")));
            }
            let lo = min_eigenvalue(ri);
            if lo < self.delta * (1.0 - 1e-12) {
                return Err(Error::Assumption(format!(
                    "R(t) >= delta I fails at t = {t}: smallest eigenvalue {lo} < delta {}",
                    self.delta
                )));
            }
            let rinv = ri
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Assumption(format!("R not invertible at t = {t}")))?;
            let schur = &self.q[i] - self.s[i].transpose() * rinv * &self.s[i];
            let sym_part = 0.5 * (&schur + schur.transpose());
            let lo = min_eigenvalue(&sym_part);
            if lo < -PSD_TOL * (1.0 + self.q[i].amax()) {
                return Err(Error::Assumption(format!(
                    "Q - S^T R^-1 S >= 0 fails at t = {t}: smallest eigenvalue {lo}"
                )));
            }
        }
        let lo = min_eigenvalue(&(0.5 * (&self.g + self.g.transpose())));
        if lo < -PSD_TOL * (1.0 + self.g.amax()) {
            return Err(Error::Assumption(format!(
                "terminal weight G >= 0 fails: smallest eigenvalue {lo}"
            )));
        }
        Ok(())
    }

    /// True when `S` and `rho` vanish identically on the grid.
    pub fn has_no_cross_terms(&self) -> bool {
        self.s.iter().all(|m| m.iter().all(|v| *v == 0.0))
            && self.rho.flat().iter().all(|v| *v == 0.0)
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigenvalues().min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_quad::GridKind;
    use crate::test_support::{small_cost, small_cross_cost, small_problem};

    #[test]
    fn rejects_bad_beta_and_dimensions() {
        let p = small_problem(0.75);
        assert!(p.with_beta(1.0).is_err());
        assert!(p.with_beta(0.0).is_err());
        assert!(ProblemData::new(0, 1, 0.5, 1.0, p.a.clone(), p.b.clone(), p.phi.clone()).is_err());
    }

    #[test]
    fn coercivity_floor_is_enforced() {
        let grid = Grid::build(5, 1.0, GridKind::Uniform).unwrap();
        let mut c = small_cost();
        c.delta = Some(1.2);
        assert!(matches!(SampledCost::new(&c, &grid, 2, 1), Err(Error::Assumption(_))));
        let ok = SampledCost::new(&small_cost(), &grid, 2, 1).unwrap();
        assert!((ok.delta - 1.0).abs() < 1e-12);
        assert!(ok.has_no_cross_terms());
        let cross = SampledCost::new(&small_cross_cost(), &grid, 2, 1).unwrap();
        assert!(!cross.has_no_cross_terms());
    }

    #[test]
    fn wrong_weight_shape_is_a_dimension_error() {
        let grid = Grid::build(5, 1.0, GridKind::Uniform).unwrap();
        let c = small_cost();
        assert!(matches!(SampledCost::new(&c, &grid, 3, 1), Err(Error::Dimension(_))));
    }
}
