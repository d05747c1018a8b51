//! Discrete control-to-state operators, the quadratic form of the cost and the direct optimizer.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::blocks::{expand_weights, GridFunction};
use crate::error::{dimension, numerical, require_lq_beta, Result};
use crate::problem::{SampledCost, SampledProblem};
use crate::volterra::{solve_controlled, StateDecomposition};

/// `Theta` maps control samples to state samples; `Theta_T` maps them to `X(T)`.
#[derive(Debug, Clone)]
pub struct ThetaOperators {
    pub theta: DMatrix<f64>,
    pub theta_t: DMatrix<f64>,
}

pub fn assemble_theta(dec: &StateDecomposition) -> ThetaOperators {
    let theta = dec.kernel.dense_operator();
    let (n, _) = dec.kernel.shape();
    let len = dec.kernel.grid().len();
    let theta_t = theta.rows((len - 1) * n, n).into_owned();
    ThetaOperators { theta, theta_t }
}

/// Grid-sampled operators of the reduced cost `J(u) = <Λu,u> + 2<ℓ₁,u> + λ₀`.
#[derive(Debug, Clone)]
pub struct DiscreteLQ {
    pub state_dim: usize,
    pub control_dim: usize,
    pub theta: DMatrix<f64>,
    pub theta_t: DMatrix<f64>,
    /// Symmetric form `W Λ`, where `W` holds the trapezoid weights per control component.
    pub gram: DMatrix<f64>,
    /// `ℓ₁` as node samples.
    pub ell1: GridFunction,
    pub lambda0: f64,
    /// Trapezoid weights, one per node.
    pub norm_weights: Vec<f64>,
    pub delta: f64,
    pub psi: GridFunction,
    pub psi_t: DVector<f64>,
}

impl DiscreteLQ {
    pub fn nodes(&self) -> usize {
        self.norm_weights.len()
    }

    pub fn control_weights(&self) -> DVector<f64> {
        expand_weights(&self.norm_weights, self.control_dim)
    }

    pub fn state_weights(&self) -> DVector<f64> {
        expand_weights(&self.norm_weights, self.state_dim)
    }

    /// `Λ` as an operator on node samples.
    pub fn lambda_operator(&self) -> DMatrix<f64> {
        let w = self.control_weights();
        let mut out = self.gram.clone();
        for (r, wr) in w.iter().enumerate() {
            out.row_mut(r).scale_mut(1.0 / wr);
        }
        out
    }

    /// `Θ* X` in the trapezoid inner product.
    pub fn theta_adjoint(&self, x: &GridFunction) -> GridFunction {
        let wx = self.state_weights();
        let wu = self.control_weights();
        let v = self.theta.tr_mul(&x.flat().component_mul(&wx)).component_div(&wu);
        GridFunction::from_flat(self.control_dim, v).expect("adjoint shape")
    }

    /// `Θ_T* x` in the trapezoid inner product.
    pub fn theta_t_adjoint(&self, x: &DVector<f64>) -> GridFunction {
        let wu = self.control_weights();
        let v = self.theta_t.tr_mul(x).component_div(&wu);
        GridFunction::from_flat(self.control_dim, v).expect("adjoint shape")
    }

    pub fn apply_theta(&self, u: &GridFunction) -> GridFunction {
        GridFunction::from_flat(self.state_dim, &self.theta * u.flat()).expect("theta shape")
    }

    pub fn apply_theta_t(&self, u: &GridFunction) -> DVector<f64> {
        &self.theta_t * u.flat()
    }

    /// State `psi + Θu`.
    pub fn state(&self, u: &GridFunction) -> GridFunction {
        self.psi.add(&self.apply_theta(u))
    }

    pub fn cost(&self, u: &GridFunction) -> f64 {
        let wu = self.control_weights();
        let v = u.flat();
        v.dot(&(&self.gram * v)) + 2.0 * v.dot(&self.ell1.flat().component_mul(&wu)) + self.lambda0
    }

    /// Discrete L² norm of a control.
    pub fn control_norm(&self, u: &GridFunction) -> f64 {
        u.weighted_norm(&self.norm_weights)
    }
}

/// Assembles `Λ = Θ*QΘ + SΘ + Θ*S* + R + Θ_T*GΘ_T`, `ℓ₁` and `λ₀`.
pub fn assemble_quadratic_form(
    ops: &ThetaOperators,
    cost: &SampledCost,
    dec: &StateDecomposition,
) -> Result<DiscreteLQ> {
    let len = dec.psi.nodes();
    let n = dec.psi.dim();
    let m = ops.theta.ncols() / len;
    if ops.theta.nrows() != len * n || cost.q.len() != len || cost.r[0].nrows() != m {
        return Err(dimension("quadratic form inputs disagree"));
    }
    let w = {
        let mut w = vec![0.0; len];
        // trapezoid weights recovered from the kernel grid
        w.copy_from_slice(dec.kernel.grid().weights());
        w
    };
    let q_blk = block_diag(&cost.q, &w);
    let s_blk = block_diag(&cost.s, &w);
    let r_blk = block_diag(&cost.r, &w);
    let theta = &ops.theta;
    let theta_t = &ops.theta_t;
    let s_theta = &s_blk * theta;
    let mut gram = theta.tr_mul(&(&q_blk * theta))
        + &s_theta
        + s_theta.transpose()
        + r_blk
        + theta_t.tr_mul(&(&cost.g * theta_t));
    symmetrize(&mut gram);

    let psi = dec.psi.flat();
    let q_psi = &q_blk * psi;
    let q_lin_w = weighted(cost.q_lin.flat(), &w, n);
    let gpsi_t = &cost.g * &dec.psi_t;
    let rhs = theta.tr_mul(&q_psi)
        + &s_blk * psi
        + theta.tr_mul(&q_lin_w)
        + weighted(cost.rho.flat(), &w, m)
        + theta_t.tr_mul(&gpsi_t)
        + theta_t.tr_mul(&cost.g_lin);
    let wu = expand_weights(&w, m);
    let ell1 = GridFunction::from_flat(m, rhs.component_div(&wu))?;
    let lambda0 = psi.dot(&q_psi)
        + 2.0 * psi.dot(&q_lin_w)
        + dec.psi_t.dot(&gpsi_t)
        + 2.0 * cost.g_lin.dot(&dec.psi_t);
    let dlq = DiscreteLQ {
        state_dim: n,
        control_dim: m,
        theta: theta.clone(),
        theta_t: theta_t.clone(),
        gram,
        ell1,
        lambda0,
        norm_weights: w,
        delta: cost.delta,
        psi: dec.psi.clone(),
        psi_t: dec.psi_t.clone(),
    };
    Ok(dlq)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Block-diagonal multiplication operator with the node weight folded in.
pub(crate) fn block_diag(blocks: &[DMatrix<f64>], w: &[f64]) -> DMatrix<f64> {
    let (r, c) = blocks[0].shape();
    let len = blocks.len();
    let mut out = DMatrix::zeros(len * r, len * c);
    for (i, b) in blocks.iter().enumerate() {
        out.view_mut((i * r, i * c), (r, c)).copy_from(&(b * w[i]));
    }
    out
}

fn weighted(v: &DVector<f64>, w: &[f64], dim: usize) -> DVector<f64> {
    v.component_mul(&expand_weights(w, dim))
}

/// Running cost by trapezoid quadrature on `(X, u)` plus the terminal term.
pub fn cost_from_trajectory(cost: &SampledCost, w: &[f64], x: &GridFunction, u: &GridFunction) -> f64 {
    let len = w.len();
    let mut running = 0.0;
    for i in 0..len {
        let (xi, ui) = (x.at(i), u.at(i));
        let sx = &cost.s[i] * xi;
        running += w[i]
            * ((&cost.q[i] * xi).dot(&xi)
                + 2.0 * sx.dot(&ui)
                + (&cost.r[i] * ui).dot(&ui)
                + 2.0 * cost.q_lin.at(i).dot(&xi)
                + 2.0 * cost.rho.at(i).dot(&ui));
    }
    let xt = x.at(len - 1);
    running + (&cost.g * xt).dot(&xt) + 2.0 * cost.g_lin.dot(&xt)
}

/// Runs the state equation and evaluates the cost directly.
pub fn cost(sp: &SampledProblem, cost: &SampledCost, u: &GridFunction) -> Result<f64> {
    require_lq_beta(sp.beta())?;
    let x = solve_controlled(sp, u)?;
    Ok(cost_from_trajectory(cost, sp.grid.weights(), &x, u))
}

/// `ū = -Λ⁻¹ℓ₁` by a Cholesky solve of the symmetric form.
pub fn solve_open_loop(dlq: &DiscreteLQ) -> Result<GridFunction> {
    let rhs = -dlq.ell1.flat().component_mul(&dlq.control_weights());
    let chol = Cholesky::new(dlq.gram.clone()).ok_or_else(|| {
        numerical("Cholesky factorization of the cost form failed; the coercivity assumption is violated or the form is ill-conditioned")
    })?;
    warn_if_ill_conditioned(&chol);
    GridFunction::from_flat(dlq.control_dim, chol.solve(&rhs))
}

/// Same solve with the unknowns in reversed order.
pub fn solve_open_loop_reversed(dlq: &DiscreteLQ) -> Result<GridFunction> {
    let size = dlq.gram.nrows();
    let perm = |k: usize| size - 1 - k;
    let g = DMatrix::from_fn(size, size, |i, j| dlq.gram[(perm(i), perm(j))]);
    let rhs0 = -dlq.ell1.flat().component_mul(&dlq.control_weights());
    let rhs = DVector::from_fn(size, |i, _| rhs0[perm(i)]);
    let chol = Cholesky::new(g).ok_or_else(|| numerical("reversed Cholesky failed"))?;
    let y = chol.solve(&rhs);
    GridFunction::from_flat(dlq.control_dim, DVector::from_fn(size, |i, _| y[perm(i)]))
}

fn warn_if_ill_conditioned(chol: &Cholesky<f64, nalgebra::Dyn>) {
    let d = chol.l_dirty().diagonal();
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    let estimate = (hi / lo).powi(2);
    if estimate > 1e12 {
        log::warn!("cost form condition number estimate {estimate:.3e} exceeds 1e12");
    }
}

/// Smallest eigenvalue of `gram` relative to the diagonal weight matrix `w`.
pub fn min_generalized_eigenvalue(gram: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let s = w.map(|v| 1.0 / v.sqrt());
    let mut scaled = gram.clone();
    for i in 0..scaled.nrows() {
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= s[i] * s[j];
        }
    }
    symmetrize(&mut scaled);
    scaled.symmetric_eigenvalues().min()
}

/// Checks `Λ ≥ δ` in the weighted sense.
pub fn coercivity_margin(dlq: &DiscreteLQ) -> f64 {
    min_generalized_eigenvalue(&dlq.gram, &dlq.control_weights())
}

/// Largest absolute residual of the first-order optimality relation expressed through the
/// resolvent, over nodes before `T`.
pub fn verify_bar_u1(
    dlq: &DiscreteLQ,
    sp: &SampledProblem,
    cost: &SampledCost,
    resolvent: &crate::volterra::FactoredKernel,
    u_bar: &GridFunction,
) -> Result<f64> {
    let rhs = crate::adjoint::resolvent_control(dlq, sp, cost, resolvent, u_bar)?;
    let len = dlq.nodes();
    Ok((0..len - 1)
        .map(|i| (u_bar.at(i) - rhs.at(i)).amax())
        .fold(0.0, f64::max))
}

/// Central-difference directional derivative of `J` at `u` along `v`.
pub fn directional_derivative(dlq: &DiscreteLQ, u: &GridFunction, v: &GridFunction, eps: f64) -> f64 {
    let plus = dlq.cost(&u.add(&v.scaled(eps)));
    let minus = dlq.cost(&u.add(&v.scaled(-eps)));
    (plus - minus) / (2.0 * eps)
}
