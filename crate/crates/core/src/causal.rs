//! Causal projections, truncated and auxiliary trajectories, the cross-term reduction and the
//! causal representations of the optimal control.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::blocks::{GridFunction, LowerBlocks};
use crate::error::{argument, dimension, numerical, Error, Result};
use crate::fredholm::{FeedbackKernel, FredholmSolver, FredholmSystem};
use crate::lq::{min_generalized_eigenvalue, DiscreteLQ};
use crate::model::LqModel;
use crate::problem::{SampledCost, SampledProblem};

/// Splits a control at node `sigma`: `past` keeps nodes `< sigma`, `future` keeps nodes `>= sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CausalProjection {
    pub sigma: usize,
}

impl CausalProjection {
    pub fn new(sigma: usize, nodes: usize) -> Result<Self> {
        if sigma > nodes {
            return Err(argument(format!("projection index {sigma} beyond {nodes} nodes")));
        }
        Ok(Self { sigma })
    }

    pub fn past(&self, u: &GridFunction) -> GridFunction {
        let mut out = u.clone();
        let d = u.dim();
        out.flat_mut().rows_mut(self.sigma * d, (u.nodes() - self.sigma) * d).fill(0.0);
        out
    }

    pub fn future(&self, u: &GridFunction) -> GridFunction {
        let mut out = u.clone();
        let d = u.dim();
        out.flat_mut().rows_mut(0, self.sigma * d).fill(0.0);
        out
    }
}

/// The cost form restricted to controls supported on nodes `>= sigma`.
#[derive(Debug, Clone)]
pub struct RestrictedOperator {
    pub sigma: usize,
    pub dim: usize,
    /// Trailing block of the symmetric form.
    pub block: DMatrix<f64>,
    /// Trapezoid weights per component on the trailing nodes.
    pub weights: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl RestrictedOperator {
    /// Solves `Λ_σ y = r` for `r` given on the trailing nodes.
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&r.component_mul(&self.weights))
    }

    /// `Λ_σ y` on the trailing nodes.
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        (&self.block * y).component_div(&self.weights)
    }

    pub fn min_generalized_eigenvalue(&self) -> f64 {
        min_generalized_eigenvalue(&self.block, &self.weights)
    }
}

pub fn lambda_sigma(dlq: &DiscreteLQ, sigma: usize) -> Result<RestrictedOperator> {
    let len = dlq.nodes();
    if sigma >= len {
        return Err(argument(format!("sigma index {sigma} out of range 0..{len}")));
    }
    let m = dlq.control_dim;
    let start = sigma * m;
    let size = (len - sigma) * m;
    let block = dlq.gram.view((start, start), (size, size)).into_owned();
    let weights = dlq.control_weights().rows(start, size).into_owned();
    let chol = Cholesky::new(block.clone())
        .ok_or_else(|| numerical(format!("restricted cost form not positive definite at node {sigma}")))?;
    Ok(RestrictedOperator {
        sigma,
        dim: m,
        block,
        weights,
        chol,
    })
}

/// Truncated trajectories `X_σ = ψ + Θ Π_σ u` for every `σ` and the auxiliary terminal
/// predictions `X^a(σ) = ψ(T) + Θ_T Π_σ u`.
///
/// Index `σ` runs over `0..=nodes`; `σ = nodes` keeps the whole control.
#[derive(Debug, Clone)]
pub struct CausalTrajectories {
    nodes: usize,
    dim: usize,
    table: Vec<f64>,
}

impl CausalTrajectories {
    pub fn truncated(&self, sigma: usize) -> GridFunction {
        let len = self.nodes * self.dim;
        let off = sigma * len;
        GridFunction::from_flat(self.dim, DVector::from_column_slice(&self.table[off..off + len]))
            .expect("trajectory shape")
    }

    pub fn auxiliary(&self, sigma: usize) -> DVector<f64> {
        let len = self.nodes * self.dim;
        let off = sigma * len + (self.nodes - 1) * self.dim;
        DVector::from_column_slice(&self.table[off..off + self.dim])
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

pub fn causal_trajectories(dlq: &DiscreteLQ, u: &GridFunction) -> Result<CausalTrajectories> {
    let len = dlq.nodes();
    let (n, m) = (dlq.state_dim, dlq.control_dim);
    if u.nodes() != len || u.dim() != m {
        return Err(dimension("control must be sampled on the model grid"));
    }
    let mut table = Vec::with_capacity((len + 1) * len * n);
    let mut current = dlq.psi.flat().clone();
    table.extend_from_slice(current.as_slice());
    for sigma in 0..len {
        let cols = dlq.theta.columns(sigma * m, m);
        current += cols * u.at(sigma);
        table.extend_from_slice(current.as_slice());
    }
    Ok(CausalTrajectories {
        nodes: len,
        dim: n,
        table,
    })
}

/// `Θ*QX_t + Θ_T*G X^a(t) + Θ*q + Θ_T*g` for one node `t`.
fn forcing(dlq: &DiscreteLQ, cost: &SampledCost, traj: &CausalTrajectories, k: usize) -> GridFunction {
    let xk = traj.truncated(k);
    let len = dlq.nodes();
    let qx = GridFunction::from_fn(len, dlq.state_dim, |i| &cost.q[i] * xk.at(i) + cost.q_lin.at(i));
    let term = &cost.g * traj.auxiliary(k) + &cost.g_lin;
    dlq.theta_adjoint(&qx).add(&dlq.theta_t_adjoint(&term))
}

fn require_no_cross_terms(cost: &SampledCost) -> Result<()> {
    if cost.has_no_cross_terms() {
        Ok(())
    } else {
        Err(Error::Precondition(
            "this representation needs S = 0 and rho = 0; use the reduced system".into(),
        ))
    }
}

fn solve_r(cost: &SampledCost, i: usize, v: &DVector<f64>) -> Result<DVector<f64>> {
    cost.r[i]
        .clone()
        .lu()
        .solve(v)
        .ok_or_else(|| numerical(format!("R singular at node {i}")))
}

/// `ū(t) = -R⁻¹[I - (Λ-R) Λ_t⁻¹ (I-Π_t)] (Θ*QX_t + Θ_T*GX^a(t) + Θ*q + Θ_T*g)(t)` at every node.
pub fn abstract_causal_control(
    dlq: &DiscreteLQ,
    cost: &SampledCost,
    traj: &CausalTrajectories,
) -> Result<GridFunction> {
    require_no_cross_terms(cost)?;
    let len = dlq.nodes();
    let m = dlq.control_dim;
    let w = &dlq.norm_weights;
    let mut out = GridFunction::zeros(len, m);
    for k in 0..len {
        let g = forcing(dlq, cost, traj, k);
        let restricted = lambda_sigma(dlq, k)?;
        let tail = g.flat().rows(k * m, (len - k) * m).into_owned();
        let y = restricted.solve(&tail);
        // component k of (Λ - R) y, with y supported on nodes >= k
        let hy = dlq.gram.view((k * m, k * m), (m, (len - k) * m)) * &y;
        let ly = hy / w[k] - &cost.r[k] * y.rows(0, m);
        let bracket = g.at(k) - ly;
        out.set(k, &(-solve_r(cost, k, &bracket)?));
    }
    Ok(out)
}

/// The problem after removing `S` and `ρ` by the substitution `u = v - R⁻¹(SX + ρ)`.
#[derive(Debug, Clone)]
pub struct HatSystem {
    pub model: LqModel,
    /// Cost offset: `J(u) = Ĵ(v) + offset`.
    pub offset: f64,
    pub original_s: Vec<DMatrix<f64>>,
    pub original_rho: GridFunction,
    pub r: Vec<DMatrix<f64>>,
}

pub fn build_hat_system(sp: &SampledProblem, cost: &SampledCost) -> Result<HatSystem> {
    let len = sp.nodes();
    let (n, m) = (sp.state_dim, sp.control_dim);
    let w = sp.grid.weights();
    let mut r_inv = Vec::with_capacity(len);
    for (i, ri) in cost.r.iter().enumerate() {
        r_inv.push(ri.clone().try_inverse().ok_or_else(|| {
            Error::Assumption(format!("R not invertible at t = {}", sp.grid.t(i)))
        })?);
    }
    let mut hat_problem = sp.clone();
    let mut hat_cost = cost.clone();
    let mut offset = 0.0;
    if !cost.has_no_cross_terms() {
        let rs: Vec<DMatrix<f64>> = (0..len).map(|j| &r_inv[j] * &cost.s[j]).collect();
        let rr: Vec<DVector<f64>> = (0..len).map(|j| &r_inv[j] * cost.rho.at(j)).collect();
        hat_problem.a = LowerBlocks::from_fn(len, n, n, |i, j| sp.a.block(i, j) - sp.b.block(i, j) * &rs[j]);
        let mut phi = sp.phi.clone();
        for i in 1..len {
            let mut acc = DVector::zeros(n);
            for (j, wj) in sp.weights.row(i).iter().enumerate() {
                acc += sp.b.block(i, j) * &rr[j] * *wj;
            }
            phi.add_at(i, &(-acc));
        }
        hat_problem.phi = phi;
        for i in 0..len {
            hat_cost.q[i] = &cost.q[i] - cost.s[i].transpose() * &rs[i];
            hat_cost.q[i] = 0.5 * (&hat_cost.q[i] + hat_cost.q[i].transpose());
            let ql = cost.q_lin.at(i) - cost.s[i].transpose() * &rr[i];
            hat_cost.q_lin.set(i, &ql);
            hat_cost.s[i] = DMatrix::zeros(m, n);
            offset -= w[i] * cost.rho.at(i).dot(&rr[i]);
        }
        hat_cost.rho = GridFunction::zeros(len, m);
    }
    let model = LqModel::from_sampled(hat_problem, hat_cost)?;
    Ok(HatSystem {
        model,
        offset,
        original_s: cost.s.clone(),
        original_rho: cost.rho.clone(),
        r: cost.r.clone(),
    })
}

impl HatSystem {
    /// `v = u + R⁻¹(SX + ρ)`.
    pub fn reduce_control(&self, u: &GridFunction, x: &GridFunction) -> Result<GridFunction> {
        let mut v = u.clone();
        for i in 0..u.nodes() {
            let shift = self.instantaneous(i, x)?;
            v.add_at(i, &(-shift));
        }
        Ok(v)
    }

    /// `u = v - R⁻¹(SX + ρ)`.
    pub fn restore_control(&self, v: &GridFunction, x: &GridFunction) -> Result<GridFunction> {
        let mut u = v.clone();
        for i in 0..v.nodes() {
            let shift = self.instantaneous(i, x)?;
            u.add_at(i, &shift);
        }
        Ok(u)
    }

    /// `-R⁻¹(S X + ρ)` at node `i`.
    fn instantaneous(&self, i: usize, x: &GridFunction) -> Result<DVector<f64>> {
        let v = &self.original_s[i] * x.at(i) + self.original_rho.at(i);
        let sol = self.r[i]
            .clone()
            .lu()
            .solve(&v)
            .ok_or_else(|| numerical(format!("R singular at node {i}")))?;
        Ok(-sol)
    }
}

/// `ū(t) = -R⁻¹ G_t(t) - ∫_t^T M_t(t,s) R⁻¹(s) G_t(s) ds` with `G_t` the causal forcing.
pub fn feedback_control(
    model: &LqModel,
    traj: &CausalTrajectories,
    solver: &dyn FredholmSolver,
) -> Result<GridFunction> {
    let dlq = &model.dlq;
    let cost = &model.cost;
    require_no_cross_terms(cost)?;
    let len = dlq.nodes();
    let m = dlq.control_dim;
    let w = &dlq.norm_weights;
    let base = FredholmSystem::assemble(model, 0)?;
    let mut out = GridFunction::zeros(len, m);
    for k in 0..len {
        let g = forcing(dlq, cost, traj, k);
        let sys = base.at_sigma(k)?;
        let kernel = solver.solve(&sys)?;
        out.set(k, &feedback_value(&kernel, cost, &g, w, k)?);
    }
    Ok(out)
}

fn feedback_value(
    kernel: &FeedbackKernel,
    cost: &SampledCost,
    g: &GridFunction,
    w: &[f64],
    k: usize,
) -> Result<DVector<f64>> {
    let len = w.len();
    let mut acc = -solve_r(cost, k, &g.at(k).into_owned())?;
    for j in k..len {
        let rg = solve_r(cost, j, &g.at(j).into_owned())?;
        acc -= kernel.block(k, j) * rg * w[j];
    }
    Ok(acc)
}

/// Causal feedback for problems with cross terms, through the reduced system.
///
/// `u_bar` is the open-loop optimum of the original problem; its state feeds the instantaneous
/// term and, after the substitution, the reduced trajectories.
pub fn general_causal_control(
    hat: &HatSystem,
    original: &DiscreteLQ,
    u_bar: &GridFunction,
    solver: &dyn FredholmSolver,
) -> Result<GridFunction> {
    let x_bar = original.state(u_bar);
    let v_bar = hat.reduce_control(u_bar, &x_bar)?;
    let traj = causal_trajectories(&hat.model.dlq, &v_bar)?;
    let v = feedback_control(&hat.model, &traj, solver)?;
    hat.restore_control(&v, &x_bar)
}

/// Abstract representation through the reduced system.
pub fn general_abstract_control(
    hat: &HatSystem,
    original: &DiscreteLQ,
    u_bar: &GridFunction,
) -> Result<GridFunction> {
    let x_bar = original.state(u_bar);
    let v_bar = hat.reduce_control(u_bar, &x_bar)?;
    let traj = causal_trajectories(&hat.model.dlq, &v_bar)?;
    let v = abstract_causal_control(&hat.model.dlq, &hat.model.cost, &traj)?;
    hat.restore_control(&v, &x_bar)
}
