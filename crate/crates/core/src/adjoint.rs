//! Backward adjoint equation and the maximum-principle control formula.
//!
//! The backward quadrature is the transpose of the forward product-integration operator in the
//! trapezoid inner product, so the discrete optimality system closes exactly.

use nalgebra::{DMatrix, DVector};

use crate::blocks::GridFunction;
use crate::error::{dimension, numerical, require_lq_beta, Result};
use crate::lq::DiscreteLQ;
use crate::problem::{SampledCost, SampledProblem};
use crate::volterra::FactoredKernel;

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub y: GridFunction,
    /// Forcing of the backward equation, terminal coupling included.
    pub gamma: GridFunction,
    /// `Q X̄ + Sᵀ ū + q`.
    pub z: GridFunction,
    /// `G X̄(T) + g`.
    pub zeta: DVector<f64>,
}

/// Weight of node `k` when integrating `(s - t_i)^(beta-1)` over `[t_i, T]` against hats.
#[inline]
fn backward_weight(sp: &SampledProblem, i: usize, k: usize) -> f64 {
    let w = sp.grid.weights();
    w[k] * sp.weights.get(k, i) / w[i]
}

fn check_inputs(sp: &SampledProblem, x_bar: &GridFunction, u_bar: &GridFunction) -> Result<()> {
    require_lq_beta(sp.beta())?;
    if x_bar.nodes() != sp.nodes()
        || u_bar.nodes() != sp.nodes()
        || x_bar.dim() != sp.state_dim
        || u_bar.dim() != sp.control_dim
    {
        return Err(dimension("state and control must be sampled on the problem grid"));
    }
    Ok(())
}

fn running_terms(
    cost: &SampledCost,
    x_bar: &GridFunction,
    u_bar: &GridFunction,
) -> (GridFunction, DVector<f64>) {
    let len = x_bar.nodes();
    let z = GridFunction::from_fn(len, x_bar.dim(), |i| {
        &cost.q[i] * x_bar.at(i) + cost.s[i].transpose() * u_bar.at(i) + cost.q_lin.at(i)
    });
    let zeta = &cost.g * x_bar.at(len - 1) + &cost.g_lin;
    (z, zeta)
}

pub fn solve_adjoint(
    sp: &SampledProblem,
    cost: &SampledCost,
    x_bar: &GridFunction,
    u_bar: &GridFunction,
) -> Result<AdjointTrajectory> {
    check_inputs(sp, x_bar, u_bar)?;
    let n = sp.state_dim;
    let len = sp.nodes();
    let last = len - 1;
    let (z, zeta) = running_terms(cost, x_bar, u_bar);
    let w = sp.grid.weights();
    let gamma = GridFunction::from_fn(len, n, |i| {
        let c = sp.weights.get(last, i) / w[i];
        z.at(i) + sp.a.block(last, i).transpose() * &zeta * c
    });
    let mut y = GridFunction::zeros(len, n);
    for i in (0..len).rev() {
        let mut rhs = gamma.at(i).into_owned();
        for k in i + 1..len {
            let c = backward_weight(sp, i, k);
            if c != 0.0 {
                rhs += sp.a.block(k, i).transpose() * y.at(k) * c;
            }
        }
        let m = DMatrix::identity(n, n) - sp.a.block(i, i).transpose() * sp.weights.get(i, i);
        let yi = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| numerical(format!("backward step singular at node {i}")))?;
        y.set(i, &yi);
    }
    if !y.is_finite() {
        return Err(numerical("adjoint solve produced non-finite values"));
    }
    Ok(AdjointTrajectory { y, gamma, z, zeta })
}

/// `ū(t) = -R⁻¹[∫_t^T B(s,t)ᵀ Y(s)(s-t)^(β-1) ds + S X̄ + ρ + B(T,t)ᵀ ζ (T-t)^(β-1)]`,
/// the terminal factor integrated against the hat of each node.
fn control_formula(
    sp: &SampledProblem,
    cost: &SampledCost,
    x_bar: &GridFunction,
    y: &GridFunction,
    zeta: &DVector<f64>,
) -> Result<GridFunction> {
    let len = sp.nodes();
    let last = len - 1;
    let w = sp.grid.weights();
    let mut out = GridFunction::zeros(len, sp.control_dim);
    for i in 0..len {
        let mut acc = &cost.s[i] * x_bar.at(i) + cost.rho.at(i);
        for k in i..len {
            let c = backward_weight(sp, i, k);
            if c != 0.0 {
                acc += sp.b.block(k, i).transpose() * y.at(k) * c;
            }
        }
        acc += sp.b.block(last, i).transpose() * zeta * (sp.weights.get(last, i) / w[i]);
        let ui = cost.r[i]
            .clone()
            .lu()
            .solve(&acc)
            .ok_or_else(|| numerical(format!("R singular at node {i}")))?;
        out.set(i, &(-ui));
    }
    Ok(out)
}

pub fn control_from_mp(
    adjoint: &AdjointTrajectory,
    sp: &SampledProblem,
    cost: &SampledCost,
    x_bar: &GridFunction,
) -> Result<GridFunction> {
    control_formula(sp, cost, x_bar, &adjoint.y, &adjoint.zeta)
}

/// Adjoint trajectory assembled from the resolvent:
/// `Y = z + Φ(T,t)ᵀζ + ∫_t^T Φ(s,t)ᵀ z(s) ds`.
pub fn resolvent_adjoint(
    resolvent: &FactoredKernel,
    z: &GridFunction,
    zeta: &DVector<f64>,
) -> Result<GridFunction> {
    let grid = resolvent.grid();
    let len = grid.len();
    let last = len - 1;
    let w = grid.weights();
    let mut y = z.add(&resolvent.apply_adjoint(z)?);
    for i in 0..len {
        let term = resolvent.operator_block(last, i).transpose() * zeta / w[i];
        y.add_at(i, &term);
    }
    Ok(y)
}

/// Right side of the optimality relation written with the resolvent instead of the adjoint.
pub fn resolvent_control(
    dlq: &DiscreteLQ,
    sp: &SampledProblem,
    cost: &SampledCost,
    resolvent: &FactoredKernel,
    u_bar: &GridFunction,
) -> Result<GridFunction> {
    let x_bar = dlq.state(u_bar);
    check_inputs(sp, &x_bar, u_bar)?;
    let (z, zeta) = running_terms(cost, &x_bar, u_bar);
    let y = resolvent_adjoint(resolvent, &z, &zeta)?;
    control_formula(sp, cost, &x_bar, &y, &zeta)
}

/// Relative difference between the stepped adjoint and its resolvent form.
pub fn adjoint_consistency(adjoint: &AdjointTrajectory, resolvent: &FactoredKernel) -> Result<f64> {
    let y = resolvent_adjoint(resolvent, &adjoint.z, &adjoint.zeta)?;
    let w = resolvent.grid().weights();
    let scale = adjoint.y.weighted_norm(w).max(f64::MIN_POSITIVE);
    Ok(adjoint.y.sub(&y).weighted_norm(w) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq::solve_open_loop;
    use crate::test_support::{small_cross_model, small_model};

    #[test]
    fn maximum_principle_reproduces_optimum() {
        for model in [small_model(21), small_cross_model(21)] {
            let u = solve_open_loop(&model.dlq).unwrap();
            let x = model.dlq.state(&u);
            let adj = solve_adjoint(&model.problem, &model.cost, &x, &u).unwrap();
            let back = control_from_mp(&adj, &model.problem, &model.cost, &x).unwrap();
            assert!(u.sub(&back).max_abs() < 1e-12 * (1.0 + u.max_abs()));
            assert!(adjoint_consistency(&adj, &model.resolvent).unwrap() < 1e-12);
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let model = small_model(9);
        let u = GridFunction::zeros(8, 1);
        let x = GridFunction::zeros(9, 2);
        assert!(solve_adjoint(&model.problem, &model.cost, &x, &u).is_err());
    }
}
