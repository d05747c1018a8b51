use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::grid_quad::{Grid, GridKind};
use crate::model::LqModel;
use crate::problem::{CostData, ProblemData};

/// Two-state, one-control problem with smooth coefficients.
pub fn small_problem(beta: f64) -> ProblemData {
    ProblemData::new(
        2,
        1,
        beta,
        1.0,
        Arc::new(|t, s| DMatrix::from_row_slice(2, 2, &[0.3, 0.5 * t, -0.4 * s, 0.2])),
        Arc::new(|t, _| DMatrix::from_row_slice(2, 1, &[1.0, 0.5 + t])),
        Arc::new(|t| DVector::from_row_slice(&[1.0, t.cos()])),
    )
    .unwrap()
}

pub fn small_cost() -> CostData {
    CostData {
        q: Arc::new(|t| DMatrix::from_row_slice(2, 2, &[1.0 + t, 0.2, 0.2, 0.5])),
        r: Arc::new(|t| DMatrix::from_element(1, 1, 1.0 + 0.5 * t)),
        q_lin: Arc::new(|t| DVector::from_row_slice(&[0.1 * t, -0.2])),
        g: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
        g_lin: DVector::from_row_slice(&[0.3, 0.0]),
        ..CostData::control_only(2, 1)
    }
}

/// The small problem plus cross terms that keep the cost form above `delta = 0.5`.
pub fn small_cross_cost() -> CostData {
    let base = small_cost();
    let q0 = base.q.clone();
    CostData {
        // Sᵀ(R - δ)⁻¹S with S = [0.4, -0.3], R - δ >= 0.5
        q: Arc::new(move |t| {
            let s = DMatrix::from_row_slice(1, 2, &[0.4, -0.3]);
            q0(t) + s.transpose() * &s * 2.0
        }),
        s: Arc::new(|_| DMatrix::from_row_slice(1, 2, &[0.4, -0.3])),
        rho: Arc::new(|t| DVector::from_element(1, 0.2 - t)),
        delta: Some(0.5),
        ..base
    }
}

pub fn grid(n: usize) -> Arc<Grid> {
    Arc::new(Grid::build(n, 1.0, GridKind::Uniform).unwrap())
}

pub fn small_model(n: usize) -> LqModel {
    LqModel::build(&small_problem(0.75), &small_cost(), grid(n)).unwrap()
}

pub fn small_cross_model(n: usize) -> LqModel {
    LqModel::build(&small_problem(0.75), &small_cross_cost(), grid(n)).unwrap()
}
