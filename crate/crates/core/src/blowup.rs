//! A control with finite energy whose response at the horizon is finite only when the
//! singularity order exceeds one half.
//!
//! `u(s) = (1-s)^(-1/2) / ln(1-s)` on `[1/2, 1)` and zero elsewhere, on `[0, 1]`. Its squared
//! norm is `1/ln 2`; the response `X(1) = ∫ u(s)(1-s)^(beta-1) ds` diverges for `beta <= 1/2`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{argument, Result};
use crate::grid_quad::{Grid, GridKind, SingularWeights};
use crate::problem::{constant_kernel, constant_vector, ProblemData};

pub fn exact_energy() -> f64 {
    1.0 / std::f64::consts::LN_2
}

/// The control on `[0,1]`; zero at `s = 1` by the half-open convention.
pub fn singular_control(s: f64) -> f64 {
    if (0.5..1.0).contains(&s) {
        let d = 1.0 - s;
        1.0 / (d.sqrt() * d.ln())
    } else {
        0.0
    }
}

/// Scalar state equation with `A = 0`, `B = 1`, `phi = 0` on `[0,1]`.
pub fn problem(beta: f64) -> Result<ProblemData> {
    ProblemData::new(
        1,
        1,
        beta,
        1.0,
        constant_kernel(DMatrix::zeros(1, 1)),
        constant_kernel(DMatrix::identity(1, 1)),
        constant_vector(DVector::zeros(1)),
    )
}

fn unit_grid(grid: &Grid) -> Result<()> {
    if grid.horizon() != 1.0 {
        return Err(argument("the blow-up example lives on [0, 1]"));
    }
    Ok(())
}

/// Trapezoid value of `∫_0^1 |u|²` on the grid nodes.
pub fn energy_on_grid(grid: &Grid) -> Result<f64> {
    unit_grid(grid)?;
    Ok(grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .map(|(&s, w)| w * singular_control(s).powi(2))
        .sum())
}

/// Product-integration value of `X(1)`.
pub fn terminal_response(grid: &Grid, beta: f64) -> Result<f64> {
    unit_grid(grid)?;
    let weights = SingularWeights::new(grid, beta)?;
    Ok(weights
        .row(grid.last())
        .iter()
        .zip(grid.nodes())
        .map(|(w, &s)| w * singular_control(s))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyReport {
    pub sizes: Vec<usize>,
    pub strong: Vec<f64>,
    pub mild: Vec<f64>,
    /// `|X(1)|` on the finest grid over the coarsest, singularity order below one half.
    pub growth: f64,
    /// Largest relative change of `|X(1)|` from the coarsest grid, order above one half.
    pub mild_change: f64,
    pub passed: bool,
}

/// `X(1)` on a sequence of graded grids for a strong (`<= 1/2`) and a mild (`> 1/2`) order.
pub fn blowup_dichotomy(
    sizes: &[usize],
    exponent: f64,
    strong_beta: f64,
    mild_beta: f64,
    min_growth: f64,
    max_change: f64,
) -> Result<DichotomyReport> {
    if sizes.len() < 2 {
        return Err(argument("need at least two grid sizes"));
    }
    let mut strong = Vec::with_capacity(sizes.len());
    let mut mild = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let grid = Arc::new(Grid::build(n, 1.0, GridKind::Graded { exponent })?);
        strong.push(terminal_response(&grid, strong_beta)?);
        mild.push(terminal_response(&grid, mild_beta)?);
    }
    let growth = strong[strong.len() - 1].abs() / strong[0].abs();
    let mild_change = mild
        .iter()
        .map(|v| (v.abs() - mild[0].abs()).abs() / mild[0].abs())
        .fold(0.0, f64::max);
    Ok(DichotomyReport {
        sizes: sizes.to_vec(),
        strong,
        mild,
        growth,
        mild_change,
        passed: growth >= min_growth && mild_change <= max_change,
    })
}
