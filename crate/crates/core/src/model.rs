use std::sync::Arc;

use crate::error::Result;
use crate::grid_quad::Grid;
use crate::lq::{assemble_quadratic_form, assemble_theta, DiscreteLQ};
use crate::problem::{CostData, ProblemData, SampledCost, SampledProblem};
use crate::volterra::{decompose, discrete_resolvent, FactoredKernel, StateDecomposition};

/// Everything the control characterizations share for one problem on one grid.
#[derive(Debug, Clone)]
pub struct LqModel {
    pub problem: SampledProblem,
    pub cost: SampledCost,
    pub resolvent: FactoredKernel,
    pub dec: StateDecomposition,
    pub dlq: DiscreteLQ,
}

impl LqModel {
    pub fn build(problem: &ProblemData, cost: &CostData, grid: Arc<Grid>) -> Result<Self> {
        crate::error::require_lq_beta(problem.beta)?;
        let sp = SampledProblem::new(problem, grid.clone())?;
        let sc = SampledCost::new(cost, &grid, problem.state_dim, problem.control_dim)?;
        Self::from_sampled(sp, sc)
    }

    pub fn from_sampled(problem: SampledProblem, cost: SampledCost) -> Result<Self> {
        let resolvent = discrete_resolvent(&problem)?;
        Self::with_resolvent(problem, cost, resolvent)
    }

    /// Reuses a resolvent computed earlier on the same grid.
    pub fn with_resolvent(
        problem: SampledProblem,
        cost: SampledCost,
        resolvent: FactoredKernel,
    ) -> Result<Self> {
        crate::error::require_lq_beta(problem.beta())?;
        let dec = decompose(&problem, &resolvent)?;
        let ops = assemble_theta(&dec);
        let dlq = assemble_quadratic_form(&ops, &cost, &dec)?;
        Ok(Self {
            problem,
            cost,
            resolvent,
            dec,
            dlq,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.problem.grid
    }
}
