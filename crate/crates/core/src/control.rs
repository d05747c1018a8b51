//! Interchangeable ways of computing the optimal control, selected by name.

use crate::adjoint::{control_from_mp, solve_adjoint};
use crate::blocks::GridFunction;
use crate::causal::{
    abstract_causal_control, build_hat_system, causal_trajectories, feedback_control,
    general_abstract_control, general_causal_control,
};
use crate::error::Result;
use crate::fredholm::{solver_registry, FredholmSolver, SolverSettings};
use crate::lq::solve_open_loop;
use crate::model::LqModel;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSettings {
    /// Name of the Fredholm solver used by the feedback characterizations.
    pub solver: String,
    pub solver_settings: SolverSettings,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            solver: "direct".into(),
            solver_settings: SolverSettings::default(),
        }
    }
}

pub trait ControlCharacterization: Send + Sync {
    fn name(&self) -> &'static str;

    /// Optimal control at every node. `reference` is the open-loop optimum; the causal
    /// characterizations replay its past to rebuild each value.
    fn control(&self, model: &LqModel, reference: &GridFunction) -> Result<GridFunction>;
}

pub fn control_registry() -> Registry<dyn ControlCharacterization, ControlSettings> {
    let mut reg: Registry<dyn ControlCharacterization, ControlSettings> =
        Registry::new("control characterization");
    reg.register("oracle", "Cholesky solve of the normal equations", |_| Ok(Box::new(Oracle)));
    reg.register("maximum-principle", "backward adjoint equation", |_| {
        Ok(Box::new(MaximumPrinciple))
    });
    reg.register("abstract-causal", "restricted cost-form inverses", |_| {
        Ok(Box::new(AbstractCausal))
    });
    reg.register("fredholm-feedback", "feedback kernel from the Fredholm equation", |s| {
        Ok(Box::new(FredholmFeedback {
            solver: solver_registry().create(&s.solver, &s.solver_settings)?,
            always_reduce: false,
        }))
    });
    reg.register("general-feedback", "feedback through the cross-term reduction", |s| {
        Ok(Box::new(FredholmFeedback {
            solver: solver_registry().create(&s.solver, &s.solver_settings)?,
            always_reduce: true,
        }))
    });
    reg
}

pub struct Oracle;

impl ControlCharacterization for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn control(&self, model: &LqModel, _reference: &GridFunction) -> Result<GridFunction> {
        solve_open_loop(&model.dlq)
    }
}

pub struct MaximumPrinciple;

impl ControlCharacterization for MaximumPrinciple {
    fn name(&self) -> &'static str {
        "maximum-principle"
    }

    fn control(&self, model: &LqModel, reference: &GridFunction) -> Result<GridFunction> {
        let x = model.dlq.state(reference);
        let adj = solve_adjoint(&model.problem, &model.cost, &x, reference)?;
        control_from_mp(&adj, &model.problem, &model.cost, &x)
    }
}

pub struct AbstractCausal;

impl ControlCharacterization for AbstractCausal {
    fn name(&self) -> &'static str {
        "abstract-causal"
    }

    fn control(&self, model: &LqModel, reference: &GridFunction) -> Result<GridFunction> {
        if model.cost.has_no_cross_terms() {
            let traj = causal_trajectories(&model.dlq, reference)?;
            abstract_causal_control(&model.dlq, &model.cost, &traj)
        } else {
            let hat = build_hat_system(&model.problem, &model.cost)?;
            general_abstract_control(&hat, &model.dlq, reference)
        }
    }
}

pub struct FredholmFeedback {
    solver: Box<dyn FredholmSolver>,
    always_reduce: bool,
}

impl ControlCharacterization for FredholmFeedback {
    fn name(&self) -> &'static str {
        if self.always_reduce {
            "general-feedback"
        } else {
            "fredholm-feedback"
        }
    }

    fn control(&self, model: &LqModel, reference: &GridFunction) -> Result<GridFunction> {
        if !self.always_reduce && model.cost.has_no_cross_terms() {
            let traj = causal_trajectories(&model.dlq, reference)?;
            feedback_control(model, &traj, self.solver.as_ref())
        } else {
            let hat = build_hat_system(&model.problem, &model.cost)?;
            general_causal_control(&hat, &model.dlq, reference, self.solver.as_ref())
        }
    }
}
