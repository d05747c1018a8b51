mod common;

use common::*;
use nalgebra::DMatrix;
use vlq_core::adjoint::{adjoint_consistency, control_from_mp, solve_adjoint};
use vlq_core::lq::solve_open_loop;
use vlq_core::problem::constant_kernel;
use vlq_core::{CostData, Error, GridFunction, LqModel};

#[test]
fn control_only_cost_has_zero_adjoint_and_zero_control() {
    let f = random_problem(1, 2, 2, 0.75);
    let m = LqModel::build(&f.problem, &CostData::control_only(2, 2), uniform_grid(17)).unwrap();
    let mut r = rng(2);
    let x = random_function(&mut r, 17, 2);
    let u = random_function(&mut r, 17, 2);
    let adj = solve_adjoint(&m.problem, &m.cost, &x, &u).unwrap();
    assert_eq!(adj.y.max_abs(), 0.0);
    assert_eq!(control_from_mp(&adj, &m.problem, &m.cost, &x).unwrap().max_abs(), 0.0);
}

#[test]
fn without_state_coupling_adjoint_is_its_forcing() {
    let mut f = random_problem(3, 2, 1, 0.7);
    f.problem.a = constant_kernel(DMatrix::zeros(2, 2));
    let m = LqModel::build(&f.problem, &f.cost, uniform_grid(17)).unwrap();
    let u = solve_open_loop(&m.dlq).unwrap();
    let x = m.dlq.state(&u);
    let adj = solve_adjoint(&m.problem, &m.cost, &x, &u).unwrap();
    assert!(adj.y.sub(&adj.gamma).max_abs() < 1e-15);
}

#[test]
fn zero_input_kernel_leaves_no_control() {
    let mut f = random_problem(4, 2, 2, 0.75);
    f.problem.b = constant_kernel(DMatrix::zeros(2, 2));
    let m = LqModel::build(&f.problem, &f.cost, uniform_grid(17)).unwrap();
    let mut r = rng(5);
    let x = random_function(&mut r, 17, 2);
    let u = random_function(&mut r, 17, 2);
    let adj = solve_adjoint(&m.problem, &m.cost, &x, &u).unwrap();
    assert!(adj.y.max_abs() > 0.0);
    assert_eq!(control_from_mp(&adj, &m.problem, &m.cost, &x).unwrap().max_abs(), 0.0);
}

#[test]
fn stepped_adjoint_matches_resolvent_form() {
    for seed in [6, 7, 8] {
        let f = random_problem(seed, 2, 2, 0.75);
        let m = LqModel::build(&f.problem, &f.cost, uniform_grid(33)).unwrap();
        let u = solve_open_loop(&m.dlq).unwrap();
        let x = m.dlq.state(&u);
        let adj = solve_adjoint(&m.problem, &m.cost, &x, &u).unwrap();
        let gap = adjoint_consistency(&adj, &m.resolvent).unwrap();
        assert!(gap <= 1e-6, "{gap:e}");
    }
}

#[test]
fn maximum_principle_matches_direct_solve_under_refinement() {
    let f = random_problem(9, 2, 2, 0.75);
    for n in [17, 33, 65] {
        let m = LqModel::build(&f.problem, &f.cost, uniform_grid(n)).unwrap();
        let u = solve_open_loop(&m.dlq).unwrap();
        let x = m.dlq.state(&u);
        let adj = solve_adjoint(&m.problem, &m.cost, &x, &u).unwrap();
        let mp = control_from_mp(&adj, &m.problem, &m.cost, &x).unwrap();
        let d = mp.sub(&u).weighted_norm(&m.dlq.norm_weights);
        assert!(d <= 1e-5 * (1.0 + m.dlq.control_norm(&u)), "n {n}: {d:e}");
    }
}

#[test]
fn cross_terms_enter_the_control_formula() {
    let f = cross_term_problem(10, 2, 2, 0.75);
    let m = LqModel::build(&f.problem, &f.cost, uniform_grid(33)).unwrap();
    let u = solve_open_loop(&m.dlq).unwrap();
    let x = m.dlq.state(&u);
    let adj = solve_adjoint(&m.problem, &m.cost, &x, &u).unwrap();
    let mp = control_from_mp(&adj, &m.problem, &m.cost, &x).unwrap();
    assert!(rel_dist(&u, &mp, &m.dlq.norm_weights) <= 1e-10);
}

#[test]
fn adjoint_needs_order_above_one_half() {
    let f = random_problem(11, 2, 1, 0.5);
    let (sp, sc) = sample(&f, uniform_grid(9));
    let x = GridFunction::zeros(9, 2);
    let u = GridFunction::zeros(9, 1);
    assert!(matches!(solve_adjoint(&sp, &sc, &x, &u), Err(Error::Precondition(_))));
}
