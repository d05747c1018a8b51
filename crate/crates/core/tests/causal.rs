mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use vlq_core::causal::{
    abstract_causal_control, build_hat_system, causal_trajectories, feedback_control,
    general_causal_control, lambda_sigma, CausalProjection,
};
use vlq_core::fredholm::DirectSolver;
use vlq_core::lq::solve_open_loop;
use vlq_core::problem::{constant_kernel, constant_matrix, constant_vector};
use vlq_core::{CostData, GridFunction, LqModel};

fn model(seed: u64, n: usize) -> LqModel {
    let f = random_problem(seed, 2, 2, 0.75);
    LqModel::build(&f.problem, &f.cost, uniform_grid(n)).unwrap()
}

fn embed(tail: &DVector<f64>, size: usize) -> DVector<f64> {
    let mut out = DVector::zeros(size);
    out.rows_mut(size - tail.len(), tail.len()).copy_from(tail);
    out
}

#[test]
fn first_cut_keeps_the_whole_form() {
    let m = model(1, 13);
    assert_eq!(lambda_sigma(&m.dlq, 0).unwrap().block, m.dlq.gram);
    assert!(lambda_sigma(&m.dlq, 13).is_err());
}

#[test]
fn control_only_cut_is_bounded_by_the_running_weight() {
    let f = random_problem(2, 2, 2, 0.75);
    let cost = CostData {
        r: f.cost.r.clone(),
        ..CostData::control_only(2, 2)
    };
    let m = LqModel::build(&f.problem, &cost, uniform_grid(13)).unwrap();
    for sigma in [0, 5, 12] {
        let l = lambda_sigma(&m.dlq, sigma).unwrap();
        assert!(l.min_generalized_eigenvalue() >= m.cost.delta * (1.0 - 1e-12));
    }
}

#[test]
fn every_cut_stays_coercive() {
    for seed in [3, 4] {
        let m = model(seed, 25);
        for sigma in 0..25 {
            let l = lambda_sigma(&m.dlq, sigma).unwrap();
            assert!(l.min_generalized_eigenvalue() >= m.dlq.delta * (1.0 - 1e-6), "sigma {sigma}");
        }
    }
}

#[test]
fn restricted_operator_is_the_trailing_block_of_the_full_one() {
    let m = model(5, 17);
    let full = m.dlq.lambda_operator();
    let size = full.nrows();
    let mut r = rng(6);
    for sigma in [0, 4, 16] {
        let l = lambda_sigma(&m.dlq, sigma).unwrap();
        let tail = size - sigma * 2;
        let y = random_function(&mut r, tail / 2, 2).into_flat();
        let expected = (&full * embed(&y, size)).rows(sigma * 2, tail).into_owned();
        assert!((l.apply(&y) - &expected).amax() <= 1e-10 * expected.amax());
        let back = l.apply(&l.solve(&y));
        assert!((back - &y).amax() <= 1e-10 * y.amax());
    }
}

#[test]
fn restricted_inverse_identity_holds_as_matrices() {
    let m = model(7, 13);
    let lam = m.dlq.lambda_operator();
    let size = lam.nrows();
    for sigma in [0, 3, 9] {
        let l = lambda_sigma(&m.dlq, sigma).unwrap();
        let start = sigma * 2;
        // Z: Λ_σ⁻¹ on the trailing nodes, zero elsewhere
        let mut z = DMatrix::zeros(size, size);
        for c in start..size {
            let mut e = DVector::zeros(size - start);
            e[c - start] = 1.0;
            z.view_mut((start, c), (size - start, 1)).copy_from(&l.solve(&e));
        }
        let mut lam_minus_r = lam.clone();
        let mut r_inv = DMatrix::zeros(size, size);
        for i in 0..13 {
            let mut blk = lam_minus_r.view_mut((2 * i, 2 * i), (2, 2));
            blk -= &m.cost.r[i];
            r_inv
                .view_mut((2 * i, 2 * i), (2, 2))
                .copy_from(&m.cost.r[i].clone().try_inverse().unwrap());
        }
        let mut future = DMatrix::<f64>::identity(size, size);
        for d in 0..start {
            future[(d, d)] = 0.0;
        }
        let lhs = &future * &r_inv * (DMatrix::identity(size, size) - &lam_minus_r * &future * &z * &future);
        let rhs = &future * &z * &future;
        assert!((&lhs - &rhs).amax() <= 1e-10 * rhs.amax(), "sigma {sigma}");
    }
}

#[test]
fn projections_are_complementary_and_commute_with_multipliers() {
    let mut r = rng(8);
    let u = random_function(&mut r, 9, 2);
    let mult: Vec<DMatrix<f64>> = (0..9).map(|i| DMatrix::from_fn(2, 2, |p, q| (i + p * q) as f64 - 1.5)).collect();
    let apply = |g: &GridFunction| GridFunction::from_fn(9, 2, |i| &mult[i] * g.at(i));
    for sigma in 0..=9 {
        let p = CausalProjection::new(sigma, 9).unwrap();
        assert_eq!(p.past(&p.past(&u)), p.past(&u));
        assert_eq!(p.future(&p.future(&u)), p.future(&u));
        assert_eq!(p.past(&p.future(&u)).max_abs(), 0.0);
        assert_eq!(p.past(&apply(&u)), apply(&p.past(&u)));
        assert_eq!(p.future(&apply(&u)), apply(&p.future(&u)));
    }
}

#[test]
fn zero_control_trajectories_are_the_free_response() {
    let m = model(9, 13);
    let traj = causal_trajectories(&m.dlq, &GridFunction::zeros(13, 2)).unwrap();
    for sigma in 0..=13 {
        assert_eq!(traj.truncated(sigma), m.dlq.psi);
        assert_eq!(traj.auxiliary(sigma), m.dlq.psi_t);
    }
}

#[test]
fn trajectories_split_the_state() {
    let m = model(10, 21);
    let u = random_function(&mut rng(11), 21, 2);
    let traj = causal_trajectories(&m.dlq, &u).unwrap();
    let x = m.dlq.state(&u);
    let scale = x.max_abs();
    for sigma in 0..=21 {
        let p = CausalProjection::new(sigma, 21).unwrap();
        let xs = traj.truncated(sigma);
        let rest = m.dlq.apply_theta(&p.future(&u));
        assert!(x.sub(&xs.add(&rest)).max_abs() <= 1e-12 * scale);
        let xt = traj.auxiliary(sigma) + m.dlq.apply_theta_t(&p.future(&u));
        assert!((xt - x.at(20)).amax() <= 1e-12 * scale);
        for i in 0..sigma {
            assert!((xs.at(i) - x.at(i)).amax() <= 1e-12 * scale);
        }
        assert_eq!(xs.at(20).into_owned(), traj.auxiliary(sigma));
    }
    assert!(traj.truncated(21).sub(&x).max_abs() <= 1e-12 * scale);
}

#[test]
fn future_controls_do_not_leak_into_the_past() {
    let m = model(12, 17);
    let u = solve_open_loop(&m.dlq).unwrap();
    let base = causal_trajectories(&m.dlq, &u).unwrap();
    let ua = abstract_causal_control(&m.dlq, &m.cost, &base).unwrap();
    let uf = feedback_control(&m, &base, &DirectSolver).unwrap();
    let mut r = rng(13);
    for t in [0, 5, 16] {
        let noise = CausalProjection::new(t, 17).unwrap().future(&random_function(&mut r, 17, 2));
        let traj = causal_trajectories(&m.dlq, &u.add(&noise)).unwrap();
        assert_eq!(traj.truncated(t), base.truncated(t));
        assert_eq!(traj.auxiliary(t), base.auxiliary(t));
        let a = abstract_causal_control(&m.dlq, &m.cost, &traj).unwrap();
        let f = feedback_control(&m, &traj, &DirectSolver).unwrap();
        assert_eq!(a.at(t), ua.at(t));
        assert_eq!(f.at(t), uf.at(t));
    }
}

#[test]
fn homogeneous_problem_reconstructs_zero() {
    let mut f = random_problem(14, 2, 2, 0.75);
    f.problem.phi = constant_vector(DVector::zeros(2));
    f.cost.q_lin = constant_vector(DVector::zeros(2));
    f.cost.g_lin = DVector::zeros(2);
    let m = LqModel::build(&f.problem, &f.cost, uniform_grid(13)).unwrap();
    let traj = causal_trajectories(&m.dlq, &GridFunction::zeros(13, 2)).unwrap();
    assert_eq!(abstract_causal_control(&m.dlq, &m.cost, &traj).unwrap().max_abs(), 0.0);
}

#[test]
fn linear_weights_alone_are_reconstructed() {
    let mut f = random_problem(15, 2, 2, 0.75);
    f.cost.q = constant_matrix(DMatrix::zeros(2, 2));
    f.cost.g = DMatrix::zeros(2, 2);
    let m = LqModel::build(&f.problem, &f.cost, uniform_grid(17)).unwrap();
    let u = solve_open_loop(&m.dlq).unwrap();
    let traj = causal_trajectories(&m.dlq, &u).unwrap();
    let a = abstract_causal_control(&m.dlq, &m.cost, &traj).unwrap();
    assert!(rel_dist(&u, &a, &m.dlq.norm_weights) <= 1e-8);
}

#[test]
fn abstract_representation_reproduces_the_optimum() {
    for seed in [16, 17, 18] {
        let m = model(seed, 33);
        let u = solve_open_loop(&m.dlq).unwrap();
        let traj = causal_trajectories(&m.dlq, &u).unwrap();
        let a = abstract_causal_control(&m.dlq, &m.cost, &traj).unwrap();
        assert!(rel_dist(&u, &a, &m.dlq.norm_weights) <= 1e-8);
    }
}

#[test]
fn reduction_without_cross_terms_is_bitwise_identity() {
    let m = model(19, 13);
    let hat = build_hat_system(&m.problem, &m.cost).unwrap();
    assert_eq!(hat.offset, 0.0);
    assert_eq!(hat.model.problem.a, m.problem.a);
    assert_eq!(hat.model.problem.phi, m.problem.phi);
    assert_eq!(hat.model.cost.q, m.cost.q);
    assert_eq!(hat.model.cost.q_lin, m.cost.q_lin);
    assert_eq!(hat.model.dlq.gram, m.dlq.gram);
}

#[test]
fn reduction_without_input_keeps_state_coefficients() {
    let mut f = cross_term_problem(20, 2, 2, 0.75);
    f.problem.b = constant_kernel(DMatrix::zeros(2, 2));
    let m = LqModel::build(&f.problem, &f.cost, uniform_grid(13)).unwrap();
    let hat = build_hat_system(&m.problem, &m.cost).unwrap();
    assert_eq!(hat.model.problem.a, m.problem.a);
    assert_eq!(hat.model.problem.phi, m.problem.phi);
}

#[test]
fn reduced_problem_has_the_same_optimum() {
    for seed in [21, 22] {
        let f = cross_term_problem(seed, 2, 2, 0.75);
        let m = LqModel::build(&f.problem, &f.cost, uniform_grid(33)).unwrap();
        let hat = build_hat_system(&m.problem, &m.cost).unwrap();
        let u = solve_open_loop(&m.dlq).unwrap();
        let v = solve_open_loop(&hat.model.dlq).unwrap();
        let j = m.dlq.cost(&u);
        let jh = hat.model.dlq.cost(&v) + hat.offset;
        assert!((j - jh).abs() <= 1e-8 * j.abs().max(1.0), "{j} vs {jh}");
        let x = m.dlq.state(&u);
        assert!(hat.model.dlq.state(&v).sub(&x).max_abs() <= 1e-8 * x.max_abs());
        let back = hat.restore_control(&v, &x).unwrap();
        assert!(rel_dist(&u, &back, &m.dlq.norm_weights) <= 1e-6);
    }
}

#[test]
fn only_the_instantaneous_term_survives_without_reduced_weights() {
    let base = cross_term_problem(23, 2, 2, 0.75);
    let (s, r, rho) = (base.cost.s.clone(), base.cost.r.clone(), base.cost.rho.clone());
    let (s2, r2, rho2) = (s.clone(), r.clone(), rho.clone());
    let cost = CostData {
        // Q = SᵀR⁻¹S and q = SᵀR⁻¹ρ leave nothing after the reduction
        q: Arc::new(move |t| {
            let st = s2(t);
            st.transpose() * r2(t).try_inverse().unwrap() * st
        }),
        q_lin: Arc::new(move |t| s(t).transpose() * r(t).try_inverse().unwrap() * rho2(t)),
        g: DMatrix::zeros(2, 2),
        g_lin: DVector::zeros(2),
        delta: None,
        ..base.cost
    };
    let m = LqModel::build(&base.problem, &cost, uniform_grid(17)).unwrap();
    let u = solve_open_loop(&m.dlq).unwrap();
    let x = m.dlq.state(&u);
    let hat = build_hat_system(&m.problem, &m.cost).unwrap();
    let instantaneous = hat.restore_control(&GridFunction::zeros(17, 2), &x).unwrap();
    assert!(rel_dist(&u, &instantaneous, &m.dlq.norm_weights) <= 1e-10);
    let g = general_causal_control(&hat, &m.dlq, &u, &DirectSolver).unwrap();
    assert!(rel_dist(&u, &g, &m.dlq.norm_weights) <= 1e-10);
}

#[test]
fn general_feedback_reproduces_the_optimum() {
    for seed in [24, 25] {
        let f = cross_term_problem(seed, 2, 2, 0.75);
        let m = LqModel::build(&f.problem, &f.cost, uniform_grid(33)).unwrap();
        let u = solve_open_loop(&m.dlq).unwrap();
        let hat = build_hat_system(&m.problem, &m.cost).unwrap();
        let g = general_causal_control(&hat, &m.dlq, &u, &DirectSolver).unwrap();
        assert!(rel_dist(&u, &g, &m.dlq.norm_weights) <= 1e-6);
    }
}
