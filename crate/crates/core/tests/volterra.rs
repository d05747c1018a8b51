mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use vlq_core::blowup;
use vlq_core::problem::{constant_kernel, constant_vector, TimeVectorFn};
use vlq_core::volterra::{
    check_continuity_at_t, check_resolvent_bound, decompose, discrete_resolvent, resolvent,
    resolvent_with, solve_controlled, solve_state, sup_norm, verify_variation_of_constants,
    ResolventOptions,
};
use vlq_core::{Error, Grid, GridFunction, GridKind, ProblemData, SampledProblem};

fn worst_series_error(n: usize, opts: ResolventOptions) -> f64 {
    let (a, beta) = (1.0, 0.75);
    let p = scalar_constant_problem(a, 1.0, beta);
    let g = uniform_grid(n);
    let r = resolvent_with(&p, g.clone(), opts).unwrap();
    let h = 1.0 / (n - 1) as f64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            let off = g.t(i) - g.t(j);
            if off < 4.0 * h - 1e-12 {
                continue;
            }
            let exact = series_resolvent(a, beta, off, 40);
            worst = worst.max(((r.kernel.value(i, j)[(0, 0)] - exact) / exact).abs());
        }
    }
    worst
}

#[test]
fn constant_kernel_matches_series_closely_with_fine_columns() {
    let opts = ResolventOptions {
        subdivisions: 8,
        ..Default::default()
    };
    let err = worst_series_error(65, opts);
    assert!(err <= 1e-8, "{err:e}");
}

#[test]
fn constant_kernel_matches_series_at_default_settings() {
    let err = worst_series_error(129, ResolventOptions::default());
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn dual_residual_tracks_forward_residual() {
    for seed in [1, 2] {
        let f = random_problem(seed, 2, 2, 0.75);
        let r = resolvent(&f.problem, uniform_grid(33)).unwrap();
        assert!(r.residual.is_finite() && r.residual < 1e-2, "{}", r.residual);
        assert!(r.dual_residual <= 10.0 * r.residual, "{} vs {}", r.dual_residual, r.residual);
    }
}

#[test]
fn residuals_shrink_under_refinement() {
    let f = random_problem(3, 2, 2, 0.75);
    let coarse = resolvent(&f.problem, uniform_grid(33)).unwrap();
    let fine = resolvent(&f.problem, uniform_grid(65)).unwrap();
    assert!(fine.residual < coarse.residual);
    assert!(fine.dual_residual < coarse.dual_residual);
}

#[test]
fn resolvent_respects_growth_bound() {
    let f = random_problem(4, 2, 2, 0.8);
    let g = uniform_grid(33);
    let sp = SampledProblem::new(&f.problem, g.clone()).unwrap();
    let r = resolvent(&f.problem, g).unwrap();
    assert!(check_resolvent_bound(&r.kernel, sup_norm(&sp.a)));
}

#[test]
fn zero_forcing_gives_zero_state() {
    let f = random_problem(5, 2, 1, 0.6);
    let sp = SampledProblem::new(&f.problem, uniform_grid(17)).unwrap();
    let x = solve_state(&sp, &GridFunction::zeros(17, 2)).unwrap();
    assert_eq!(x.max_abs(), 0.0);
}

#[test]
fn without_coupling_state_is_forcing() {
    let p = ProblemData::new(
        2,
        1,
        0.4,
        1.0,
        constant_kernel(DMatrix::zeros(2, 2)),
        constant_kernel(DMatrix::zeros(2, 1)),
        constant_vector(DVector::zeros(2)),
    )
    .unwrap();
    let sp = SampledProblem::new(&p, uniform_grid(17)).unwrap();
    let xi = random_function(&mut rng(6), 17, 2);
    assert_eq!(solve_state(&sp, &xi).unwrap(), xi);
}

#[test]
fn stepping_agrees_with_variation_of_constants() {
    for (seed, beta) in [(7, 0.3), (8, 0.75), (9, 0.95)] {
        let f = random_problem(seed, 3, 1, beta);
        let sp = SampledProblem::new(&f.problem, uniform_grid(41)).unwrap();
        let phi = discrete_resolvent(&sp).unwrap();
        let xi = random_function(&mut rng(seed + 100), 41, 3);
        let gap = verify_variation_of_constants(&sp, &phi, &xi).unwrap();
        assert!(gap <= 1e-6, "beta {beta}: {gap:e}");
    }
}

#[test]
fn zero_input_kernel_freezes_state_at_free_part() {
    let mut f = random_problem(10, 2, 2, 0.75);
    f.problem.b = constant_kernel(DMatrix::zeros(2, 2));
    let (sp, _) = sample(&f, uniform_grid(17));
    let dec = decompose(&sp, &discrete_resolvent(&sp).unwrap()).unwrap();
    assert!(dec.kernel.singular_coeff().is_zero() && dec.kernel.regular_part().is_zero());
    let u = random_function(&mut rng(11), 17, 2);
    let x = solve_controlled(&sp, &u).unwrap();
    assert!(x.sub(&dec.psi).max_abs() < 1e-14);
}

#[test]
fn decoupled_problem_has_bare_control_kernel() {
    let beta = 0.7;
    let p = ProblemData::new(
        1,
        1,
        beta,
        1.0,
        constant_kernel(DMatrix::zeros(1, 1)),
        Arc::new(|t, s| DMatrix::from_element(1, 1, 1.0 + t * s)),
        constant_vector(DVector::zeros(1)),
    )
    .unwrap();
    let g = uniform_grid(9);
    let sp = SampledProblem::new(&p, g.clone()).unwrap();
    let dec = decompose(&sp, &discrete_resolvent(&sp).unwrap()).unwrap();
    assert_eq!(dec.psi.max_abs(), 0.0);
    for i in 1..9 {
        for j in 0..i {
            let (t, s) = (g.t(i), g.t(j));
            let expected = (1.0 + t * s) * (t - s).powf(beta - 1.0);
            assert!((dec.kernel.value(i, j)[(0, 0)] - expected).abs() < 1e-14 * expected);
        }
    }
}

fn singular_forcing() -> TimeVectorFn {
    Arc::new(|t| DVector::from_element(1, blowup::singular_control(t)))
}

#[test]
fn terminal_response_is_finite_only_above_one_half() {
    let respond = |beta: f64, n: usize| {
        let grid = Arc::new(Grid::build(n, 1.0, GridKind::Graded { exponent: 6.0 }).unwrap());
        let sp = SampledProblem::new(&blowup::problem(beta).unwrap(), grid.clone()).unwrap();
        let u = GridFunction::from_fn(n, 1, |i| singular_forcing()(grid.t(i)));
        let x = solve_controlled(&sp, &u).unwrap();
        assert!(x.is_finite());
        x.at(n - 1)[0].abs()
    };
    let mild: Vec<f64> = [64, 128, 256, 512].iter().map(|&n| respond(0.75, n)).collect();
    let strong: Vec<f64> = [64, 128, 256, 512].iter().map(|&n| respond(0.4, n)).collect();
    assert!(mild.iter().all(|v| (v / mild[0] - 1.0).abs() < 0.05), "{mild:?}");
    assert!(strong.windows(2).all(|w| w[1] > w[0]), "{strong:?}");
    assert!(strong[3] >= 2.0 * strong[0], "{strong:?}");
}

#[test]
fn state_approaches_terminal_value_for_the_singular_control() {
    let p = blowup::problem(0.75).unwrap();
    let report = check_continuity_at_t(&p, 65, GridKind::Uniform, &singular_forcing()).unwrap();
    assert!(report.passed, "{:?}", report.gaps);
}

#[test]
fn smooth_problem_state_is_continuous_at_horizon() {
    let f = random_problem(12, 2, 1, 0.7);
    let zero: TimeVectorFn = Arc::new(|_| DVector::zeros(1));
    let report = check_continuity_at_t(&f.problem, 33, GridKind::Uniform, &zero).unwrap();
    assert!(report.passed, "{:?}", report.gaps);
}

#[test]
fn continuity_check_refuses_order_one_half() {
    let p = blowup::problem(0.5).unwrap();
    assert!(matches!(
        check_continuity_at_t(&p, 17, GridKind::Uniform, &singular_forcing()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn library_series_matches_the_independent_one() {
    for a in [-1.3, 0.0, 0.7, 2.0] {
        for r in [0.01, 0.4, 1.0] {
            let lib = vlq_core::volterra::constant_resolvent_series(a, 0.75, r, 60);
            let ours = if a == 0.0 { 0.0 } else { series_resolvent(a, 0.75, r, 60) };
            assert!((lib - ours).abs() <= 1e-13 * (1.0 + ours.abs()), "{a} {r}");
        }
    }
}
