mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vlq_core::causal::{causal_trajectories, CausalProjection};
use vlq_core::grid_quad::{check_young_bound, integrate_singular};
use vlq_core::kernel_io::{read_factored, write_factored};
use vlq_core::problem::constant_kernel;
use vlq_core::volterra::{check_resolvent_bound, discrete_resolvent, resolvent, solve_controlled};
use vlq_core::{Grid, GridFunction, GridKind, LqModel, ProblemData, SampledProblem, SingularWeights};

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn grid_kind() -> impl Strategy<Value = GridKind> {
    prop_oneof![
        Just(GridKind::Uniform),
        (1.5f64..4.0).prop_map(|exponent| GridKind::Graded { exponent }),
    ]
}

fn function(v: &[f64], dim: usize) -> GridFunction {
    GridFunction::from_flat(dim, DVector::from_column_slice(v)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn singular_quadrature_is_linear(
        beta in 0.05f64..0.99,
        kind in grid_kind(),
        a in values(17),
        b in values(17),
        c in -3.0f64..3.0,
    ) {
        let grid = Grid::build(17, 1.0, kind).unwrap();
        let w = SingularWeights::new(&grid, beta).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| c * x + y).collect();
        for i in 0..17 {
            let lhs = integrate_singular(&w, i, &mix).unwrap();
            let rhs = c * integrate_singular(&w, i, &a).unwrap() + integrate_singular(&w, i, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn singular_quadrature_reproduces_constants(
        beta in 0.05f64..0.99,
        kind in grid_kind(),
        horizon in 0.5f64..3.0,
    ) {
        let grid = Grid::build(21, horizon, kind).unwrap();
        let w = SingularWeights::new(&grid, beta).unwrap();
        let ones = vec![1.0; 21];
        for i in 0..21 {
            let exact = grid.t(i).powf(beta) / beta;
            let got = integrate_singular(&w, i, &ones).unwrap();
            prop_assert!((got - exact).abs() <= 1e-12 * (1.0 + exact));
        }
    }

    #[test]
    fn convolution_obeys_young_bounds(
        beta in prop::sample::select(vec![0.55, 0.75, 0.95]),
        theta in values(65),
        s in 0.0f64..0.9,
    ) {
        let grid = Grid::build(65, 1.0, GridKind::Uniform).unwrap();
        let w = SingularWeights::new(&grid, beta).unwrap();
        let report = check_young_bound(&grid, &w, &theta, s).unwrap();
        prop_assert!(report.passed, "{report:?}");
    }

    #[test]
    fn scalar_resolvent_respects_growth_bound(a in -2.0f64..2.0, beta in 0.55f64..0.95) {
        let p = scalar_constant_problem(a, 1.0, beta);
        let r = resolvent(&p, uniform_grid(17)).unwrap();
        prop_assert!(check_resolvent_bound(&r.kernel, a.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn control_response_superposes(seed in 0u64..1000, u in values(34), v in values(34), c in -2.0f64..2.0) {
        let f = random_problem(seed, 2, 2, 0.7);
        let sp = SampledProblem::new(&f.problem, uniform_grid(17)).unwrap();
        let (u, v) = (function(&u, 2), function(&v, 2));
        let free = solve_controlled(&sp, &GridFunction::zeros(17, 2)).unwrap();
        let xu = solve_controlled(&sp, &u).unwrap().sub(&free);
        let xv = solve_controlled(&sp, &v).unwrap().sub(&free);
        let xs = solve_controlled(&sp, &u.scaled(c).add(&v)).unwrap().sub(&free);
        let expected = xu.scaled(c).add(&xv);
        prop_assert!(xs.sub(&expected).max_abs() <= 1e-12 * (1.0 + expected.max_abs()));
    }

    #[test]
    fn theta_adjoints_are_exact(seed in 0u64..1000, u in values(34), x in values(34), xt in values(2)) {
        let f = random_problem(seed, 2, 2, 0.75);
        let m = LqModel::build(&f.problem, &f.cost, uniform_grid(17)).unwrap();
        let w = &m.dlq.norm_weights;
        let (u, x) = (function(&u, 2), function(&x, 2));
        let lhs = x.weighted_dot(&m.dlq.apply_theta(&u), w);
        let rhs = m.dlq.theta_adjoint(&x).weighted_dot(&u, w);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        let xt = DVector::from_vec(xt);
        let lhs = xt.dot(&m.dlq.apply_theta_t(&u));
        let rhs = m.dlq.theta_t_adjoint(&xt).weighted_dot(&u, w);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn projections_split_and_commute(u in values(40), sigma in 0usize..=20, mult in values(80)) {
        let u = function(&u, 2);
        let p = CausalProjection::new(sigma, 20).unwrap();
        prop_assert_eq!(p.past(&p.past(&u)), p.past(&u));
        prop_assert_eq!(p.future(&p.future(&u)), p.future(&u));
        prop_assert_eq!(p.past(&p.future(&u)).max_abs(), 0.0);
        prop_assert_eq!(p.past(&u).add(&p.future(&u)), u.clone());
        let apply = |g: &GridFunction| {
            GridFunction::from_fn(20, 2, |i| DMatrix::from_column_slice(2, 2, &mult[4 * i..4 * i + 4]) * g.at(i))
        };
        prop_assert_eq!(p.past(&apply(&u)), apply(&p.past(&u)));
        prop_assert_eq!(p.future(&apply(&u)), apply(&p.future(&u)));
    }

    #[test]
    fn truncated_state_ignores_the_future(seed in 0u64..1000, u in values(34), noise in values(34), t in 0usize..17) {
        let f = random_problem(seed, 2, 2, 0.75);
        let m = LqModel::build(&f.problem, &f.cost, uniform_grid(17)).unwrap();
        let u = function(&u, 2);
        let noise = CausalProjection::new(t, 17).unwrap().future(&function(&noise, 2));
        let a = causal_trajectories(&m.dlq, &u).unwrap();
        let b = causal_trajectories(&m.dlq, &u.add(&noise)).unwrap();
        prop_assert_eq!(a.truncated(t), b.truncated(t));
        prop_assert_eq!(a.auxiliary(t), b.auxiliary(t));
    }

    #[test]
    fn stored_resolvent_round_trips(a in -2.0f64..2.0, beta in 0.1f64..0.99, kind in grid_kind()) {
        let p = ProblemData::new(
            1,
            1,
            beta,
            1.0,
            constant_kernel(DMatrix::from_element(1, 1, a)),
            constant_kernel(DMatrix::from_element(1, 1, 1.0)),
            vlq_core::problem::constant_vector(DVector::from_element(1, 1.0)),
        )
        .unwrap();
        let grid = std::sync::Arc::new(Grid::build(9, 1.0, kind).unwrap());
        let sp = SampledProblem::new(&p, grid).unwrap();
        let k = discrete_resolvent(&sp).unwrap();
        let mut buf = Vec::new();
        write_factored(&k, &mut buf).unwrap();
        let back = read_factored(buf.as_slice()).unwrap();
        prop_assert_eq!(back.singular_coeff(), k.singular_coeff());
        prop_assert_eq!(back.regular_part(), k.regular_part());
        prop_assert_eq!(back.beta(), k.beta());
    }
}
