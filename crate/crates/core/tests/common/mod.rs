#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use vlq_core::problem::{constant_kernel, constant_matrix, constant_vector, KernelFn};
use vlq_core::{CostData, Grid, GridFunction, GridKind, ProblemData, SampledCost, SampledProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_grid(n: usize) -> Arc<Grid> {
    Arc::new(Grid::build(n, 1.0, GridKind::Uniform).unwrap())
}

/// Resolvent of the constant scalar kernel by its power series.
pub fn series_resolvent(a: f64, beta: f64, r: f64, terms: usize) -> f64 {
    let lg = ln_gamma(beta);
    (1..=terms)
        .map(|k| {
            let kf = k as f64;
            let mag = (kf * (a.abs().ln() + lg) + (kf * beta - 1.0) * r.ln() - ln_gamma(kf * beta)).exp();
            if a < 0.0 && k % 2 == 1 {
                -mag
            } else {
                mag
            }
        })
        .sum()
}

fn trig_kernel(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> KernelFn {
    let c: Vec<[f64; 4]> = (0..rows * cols)
        .map(|_| std::array::from_fn(|_| scale * (rng.random::<f64>() - 0.5)))
        .collect();
    Arc::new(move |t, s| {
        DMatrix::from_fn(rows, cols, |p, q| {
            let k = &c[p * cols + q];
            k[0] + k[1] * (PI * t).cos() + k[2] * (PI * s).sin() + k[3] * (PI * (t - s)).cos()
        })
    })
}

fn trig_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync> {
    let c: Vec<[f64; 3]> = (0..dim)
        .map(|_| std::array::from_fn(|_| scale * (rng.random::<f64>() - 0.5)))
        .collect();
    Arc::new(move |t| {
        DVector::from_fn(dim, |p, _| {
            let k = &c[p];
            k[0] + k[1] * (PI * t).sin() + k[2] * (2.0 * PI * t).cos()
        })
    })
}

fn trig_psd(rng: &mut ChaCha8Rng, dim: usize, scale: f64, floor: f64) -> Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync> {
    let c: Vec<[f64; 2]> = (0..dim * dim)
        .map(|_| std::array::from_fn(|_| scale * (rng.random::<f64>() - 0.5)))
        .collect();
    Arc::new(move |t| {
        let l = DMatrix::from_fn(dim, dim, |p, q| {
            let k = &c[p * dim + q];
            k[0] + k[1] * (PI * t).cos()
        });
        &l * l.transpose() + DMatrix::identity(dim, dim) * floor
    })
}

pub struct Fixture {
    pub problem: ProblemData,
    pub cost: CostData,
}

/// Smooth random problem without cross terms.
pub fn random_problem(seed: u64, n: usize, m: usize, beta: f64) -> Fixture {
    let mut r = rng(seed);
    let a = trig_kernel(&mut r, n, n, 1.5);
    let b = trig_kernel(&mut r, n, m, 2.0);
    let phi = trig_vector(&mut r, n, 2.0);
    let problem = ProblemData::new(n, m, beta, 1.0, a, b, phi).unwrap();
    let q = trig_psd(&mut r, n, 1.5, 0.0);
    let rr = trig_psd(&mut r, m, 1.0, 0.5);
    let q_lin = trig_vector(&mut r, n, 1.0);
    let gl = DMatrix::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
    let g_lin = DVector::from_fn(n, |_, _| r.random::<f64>() - 0.5);
    let cost = CostData {
        q,
        s: constant_matrix(DMatrix::zeros(m, n)),
        r: rr,
        q_lin,
        rho: constant_vector(DVector::zeros(m)),
        g: &gl * gl.transpose(),
        g_lin,
        delta: None,
    };
    Fixture { problem, cost }
}

/// Random problem with cross terms; `delta` is half the floor of `R`, and `Q` dominates
/// `Sᵀ(R-δ)⁻¹S` so the cost form stays above `δ`.
pub fn cross_term_problem(seed: u64, n: usize, m: usize, beta: f64) -> Fixture {
    let base = random_problem(seed, n, m, beta);
    let mut r = rng(seed ^ 0x5eed);
    let s = {
        let k = trig_kernel(&mut r, m, n, 1.0);
        Arc::new(move |t: f64| k(t, 0.0)) as Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>
    };
    let rho = trig_vector(&mut r, m, 1.0);
    let rr = base.cost.r.clone();
    let q0 = base.cost.q.clone();
    let delta = 0.25;
    let s2 = s.clone();
    let q = Arc::new(move |t: f64| {
        let rt = rr(t) - DMatrix::identity(m, m) * delta;
        let st = s2(t);
        q0(t) + st.transpose() * rt.try_inverse().unwrap() * st
    });
    let cost = CostData {
        q,
        s,
        rho,
        delta: Some(delta),
        ..base.cost
    };
    Fixture { problem: base.problem, cost }
}

pub fn scalar_constant_problem(a: f64, b: f64, beta: f64) -> ProblemData {
    ProblemData::new(
        1,
        1,
        beta,
        1.0,
        constant_kernel(DMatrix::from_element(1, 1, a)),
        constant_kernel(DMatrix::from_element(1, 1, b)),
        constant_vector(DVector::from_element(1, 1.0)),
    )
    .unwrap()
}

pub fn sample(f: &Fixture, grid: Arc<Grid>) -> (SampledProblem, SampledCost) {
    let sp = SampledProblem::new(&f.problem, grid.clone()).unwrap();
    let sc = SampledCost::new(&f.cost, &grid, f.problem.state_dim, f.problem.control_dim).unwrap();
    (sp, sc)
}

pub fn random_function(rng: &mut ChaCha8Rng, nodes: usize, dim: usize) -> GridFunction {
    GridFunction::from_fn(nodes, dim, |_| DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5))
}

/// Relative discrete L² distance.
pub fn rel_dist(a: &GridFunction, b: &GridFunction, w: &[f64]) -> f64 {
    let d = a.sub(b).weighted_norm(w);
    let s = a.weighted_norm(w);
    if s == 0.0 {
        d
    } else {
        d / s
    }
}
