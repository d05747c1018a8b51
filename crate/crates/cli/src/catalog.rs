//! Built-in problems, selected by name from the config.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlq_core::blowup;
use vlq_core::problem::{constant_kernel, constant_matrix, constant_vector, KernelFn, TimeMatrixFn, TimeVectorFn};
use vlq_core::{CostData, ProblemData, Registry};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogSettings {
    pub seed: u64,
    pub beta: f64,
    pub horizon: f64,
    pub state_dim: Option<usize>,
    pub control_dim: Option<usize>,
}

pub struct ProblemInstance {
    pub problem: ProblemData,
    pub cost: CostData,
    /// Scalar constant state kernel, when the resolvent has a closed-form series.
    pub series_coefficient: Option<f64>,
}

pub fn catalog() -> Registry<ProblemInstance, CatalogSettings> {
    let mut reg = Registry::new("catalog problem");
    reg.register("zero-cost", "R = I, every other weight zero; the optimum is u = 0", zero_cost);
    reg.register("constant-coeff", "scalar constant a = b = 1; resolvent has a series form", constant_coeff);
    reg.register("example-2-1", "A = 0, B = 1 on [0,1]; finite-energy control with singular response", example);
    reg.register("random-smooth", "trigonometric coefficients drawn from the seed, no cross terms", random_smooth);
    reg.register("cross-term", "random-smooth plus state-control cross weights", cross_term);
    reg
}

/// Splits `name(seed)` into its parts.
pub fn parse_selector(selector: &str) -> Result<(String, Option<u64>)> {
    let s = selector.trim();
    match s.split_once('(') {
        None => Ok((s.to_string(), None)),
        Some((name, rest)) => {
            let seed = rest
                .strip_suffix(')')
                .and_then(|v| v.trim().parse::<u64>().ok())
                .ok_or_else(|| CliError::Selection(format!("cannot read a seed from `{selector}`")))?;
            Ok((name.trim().to_string(), Some(seed)))
        }
    }
}

/// Catalog entry named by the config, with its inline overrides applied.
pub fn instantiate(cfg: &RunConfig) -> Result<ProblemInstance> {
    let (name, seed) = parse_selector(&cfg.problem)?;
    let settings = CatalogSettings {
        seed: seed.unwrap_or(cfg.seed),
        beta: cfg.beta,
        horizon: cfg.horizon,
        state_dim: cfg.state_dim,
        control_dim: cfg.control_dim,
    };
    let mut inst = *catalog().create(&name, &settings)?;
    let ov = &cfg.overrides;
    let (n, m) = (inst.problem.state_dim, inst.problem.control_dim);
    let fits = |field: &str, got: (usize, usize), want: (usize, usize)| {
        if got == want {
            Ok(())
        } else {
            Err(CliError::Selection(format!(
                "`{field}` is {}x{} but problem `{name}` needs {}x{}; set state_dim/control_dim",
                got.0, got.1, want.0, want.1
            )))
        }
    };
    if let Some(a) = &ov.a {
        fits("a", (a.rows, a.cols), (n, n))?;
        inst.problem.a = constant_kernel(a.matrix());
        inst.series_coefficient = (n == 1 && inst.series_coefficient.is_some()).then(|| a.values[0]);
    }
    if let Some(b) = &ov.b {
        fits("b", (b.rows, b.cols), (n, m))?;
        inst.problem.b = constant_kernel(b.matrix());
    }
    if let Some(phi) = &ov.phi {
        fits("phi", (phi.rows, phi.cols), (n, 1))?;
        inst.problem.phi = constant_vector(phi.vector());
    }
    let c = &mut inst.cost;
    if let Some(q) = &ov.q {
        fits("q", (q.rows, q.cols), (n, n))?;
        c.q = constant_matrix(q.matrix());
    }
    if let Some(s) = &ov.s {
        fits("s", (s.rows, s.cols), (m, n))?;
        c.s = constant_matrix(s.matrix());
    }
    if let Some(r) = &ov.r {
        fits("r", (r.rows, r.cols), (m, m))?;
        c.r = constant_matrix(r.matrix());
    }
    if let Some(v) = &ov.q_lin {
        fits("q_lin", (v.rows, v.cols), (n, 1))?;
        c.q_lin = constant_vector(v.vector());
    }
    if let Some(v) = &ov.rho {
        fits("rho", (v.rows, v.cols), (m, 1))?;
        c.rho = constant_vector(v.vector());
    }
    if let Some(g) = &ov.g {
        fits("g", (g.rows, g.cols), (n, n))?;
        c.g = g.matrix();
    }
    if let Some(v) = &ov.g_lin {
        fits("g_lin", (v.rows, v.cols), (n, 1))?;
        c.g_lin = v.vector();
    }
    if ov.delta.is_some() {
        c.delta = ov.delta;
    }
    Ok(inst)
}

fn dims(s: &CatalogSettings, n: usize, m: usize) -> (usize, usize) {
    (s.state_dim.unwrap_or(n), s.control_dim.unwrap_or(m))
}

fn plain(problem: ProblemData, cost: CostData) -> Box<ProblemInstance> {
    Box::new(ProblemInstance {
        problem,
        cost,
        series_coefficient: None,
    })
}

fn zero_cost(s: &CatalogSettings) -> vlq_core::Result<Box<ProblemInstance>> {
    let (n, m) = dims(s, 2, 2);
    let problem = ProblemData::new(
        n,
        m,
        s.beta,
        s.horizon,
        constant_kernel(DMatrix::from_element(n, n, 0.5)),
        constant_kernel(DMatrix::from_element(n, m, 1.0)),
        constant_vector(DVector::from_element(n, 1.0)),
    )?;
    Ok(plain(problem, CostData::control_only(n, m)))
}

fn constant_coeff(s: &CatalogSettings) -> vlq_core::Result<Box<ProblemInstance>> {
    let one = || DMatrix::from_element(1, 1, 1.0);
    let problem = ProblemData::new(
        1,
        1,
        s.beta,
        s.horizon,
        constant_kernel(one()),
        constant_kernel(one()),
        constant_vector(DVector::from_element(1, 1.0)),
    )?;
    let cost = CostData {
        q: constant_matrix(one()),
        g: one(),
        ..CostData::control_only(1, 1)
    };
    Ok(Box::new(ProblemInstance {
        problem,
        cost,
        series_coefficient: Some(1.0),
    }))
}

fn example(s: &CatalogSettings) -> vlq_core::Result<Box<ProblemInstance>> {
    let mut problem = blowup::problem(s.beta)?;
    problem.horizon = s.horizon;
    // steer the terminal state toward 1
    let cost = CostData {
        g: DMatrix::identity(1, 1),
        g_lin: DVector::from_element(1, -1.0),
        ..CostData::control_only(1, 1)
    };
    Ok(plain(problem, cost))
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

fn trig_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> TimeVectorFn {
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

/// `L(t)L(t)ᵀ + floor·I`, positive semidefinite by construction.
fn trig_psd(rng: &mut ChaCha8Rng, dim: usize, scale: f64, floor: f64) -> TimeMatrixFn {
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

fn random_parts(s: &CatalogSettings) -> vlq_core::Result<(ProblemData, CostData)> {
    let (n, m) = dims(s, 2, 2);
    let mut r = ChaCha8Rng::seed_from_u64(s.seed);
    let a = trig_kernel(&mut r, n, n, 1.5);
    let b = trig_kernel(&mut r, n, m, 2.0);
    let phi = trig_vector(&mut r, n, 2.0);
    let problem = ProblemData::new(n, m, s.beta, s.horizon, a, b, phi)?;
    let q = trig_psd(&mut r, n, 1.5, 0.0);
    let rr = trig_psd(&mut r, m, 1.0, 0.5);
    let q_lin = trig_vector(&mut r, n, 1.0);
    let gl = DMatrix::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
    let g_lin = DVector::from_fn(n, |_, _| r.random::<f64>() - 0.5);
    let cost = CostData {
        q,
        r: rr,
        q_lin,
        g: &gl * gl.transpose(),
        g_lin,
        ..CostData::control_only(n, m)
    };
    Ok((problem, cost))
}

fn random_smooth(s: &CatalogSettings) -> vlq_core::Result<Box<ProblemInstance>> {
    let (problem, cost) = random_parts(s)?;
    Ok(plain(problem, cost))
}

/// Cross weights `S`, `ρ` on top of `random-smooth`. The floor is half that of `R`, and `Q` is
/// raised by `Sᵀ(R - δ)⁻¹S` so the cost form stays above it.
fn cross_term(s: &CatalogSettings) -> vlq_core::Result<Box<ProblemInstance>> {
    let (problem, base) = random_parts(s)?;
    let (n, m) = (problem.state_dim, problem.control_dim);
    let mut r = ChaCha8Rng::seed_from_u64(s.seed ^ 0x5eed);
    let k = trig_kernel(&mut r, m, n, 1.0);
    let cross: TimeMatrixFn = Arc::new(move |t| k(t, 0.0));
    let rho = trig_vector(&mut r, m, 1.0);
    let delta = 0.25;
    let (rr, q0, s2) = (base.r.clone(), base.q.clone(), cross.clone());
    let q: TimeMatrixFn = Arc::new(move |t| {
        let shifted = rr(t) - DMatrix::identity(m, m) * delta;
        let st = s2(t);
        // shifted >= 0.25 I, so the inverse exists
        q0(t) + st.transpose() * shifted.try_inverse().expect("shifted weight is invertible") * st
    });
    let cost = CostData {
        q,
        s: cross,
        rho,
        delta: Some(delta),
        ..base
    };
    Ok(plain(problem, cost))
}
