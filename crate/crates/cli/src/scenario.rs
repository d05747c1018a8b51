//! Experiment scenarios, selected by name from the config.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlq_core::blowup;
use vlq_core::causal::{build_hat_system, causal_trajectories, lambda_sigma, CausalProjection};
use vlq_core::control::{control_registry, ControlSettings};
use vlq_core::fredholm::{
    DirectSolver, FredholmSolver, FredholmSystem, GalerkinSolver, IteratedGalerkinSolver,
    SolverSettings, SuperconvergentSolver,
};
use vlq_core::lq::{coercivity_margin, directional_derivative, solve_open_loop};
use vlq_core::volterra::{constant_resolvent_series, discrete_resolvent, resolvent};
use vlq_core::{Grid, GridFunction, LqModel, Registry, SampledCost, SampledProblem};

use crate::cache::{cache_key, KernelCache};
use crate::catalog::{instantiate, parse_selector, ProblemInstance};
use crate::config::RunConfig;
use crate::error::Result;
use crate::report::{Check, ScenarioReport, Table};

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub cache: &'a KernelCache,
}

pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &Context<'_>) -> Result<ScenarioReport>;
}

pub fn scenario_registry() -> Registry<dyn Scenario, ()> {
    let mut reg: Registry<dyn Scenario, ()> = Registry::new("scenario");
    reg.register("equivalence", "oracle, maximum principle, causal and feedback controls agree", |_| {
        Ok(Box::new(Equivalence))
    });
    reg.register("convergence", "resolvent residuals and series oracle under grid refinement", |_| {
        Ok(Box::new(Convergence))
    });
    reg.register("fredholm-methods", "Galerkin, iterated and corrected solvers against the dense solve", |_| {
        Ok(Box::new(FredholmMethods))
    });
    reg.register("example-2-1", "finite-energy control whose response blows up for low order", |_| {
        Ok(Box::new(BlowUp))
    });
    reg.register("reduction", "cross-term problem through the reduced system", |_| {
        Ok(Box::new(Reduction))
    });
    reg
}

/// Runs the configured scenario and writes its CSV files.
pub fn run_scenario(config: &RunConfig, cache: &KernelCache) -> Result<ScenarioReport> {
    let scenario = scenario_registry().create(&config.scenario, &())?;
    let mut report = scenario.run(&Context { config, cache })?;
    report.write_csv(&config.output_dir, &config.hash())?;
    Ok(report)
}

fn grid(cfg: &RunConfig, n: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::build(n, cfg.horizon, cfg.grid.kind())?))
}

/// Everything that fixes the sampled problem, for cache keys.
fn problem_key(cfg: &RunConfig, seed: u64, n: usize) -> Vec<String> {
    let (name, _) = parse_selector(&cfg.problem).unwrap_or_else(|_| (cfg.problem.clone(), None));
    vec![
        name,
        seed.to_string(),
        format!("{:?}/{:?}", cfg.state_dim, cfg.control_dim),
        format!("{:e}", cfg.beta),
        format!("{:e}", cfg.horizon),
        format!("{:?}", cfg.grid),
        n.to_string(),
        toml::to_string(&cfg.overrides).unwrap_or_default(),
    ]
}

fn seed_of(cfg: &RunConfig) -> u64 {
    parse_selector(&cfg.problem)
        .ok()
        .and_then(|(_, s)| s)
        .unwrap_or(cfg.seed)
}

fn with_seed(cfg: &RunConfig, seed: u64) -> RunConfig {
    let mut c = cfg.clone();
    c.problem = parse_selector(&cfg.problem).map(|(n, _)| n).unwrap_or_default();
    c.seed = seed;
    c
}

fn build_model(ctx: &Context<'_>, cfg: &RunConfig, inst: &ProblemInstance, n: usize) -> Result<LqModel> {
    let grid = grid(cfg, n)?;
    let sp = SampledProblem::new(&inst.problem, grid.clone())?;
    let sc = SampledCost::new(&inst.cost, &grid, inst.problem.state_dim, inst.problem.control_dim)?;
    let mut parts = vec!["discrete-resolvent".to_string()];
    parts.extend(problem_key(cfg, seed_of(cfg), n));
    let key = cache_key(&parts.iter().map(String::as_str).collect::<Vec<_>>());
    let resolvent = ctx.cache.factored(&key, || discrete_resolvent(&sp))?;
    Ok(LqModel::with_resolvent(sp, sc, resolvent)?)
}

fn control_settings(cfg: &RunConfig) -> ControlSettings {
    ControlSettings {
        solver: cfg.solver.clone(),
        solver_settings: SolverSettings {
            subspace_dim: cfg.subspace_dim,
            iterations: cfg.iterations,
        },
    }
}

/// Relative discrete L² distance; absolute when the reference vanishes.
pub fn rel_dist(reference: &GridFunction, other: &GridFunction, w: &[f64]) -> f64 {
    let d = reference.sub(other).weighted_norm(w);
    let s = reference.weighted_norm(w);
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

fn random_function(rng: &mut ChaCha8Rng, nodes: usize, dim: usize) -> GridFunction {
    GridFunction::from_fn(nodes, dim, |_| DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5))
}

fn component_columns(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("{prefix}{k}")).collect()
}

struct Timer {
    start: Instant,
}

impl Timer {
    fn start() -> Self {
        Self { start: Instant::now() }
    }

    fn lap(&mut self, report: &mut ScenarioReport, stage: &str) {
        let t = self.start.elapsed();
        log::info!("{stage}: {:.3}s", t.as_secs_f64());
        report.timings.push((stage.to_string(), t));
        self.start = Instant::now();
    }
}

struct Equivalence;

impl Scenario for Equivalence {
    fn name(&self) -> &'static str {
        "equivalence"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<ScenarioReport> {
        let cfg = ctx.config;
        let tol = &cfg.tolerances;
        let mut report = ScenarioReport::new(self.name());
        let mut timer = Timer::start();
        let inst = instantiate(cfg)?;
        let model = build_model(ctx, cfg, &inst, cfg.n)?;
        timer.lap(&mut report, "model");

        let dlq = &model.dlq;
        let w = &dlq.norm_weights;
        let len = dlq.nodes();
        let m = dlq.control_dim;
        let oracle = solve_open_loop(dlq)?;
        let registry = control_registry();
        let settings = control_settings(cfg);
        let methods = [
            (
                "maximum-principle",
                "control from the backward adjoint equation equals the optimum",
                tol.maximum_principle,
            ),
            (
                "abstract-causal",
                "causal formula through restricted cost-form inverses equals the optimum",
                tol.abstract_causal,
            ),
            (
                "fredholm-feedback",
                "state feedback through the Fredholm kernel equals the optimum",
                tol.feedback,
            ),
        ];
        let mut controls = Vec::new();
        for (name, identity, limit) in methods {
            let u = registry.create(name, &settings)?.control(&model, &oracle)?;
            report
                .checks
                .push(Check::at_most(&format!("{name} vs oracle"), identity, rel_dist(&oracle, &u, w), limit));
            controls.push((name, u));
            timer.lap(&mut report, name);
        }

        // optimality of the discrete optimum along random directions
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0b7);
        let j = dlq.cost(&oracle);
        let mut worst_gap = f64::INFINITY;
        let mut worst_slope: f64 = 0.0;
        for _ in 0..cfg.perturbations {
            let v = random_function(&mut rng, len, m);
            for eps in [-1e-1, -1e-2, 1e-2, 1e-1] {
                worst_gap = worst_gap.min(dlq.cost(&oracle.add(&v.scaled(eps))) - j);
            }
            let slope = directional_derivative(dlq, &oracle, &v, 1e-4).abs() / dlq.control_norm(&v);
            worst_slope = worst_slope.max(slope);
        }
        if cfg.perturbations > 0 {
            report.checks.push(Check::at_least(
                "perturbed cost increase",
                "J(u + eps v) - J(u) is never negative at the optimum",
                worst_gap,
                -tol.optimality,
            ));
            report.checks.push(Check::at_most(
                "directional derivative",
                "central difference of J at the optimum vanishes, relative to |v|",
                worst_slope,
                tol.derivative,
            ));
        }

        // coercivity of the full and every restricted cost form
        let mut lowest = coercivity_margin(dlq);
        for sigma in 0..len {
            lowest = lowest.min(lambda_sigma(dlq, sigma)?.min_generalized_eigenvalue());
        }
        report.checks.push(Check::at_least(
            "cost form coercivity",
            "smallest generalized eigenvalue of every restricted cost form stays above the floor",
            lowest,
            dlq.delta * (1.0 - tol.coercivity),
        ));
        timer.lap(&mut report, "optimality and coercivity");

        // perturbing the control from node t onward must not reach anything known at t
        let causal: Vec<_> = ["abstract-causal", "fredholm-feedback"]
            .iter()
            .map(|name| registry.create(name, &settings))
            .collect::<vlq_core::Result<_>>()?;
        let base = causal_trajectories(dlq, &oracle)?;
        let mut leak: f64 = 0.0;
        for t in [0, len / 3, 2 * len / 3, len - 1] {
            let noise = CausalProjection::new(t, len)?.future(&random_function(&mut rng, len, m));
            let moved = oracle.add(&noise);
            let traj = causal_trajectories(dlq, &moved)?;
            leak = leak.max(traj.truncated(t).sub(&base.truncated(t)).max_abs());
            leak = leak.max((traj.auxiliary(t) - base.auxiliary(t)).amax());
            for (c, (_, reference)) in causal.iter().zip(&controls[1..]) {
                let u = c.control(&model, &moved)?;
                leak = leak.max((u.at(t) - reference.at(t)).amax());
            }
        }
        report.checks.push(Check::at_most(
            "non-anticipation",
            "controls and trajectories at t ignore control values from t onward",
            leak,
            0.0,
        ));
        timer.lap(&mut report, "non-anticipation");

        let x = dlq.state(&oracle);
        let n = dlq.state_dim;
        let mut header = vec!["t".to_string()];
        header.extend(component_columns("u_oracle_", m));
        for (name, _) in &controls {
            header.extend(component_columns(&format!("u_{}_", name.replace('-', "_")), m));
        }
        header.extend(component_columns("x_", n));
        for (name, _) in &controls {
            header.push(format!("gap_{}", name.replace('-', "_")));
        }
        let mut table = Table::new("equivalence", header);
        let grid = model.grid();
        for i in 0..len {
            let mut row = vec![grid.t(i)];
            row.extend(oracle.at(i).iter());
            for (_, u) in &controls {
                row.extend(u.at(i).iter());
            }
            row.extend(x.at(i).iter());
            for (_, u) in &controls {
                row.push((u.at(i) - oracle.at(i)).norm());
            }
            table.push(row);
        }
        report.tables.push(table);
        Ok(report)
    }
}

struct Convergence;

impl Scenario for Convergence {
    fn name(&self) -> &'static str {
        "convergence"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<ScenarioReport> {
        let cfg = ctx.config;
        let tol = &cfg.tolerances;
        let mut report = ScenarioReport::new(self.name());
        let mut timer = Timer::start();
        let inst = instantiate(cfg)?;
        let sizes = [cfg.n, 2 * cfg.n - 1];
        let mut table = Table::new(
            "convergence",
            vec![
                "nodes".into(),
                "max_step".into(),
                "residual".into(),
                "dual_residual".into(),
                "series_error".into(),
            ],
        );
        let mut residuals = Vec::new();
        let mut series_error = None;
        for (k, &n) in sizes.iter().enumerate() {
            let g = grid(cfg, n)?;
            let r = resolvent(&inst.problem, g.clone())?;
            let h = g.max_step();
            let err = inst.series_coefficient.map(|a| {
                let mut worst: f64 = 0.0;
                for i in 1..n {
                    for j in 0..i {
                        let off = g.t(i) - g.t(j);
                        if off < 4.0 * h * (1.0 - 1e-12) {
                            continue;
                        }
                        let exact = constant_resolvent_series(a, cfg.beta, off, 200);
                        let got = r.kernel.value(i, j)[(0, 0)];
                        worst = worst.max((got - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
                    }
                }
                worst
            });
            if k == 0 {
                series_error = err;
            }
            table.push(vec![n as f64, h, r.residual, r.dual_residual, err.unwrap_or(f64::NAN)]);
            residuals.push((r.residual, r.dual_residual));
            timer.lap(&mut report, &format!("resolvent on {n} nodes"));
        }
        let (coarse, fine) = (residuals[0], residuals[1]);
        report.checks.push(Check::at_most(
            "forward resolvent residual",
            "Phi = A r^(beta-1) + integral of A Phi, discrete relative residual",
            coarse.0,
            tol.resolvent_residual,
        ));
        report.checks.push(Check::at_most(
            "dual resolvent residual",
            "Phi = A r^(beta-1) + integral of Phi A, discrete relative residual",
            coarse.1,
            tol.resolvent_residual,
        ));
        report.checks.push(Check::holds(
            "residuals shrink under refinement",
            "both residuals decrease when the step halves",
            fine.0 < coarse.0 && fine.1 < coarse.1,
        ));
        if let Some(err) = series_error {
            report.checks.push(Check::at_most(
                "series oracle",
                "resolvent of a constant scalar kernel equals its power series away from the diagonal",
                err,
                tol.series,
            ));
        }
        report.tables.push(table);
        Ok(report)
    }
}

struct FredholmMethods;

impl Scenario for FredholmMethods {
    fn name(&self) -> &'static str {
        "fredholm-methods"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<ScenarioReport> {
        let cfg = ctx.config;
        let tol = &cfg.tolerances;
        let mut report = ScenarioReport::new(self.name());
        let mut timer = Timer::start();
        let d = cfg.subspace_dim;
        let mut header: Vec<String> = ["trial", "seed", "sigma", "galerkin", "iterated", "corrected"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..=3).map(|k| format!("corrections_{k}")));
        header.push("ordered".into());
        let mut table = Table::new("fredholm-methods", header);
        let mut ordered = 0;
        let mut monotone = 0;
        let base_seed = seed_of(cfg);
        for trial in 0..cfg.trials {
            let seed = base_seed + trial as u64;
            let tcfg = with_seed(cfg, seed);
            let inst = instantiate(&tcfg)?;
            let model = build_model(ctx, &tcfg, &inst, cfg.n)?;
            let sigma = (trial % 4) * model.dlq.nodes() / 8;
            let sys = FredholmSystem::assemble(&model, sigma)?;
            let mut parts = vec!["direct-feedback".to_string(), sigma.to_string()];
            parts.extend(problem_key(&tcfg, seed, cfg.n));
            let key = cache_key(&parts.iter().map(String::as_str).collect::<Vec<_>>());
            let direct = ctx.cache.feedback(&key, || DirectSolver.solve(&sys))?;
            let gal = GalerkinSolver { subspace_dim: d }.solve(&sys)?.distance(&direct)?;
            let it = IteratedGalerkinSolver { subspace_dim: d }.solve(&sys)?.distance(&direct)?;
            let sc = SuperconvergentSolver {
                subspace_dim: d,
                iterations: cfg.iterations,
            }
            .solve(&sys)?
            .distance(&direct)?;
            let tracked = SuperconvergentSolver {
                subspace_dim: d,
                iterations: 3,
            }
            .solve_tracked(&sys, Some(&direct.m))?;
            let h = &tracked.history;
            let is_ordered = sc <= it && it <= gal;
            // each correction must help until round-off takes over
            if h.windows(2).all(|p| p[1] < p[0] || p[1] < 1e-12) {
                monotone += 1;
            }
            ordered += usize::from(is_ordered);
            let mut row = vec![trial as f64, seed as f64, sigma as f64, gal, it, sc];
            row.extend(h.iter());
            row.push(if is_ordered { 1.0 } else { 0.0 });
            table.push(row);
        }
        timer.lap(&mut report, "trials");
        let trials = cfg.trials as f64;
        report.checks.push(Check::at_least(
            "hierarchy ordering",
            "corrected <= iterated Galerkin <= Galerkin error against the dense solve, share of trials",
            ordered as f64 / trials,
            tol.hierarchy_fraction,
        ));
        report.checks.push(Check::at_least(
            "monotone corrections",
            "corrected-iteration error falls at every step to a round-off floor, share of trials",
            monotone as f64 / trials,
            1.0,
        ));
        report.tables.push(table);
        Ok(report)
    }
}

struct BlowUp;

impl Scenario for BlowUp {
    fn name(&self) -> &'static str {
        "example-2-1"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<ScenarioReport> {
        let cfg = ctx.config;
        let tol = &cfg.tolerances;
        let mut report = ScenarioReport::new(self.name());
        let mut timer = Timer::start();
        let g = grid(cfg, cfg.n)?;
        let energy = blowup::energy_on_grid(&g)?;
        let exact = blowup::exact_energy();
        report.checks.push(Check::at_most(
            "control energy",
            "squared L2 norm of the singular control equals 1/ln 2, relative error",
            (energy - exact).abs() / exact,
            tol.energy,
        ));
        let mut profile = Table::new("example-2-1", vec!["t".into(), "u".into()]);
        for &t in g.nodes() {
            profile.push(vec![t, blowup::singular_control(t)]);
        }
        let sizes: Vec<usize> = (0..4).map(|k| cfg.blowup_n << k).collect();
        let d = blowup::blowup_dichotomy(
            &sizes,
            cfg.blowup_grading,
            cfg.strong_beta,
            cfg.beta,
            tol.min_growth,
            tol.mild_change,
        )?;
        report.checks.push(Check::at_least(
            "low-order growth",
            "|X(1)| grows without bound when the order is at most 1/2, finest over coarsest",
            d.growth,
            tol.min_growth,
        ));
        report.checks.push(Check::at_most(
            "high-order stability",
            "|X(1)| settles when the order exceeds 1/2, largest relative change",
            d.mild_change,
            tol.mild_change,
        ));
        let mut dich = Table::new(
            "example-2-1-dichotomy",
            vec!["nodes".into(), "terminal_low_order".into(), "terminal_high_order".into()],
        );
        for (k, &n) in sizes.iter().enumerate() {
            dich.push(vec![n as f64, d.strong[k], d.mild[k]]);
        }
        report.tables.push(profile);
        report.tables.push(dich);
        timer.lap(&mut report, "quadrature");
        Ok(report)
    }
}

struct Reduction;

impl Scenario for Reduction {
    fn name(&self) -> &'static str {
        "reduction"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<ScenarioReport> {
        let cfg = ctx.config;
        let tol = &cfg.tolerances;
        let mut report = ScenarioReport::new(self.name());
        let mut timer = Timer::start();
        let inst = instantiate(cfg)?;
        let model = build_model(ctx, cfg, &inst, cfg.n)?;
        let dlq = &model.dlq;
        let w = &dlq.norm_weights;
        let oracle = solve_open_loop(dlq)?;
        let hat = build_hat_system(&model.problem, &model.cost)?;
        let reduced = solve_open_loop(&hat.model.dlq)?;
        let j = dlq.cost(&oracle);
        let jh = hat.model.dlq.cost(&reduced) + hat.offset;
        let scale = if j == 0.0 { 1.0 } else { j.abs() };
        report.checks.push(Check::at_most(
            "reduced optimal value",
            "optimal value of the reduced problem plus its constant offset equals the original",
            (j - jh).abs() / scale,
            tol.reduced_value,
        ));
        timer.lap(&mut report, "reduction");
        let general = control_registry()
            .create("general-feedback", &control_settings(cfg))?
            .control(&model, &oracle)?;
        report.checks.push(Check::at_most(
            "general feedback vs oracle",
            "feedback through the reduced system equals the optimum",
            rel_dist(&oracle, &general, w),
            tol.general_feedback,
        ));
        timer.lap(&mut report, "general feedback");

        let m = dlq.control_dim;
        let mut header = vec!["t".to_string()];
        header.extend(component_columns("u_oracle_", m));
        header.extend(component_columns("u_general_", m));
        header.extend(component_columns("v_reduced_", m));
        header.push("gap".into());
        let mut table = Table::new("reduction", header);
        for i in 0..dlq.nodes() {
            let mut row = vec![model.grid().t(i)];
            row.extend(oracle.at(i).iter());
            row.extend(general.at(i).iter());
            row.extend(reduced.at(i).iter());
            row.push((general.at(i) - oracle.at(i)).norm());
            table.push(row);
        }
        report.tables.push(table);
        Ok(report)
    }
}
