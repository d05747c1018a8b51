//! Run configuration: a flat `key = value` document.
//!
//! Strings are quoted, numbers bare. Matrices and vectors are written row-major as a
//! comma-separated string (`a = "1, 0, 0, 1"`) or as an array of numbers. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::error::{CliError, Result};

pub const LQ_SCENARIOS: [&str; 3] = ["equivalence", "fredholm-methods", "reduction"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridChoice {
    Uniform,
    Graded { exponent: f64 },
}

impl GridChoice {
    pub fn kind(self) -> vlq_core::GridKind {
        match self {
            GridChoice::Uniform => vlq_core::GridKind::Uniform,
            GridChoice::Graded { exponent } => vlq_core::GridKind::Graded { exponent },
        }
    }
}

/// Constant coefficient or weight given inline, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InlineMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl InlineMatrix {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Inline overrides; anything left out keeps the catalog entry's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub a: Option<InlineMatrix>,
    pub b: Option<InlineMatrix>,
    pub phi: Option<InlineMatrix>,
    pub q: Option<InlineMatrix>,
    pub s: Option<InlineMatrix>,
    pub r: Option<InlineMatrix>,
    pub q_lin: Option<InlineMatrix>,
    pub rho: Option<InlineMatrix>,
    pub g: Option<InlineMatrix>,
    pub g_lin: Option<InlineMatrix>,
    pub delta: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub maximum_principle: f64,
    pub abstract_causal: f64,
    pub feedback: f64,
    pub general_feedback: f64,
    pub reduced_value: f64,
    pub resolvent_residual: f64,
    pub series: f64,
    pub energy: f64,
    pub mild_change: f64,
    pub min_growth: f64,
    pub optimality: f64,
    pub derivative: f64,
    pub coercivity: f64,
    pub hierarchy_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            maximum_principle: 1e-5,
            abstract_causal: 1e-8,
            feedback: 1e-6,
            general_feedback: 1e-6,
            reduced_value: 1e-8,
            resolvent_residual: 1e-3,
            series: 1e-6,
            energy: 0.02,
            mild_change: 0.05,
            min_growth: 2.0,
            optimality: 1e-10,
            derivative: 1e-6,
            coercivity: 1e-6,
            hierarchy_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: String,
    pub seed: u64,
    pub state_dim: Option<usize>,
    pub control_dim: Option<usize>,
    pub beta: f64,
    pub horizon: f64,
    /// Number of grid nodes.
    pub n: usize,
    pub grid: GridChoice,
    pub scenario: String,
    pub solver: String,
    pub subspace_dim: usize,
    pub iterations: usize,
    pub trials: usize,
    pub blowup_n: usize,
    pub blowup_grading: f64,
    pub strong_beta: f64,
    pub perturbations: usize,
    pub output_dir: PathBuf,
    pub overrides: Overrides,
    pub tolerances: Tolerances,
}

impl RunConfig {
    /// Defaults for everything but the required keys.
    pub fn new(problem: &str, beta: f64, n: usize, scenario: &str) -> Self {
        Self {
            problem: problem.to_string(),
            seed: 0,
            state_dim: None,
            control_dim: None,
            beta,
            horizon: 1.0,
            n,
            grid: GridChoice::Uniform,
            scenario: scenario.to_string(),
            solver: "direct".into(),
            subspace_dim: 16,
            iterations: 2,
            trials: 20,
            blowup_n: 64,
            blowup_grading: 6.0,
            strong_beta: 0.4,
            perturbations: 100,
            output_dir: PathBuf::from("out"),
            overrides: Overrides::default(),
            tolerances: Tolerances::default(),
        }
    }

    /// SHA-256 of the canonical form; ignores comments, key order and the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn needs_lq(&self) -> bool {
        LQ_SCENARIOS.contains(&self.scenario.as_str())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNumbers {
    Text(String),
    List(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Spanned<String>,
    seed: Option<u64>,
    state_dim: Option<Spanned<usize>>,
    control_dim: Option<Spanned<usize>>,
    beta: Spanned<f64>,
    #[serde(rename = "T")]
    horizon: Option<Spanned<f64>>,
    n: Spanned<usize>,
    grid: Option<Spanned<String>>,
    grading: Option<Spanned<f64>>,
    scenario: Spanned<String>,
    solver: Option<String>,
    subspace_dim: Option<Spanned<usize>>,
    iterations: Option<usize>,
    trials: Option<Spanned<usize>>,
    blowup_n: Option<Spanned<usize>>,
    blowup_grading: Option<Spanned<f64>>,
    strong_beta: Option<Spanned<f64>>,
    perturbations: Option<usize>,
    output_dir: Option<String>,
    a: Option<Spanned<RawNumbers>>,
    b: Option<Spanned<RawNumbers>>,
    phi: Option<Spanned<RawNumbers>>,
    q: Option<Spanned<RawNumbers>>,
    s: Option<Spanned<RawNumbers>>,
    r: Option<Spanned<RawNumbers>>,
    q_lin: Option<Spanned<RawNumbers>>,
    rho: Option<Spanned<RawNumbers>>,
    g: Option<Spanned<RawNumbers>>,
    g_lin: Option<Spanned<RawNumbers>>,
    delta: Option<Spanned<f64>>,
    tol_maximum_principle: Option<f64>,
    tol_abstract_causal: Option<f64>,
    tol_feedback: Option<f64>,
    tol_general_feedback: Option<f64>,
    tol_reduced_value: Option<f64>,
    tol_resolvent_residual: Option<f64>,
    tol_series: Option<f64>,
    tol_energy: Option<f64>,
    tol_mild_change: Option<f64>,
    tol_min_growth: Option<f64>,
    tol_optimality: Option<f64>,
    tol_derivative: Option<f64>,
    tol_coercivity: Option<f64>,
    tol_hierarchy_fraction: Option<f64>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Validator<'a> {
    text: &'a str,
}

impl Validator<'_> {
    fn fail<T>(&self, span: std::ops::Range<usize>, field: &str, msg: impl Into<String>) -> Result<T> {
        Err(CliError::Config {
            line: line_of(self.text, span.start),
            field: field.to_string(),
            message: msg.into(),
        })
    }

    fn numbers(&self, field: &str, raw: &Spanned<RawNumbers>) -> Result<Vec<f64>> {
        match raw.get_ref() {
            RawNumbers::List(v) => Ok(v.clone()),
            RawNumbers::Text(s) => s
                .split(',')
                .map(|item| item.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .or_else(|_| {
                    self.fail(raw.span(), field, format!("`{s}` is not a comma-separated list of numbers"))
                }),
        }
    }

    fn matrix(
        &self,
        field: &str,
        raw: &Option<Spanned<RawNumbers>>,
        rows: usize,
        cols: usize,
    ) -> Result<Option<InlineMatrix>> {
        let Some(raw) = raw else { return Ok(None) };
        let values = self.numbers(field, raw)?;
        if values.len() != rows * cols {
            return self.fail(
                raw.span(),
                field,
                format!("expected {rows}x{cols} = {} entries, found {}", rows * cols, values.len()),
            );
        }
        if values.iter().any(|v| !v.is_finite()) {
            return self.fail(raw.span(), field, "entries must be finite");
        }
        Ok(Some(InlineMatrix { rows, cols, values }))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut cfg = parse_config(&text)?;
    if cfg.output_dir.is_relative() {
        if let Some(parent) = path.parent() {
            cfg.output_dir = parent.join(&cfg.output_dir);
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
        CliError::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    let v = Validator { text };
    let mut cfg = RunConfig::new(raw.problem.get_ref(), *raw.beta.get_ref(), *raw.n.get_ref(), raw.scenario.get_ref());

    let beta = *raw.beta.get_ref();
    if !(beta > 0.0 && beta < 1.0) {
        return v.fail(raw.beta.span(), "beta", format!("must lie in (0, 1), got {beta}"));
    }
    if cfg.needs_lq() && beta <= 0.5 {
        return v.fail(
            raw.beta.span(),
            "beta",
            format!(
                "scenario `{}` needs beta > 1/2 so that the state is continuous at the horizon \
                 and the terminal cost is defined; got {beta}",
                cfg.scenario
            ),
        );
    }
    if *raw.n.get_ref() < 3 {
        return v.fail(raw.n.span(), "n", "a grid needs at least 3 nodes");
    }
    if let Some(h) = &raw.horizon {
        if !(*h.get_ref() > 0.0 && h.get_ref().is_finite()) {
            return v.fail(h.span(), "T", "horizon must be positive");
        }
        cfg.horizon = *h.get_ref();
    }
    let grading = match &raw.grading {
        Some(g) if !(*g.get_ref() >= 1.0 && g.get_ref().is_finite()) => {
            return v.fail(g.span(), "grading", "exponent must be at least 1")
        }
        Some(g) => Some(*g.get_ref()),
        None => None,
    };
    cfg.grid = match raw.grid.as_ref().map(|g| (g.get_ref().as_str(), g.span())) {
        None | Some(("uniform", _)) => {
            if let Some(g) = &raw.grading {
                return v.fail(g.span(), "grading", "only graded grids take an exponent");
            }
            GridChoice::Uniform
        }
        Some(("graded", _)) => GridChoice::Graded {
            exponent: grading.unwrap_or(2.0),
        },
        Some((other, span)) => {
            return v.fail(span, "grid", format!("unknown grid `{other}`; valid: uniform, graded"))
        }
    };
    if let Some(seed) = raw.seed {
        cfg.seed = seed;
    }
    for (field, value) in [("state_dim", &raw.state_dim), ("control_dim", &raw.control_dim)] {
        if let Some(d) = value {
            if *d.get_ref() == 0 {
                return v.fail(d.span(), field, "dimension must be positive");
            }
        }
    }
    cfg.state_dim = raw.state_dim.as_ref().map(|d| *d.get_ref());
    cfg.control_dim = raw.control_dim.as_ref().map(|d| *d.get_ref());
    if let Some(s) = raw.solver {
        cfg.solver = s;
    }
    if let Some(d) = &raw.subspace_dim {
        if *d.get_ref() < 2 {
            return v.fail(d.span(), "subspace_dim", "a hat basis needs at least 2 functions");
        }
        cfg.subspace_dim = *d.get_ref();
    }
    if let Some(k) = raw.iterations {
        cfg.iterations = k;
    }
    if let Some(t) = &raw.trials {
        if *t.get_ref() == 0 {
            return v.fail(t.span(), "trials", "need at least one trial");
        }
        cfg.trials = *t.get_ref();
    }
    if let Some(b) = &raw.blowup_n {
        if *b.get_ref() < 3 {
            return v.fail(b.span(), "blowup_n", "a grid needs at least 3 nodes");
        }
        cfg.blowup_n = *b.get_ref();
    }
    if let Some(g) = &raw.blowup_grading {
        if !(*g.get_ref() >= 1.0) {
            return v.fail(g.span(), "blowup_grading", "exponent must be at least 1");
        }
        cfg.blowup_grading = *g.get_ref();
    }
    if let Some(b) = &raw.strong_beta {
        if !(*b.get_ref() > 0.0 && *b.get_ref() <= 0.5) {
            return v.fail(b.span(), "strong_beta", "must lie in (0, 1/2]");
        }
        cfg.strong_beta = *b.get_ref();
    }
    if let Some(p) = raw.perturbations {
        cfg.perturbations = p;
    }
    if let Some(o) = raw.output_dir {
        cfg.output_dir = PathBuf::from(o);
    }

    let n = cfg.state_dim.unwrap_or(1);
    let m = cfg.control_dim.unwrap_or(1);
    let ov = &mut cfg.overrides;
    ov.a = v.matrix("a", &raw.a, n, n)?;
    ov.b = v.matrix("b", &raw.b, n, m)?;
    ov.phi = v.matrix("phi", &raw.phi, n, 1)?;
    ov.q = v.matrix("q", &raw.q, n, n)?;
    ov.s = v.matrix("s", &raw.s, m, n)?;
    ov.r = v.matrix("r", &raw.r, m, m)?;
    ov.q_lin = v.matrix("q_lin", &raw.q_lin, n, 1)?;
    ov.rho = v.matrix("rho", &raw.rho, m, 1)?;
    ov.g = v.matrix("g", &raw.g, n, n)?;
    ov.g_lin = v.matrix("g_lin", &raw.g_lin, n, 1)?;
    if let Some(d) = &raw.delta {
        if !(*d.get_ref() > 0.0) {
            return v.fail(d.span(), "delta", "coercivity floor must be positive");
        }
        ov.delta = Some(*d.get_ref());
    }

    let t = &mut cfg.tolerances;
    let pairs = [
        (&mut t.maximum_principle, raw.tol_maximum_principle),
        (&mut t.abstract_causal, raw.tol_abstract_causal),
        (&mut t.feedback, raw.tol_feedback),
        (&mut t.general_feedback, raw.tol_general_feedback),
        (&mut t.reduced_value, raw.tol_reduced_value),
        (&mut t.resolvent_residual, raw.tol_resolvent_residual),
        (&mut t.series, raw.tol_series),
        (&mut t.energy, raw.tol_energy),
        (&mut t.mild_change, raw.tol_mild_change),
        (&mut t.min_growth, raw.tol_min_growth),
        (&mut t.optimality, raw.tol_optimality),
        (&mut t.derivative, raw.tol_derivative),
        (&mut t.coercivity, raw.tol_coercivity),
        (&mut t.hierarchy_fraction, raw.tol_hierarchy_fraction),
    ];
    for (slot, value) in pairs {
        if let Some(x) = value {
            *slot = x;
        }
    }
    Ok(cfg)
}
