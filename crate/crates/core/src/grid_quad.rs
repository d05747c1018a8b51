//! Time grids and product integration against the weakly singular factor `(t-s)^(beta-1)`.

use std::num::NonZeroUsize;

use gauss_quad::GaussJacobi;

use crate::blocks::tri;
use crate::error::{argument, dimension, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    Uniform,
    /// Power-law clustering toward both endpoints.
    Graded { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    horizon: f64,
    kind: GridKind,
    trapezoid: Vec<f64>,
}

pub fn build_grid(n: usize, horizon: f64, kind: GridKind) -> Result<Grid> {
    Grid::build(n, horizon, kind)
}

impl Grid {
    pub fn build(n: usize, horizon: f64, kind: GridKind) -> Result<Grid> {
        if n < 3 {
            return Err(argument(format!("a grid needs at least 3 nodes, got {n}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(argument(format!("horizon must be positive, got {horizon}")));
        }
        let last = (n - 1) as f64;
        let nodes: Vec<f64> = match kind {
            GridKind::Uniform => (0..n).map(|k| horizon * k as f64 / last).collect(),
            GridKind::Graded { exponent } => {
                if !(exponent.is_finite() && exponent >= 1.0) {
                    return Err(argument(format!(
                        "grading exponent must be at least 1, got {exponent}"
                    )));
                }
                (0..n)
                    .map(|k| {
                        let x = k as f64 / last;
                        if 2 * k < n {
                            horizon * 0.5 * (2.0 * x).powf(exponent)
                        } else {
                            horizon - horizon * 0.5 * (2.0 - 2.0 * x).powf(exponent)
                        }
                    })
                    .collect()
            }
        };
        let mut grid = Self::from_nodes(nodes)?;
        grid.kind = kind;
        Ok(grid)
    }

    /// Grid from explicit nodes; the first must be 0 and the sequence strictly increasing.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Grid> {
        if nodes.len() < 3 {
            return Err(argument(format!(
                "a grid needs at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[0] != 0.0 {
            return Err(argument("first grid node must be 0"));
        }
        if let Some(k) = nodes.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(argument(format!(
                "grid nodes must be strictly increasing (fails after node {k}); the grading may be too strong for this size"
            )));
        }
        let n = nodes.len();
        let mut trapezoid = vec![0.0; n];
        for k in 0..n - 1 {
            let h = nodes[k + 1] - nodes[k];
            trapezoid[k] += 0.5 * h;
            trapezoid[k + 1] += 0.5 * h;
        }
        Ok(Grid {
            horizon: nodes[n - 1],
            nodes,
            kind: GridKind::Uniform,
            trapezoid,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn last(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn t(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Trapezoid weights defining the discrete L² inner product.
    pub fn weights(&self) -> &[f64] {
        &self.trapezoid
    }

    pub fn min_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Trapezoid weights of the truncated interval `[0, t_i]`, restricted to nodes `0..=i`.
    pub fn row_trapezoid(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j > i {
            return 0.0;
        }
        let left = if j > 0 { self.nodes[j] - self.nodes[j - 1] } else { 0.0 };
        let right = if j < i { self.nodes[j + 1] - self.nodes[j] } else { 0.0 };
        0.5 * (left + right)
    }

    /// Index of the first node at or after `s`.
    pub fn index_at_or_after(&self, s: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon;
        self.nodes.iter().position(|&x| x >= s - tol)
    }

    /// Each interval split into `parts` equal pieces.
    pub fn subdivided(&self, parts: usize) -> Result<Grid> {
        if parts == 0 {
            return Err(argument("subdivision count must be positive"));
        }
        let mut nodes = Vec::with_capacity(self.last() * parts + 1);
        for w in self.nodes.windows(2) {
            let h = w[1] - w[0];
            for p in 0..parts {
                nodes.push(w[0] + h * p as f64 / parts as f64);
            }
        }
        nodes.push(self.horizon);
        Self::from_nodes(nodes)
    }
}

/// Moments of `(t-s)^(beta-1)` against the two hat pieces on `[a, b]`, with `b <= t`.
///
/// Returns the weights attached to the left and right endpoints.
pub fn interval_weights(t: f64, a: f64, b: f64, beta: f64) -> (f64, f64) {
    let h = b - a;
    let big = t - a;
    let small = (t - b).max(0.0);
    let ratio = h / big;
    let (m0, m1) = if ratio < 0.5 {
        // binomial series of (big - x)^(beta-1) avoids cancellation for short, distant intervals
        let mut c = 1.0;
        let mut rk = 1.0;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for k in 0..200 {
            let kf = k as f64;
            let t0 = c * rk / (kf + 1.0);
            s0 += t0;
            s1 += c * rk / (kf + 2.0);
            if t0 < 1e-18 * s0 {
                break;
            }
            c *= (kf + 1.0 - beta) / (kf + 1.0);
            rk *= ratio;
        }
        let scale = big.powf(beta - 1.0);
        (scale * h * s0, scale * h * h * s1)
    } else {
        let m0 = (big.powf(beta) - small.powf(beta)) / beta;
        let m1 = big * m0 - (big.powf(beta + 1.0) - small.powf(beta + 1.0)) / (beta + 1.0);
        (m0, m1)
    };
    let right = m1 / h;
    (m0 - right, right)
}

/// Product-integration weights for piecewise-linear integrands.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularWeights {
    beta: f64,
    nodes: usize,
    data: Vec<f64>,
}

pub fn product_weights(grid: &Grid, beta: f64) -> Result<SingularWeights> {
    SingularWeights::new(grid, beta)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(argument(format!("singularity order beta must lie in (0,1), got {beta}")))
    }
}

impl SingularWeights {
    pub fn new(grid: &Grid, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let n = grid.len();
        let x = grid.nodes();
        let mut data = vec![0.0; n * (n + 1) / 2];
        for i in 1..n {
            let row = &mut data[tri(i, 0)..tri(i, 0) + i + 1];
            for k in 0..i {
                let (l, r) = interval_weights(x[i], x[k], x[k + 1], beta);
                row[k] += l;
                row[k + 1] += r;
            }
        }
        Ok(Self {
            beta,
            nodes: n,
            data,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Weight of node `j` in the integral up to node `i`; zero when `j > i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[tri(i, j)]
        }
    }

    /// Weights of row `i`, nodes `0..=i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[tri(i, 0)..tri(i, 0) + i + 1]
    }

    pub fn integrate(&self, i: usize, g: &[f64]) -> Result<f64> {
        integrate_singular(self, i, g)
    }
}

/// Approximates `∫_0^{t_i} (t_i-s)^(beta-1) g(s) ds` from node samples of `g`.
pub fn integrate_singular(weights: &SingularWeights, i: usize, g: &[f64]) -> Result<f64> {
    if g.len() != weights.nodes {
        return Err(dimension(format!(
            "sample count {} differs from grid size {}",
            g.len(),
            weights.nodes
        )));
    }
    if i >= weights.nodes {
        return Err(argument(format!("node index {i} out of range")));
    }
    Ok(weights.row(i).iter().zip(g).map(|(w, v)| w * v).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoungBoundReport {
    pub passed: bool,
    pub l2_norm: f64,
    pub l2_bound: f64,
    /// Present only when beta > 1/2.
    pub sup_norm: Option<f64>,
    pub sup_bound: Option<f64>,
}

const YOUNG_SLACK: f64 = 1.01;

/// Checks the L² and sup-norm convolution bounds for `eta(t,s) = ∫_s^t (t-r)^(beta-1) theta0(r) dr`.
///
/// `s` is snapped to the first node at or after it.
pub fn check_young_bound(
    grid: &Grid,
    weights: &SingularWeights,
    theta0: &[f64],
    s: f64,
) -> Result<YoungBoundReport> {
    if theta0.len() != grid.len() || weights.nodes != grid.len() {
        return Err(dimension("theta0 and weights must match the grid"));
    }
    if !(0.0..grid.horizon()).contains(&s) {
        return Err(argument(format!("s = {s} outside [0, T)")));
    }
    let beta = weights.beta;
    let k = grid
        .index_at_or_after(s)
        .ok_or_else(|| argument("s beyond the last node"))?;
    let x = grid.nodes();
    let n = grid.len();
    let mut eta = vec![0.0; n];
    for i in k + 1..n {
        let mut acc = 0.0;
        for m in k..i {
            let (l, r) = interval_weights(x[i], x[m], x[m + 1], beta);
            acc += l * theta0[m] + r * theta0[m + 1];
        }
        eta[i] = acc;
    }
    let tail = |f: &dyn Fn(usize) -> f64| -> f64 {
        (k..n - 1)
            .map(|m| 0.5 * (x[m + 1] - x[m]) * (f(m) + f(m + 1)))
            .sum::<f64>()
    };
    let l2_norm = tail(&|m| eta[m] * eta[m]).sqrt();
    let theta_norm = tail(&|m| theta0[m] * theta0[m]).sqrt();
    let span = grid.horizon() - x[k];
    let l2_bound = span.powf(beta) / beta * theta_norm;
    let mut passed = l2_norm <= YOUNG_SLACK * l2_bound + 1e-300;
    let (sup_norm, sup_bound) = if beta > 0.5 {
        let sup = eta[k..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bound = span.powf(beta - 0.5) / (2.0 * beta - 1.0).sqrt() * theta_norm;
        passed &= sup <= YOUNG_SLACK * bound + 1e-300;
        (Some(sup), Some(bound))
    } else {
        (None, None)
    };
    Ok(YoungBoundReport {
        passed,
        l2_norm,
        l2_bound,
        sup_norm,
        sup_bound,
    })
}

/// Gauss–Jacobi rule on `[0,1]` for the weight `(1-x)^left * x^right`.
#[derive(Debug, Clone)]
pub struct JacobiRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl JacobiRule {
    /// `points` is rounded up to an even count.
    pub fn new(points: usize, left: f64, right: f64) -> Result<Self> {
        if !(left > -1.0 && right > -1.0) {
            return Err(argument("Jacobi exponents must exceed -1"));
        }
        let deg = points.max(2).next_multiple_of(2);
        let rule = GaussJacobi::new(
            NonZeroUsize::new(deg).expect("nonzero degree"),
            left.try_into().map_err(|_| argument("Jacobi exponent"))?,
            right.try_into().map_err(|_| argument("Jacobi exponent"))?,
        );
        let scale = 2f64.powf(-(left + right + 1.0));
        let nodes = rule.nodes().map(|x| 0.5 * (1.0 + x)).collect();
        let weights = rule.weights().map(|w| w * scale).collect();
        Ok(Self { nodes, weights })
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}
