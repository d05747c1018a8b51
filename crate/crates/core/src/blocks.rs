//! Node-major storage for vector trajectories and lower-triangular block kernels.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};

use crate::error::{dimension, Result};

/// A vector-valued function sampled at grid nodes, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dim: usize,
    values: DVector<f64>,
}

impl GridFunction {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            dim,
            values: DVector::zeros(nodes * dim),
        }
    }

    pub fn from_flat(dim: usize, values: DVector<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(dimension(format!(
                "flat length {} is not a multiple of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn from_fn(nodes: usize, dim: usize, mut f: impl FnMut(usize) -> DVector<f64>) -> Self {
        let mut out = Self::zeros(nodes, dim);
        for i in 0..nodes {
            let v = f(i);
            assert_eq!(v.len(), dim, "sample dimension");
            out.set(i, &v);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn at(&self, i: usize) -> DVectorView<'_, f64> {
        self.values.rows(i * self.dim, self.dim)
    }

    pub fn set(&mut self, i: usize, v: &DVector<f64>) {
        self.values.rows_mut(i * self.dim, self.dim).copy_from(v);
    }

    pub fn add_at(&mut self, i: usize, v: &DVector<f64>) {
        let mut r = self.values.rows_mut(i * self.dim, self.dim);
        r += v;
    }

    pub fn flat(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn flat_mut(&mut self) -> &mut DVector<f64> {
        &mut self.values
    }

    pub fn into_flat(self) -> DVector<f64> {
        self.values
    }

    /// Weighted L² norm with one weight per node.
    pub fn weighted_norm(&self, weights: &[f64]) -> f64 {
        self.weighted_dot(self, weights).max(0.0).sqrt()
    }

    pub fn weighted_dot(&self, other: &GridFunction, weights: &[f64]) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate().take(self.nodes()) {
            acc += w * self.at(i).dot(&other.at(i));
        }
        acc
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction {
            dim: self.dim,
            values: &self.values - &other.values,
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        GridFunction {
            dim: self.dim,
            values: &self.values + &other.values,
        }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            dim: self.dim,
            values: &self.values * c,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Blocks `(i, j)` with `j <= i` of a kernel sampled on node pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBlocks {
    nodes: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[inline]
pub(crate) fn tri(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl LowerBlocks {
    pub fn zeros(nodes: usize, rows: usize, cols: usize) -> Self {
        Self {
            nodes,
            rows,
            cols,
            data: vec![0.0; nodes * (nodes + 1) / 2 * rows * cols],
        }
    }

    pub fn from_fn(
        nodes: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> DMatrix<f64>,
    ) -> Self {
        let mut out = Self::zeros(nodes, rows, cols);
        for i in 0..nodes {
            for j in 0..=i {
                out.set(i, j, &f(i, j));
            }
        }
        out
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Column-major block view; panics when `j > i`.
    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        assert!(j <= i, "block ({i},{j}) above the diagonal");
        let len = self.rows * self.cols;
        let off = tri(i, j) * len;
        DMatrixView::from_slice(&self.data[off..off + len], self.rows, self.cols)
    }

    pub fn set(&mut self, i: usize, j: usize, m: &DMatrix<f64>) {
        assert!(j <= i, "block ({i},{j}) above the diagonal");
        assert_eq!(m.shape(), (self.rows, self.cols), "block shape");
        let len = self.rows * self.cols;
        let off = tri(i, j) * len;
        self.data[off..off + len].copy_from_slice(m.as_slice());
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense block matrix `(nodes*rows) x (nodes*cols)` from lower blocks, zero above the diagonal.
pub fn dense_lower(blocks: &LowerBlocks) -> DMatrix<f64> {
    let (r, c) = blocks.shape();
    let n = blocks.nodes();
    let mut out = DMatrix::zeros(n * r, n * c);
    for i in 0..n {
        for j in 0..=i {
            out.view_mut((i * r, j * c), (r, c)).copy_from(&blocks.block(i, j));
        }
    }
    out
}

/// Expands one weight per node into one weight per component.
pub fn expand_weights(weights: &[f64], dim: usize) -> DVector<f64> {
    DVector::from_iterator(
        weights.len() * dim,
        weights.iter().flat_map(|w| std::iter::repeat_n(*w, dim)),
    )
}
