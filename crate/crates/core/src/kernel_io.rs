//! Plain-text storage for computed kernels.
//!
//! Factored resolvent:
//! ```text
//! factored-kernel nodes=<N> beta=<β> dim=<d>
//! times <t_0> ... <t_{N-1}>
//! singular_coeff
//! <one line per block (i,j), j <= i, rows of blocks in order, block entries row-major>
//! regular_part
//! <same layout>
//! ```
//! Feedback kernel:
//! ```text
//! feedback-kernel sigma=<σ> method=<name> nodes=<N> beta=<β> dim=<d> residual=<r>
//! times <t_0> ... <t_{N-1}>
//! <N*d lines, each one row of the dense kernel matrix>
//! ```
//! Numbers use the shortest form that parses back to the same `f64`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::blocks::LowerBlocks;
use crate::error::{Error, Result};
use crate::fredholm::FeedbackKernel;
use crate::grid_quad::{Grid, SingularWeights};
use crate::volterra::FactoredKernel;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:e}").expect("write to string");
    }
    out.push('\n');
}

fn push_blocks(out: &mut String, blocks: &LowerBlocks) {
    let (r, c) = blocks.shape();
    for i in 0..blocks.nodes() {
        for j in 0..=i {
            let b = blocks.block(i, j);
            push_row(out, (0..r).flat_map(|p| (0..c).map(move |q| (p, q))).map(|(p, q)| b[(p, q)]));
        }
    }
}

pub fn write_factored<W: Write>(kernel: &FactoredKernel, mut out: W) -> Result<()> {
    let grid = kernel.grid();
    let (d, _) = kernel.shape();
    let mut s = String::new();
    writeln!(s, "factored-kernel nodes={} beta={:e} dim={d}", grid.len(), kernel.beta()).unwrap();
    s.push_str("times ");
    push_row(&mut s, grid.nodes().iter().copied());
    s.push_str("singular_coeff\n");
    push_blocks(&mut s, kernel.singular_coeff());
    s.push_str("regular_part\n");
    push_blocks(&mut s, kernel.regular_part());
    out.write_all(s.as_bytes()).map_err(io_err)
}

pub fn write_feedback<W: Write>(kernel: &FeedbackKernel, mut out: W) -> Result<()> {
    let mut s = String::new();
    writeln!(
        s,
        "feedback-kernel sigma={} method={} nodes={} beta={:e} dim={} residual={:e}",
        kernel.sigma,
        kernel.method,
        kernel.grid.len(),
        kernel.beta,
        kernel.dim,
        kernel.residual
    )
    .unwrap();
    s.push_str("times ");
    push_row(&mut s, kernel.grid.nodes().iter().copied());
    for r in 0..kernel.m.nrows() {
        push_row(&mut s, kernel.m.row(r).iter().copied());
    }
    out.write_all(s.as_bytes()).map_err(io_err)
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<(usize, String)> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok((self.number, line.map_err(io_err)?)),
            None => Err(format_err(format!("unexpected end of file at line {}", self.number))),
        }
    }

    fn numbers(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (no, line) = self.next_line()?;
        parse_numbers(&line, expected, no)
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let (no, line) = self.next_line()?;
        if line.trim() == word {
            Ok(())
        } else {
            Err(format_err(format!("line {no}: expected `{word}`")))
        }
    }
}

fn parse_numbers(text: &str, expected: usize, line: usize) -> Result<Vec<f64>> {
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| format_err(format!("line {line}: `{t}` is not a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(format_err(format!(
            "line {line}: expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

fn header(line: &str, tag: &str, no: usize) -> Result<HashMap<String, String>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(format_err(format!("line {no}: expected a `{tag}` header")));
    }
    parts
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format_err(format!("line {no}: malformed field `{p}`")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(fields: &HashMap<String, String>, key: &str) -> Result<T> {
    let raw = fields
        .get(key)
        .ok_or_else(|| format_err(format!("header lacks `{key}`")))?;
    raw.parse()
        .map_err(|_| format_err(format!("header field `{key}` has invalid value `{raw}`")))
}

fn read_grid<R: BufRead>(lines: &mut Lines<R>, nodes: usize) -> Result<Arc<Grid>> {
    let (no, line) = lines.next_line()?;
    let rest = line
        .strip_prefix("times")
        .ok_or_else(|| format_err(format!("line {no}: expected node times")))?;
    let times = parse_numbers(rest, nodes, no)?;
    Ok(Arc::new(Grid::from_nodes(times)?))
}

fn read_blocks<R: BufRead>(lines: &mut Lines<R>, nodes: usize, dim: usize) -> Result<LowerBlocks> {
    let mut out = LowerBlocks::zeros(nodes, dim, dim);
    for i in 0..nodes {
        for j in 0..=i {
            let v = lines.numbers(dim * dim)?;
            out.set(i, j, &DMatrix::from_row_slice(dim, dim, &v));
        }
    }
    Ok(out)
}

pub fn read_factored<R: BufRead>(input: R) -> Result<FactoredKernel> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    let (no, line) = lines.next_line()?;
    let fields = header(&line, "factored-kernel", no)?;
    let nodes: usize = field(&fields, "nodes")?;
    let beta: f64 = field(&fields, "beta")?;
    let dim: usize = field(&fields, "dim")?;
    let grid = read_grid(&mut lines, nodes)?;
    lines.keyword("singular_coeff")?;
    let coeff = read_blocks(&mut lines, nodes, dim)?;
    lines.keyword("regular_part")?;
    let regular = read_blocks(&mut lines, nodes, dim)?;
    let weights = Arc::new(SingularWeights::new(&grid, beta)?);
    FactoredKernel::new(grid, weights, coeff, regular)
}

pub fn read_feedback<R: BufRead>(input: R) -> Result<FeedbackKernel> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    let (no, line) = lines.next_line()?;
    let fields = header(&line, "feedback-kernel", no)?;
    let nodes: usize = field(&fields, "nodes")?;
    let dim: usize = field(&fields, "dim")?;
    let grid = read_grid(&mut lines, nodes)?;
    let size = nodes * dim;
    let mut m = DMatrix::zeros(size, size);
    for r in 0..size {
        let row = lines.numbers(size)?;
        for (c, v) in row.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(FeedbackKernel {
        sigma: field(&fields, "sigma")?,
        method: field(&fields, "method")?,
        beta: field(&fields, "beta")?,
        dim,
        grid,
        m,
        residual: field(&fields, "residual")?,
        history: Vec::new(),
    })
}
