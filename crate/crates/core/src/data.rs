//! Sparse example storage and LIBSVM ingestion.
//!
//! A [`Dataset`] holds the example matrix in row-compressed form together with
//! the per-example squared norms and the sparsity statistics used by the
//! step-size and sampling formulas.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Borrowed view of one sparse example.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl Row<'_> {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, &x)| x * w[j])
            .sum()
    }

    /// `w += scale * x`
    pub fn axpy(&self, scale: f64, w: &mut [f64]) {
        for (&j, &x) in self.indices.iter().zip(self.values) {
            w[j] += scale * x;
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Immutable sparse dataset (row-compressed) with labels and cached statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    row_ptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
    sq_norms: Vec<f64>,
    max_example_nnz: usize,
    max_feature_degree: usize,
}

/// Row scaling applied before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    #[default]
    None,
    UnitNorm,
}

impl std::str::FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Scaling::None),
            "unit_norm" | "unit-norm" => Ok(Scaling::UnitNorm),
            other => Err(Error::Config(format!("unknown scaling mode '{other}'"))),
        }
    }
}

impl Dataset {
    /// Builds a dataset from sparse rows given as `(index, value)` pairs with
    /// 0-based indices. Explicit zeros are dropped. `dim` overrides the
    /// feature dimension, which otherwise is one past the largest index.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, dim: Option<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let observed = rows
            .iter()
            .filter_map(|r| r.last().map(|&(j, _)| j + 1))
            .max()
            .unwrap_or(0);
        let d = match dim {
            Some(d) if d < observed => {
                return Err(Error::DimensionMismatch(format!(
                    "dimension override {d} is smaller than the largest index {observed}"
                )))
            }
            Some(d) => d,
            None => observed,
        }
        .max(1);

        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(j, x) in row {
                if let Some(p) = prev {
                    if j <= p {
                        return Err(Error::InvalidInput(format!("indices not increasing in row {i}")));
                    }
                }
                if !x.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite value in row {i}")));
                }
                prev = Some(j);
                if x != 0.0 {
                    indices.push(j);
                    values.push(x);
                }
            }
            row_ptr.push(indices.len());
        }
        if let Some((i, _)) = labels.iter().enumerate().find(|(_, y)| !y.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite label in row {i}")));
        }

        let mut ds = Dataset {
            d,
            row_ptr,
            indices,
            values,
            labels,
            sq_norms: Vec::new(),
            max_example_nnz: 0,
            max_feature_degree: 0,
        };
        ds.refresh_stats();
        Ok(ds)
    }

    fn refresh_stats(&mut self) {
        let n = self.n();
        self.sq_norms = (0..n)
            .map(|i| self.row(i).values.iter().map(|x| x * x).sum())
            .collect();
        self.max_example_nnz = (0..n).map(|i| self.row(i).nnz()).max().unwrap_or(0);
        let mut degree = vec![0usize; self.d];
        for &j in &self.indices {
            degree[j] += 1;
        }
        self.max_feature_degree = degree.into_iter().max().unwrap_or(0);
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        Row {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// `v_i = ‖x_i‖²`
    pub fn sq_norms(&self) -> &[f64] {
        &self.sq_norms
    }

    pub fn max_example_nnz(&self) -> usize {
        self.max_example_nnz
    }

    /// Largest number of examples sharing one feature.
    pub fn max_feature_degree(&self) -> usize {
        self.max_feature_degree
    }

    /// True when every label is exactly -1 or +1.
    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|&y| y == 1.0 || y == -1.0)
    }

    /// Margins `x_i^T w` for all examples.
    pub fn margins(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.margins_into(w, &mut out);
        out
    }

    pub fn margins_into(&self, w: &[f64], out: &mut [f64]) {
        for (i, m) in out.iter_mut().enumerate() {
            *m = self.row(i).dot(w);
        }
    }

    /// `Σ_i coef_i x_i`
    pub fn combine(&self, coef: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                self.row(i).axpy(c, &mut out);
            }
        }
        out
    }

    pub fn scale(&self, mode: Scaling) -> Dataset {
        match mode {
            Scaling::None => self.clone(),
            Scaling::UnitNorm => {
                let mut out = self.clone();
                for i in 0..out.n() {
                    let norm = self.sq_norms[i].sqrt();
                    if norm > 0.0 {
                        for x in &mut out.values[out.row_ptr[i]..out.row_ptr[i + 1]] {
                            *x /= norm;
                        }
                    }
                }
                out.refresh_stats();
                out
            }
        }
    }
}

/// Maps binary label conventions onto {-1, +1}: {0,1} and {1,2} are
/// recognised; anything else (regression targets) is left untouched.
pub fn normalize_labels(labels: &mut [f64]) {
    let within = |set: &[f64]| labels.iter().all(|y| set.contains(y));
    if within(&[-1.0, 1.0]) {
        return;
    }
    if within(&[0.0, 1.0]) {
        for y in labels.iter_mut() {
            *y = if *y == 0.0 { -1.0 } else { 1.0 };
        }
    } else if within(&[1.0, 2.0]) {
        for y in labels.iter_mut() {
            *y = if *y == 1.0 { -1.0 } else { 1.0 };
        }
    }
}

/// Parses LIBSVM text (`<label> <idx>:<val> ...`, 1-based strictly increasing indices).
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else { continue };
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let y: f64 = label
            .parse()
            .map_err(|_| err(format!("malformed label '{label}'")))?;
        if !y.is_finite() {
            return Err(err(format!("non-finite label '{label}'")));
        }
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed token '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("malformed index in '{tok}'")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("malformed value in '{tok}'")))?;
            if idx < 1 {
                return Err(err("index < 1".into()));
            }
            if !val.is_finite() {
                return Err(err(format!("non-finite value in '{tok}'")));
            }
            let j = idx - 1;
            if let Some(&(prev, _)) = row.last() {
                if j == prev {
                    return Err(err(format!("duplicate index {idx}")));
                }
                if j < prev {
                    return Err(err("indices not increasing".into()));
                }
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(err(format!("index {idx} exceeds dimension {d}")));
                }
            }
            row.push((j, val));
        }
        rows.push(row);
        labels.push(y);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    normalize_labels(&mut labels);
    Dataset::from_rows(rows, labels, dim)
}

/// Loads a LIBSVM file; names ending in `.gz` are decompressed on the fly.
pub fn load_libsvm(path: &Path, dim: Option<usize>) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(reader), dim)
}

pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for (i, row) in ds.rows().enumerate() {
        write!(out, "{}", ds.labels[i])?;
        for (&j, &x) in row.indices.iter().zip(row.values) {
            write!(out, " {}:{}", j + 1, x)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Random sparse binary classification instance: each entry is present with
/// probability `density` and drawn from N(0,1); every row gets at least one
/// entry. Labels are the sign of a random ground-truth hyperplane.
pub fn synthetic(n: usize, d: usize, density: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("synthetic dataset needs n, d >= 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidInput(format!("density {density} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for j in 0..d {
            if rng.random::<f64>() < density {
                row.push((j, rng.sample(StandardNormal)));
            }
        }
        if row.is_empty() {
            row.push((rng.random_range(0..d), rng.sample(StandardNormal)));
        }
        let score: f64 = row.iter().map(|&(j, x)| x * truth[j]).sum();
        labels.push(if score < 0.0 { -1.0 } else { 1.0 });
        rows.push(row);
    }
    Dataset::from_rows(rows, labels, Some(d))
}
