//! Dense row-major `f64` arrays with the few operations the engine needs.
//!
//! Every operation uses a fixed loop order so results are bit-reproducible
//! across runs. Broadcasting is limited to scalar-vs-array and same-shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        let array = Self { shape, data };
        array.ensure_finite("construction")?;
        Ok(array)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.iter().flatten().copied().collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    /// Row `r` of a 2-D array.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "{what} produced {} at flat index {i}",
                self.data[i]
            ))),
        }
    }

    fn is_scalar_like(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "transpose needs a 2-D array, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Standard matrix product `[m×k] · [k×n]`, summing over `k` in ascending order.
    pub fn matmul(&self, other: &DenseArray) -> Result<DenseArray> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Dimension(format!(
                "matmul of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let lhs = &self.data[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &a) in lhs.iter().enumerate() {
                let rhs = &other.data[p * n..(p + 1) * n];
                for (d, &b) in dst.iter_mut().zip(rhs) {
                    *d += a * b;
                }
            }
        }
        let out = Self {
            shape: vec![m, n],
            data: out,
        };
        out.ensure_finite("matmul")?;
        Ok(out)
    }

    fn zip_with(&self, other: &DenseArray, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let out = if self.shape == other.shape {
            Self {
                shape: self.shape.clone(),
                data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            }
        } else if other.is_scalar_like() {
            let b = other.data[0];
            self.map(|a| f(a, b))
        } else if self.is_scalar_like() {
            let a = self.data[0];
            other.map(|b| f(a, b))
        } else {
            return Err(Error::Dimension(format!(
                "{op} of {:?} and {:?}",
                self.shape, other.shape
            )));
        };
        out.ensure_finite(op)?;
        Ok(out)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &DenseArray) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseArray) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &DenseArray) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        let out = self.map(|v| v * factor);
        out.ensure_finite("scale")?;
        Ok(out)
    }

    /// 1.0 where `value >= threshold`, else 0.0.
    pub fn heaviside_ge(&self, threshold: &DenseArray) -> Result<Self> {
        self.zip_with(threshold, "heaviside_ge", heaviside_ge)
    }

    pub fn sum(&self) -> Result<f64> {
        self.non_empty("sum")?;
        Ok(self.data.iter().sum())
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(self.sum()? / self.data.len() as f64)
    }

    /// Flat index of the maximum; ties resolve to the lowest index.
    pub fn argmax(&self) -> Result<usize> {
        self.non_empty("argmax")?;
        Ok(argmax(&self.data))
    }

    pub fn sum_axis(&self, axis: usize) -> Result<DenseArray> {
        self.non_empty("sum_axis")?;
        let (outer, extent, inner) = self.axis_split(axis)?;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..extent {
                let base = (o * extent + a) * inner;
                for i in 0..inner {
                    out[o * inner + i] += self.data[base + i];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Self { shape, data: out })
    }

    pub fn mean_axis(&self, axis: usize) -> Result<DenseArray> {
        let extent = self.axis_split(axis)?.1 as f64;
        let sum = self.sum_axis(axis)?;
        Ok(sum.map(|v| v / extent))
    }

    /// Argmax along `axis`, one index per remaining position (row-major order).
    pub fn argmax_axis(&self, axis: usize) -> Result<Vec<usize>> {
        self.non_empty("argmax_axis")?;
        let (outer, extent, inner) = self.axis_split(axis)?;
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for a in 0..extent {
                    let v = self.data[(o * extent + a) * inner + i];
                    if v > best_val {
                        best_val = v;
                        best = a;
                    }
                }
                out.push(best);
            }
        }
        Ok(out)
    }

    /// Counts of values per bin. Bins are half-open `[e_k, e_{k+1})` except the
    /// last, which is closed. Values outside `[e_0, e_last]` are not counted.
    pub fn histogram(&self, edges: &[f64]) -> Result<Vec<u64>> {
        self.non_empty("histogram")?;
        histogram(&self.data, edges)
    }

    fn non_empty(&self, op: &str) -> Result<()> {
        if self.data.is_empty() {
            Err(Error::EmptyInput(format!("{op} of an empty array")))
        } else {
            Ok(())
        }
    }

    fn axis_split(&self, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.shape.len() {
            return Err(Error::Dimension(format!(
                "axis {axis} out of range for shape {:?}",
                self.shape
            )));
        }
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, self.shape[axis], inner))
    }
}

#[inline]
pub fn heaviside_ge(value: f64, threshold: f64) -> f64 {
    if value >= threshold {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Lowest index of the maximum value. Panics on an empty slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Vec<u64>> {
    if edges.len() < 2 {
        return Err(Error::Config("histogram needs at least two bin edges".into()));
    }
    if edges
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::Config("histogram edges must be strictly increasing".into()));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    let last = edges[bins];
    for &v in values {
        if v < edges[0] || v > last {
            continue;
        }
        // first edge strictly greater than v, minus one
        let k = edges.partition_point(|&e| e <= v);
        counts[k.saturating_sub(1).min(bins - 1)] += 1;
    }
    Ok(counts)
}
