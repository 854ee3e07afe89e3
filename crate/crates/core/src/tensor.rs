//! Dense row-major tensors and the index gymnastics built on them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of entries described by `dims`, or `None` on overflow.
pub fn checked_volume(dims: &[usize]) -> Option<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
}

/// Multi-dimensional array of `f64` stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return invalid(format!("shape {shape:?} has a zero dimension"));
        }
        let volume = checked_volume(&shape)
            .ok_or_else(|| Error::InvalidArgument(format!("shape {shape:?} overflows")))?;
        if volume != values.len() as u64 {
            return invalid(format!(
                "shape {shape:?} needs {volume} values, got {}",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("tensor contains non-finite values".into()));
        }
        Ok(Self { shape, values })
    }

    /// Builds a tensor without validating values; callers guarantee the invariants.
    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    /// Fills a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            values.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self { shape, values }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.values)
    }

    /// Value at a multi-index.
    pub fn get(&self, idx: &[usize]) -> f64 {
        let mut off = 0;
        for (i, &d) in idx.iter().zip(&self.shape) {
            off = off * d + i;
        }
        self.values[off]
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// Same values, new shape with equal volume.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.contains(&0) || shape.iter().product::<usize>() != self.values.len() {
            return invalid(format!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Reorders axes so that output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.order(), "permutation length mismatch");
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return self.clone();
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let strides = row_major_strides(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
        let n = self.values.len();
        let mut out = Vec::with_capacity(n);
        let order = new_shape.len();
        if order == 0 {
            return self.clone();
        }
        // Innermost axis handled as a strided run.
        let inner = new_shape[order - 1];
        let inner_stride = src_strides[order - 1];
        let mut idx = vec![0usize; order - 1];
        let mut base = 0usize;
        let outer: usize = new_shape[..order - 1].iter().product();
        for _ in 0..outer {
            let mut off = base;
            for _ in 0..inner {
                out.push(self.values[off]);
                off += inner_stride;
            }
            for ax in (0..order - 1).rev() {
                idx[ax] += 1;
                base += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                base -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Self {
            shape: new_shape,
            values: out,
        }
    }

    /// Matricization with `row_modes` (0-based, any order given) as rows in
    /// ascending mode order and the complement as columns.
    pub fn unfold(&self, row_modes: &[usize]) -> Result<DenseTensor> {
        let d = self.order();
        let mut rows: Vec<usize> = row_modes.to_vec();
        rows.sort_unstable();
        rows.dedup();
        if rows.len() != row_modes.len() || rows.iter().any(|&m| m >= d) {
            return invalid(format!("row modes {row_modes:?} invalid for order {d}"));
        }
        if rows.is_empty() || rows.len() == d {
            return invalid("unfolding needs a non-empty proper subset of modes");
        }
        let cols: Vec<usize> = (0..d).filter(|m| !rows.contains(m)).collect();
        let nr: usize = rows.iter().map(|&m| self.shape[m]).product();
        let nc: usize = cols.iter().map(|&m| self.shape[m]).product();
        let perm: Vec<usize> = rows.iter().chain(cols.iter()).copied().collect();
        let p = self.permute(&perm);
        Ok(DenseTensor::from_parts(vec![nr, nc], p.values))
    }

    /// Row-major view as an `nrows x ncols` matrix over axes split at `split`.
    pub fn to_matrix(&self, split: usize) -> DMatrix<f64> {
        let nr: usize = self.shape[..split].iter().product();
        let nc: usize = self.shape[split..].iter().product();
        DMatrix::from_row_slice(nr, nc, &self.values)
    }

    /// Inverse of `to_matrix`.
    pub fn from_matrix(m: &DMatrix<f64>, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), m.len());
        Self::from_parts(shape, row_major(m))
    }
}

pub fn frobenius(values: &[f64]) -> f64 {
    // Scaled accumulation avoids overflow on large entries.
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    strides
}

/// Row-major copy of a column-major nalgebra matrix.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Contracts axes `axes_a` of `a` with `axes_b` of `b` pairwise.
/// Result axes: remaining axes of `a` in order, then remaining axes of `b`.
pub fn tensordot(
    a: &DenseTensor,
    axes_a: &[usize],
    b: &DenseTensor,
    axes_b: &[usize],
) -> DenseTensor {
    assert_eq!(axes_a.len(), axes_b.len());
    for (&x, &y) in axes_a.iter().zip(axes_b) {
        assert_eq!(a.shape[x], b.shape[y], "contracted sizes differ");
    }
    let free_a: Vec<usize> = (0..a.order()).filter(|m| !axes_a.contains(m)).collect();
    let free_b: Vec<usize> = (0..b.order()).filter(|m| !axes_b.contains(m)).collect();
    let perm_a: Vec<usize> = free_a.iter().chain(axes_a).copied().collect();
    let perm_b: Vec<usize> = axes_b.iter().chain(free_b.iter()).copied().collect();
    let ap = a.permute(&perm_a);
    let bp = b.permute(&perm_b);
    let ma = ap.to_matrix(free_a.len());
    let mb = bp.to_matrix(axes_b.len());
    let prod = ma * mb;
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&m| a.shape[m])
        .chain(free_b.iter().map(|&m| b.shape[m]))
        .collect();
    DenseTensor::from_parts(shape, row_major(&prod))
}
