//! Volume-preserving folding of weight matrices into d-way tensors.
//!
//! The matrix is treated as a flat row-major volume. Its prime factors are
//! dealt, largest first, into `d_target` buckets, each prime going to the
//! currently smallest bucket (lowest index on ties). Empty buckets are
//! dropped and the surviving extents sorted ascending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor_core::{DenseTensor, Matrix};

pub const DEFAULT_D_TARGET: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapePlan {
    pub original_rows: usize,
    pub original_cols: usize,
    pub tensor_shape: Vec<usize>,
}

impl ShapePlan {
    /// Validates a plan read back from storage.
    pub fn new(
        original_rows: usize,
        original_cols: usize,
        tensor_shape: Vec<usize>,
    ) -> Result<Self> {
        let volume = original_rows.checked_mul(original_cols);
        let product = tensor_shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n));
        if original_rows == 0
            || original_cols == 0
            || tensor_shape.len() < 2
            || tensor_shape.iter().any(|&n| n < 2)
            || volume != product
        {
            return Err(Error::BadDimensions(format!(
                "plan {original_rows}x{original_cols} -> {tensor_shape:?} is not a valid fold"
            )));
        }
        Ok(Self {
            original_rows,
            original_cols,
            tensor_shape,
        })
    }

    pub fn ndim(&self) -> usize {
        self.tensor_shape.len()
    }

    pub fn volume(&self) -> usize {
        self.original_rows * self.original_cols
    }
}

/// Prime factors in nondecreasing order, by trial division.
pub fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2usize;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub fn plan_shape(rows: usize, cols: usize, d_target: usize) -> Result<ShapePlan> {
    if d_target < 2 {
        return Err(Error::BadDimensions(format!(
            "d_target must be at least 2, got {d_target}"
        )));
    }
    let volume = rows
        .checked_mul(cols)
        .filter(|&v| v >= 1)
        .ok_or_else(|| Error::BadDimensions(format!("{rows}x{cols} has no valid volume")))?;
    let primes = prime_factors(volume);
    if primes.len() < 2 {
        return Err(Error::UnfactorableVolume(volume));
    }
    let mut buckets = vec![1usize; d_target];
    for &p in primes.iter().rev() {
        let (slot, _) = buckets
            .iter()
            .enumerate()
            .min_by_key(|&(i, &b)| (b, i))
            .expect("d_target >= 2");
        buckets[slot] *= p;
    }
    let mut tensor_shape: Vec<usize> = buckets.into_iter().filter(|&b| b > 1).collect();
    tensor_shape.sort_unstable();
    Ok(ShapePlan {
        original_rows: rows,
        original_cols: cols,
        tensor_shape,
    })
}

pub fn fold<T: Scalar>(m: &Matrix<T>, plan: &ShapePlan) -> Result<DenseTensor<T>> {
    if (m.rows(), m.cols()) != (plan.original_rows, plan.original_cols) {
        return Err(Error::ShapeMismatch {
            expected: vec![plan.original_rows, plan.original_cols],
            found: vec![m.rows(), m.cols()],
        });
    }
    m.clone()
        .into_tensor()
        .into_shape(plan.tensor_shape.clone())
}

pub fn unfold<T: Scalar>(t: &DenseTensor<T>, plan: &ShapePlan) -> Result<Matrix<T>> {
    if t.shape() != plan.tensor_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: plan.tensor_shape.clone(),
            found: t.shape().to_vec(),
        });
    }
    Matrix::new(plan.original_rows, plan.original_cols, t.data().to_vec())
}
