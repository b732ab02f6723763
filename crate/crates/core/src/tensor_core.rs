//! Dense d-way tensors and row-major matrices.
//!
//! Layout is row-major everywhere (last index fastest). Reshapes never touch
//! the data buffer, so the Frobenius norm and every scalar are preserved
//! bit-for-bit.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_finite<T: Scalar>(data: &[T]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

fn checked_volume(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::InvalidShape(shape.to_vec()))
}

/// Sum of squares, accumulated with scaling so large entries cannot overflow.
pub(crate) fn frobenius<T: Scalar>(data: &[T]) -> T {
    let mut scale = T::zero();
    let mut ssq = T::one();
    for &x in data {
        if x != T::zero() {
            let a = x.abs();
            if scale < a {
                let r = scale / a;
                ssq = T::one() + ssq * r * r;
                scale = a;
            } else {
                let r = a / scale;
                ssq = ssq + r * r;
            }
        }
    }
    scale * ssq.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    /// Builds a tensor, enforcing positive extents, matching volume and
    /// finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let volume = checked_volume(&shape)?;
        if volume != data.len() {
            return Err(Error::DataLength {
                shape,
                len: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let volume = checked_volume(&shape)?;
        Ok(Self {
            shape,
            data: vec![T::zero(); volume],
        })
    }

    /// Fills the tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let volume = checked_volume(&shape)?;
        let mut data = Vec::with_capacity(volume);
        let mut index = vec![0usize; shape.len()];
        for _ in 0..volume {
            data.push(f(&index));
            for axis in (0..shape.len()).rev() {
                index[axis] += 1;
                if index[axis] < shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn flat_index(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0usize;
        for (&i, &n) in index.iter().zip(&self.shape) {
            if i >= n {
                return None;
            }
            flat = flat * n + i;
        }
        Some(flat)
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        self.flat_index(index).map(|i| self.data[i])
    }

    /// Reinterprets the row-major data under `new_shape`.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        self.clone().into_shape(new_shape.to_vec())
    }

    pub fn into_shape(self, new_shape: Vec<usize>) -> Result<Self> {
        let volume = checked_volume(&new_shape).map_err(|_| Error::VolumeMismatch {
            from: self.shape.clone(),
            to: new_shape.clone(),
        })?;
        if volume != self.data.len() {
            return Err(Error::VolumeMismatch {
                from: self.shape,
                to: new_shape,
            });
        }
        Ok(Self {
            shape: new_shape,
            data: self.data,
        })
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius(&self.data)
    }

    /// `n_1 × (volume / n_1)` view of the data, the first reshape of TT-SVD.
    pub fn matricize_first(&self) -> Result<Matrix<T>> {
        if self.ndim() < 2 {
            return Err(Error::RankTooLow {
                needed: 2,
                actual: self.ndim(),
            });
        }
        let rows = self.shape[0];
        Ok(Matrix {
            rows,
            cols: self.data.len() / rows,
            data: self.data.clone(),
        })
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Result<DenseTensor<U>> {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.to_f64()
                    .and_then(U::from_f64)
                    .filter(|y| y.is_finite())
                    .ok_or(Error::NonFinite(i))
            })
            .collect::<Result<Vec<U>>>()?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        let volume = checked_volume(&[rows, cols])?;
        if volume != data.len() {
            return Err(Error::DataLength {
                shape: vec![rows, cols],
                len: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_diagonal(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Same data read as a `rows × cols` matrix.
    pub fn reshaped(self, rows: usize, cols: usize) -> Result<Self> {
        if rows.checked_mul(cols) != Some(self.data.len()) || rows == 0 || cols == 0 {
            return Err(Error::VolumeMismatch {
                from: vec![self.rows, self.cols],
                to: vec![rows, cols],
            });
        }
        Ok(Self {
            rows,
            cols,
            data: self.data,
        })
    }

    pub fn matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                expected: vec![self.cols, rhs.cols],
                found: vec![rhs.rows, rhs.cols],
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius(&self.data)
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn into_tensor(self) -> DenseTensor<T> {
        DenseTensor {
            shape: vec![self.rows, self.cols],
            data: self.data,
        }
    }
}
