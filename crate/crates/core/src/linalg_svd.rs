//! Dense SVD and the σ-truncation rule used to pick TT ranks.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor_core::Matrix;

/// Per-call SVD settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdConfig<T> {
    /// A column pair counts as orthogonal once `|⟨a, b⟩| ≤ tolerance·‖a‖·‖b‖`.
    pub tolerance: T,
    /// Cap on full Jacobi sweeps. `None` means `max(60, 4·⌈log2 k⌉)`.
    pub max_iterations: Option<usize>,
}

impl<T: Scalar> Default for SvdConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: T::epsilon(),
            max_iterations: None,
        }
    }
}

impl<T> SvdConfig<T> {
    fn sweep_cap(&self, k: usize) -> usize {
        let log = usize::BITS - k.max(1).leading_zeros();
        self.max_iterations.unwrap_or((4 * log as usize).max(60))
    }
}

/// Thin SVD `M = U·diag(s)·Vᵀ` with `k` retained triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult<T> {
    /// `m × k`, orthonormal columns.
    pub u: Matrix<T>,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<T>,
    /// `n × k`, orthonormal columns.
    pub v: Matrix<T>,
}

impl<T: Scalar> SvdResult<T> {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    /// `diag(s)·Vᵀ`, the carry matrix of a TT-SVD sweep (`k × n`).
    pub fn s_vt(&self) -> Matrix<T> {
        let n = self.v.rows();
        Matrix::from_fn(self.k(), n, |c, j| {
            self.singular_values[c] * self.v.get(j, c)
        })
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.u
            .matmul(&self.s_vt())
            .expect("u and s·vᵀ have compatible shapes")
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, ta) = a.split_at(a.len() - a.len() % 4);
    let (cb, tb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let tail: T = ta.iter().zip(tb).map(|(&x, &y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn rotate<T: Scalar>(a: &mut [T], b: &mut [T], c: T, s: T) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (p, q) = (*x, *y);
        *x = c * p - s * q;
        *y = s * p + c * q;
    }
}

fn pair_mut<T>(cols: &mut [Vec<T>], i: usize, j: usize) -> (&mut [T], &mut [T]) {
    let (lo, hi) = cols.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

/// Replaces zero columns by unit vectors orthogonalized against the rest.
fn complete_basis<T: Scalar>(cols: &mut [Vec<T>], zero: &[bool]) {
    let len = cols.first().map_or(0, Vec::len);
    let mut seed = 0;
    for c in 0..cols.len() {
        if !zero[c] {
            continue;
        }
        while seed < len {
            let mut e = vec![T::zero(); len];
            e[seed] = T::one();
            seed += 1;
            for _ in 0..2 {
                for (o, other) in cols.iter().enumerate() {
                    if o != c && (!zero[o] || o < c) {
                        let p = dot(&e, other);
                        e.iter_mut().zip(other).for_each(|(x, &y)| *x = *x - p * y);
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > T::lit(0.5) {
                cols[c] = e.into_iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

/// One-sided Jacobi on the columns of `w` (`k` columns, each of length `len`).
/// Returns the rotated columns and the accumulated `k × k` rotation, both as
/// column lists, or `None` if the sweep cap is hit.
#[allow(clippy::type_complexity)]
fn jacobi<T: Scalar>(
    mut w: Vec<Vec<T>>,
    tolerance: T,
    sweeps: usize,
) -> Option<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let k = w.len();
    let mut v: Vec<Vec<T>> = (0..k)
        .map(|c| {
            (0..k)
                .map(|i| if i == c { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let mut norms: Vec<T> = w.iter().map(|c| dot(c, c)).collect();
    let two = T::lit(2.0);
    for _ in 0..sweeps {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let (alpha, beta) = (norms[i], norms[j]);
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                let gamma = dot(&w[i], &w[j]);
                if gamma.abs() <= tolerance * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (a, b) = pair_mut(&mut w, i, j);
                rotate(a, b, c, s);
                norms[i] = dot(a, a);
                norms[j] = dot(b, b);
                let (a, b) = pair_mut(&mut v, i, j);
                rotate(a, b, c, s);
            }
        }
        if !rotated {
            return Some((w, v));
        }
    }
    None
}

/// Full thin SVD with `k = min(rows, cols)`, by one-sided Jacobi rotations.
pub fn full_svd<T: Scalar>(m: &Matrix<T>, config: &SvdConfig<T>) -> Result<SvdResult<T>> {
    let (rows, cols) = (m.rows(), m.cols());
    if let Some(i) = m.data().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    // orthogonalize the shorter side so the rotation count is k²
    let tall = rows >= cols;
    let (k, len) = if tall { (cols, rows) } else { (rows, cols) };
    let w: Vec<Vec<T>> = if tall {
        (0..cols)
            .map(|j| (0..rows).map(|i| m.get(i, j)).collect())
            .collect()
    } else {
        (0..rows).map(|i| m.row(i).to_vec()).collect()
    };
    let sweeps = config.sweep_cap(k);
    let (mut w, v) = jacobi(w, config.tolerance, sweeps).ok_or(Error::ConvergenceFailure {
        rows,
        cols,
        max_iterations: sweeps,
    })?;

    let s: Vec<T> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let zero: Vec<bool> = s.iter().map(|&x| x <= T::min_positive_value()).collect();
    for (c, &sc) in w.iter_mut().zip(&s) {
        if sc > T::min_positive_value() {
            c.iter_mut().for_each(|x| *x = *x / sc);
        }
    }
    complete_basis(&mut w, &zero);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite singular values"));
    let singular_values = order.iter().map(|&c| s[c]).collect();
    let long = Matrix::from_fn(len, k, |i, c| w[order[c]][i]);
    let short = Matrix::from_fn(k, k, |i, c| v[order[c]][i]);
    let (u, v) = if tall { (long, short) } else { (short, long) };
    Ok(SvdResult {
        u,
        singular_values,
        v,
    })
}

/// `tails[r] = sqrt(Σ_{i ≥ r} s_i²)`, i.e. the Frobenius norm discarded
/// when keeping the first `r` singular values. Length `s.len() + 1`.
pub fn tail_energies<T: Scalar>(singular_values: &[T]) -> Vec<T> {
    let mut tails = vec![T::zero(); singular_values.len() + 1];
    let mut acc = T::zero();
    for (i, &s) in singular_values.iter().enumerate().rev() {
        acc = acc + s * s;
        tails[i] = acc.sqrt();
    }
    tails
}

/// Minimal `r ≥ 1` whose discarded tail energy is at most `sigma`.
pub fn truncation_rank<T: Scalar>(singular_values: &[T], sigma: T) -> usize {
    let tails = tail_energies(singular_values);
    (1..=singular_values.len())
        .find(|&r| tails[r] <= sigma)
        .unwrap_or(singular_values.len())
        .max(1)
}

/// Cuts the factorization to the σ-truncation rank.
pub fn truncate<T: Scalar>(res: SvdResult<T>, sigma: T) -> (SvdResult<T>, usize) {
    let r = truncation_rank(&res.singular_values, sigma).min(res.k().max(1));
    if r == res.k() {
        return (res, r);
    }
    let keep = |m: &Matrix<T>| Matrix::from_fn(m.rows(), r, |i, c| m.get(i, c));
    let out = SvdResult {
        u: keep(&res.u),
        singular_values: res.singular_values[..r].to_vec(),
        v: keep(&res.v),
    };
    (out, r)
}

/// Largest entry of `|AᵀA − I|`.
pub fn orthonormality_defect<T: Scalar>(a: &Matrix<T>) -> T {
    let gram = a.transpose().matmul(a).expect("AᵀA is always defined");
    gram.max_abs_diff(&Matrix::identity(a.cols()))
}
