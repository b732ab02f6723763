//! TT-SVD decomposition and tensor-train reconstruction.
//!
//! A d-way tensor is stored as cores `G_j` of shape `(r_{j-1}, n_j, r_j)` with
//! `r_0 = r_d = 1`, and
//!
//! ```text
//! W[i_1, .., i_d] = Σ_{l_0..l_d} G_1[l_0, i_1, l_1] · · · G_d[l_{d-1}, i_d, l_d]
//! ```
//!
//! [`tt_svd`] builds the cores by a left-to-right sweep of `d − 1` truncated
//! SVDs. Each truncation discards at most `σ` in Frobenius norm, where σ is
//! derived from `ε·‖Y‖_F` by the selected [`SigmaRule`]; the reconstruction
//! then satisfies `‖Y − Ŷ‖_F ≤ ε‖Y‖_F`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg_svd::{full_svd, truncate, SvdConfig};
use crate::scalar::Scalar;
use crate::tensor_core::{frobenius, DenseTensor, Matrix};

/// How the per-step truncation threshold is derived from ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaRule {
    /// `σ = ε/(d−1)·‖Y‖_F`.
    #[default]
    Paper,
    /// `σ = ε/√(d−1)·‖Y‖_F`.
    Standard,
}

impl SigmaRule {
    pub fn sigma<T: Scalar>(self, epsilon: T, norm: T, d: usize) -> T {
        let steps = T::from_usize(d.saturating_sub(1).max(1)).expect("small integer");
        match self {
            SigmaRule::Paper => epsilon / steps * norm,
            SigmaRule::Standard => epsilon / steps.sqrt() * norm,
        }
    }
}

impl std::str::FromStr for SigmaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(SigmaRule::Paper),
            "standard" => Ok(SigmaRule::Standard),
            other => Err(format!(
                "unknown sigma rule {other:?} (expected paper|standard)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtConfig<T> {
    pub epsilon: T,
    pub sigma_rule: SigmaRule,
    pub svd: SvdConfig<T>,
}

impl<T: Scalar> TtConfig<T> {
    pub fn new(epsilon: T) -> Self {
        Self {
            epsilon,
            sigma_rule: SigmaRule::Paper,
            svd: SvdConfig::default(),
        }
    }

    pub fn with_sigma_rule(mut self, rule: SigmaRule) -> Self {
        self.sigma_rule = rule;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtCores<T> {
    cores: Vec<DenseTensor<T>>,
    ranks: Vec<usize>,
    mode_sizes: Vec<usize>,
    epsilon_used: T,
}

impl<T: Scalar> TtCores<T> {
    /// Assembles cores after checking the rank chain and every core shape.
    pub fn from_cores(cores: Vec<DenseTensor<T>>, epsilon_used: T) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::InvalidCores("no cores".into()));
        }
        let mut ranks = Vec::with_capacity(cores.len() + 1);
        let mut mode_sizes = Vec::with_capacity(cores.len());
        for (j, core) in cores.iter().enumerate() {
            let &[left, n, right] = core.shape() else {
                return Err(Error::InvalidCores(format!(
                    "core {j} has shape {:?}, expected three modes",
                    core.shape()
                )));
            };
            if let Some(&prev) = ranks.last() {
                if prev != left {
                    return Err(Error::InvalidCores(format!(
                        "core {j} left rank {left} does not match previous right rank {prev}"
                    )));
                }
            } else {
                ranks.push(left);
            }
            ranks.push(right);
            mode_sizes.push(n);
        }
        if ranks[0] != 1 || *ranks.last().unwrap() != 1 {
            return Err(Error::InvalidCores(format!(
                "boundary ranks must be 1, got {ranks:?}"
            )));
        }
        if epsilon_used.is_nan() || epsilon_used < T::zero() {
            return Err(Error::InvalidTolerance(
                epsilon_used.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self {
            cores,
            ranks,
            mode_sizes,
            epsilon_used,
        })
    }

    pub fn cores(&self) -> &[DenseTensor<T>] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<DenseTensor<T>> {
        self.cores
    }

    /// `(r_0, .., r_d)`.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn epsilon_used(&self) -> T {
        self.epsilon_used
    }

    pub fn ndim(&self) -> usize {
        self.cores.len()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(1)
    }

    pub fn param_count(&self) -> usize {
        tt_param_count(self)
    }

    pub fn reconstruct(&self) -> DenseTensor<T> {
        tt_reconstruct(self)
    }
}

/// Decomposes `y` with relative error bound `epsilon` under the default rule.
pub fn tt_svd<T: Scalar>(y: &DenseTensor<T>, epsilon: T) -> Result<TtCores<T>> {
    tt_svd_with(y, &TtConfig::new(epsilon))
}

pub fn tt_svd_with<T: Scalar>(y: &DenseTensor<T>, config: &TtConfig<T>) -> Result<TtCores<T>> {
    let d = y.ndim();
    if d < 2 {
        return Err(Error::RankTooLow {
            needed: 2,
            actual: d,
        });
    }
    let epsilon = config.epsilon;
    if !(epsilon.is_finite() && epsilon >= T::zero()) {
        return Err(Error::InvalidTolerance(
            epsilon.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let sigma = config.sigma_rule.sigma(epsilon, y.frobenius_norm(), d);
    let modes = y.shape();

    let mut carry: Matrix<T> = y.matricize_first()?;
    let mut r_prev = 1usize;
    let mut cores = Vec::with_capacity(d);
    for &n in &modes[..d - 1] {
        let rows = r_prev * n;
        let cols = carry.rows() * carry.cols() / rows;
        carry = carry.reshaped(rows, cols)?;
        let svd = full_svd(&carry, &config.svd)?;
        let (svd, r) = truncate(svd, sigma);
        carry = svd.s_vt();
        cores.push(svd.u.into_tensor().into_shape(vec![r_prev, n, r])?);
        r_prev = r;
    }
    let last = carry
        .into_tensor()
        .into_shape(vec![r_prev, modes[d - 1], 1])?;
    cores.push(last);
    TtCores::from_cores(cores, epsilon)
}

/// Contracts the core chain left to right as a sequence of matrix products.
pub fn tt_reconstruct<T: Scalar>(cores: &TtCores<T>) -> DenseTensor<T> {
    let mut acc = Matrix::from_fn(1, 1, |_, _| T::one());
    for core in cores.cores() {
        let &[left, n, right] = core.shape() else {
            unreachable!("validated at construction");
        };
        let core_m = Matrix::new(left, n * right, core.data().to_vec()).expect("valid core");
        let rows = acc.rows();
        acc = acc
            .matmul(&core_m)
            .expect("rank chain validated")
            .reshaped(rows * n, right)
            .expect("volume preserved");
    }
    acc.into_tensor()
        .into_shape(cores.mode_sizes().to_vec())
        .expect("reconstruction volume equals mode product")
}

/// `Σ_j r_{j-1}·n_j·r_j`.
pub fn tt_param_count<T: Scalar>(cores: &TtCores<T>) -> usize {
    let r = cores.ranks();
    cores
        .mode_sizes()
        .iter()
        .enumerate()
        .map(|(j, &n)| r[j] * n * r[j + 1])
        .sum()
}

/// `‖a − b‖_F / ‖a‖_F`, or the absolute error when `a` is zero.
pub fn relative_error<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> T {
    let diff: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x - y)
        .collect();
    let err = frobenius(&diff);
    let norm = a.frobenius_norm();
    if norm > T::zero() {
        err / norm
    } else {
        err
    }
}
