//! Compression accounting from exact parameter counts.
//!
//! Space saving is `1 − compressed/original`, the compression ratio is
//! `original/compressed`. Both are carried as exact rationals and exposed as
//! `f64` for display and serialization.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tt::{tt_param_count, TtCores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateDecision {
    Compressed,
    Skipped,
    Unfactorable,
}

impl fmt::Display for GateDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateDecision::Compressed => "compressed",
            GateDecision::Skipped => "skipped",
            GateDecision::Unfactorable => "unfactorable",
        })
    }
}

/// Metrics for one layer.
///
/// For a `skipped` layer, `compressed_params` equals `original_params`
/// (the dense weights are kept) while `ranks` and `relative_error` describe
/// the rejected TT attempt. An `unfactorable` layer has no ranks and
/// `max_rank == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub layer_name: String,
    pub original_params: usize,
    pub compressed_params: usize,
    pub space_saving: f64,
    pub compression_ratio: f64,
    pub max_rank: usize,
    pub ranks: Vec<usize>,
    pub relative_error: f64,
    pub gate_decision: GateDecision,
}

impl LayerMetrics {
    pub fn from_counts(
        name: &str,
        original: usize,
        compressed: usize,
        ranks: Vec<usize>,
        relative_error: f64,
        gate_decision: GateDecision,
    ) -> Self {
        let original = original.max(1);
        let compressed = compressed.max(1);
        Self {
            layer_name: name.to_string(),
            original_params: original,
            compressed_params: compressed,
            space_saving: ratio_to_f64(space_saving_ratio(original, compressed)),
            compression_ratio: ratio_to_f64(compression_ratio_exact(original, compressed)),
            max_rank: ranks.iter().copied().max().unwrap_or(0),
            ranks,
            relative_error,
            gate_decision,
        }
    }

    /// A layer that stays dense after a TT attempt was rejected.
    pub fn skipped(
        name: &str,
        original: usize,
        attempted_ranks: Vec<usize>,
        relative_error: f64,
    ) -> Self {
        Self::from_counts(
            name,
            original,
            original,
            attempted_ranks,
            relative_error,
            GateDecision::Skipped,
        )
    }

    pub fn unfactorable(name: &str, original: usize) -> Self {
        Self::from_counts(
            name,
            original,
            original,
            Vec::new(),
            0.0,
            GateDecision::Unfactorable,
        )
    }

    pub fn space_saving_exact(&self) -> Ratio<i128> {
        space_saving_ratio(self.original_params, self.compressed_params)
    }

    pub fn compression_ratio_exact(&self) -> Ratio<i128> {
        compression_ratio_exact(self.original_params, self.compressed_params)
    }
}

pub fn space_saving_ratio(original: usize, compressed: usize) -> Ratio<i128> {
    Ratio::from_integer(1) - Ratio::new(compressed as i128, original as i128)
}

pub fn compression_ratio_exact(original: usize, compressed: usize) -> Ratio<i128> {
    Ratio::new(original as i128, compressed as i128)
}

pub fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Metrics for a layer stored in TT form.
pub fn layer_metrics<T: Scalar>(
    name: &str,
    original: usize,
    cores: &TtCores<T>,
    error: f64,
) -> LayerMetrics {
    LayerMetrics::from_counts(
        name,
        original,
        tt_param_count(cores),
        cores.ranks().to_vec(),
        error,
        GateDecision::Compressed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub layers: Vec<LayerMetrics>,
    pub total_params: usize,
    pub params_in_compressed_layers: usize,
    pub model_memory_fraction_saved: f64,
    pub aggregate_space_saving: f64,
}

impl ModelMetrics {
    /// `Σ_compressed saving_i · original_i / total`, exactly.
    pub fn memory_fraction_saved_exact(&self) -> Ratio<i128> {
        let saved: i128 = self
            .layers
            .iter()
            .filter(|l| l.gate_decision == GateDecision::Compressed)
            .map(|l| l.original_params as i128 - l.compressed_params as i128)
            .sum();
        Ratio::new(saved, self.total_params.max(1) as i128)
    }

    pub fn compressed_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.gate_decision == GateDecision::Compressed)
            .count()
    }

    /// Parameters stored after compression: dense layers at full size, TT
    /// layers at their core count, plus anything outside the listed layers.
    pub fn params_after(&self) -> usize {
        let listed: usize = self.layers.iter().map(|l| l.original_params).sum();
        let kept: usize = self.layers.iter().map(|l| l.compressed_params).sum();
        self.total_params - listed + kept
    }
}

pub fn model_metrics(layers: Vec<LayerMetrics>, total_params: usize) -> Result<ModelMetrics> {
    let listed: usize = layers.iter().map(|l| l.original_params).sum();
    if listed > total_params {
        return Err(Error::InconsistentTotals {
            layers: listed,
            total: total_params,
        });
    }
    let compressed: Vec<&LayerMetrics> = layers
        .iter()
        .filter(|l| l.gate_decision == GateDecision::Compressed)
        .collect();
    let params_in_compressed_layers = compressed.iter().map(|l| l.original_params).sum();
    // saving_i · original_i == original_i − compressed_i exactly
    let saved: i128 = compressed
        .iter()
        .map(|l| l.original_params as i128 - l.compressed_params as i128)
        .sum();
    let model_memory_fraction_saved = if total_params == 0 {
        0.0
    } else {
        ratio_to_f64(Ratio::new(saved, total_params as i128))
    };
    let kept: usize = layers.iter().map(|l| l.compressed_params).sum();
    let aggregate_space_saving = if listed == 0 {
        0.0
    } else {
        ratio_to_f64(space_saving_ratio(listed, kept))
    };
    Ok(ModelMetrics {
        layers,
        total_params,
        params_in_compressed_layers,
        model_memory_fraction_saved,
        aggregate_space_saving,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub max_rank: usize,
    /// `Σ_j 2·r_{j-1}·n_j·r_j`.
    pub matvec_flops_estimate: usize,
    /// Asymptotic form in terms of d, the largest mode n and the largest rank r.
    pub symbolic: String,
}

pub fn complexity_estimate<T: Scalar>(cores: &TtCores<T>) -> ComplexityEstimate {
    let d = cores.ndim();
    let n = cores.mode_sizes().iter().copied().max().unwrap_or(1);
    let r = cores.max_rank();
    ComplexityEstimate {
        max_rank: r,
        matvec_flops_estimate: 2 * tt_param_count(cores),
        symbolic: format!("O(d·n·r²) with d={d}, n={n}, r={r}"),
    }
}
