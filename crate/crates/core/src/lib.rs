//! Tensor-train compression of neural-network weights.
//!
//! * [`tensor_core`]: dense row-major tensors and matrices.
//! * [`linalg_svd`]: thin SVD and the σ-truncation rank rule.
//! * [`shaping`]: folding weight matrices into balanced d-way tensors.
//! * [`tt`]: TT-SVD and TT reconstruction.
//! * [`metrics`]: exact parameter accounting.
//! * [`model_store`]: bundle/checkpoint files and the toy teacher–student model.
//! * [`ptnn_engine`]: accuracy-gated, layer-by-layer compression.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases below
//! fix the double-precision instantiation used by the model pipeline.

pub mod error;
pub mod linalg_svd;
pub mod metrics;
pub mod model_store;
pub mod ptnn_engine;
pub mod scalar;
pub mod shaping;
pub mod tensor_core;
pub mod tt;

pub use error::{Error, Result};
pub use linalg_svd::{full_svd, truncate, truncation_rank, SvdConfig, SvdResult};
pub use metrics::{
    complexity_estimate, layer_metrics, model_metrics, ComplexityEstimate, GateDecision,
    LayerMetrics, ModelMetrics,
};
pub use model_store::{
    evaluate, generate_toy_bundle, load_bundle, load_tt_checkpoint, save_bundle,
    save_tt_checkpoint, ModelBundle, ToyConfig, ToyDataset,
};
pub use ptnn_engine::{
    compress_each_layer, compress_single_layer, run, AccuracyOracle, CompressionTrace,
    EngineOutput, GateConfig, LayerRecord, TraceLine,
};
pub use scalar::Scalar;
pub use shaping::{fold, plan_shape, unfold, ShapePlan};
pub use tensor_core::{DenseTensor, Matrix};
pub use tt::{tt_param_count, tt_reconstruct, tt_svd, tt_svd_with, SigmaRule, TtConfig, TtCores};

pub type Tensor = DenseTensor<f64>;
pub type Tensor32 = DenseTensor<f32>;
pub type Mat = Matrix<f64>;
pub type Mat32 = Matrix<f32>;
pub type Cores = TtCores<f64>;
pub type Cores32 = TtCores<f32>;
pub type Svd = SvdResult<f64>;
