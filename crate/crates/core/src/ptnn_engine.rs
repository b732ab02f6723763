//! Accuracy-gated, layer-by-layer tensorization of a model.
//!
//! Layers are visited in order. Each one is folded, decomposed with TT-SVD,
//! reconstructed, unfolded and written back into the working bundle; the
//! oracle then scores the cumulative model. The layer stays compressed when
//! the score is at least `original − accuracy_drop_tolerance`, otherwise its
//! original weights are restored and the layer is marked skipped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{layer_metrics, GateDecision, LayerMetrics};
use crate::model_store::{evaluate, ModelBundle, ToyDataset};
use crate::shaping::{fold, plan_shape, unfold, ShapePlan, DEFAULT_D_TARGET};
use crate::tensor_core::{DenseTensor, Matrix};
use crate::tt::{relative_error, tt_svd_with, SigmaRule, TtConfig, TtCores};

/// Slack absorbing rounding in `original − tolerance`.
const GATE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub epsilon: f64,
    /// Absolute accuracy drop allowed relative to the original model.
    pub accuracy_drop_tolerance: f64,
    pub d_target: usize,
    /// Layers to visit, in order. Empty means every tensor in bundle order.
    pub layer_order: Vec<String>,
    pub skip_inflating_layers: bool,
    pub sigma_rule: SigmaRule,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            accuracy_drop_tolerance: 0.05,
            d_target: DEFAULT_D_TARGET,
            layer_order: Vec::new(),
            skip_inflating_layers: true,
            sigma_rule: SigmaRule::Paper,
        }
    }
}

impl GateConfig {
    fn check(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidTolerance(self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.accuracy_drop_tolerance) {
            return Err(Error::InvalidTolerance(self.accuracy_drop_tolerance));
        }
        if self.d_target < 2 {
            return Err(Error::BadDimensions(format!(
                "d_target {} < 2",
                self.d_target
            )));
        }
        Ok(())
    }

    fn layers(&self, bundle: &ModelBundle) -> Result<Vec<String>> {
        if self.layer_order.is_empty() {
            return Ok(bundle.names().map(String::from).collect());
        }
        for name in &self.layer_order {
            if bundle.get(name).is_none() {
                return Err(Error::UnknownLayer(name.clone()));
            }
        }
        Ok(self.layer_order.clone())
    }

    fn accepts(&self, original: f64, post: f64) -> bool {
        post >= original - self.accuracy_drop_tolerance - GATE_SLACK
    }
}

/// Deterministic model scorer. Must be safe to call concurrently on
/// distinct bundles.
pub trait AccuracyOracle: Sync {
    fn accuracy(&self, bundle: &ModelBundle) -> Result<f64>;
}

impl AccuracyOracle for ToyDataset {
    fn accuracy(&self, bundle: &ModelBundle) -> Result<f64> {
        evaluate(bundle, self).map_err(|e| match e {
            Error::OracleFailure(_) => e,
            other => Error::OracleFailure(other.to_string()),
        })
    }
}

impl<F> AccuracyOracle for F
where
    F: Fn(&ModelBundle) -> Result<f64> + Sync,
{
    fn accuracy(&self, bundle: &ModelBundle) -> Result<f64> {
        self(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: String,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub decision: GateDecision,
    pub metrics: LayerMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionTrace {
    pub records: Vec<LayerRecord>,
    pub original_accuracy: f64,
    pub final_accuracy: f64,
}

/// One line of the JSON-lines trace report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub layer: String,
    pub decision: GateDecision,
    pub pre_acc: f64,
    pub post_acc: f64,
    pub original_params: usize,
    pub compressed_params: usize,
    pub space_saving: f64,
    pub ranks: Vec<usize>,
    pub rel_error: f64,
}

impl From<&LayerRecord> for TraceLine {
    fn from(r: &LayerRecord) -> Self {
        Self {
            layer: r.layer.clone(),
            decision: r.decision,
            pre_acc: r.pre_accuracy,
            post_acc: r.post_accuracy,
            original_params: r.metrics.original_params,
            compressed_params: r.metrics.compressed_params,
            space_saving: r.metrics.space_saving,
            ranks: r.metrics.ranks.clone(),
            rel_error: r.metrics.relative_error,
        }
    }
}

impl TraceLine {
    /// Rebuilds the layer metrics this line was written from.
    pub fn to_metrics(&self) -> LayerMetrics {
        LayerMetrics::from_counts(
            &self.layer,
            self.original_params,
            self.compressed_params,
            self.ranks.clone(),
            self.rel_error,
            self.decision,
        )
    }
}

impl CompressionTrace {
    pub fn lines(&self) -> Vec<TraceLine> {
        self.records.iter().map(TraceLine::from).collect()
    }

    /// One JSON object per record, newline terminated.
    pub fn to_jsonl(&self) -> String {
        write_jsonl(&self.lines())
    }

    pub fn metrics(&self) -> Vec<LayerMetrics> {
        self.records.iter().map(|r| r.metrics.clone()).collect()
    }
}

pub fn write_jsonl(lines: &[TraceLine]) -> String {
    lines
        .iter()
        .map(|l| serde_json::to_string(l).expect("trace lines serialize") + "\n")
        .collect()
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Malformed(format!("trace line {}: {e}", i + 1)))
        })
        .collect()
}

/// TT form of an accepted layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedLayer {
    pub name: String,
    pub cores: TtCores<f64>,
    pub plan: ShapePlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOutput {
    /// Input bundle with accepted layers replaced by their dense reconstructions.
    pub bundle: ModelBundle,
    pub checkpoints: Vec<AcceptedLayer>,
    pub trace: CompressionTrace,
}

/// Result of decomposing one weight tensor, before any gating.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerAttempt {
    Unfactorable,
    Decomposed {
        plan: ShapePlan,
        cores: TtCores<f64>,
        /// Reconstruction in the tensor's original shape.
        dense: DenseTensor<f64>,
        relative_error: f64,
    },
}

/// Treats the tensor as `shape[0] × rest`, folds, decomposes and reconstructs.
pub fn decompose_layer(tensor: &DenseTensor<f64>, config: &GateConfig) -> Result<LayerAttempt> {
    let rows = tensor.shape()[0];
    let cols = tensor.len() / rows;
    let plan = match plan_shape(rows, cols, config.d_target) {
        Ok(plan) => plan,
        Err(Error::UnfactorableVolume(_)) => return Ok(LayerAttempt::Unfactorable),
        Err(e) => return Err(e),
    };
    let matrix = Matrix::new(rows, cols, tensor.data().to_vec())?;
    let folded = fold(&matrix, &plan)?;
    let tt_config = TtConfig::new(config.epsilon).with_sigma_rule(config.sigma_rule);
    let cores = tt_svd_with(&folded, &tt_config)?;
    let restored = unfold(&cores.reconstruct(), &plan)?;
    let dense = restored.into_tensor().into_shape(tensor.shape().to_vec())?;
    let relative_error = relative_error(tensor, &dense);
    Ok(LayerAttempt::Decomposed {
        plan,
        cores,
        dense,
        relative_error,
    })
}

fn score(oracle: &dyn AccuracyOracle, bundle: &ModelBundle) -> Result<f64> {
    let acc = oracle.accuracy(bundle)?;
    if !(0.0..=1.0).contains(&acc) {
        return Err(Error::OracleFailure(format!(
            "accuracy {acc} outside [0, 1]"
        )));
    }
    Ok(acc)
}

/// Gates a single layer of `working` in place and returns its record.
fn gate_layer(
    working: &mut ModelBundle,
    name: &str,
    original_accuracy: f64,
    pre_accuracy: f64,
    oracle: &dyn AccuracyOracle,
    config: &GateConfig,
) -> Result<(LayerRecord, Option<AcceptedLayer>)> {
    let tensor = working
        .get(name)
        .ok_or_else(|| Error::UnknownLayer(name.to_string()))?
        .clone();
    let original_params = tensor.len();
    let dense_record = |decision, metrics| LayerRecord {
        layer: name.to_string(),
        pre_accuracy,
        post_accuracy: pre_accuracy,
        decision,
        metrics,
    };
    let (plan, cores, dense, error) = match decompose_layer(&tensor, config)? {
        LayerAttempt::Unfactorable => {
            let m = LayerMetrics::unfactorable(name, original_params);
            return Ok((dense_record(GateDecision::Unfactorable, m), None));
        }
        LayerAttempt::Decomposed {
            plan,
            cores,
            dense,
            relative_error,
        } => (plan, cores, dense, relative_error),
    };
    let rejected = || LayerMetrics::skipped(name, original_params, cores.ranks().to_vec(), error);
    if config.skip_inflating_layers && cores.param_count() > original_params {
        return Ok((dense_record(GateDecision::Skipped, rejected()), None));
    }

    let original = working.replace(name, dense)?;
    let post_accuracy = score(oracle, working)?;
    if config.accepts(original_accuracy, post_accuracy) {
        let record = LayerRecord {
            layer: name.to_string(),
            pre_accuracy,
            post_accuracy,
            decision: GateDecision::Compressed,
            metrics: layer_metrics(name, original_params, &cores, error),
        };
        let accepted = AcceptedLayer {
            name: name.to_string(),
            cores,
            plan,
        };
        Ok((record, Some(accepted)))
    } else {
        working.replace(name, original)?;
        Ok((dense_record(GateDecision::Skipped, rejected()), None))
    }
}

/// Iterative accuracy-gated tensorization over `config.layer_order`.
pub fn run(
    bundle: &ModelBundle,
    oracle: &dyn AccuracyOracle,
    config: &GateConfig,
) -> Result<EngineOutput> {
    config.check()?;
    let layers = config.layers(bundle)?;
    let original_accuracy = score(oracle, bundle)?;
    let mut working = bundle.clone();
    let mut current = original_accuracy;
    let mut records = Vec::with_capacity(layers.len());
    let mut checkpoints = Vec::new();
    for name in &layers {
        let (record, accepted) = gate_layer(
            &mut working,
            name,
            original_accuracy,
            current,
            oracle,
            config,
        )?;
        current = record.post_accuracy;
        records.push(record);
        checkpoints.extend(accepted);
    }
    if !config.accepts(original_accuracy, current) {
        return Err(Error::GateViolation {
            original_accuracy,
            final_accuracy: current,
            tolerance: config.accuracy_drop_tolerance,
        });
    }
    Ok(EngineOutput {
        bundle: working,
        checkpoints,
        trace: CompressionTrace {
            records,
            original_accuracy,
            final_accuracy: current,
        },
    })
}

/// Compresses only `layer`, scores the model, and discards the change.
pub fn compress_single_layer(
    bundle: &ModelBundle,
    layer: &str,
    config: &GateConfig,
    oracle: &dyn AccuracyOracle,
) -> Result<CompressionTrace> {
    config.check()?;
    if bundle.get(layer).is_none() {
        return Err(Error::UnknownLayer(layer.to_string()));
    }
    let original_accuracy = score(oracle, bundle)?;
    let mut scratch = bundle.clone();
    let (record, _) = gate_layer(
        &mut scratch,
        layer,
        original_accuracy,
        original_accuracy,
        oracle,
        config,
    )?;
    Ok(CompressionTrace {
        final_accuracy: record.post_accuracy,
        records: vec![record],
        original_accuracy,
    })
}

/// Individual study over every configured layer, evaluated concurrently
/// from the pristine bundle. Results follow the layer order.
pub fn compress_each_layer(
    bundle: &ModelBundle,
    config: &GateConfig,
    oracle: &dyn AccuracyOracle,
) -> Result<Vec<CompressionTrace>> {
    config.check()?;
    let layers = config.layers(bundle)?;
    layers
        .par_iter()
        .map(|name| compress_single_layer(bundle, name, config, oracle))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_store::BundleDescriptor;

    fn bundle_of(layers: &[(&str, Vec<usize>)]) -> ModelBundle {
        let mut b = ModelBundle::new(BundleDescriptor::default());
        for (i, (name, shape)) in layers.iter().enumerate() {
            let t = DenseTensor::from_fn(shape.clone(), |ix| {
                ((ix.iter().sum::<usize>() * 7 + i * 3) % 11) as f64 - 5.0
            })
            .unwrap();
            b.push(*name, t).unwrap();
        }
        b
    }

    /// Scripted oracle: accuracy depends only on which layers differ from
    /// the reference bundle.
    struct Scripted {
        reference: ModelBundle,
        base: f64,
        penalty: Vec<(&'static str, f64)>,
    }

    impl AccuracyOracle for Scripted {
        fn accuracy(&self, bundle: &ModelBundle) -> Result<f64> {
            let mut acc = self.base;
            for (name, p) in &self.penalty {
                if bundle.get(name) != self.reference.get(name) {
                    acc -= p;
                }
            }
            Ok(acc)
        }
    }

    fn lossy() -> GateConfig {
        GateConfig {
            epsilon: 0.9,
            skip_inflating_layers: false,
            ..GateConfig::default()
        }
    }

    #[test]
    fn gate_rejects_drop_below_tolerance() {
        let b = bundle_of(&[("a", vec![8, 8]), ("b", vec![8, 8])]);
        let oracle = Scripted {
            reference: b.clone(),
            base: 0.90,
            penalty: vec![("a", 0.06)],
        };
        let out = run(&b, &oracle, &lossy()).unwrap();
        let rec = &out.trace.records[0];
        assert_eq!(rec.decision, GateDecision::Skipped);
        assert_eq!(rec.post_accuracy, rec.pre_accuracy);
        assert_eq!(out.bundle.get("a"), b.get("a"));
        assert_eq!(rec.metrics.compressed_params, rec.metrics.original_params);
        assert_eq!(out.trace.records[1].decision, GateDecision::Compressed);
        assert_eq!(out.trace.final_accuracy, 0.90);
    }

    #[test]
    fn gate_accepts_within_tolerance() {
        let b = bundle_of(&[("a", vec![8, 8])]);
        let oracle = Scripted {
            reference: b.clone(),
            base: 0.90,
            penalty: vec![("a", 0.03)],
        };
        let out = run(&b, &oracle, &lossy()).unwrap();
        assert_eq!(out.trace.records[0].decision, GateDecision::Compressed);
        assert!((out.trace.final_accuracy - 0.87).abs() < 1e-15);
        assert_eq!(out.checkpoints.len(), 1);
        assert_ne!(out.bundle.get("a"), b.get("a"));
    }

    #[test]
    fn gate_boundary_is_inclusive() {
        let b = bundle_of(&[("a", vec![8, 8])]);
        let oracle = Scripted {
            reference: b.clone(),
            base: 0.90,
            penalty: vec![("a", 0.05)],
        };
        let out = run(&b, &oracle, &lossy()).unwrap();
        assert_eq!(out.trace.records[0].decision, GateDecision::Compressed);
    }

    #[test]
    fn cumulative_judgement_against_original() {
        // each layer alone is fine, together they exceed the tolerance
        let b = bundle_of(&[("a", vec![8, 8]), ("b", vec![8, 8])]);
        let oracle = Scripted {
            reference: b.clone(),
            base: 1.0,
            penalty: vec![("a", 0.03), ("b", 0.03)],
        };
        let out = run(&b, &oracle, &lossy()).unwrap();
        let decisions: Vec<_> = out.trace.records.iter().map(|r| r.decision).collect();
        assert_eq!(decisions, [GateDecision::Compressed, GateDecision::Skipped]);
        assert_eq!(out.bundle.get("b"), b.get("b"));
    }

    #[test]
    fn unfactorable_and_inflating_layers_stay_dense() {
        let b = bundle_of(&[("prime", vec![13, 1]), ("tiny", vec![2, 3])]);
        let oracle = |_: &ModelBundle| Ok(1.0);
        let config = GateConfig {
            epsilon: 0.0,
            ..GateConfig::default()
        };
        let out = run(&b, &oracle, &config).unwrap();
        assert_eq!(out.trace.records[0].decision, GateDecision::Unfactorable);
        // (2,3) at full rank needs 2·2 + 2·3 = 10 > 6 parameters
        assert_eq!(out.trace.records[1].decision, GateDecision::Skipped);
        assert_eq!(out.bundle, b);
        assert!(out.checkpoints.is_empty());
    }

    #[test]
    fn layer_order_is_respected_and_validated() {
        let b = bundle_of(&[("a", vec![4, 4]), ("b", vec![4, 4])]);
        let oracle = |_: &ModelBundle| Ok(1.0);
        let config = GateConfig {
            layer_order: vec!["b".into()],
            ..GateConfig::default()
        };
        let out = run(&b, &oracle, &config).unwrap();
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.trace.records[0].layer, "b");
        let bad = GateConfig {
            layer_order: vec!["zzz".into()],
            ..GateConfig::default()
        };
        assert!(matches!(
            run(&b, &oracle, &bad),
            Err(Error::UnknownLayer(_))
        ));
    }

    #[test]
    fn oracle_errors_propagate() {
        let b = bundle_of(&[("a", vec![4, 4])]);
        let failing = |_: &ModelBundle| Err(Error::OracleFailure("boom".into()));
        assert!(matches!(
            run(&b, &failing, &GateConfig::default()),
            Err(Error::OracleFailure(_))
        ));
        let out_of_range = |_: &ModelBundle| Ok(1.5);
        assert!(matches!(
            run(&b, &out_of_range, &GateConfig::default()),
            Err(Error::OracleFailure(_))
        ));
    }

    #[test]
    fn single_layer_study_restores_bundle() {
        let b = bundle_of(&[("a", vec![8, 8]), ("b", vec![8, 8])]);
        let oracle = Scripted {
            reference: b.clone(),
            base: 0.9,
            penalty: vec![("a", 0.2), ("b", 0.01)],
        };
        let snapshot = b.clone();
        let t = compress_single_layer(&b, "a", &lossy(), &oracle).unwrap();
        assert_eq!(b, snapshot);
        assert_eq!(t.records[0].decision, GateDecision::Skipped);
        let all = compress_each_layer(&b, &lossy(), &oracle).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].records[0].decision, GateDecision::Compressed);
        assert!((all[1].final_accuracy - 0.89).abs() < 1e-15);
    }

    #[test]
    fn jsonl_round_trip() {
        let b = bundle_of(&[("a", vec![8, 8]), ("p", vec![13, 1])]);
        let oracle = |_: &ModelBundle| Ok(1.0);
        let out = run(&b, &oracle, &lossy()).unwrap();
        let text = out.trace.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        let lines = parse_jsonl(&text).unwrap();
        assert_eq!(lines, out.trace.lines());
        for (line, rec) in lines.iter().zip(&out.trace.records) {
            assert_eq!(line.to_metrics(), rec.metrics);
        }
        assert!(parse_jsonl("{not json}\n").is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let b = bundle_of(&[("a", vec![4, 4])]);
        let oracle = |_: &ModelBundle| Ok(1.0);
        let bad = GateConfig {
            accuracy_drop_tolerance: 1.5,
            ..GateConfig::default()
        };
        assert!(matches!(
            run(&b, &oracle, &bad),
            Err(Error::InvalidTolerance(_))
        ));
    }
}
