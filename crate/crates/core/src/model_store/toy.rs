//! Desk-scale teacher–student classifier.
//!
//! Teacher weights are generated from `seed`, evaluation inputs from
//! `seed + 1`, and labels are the teacher's own argmax predictions. The
//! bundle returned by [`generate_toy_bundle`] holds the teacher weights, so
//! its accuracy is exactly 1.0 and any later drop comes from compression.
//!
//! Each weight matrix `rows × cols` is drawn as follows, layers in forward
//! order (embedding, hidden blocks, output), all from one [`ToyRng`] stream:
//!
//! 1. fold the shape with `plan_shape(rows, cols, plant_d_target)`;
//! 2. if factorable, draw TT cores with bond ranks
//!    `min(planted_rank, matricization cap)`, core by core in row-major
//!    order from `N(0, 1)`, and contract them; otherwise draw a dense
//!    `N(0, 1)` matrix;
//! 3. rescale that base to unit RMS, add `noise_amplitude · N(0, 1)`
//!    elementwise (row-major), then multiply everything by `1/sqrt(rows)`.
//!
//! Each sample is `seq_len` tokens from `below(vocab_size)`.

use serde::{Deserialize, Serialize};

use super::rng::ToyRng;
use super::{BundleDescriptor, DatasetRef, ModelBundle, ToyArchitecture};
use crate::error::{Error, Result};
use crate::shaping::plan_shape;
use crate::tensor_core::DenseTensor;
use crate::tt::TtCores;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub seed: u64,
    /// Weight tensors in total: embedding, `n_layers − 2` hidden blocks, output.
    pub n_layers: usize,
    pub width: usize,
    pub n_classes: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub n_samples: usize,
    pub planted_rank: usize,
    pub plant_d_target: usize,
    pub noise_amplitude: f64,
}

impl ToyConfig {
    pub fn new(seed: u64, n_layers: usize, width: usize, n_classes: usize) -> Self {
        Self {
            seed,
            n_layers,
            width,
            n_classes,
            ..Self::default()
        }
    }

    pub fn architecture(&self) -> ToyArchitecture {
        ToyArchitecture {
            vocab_size: self.vocab_size,
            width: self.width,
            seq_len: self.seq_len,
            n_classes: self.n_classes,
            embedding: "embedding".into(),
            hidden: (0..self.n_layers.saturating_sub(2))
                .map(|i| format!("hidden_{i}"))
                .collect(),
            output: "output".into(),
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadDimensions(msg));
        if self.n_layers < 3 {
            return bad(format!(
                "n_layers must be at least 3, got {}",
                self.n_layers
            ));
        }
        if self.width == 0 || self.vocab_size == 0 || self.seq_len == 0 || self.n_samples == 0 {
            return bad("width, vocab_size, seq_len and n_samples must be positive".into());
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.planted_rank == 0 || self.plant_d_target < 2 {
            return bad("planted_rank must be >= 1 and plant_d_target >= 2".into());
        }
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return bad(format!(
                "noise amplitude {} is invalid",
                self.noise_amplitude
            ));
        }
        if self.vocab_size > u32::MAX as usize {
            return bad("vocabulary too large".into());
        }
        Ok(())
    }
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_layers: 4,
            width: 64,
            n_classes: 10,
            vocab_size: 256,
            seq_len: 8,
            n_samples: 2000,
            planted_rank: 3,
            plant_d_target: 4,
            noise_amplitude: 0.02,
        }
    }
}

/// Token sequences with teacher labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub seed: u64,
    pub seq_len: usize,
    pub n_classes: usize,
    /// `n_samples × seq_len`, row-major.
    pub tokens: Vec<u32>,
    pub labels: Vec<usize>,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[u32] {
        &self.tokens[i * self.seq_len..(i + 1) * self.seq_len]
    }

    /// Rebuilds the evaluation set of a bundle from its generator settings.
    pub fn for_bundle(bundle: &ModelBundle) -> Result<Self> {
        let config =
            bundle.descriptor().generator.as_ref().ok_or_else(|| {
                Error::OracleFailure("bundle has no toy generator descriptor".into())
            })?;
        Ok(generate_toy_bundle(config)?.1)
    }
}

fn planted_matrix(
    rng: &mut ToyRng,
    rows: usize,
    cols: usize,
    config: &ToyConfig,
) -> Result<Vec<f64>> {
    let base: Vec<f64> = match plan_shape(rows, cols, config.plant_d_target) {
        Ok(plan) => {
            let modes = &plan.tensor_shape;
            let d = modes.len();
            let mut ranks = vec![1usize; d + 1];
            for j in 1..d {
                let left: usize = modes[..j].iter().product();
                let right: usize = modes[j..].iter().product();
                ranks[j] = config.planted_rank.min(left).min(right);
            }
            let cores = (0..d)
                .map(|j| {
                    let shape = vec![ranks[j], modes[j], ranks[j + 1]];
                    let n = shape.iter().product();
                    DenseTensor::new(shape, (0..n).map(|_| rng.normal()).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            TtCores::from_cores(cores, 0.0)?.reconstruct().into_data()
        }
        Err(_) => (0..rows * cols).map(|_| rng.normal()).collect(),
    };
    let rms = (base.iter().map(|x| x * x).sum::<f64>() / base.len() as f64).sqrt();
    let rms = if rms > 0.0 { rms } else { 1.0 };
    let scale = 1.0 / (rows as f64).sqrt();
    Ok(base
        .into_iter()
        .map(|b| (b / rms + config.noise_amplitude * rng.normal()) * scale)
        .collect())
}

pub fn generate_toy_bundle(config: &ToyConfig) -> Result<(ModelBundle, ToyDataset)> {
    config.check()?;
    let arch = config.architecture();
    let mut bundle = ModelBundle::new(BundleDescriptor {
        architecture: Some(arch.clone()),
        dataset: Some(DatasetRef {
            seed: config.seed,
            n_samples: config.n_samples,
            n_classes: config.n_classes,
        }),
        generator: Some(config.clone()),
    });
    let mut rng = ToyRng::new(config.seed);
    for (name, rows, cols) in arch.layer_shapes() {
        let data = planted_matrix(&mut rng, rows, cols, config)?;
        bundle.push(name, DenseTensor::new(vec![rows, cols], data)?)?;
    }

    let mut rng = ToyRng::new(config.seed.wrapping_add(1));
    let tokens: Vec<u32> = (0..config.n_samples * config.seq_len)
        .map(|_| rng.below(config.vocab_size as u64) as u32)
        .collect();
    let mut data = ToyDataset {
        seed: config.seed,
        seq_len: config.seq_len,
        n_classes: config.n_classes,
        tokens,
        labels: Vec::new(),
    };
    data.labels = predict(&bundle, &data)?;
    Ok((bundle, data))
}

/// Index of the largest logit; ties go to the lowest index.
fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// `out = relu?(x · W)` for a row-major `W` of shape `x.len() × cols`.
fn affine(x: &[f64], w: &[f64], cols: usize, relu: bool) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *o += xi * wij;
        }
    }
    if relu {
        for o in &mut out {
            *o = o.max(0.0);
        }
    }
    out
}

fn predict(bundle: &ModelBundle, data: &ToyDataset) -> Result<Vec<usize>> {
    bundle.validate()?;
    let arch = bundle
        .architecture()
        .ok_or_else(|| Error::OracleFailure("bundle has no toy architecture".into()))?;
    if arch.seq_len != data.seq_len || data.seq_len == 0 {
        return Err(Error::ShapeMismatch {
            expected: vec![arch.seq_len],
            found: vec![data.seq_len],
        });
    }
    // labels are empty only while the teacher is labelling a fresh dataset
    let n_samples = data.tokens.len() / data.seq_len;
    if !data.tokens.len().is_multiple_of(data.seq_len)
        || (!data.labels.is_empty() && data.labels.len() != n_samples)
    {
        return Err(Error::ShapeMismatch {
            expected: vec![data.labels.len(), data.seq_len],
            found: vec![data.tokens.len()],
        });
    }
    let lookup = |name: &str| {
        bundle
            .get(name)
            .map(|t| t.data())
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    };
    let embedding = lookup(&arch.embedding)?;
    let hidden = arch
        .hidden
        .iter()
        .map(|h| lookup(h))
        .collect::<Result<Vec<_>>>()?;
    let output = lookup(&arch.output)?;
    let width = arch.width;

    let mut labels = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let tokens = &data.tokens[s * data.seq_len..(s + 1) * data.seq_len];
        let mut h = vec![0.0; width];
        for &tok in tokens {
            let tok = tok as usize;
            if tok >= arch.vocab_size {
                return Err(Error::BadDimensions(format!(
                    "token {tok} outside vocabulary of {}",
                    arch.vocab_size
                )));
            }
            for (acc, &e) in h.iter_mut().zip(&embedding[tok * width..(tok + 1) * width]) {
                *acc += e;
            }
        }
        let inv = 1.0 / data.seq_len as f64;
        for x in &mut h {
            *x *= inv;
        }
        for w in &hidden {
            h = affine(&h, w, width, true);
        }
        labels.push(argmax(&affine(&h, output, arch.n_classes, false)));
    }
    Ok(labels)
}

/// Fraction of samples whose argmax prediction matches the teacher label.
pub fn evaluate(bundle: &ModelBundle, data: &ToyDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::BadDimensions("empty evaluation set".into()));
    }
    let predicted = predict(bundle, data)?;
    let hits = predicted
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
