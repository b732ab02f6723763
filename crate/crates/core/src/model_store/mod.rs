//! Weight bundles, TT checkpoints and the synthetic teacher–student model.

mod format;
mod rng;
mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_core::DenseTensor;

pub use format::{
    load_bundle, load_tt_checkpoint, read_bundle, read_tt_checkpoint, save_bundle, save_bundle_as,
    save_tt_checkpoint, write_bundle, write_tt_checkpoint, Dtype, BUNDLE_MAGIC, CHECKPOINT_MAGIC,
    FORMAT_VERSION,
};
pub use rng::ToyRng;
pub use toy::{evaluate, generate_toy_bundle, ToyConfig, ToyDataset};

/// Layer sequence of the toy classifier: embedding lookup with mean
/// pooling, dense+ReLU blocks, final linear map to class logits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyArchitecture {
    pub vocab_size: usize,
    pub width: usize,
    pub seq_len: usize,
    pub n_classes: usize,
    pub embedding: String,
    pub hidden: Vec<String>,
    pub output: String,
}

impl ToyArchitecture {
    /// `(name, rows, cols)` for every weight, in forward order.
    pub fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = vec![(self.embedding.clone(), self.vocab_size, self.width)];
        out.extend(
            self.hidden
                .iter()
                .map(|h| (h.clone(), self.width, self.width)),
        );
        out.push((self.output.clone(), self.width, self.n_classes));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub seed: u64,
    pub n_samples: usize,
    pub n_classes: usize,
}

/// JSON block stored at the end of a bundle file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BundleDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ToyArchitecture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetRef>,
    /// Teacher generator settings; lets the evaluation set be rebuilt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<ToyConfig>,
}

/// Ordered, uniquely named weight tensors plus their descriptor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelBundle {
    tensors: Vec<(String, DenseTensor<f64>)>,
    descriptor: BundleDescriptor,
}

impl ModelBundle {
    pub fn new(descriptor: BundleDescriptor) -> Self {
        Self {
            tensors: Vec::new(),
            descriptor,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: DenseTensor<f64>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::DuplicateLayer(name));
        }
        self.tensors.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DenseTensor<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Swaps in new weights of the same shape, returning the old ones.
    pub fn replace(&mut self, name: &str, tensor: DenseTensor<f64>) -> Result<DenseTensor<f64>> {
        let slot = self
            .tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))?;
        if slot.1.shape() != tensor.shape() {
            return Err(Error::ShapeMismatch {
                expected: slot.1.shape().to_vec(),
                found: tensor.shape().to_vec(),
            });
        }
        Ok(std::mem::replace(&mut slot.1, tensor))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseTensor<f64>)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_params(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn descriptor(&self) -> &BundleDescriptor {
        &self.descriptor
    }

    pub fn architecture(&self) -> Option<&ToyArchitecture> {
        self.descriptor.architecture.as_ref()
    }

    /// Checks that the architecture, if any, matches the stored tensors.
    pub fn validate(&self) -> Result<()> {
        let Some(arch) = self.architecture() else {
            return Ok(());
        };
        for (name, rows, cols) in arch.layer_shapes() {
            let t = self
                .get(&name)
                .ok_or_else(|| Error::UnknownLayer(name.clone()))?;
            if t.shape() != [rows, cols] {
                return Err(Error::ShapeMismatch {
                    expected: vec![rows, cols],
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}
