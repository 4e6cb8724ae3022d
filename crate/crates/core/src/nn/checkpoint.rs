//! Controller checkpoints: a single JSON document carrying the architecture
//! descriptor, flat parameter arrays and training metadata. Loading
//! validates the descriptor before accepting any weights.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::MlpController;
use super::recurrent::BiRecurrentController;
use super::tape::Mat;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp {
        input_dim: usize,
        hidden: Vec<usize>,
        output_dim: usize,
    },
    BiRecurrent {
        input_dim: usize,
        hidden_size: usize,
        depth: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamBlob {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Provenance of the weights: what system and settings produced them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub model: String,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coupling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_train: Option<usize>,
    pub grid: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: Architecture,
    pub params: Vec<ParamBlob>,
    pub metadata: TrainingMetadata,
}

/// Either controller kind, as stored on disk.
#[derive(Debug, Clone)]
pub enum ControllerKind {
    Mlp(MlpController),
    BiRecurrent(BiRecurrentController),
}

impl ControllerKind {
    pub fn architecture(&self) -> Architecture {
        match self {
            ControllerKind::Mlp(m) => Architecture::Mlp {
                input_dim: m.input_dim,
                hidden: m.hidden_widths(),
                output_dim: m.output_dim,
            },
            ControllerKind::BiRecurrent(r) => Architecture::BiRecurrent {
                input_dim: r.input_dim,
                hidden_size: r.hidden,
                depth: r.depth(),
            },
        }
    }

    fn param_names(&self) -> Vec<String> {
        match self {
            ControllerKind::Mlp(m) => m.param_names(),
            ControllerKind::BiRecurrent(r) => r.param_names(),
        }
    }

    fn params(&self) -> Vec<&Mat> {
        match self {
            ControllerKind::Mlp(m) => m.params(),
            ControllerKind::BiRecurrent(r) => r.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        match self {
            ControllerKind::Mlp(m) => m.params_mut(),
            ControllerKind::BiRecurrent(r) => r.params_mut(),
        }
    }
}

impl Checkpoint {
    pub fn from_controller(controller: &ControllerKind, metadata: TrainingMetadata) -> Self {
        let params = controller
            .param_names()
            .into_iter()
            .zip(controller.params())
            .map(|(name, p)| ParamBlob {
                name,
                shape: [p.dim().0, p.dim().1],
                data: p.iter().cloned().collect(),
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: controller.architecture(),
            params,
            metadata,
        }
    }

    /// Rebuild the controller, validating the descriptor first.
    pub fn into_controller(&self) -> Result<ControllerKind> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::ArchitectureMismatch(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        // architecture fixes every expected shape; weights are only copied
        // in after all of them check out
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut controller = match &self.architecture {
            Architecture::Mlp {
                input_dim,
                hidden,
                output_dim,
            } => ControllerKind::Mlp(MlpController::new(*input_dim, hidden, *output_dim, &mut rng)),
            Architecture::BiRecurrent {
                input_dim,
                hidden_size,
                depth,
            } => ControllerKind::BiRecurrent(BiRecurrentController::new(
                *input_dim,
                *hidden_size,
                *depth,
                &mut rng,
            )),
        };
        let names = controller.param_names();
        if names.len() != self.params.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "expected {} parameter blobs, found {}",
                names.len(),
                self.params.len()
            )));
        }
        for (slot, blob) in controller.params_mut().into_iter().zip(&self.params) {
            let expected = slot.dim();
            if blob.shape != [expected.0, expected.1] || blob.data.len() != expected.0 * expected.1 {
                return Err(Error::ArchitectureMismatch(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    blob.name, blob.shape, expected
                )));
            }
            *slot = Mat::from_shape_vec(expected, blob.data.clone())
                .expect("shape validated above");
        }
        Ok(controller)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Short content id used to tag output rows.
    pub fn id(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        format!("{:016x}", fnv1a(&bytes))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
