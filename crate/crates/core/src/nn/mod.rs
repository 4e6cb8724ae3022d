//! Reverse-mode autodiff tape, controller architectures and the optimizer.

pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod recurrent;
pub mod tape;

pub use checkpoint::{Architecture, Checkpoint, ControllerKind, TrainingMetadata};
pub use mlp::{MlpController, TapedMlp};
pub use optim::Adam;
pub use recurrent::{BiRecurrentController, LstmCell, TapedBiRecurrent};
pub use tape::{Mat, NodeId, Tape};
