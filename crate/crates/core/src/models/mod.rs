//! Enhancement auto-encoder and task classifier built on the tensor engine.

mod frontend;
mod layers;
mod lenet;
mod se;

pub use frontend::LogMelFrontend;
pub use layers::{Binding, ConvBlock1d, ConvKind, Conv1dLayer, InstanceNormLayer, LinearLayer, ResBlock1d};
pub use lenet::{LeNetClassifier, LeNetConfig};
pub use se::{SeConfig, SeForward, SeModel, SeOutput, DEFAULT_CHANNELS};
