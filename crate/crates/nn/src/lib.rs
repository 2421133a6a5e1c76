//! Dense-tensor autodiff and a small decoder-only transformer.
//!
//! Training uses `f32` weights ([`Real`]); every reduction (layer-norm statistics, softmax
//! normalizers, attention scores, losses) accumulates in `f64`.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod params;
pub mod positional;
pub mod scalar;
pub mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{OptimizerConfig, PosMode, TransformerConfig};
pub use decode::Decoded;
pub use error::{NnError, Result};
pub use graph::{AttentionSpec, Graph, NodeId};
pub use model::{TokenBatch, Transformer};
pub use optim::adamw_step;
pub use params::{Gradients, ParamId, ParameterStore};
pub use positional::{alibi_bias, alibi_slopes, sinusoidal_pe};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Element type used for training and inference.
pub type Real = f32;
