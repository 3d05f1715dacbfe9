//! Reverse-mode automatic differentiation: tensors, the recording graph and
//! its primitives, the optimiser and the parameter file format.

pub mod checkpoint;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
pub use graph::{Conv2dOptions, Graph, Var};
pub use optim::{adam_step, kaiming_init, AdamConfig, AdamState};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tensor::Tensor;
