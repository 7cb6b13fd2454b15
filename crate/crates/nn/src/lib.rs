//! Neural network engine for oil-spill segmentation: dense tensors, static
//! computation graphs with reverse-mode gradients, the layer set used by the
//! segmentation and categorization networks, imbalance-aware losses, Adam
//! family optimizers, model builders, and OSEG weight checkpoints.
//!
//! Production numerics run in `f32`; a parallel `f64` execution mode backs
//! the finite-difference gradient checker.

pub mod actmax;
pub mod checkpoint;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod graph;
pub mod losses;
pub mod models;
pub mod ops;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use error::{NnError, Result};
pub use exec::{
    accumulate_into, backprop, backward_from, execute_graph, run, ExecOptions, Execution,
    Gradients, ParamBank,
};
pub use graph::{Graph, Mode, NodeId, Op, Param, ParamId, ParamKind};
pub use models::{build_classifier, build_ofcn, build_pixel, ModelFlags, ModelKind, ModelSpec};
pub use optim::{OptimizerKind, OptimizerState};
pub use scalar::Scalar;
pub use tensor::Tensor;
