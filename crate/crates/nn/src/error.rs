use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch at node `{node}`: {detail}")]
    ShapeMismatch { node: String, detail: String },

    #[error("non-finite value at node `{node}`, element {index}")]
    NonFinite { node: String, index: usize },

    #[error("unknown graph input `{0}`")]
    UnknownInput(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("node `{node}`: {detail}")]
    InvalidOp { node: String, detail: String },

    #[error("backprop requires a scalar node; `{node}` has {len} elements")]
    LossNotScalar { node: String, len: usize },

    #[error("batch norm running statistics are uninitialized; run at least one training pass or load a trained checkpoint")]
    BatchNormUninitialized,

    #[error("stochastic node `{0}` active with unfrozen RNG; the gradient check would be invalid")]
    StochasticUnfrozen(String),

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
