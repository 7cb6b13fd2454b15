use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("training: {0}")]
    Train(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("inference: {0}")]
    Inference(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("search: {0}")]
    Search(String),

    #[error("pipeline: {0}")]
    Pipeline(String),

    #[error("product source: {0}")]
    Source(String),

    #[error(transparent)]
    Nn(#[from] oseg_nn::NnError),

    #[error(transparent)]
    Data(#[from] oseg_data::DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
