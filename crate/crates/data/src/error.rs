use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("raster container: {0}")]
    Container(String),

    #[error("sidecar metadata: {0}")]
    Sidecar(String),

    #[error("incidence angles [{0}, {1}] outside the supported [30, 45] degree range")]
    IncidenceRange(f64, f64),

    #[error("preprocess: {0}")]
    Preprocess(String),

    #[error("patch extraction: {0}")]
    Patches(String),

    #[error("synthesis: {0}")]
    Synth(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
