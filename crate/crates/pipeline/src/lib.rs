//! Operational layer of the oil-spill segmentation toolkit: training loops
//! and hyperparameter search, tiled test-time-augmented inference, slick
//! vectorization with hysteresis filtering, CRF refinement, evaluation
//! metrics with rank statistics, and the batch product-to-GeoJSON pipeline.

pub mod classify;
pub mod crf;
pub mod error;
pub mod geo;
pub mod metrics;
pub mod pipeline;
pub mod search;
pub mod slicks;
pub mod stats;
pub mod tiling;
pub mod train;

pub use classify::{classifier_accuracy, classify_slicks, train_classifier};
pub use crf::{crf_refine, CrfParams};
pub use error::{PipelineError, Result};
pub use geo::{feature_collection, slick_feature, to_document, validate_geojson, FeatureContext};
pub use metrics::{
    bbox_metrics, classification_metrics, pixel_metrics, threshold_sweep, BboxMetrics, PixelMetrics,
};
pub use pipeline::{
    run_pipeline, LocalDirSource, LonLatBox, PipelineOutput, PipelineRequest, ProductDescriptor,
    ProductSource, RemoteStubSource, RunReport,
};
pub use search::{hparam_search, SearchParams, TrialRecord};
pub use slicks::{
    connected_components, extract_slicks, filter_color, prune_slicks, threshold_mask, Slick,
};
pub use stats::{chi_square_survival, incidence_angle_analysis, kruskal_wallis, KruskalWallis};
pub use tiling::{predict_tiled, predict_tiled_grid, TilingConfig, WeightKind};
pub use train::{
    train, train_two_stage, validation_f1, EpochStats, LossConfig, LossKind, TrainConfig,
    TrainHistory,
};
