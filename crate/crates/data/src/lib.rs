//! Data layer for the oil-spill segmentation toolkit: G16R raster
//! containers with sidecar metadata, backscatter preprocessing, patch
//! extraction, augmentation, the 12-category label schema, per-class
//! histograms, dataset manifests, and the synthetic SAR-like generator used
//! for desk-scale verification.

pub mod augment;
pub mod category;
pub mod error;
pub mod grid;
pub mod hist;
pub mod manifest;
pub mod patches;
pub mod preprocess;
pub mod raster;
pub mod sample;
pub mod synth;

pub use augment::{augment, AugmentConfig, PadMode};
pub use category::{Category, CategoryLabel, ALL_CATEGORIES};
pub use error::{DataError, Result};
pub use grid::Grid;
pub use patches::{assign_splits, extract_patches, OilEvent, PatchSets, Split};
pub use preprocess::preprocess_product;
pub use raster::{load_raster, save_raster, GeoRef, ProductMeta, RasterData, RasterProduct};
pub use sample::{Sample, PATCH_SIZE};
pub use synth::{
    synthesize_category_dataset, synthesize_dataset, synthesize_product, ContrastLevel,
    PlantedShape, PlantedSlick, ShapeFamily, SynthConfig, SynthProductConfig,
};
