//! The end-to-end batch pipeline: query products over an area and time
//! interval, preprocess, predict with tiled TTA, filter-color, vectorize and
//! prune slicks, optionally categorize them, and emit one GeoJSON document.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use oseg_data::{load_raster, raster, Category, RasterData, RasterProduct, ALL_CATEGORIES};
use oseg_nn::{checkpoint, Graph};

use crate::classify::classify_slicks;
use crate::error::{PipelineError, Result};
use crate::geo::{feature_collection, slick_feature, to_document, FeatureContext};
use crate::slicks::{extract_slicks, filter_color, prune_slicks};
use crate::tiling::{predict_tiled_grid, TilingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLatBox {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl LonLatBox {
    /// Fraction of `other` covered by the intersection, equirectangular
    /// cosine-weighted. Error below product scale (tens of km) is a few
    /// percent at high latitudes, acceptable for a 20% overlap gate.
    pub fn overlap_fraction_of(&self, other: &LonLatBox) -> f64 {
        let lon0 = self.lon_min.max(other.lon_min);
        let lon1 = self.lon_max.min(other.lon_max);
        let lat0 = self.lat_min.max(other.lat_min);
        let lat1 = self.lat_max.min(other.lat_max);
        if lon1 <= lon0 || lat1 <= lat0 {
            return 0.0;
        }
        let area = |a: &LonLatBox| {
            let mid = ((a.lat_min + a.lat_max) / 2.0).to_radians();
            (a.lon_max - a.lon_min) * mid.cos() * (a.lat_max - a.lat_min)
        };
        let inter = LonLatBox { lon_min: lon0, lat_min: lat0, lon_max: lon1, lat_max: lat1 };
        let denom = area(other);
        if denom <= 0.0 {
            0.0
        } else {
            area(&inter) / denom
        }
    }
}

fn default_overlap() -> f64 {
    0.20
}
fn default_tau_filter() -> f32 {
    0.8
}
fn default_tau_color() -> f32 {
    0.5
}
fn default_min_area() -> f64 {
    0.25
}
fn default_isolation() -> f64 {
    1.5
}
fn default_window() -> usize {
    160
}
fn default_tta() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRequest {
    pub area: LonLatBox,
    /// RFC 3339 interval bounds; start must precede end.
    pub start: String,
    pub end: String,
    #[serde(default = "default_overlap")]
    pub overlap_min: f64,
    /// OSEG checkpoint of the segmentation model.
    pub checkpoint: PathBuf,
    #[serde(default = "default_tau_filter")]
    pub tau_filter: f32,
    #[serde(default = "default_tau_color")]
    pub tau_color: f32,
    #[serde(default = "default_min_area")]
    pub prune_min_area_km2: f64,
    #[serde(default = "default_isolation")]
    pub prune_max_isolation_km: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_tta")]
    pub use_tta: bool,
    /// Directory of per-category checkpoints (`<category>.oseg`); absent
    /// categories are skipped and reported.
    #[serde(default)]
    pub classify_dir: Option<PathBuf>,
}

impl PipelineRequest {
    pub fn interval(&self) -> Result<(DateTime<Utc>, DateTime<Utc>)> {
        let start = DateTime::parse_from_rfc3339(&self.start)
            .map_err(|e| PipelineError::Pipeline(format!("bad start timestamp: {e}")))?
            .with_timezone(&Utc);
        let end = DateTime::parse_from_rfc3339(&self.end)
            .map_err(|e| PipelineError::Pipeline(format!("bad end timestamp: {e}")))?
            .with_timezone(&Utc);
        if start >= end {
            return Err(PipelineError::Pipeline("start must precede end".into()));
        }
        Ok((start, end))
    }
}

#[derive(Debug, Clone)]
pub struct ProductDescriptor {
    pub id: String,
    pub uri: String,
    pub footprint: LonLatBox,
    pub timestamp: DateTime<Utc>,
}

/// Product acquisition abstraction: a query over area and time, then a
/// fetch per descriptor.
pub trait ProductSource: Sync {
    fn query(
        &self,
        area: &LonLatBox,
        interval: (DateTime<Utc>, DateTime<Utc>),
        overlap_min: f64,
    ) -> Result<Vec<ProductDescriptor>>;
    fn fetch(&self, descriptor: &ProductDescriptor) -> Result<RasterProduct>;
}

/// Reference implementation over a directory of `.g16r` products with
/// sidecars.
pub struct LocalDirSource {
    pub dir: PathBuf,
}

impl LocalDirSource {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }
}

impl ProductSource for LocalDirSource {
    fn query(
        &self,
        area: &LonLatBox,
        interval: (DateTime<Utc>, DateTime<Utc>),
        overlap_min: f64,
    ) -> Result<Vec<ProductDescriptor>> {
        let mut out = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "g16r").unwrap_or(false))
            .collect();
        entries.sort();
        for path in entries {
            let meta = raster::read_meta(&path)?;
            let (w, h, _) = raster::read_g16r_dims(&path)?;
            let g = &meta.georef;
            let (lon0, lat0) = g.corner_lonlat(0.0, 0.0);
            let (lon1, lat1) = g.corner_lonlat(h as f64, w as f64);
            let footprint = LonLatBox {
                lon_min: lon0.min(lon1),
                lat_min: lat0.min(lat1),
                lon_max: lon0.max(lon1),
                lat_max: lat0.max(lat1),
            };
            let ts = DateTime::parse_from_rfc3339(&meta.timestamp)
                .map_err(|e| PipelineError::Source(format!("{path:?}: bad timestamp: {e}")))?
                .with_timezone(&Utc);
            if ts < interval.0 || ts > interval.1 {
                continue;
            }
            if area.overlap_fraction_of(&footprint) < overlap_min {
                continue;
            }
            out.push(ProductDescriptor {
                id: meta.product_id.clone(),
                uri: path.to_string_lossy().into_owned(),
                footprint,
                timestamp: ts,
            });
        }
        Ok(out)
    }

    fn fetch(&self, descriptor: &ProductDescriptor) -> Result<RasterProduct> {
        Ok(load_raster(Path::new(&descriptor.uri))?)
    }
}

/// Interface stub for a remote archive client. Network retrieval is out of
/// scope; the shape exists so a real client can slot in without touching
/// the pipeline.
pub struct RemoteStubSource {
    pub endpoint: String,
}

impl ProductSource for RemoteStubSource {
    fn query(
        &self,
        _area: &LonLatBox,
        _interval: (DateTime<Utc>, DateTime<Utc>),
        _overlap_min: f64,
    ) -> Result<Vec<ProductDescriptor>> {
        Err(PipelineError::Source(format!(
            "remote archive `{}` retrieval is not implemented; use a local product directory",
            self.endpoint
        )))
    }

    fn fetch(&self, _descriptor: &ProductDescriptor) -> Result<RasterProduct> {
        Err(PipelineError::Source("remote fetch is not implemented".into()))
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub products_found: usize,
    pub products_processed: usize,
    pub products_with_detections: usize,
    pub total_slicks: usize,
    pub failures: Vec<(String, String)>,
    pub categories_skipped: Vec<String>,
}

fn load_category_models(dir: &Path) -> (Vec<(Category, Graph)>, Vec<String>) {
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for cat in ALL_CATEGORIES {
        let path = dir.join(format!("{}.oseg", cat.name()));
        if !path.exists() {
            skipped.push(cat.name().to_string());
            continue;
        }
        match checkpoint::load_model(&path) {
            Ok((_, graph)) => models.push((cat, graph)),
            Err(e) => skipped.push(format!("{} ({e})", cat.name())),
        }
    }
    (models, skipped)
}

/// Ready a fetched product for inference: preprocess 10 m rasters, accept
/// 40 m float rasters as already preprocessed.
fn ready_product(product: RasterProduct) -> Result<RasterProduct> {
    if (product.meta.pixel_size_m - 10.0).abs() < 1e-6 {
        Ok(oseg_data::preprocess_product(&product)?)
    } else if (product.meta.pixel_size_m - 40.0).abs() < 1e-6
        && matches!(product.data, RasterData::F32(_))
    {
        Ok(product)
    } else {
        Err(PipelineError::Pipeline(format!(
            "product {} has unsupported pixel size {} (expected 10 m raw or 40 m preprocessed)",
            product.meta.product_id, product.meta.pixel_size_m
        )))
    }
}

pub struct PipelineOutput {
    pub geojson: String,
    pub report: RunReport,
    /// Per-product soft maps, keyed by product id (for persistence).
    pub soft_maps: Vec<(String, RasterProduct)>,
}

/// Run the full detection pipeline over every matching product. Per-product
/// failures are isolated into the report; the remaining products still
/// produce output.
pub fn run_pipeline<S: ProductSource>(request: &PipelineRequest, source: &S) -> Result<PipelineOutput> {
    let interval = request.interval()?;
    if request.tau_filter < request.tau_color {
        return Err(PipelineError::Pipeline("tau_filter must be at least tau_color".into()));
    }
    let (_, seg_graph) = checkpoint::load_model(&request.checkpoint)?;
    let (cat_models, categories_skipped) = match &request.classify_dir {
        Some(dir) => load_category_models(dir),
        None => (Vec::new(), Vec::new()),
    };

    let descriptors = source.query(&request.area, interval, request.overlap_min)?;
    let mut report = RunReport {
        products_found: descriptors.len(),
        categories_skipped,
        ..RunReport::default()
    };

    type ProductResult = (String, Result<(Vec<Value>, usize, Option<RasterProduct>)>);
    let mut results: Vec<ProductResult> = descriptors
        .par_iter()
        .map(|desc| {
            let run_one = || -> Result<(Vec<Value>, usize, Option<RasterProduct>)> {
                let product = ready_product(source.fetch(desc)?)?;
                let grid = product.to_f32_grid();
                let cfg = TilingConfig::new(request.window, request.use_tta);
                let soft = predict_tiled_grid(&seg_graph, &grid, &cfg)?;
                let kept = filter_color(&soft, request.tau_filter, request.tau_color)
                    .map_err(PipelineError::Inference)?;
                let slicks = extract_slicks(&kept, &soft, product.meta.pixel_size_m);
                let slicks =
                    prune_slicks(slicks, request.prune_min_area_km2, request.prune_max_isolation_km);
                let predictions = if cat_models.is_empty() {
                    vec![Vec::new(); slicks.len()]
                } else {
                    classify_slicks(&slicks, &grid, &soft, &cat_models)?
                };
                let ctx = FeatureContext {
                    product_id: product.meta.product_id.clone(),
                    timestamp: product.meta.timestamp.clone(),
                };
                let mut features = Vec::with_capacity(slicks.len());
                for (slick, preds) in slicks.iter().zip(&predictions) {
                    let cats = if preds.is_empty() { None } else { Some(preds.as_slice()) };
                    features.push(slick_feature(slick, &product.meta.georef, &ctx, cats)?);
                }
                let soft_raster = crate::tiling::soft_map_to_raster(&soft, &product);
                Ok((features, slicks.len(), Some(soft_raster)))
            };
            (desc.id.clone(), run_one())
        })
        .collect();

    // Deterministic assembly: order by product id.
    results.sort_by(|a, b| a.0.cmp(&b.0));
    let mut features = Vec::new();
    let mut soft_maps = Vec::new();
    for (id, result) in results {
        match result {
            Ok((fs, n_slicks, soft)) => {
                report.products_processed += 1;
                if n_slicks > 0 {
                    report.products_with_detections += 1;
                }
                report.total_slicks += n_slicks;
                features.extend(fs);
                if let Some(s) = soft {
                    soft_maps.push((id, s));
                }
            }
            Err(e) => report.failures.push((id, e.to_string())),
        }
    }

    Ok(PipelineOutput {
        geojson: to_document(&feature_collection(features)),
        report,
        soft_maps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_fraction_basics() {
        let product = LonLatBox { lon_min: 0.0, lat_min: 0.0, lon_max: 1.0, lat_max: 1.0 };
        let full = LonLatBox { lon_min: -1.0, lat_min: -1.0, lon_max: 2.0, lat_max: 2.0 };
        assert!((full.overlap_fraction_of(&product) - 1.0).abs() < 1e-9);
        let half = LonLatBox { lon_min: 0.5, lat_min: 0.0, lon_max: 2.0, lat_max: 1.0 };
        assert!((half.overlap_fraction_of(&product) - 0.5).abs() < 1e-9);
        let none = LonLatBox { lon_min: 2.0, lat_min: 2.0, lon_max: 3.0, lat_max: 3.0 };
        assert_eq!(none.overlap_fraction_of(&product), 0.0);
    }

    #[test]
    fn remote_stub_reports_unimplemented() {
        let stub = RemoteStubSource { endpoint: "https://archive.example".into() };
        let area = LonLatBox { lon_min: 0.0, lat_min: 0.0, lon_max: 1.0, lat_max: 1.0 };
        let t = DateTime::parse_from_rfc3339("2019-01-01T00:00:00Z").unwrap().with_timezone(&Utc);
        let err = stub.query(&area, (t, t + chrono::Duration::days(1)), 0.2).unwrap_err();
        assert!(err.to_string().contains("not implemented"), "{err}");
    }

    #[test]
    fn request_interval_validation() {
        let mut req = PipelineRequest {
            area: LonLatBox { lon_min: 0.0, lat_min: 0.0, lon_max: 1.0, lat_max: 1.0 },
            start: "2019-01-02T00:00:00Z".into(),
            end: "2019-01-01T00:00:00Z".into(),
            overlap_min: 0.2,
            checkpoint: PathBuf::from("x.oseg"),
            tau_filter: 0.8,
            tau_color: 0.5,
            prune_min_area_km2: 0.25,
            prune_max_isolation_km: 1.5,
            window: 160,
            use_tta: false,
            classify_dir: None,
        };
        assert!(req.interval().is_err());
        req.end = "2019-01-03T00:00:00Z".into();
        assert!(req.interval().is_ok());
    }
}
