//! Synthetic SAR-like data with exactly known masks and labels.
//!
//! Background speckle is gamma-distributed around a sea mean (sum of ENL
//! exponential draws); slicks are procedurally shaped dark regions produced
//! by a multiplicative damping factor, mimicking how oil damps capillary
//! waves and shifts backscatter low. Shape families map directly onto the
//! categorization labels, so classifier targets are known by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::{Category, CategoryLabel, Contrast, ShapeOutline};
use crate::error::{DataError, Result};
use crate::grid::Grid;
use crate::raster::{GeoRef, ProductMeta, RasterData, RasterProduct};
use crate::sample::{Sample, PATCH_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Patch,
    Linear,
    Angular,
    Tailed,
    /// Uniform draw among the four families, per sample.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastLevel {
    Strong,
    Weak,
    Variable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub patch: usize,
    pub family: ShapeFamily,
    pub contrast: ContrastLevel,
    pub min_slicks: usize,
    pub max_slicks: usize,
    /// Sea backscatter mean in [0, 1] display scale.
    pub sea_mean: f32,
    /// Equivalent number of looks: gamma shape of the speckle.
    pub enl: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            patch: PATCH_SIZE,
            family: ShapeFamily::Mixed,
            contrast: ContrastLevel::Strong,
            min_slicks: 1,
            max_slicks: 1,
            sea_mean: 0.45,
            enl: 5,
            seed: 0,
        }
    }
}

/// Gamma(enl, mean/enl) speckle: mean of `enl` exponential draws.
fn speckle<R: Rng>(mean: f32, enl: u32, rng: &mut R) -> f32 {
    let mut acc = 0.0f64;
    for _ in 0..enl {
        let u: f64 = rng.gen_range(1e-12..1.0);
        acc += -u.ln();
    }
    (acc / enl as f64) as f32 * mean
}

fn damping<R: Rng>(contrast: ContrastLevel, rng: &mut R) -> (f32, Contrast) {
    match contrast {
        ContrastLevel::Strong => (rng.gen_range(0.15..0.35), Contrast::Strong),
        ContrastLevel::Weak => (rng.gen_range(0.55..0.75), Contrast::Weak),
        ContrastLevel::Variable => {
            if rng.gen_bool(0.5) {
                (rng.gen_range(0.15..0.35), Contrast::Strong)
            } else {
                (rng.gen_range(0.55..0.75), Contrast::Weak)
            }
        }
    }
}

/// Paint a wobbly filled blob; returns painted pixel count.
fn paint_blob<R: Rng>(mask: &mut Grid<u8>, cy: f64, cx: f64, radius: f64, stretch: f64, rng: &mut R) -> usize {
    let (h, w) = (mask.height(), mask.width());
    let a1 = rng.gen_range(0.0..std::f64::consts::TAU);
    let a2 = rng.gen_range(0.0..std::f64::consts::TAU);
    let k1 = rng.gen_range(2..5) as f64;
    let k2 = rng.gen_range(5..8) as f64;
    let theta = rng.gen_range(0.0..std::f64::consts::PI);
    let (st, ct) = (theta.sin(), theta.cos());
    let mut count = 0;
    let reach = radius * (1.0 + 0.5) * stretch + 2.0;
    let r0 = ((cy - reach).floor().max(0.0)) as usize;
    let r1 = ((cy + reach).ceil().min(h as f64 - 1.0)) as usize;
    let c0 = ((cx - reach).floor().max(0.0)) as usize;
    let c1 = ((cx + reach).ceil().min(w as f64 - 1.0)) as usize;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let dy = r as f64 - cy;
            let dx = c as f64 - cx;
            // Rotate then squash one axis by the stretch factor.
            let u = (ct * dx + st * dy) / stretch;
            let v = -st * dx + ct * dy;
            let dist = (u * u + v * v).sqrt();
            let phi = v.atan2(u);
            let rho = radius * (1.0 + 0.3 * (k1 * phi + a1).sin() + 0.2 * (k2 * phi + a2).sin());
            if dist < rho && mask.get(r, c) == 0 {
                mask.set(r, c, 1);
                count += 1;
            }
        }
    }
    count
}

/// Paint a thick line segment; returns painted pixel count.
fn paint_segment(mask: &mut Grid<u8>, p0: (f64, f64), p1: (f64, f64), half_width: f64) -> usize {
    let (h, w) = (mask.height(), mask.width());
    let (y0, x0) = p0;
    let (y1, x1) = p1;
    let (dy, dx) = (y1 - y0, x1 - x0);
    let len2 = dy * dy + dx * dx;
    let r0 = (y0.min(y1) - half_width).floor().max(0.0) as usize;
    let r1 = (y0.max(y1) + half_width).ceil().min(h as f64 - 1.0) as usize;
    let c0 = (x0.min(x1) - half_width).floor().max(0.0) as usize;
    let c1 = (x0.max(x1) + half_width).ceil().min(w as f64 - 1.0) as usize;
    let mut count = 0;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let t = if len2 > 0.0 {
                (((r as f64 - y0) * dy + (c as f64 - x0) * dx) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let py = y0 + t * dy;
            let px = x0 + t * dx;
            let d2 = (r as f64 - py).powi(2) + (c as f64 - px).powi(2);
            if d2 <= half_width * half_width && mask.get(r, c) == 0 {
                mask.set(r, c, 1);
                count += 1;
            }
        }
    }
    count
}

fn paint_family<R: Rng>(mask: &mut Grid<u8>, family: ShapeFamily, rng: &mut R) -> (ShapeFamily, usize) {
    let n = mask.width() as f64;
    let family = match family {
        ShapeFamily::Mixed => {
            [ShapeFamily::Patch, ShapeFamily::Linear, ShapeFamily::Angular, ShapeFamily::Tailed]
                [rng.gen_range(0..4)]
        }
        f => f,
    };
    let cy = rng.gen_range(0.3..0.7) * n;
    let cx = rng.gen_range(0.3..0.7) * n;
    let painted = match family {
        ShapeFamily::Patch => {
            let radius = rng.gen_range(0.08..0.18) * n;
            let stretch = rng.gen_range(1.0..1.5);
            paint_blob(mask, cy, cx, radius, stretch, rng)
        }
        ShapeFamily::Linear => {
            let len = rng.gen_range(0.35..0.6) * n;
            let half_w = rng.gen_range(1.5..3.5);
            let phi = rng.gen_range(0.0..std::f64::consts::PI);
            let (s, c) = (phi.sin(), phi.cos());
            paint_segment(
                mask,
                (cy - s * len / 2.0, cx - c * len / 2.0),
                (cy + s * len / 2.0, cx + c * len / 2.0),
                half_w,
            )
        }
        ShapeFamily::Angular => {
            let len = rng.gen_range(0.2..0.35) * n;
            let half_w = rng.gen_range(1.5..3.5);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let bend = phi + rng.gen_range(1.0..2.1); // 57..120 degree elbow
            let a = paint_segment(mask, (cy, cx), (cy + phi.sin() * len, cx + phi.cos() * len), half_w);
            let b = paint_segment(mask, (cy, cx), (cy + bend.sin() * len, cx + bend.cos() * len), half_w);
            a + b
        }
        ShapeFamily::Tailed => {
            let radius = rng.gen_range(0.06..0.1) * n;
            let blob = paint_blob(mask, cy, cx, radius, 1.0, rng);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let len = rng.gen_range(0.25..0.4) * n;
            let tail = paint_segment(
                mask,
                (cy + phi.sin() * radius * 0.8, cx + phi.cos() * radius * 0.8),
                (cy + phi.sin() * (radius + len), cx + phi.cos() * (radius + len)),
                rng.gen_range(1.0..2.0),
            );
            blob + tail
        }
        ShapeFamily::Mixed => unreachable!(),
    };
    (family, painted)
}

fn label_for(family: ShapeFamily, n_slicks: usize, contrast: Contrast) -> CategoryLabel {
    CategoryLabel {
        patch: family == ShapeFamily::Patch,
        linear: family == ShapeFamily::Linear,
        angular: family == ShapeFamily::Angular,
        tailed: family == ShapeFamily::Tailed,
        shape_outline: if n_slicks > 1 { ShapeOutline::Fragmented } else { ShapeOutline::Continuous },
        contrast,
        ..CategoryLabel::default()
    }
}

/// Generate labeled patches. Each sample derives its RNG stream from
/// `(seed, index)`, so generation is order- and parallelism-independent.
pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<Vec<Sample>> {
    if cfg.patch < 16 {
        return Err(DataError::Synth("patch size too small".into()));
    }
    if cfg.min_slicks > cfg.max_slicks {
        return Err(DataError::Synth("min_slicks exceeds max_slicks".into()));
    }
    let mut out = Vec::with_capacity(cfg.n_samples);
    for idx in 0..cfg.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (idx as u64).wrapping_mul(0x9e37_79b9));
        let n = cfg.patch;
        let mut mask = Grid::new(n, n, 0u8);
        let n_slicks = if cfg.max_slicks == 0 {
            0
        } else {
            rng.gen_range(cfg.min_slicks..=cfg.max_slicks)
        };
        let mut family_used = cfg.family;
        for _ in 0..n_slicks {
            let (fam, _) = paint_family(&mut mask, cfg.family, &mut rng);
            family_used = fam;
        }
        let (damp, contrast) = damping(cfg.contrast, &mut rng);
        let mut vv = Grid::new(n, n, 0.0f32);
        for r in 0..n {
            for c in 0..n {
                let mut v = speckle(cfg.sea_mean, cfg.enl, &mut rng);
                if mask.get(r, c) != 0 {
                    v *= damp;
                }
                vv.set(r, c, v.clamp(0.0, 1.0));
            }
        }
        let label = if n_slicks > 0 { Some(label_for(family_used, n_slicks, contrast)) } else { None };
        out.push(Sample {
            vv,
            mask,
            event_id: Some(idx as u64),
            incidence_angle: rng.gen_range(30.0..45.0),
            categories: label,
        });
    }
    Ok(out)
}

/// A dataset for one category: equal halves of each class value where the
/// generator controls the trait directly (shape families), labeled by
/// construction.
pub fn synthesize_category_dataset(category: Category, n_samples: usize, seed: u64) -> Result<Vec<Sample>> {
    let positive_family = match category {
        Category::PatchShape => ShapeFamily::Patch,
        Category::LinearShape => ShapeFamily::Linear,
        Category::AngularShape => ShapeFamily::Angular,
        Category::TailedShape => ShapeFamily::Tailed,
        other => {
            return Err(DataError::Synth(format!(
                "generator controls shape families only, not {:?}",
                other
            )))
        }
    };
    // Negatives draw from the other three families.
    let neg_families: Vec<ShapeFamily> =
        [ShapeFamily::Patch, ShapeFamily::Linear, ShapeFamily::Angular, ShapeFamily::Tailed]
            .into_iter()
            .filter(|f| *f != positive_family)
            .collect();
    let mut out = Vec::with_capacity(n_samples);
    for idx in 0..n_samples {
        let positive = idx % 2 == 0;
        let family = if positive {
            positive_family
        } else {
            neg_families[(idx / 2) % neg_families.len()]
        };
        let cfg = SynthConfig {
            n_samples: 1,
            family,
            seed: seed ^ (idx as u64).wrapping_mul(0x517c_c1b7),
            ..SynthConfig::default()
        };
        let mut s = synthesize_dataset(&cfg)?.remove(0);
        s.event_id = Some(idx as u64);
        out.push(s);
    }
    Ok(out)
}

// ------------------------------------------------------- product-level

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PlantedShape {
    /// Filled disc, radius in 10 m pixels.
    Disc { radius: f64 },
    /// Thick segment: length/width in 10 m pixels, angle in radians.
    Bar { length: f64, half_width: f64, angle: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSlick {
    /// Center in 10 m pixel coordinates (row, col).
    pub center: (f64, f64),
    pub shape: PlantedShape,
    pub damping: f32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthProductConfig {
    pub width: usize,
    pub height: usize,
    pub product_id: String,
    pub timestamp: String,
    pub origin_lon: f64,
    pub origin_lat: f64,
    /// Sea mean in raw backscatter units (clip value is 150).
    pub sea_mean_raw: f32,
    pub enl: u32,
    pub slicks: Vec<PlantedSlick>,
    pub seed: u64,
}

/// A raw 10 m u16 product plus the exact planted mask at 10 m.
pub fn synthesize_product(cfg: &SynthProductConfig) -> Result<(RasterProduct, Grid<u8>)> {
    if cfg.width < 64 || cfg.height < 64 {
        return Err(DataError::Synth("product too small".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mask = Grid::new(cfg.width, cfg.height, 0u8);
    let mut damp = Grid::new(cfg.width, cfg.height, 1.0f32);
    for slick in &cfg.slicks {
        let before: Vec<u8> = mask.data().to_vec();
        match slick.shape {
            PlantedShape::Disc { radius } => {
                paint_blob_fixed(&mut mask, slick.center.0, slick.center.1, radius);
            }
            PlantedShape::Bar { length, half_width, angle } => {
                let (s, c) = (angle.sin(), angle.cos());
                let (cy, cx) = slick.center;
                paint_segment(
                    &mut mask,
                    (cy - s * length / 2.0, cx - c * length / 2.0),
                    (cy + s * length / 2.0, cx + c * length / 2.0),
                    half_width,
                );
            }
        }
        for (i, (&b, a)) in before.iter().zip(mask.data()).enumerate() {
            if b == 0 && *a == 1 {
                damp.data_mut()[i] = slick.damping;
            }
        }
    }
    let mut values = Vec::with_capacity(cfg.width * cfg.height);
    for i in 0..cfg.width * cfg.height {
        let v = speckle(cfg.sea_mean_raw, cfg.enl, &mut rng) * damp.data()[i];
        values.push(v.round().clamp(0.0, 65535.0) as u16);
    }
    let meta = ProductMeta {
        product_id: cfg.product_id.clone(),
        timestamp: cfg.timestamp.clone(),
        incidence_first_deg: 30.0,
        incidence_last_deg: 45.0,
        pixel_size_m: 10.0,
        georef: GeoRef {
            origin_lon: cfg.origin_lon,
            origin_lat: cfg.origin_lat,
            // 10 m spacing at mid latitudes, equirectangular.
            lon_per_col: 10.0 / 111_320.0,
            lat_per_row: -10.0 / 111_320.0,
        },
    };
    Ok((
        RasterProduct {
            width: cfg.width,
            height: cfg.height,
            data: RasterData::U16(values),
            meta,
        },
        mask,
    ))
}

/// Plain disc without wobble: exact area control for fixtures.
fn paint_blob_fixed(mask: &mut Grid<u8>, cy: f64, cx: f64, radius: f64) {
    let (h, w) = (mask.height(), mask.width());
    let r0 = (cy - radius - 1.0).floor().max(0.0) as usize;
    let r1 = (cy + radius + 1.0).ceil().min(h as f64 - 1.0) as usize;
    let c0 = (cx - radius - 1.0).floor().max(0.0) as usize;
    let c1 = (cx + radius + 1.0).ceil().min(w as f64 - 1.0) as usize;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
            if d2 <= radius * radius {
                mask.set(r, c, 1);
            }
        }
    }
}

/// Second-moment eccentricity of a mask in [0, 1); elongated shapes
/// approach 1.
pub fn mask_eccentricity(mask: &Grid<u8>) -> f64 {
    let mut n = 0.0;
    let (mut sy, mut sx) = (0.0, 0.0);
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) != 0 {
                n += 1.0;
                sy += r as f64;
                sx += c as f64;
            }
        }
    }
    if n < 2.0 {
        return 0.0;
    }
    let (my, mx) = (sy / n, sx / n);
    let (mut syy, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) != 0 {
                let dy = r as f64 - my;
                let dx = c as f64 - mx;
                syy += dy * dy;
                sxx += dx * dx;
                sxy += dx * dy;
            }
        }
    }
    let (a, b, cc) = (sxx / n, sxy / n, syy / n);
    let tr = a + cc;
    let det = a * cc - b * b;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = (tr / 2.0 - disc).max(1e-12);
    (1.0 - l2 / l1).sqrt()
}
