//! Product preprocessing: 11x11 boxcar smoothing (mirror border), 4x
//! decimation from 10 m to 40 m pixels, clipping at 150, and scaling into
//! [0, 1] by the clip value.

use crate::error::{DataError, Result};
use crate::grid::{mirror_index, Grid};
use crate::raster::{RasterData, RasterProduct};

pub const BOXCAR_SIZE: usize = 11;
pub const DOWNSAMPLE: usize = 4;
/// Roughly the 98th percentile of VV backscatter; oil pixels sit below it.
pub const CLIP_VALUE: f32 = 150.0;

/// Separable uniform mean filter with mirrored borders.
pub fn boxcar_filter(input: &Grid<f32>, size: usize) -> Grid<f32> {
    assert!(size % 2 == 1, "boxcar window must be odd");
    let (w, h) = (input.width(), input.height());
    let half = (size / 2) as isize;
    let inv = 1.0 / size as f32;

    // Horizontal pass.
    let mut hpass = Grid::new(w, h, 0.0f32);
    for r in 0..h {
        let row = input.row(r);
        let mut acc = 0.0f32;
        for k in -half..=half {
            acc += row[mirror_index(k, w)];
        }
        hpass.set(r, 0, acc * inv);
        for c in 1..w {
            acc += row[mirror_index(c as isize + half, w)];
            acc -= row[mirror_index(c as isize - half - 1, w)];
            hpass.set(r, c, acc * inv);
        }
    }

    // Vertical pass.
    let mut out = Grid::new(w, h, 0.0f32);
    for c in 0..w {
        let mut acc = 0.0f32;
        for k in -half..=half {
            acc += hpass.get(mirror_index(k, h), c);
        }
        out.set(0, c, acc * inv);
        for r in 1..h {
            acc += hpass.get(mirror_index(r as isize + half, h), c);
            acc -= hpass.get(mirror_index(r as isize - half - 1, h), c);
            out.set(r, c, acc * inv);
        }
    }
    out
}

/// Keep every `factor`-th pixel starting at (0, 0).
pub fn decimate(input: &Grid<f32>, factor: usize) -> Grid<f32> {
    let (w, h) = (input.width() / factor, input.height() / factor);
    let mut out = Grid::new(w, h, 0.0f32);
    for r in 0..h {
        for c in 0..w {
            out.set(r, c, input.get(r * factor, c * factor));
        }
    }
    out
}

/// Clip at `CLIP_VALUE` and scale into [0, 1]. Idempotent on already-scaled
/// data only in the clip sense; use once.
pub fn clip_scale(input: &Grid<f32>) -> Grid<f32> {
    input.map(|v| v.min(CLIP_VALUE).max(0.0) / CLIP_VALUE)
}

/// Full 10 m -> 40 m chain. The georeference spacing and pixel size scale by
/// the decimation factor; the incidence ramp endpoints are unchanged.
pub fn preprocess_product(raw: &RasterProduct) -> Result<RasterProduct> {
    if (raw.meta.pixel_size_m - 10.0).abs() > 1e-6 {
        return Err(DataError::Preprocess(format!(
            "expected a 10 m product, got {} m",
            raw.meta.pixel_size_m
        )));
    }
    if raw.width < BOXCAR_SIZE || raw.height < BOXCAR_SIZE {
        return Err(DataError::Preprocess(format!(
            "product {}x{} is smaller than the {}x{} filter window",
            raw.width, raw.height, BOXCAR_SIZE, BOXCAR_SIZE
        )));
    }
    let smoothed = boxcar_filter(&raw.to_f32_grid(), BOXCAR_SIZE);
    let small = decimate(&smoothed, DOWNSAMPLE);
    let scaled = clip_scale(&small);

    let mut meta = raw.meta.clone();
    meta.pixel_size_m *= DOWNSAMPLE as f64;
    meta.georef.lon_per_col *= DOWNSAMPLE as f64;
    meta.georef.lat_per_row *= DOWNSAMPLE as f64;

    Ok(RasterProduct {
        width: scaled.width(),
        height: scaled.height(),
        data: RasterData::F32(scaled.into_data()),
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoRef, ProductMeta};

    fn raw(width: usize, height: usize, value: u16) -> RasterProduct {
        RasterProduct {
            width,
            height,
            data: RasterData::U16(vec![value; width * height]),
            meta: ProductMeta {
                product_id: "P".into(),
                timestamp: "2018-01-01T00:00:00Z".into(),
                incidence_first_deg: 30.0,
                incidence_last_deg: 45.0,
                pixel_size_m: 10.0,
                georef: GeoRef { origin_lon: 0.0, origin_lat: 0.0, lon_per_col: 1e-4, lat_per_row: -1e-4 },
            },
        }
    }

    #[test]
    fn constant_raster_survives_all_stages() {
        let out = preprocess_product(&raw(40, 40, 100)).unwrap();
        assert_eq!(out.width, 10);
        assert_eq!(out.height, 10);
        match &out.data {
            RasterData::F32(v) => {
                for &x in v {
                    assert!((x - 100.0 / 150.0).abs() < 1e-6);
                }
            }
            _ => panic!("expected f32"),
        }
        assert!((out.meta.pixel_size_m - 40.0).abs() < 1e-9);
    }

    #[test]
    fn outliers_clip_to_one() {
        let out = preprocess_product(&raw(44, 44, 65535)).unwrap();
        match &out.data {
            RasterData::F32(v) => assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-6)),
            _ => panic!(),
        }
    }

    #[test]
    fn too_small_product_is_rejected() {
        let err = preprocess_product(&raw(8, 40, 1)).unwrap_err().to_string();
        assert!(err.contains("filter window"), "{err}");
    }

    #[test]
    fn clip_scale_is_idempotent_composed_with_rescale() {
        let g = Grid::from_vec(3, 1, vec![-5.0, 75.0, 400.0]);
        let once = clip_scale(&g);
        assert_eq!(once.data(), &[0.0, 0.5, 1.0]);
        // Applying clip at the display scale twice changes nothing.
        let twice = clip_scale(&once.map(|v| v * CLIP_VALUE));
        assert_eq!(twice.data(), once.data());
    }

    #[test]
    fn boxcar_mean_of_step_edge() {
        // A 1-wide bright column inside an 11-window spreads to 1/11.
        let mut g = Grid::new(33, 13, 0.0f32);
        for r in 0..13 {
            g.set(r, 16, 11.0);
        }
        let s = boxcar_filter(&g, 11);
        assert!((s.get(6, 16) - 1.0).abs() < 1e-5);
        assert!((s.get(6, 10) - 0.0).abs() < 1e-5); // 6 away: outside the window
        assert!((s.get(6, 11) - 1.0).abs() < 1e-5); // 5 away: inside
    }
}
