//! Patch extraction: the per-event centered set (D1) and the full
//! segmentation set (D2).
//!
//! Patches live on a fixed 160-pixel grid anchored at (0, 0). D1 holds one
//! patch per event: the grid patch whose center is nearest the event's pixel
//! centroid (ties to the smallest row, then column), carrying the event's
//! category label. D2 is D1 plus every grid patch containing at least one
//! oil pixel plus an equal number of randomly sampled oil-free patches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::category::CategoryLabel;
use crate::error::{DataError, Result};
use crate::grid::Grid;
use crate::raster::RasterProduct;
use crate::sample::{Sample, PATCH_SIZE};

#[derive(Debug, Clone)]
pub struct OilEvent {
    pub id: u64,
    pub label: CategoryLabel,
}

#[derive(Debug, Clone)]
pub struct PatchSets {
    pub d1: Vec<Sample>,
    pub d2: Vec<Sample>,
}

/// `event_map`: per-pixel event index + 1 (0 = no event), aligned with the
/// preprocessed product; `mask`: binary oil mask on the same grid.
pub fn extract_patches(
    product: &RasterProduct,
    mask: &Grid<u8>,
    event_map: &Grid<u32>,
    events: &[OilEvent],
    seed: u64,
) -> Result<PatchSets> {
    let vv = product.to_f32_grid();
    if mask.width() != vv.width() || mask.height() != vv.height() {
        return Err(DataError::Patches(format!(
            "mask {}x{} does not align with product {}x{}",
            mask.width(),
            mask.height(),
            vv.width(),
            vv.height()
        )));
    }
    let tiles_x = vv.width() / PATCH_SIZE;
    let tiles_y = vv.height() / PATCH_SIZE;
    if tiles_x == 0 || tiles_y == 0 {
        return Err(DataError::Patches(format!(
            "product {}x{} smaller than one {}-pixel patch",
            vv.width(),
            vv.height(),
            PATCH_SIZE
        )));
    }

    // Event centroids.
    let mut sums: Vec<(f64, f64, u64)> = vec![(0.0, 0.0, 0); events.len()];
    for r in 0..vv.height() {
        for c in 0..vv.width() {
            let e = event_map.get(r, c);
            if e > 0 {
                let s = &mut sums[(e - 1) as usize];
                s.0 += r as f64;
                s.1 += c as f64;
                s.2 += 1;
            }
        }
    }

    let cut = |sample_tile: (usize, usize), label: Option<CategoryLabel>, event_id: Option<u64>| {
        let (ty, tx) = sample_tile;
        let (r0, c0) = (ty * PATCH_SIZE, tx * PATCH_SIZE);
        let center_col = c0 + PATCH_SIZE / 2;
        Sample {
            vv: vv.crop(r0, c0, PATCH_SIZE, PATCH_SIZE),
            mask: mask.crop(r0, c0, PATCH_SIZE, PATCH_SIZE),
            event_id,
            incidence_angle: product.meta.incidence_at_col(center_col, vv.width()),
            categories: label,
        }
    };

    // D1: nearest-grid-center patch per event.
    let mut d1 = Vec::with_capacity(events.len());
    let mut d1_tiles: Vec<(usize, usize)> = Vec::with_capacity(events.len());
    for (idx, ev) in events.iter().enumerate() {
        let (sr, sc, n) = sums[idx];
        if n == 0 {
            return Err(DataError::Patches(format!("event {} has an empty mask", ev.id)));
        }
        let (cy, cx) = (sr / n as f64, sc / n as f64);
        let mut best: Option<((usize, usize), f64)> = None;
        for ty in 0..tiles_y {
            for tx in 0..tiles_x {
                let center = (
                    (ty * PATCH_SIZE) as f64 + PATCH_SIZE as f64 / 2.0 - 0.5,
                    (tx * PATCH_SIZE) as f64 + PATCH_SIZE as f64 / 2.0 - 0.5,
                );
                let d = (center.0 - cy).powi(2) + (center.1 - cx).powi(2);
                let better = match best {
                    None => true,
                    // Strict inequality keeps the smallest row/col on ties.
                    Some((_, bd)) => d < bd - 1e-9,
                };
                if better {
                    best = Some(((ty, tx), d));
                }
            }
        }
        let (tile, _) = best.expect("at least one tile");
        d1_tiles.push(tile);
        d1.push(cut(tile, Some(ev.label), Some(ev.id)));
    }

    // Oil-bearing and oil-free tiles.
    let mut oil_tiles = Vec::new();
    let mut clean_tiles = Vec::new();
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let mut has_oil = false;
            'scan: for r in ty * PATCH_SIZE..(ty + 1) * PATCH_SIZE {
                for c in tx * PATCH_SIZE..(tx + 1) * PATCH_SIZE {
                    if mask.get(r, c) != 0 {
                        has_oil = true;
                        break 'scan;
                    }
                }
            }
            if has_oil {
                oil_tiles.push((ty, tx));
            } else {
                clean_tiles.push((ty, tx));
            }
        }
    }

    // D2 = D1 patches, all oil tiles, and an equal count of clean tiles.
    let mut d2 = Vec::new();
    let mut seen: Vec<(usize, usize)> = Vec::new();
    for (i, tile) in d1_tiles.iter().enumerate() {
        if !seen.contains(tile) {
            seen.push(*tile);
            d2.push(d1[i].clone());
        }
    }
    for tile in &oil_tiles {
        if !seen.contains(tile) {
            seen.push(*tile);
            d2.push(cut(*tile, None, None));
        }
    }
    let oil_count = seen.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives = clean_tiles.clone();
    negatives.shuffle(&mut rng);
    for tile in negatives.into_iter().take(oil_count) {
        d2.push(cut(tile, None, None));
    }

    Ok(PatchSets { d1, d2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Event-aware split assignment: every patch of one event lands in the same
/// split, so no event leaks between train and validation/test.
pub fn assign_splits(samples: &[Sample], val_frac: f64, test_frac: f64, seed: u64) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut event_ids: Vec<u64> = samples.iter().filter_map(|s| s.event_id).collect();
    event_ids.sort_unstable();
    event_ids.dedup();
    event_ids.shuffle(&mut rng);
    let n = event_ids.len();
    let n_test = (n as f64 * test_frac).round() as usize;
    let n_val = (n as f64 * val_frac).round() as usize;
    let test_set: Vec<u64> = event_ids[..n_test].to_vec();
    let val_set: Vec<u64> = event_ids[n_test..n_test + n_val].to_vec();

    samples
        .iter()
        .map(|s| match s.event_id {
            Some(id) if test_set.contains(&id) => Split::Test,
            Some(id) if val_set.contains(&id) => Split::Val,
            Some(_) => Split::Train,
            // Event-free patches (negatives) spread by the same fractions.
            None => {
                let r: f64 = rand::Rng::gen(&mut rng);
                if r < test_frac {
                    Split::Test
                } else if r < test_frac + val_frac {
                    Split::Val
                } else {
                    Split::Train
                }
            }
        })
        .collect()
}
