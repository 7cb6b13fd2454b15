//! Random affine augmentation, applied identically to the VV patch and its
//! mask. VV resamples bilinearly, the mask nearest-neighbor so it stays
//! binary; borders fill by mirroring or zeros per the configuration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{mirror_index, Grid};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    Mirror,
    Zero,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub width_shift_frac: f64,
    pub height_shift_frac: f64,
    /// Shear angle bound, radians.
    pub shear_max: f64,
    /// Zoom drawn from [1 - zoom_max, 1 + zoom_max].
    pub zoom_max: f64,
    pub flip_prob: f64,
    pub pad_mode: PadMode,
}

impl AugmentConfig {
    /// The search-space augmentation: rotation 90 degrees, 0.1 shifts,
    /// 0.3 shear, 0.2 zoom, 0.5 flips, mirror padding.
    pub fn standard() -> Self {
        Self {
            max_rotation_deg: 90.0,
            width_shift_frac: 0.1,
            height_shift_frac: 0.1,
            shear_max: 0.3,
            zoom_max: 0.2,
            flip_prob: 0.5,
            pad_mode: PadMode::Mirror,
        }
    }

    pub fn none() -> Self {
        Self {
            max_rotation_deg: 0.0,
            width_shift_frac: 0.0,
            height_shift_frac: 0.0,
            shear_max: 0.0,
            zoom_max: 0.0,
            flip_prob: 0.0,
            pad_mode: PadMode::Mirror,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.max_rotation_deg == 0.0
            && self.width_shift_frac == 0.0
            && self.height_shift_frac == 0.0
            && self.shear_max == 0.0
            && self.zoom_max == 0.0
            && self.flip_prob == 0.0
    }
}

/// 2x2 linear map plus translation; forward sense is output = A*(p-c) + c + t.
struct Affine {
    a: [f64; 4],
    tx: f64,
    ty: f64,
}

impl Affine {
    fn inverse_map(&self, cx: f64, cy: f64, x_out: f64, y_out: f64) -> (f64, f64) {
        let det = self.a[0] * self.a[3] - self.a[1] * self.a[2];
        let inv = [self.a[3] / det, -self.a[1] / det, -self.a[2] / det, self.a[0] / det];
        let dx = x_out - cx - self.tx;
        let dy = y_out - cy - self.ty;
        (cx + inv[0] * dx + inv[1] * dy, cy + inv[2] * dx + inv[3] * dy)
    }
}

fn sample_affine<R: Rng>(cfg: &AugmentConfig, w: usize, h: usize, rng: &mut R) -> Affine {
    let deg = if cfg.max_rotation_deg > 0.0 {
        rng.gen_range(-cfg.max_rotation_deg..cfg.max_rotation_deg)
    } else {
        0.0
    };
    let theta = deg.to_radians();
    let shear = if cfg.shear_max > 0.0 { rng.gen_range(-cfg.shear_max..cfg.shear_max) } else { 0.0 };
    let zoom = if cfg.zoom_max > 0.0 {
        rng.gen_range(1.0 - cfg.zoom_max..1.0 + cfg.zoom_max)
    } else {
        1.0
    };
    let fx = if cfg.flip_prob > 0.0 && rng.gen_bool(cfg.flip_prob) { -1.0 } else { 1.0 };
    let fy = if cfg.flip_prob > 0.0 && rng.gen_bool(cfg.flip_prob) { -1.0 } else { 1.0 };
    let tx = if cfg.width_shift_frac > 0.0 {
        rng.gen_range(-cfg.width_shift_frac..cfg.width_shift_frac) * w as f64
    } else {
        0.0
    };
    let ty = if cfg.height_shift_frac > 0.0 {
        rng.gen_range(-cfg.height_shift_frac..cfg.height_shift_frac) * h as f64
    } else {
        0.0
    };

    // Rot(theta) * Shear(lambda) * Scale(zoom*flip)
    let (sin, cos) = theta.sin_cos();
    let (ss, sc) = (shear.sin(), shear.cos());
    let rot = [cos, -sin, sin, cos];
    let sh = [1.0, -ss, 0.0, sc];
    let sz = [zoom * fx, 0.0, 0.0, zoom * fy];
    let m = mat_mul(&rot, &mat_mul(&sh, &sz));
    Affine { a: m, tx, ty }
}

fn mat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn sample_bilinear(grid: &Grid<f32>, x: f64, y: f64, pad: PadMode) -> f32 {
    let (w, h) = (grid.width(), grid.height());
    let x0 = x.floor();
    let y0 = y.floor();
    let wx = (x - x0) as f32;
    let wy = (y - y0) as f32;
    let fetch = |xi: isize, yi: isize| -> f32 {
        match pad {
            PadMode::Mirror => grid.get(mirror_index(yi, h), mirror_index(xi, w)),
            PadMode::Zero => {
                if xi < 0 || yi < 0 || xi >= w as isize || yi >= h as isize {
                    0.0
                } else {
                    grid.get(yi as usize, xi as usize)
                }
            }
        }
    };
    let (xi, yi) = (x0 as isize, y0 as isize);
    let a = fetch(xi, yi);
    let b = fetch(xi + 1, yi);
    let c = fetch(xi, yi + 1);
    let d = fetch(xi + 1, yi + 1);
    let top = a + (b - a) * wx;
    let bot = c + (d - c) * wx;
    top + (bot - top) * wy
}

fn sample_nearest(grid: &Grid<u8>, x: f64, y: f64, pad: PadMode) -> u8 {
    let (w, h) = (grid.width(), grid.height());
    let xi = x.round() as isize;
    let yi = y.round() as isize;
    match pad {
        PadMode::Mirror => grid.get(mirror_index(yi, h), mirror_index(xi, w)),
        PadMode::Zero => {
            if xi < 0 || yi < 0 || xi >= w as isize || yi >= h as isize {
                0
            } else {
                grid.get(yi as usize, xi as usize)
            }
        }
    }
}

/// One random affine applied to both channels of the sample.
pub fn augment<R: Rng>(sample: &Sample, cfg: &AugmentConfig, rng: &mut R) -> Sample {
    if cfg.is_identity() {
        return sample.clone();
    }
    let (w, h) = (sample.vv.width(), sample.vv.height());
    let t = sample_affine(cfg, w, h, rng);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);

    let mut vv = Grid::new(w, h, 0.0f32);
    let mut mask = Grid::new(w, h, 0u8);
    for r in 0..h {
        for c in 0..w {
            let (sx, sy) = t.inverse_map(cx, cy, c as f64, r as f64);
            vv.set(r, c, sample_bilinear(&sample.vv, sx, sy, cfg.pad_mode));
            mask.set(r, c, sample_nearest(&sample.mask, sx, sy, cfg.pad_mode));
        }
    }
    Sample { vv, mask, ..sample.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_with_blob() -> Sample {
        let n = 64;
        let mut vv = Grid::new(n, n, 0.5f32);
        let mut mask = Grid::new(n, n, 0u8);
        for r in 18..40 {
            for c in 10..30 {
                vv.set(r, c, 0.1);
                mask.set(r, c, 1);
            }
        }
        Sample { vv, mask, event_id: Some(1), incidence_angle: 37.0, categories: None }
    }

    #[test]
    fn zero_config_is_identity() {
        let s = sample_with_blob();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment(&s, &AugmentConfig::none(), &mut rng);
        assert_eq!(out, s);
    }

    #[test]
    fn flip_twice_is_identity() {
        let s = sample_with_blob();
        let cfg = AugmentConfig { flip_prob: 1.0, ..AugmentConfig::none() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let once = augment(&s, &cfg, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let twice = augment(&once, &cfg, &mut rng);
        assert_ne!(once, s);
        assert_eq!(twice.vv.data(), s.vv.data());
        assert_eq!(twice.mask.data(), s.mask.data());
    }

    #[test]
    fn mask_stays_binary_and_count_is_stable_under_rotation() {
        let s = sample_with_blob();
        let count0 = s.oil_pixels() as f64;
        let cfg = AugmentConfig {
            max_rotation_deg: 90.0,
            flip_prob: 0.5,
            width_shift_frac: 0.05,
            height_shift_frac: 0.05,
            ..AugmentConfig::none()
        };
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment(&s, &cfg, &mut rng);
            assert!(out.mask.data().iter().all(|&v| v == 0 || v == 1));
            let ratio = out.oil_pixels() as f64 / count0;
            assert!((0.7..=1.3).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }
}
