//! Whole-product prediction: overlapping sliding windows, 8-fold dihedral
//! test-time augmentation, and squared-sine blending.
//!
//! At the default stride of half the window, the separable sin^2 weight
//! window forms an exact partition of unity over the interior
//! (`sin^2 + cos^2 = 1`); accumulated weights are normalized anyway so
//! borders come out exact too.

use oseg_data::{Grid, RasterData, RasterProduct};
use oseg_nn::{run, ExecOptions, Graph, Mode, Tensor};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// Separable squared-sine window (smooth, exact partition of unity at
    /// stride = window/2).
    Spline,
    /// Uniform weights; with stride = window this is plain stitching.
    Rect,
}

#[derive(Debug, Clone, Copy)]
pub struct TilingConfig {
    /// Window side; must divide by 32.
    pub window: usize,
    pub stride: usize,
    pub use_tta: bool,
    pub weights: WeightKind,
}

impl TilingConfig {
    pub fn new(window: usize, use_tta: bool) -> Self {
        Self { window, stride: window / 2, use_tta, weights: WeightKind::Spline }
    }
}

/// The 8 dihedral transforms: rotation index 0..4 (90-degree CW steps)
/// optionally followed by a horizontal flip.
pub fn dihedral_apply(src: &Grid<f32>, idx: usize) -> Grid<f32> {
    let n = src.width();
    debug_assert_eq!(src.width(), src.height(), "dihedral needs square grids");
    let (rot, flip) = (idx % 4, idx >= 4);
    let mut out = Grid::new(n, n, 0.0f32);
    for r in 0..n {
        for c in 0..n {
            // Destination of (r, c) under CW rotation.
            let (mut rr, mut cc) = match rot {
                0 => (r, c),
                1 => (c, n - 1 - r),
                2 => (n - 1 - r, n - 1 - c),
                _ => (n - 1 - c, r),
            };
            if flip {
                cc = n - 1 - cc;
                let _ = &mut rr;
            }
            out.set(rr, cc, src.get(r, c));
        }
    }
    out
}

/// Inverse of `dihedral_apply` with the same index.
pub fn dihedral_invert(src: &Grid<f32>, idx: usize) -> Grid<f32> {
    let n = src.width();
    let (rot, flip) = (idx % 4, idx >= 4);
    let mut out = Grid::new(n, n, 0.0f32);
    for r in 0..n {
        for c in 0..n {
            let (mut rr, mut cc) = (r, c);
            if flip {
                cc = n - 1 - cc;
            }
            // Undo the CW rotation.
            let (sr, sc) = match rot {
                0 => (rr, cc),
                1 => (n - 1 - cc, rr),
                2 => (n - 1 - rr, n - 1 - cc),
                _ => (cc, n - 1 - rr),
            };
            out.set(sr, sc, src.get(r, c));
        }
    }
    out
}

fn mirror_pad(grid: &Grid<f32>, pad_bottom: usize, pad_right: usize) -> Result<Grid<f32>> {
    let (w, h) = (grid.width(), grid.height());
    if pad_bottom > h || pad_right > w {
        return Err(PipelineError::Inference(format!(
            "window larger than padded product ({w}x{h} cannot mirror-extend by {pad_right}x{pad_bottom})"
        )));
    }
    let (nw, nh) = (w + pad_right, h + pad_bottom);
    let mut out = Grid::new(nw, nh, 0.0f32);
    for r in 0..nh {
        let sr = if r < h { r } else { 2 * h - 1 - r };
        for c in 0..nw {
            let sc = if c < w { c } else { 2 * w - 1 - c };
            out.set(r, c, grid.get(sr, sc));
        }
    }
    Ok(out)
}

/// Run the model on one square window; `graph` outputs named `prob`.
fn predict_window(graph: &Graph, window: &Grid<f32>) -> Result<Grid<f32>> {
    let n = window.width();
    let x = Tensor::image(n, n, 1, window.data().to_vec());
    let exec = run(graph, graph, &[x], &ExecOptions::new(Mode::Inference))?;
    let out = exec.output(graph, "prob")?;
    if out.shape() != [1, n, n, 1] {
        return Err(PipelineError::Inference(format!(
            "model produced {:?} for a {n}x{n} window",
            out.shape()
        )));
    }
    Ok(Grid::from_vec(n, n, out.data().to_vec()))
}

fn window_weights(n: usize, kind: WeightKind) -> Vec<f32> {
    match kind {
        WeightKind::Rect => vec![1.0; n],
        WeightKind::Spline => (0..n)
            .map(|i| {
                let s = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin();
                (s * s) as f32
            })
            .collect(),
    }
}

/// Soft oil-probability map for a preprocessed product.
pub fn predict_tiled(graph: &Graph, product: &RasterProduct, cfg: &TilingConfig) -> Result<Grid<f32>> {
    let grid = product.to_f32_grid();
    predict_tiled_grid(graph, &grid, cfg)
}

pub fn predict_tiled_grid(graph: &Graph, grid: &Grid<f32>, cfg: &TilingConfig) -> Result<Grid<f32>> {
    if cfg.window % 32 != 0 {
        return Err(PipelineError::Inference(format!(
            "window {} is not divisible by 32",
            cfg.window
        )));
    }
    if cfg.stride == 0 || cfg.stride > cfg.window {
        return Err(PipelineError::Inference(format!(
            "stride {} must be in 1..={}",
            cfg.stride, cfg.window
        )));
    }
    let (w0, h0) = (grid.width(), grid.height());
    let (win, stride) = (cfg.window, cfg.stride);
    let pad_for = |dim: usize| -> usize {
        if dim < win {
            win - dim
        } else {
            (stride - (dim - win) % stride) % stride
        }
    };
    let padded = mirror_pad(grid, pad_for(h0), pad_for(w0))?;
    let (pw, ph) = (padded.width(), padded.height());

    let wv = window_weights(win, cfg.weights);
    let mut accum = Grid::new(pw, ph, 0.0f32);
    let mut wsum = Grid::new(pw, ph, 0.0f32);

    let mut y = 0;
    while y + win <= ph {
        let mut x = 0;
        while x + win <= pw {
            let tile = padded.crop(y, x, win, win);
            let pred = if cfg.use_tta {
                let mut acc = Grid::new(win, win, 0.0f32);
                for idx in 0..8 {
                    let transformed = dihedral_apply(&tile, idx);
                    let p = predict_window(graph, &transformed)?;
                    let back = dihedral_invert(&p, idx);
                    for (a, b) in acc.data_mut().iter_mut().zip(back.data()) {
                        *a += *b;
                    }
                }
                acc.data_mut().iter_mut().for_each(|v| *v /= 8.0);
                acc
            } else {
                predict_window(graph, &tile)?
            };
            for r in 0..win {
                for c in 0..win {
                    let wgt = wv[r] * wv[c];
                    let (gr, gc) = (y + r, x + c);
                    accum.set(gr, gc, accum.get(gr, gc) + pred.get(r, c) * wgt);
                    wsum.set(gr, gc, wsum.get(gr, gc) + wgt);
                }
            }
            x += stride;
        }
        y += stride;
    }

    let mut out = Grid::new(w0, h0, 0.0f32);
    for r in 0..h0 {
        for c in 0..w0 {
            let wgt = wsum.get(r, c);
            if wgt <= 0.0 {
                return Err(PipelineError::Inference(format!(
                    "pixel ({r},{c}) received no window coverage"
                )));
            }
            out.set(r, c, accum.get(r, c) / wgt);
        }
    }
    Ok(out)
}

/// Persist/load a soft map in the raster container (dtype f32) so
/// filter-color reruns never re-run inference.
pub fn soft_map_to_raster(soft: &Grid<f32>, template: &RasterProduct) -> RasterProduct {
    RasterProduct {
        width: soft.width(),
        height: soft.height(),
        data: RasterData::F32(soft.data().to_vec()),
        meta: template.meta.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use oseg_nn::build_pixel;

    fn ramp_grid(w: usize, h: usize) -> Grid<f32> {
        Grid::from_vec(w, h, (0..w * h).map(|i| (i % 97) as f32 / 97.0).collect())
    }

    #[test]
    fn dihedral_roundtrip_all_eight() {
        let g = ramp_grid(8, 8);
        for idx in 0..8 {
            let t = dihedral_apply(&g, idx);
            let back = dihedral_invert(&t, idx);
            assert_eq!(back.data(), g.data(), "idx {idx}");
            if idx != 0 {
                assert_ne!(t.data(), g.data(), "idx {idx} should move pixels");
            }
        }
    }

    #[test]
    fn constant_model_blends_to_constant_everywhere() {
        // sigmoid(0*x + 0.7): constant soft value.
        let (_, graph) = build_pixel(0.0, 0.7).unwrap();
        let v = 1.0 / (1.0 + (-0.7f32).exp());
        let grid = ramp_grid(100, 70);
        let soft = predict_tiled_grid(&graph, &grid, &TilingConfig::new(32, false)).unwrap();
        for &p in soft.data() {
            assert!((p - v).abs() < 1e-6, "{p} vs {v}");
        }
    }

    #[test]
    fn tta_equals_plain_for_pixelwise_model() {
        let (_, graph) = build_pixel(3.0, -1.0).unwrap();
        let grid = ramp_grid(64, 64);
        let plain = predict_tiled_grid(&graph, &grid, &TilingConfig::new(32, false)).unwrap();
        let tta = predict_tiled_grid(&graph, &grid, &TilingConfig::new(32, true)).unwrap();
        for (a, b) in plain.data().iter().zip(tta.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn rect_no_overlap_equals_direct_stitch() {
        let (_, graph) = build_pixel(2.0, 0.3).unwrap();
        let grid = ramp_grid(96, 64);
        let cfg = TilingConfig { window: 32, stride: 32, use_tta: false, weights: WeightKind::Rect };
        let stitched = predict_tiled_grid(&graph, &grid, &cfg).unwrap();
        for (i, &g) in grid.data().iter().enumerate() {
            let direct = 1.0 / (1.0 + (-(2.0 * g + 0.3)).exp());
            assert!((stitched.data()[i] - direct).abs() < 1e-6);
        }
    }

    #[test]
    fn window_not_divisible_by_32_rejected() {
        let (_, graph) = build_pixel(1.0, 0.0).unwrap();
        let grid = ramp_grid(64, 64);
        let err = predict_tiled_grid(&graph, &grid, &TilingConfig::new(48, false)).unwrap_err();
        assert!(err.to_string().contains("divisible"), "{err}");
    }

    #[test]
    fn window_larger_than_padded_product_rejected() {
        let (_, graph) = build_pixel(1.0, 0.0).unwrap();
        let grid = ramp_grid(20, 20); // mirror can extend to 40 at most
        let err = predict_tiled_grid(&graph, &grid, &TilingConfig::new(64, false)).unwrap_err();
        assert!(err.to_string().contains("window larger"), "{err}");
    }

    #[test]
    fn window_may_exceed_training_size() {
        // A 320 window runs fine against a model trained at 160.
        let (_, graph) = build_pixel(1.0, 0.0).unwrap();
        let grid = ramp_grid(330, 330);
        let soft = predict_tiled_grid(&graph, &grid, &TilingConfig::new(320, false)).unwrap();
        assert_eq!(soft.width(), 330);
    }

    #[test]
    fn spline_weights_partition_unity_at_half_stride() {
        let n = 32;
        let w = window_weights(n, WeightKind::Spline);
        for i in 0..n / 2 {
            let s = w[i] + w[i + n / 2];
            assert!((s - 1.0).abs() < 1e-6, "{s}");
        }
    }
}
