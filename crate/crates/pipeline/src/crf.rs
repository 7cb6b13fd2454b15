//! Dense two-label CRF refinement by naive mean-field iteration.
//!
//! The unary term is the negative log of the network's soft output; the
//! pairwise Potts potential combines an appearance kernel over positions and
//! intensities with a smoothness kernel over positions. All pixel pairs are
//! evaluated directly (O(N^2)), so crops are capped at a configured size.

use rayon::prelude::*;

use oseg_data::Grid;

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy)]
pub struct CrfParams {
    pub w1: f64,
    pub w2: f64,
    pub theta_alpha_sq: f64,
    pub theta_beta_sq: f64,
    pub theta_gamma_sq: f64,
    pub iterations: usize,
    /// Largest crop side accepted by the naive pairwise evaluation.
    pub max_side: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            w1: 5.0,
            w2: 0.1,
            theta_alpha_sq: 2.0,
            theta_beta_sq: 2.0,
            theta_gamma_sq: 1.0,
            iterations: 5,
            max_side: 64,
        }
    }
}

/// Mean-field refinement of `soft` against the underlying `image`
/// intensities; returns per-pixel oil marginals.
pub fn crf_refine(soft: &Grid<f32>, image: &Grid<f32>, params: &CrfParams) -> Result<Grid<f32>> {
    if soft.width() != image.width() || soft.height() != image.height() {
        return Err(PipelineError::Inference("soft map and image are misaligned".into()));
    }
    let (w, h) = (soft.width(), soft.height());
    if w > params.max_side || h > params.max_side {
        return Err(PipelineError::Inference(format!(
            "{}x{} crop exceeds the {}-pixel cap of the naive CRF",
            w, h, params.max_side
        )));
    }
    let n = w * h;

    // Unary −log potentials for labels (0, 1).
    let clamp = 1e-6f64;
    let unary: Vec<(f64, f64)> = soft
        .data()
        .iter()
        .map(|&p| {
            let p = (p as f64).clamp(clamp, 1.0 - clamp);
            (-(1.0 - p).ln(), -p.ln())
        })
        .collect();

    // Pairwise kernel weights; symmetric, diagonal excluded at use.
    let pos: Vec<(f64, f64)> =
        (0..n).map(|i| ((i / w) as f64, (i % w) as f64)).collect();
    let intensity: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    let kernel = |i: usize, j: usize| -> f64 {
        let dp = (pos[i].0 - pos[j].0).powi(2) + (pos[i].1 - pos[j].1).powi(2);
        let di = (intensity[i] - intensity[j]).powi(2);
        params.w1 * (-dp / params.theta_alpha_sq - di / params.theta_beta_sq).exp()
            + params.w2 * (-dp / params.theta_gamma_sq).exp()
    };

    // Initialize marginals from the unary softmax (the soft map itself).
    let mut q: Vec<(f64, f64)> = unary
        .iter()
        .map(|&(u0, u1)| {
            let e0 = (-u0).exp();
            let e1 = (-u1).exp();
            (e0 / (e0 + e1), e1 / (e0 + e1))
        })
        .collect();

    for _ in 0..params.iterations {
        let prev = q.clone();
        q = (0..n)
            .into_par_iter()
            .map(|i| {
                // Potts compatibility: energy of label l accumulates the
                // kernel mass of neighbors holding the other label.
                let (mut m0, mut m1) = (0.0, 0.0);
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let k = kernel(i, j);
                    m0 += k * prev[j].1;
                    m1 += k * prev[j].0;
                }
                let e0 = -(unary[i].0 + m0);
                let e1 = -(unary[i].1 + m1);
                let m = e0.max(e1);
                let z0 = (e0 - m).exp();
                let z1 = (e1 - m).exp();
                (z0 / (z0 + z1), z1 / (z0 + z1))
            })
            .collect();
    }

    Ok(Grid::from_vec(w, h, q.iter().map(|&(_, p1)| p1 as f32).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unary_only_reproduces_input() {
        let soft = Grid::from_vec(4, 3, (0..12).map(|i| 0.05 + 0.08 * i as f32).collect());
        let image = Grid::new(4, 3, 0.5f32);
        let params = CrfParams { w1: 0.0, w2: 0.0, ..CrfParams::default() };
        let out = crf_refine(&soft, &image, &params).unwrap();
        for (a, b) in out.data().iter().zip(soft.data()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn isolated_positive_is_suppressed_on_constant_image() {
        let mut soft = Grid::new(8, 8, 0.05f32);
        soft.set(4, 4, 0.9);
        let image = Grid::new(8, 8, 0.4f32);
        let out = crf_refine(&soft, &image, &CrfParams::default()).unwrap();
        assert!(out.get(4, 4) < 0.5, "center marginal {}", out.get(4, 4));
        // The confident background stays background.
        assert!(out.get(0, 0) < 0.1);
    }

    #[test]
    fn marginals_stay_in_unit_interval() {
        let soft = Grid::from_vec(6, 6, (0..36).map(|i| ((i * 37) % 100) as f32 / 100.0).collect());
        let image = Grid::from_vec(6, 6, (0..36).map(|i| ((i * 17) % 100) as f32 / 100.0).collect());
        let out = crf_refine(&soft, &image, &CrfParams::default()).unwrap();
        assert!(out.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn oversized_crop_is_rejected() {
        let soft = Grid::new(100, 100, 0.5f32);
        let image = Grid::new(100, 100, 0.5f32);
        let err = crf_refine(&soft, &image, &CrfParams::default()).unwrap_err();
        assert!(err.to_string().contains("cap"), "{err}");
    }
}
