//! Activation maximization: synthesize the input pattern a chosen filter
//! responds to by ascending the gradient of its mean activation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::exec::{self, ExecOptions};
use crate::graph::{Graph, Mode};
use crate::tensor::Tensor;

pub struct ActMaxResult {
    /// Synthesized `[1, h, w, c]` image, clamped to [0, 1].
    pub image: Tensor<f32>,
    /// Mean activation of the target filter after each accepted step
    /// (index 0 is the starting noise). Non-decreasing by construction.
    pub trace: Vec<f32>,
}

pub struct ActMaxConfig {
    pub steps: usize,
    pub step_size: f32,
    pub seed: u64,
    pub input_shape: (usize, usize, usize),
}

/// Gradient-ascend the mean activation of `layer`'s channel `filter` w.r.t.
/// the input, starting from uniform noise in [0,1] and re-clamping each step.
/// A backtracking halving of the step keeps the trace monotone.
pub fn activation_maximization(
    graph: &Graph,
    layer: &str,
    filter: usize,
    cfg: &ActMaxConfig,
) -> Result<ActMaxResult> {
    let node = graph.node_by_name(layer)?;
    let (h, w, c) = cfg.input_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut image = Tensor::image(h, w, c, (0..h * w * c).map(|_| rng.gen_range(0.0..1.0)).collect());

    let opts = ExecOptions::new(Mode::Inference);
    let evaluate = |img: &Tensor<f32>| -> Result<(f32, Tensor<f32>)> {
        let exec = exec::run(graph, graph, &[img.clone()], &opts)?;
        let out = exec.value(node);
        let s = out.shape();
        if s.len() != 4 {
            return Err(NnError::InvalidOp {
                node: layer.into(),
                detail: "activation maximization targets feature-map layers".into(),
            });
        }
        let channels = s[3];
        if filter >= channels {
            return Err(NnError::InvalidOp {
                node: layer.into(),
                detail: format!("filter {filter} out of range ({channels} channels)"),
            });
        }
        let plane = (s[0] * s[1] * s[2]) as f32;
        let mut act = 0.0f32;
        for px in out.data().chunks_exact(channels) {
            act += px[filter];
        }
        act /= plane;
        // Seed d(mean activation)/d(layer output).
        let mut seed = Tensor::zeros(s);
        for px in seed.data_mut().chunks_exact_mut(channels) {
            px[filter] = 1.0 / plane;
        }
        let grads = exec::backward_from(graph, graph, &exec, &[(node, seed)], true)?;
        let gin = grads.by_input[0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(img.shape()));
        Ok((act, gin))
    };

    let (mut current, mut grad) = evaluate(&image)?;
    let mut trace = vec![current];

    for _ in 0..cfg.steps {
        let mut step = cfg.step_size;
        let mut accepted = false;
        for _ in 0..20 {
            let candidate_data: Vec<f32> = image
                .data()
                .iter()
                .zip(grad.data())
                .map(|(&x, &g)| (x + step * g).clamp(0.0, 1.0))
                .collect();
            let candidate = Tensor::image(h, w, c, candidate_data);
            let (act, g) = evaluate(&candidate)?;
            if act >= current {
                image = candidate;
                current = act;
                grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // ascent stalled; trace stays monotone
        }
        trace.push(current);
    }

    Ok(ActMaxResult { image, trace })
}
