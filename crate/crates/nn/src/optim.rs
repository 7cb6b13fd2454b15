//! Adam and Nadam parameter updates.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    /// Adam with a Nesterov-style momentum lookahead; tends to move faster in
    /// the first epochs.
    Nadam,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub step: u64,
    /// First/second moment buffers, aligned with the graph parameter table
    /// (empty for non-trainable entries).
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f32, graph: &Graph) -> Self {
        let m = graph
            .params()
            .iter()
            .map(|p| if p.kind.trainable() { vec![0.0; p.value.len()] } else { Vec::new() })
            .collect::<Vec<_>>();
        let v = m.clone();
        Self { kind, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m, v }
    }

    /// Apply one update using the gradients accumulated in the graph's
    /// parameter grad slots. Parameters are mutated in place.
    pub fn apply(&mut self, graph: &mut Graph) -> Result<()> {
        self.step += 1;
        let t = self.step as f32;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);

        for (pid, param) in graph.params_mut().iter_mut().enumerate() {
            if !param.kind.trainable() {
                continue;
            }
            let Some(grad) = param.value.grad.as_ref() else { continue };
            if grad.len() != param.value.len() {
                return Err(NnError::Optimizer(format!(
                    "gradient length {} does not match parameter `{}` ({})",
                    grad.len(),
                    param.name,
                    param.value.len()
                )));
            }
            let m = &mut self.m[pid];
            let v = &mut self.v[pid];
            let grad = grad.clone();
            let theta = param.value.data_mut();
            for i in 0..theta.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let update = match self.kind {
                    OptimizerKind::Adam => m_hat,
                    OptimizerKind::Nadam => self.beta1 * m_hat + (1.0 - self.beta1) * g / bc1,
                };
                theta[i] -= self.learning_rate * update / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ParamKind;
    use crate::tensor::Tensor;

    fn graph_with_param(val: Vec<f32>) -> Graph {
        let mut g = Graph::new();
        let n = val.len();
        g.add_param("w", ParamKind::DenseWeight, Tensor::from_vec(&[n], val)).unwrap();
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut g = graph_with_param(vec![1.0, -2.0]);
        g.params_mut()[0].value.accumulate_grad(&[0.0, 0.0]);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.1, &g);
        opt.apply(&mut g).unwrap();
        assert_eq!(g.params()[0].value.data(), &[1.0, -2.0]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_adam_step_magnitude_is_learning_rate() {
        // With g=1 the bias-corrected first step is exactly -lr/(1+eps).
        let mut g = graph_with_param(vec![0.0]);
        g.params_mut()[0].value.accumulate_grad(&[1.0]);
        let lr = 0.05;
        let mut opt = OptimizerState::new(OptimizerKind::Adam, lr, &g);
        opt.apply(&mut g).unwrap();
        let got = g.params()[0].value.data()[0];
        assert!((got + lr).abs() < 1e-7, "{got}");
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(x) = x^2, grad 2x, from x=1 with lr 0.1: |x| < 1e-3 in 200 steps.
        for kind in [OptimizerKind::Adam, OptimizerKind::Nadam] {
            let mut g = graph_with_param(vec![1.0]);
            let mut opt = OptimizerState::new(kind, 0.1, &g);
            for _ in 0..200 {
                let x = g.params()[0].value.data()[0];
                g.zero_grads();
                g.params_mut()[0].value.accumulate_grad(&[2.0 * x]);
                opt.apply(&mut g).unwrap();
            }
            let x = g.params()[0].value.data()[0];
            assert!(x.abs() < 1e-3, "{kind:?} ended at {x}");
        }
    }
}
