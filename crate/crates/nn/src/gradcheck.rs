//! Central finite-difference verification of analytic gradients.
//!
//! Runs entirely in 64-bit: at 32-bit the difference quotient noise sits
//! right where real gradient bugs hide. Stochastic nodes are frozen by
//! replaying the same RNG seed on every evaluation.

use rayon::prelude::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::exec::{self, ExecOptions, ParamBank, ParamSource};
use crate::graph::{Graph, Mode, NodeId, ParamId};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct FdOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    pub mode: Mode,
    /// Replaying one RNG seed per evaluation freezes dropout masks. Turning
    /// this off while a stochastic node is active invalidates the check and
    /// is rejected.
    pub freeze_rng: bool,
    /// Check at most this many elements per parameter tensor (seeded,
    /// deterministic subset). `None` checks every element.
    pub sample_per_param: Option<usize>,
    /// Graph inputs (by name) whose gradients should also be verified;
    /// needed for parameterless layers like upsampling and pooling.
    pub check_inputs: Vec<String>,
    /// Elements that miss the tolerance are re-checked with the step shrunk
    /// by 3x, up to this many times. A finite-difference artifact (a ReLU
    /// kink or pool tie crossed inside the +/-eps interval, or curvature)
    /// shrinks with the step; a wrong analytic gradient does not.
    pub shrink_retries: usize,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            tolerance: 1e-3,
            mode: Mode::Training,
            freeze_rng: true,
            sample_per_param: None,
            check_inputs: Vec::new(),
            shrink_retries: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamFdResult {
    pub name: String,
    pub max_rel_err: f64,
    pub elements_checked: usize,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub per_param: Vec<ParamFdResult>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl FdReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for p in &self.per_param {
            s.push_str(&format!(
                "{:<40} max_rel_err {:>12.3e}  ({} elements)\n",
                p.name, p.max_rel_err, p.elements_checked
            ));
        }
        s.push_str(&format!(
            "overall {:.3e} vs tolerance {:.1e}: {}\n",
            self.max_rel_err,
            self.tolerance,
            if self.pass { "pass" } else { "FAIL" }
        ));
        s
    }
}

struct Perturbed<'a> {
    base: &'a ParamBank<f64>,
    pid: ParamId,
    replacement: Tensor<f64>,
}

impl ParamSource<f64> for Perturbed<'_> {
    fn value(&self, id: ParamId) -> &Tensor<f64> {
        if id == self.pid {
            &self.replacement
        } else {
            &self.base.values[id]
        }
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compare analytic parameter gradients of the scalar at `loss_node` against
/// central differences `(f(t+e) - f(t-e)) / 2e`, elementwise.
pub fn finite_diff_check(
    graph: &Graph,
    inputs: &[(&str, Tensor<f32>)],
    loss_node: NodeId,
    opts: &FdOptions,
) -> Result<FdReport> {
    if graph.has_stochastic_nodes() && opts.mode == Mode::Training && !opts.freeze_rng {
        let name = graph
            .nodes()
            .iter()
            .find(|n| n.op.is_stochastic())
            .map(|n| n.name.clone())
            .unwrap_or_default();
        return Err(NnError::StochasticUnfrozen(name));
    }

    let bank = ParamBank::<f64>::from_graph(graph);
    let bound: Vec<Tensor<f64>> = exec::bind_inputs(graph, inputs)?
        .iter()
        .map(|t| t.cast::<f64>())
        .collect();
    let exec_opts = ExecOptions { mode: opts.mode, rng_seed: opts.seed, check_finite: true };

    let forward_loss = |source: &dyn ParamSource<f64>| -> Result<f64> {
        struct Dyn<'a>(&'a dyn ParamSource<f64>);
        impl ParamSource<f64> for Dyn<'_> {
            fn value(&self, id: ParamId) -> &Tensor<f64> {
                self.0.value(id)
            }
        }
        let e = exec::run(graph, &Dyn(source), &bound, &exec_opts)?;
        let v = e.value(loss_node);
        if !v.is_scalar() {
            return Err(NnError::LossNotScalar {
                node: graph.nodes()[loss_node].name.clone(),
                len: v.len(),
            });
        }
        Ok(v.scalar_value())
    };

    // Analytic reference.
    let want_inputs = !opts.check_inputs.is_empty();
    let base_exec = exec::run(graph, &bank, &bound, &exec_opts)?;
    if !base_exec.value(loss_node).is_scalar() {
        return Err(NnError::LossNotScalar {
            node: graph.nodes()[loss_node].name.clone(),
            len: base_exec.value(loss_node).len(),
        });
    }
    let analytic = exec::backprop(graph, &bank, &base_exec, loss_node, want_inputs)?;

    #[derive(Clone, Copy)]
    enum Target {
        Param(ParamId),
        Input(usize),
    }

    let mut checks: Vec<(Target, usize)> = Vec::new();
    let mut sample = |len: usize, salt: u64, checks: &mut Vec<(Target, usize)>, target: Target| {
        match opts.sample_per_param {
            Some(k) if k < len => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (salt << 17));
                let mut picked = std::collections::BTreeSet::new();
                while picked.len() < k {
                    picked.insert(rng.gen_range(0..len));
                }
                checks.extend(picked.into_iter().map(|i| (target, i)));
            }
            _ => checks.extend((0..len).map(|i| (target, i))),
        }
    };
    for (pid, p) in graph.params().iter().enumerate() {
        if p.kind.trainable() {
            sample(p.value.len(), pid as u64, &mut checks, Target::Param(pid));
        }
    }
    for name in &opts.check_inputs {
        let slot = graph
            .input_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| NnError::UnknownInput(name.clone()))?;
        sample(bound[slot].len(), 0x5eed ^ slot as u64, &mut checks, Target::Input(slot));
    }

    let errs: Vec<Result<(Target, usize, f64)>> = checks
        .par_iter()
        .map(|&(target, idx)| {
            let eval_pair = |eps: f64| -> Result<(f64, f64)> {
                match target {
                    Target::Param(pid) => {
                        let mut replacement = bank.values[pid].clone();
                        let orig = replacement.data()[idx];
                        replacement.data_mut()[idx] = orig + eps;
                        let plus =
                            forward_loss(&Perturbed { base: &bank, pid, replacement: replacement.clone() })?;
                        replacement.data_mut()[idx] = orig - eps;
                        let minus = forward_loss(&Perturbed { base: &bank, pid, replacement })?;
                        Ok((plus, minus))
                    }
                    Target::Input(slot) => {
                        let mut perturbed = bound.to_vec();
                        let orig = perturbed[slot].data()[idx];
                        perturbed[slot].data_mut()[idx] = orig + eps;
                        let plus = exec::run(graph, &bank, &perturbed, &exec_opts)?
                            .value(loss_node)
                            .scalar_value();
                        perturbed[slot].data_mut()[idx] = orig - eps;
                        let minus = exec::run(graph, &bank, &perturbed, &exec_opts)?
                            .value(loss_node)
                            .scalar_value();
                        Ok((plus, minus))
                    }
                }
            };
            let a = match target {
                Target::Param(pid) => analytic.by_param[pid].as_ref().map(|g| g.data()[idx]),
                Target::Input(slot) => analytic.by_input[slot].as_ref().map(|g| g.data()[idx]),
            }
            .unwrap_or(0.0);

            let mut eps = opts.epsilon;
            let mut err = f64::INFINITY;
            for attempt in 0..=opts.shrink_retries {
                let (plus, minus) = eval_pair(eps)?;
                let numeric = (plus - minus) / (2.0 * eps);
                err = rel_err(a, numeric);
                if err < opts.tolerance || attempt == opts.shrink_retries {
                    break;
                }
                eps /= 3.0;
            }
            Ok((target, idx, err))
        })
        .collect();

    let n_params = graph.params().len();
    let n_inputs = graph.input_names().len();
    let mut worst: Vec<(f64, usize)> = vec![(0.0, 0); n_params + n_inputs];
    for r in errs {
        let (target, _, e) = r?;
        let slot = match target {
            Target::Param(pid) => pid,
            Target::Input(s) => n_params + s,
        };
        worst[slot].0 = worst[slot].0.max(e);
        worst[slot].1 += 1;
    }

    let per_param: Vec<ParamFdResult> = worst
        .iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(i, (e, n))| ParamFdResult {
            name: if i < n_params {
                graph.param(i).name.clone()
            } else {
                format!("input:{}", graph.input_names()[i - n_params])
            },
            max_rel_err: *e,
            elements_checked: *n,
        })
        .collect();
    let max_rel_err = per_param.iter().map(|p| p.max_rel_err).fold(0.0, f64::max);
    Ok(FdReport { per_param, max_rel_err, pass: max_rel_err < opts.tolerance, tolerance: opts.tolerance })
}

/// Append a probe head `sum(node * probe)` so any tensor-valued graph gets a
/// scalar objective with non-uniform sensitivity. Returns the loss node; the
/// probe values arrive through a new input named `probe`.
pub fn attach_probe(graph: &mut Graph, node: NodeId) -> Result<NodeId> {
    let probe = graph.add_input("probe");
    let prod = graph.push_node("probe_mul", crate::graph::Op::Mul, vec![node, probe], vec![])?;
    graph.push_node("probe_sum", crate::graph::Op::SumAll, vec![prod], vec![])
}

/// Deterministic probe tensor matching `shape`, values in [0.25, 1.25).
pub fn probe_values(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(0.25..1.25)).collect())
}
