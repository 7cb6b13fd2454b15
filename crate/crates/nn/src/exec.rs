//! Graph execution and reverse-mode gradient accumulation.
//!
//! `run` evaluates nodes in declaration order, retaining every activation so
//! a subsequent `backward` can replay the tape. Execution is generic over the
//! element type: `f32` for production, `f64` for gradient checking.

use crate::error::{NnError, Result};
use crate::graph::{Graph, Mode, NodeId, Op, ParamId};
use crate::losses;
use crate::ops::{act, bn, conv, dense, pool, resize, shape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Where parameter values come from during execution. The graph's own f32
/// table is the production source; gradient checks substitute an owned f64
/// bank.
pub trait ParamSource<T: Scalar> {
    fn value(&self, id: ParamId) -> &Tensor<T>;
}

impl ParamSource<f32> for Graph {
    fn value(&self, id: ParamId) -> &Tensor<f32> {
        &self.param(id).value
    }
}

/// Owned parameter bank, index-aligned with the graph's parameter table.
pub struct ParamBank<T> {
    pub values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamBank<T> {
    pub fn from_graph(graph: &Graph) -> Self {
        Self { values: graph.params().iter().map(|p| p.value.cast::<T>()).collect() }
    }
}

impl<T: Scalar> ParamSource<T> for ParamBank<T> {
    fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub mode: Mode,
    /// Seed for stochastic nodes; a fixed seed freezes dropout masks.
    pub rng_seed: u64,
    /// Scan every activation for NaN/Inf and fail naming the node.
    pub check_finite: bool,
}

impl ExecOptions {
    pub fn new(mode: Mode) -> Self {
        Self { mode, rng_seed: 0, check_finite: true }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

enum Aux<T> {
    None,
    Pool(Vec<u32>),
    Bn(bn::BnAux<T>),
    Dropout(Vec<T>),
    Jaccard(losses::JaccardAux<T>),
    Lovasz(losses::LovaszAux<T>),
}

pub struct Execution<T> {
    values: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    pub mode: Mode,
    /// Batch-norm running statistic updates recorded in training mode; the
    /// caller decides when to fold them into the graph.
    pub stat_updates: Vec<(ParamId, Vec<T>)>,
}

impl<T: Scalar> Execution<T> {
    pub fn value(&self, node: NodeId) -> &Tensor<T> {
        &self.values[node]
    }

    pub fn output(&self, graph: &Graph, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.values[graph.output_node(name)?])
    }
}

/// Evaluate the graph on positional inputs (one per declared input slot).
pub fn run<T: Scalar, S: ParamSource<T>>(
    graph: &Graph,
    source: &S,
    inputs: &[Tensor<T>],
    opts: &ExecOptions,
) -> Result<Execution<T>> {
    if inputs.len() != graph.input_names().len() {
        return Err(NnError::InvalidOp {
            node: "<inputs>".into(),
            detail: format!("graph declares {} inputs, got {}", graph.input_names().len(), inputs.len()),
        });
    }
    if opts.mode == Mode::Inference
        && !graph.stats_ready
        && graph.nodes().iter().any(|n| matches!(n.op, Op::BatchNorm { .. }))
    {
        return Err(NnError::BatchNormUninitialized);
    }

    let mut values: Vec<Tensor<T>> = Vec::with_capacity(graph.nodes().len());
    let mut aux: Vec<Aux<T>> = Vec::with_capacity(graph.nodes().len());
    let mut stat_updates = Vec::new();
    let training = opts.mode == Mode::Training;

    for (id, node) in graph.nodes().iter().enumerate() {
        let name = node.name.as_str();
        let input = |k: usize| -> &Tensor<T> { &values[node.inputs[k]] };
        let param = |k: usize| -> &Tensor<T> { source.value(node.params[k]) };

        let (out, ax) = match &node.op {
            Op::Input { slot } => (inputs[*slot].clone(), Aux::None),
            Op::Conv2d => (conv::forward(name, input(0), param(0), param(1))?, Aux::None),
            Op::MaxPool2 => {
                let (o, arg) = pool::forward(name, input(0))?;
                (o, Aux::Pool(arg))
            }
            Op::BatchNorm { momentum, epsilon } => {
                let f = bn::forward(
                    name,
                    input(0),
                    param(0),
                    param(1),
                    param(2),
                    param(3),
                    *momentum,
                    *epsilon,
                    training,
                )?;
                if let Some((rm, rv)) = f.stat_update {
                    stat_updates.push((node.params[2], rm));
                    stat_updates.push((node.params[3], rv));
                }
                (f.out, Aux::Bn(f.aux))
            }
            Op::GlobalAvgPool => (shape::global_avg_pool(name, input(0))?, Aux::None),
            Op::Dense => (dense::forward(name, input(0), param(0), param(1))?, Aux::None),
            Op::Relu => (act::relu(input(0)), Aux::None),
            Op::Sigmoid => (act::sigmoid(input(0)), Aux::None),
            Op::Softmax => (act::softmax(input(0)), Aux::None),
            Op::BilinearUp2 => (resize::forward(name, input(0))?, Aux::None),
            Op::Dropout { rate } => {
                if training && *rate > 0.0 {
                    let x = input(0);
                    let mask = shape::dropout_mask::<T>(x.len(), *rate, opts.rng_seed, id as u64);
                    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    (Tensor::from_vec(x.shape(), data), Aux::Dropout(mask))
                } else {
                    (input(0).clone(), Aux::None)
                }
            }
            Op::ConcatChannels => (shape::concat_channels(name, input(0), input(1))?, Aux::None),
            Op::ScaleChannels => (shape::scale_channels(name, input(0), input(1))?, Aux::None),
            Op::Flatten => (shape::flatten(input(0)), Aux::None),
            Op::Mul => (shape::mul(name, input(0), input(1))?, Aux::None),
            Op::Add => (shape::add(name, input(0), input(1))?, Aux::None),
            Op::SumAll => (shape::sum_all(input(0)), Aux::None),
            Op::WeightedBce { class_weight } => (
                Tensor::scalar(losses::weighted_bce(name, input(0), input(1), *class_weight)?),
                Aux::None,
            ),
            Op::Focal { alpha, gamma } => (
                Tensor::scalar(losses::focal(name, input(0), input(1), *alpha, *gamma)?),
                Aux::None,
            ),
            Op::Jaccard => {
                let (l, a) = losses::jaccard(name, input(0), input(1))?;
                (Tensor::scalar(l), Aux::Jaccard(a))
            }
            Op::LovaszHinge => {
                let (l, a) = losses::lovasz_hinge(name, input(0), input(1))?;
                (Tensor::scalar(l), Aux::Lovasz(a))
            }
            Op::CategoricalCe => (
                Tensor::scalar(losses::categorical_ce(name, input(0), input(1))?),
                Aux::None,
            ),
        };

        if opts.check_finite {
            if let Some(i) = out.find_non_finite() {
                return Err(NnError::NonFinite { node: name.to_string(), index: i });
            }
        }
        values.push(out);
        aux.push(ax);
    }

    Ok(Execution { values, aux, mode: opts.mode, stat_updates })
}

/// Execute with named inputs; returns the graph's named outputs.
pub fn execute_graph(
    graph: &Graph,
    inputs: &[(&str, Tensor<f32>)],
    mode: Mode,
) -> Result<Vec<(String, Tensor<f32>)>> {
    let exec = run(graph, graph, &bind_inputs(graph, inputs)?, &ExecOptions::new(mode))?;
    Ok(graph
        .outputs()
        .iter()
        .map(|(name, id)| (name.clone(), exec.values[*id].clone()))
        .collect())
}

/// Order a named input list to match the graph's input slots.
pub fn bind_inputs<T: Scalar>(graph: &Graph, inputs: &[(&str, Tensor<T>)]) -> Result<Vec<Tensor<T>>> {
    let mut out = Vec::with_capacity(graph.input_names().len());
    for name in graph.input_names() {
        let t = inputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| NnError::UnknownInput(name.clone()))?;
        out.push(t);
    }
    Ok(out)
}

pub struct Gradients<T> {
    /// Indexed like the graph parameter table; `None` where nothing flowed.
    pub by_param: Vec<Option<Tensor<T>>>,
    /// Indexed by input slot; populated only when input gradients were requested.
    pub by_input: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient table keyed by parameter name.
    pub fn named(&self, graph: &Graph) -> Vec<(String, Tensor<T>)> {
        self.by_param
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|t| (graph.param(i).name.clone(), t.clone())))
            .collect()
    }
}

/// Reverse pass from `loss_node`, which must hold a scalar; seeds d(loss)=1.
pub fn backprop<T: Scalar, S: ParamSource<T>>(
    graph: &Graph,
    source: &S,
    exec: &Execution<T>,
    loss_node: NodeId,
    want_input_grads: bool,
) -> Result<Gradients<T>> {
    let v = &exec.values[loss_node];
    if !v.is_scalar() {
        return Err(NnError::LossNotScalar {
            node: graph.nodes()[loss_node].name.clone(),
            len: v.len(),
        });
    }
    backward_from(graph, source, exec, &[(loss_node, Tensor::scalar(T::ONE))], want_input_grads)
}

/// Reverse pass with explicit seed gradients (used by activation
/// maximization, which seeds an interior node).
pub fn backward_from<T: Scalar, S: ParamSource<T>>(
    graph: &Graph,
    source: &S,
    exec: &Execution<T>,
    seeds: &[(NodeId, Tensor<T>)],
    want_input_grads: bool,
) -> Result<Gradients<T>> {
    let n = graph.nodes().len();
    let training = exec.mode == Mode::Training;

    // A node needs its output gradient if it can influence a trainable
    // parameter path or a requested input.
    let mut needs = vec![false; n];
    for (id, node) in graph.nodes().iter().enumerate() {
        let own = match node.op {
            Op::Input { .. } => want_input_grads,
            _ => node.params.iter().any(|&p| graph.param(p).value.requires_grad),
        };
        needs[id] = own || node.inputs.iter().any(|&i| needs[i]);
    }

    let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
    for (node, seed) in seeds {
        if seed.shape() != exec.values[*node].shape() {
            return Err(NnError::ShapeMismatch {
                node: graph.nodes()[*node].name.clone(),
                detail: "seed gradient shape differs from node output".into(),
            });
        }
        grads[*node] = Some(seed.data().to_vec());
    }

    let mut by_param: Vec<Option<Tensor<T>>> = (0..graph.params().len()).map(|_| None).collect();
    let mut by_input: Vec<Option<Tensor<T>>> = (0..graph.input_names().len()).map(|_| None).collect();

    let add_param_grad = |by_param: &mut Vec<Option<Tensor<T>>>, pid: ParamId, g: Tensor<T>| {
        match &mut by_param[pid] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *b;
                }
            }
            slot => *slot = Some(g),
        }
    };

    for id in (0..n).rev() {
        let Some(dy_data) = grads[id].take() else { continue };
        if !needs[id] {
            continue;
        }
        let node = &graph.nodes()[id];
        let dy = Tensor::from_vec(exec.values[id].shape(), dy_data);
        let input_val = |k: usize| -> &Tensor<T> { &exec.values[node.inputs[k]] };
        let wants = |k: usize| -> bool { needs[node.inputs[k]] };

        // Gradients w.r.t. each node input, in input order.
        let mut dinputs: Vec<Option<Tensor<T>>> = vec![None; node.inputs.len()];
        match &node.op {
            Op::Input { slot } => {
                if want_input_grads {
                    match &mut by_input[*slot] {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(dy.data()) {
                                *a += *b;
                            }
                        }
                        s => *s = Some(dy.clone()),
                    }
                }
            }
            Op::Conv2d => {
                let (dx, dw, db) = conv::backward(input_val(0), source.value(node.params[0]), &dy);
                if wants(0) {
                    dinputs[0] = Some(dx);
                }
                add_param_grad(&mut by_param, node.params[0], dw);
                add_param_grad(&mut by_param, node.params[1], db);
            }
            Op::MaxPool2 => {
                if let Aux::Pool(argmax) = &exec.aux[id] {
                    dinputs[0] = Some(pool::backward(input_val(0).shape(), argmax, &dy));
                }
            }
            Op::BatchNorm { .. } => {
                if let Aux::Bn(a) = &exec.aux[id] {
                    let (dx, dscale, dshift) =
                        bn::backward(input_val(0), source.value(node.params[0]), a, &dy, training);
                    if wants(0) {
                        dinputs[0] = Some(dx);
                    }
                    add_param_grad(&mut by_param, node.params[0], dscale);
                    add_param_grad(&mut by_param, node.params[1], dshift);
                }
            }
            Op::GlobalAvgPool => {
                dinputs[0] = Some(shape::global_avg_pool_backward(input_val(0).shape(), &dy));
            }
            Op::Dense => {
                let (dx, dw, db) = dense::backward(input_val(0), source.value(node.params[0]), &dy);
                if wants(0) {
                    dinputs[0] = Some(dx);
                }
                add_param_grad(&mut by_param, node.params[0], dw);
                add_param_grad(&mut by_param, node.params[1], db);
            }
            Op::Relu => dinputs[0] = Some(act::relu_backward(input_val(0), &dy)),
            Op::Sigmoid => dinputs[0] = Some(act::sigmoid_backward(&exec.values[id], &dy)),
            Op::Softmax => dinputs[0] = Some(act::softmax_backward(&exec.values[id], &dy)),
            Op::BilinearUp2 => dinputs[0] = Some(resize::backward(input_val(0).shape(), &dy)),
            Op::Dropout { .. } => {
                let g = match &exec.aux[id] {
                    Aux::Dropout(mask) => {
                        let data = dy.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                        Tensor::from_vec(dy.shape(), data)
                    }
                    _ => dy.clone(),
                };
                dinputs[0] = Some(g);
            }
            Op::ConcatChannels => {
                let ca = *input_val(0).shape().last().unwrap();
                let cb = *input_val(1).shape().last().unwrap();
                let (da, db) = shape::concat_channels_backward(ca, cb, &dy);
                dinputs[0] = Some(da);
                dinputs[1] = Some(db);
            }
            Op::ScaleChannels => {
                let (dx, dg) = shape::scale_channels_backward(input_val(0), input_val(1), &dy);
                dinputs[0] = Some(dx);
                dinputs[1] = Some(dg);
            }
            Op::Flatten => {
                dinputs[0] = Some(dy.clone().reshaped(input_val(0).shape()));
            }
            Op::Mul => {
                if wants(0) {
                    dinputs[0] = Some(shape::mul("mul_bwd", &dy, input_val(1))?);
                }
                if wants(1) {
                    dinputs[1] = Some(shape::mul("mul_bwd", &dy, input_val(0))?);
                }
            }
            Op::Add => {
                dinputs[0] = Some(dy.clone());
                dinputs[1] = Some(dy.clone());
            }
            Op::SumAll => {
                dinputs[0] = Some(Tensor::full(input_val(0).shape(), dy.scalar_value()));
            }
            Op::WeightedBce { class_weight } => {
                if wants(0) {
                    dinputs[0] = Some(losses::weighted_bce_backward(
                        input_val(0),
                        input_val(1),
                        *class_weight,
                        dy.scalar_value(),
                    ));
                }
            }
            Op::Focal { alpha, gamma } => {
                if wants(0) {
                    dinputs[0] = Some(losses::focal_backward(
                        input_val(0),
                        input_val(1),
                        *alpha,
                        *gamma,
                        dy.scalar_value(),
                    ));
                }
            }
            Op::Jaccard => {
                if let (true, Aux::Jaccard(a)) = (wants(0), &exec.aux[id]) {
                    dinputs[0] = Some(losses::jaccard_backward(input_val(1), a, dy.scalar_value()));
                }
            }
            Op::LovaszHinge => {
                if let (true, Aux::Lovasz(a)) = (wants(0), &exec.aux[id]) {
                    dinputs[0] = Some(losses::lovasz_backward(input_val(0).shape(), a, dy.scalar_value()));
                }
            }
            Op::CategoricalCe => {
                if wants(0) {
                    dinputs[0] =
                        Some(losses::categorical_ce_backward(input_val(0), input_val(1), dy.scalar_value()));
                }
            }
        }

        // Fan-out sums: accumulate into each producing node's gradient slot.
        for (k, d) in dinputs.into_iter().enumerate() {
            let Some(d) = d else { continue };
            let src = node.inputs[k];
            if !needs[src] {
                continue;
            }
            match &mut grads[src] {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(d.data()) {
                        *a += *b;
                    }
                }
                slot => *slot = Some(d.into_data()),
            }
        }
    }

    Ok(Gradients { by_param, by_input })
}

/// Accumulate a gradient set into the graph's parameter grad slots
/// (sums with anything already there; callers zero between steps).
pub fn accumulate_into(graph: &mut Graph, grads: &Gradients<f32>) {
    for (id, g) in grads.by_param.iter().enumerate() {
        if let Some(g) = g {
            graph.params_mut()[id].value.accumulate_grad(g.data());
        }
    }
}
