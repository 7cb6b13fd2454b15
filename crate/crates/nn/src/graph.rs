//! Static computation graphs.
//!
//! A graph is declared once (nodes in topological order, parameters in a
//! named table) and executed many times. Spatial dimensions are resolved at
//! execution time, so one weight set serves any compatible input size.

use std::collections::HashMap;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;
pub type ParamId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Placeholder bound to the execution's named input list.
    Input { slot: usize },
    /// Same-padded stride-1 convolution; params `[weights, bias]`.
    Conv2d,
    MaxPool2,
    /// Params `[scale, shift, running_mean, running_var]`.
    BatchNorm { momentum: f64, epsilon: f64 },
    /// `[n,h,w,c] -> [n,c]` spatial mean.
    GlobalAvgPool,
    /// Params `[weights, bias]`; input `[n, features]`.
    Dense,
    Relu,
    Sigmoid,
    /// Softmax over the last axis.
    Softmax,
    BilinearUp2,
    Dropout { rate: f64 },
    /// Two inputs `[n,h,w,ca]`, `[n,h,w,cb]` -> `[n,h,w,ca+cb]`.
    ConcatChannels,
    /// Inputs `[x, gate]`; gate is `[n, c]`.
    ScaleChannels,
    /// `[n, ...] -> [n, prod(...)]`.
    Flatten,
    /// Elementwise product of two same-shape inputs.
    Mul,
    /// Elementwise sum of two same-shape inputs.
    Add,
    /// Reduce everything to `[1]`.
    SumAll,
    /// Losses take inputs `[pred, target]` and produce `[1]`.
    WeightedBce { class_weight: f64 },
    Focal { alpha: f64, gamma: f64 },
    Jaccard,
    LovaszHinge,
    CategoricalCe,
}

impl Op {
    pub fn param_arity(&self) -> usize {
        match self {
            Op::Conv2d | Op::Dense => 2,
            Op::BatchNorm { .. } => 4,
            _ => 0,
        }
    }

    pub fn input_arity(&self) -> usize {
        match self {
            Op::Input { .. } => 0,
            Op::ConcatChannels
            | Op::ScaleChannels
            | Op::Mul
            | Op::Add
            | Op::WeightedBce { .. }
            | Op::Focal { .. }
            | Op::Jaccard
            | Op::LovaszHinge
            | Op::CategoricalCe => 2,
            _ => 1,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Op::Dropout { rate } if *rate > 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub params: Vec<ParamId>,
}

/// What a parameter does in its layer; drives trainability and weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    DenseWeight,
    DenseBias,
    BnScale,
    BnShift,
    BnRunningMean,
    BnRunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::BnRunningMean | ParamKind::BnRunningVar)
    }

    /// L2 weight decay skips batch-norm scale/shift and running stats.
    pub fn decays(self) -> bool {
        matches!(
            self,
            ParamKind::ConvWeight | ParamKind::ConvBias | ParamKind::DenseWeight | ParamKind::DenseBias
        )
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<f32>,
}

#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Param>,
    param_index: HashMap<String, ParamId>,
    input_names: Vec<String>,
    outputs: Vec<(String, NodeId)>,
    /// True once batch-norm running statistics reflect real data (at least
    /// one applied training pass, or a trained checkpoint).
    pub stats_ready: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            param_index: HashMap::new(),
            input_names: Vec::new(),
            outputs: Vec::new(),
            stats_ready: false,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn outputs(&self) -> &[(String, NodeId)] {
        &self.outputs
    }

    pub fn add_input(&mut self, name: &str) -> NodeId {
        let slot = self.input_names.len();
        self.input_names.push(name.to_string());
        self.push_node(name, Op::Input { slot }, vec![], vec![])
            .expect("input nodes cannot fail arity checks")
    }

    pub fn add_param(&mut self, name: &str, kind: ParamKind, value: Tensor<f32>) -> Result<ParamId> {
        if self.param_index.contains_key(name) {
            return Err(NnError::InvalidModel(format!("duplicate parameter `{name}`")));
        }
        let mut value = value;
        value.requires_grad = kind.trainable();
        let id = self.params.len();
        self.params.push(Param { name: name.to_string(), kind, value });
        self.param_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn push_node(&mut self, name: &str, op: Op, inputs: Vec<NodeId>, params: Vec<ParamId>) -> Result<NodeId> {
        if inputs.len() != op.input_arity() {
            return Err(NnError::InvalidModel(format!(
                "node `{name}`: {:?} takes {} inputs, got {}",
                op,
                op.input_arity(),
                inputs.len()
            )));
        }
        if params.len() != op.param_arity() {
            return Err(NnError::InvalidModel(format!(
                "node `{name}`: {:?} takes {} params, got {}",
                op,
                op.param_arity(),
                params.len()
            )));
        }
        let id = self.nodes.len();
        // Node order doubles as the topological order.
        for &i in &inputs {
            if i >= id {
                return Err(NnError::InvalidModel(format!(
                    "node `{name}` references node {i}, which is not earlier in the graph"
                )));
            }
        }
        for &p in &params {
            if p >= self.params.len() {
                return Err(NnError::UnknownParam(format!("param id {p}")));
            }
        }
        self.nodes.push(Node { name: name.to_string(), op, inputs, params });
        Ok(id)
    }

    pub fn mark_output(&mut self, name: &str, node: NodeId) {
        self.outputs.push((name.to_string(), node));
    }

    pub fn output_node(&self, name: &str) -> Result<NodeId> {
        self.outputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, id)| id)
            .ok_or_else(|| NnError::UnknownNode(format!("output `{name}`")))
    }

    pub fn node_by_name(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| NnError::UnknownNode(name.to_string()))
    }

    pub fn param_id(&self, name: &str) -> Result<ParamId> {
        self.param_index
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id]
    }

    pub fn has_stochastic_nodes(&self) -> bool {
        self.nodes.iter().any(|n| n.op.is_stochastic())
    }

    pub fn has_dense_layers(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.op, Op::Dense))
    }

    /// Whether one weight set serves any input size. Dense layers behind a
    /// global pooling stay size-agnostic; a flatten pins the spatial dims.
    pub fn is_fully_convolutional(&self) -> bool {
        !self.nodes.iter().any(|n| matches!(n.op, Op::Flatten))
    }

    /// Total trainable elements; running statistics excluded.
    pub fn trainable_param_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind.trainable())
            .map(|p| p.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.value.zero_grad();
        }
    }

    /// Fold the recorded batch-norm statistic updates back into the graph.
    pub fn apply_stat_updates(&mut self, updates: &[(ParamId, Vec<f32>)]) {
        for (id, data) in updates {
            self.params[*id].value.data_mut().copy_from_slice(data);
        }
        if !updates.is_empty() {
            self.stats_ready = true;
        }
    }
}
