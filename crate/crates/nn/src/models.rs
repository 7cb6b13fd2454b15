//! Network builders and structural analyses.
//!
//! The segmentation network (OFCN) is an encoder-decoder with skip
//! connections. Its channel schedule is pinned to
//! `n-2n-4n-8n-16n-8n-4n-2n-n`: four pooled encoder blocks, an unpooled
//! bottleneck, and four upsampling decoder blocks. With four pool/upsample
//! pairs the output spatial size equals the input for any H, W divisible
//! by 16, and the deepest convolution sees a 140-pixel receptive field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{Graph, NodeId, Op, ParamId, ParamKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ofcn,
    Classifier,
    /// 1x1-conv pixelwise model: `sigmoid(w*x + b)`. A test double — useful
    /// because it is exactly dihedral-equivariant — not a paper architecture.
    Pixel,
}

/// Declarative description of a buildable network. Checkpoints store this
/// next to the weights so they are self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// First-layer filter count `n` for OFCN; unused otherwise.
    pub width: usize,
    /// Per-block channel counts, encoder/backbone order.
    pub blocks: Vec<usize>,
    pub use_bn: bool,
    pub use_se: bool,
    pub dropout_rate: f64,
    /// Classifier head size; `None` for segmentation models.
    pub num_classes: Option<usize>,
    /// Squeeze-and-excitation bottleneck ratio (clamped per block to a
    /// divisor of the channel count).
    pub se_ratio: usize,
    pub init_seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelFlags {
    pub use_bn: bool,
    pub use_se: bool,
    pub dropout_rate: f64,
    pub se_ratio: usize,
    pub init_seed: u64,
}

impl Default for ModelFlags {
    fn default() -> Self {
        Self { use_bn: true, use_se: true, dropout_rate: 0.1, se_ratio: 8, init_seed: 0x0f_c0 }
    }
}

/// OFCN input spatial dims must divide by this (4 pooling stages).
pub const OFCN_SIZE_MULTIPLE: usize = 16;
/// The classifier consumes fixed 160x160 two-channel stacks.
pub const CLASSIFIER_INPUT: usize = 160;
pub const CLASSIFIER_CHANNELS: [usize; 5] = [32, 64, 128, 256, 512];

pub fn build_ofcn(n: usize, flags: &ModelFlags) -> Result<(ModelSpec, Graph)> {
    if n < 1 {
        return Err(NnError::InvalidModel("OFCN width must be at least 1".into()));
    }
    let spec = ModelSpec {
        kind: ModelKind::Ofcn,
        width: n,
        blocks: vec![n, 2 * n, 4 * n, 8 * n, 16 * n],
        use_bn: flags.use_bn,
        use_se: flags.use_se,
        dropout_rate: flags.dropout_rate,
        num_classes: None,
        se_ratio: flags.se_ratio,
        init_seed: flags.init_seed,
    };
    let graph = build_graph(&spec)?;
    Ok((spec, graph))
}

pub fn build_classifier(num_classes: usize, flags: &ModelFlags) -> Result<(ModelSpec, Graph)> {
    if !(2..=4).contains(&num_classes) {
        return Err(NnError::InvalidModel(format!(
            "classifier heads cover 2 to 4 category values, got {num_classes}"
        )));
    }
    let spec = ModelSpec {
        kind: ModelKind::Classifier,
        width: CLASSIFIER_CHANNELS[0],
        blocks: CLASSIFIER_CHANNELS.to_vec(),
        use_bn: flags.use_bn,
        use_se: flags.use_se,
        dropout_rate: flags.dropout_rate,
        num_classes: Some(num_classes),
        se_ratio: flags.se_ratio,
        init_seed: flags.init_seed,
    };
    let graph = build_graph(&spec)?;
    Ok((spec, graph))
}

/// Fixed pixelwise map `sigmoid(weight * x + bias)`.
pub fn build_pixel(weight: f32, bias: f32) -> Result<(ModelSpec, Graph)> {
    let spec = ModelSpec {
        kind: ModelKind::Pixel,
        width: 1,
        blocks: vec![1],
        use_bn: false,
        use_se: false,
        dropout_rate: 0.0,
        num_classes: None,
        se_ratio: 1,
        init_seed: 0,
    };
    let mut graph = build_graph(&spec)?;
    let wid = graph.param_id("pixel.conv.w")?;
    graph.params_mut()[wid].value.data_mut()[0] = weight;
    let bid = graph.param_id("pixel.conv.b")?;
    graph.params_mut()[bid].value.data_mut()[0] = bias;
    Ok((spec, graph))
}

/// Rebuild the graph a spec describes; deterministic given `init_seed`.
pub fn build_graph(spec: &ModelSpec) -> Result<Graph> {
    match spec.kind {
        ModelKind::Ofcn => build_ofcn_graph(spec),
        ModelKind::Classifier => build_classifier_graph(spec),
        ModelKind::Pixel => build_pixel_graph(),
    }
}

/// Largest divisor of `c` not exceeding the requested ratio, so the SE
/// bottleneck stays integral for narrow layers.
pub fn effective_se_ratio(c: usize, ratio: usize) -> usize {
    let mut r = ratio.clamp(1, c);
    while c % r != 0 {
        r -= 1;
    }
    r
}

struct Builder {
    graph: Graph,
    rng: ChaCha8Rng,
    use_bn: bool,
    use_se: bool,
    dropout: f64,
    se_ratio: usize,
}

impl Builder {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            graph: Graph::new(),
            rng: ChaCha8Rng::seed_from_u64(spec.init_seed),
            use_bn: spec.use_bn,
            use_se: spec.use_se,
            dropout: spec.dropout_rate,
            se_ratio: spec.se_ratio,
        }
    }

    /// He-uniform fan-in initialization.
    fn he_tensor(&mut self, shape: &[usize], fan_in: usize) -> Tensor<f32> {
        let limit = (6.0 / fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| self.rng.gen_range(-limit..limit)).collect())
    }

    fn conv(&mut self, name: &str, x: NodeId, ci: usize, co: usize, k: usize) -> Result<NodeId> {
        let w = self.he_tensor(&[co, ci, k, k], ci * k * k);
        let wid = self.graph.add_param(&format!("{name}.w"), ParamKind::ConvWeight, w)?;
        let bid = self.graph.add_param(&format!("{name}.b"), ParamKind::ConvBias, Tensor::zeros(&[co]))?;
        self.graph.push_node(name, Op::Conv2d, vec![x], vec![wid, bid])
    }

    fn bn(&mut self, name: &str, x: NodeId, c: usize) -> Result<NodeId> {
        let mk = |g: &mut Graph, suffix: &str, kind, value| g.add_param(&format!("{name}.{suffix}"), kind, value);
        let params: Vec<ParamId> = vec![
            mk(&mut self.graph, "scale", ParamKind::BnScale, Tensor::full(&[c], 1.0))?,
            mk(&mut self.graph, "shift", ParamKind::BnShift, Tensor::zeros(&[c]))?,
            mk(&mut self.graph, "rmean", ParamKind::BnRunningMean, Tensor::zeros(&[c]))?,
            mk(&mut self.graph, "rvar", ParamKind::BnRunningVar, Tensor::full(&[c], 1.0))?,
        ];
        self.graph
            .push_node(name, Op::BatchNorm { momentum: 0.99, epsilon: 1e-5 }, vec![x], params)
    }

    fn conv_bn_relu(&mut self, prefix: &str, idx: usize, x: NodeId, ci: usize, co: usize) -> Result<NodeId> {
        let mut node = self.conv(&format!("{prefix}.conv{idx}"), x, ci, co, 3)?;
        if self.use_bn {
            node = self.bn(&format!("{prefix}.bn{idx}"), node, co)?;
        }
        self.graph.push_node(&format!("{prefix}.relu{idx}"), Op::Relu, vec![node], vec![])
    }

    fn dense(&mut self, name: &str, x: NodeId, fi: usize, fo: usize) -> Result<NodeId> {
        let w = self.he_tensor(&[fi, fo], fi);
        let wid = self.graph.add_param(&format!("{name}.w"), ParamKind::DenseWeight, w)?;
        let bid = self.graph.add_param(&format!("{name}.b"), ParamKind::DenseBias, Tensor::zeros(&[fo]))?;
        self.graph.push_node(name, Op::Dense, vec![x], vec![wid, bid])
    }

    /// Squeeze (global average pool) and excitation (bottleneck dense pair
    /// with sigmoid gate), applied channel-wise to `x`.
    fn se_block(&mut self, prefix: &str, x: NodeId, c: usize) -> Result<NodeId> {
        let r = effective_se_ratio(c, self.se_ratio);
        let mid = c / r;
        let squeezed = self.graph.push_node(&format!("{prefix}.gap"), Op::GlobalAvgPool, vec![x], vec![])?;
        let reduced = self.dense(&format!("{prefix}.reduce"), squeezed, c, mid)?;
        let relu = self.graph.push_node(&format!("{prefix}.relu"), Op::Relu, vec![reduced], vec![])?;
        let expanded = self.dense(&format!("{prefix}.expand"), relu, mid, c)?;
        let gate = self.graph.push_node(&format!("{prefix}.gate"), Op::Sigmoid, vec![expanded], vec![])?;
        self.graph.push_node(&format!("{prefix}.scale"), Op::ScaleChannels, vec![x, gate], vec![])
    }

    fn maybe_se_dropout(&mut self, prefix: &str, mut node: NodeId, c: usize) -> Result<NodeId> {
        if self.use_se {
            node = self.se_block(&format!("{prefix}.se"), node, c)?;
        }
        if self.dropout > 0.0 {
            node = self
                .graph
                .push_node(&format!("{prefix}.dropout"), Op::Dropout { rate: self.dropout }, vec![node], vec![])?;
        }
        Ok(node)
    }
}

fn build_ofcn_graph(spec: &ModelSpec) -> Result<Graph> {
    let n = spec.width;
    let mut b = Builder::new(spec);
    let input = b.graph.add_input("image");

    // Encoder: four pooled blocks; skip taps come from the pre-pool output.
    let mut skips: Vec<(NodeId, usize)> = Vec::new();
    let mut node = input;
    let mut ci = 1;
    for (i, &c) in [n, 2 * n, 4 * n, 8 * n].iter().enumerate() {
        let prefix = format!("enc{}", i + 1);
        node = b.conv_bn_relu(&prefix, 1, node, ci, c)?;
        node = b.conv_bn_relu(&prefix, 2, node, c, c)?;
        skips.push((node, c));
        node = b.graph.push_node(&format!("{prefix}.pool"), Op::MaxPool2, vec![node], vec![])?;
        node = b.maybe_se_dropout(&prefix, node, c)?;
        ci = c;
    }

    // Unpooled bottleneck at 16n.
    let cmid = 16 * n;
    node = b.conv_bn_relu("mid", 1, node, ci, cmid)?;
    node = b.conv_bn_relu("mid", 2, node, cmid, cmid)?;
    node = b.maybe_se_dropout("mid", node, cmid)?;
    ci = cmid;

    // Decoder mirrors at 8n-4n-2n-n, consuming skips deepest-first.
    for (j, &c) in [8 * n, 4 * n, 2 * n, n].iter().enumerate() {
        let prefix = format!("dec{}", j + 1);
        node = b.graph.push_node(&format!("{prefix}.up"), Op::BilinearUp2, vec![node], vec![])?;
        let (skip, sc) = skips.pop().expect("one skip per decoder block");
        node = b
            .graph
            .push_node(&format!("{prefix}.concat"), Op::ConcatChannels, vec![node, skip], vec![])?;
        node = b.conv_bn_relu(&prefix, 1, node, ci + sc, c)?;
        node = b.conv_bn_relu(&prefix, 2, node, c, c)?;
        node = b.maybe_se_dropout(&prefix, node, c)?;
        ci = c;
    }

    let logit = b.conv("out.conv", node, ci, 1, 3)?;
    let prob = b.graph.push_node("out.sigmoid", Op::Sigmoid, vec![logit], vec![])?;
    b.graph.mark_output("logit", logit);
    b.graph.mark_output("prob", prob);
    Ok(b.graph)
}

fn build_classifier_graph(spec: &ModelSpec) -> Result<Graph> {
    let num_classes = spec
        .num_classes
        .ok_or_else(|| NnError::InvalidModel("classifier spec lacks num_classes".into()))?;
    let mut b = Builder::new(spec);
    // Two input channels: the VV patch stacked with the soft predicted mask.
    let input = b.graph.add_input("image");

    let mut node = input;
    let mut ci = 2;
    for (i, &c) in spec.blocks.iter().enumerate() {
        let prefix = format!("blk{}", i + 1);
        node = b.conv_bn_relu(&prefix, 1, node, ci, c)?;
        node = b.graph.push_node(&format!("{prefix}.pool"), Op::MaxPool2, vec![node], vec![])?;
        if b.use_se {
            node = b.se_block(&format!("{prefix}.se"), node, c)?;
        }
        ci = c;
    }

    // 160 -> 5 after five pools; the head is size-locked by the flatten.
    let side = CLASSIFIER_INPUT >> spec.blocks.len();
    let flat_len = side * side * ci;
    node = b.graph.push_node("head.flatten", Op::Flatten, vec![node], vec![])?;
    node = b.dense("head.fc1", node, flat_len, 256)?;
    if b.use_bn {
        node = b.bn("head.bn", node, 256)?;
    }
    node = b.graph.push_node("head.relu", Op::Relu, vec![node], vec![])?;
    if b.dropout > 0.0 {
        node = b
            .graph
            .push_node("head.dropout", Op::Dropout { rate: b.dropout }, vec![node], vec![])?;
    }
    let logit = b.dense("head.fc2", node, 256, num_classes)?;
    let prob = b.graph.push_node("head.softmax", Op::Softmax, vec![logit], vec![])?;
    b.graph.mark_output("logit", logit);
    b.graph.mark_output("prob", prob);
    Ok(b.graph)
}

fn build_pixel_graph() -> Result<Graph> {
    let mut g = Graph::new();
    let input = g.add_input("image");
    let wid = g.add_param("pixel.conv.w", ParamKind::ConvWeight, Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]))?;
    let bid = g.add_param("pixel.conv.b", ParamKind::ConvBias, Tensor::zeros(&[1]))?;
    let logit = g.push_node("pixel.conv", Op::Conv2d, vec![input], vec![wid, bid])?;
    let prob = g.push_node("pixel.sigmoid", Op::Sigmoid, vec![logit], vec![])?;
    g.mark_output("logit", logit);
    g.mark_output("prob", prob);
    g.stats_ready = true;
    Ok(g)
}

// ------------------------------------------------------------ receptive field

#[derive(Debug, Clone)]
pub struct ReceptiveFieldEntry {
    pub layer: String,
    pub receptive_field: usize,
    pub jump: usize,
}

#[derive(Debug, Clone)]
pub struct ReceptiveFieldReport {
    pub entries: Vec<ReceptiveFieldEntry>,
    /// Receptive field after each encoder block (post-pool for pooled blocks,
    /// post-conv for the bottleneck).
    pub block_milestones: Vec<usize>,
}

impl ReceptiveFieldReport {
    pub fn deepest(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.layer.contains("conv"))
            .map(|e| e.receptive_field)
            .max()
            .unwrap_or(1)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("layer                     rf    jump\n");
        for e in &self.entries {
            s.push_str(&format!("{:<24} {:>4} {:>6}\n", e.layer, e.receptive_field, e.jump));
        }
        s
    }
}

/// Standard recurrence over the encoder's convs and pools:
/// `rf' = rf + (k-1)*jump`, `jump' = jump*stride`.
pub fn receptive_field(spec: &ModelSpec) -> ReceptiveFieldReport {
    let mut rf = 1usize;
    let mut jump = 1usize;
    let mut entries = Vec::new();
    let mut milestones = Vec::new();

    let apply = |entries: &mut Vec<ReceptiveFieldEntry>, layer: String, k: usize, stride: usize, rf: &mut usize, jump: &mut usize| {
        *rf += (k - 1) * *jump;
        *jump *= stride;
        entries.push(ReceptiveFieldEntry { layer, receptive_field: *rf, jump: *jump });
    };

    match spec.kind {
        ModelKind::Ofcn => {
            for i in 1..=4 {
                apply(&mut entries, format!("enc{i}.conv1"), 3, 1, &mut rf, &mut jump);
                apply(&mut entries, format!("enc{i}.conv2"), 3, 1, &mut rf, &mut jump);
                apply(&mut entries, format!("enc{i}.pool"), 2, 2, &mut rf, &mut jump);
                milestones.push(rf);
            }
            apply(&mut entries, "mid.conv1".into(), 3, 1, &mut rf, &mut jump);
            apply(&mut entries, "mid.conv2".into(), 3, 1, &mut rf, &mut jump);
            milestones.push(rf);
        }
        ModelKind::Classifier => {
            for i in 1..=spec.blocks.len() {
                apply(&mut entries, format!("blk{i}.conv1"), 3, 1, &mut rf, &mut jump);
                apply(&mut entries, format!("blk{i}.pool"), 2, 2, &mut rf, &mut jump);
                milestones.push(rf);
            }
        }
        ModelKind::Pixel => {
            apply(&mut entries, "pixel.conv".into(), 1, 1, &mut rf, &mut jump);
            milestones.push(rf);
        }
    }
    ReceptiveFieldReport { entries, block_milestones: milestones }
}

// ------------------------------------------------------------- param counting

/// Trainable element count (running statistics excluded).
pub fn param_count(graph: &Graph) -> usize {
    graph.trainable_param_count()
}

/// Per-layer breakdown: (layer prefix, trainable elements), graph order.
pub fn param_breakdown(graph: &Graph) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for p in graph.params() {
        if !p.kind.trainable() {
            continue;
        }
        let prefix = p.name.rsplit_once('.').map(|(a, _)| a.to_string()).unwrap_or_else(|| p.name.clone());
        match out.last_mut() {
            Some((name, count)) if *name == prefix => *count += p.value.len(),
            _ => out.push((prefix, p.value.len())),
        }
    }
    out
}
