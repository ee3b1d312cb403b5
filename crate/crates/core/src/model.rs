//! Graph encoder and classification head.
//!
//! Pipeline per forward pass: a learnable feature mask (Gumbel-sigmoid in
//! train mode, plain tempered sigmoid in eval mode) scales every node
//! feature; two attention message-passing layers with residual projection,
//! layer norm and sigmoid produce node states; additive pooling gives one
//! vector per graph; a small gated head emits one logit per graph.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::hiergraph::{DirectedEdges, HierGraph};
use crate::tensor::{Mode, RngStream, Tape, Tensor, TensorError, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// How clamped-cosine edge weights enter message passing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeWeightMode {
    /// Each attention-weighted message is multiplied by its edge weight.
    #[default]
    ScaleMessage,
    /// Weights are ignored; attention alone decides.
    StructuralOnly,
}

impl EdgeWeightMode {
    pub fn name(self) -> &'static str {
        match self {
            EdgeWeightMode::ScaleMessage => "scale-message",
            EdgeWeightMode::StructuralOnly => "structural-only",
        }
    }
}

impl fmt::Display for EdgeWeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeWeightMode {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scale-message" => Ok(EdgeWeightMode::ScaleMessage),
            "structural-only" => Ok(EdgeWeightMode::StructuralOnly),
            _ => Err(TensorError::Config(format!(
                "unknown edge weight mode `{s}` (expected scale-message or structural-only)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Output widths of the two encoder layers.
    pub hidden_dims: [usize; 2],
    pub head_dim: usize,
    pub dropout: f64,
    pub edge_weight_mode: EdgeWeightMode,
    /// Initial value of every mask logit.
    pub mask_init: f64,
    /// Mask temperature used at inference.
    pub tau: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 768,
            hidden_dims: [128, 64],
            head_dim: 16,
            dropout: 0.2,
            edge_weight_mode: EdgeWeightMode::ScaleMessage,
            mask_init: 0.5,
            tau: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn with_input_dim(input_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.input_dim == 0 || self.hidden_dims.contains(&0) || self.head_dim == 0 {
            return Err(TensorError::Config(
                "model dimensions must be positive".into(),
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(TensorError::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TensorError::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayerParams {
    /// Self term of the message-passing update.
    pub self_weight: Tensor,
    /// Neighbor message projection.
    pub value_weight: Tensor,
    pub query_weight: Tensor,
    pub key_weight: Tensor,
    pub residual_weight: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub hidden_weight: Tensor,
    pub hidden_bias: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub out_weight: Tensor,
    pub out_bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `1 × d` mask logits.
    pub mask_logits: Tensor,
    pub layers: [EncoderLayerParams; 2],
    pub head: HeadParams,
}

fn glorot(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized by construction")
}

impl EncoderLayerParams {
    fn init(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> Self {
        EncoderLayerParams {
            self_weight: glorot(in_dim, out_dim, rng),
            value_weight: glorot(in_dim, out_dim, rng),
            query_weight: glorot(in_dim, out_dim, rng),
            key_weight: glorot(in_dim, out_dim, rng),
            residual_weight: glorot(in_dim, out_dim, rng),
            gamma: Tensor::ones(1, out_dim),
            beta: Tensor::zeros(1, out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.self_weight.cols()
    }
}

impl ModelParams {
    pub fn init(config: ModelConfig, rng: &mut RngStream) -> Result<Self, TensorError> {
        config.validate()?;
        let [h1, h2] = config.hidden_dims;
        let layers = [
            EncoderLayerParams::init(config.input_dim, h1, rng),
            EncoderLayerParams::init(h1, h2, rng),
        ];
        let head = HeadParams {
            hidden_weight: glorot(h2, config.head_dim, rng),
            hidden_bias: Tensor::zeros(1, config.head_dim),
            gamma: Tensor::ones(1, config.head_dim),
            beta: Tensor::zeros(1, config.head_dim),
            out_weight: glorot(config.head_dim, 1, rng),
            out_bias: Tensor::zeros(1, 1),
        };
        Ok(ModelParams {
            mask_logits: Tensor::filled(1, config.input_dim, config.mask_init),
            config,
            layers,
            head,
        })
    }

    /// Every parameter with a stable name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("mask.logits".to_string(), &self.mask_logits)];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend([
                (format!("layer{i}.self"), &l.self_weight),
                (format!("layer{i}.value"), &l.value_weight),
                (format!("layer{i}.query"), &l.query_weight),
                (format!("layer{i}.key"), &l.key_weight),
                (format!("layer{i}.residual"), &l.residual_weight),
                (format!("layer{i}.norm.gamma"), &l.gamma),
                (format!("layer{i}.norm.beta"), &l.beta),
            ]);
        }
        let h = &self.head;
        out.extend([
            ("head.hidden.weight".to_string(), &h.hidden_weight),
            ("head.hidden.bias".to_string(), &h.hidden_bias),
            ("head.norm.gamma".to_string(), &h.gamma),
            ("head.norm.beta".to_string(), &h.beta),
            ("head.out.weight".to_string(), &h.out_weight),
            ("head.out.bias".to_string(), &h.out_bias),
        ]);
        out
    }

    /// Mutable view in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.mask_logits];
        for l in self.layers.iter_mut() {
            out.extend([
                &mut l.self_weight,
                &mut l.value_weight,
                &mut l.query_weight,
                &mut l.key_weight,
                &mut l.residual_weight,
                &mut l.gamma,
                &mut l.beta,
            ]);
        }
        let h = &mut self.head;
        out.extend([
            &mut h.hidden_weight,
            &mut h.hidden_bias,
            &mut h.gamma,
            &mut h.beta,
            &mut h.out_weight,
            &mut h.out_bias,
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Record every parameter on `tape`, tracked for gradients or as
    /// constants.
    pub fn register(&self, tape: &mut Tape, track: bool) -> ParamVars {
        let mut put = |t: &Tensor| {
            if track {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let mask_logits = put(&self.mask_logits);
        let layers = self.layers.each_ref().map(|l| LayerVars {
            self_weight: put(&l.self_weight),
            value_weight: put(&l.value_weight),
            query_weight: put(&l.query_weight),
            key_weight: put(&l.key_weight),
            residual_weight: put(&l.residual_weight),
            gamma: put(&l.gamma),
            beta: put(&l.beta),
        });
        let h = &self.head;
        let head = HeadVars {
            hidden_weight: put(&h.hidden_weight),
            hidden_bias: put(&h.hidden_bias),
            gamma: put(&h.gamma),
            beta: put(&h.beta),
            out_weight: put(&h.out_weight),
            out_bias: put(&h.out_bias),
        };
        ParamVars {
            mask_logits,
            layers,
            head,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub self_weight: Var,
    pub value_weight: Var,
    pub query_weight: Var,
    pub key_weight: Var,
    pub residual_weight: Var,
    pub gamma: Var,
    pub beta: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub hidden_weight: Var,
    pub hidden_bias: Var,
    pub gamma: Var,
    pub beta: Var,
    pub out_weight: Var,
    pub out_bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub mask_logits: Var,
    pub layers: [LayerVars; 2],
    pub head: HeadVars,
}

impl ParamVars {
    /// Handles in the order of [`ModelParams::named`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.mask_logits];
        for l in &self.layers {
            out.extend([
                l.self_weight,
                l.value_weight,
                l.query_weight,
                l.key_weight,
                l.residual_weight,
                l.gamma,
                l.beta,
            ]);
        }
        let h = &self.head;
        out.extend([
            h.hidden_weight,
            h.hidden_bias,
            h.gamma,
            h.beta,
            h.out_weight,
            h.out_bias,
        ]);
        out
    }
}

/// Disjoint union of one or more graphs, ready for a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub features: Tensor,
    pub edges: DirectedEdges,
    /// Graph index of each node.
    pub graph_ids: Vec<usize>,
    pub num_graphs: usize,
}

impl GraphBatch {
    pub fn from_graphs(graphs: &[&HierGraph]) -> Result<Self, TensorError> {
        if graphs.is_empty() {
            return Err(TensorError::Contract("empty graph batch".into()));
        }
        let dim = graphs[0].feature_dim();
        let total: usize = graphs.iter().map(|g| g.node_count()).sum();
        let mut data = Vec::with_capacity(total * dim);
        let mut edges = DirectedEdges::default();
        let mut graph_ids = Vec::with_capacity(total);
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            for n in &g.nodes {
                if n.features.len() != dim {
                    return Err(TensorError::Config(format!(
                        "graph `{}` has {}-dim features, batch expects {dim}",
                        g.doc_id,
                        n.features.len()
                    )));
                }
                data.extend_from_slice(&n.features);
                graph_ids.push(gi);
            }
            let d = g.directed_edges();
            for e in 0..d.len() {
                edges.push(d.src[e] + offset, d.dst[e] + offset, d.weight[e]);
            }
            offset += g.node_count();
        }
        Ok(GraphBatch {
            features: Tensor::from_vec(total, dim, data)?,
            edges,
            graph_ids,
            num_graphs: graphs.len(),
        })
    }

    pub fn single(graph: &HierGraph) -> Result<Self, TensorError> {
        GraphBatch::from_graphs(&[graph])
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }
}

/// Mask vector `1 × d`: `sigmoid((s + g) / tau)` with fresh Gumbel noise `g`
/// in train mode, `sigmoid(s / tau)` in eval mode.
pub fn gumbel_sigmoid_mask(
    tape: &mut Tape,
    logits: Var,
    tau: f64,
    rng: &mut RngStream,
    mode: Mode,
) -> Result<Var, TensorError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(TensorError::Config(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let pre = match mode {
        Mode::Eval => logits,
        Mode::Train => {
            let [r, c] = tape.value(logits).shape();
            let noise = (0..r * c).map(|_| rng.gumbel()).collect();
            let g = tape.constant(Tensor::from_vec(r, c, noise)?);
            tape.add(logits, g)?
        }
    };
    let scaled = tape.scale(pre, 1.0 / tau)?;
    tape.sigmoid(scaled)
}

pub fn apply_mask(tape: &mut Tape, features: Var, mask: Var) -> Result<Var, TensorError> {
    tape.mul_row(features, mask)
}

#[derive(Clone, Copy, Debug)]
pub struct ConvOutput {
    pub output: Var,
    /// Attention coefficient per directed edge (`E × 1`), normalized over
    /// each destination's incoming edges.
    pub attention: Var,
}

/// Attention message passing: node `i` receives `self·x_i` plus the sum over
/// incoming edges `j → i` of `α_ij · w_ij^γ · value·x_j`, with `α` the
/// softmax over `i`'s neighbors of `(query·x_i)·(key·x_j) / sqrt(out_dim)`.
pub fn transformer_conv(
    tape: &mut Tape,
    layer: &LayerVars,
    h: Var,
    edges: &DirectedEdges,
    mode: EdgeWeightMode,
) -> Result<ConvOutput, TensorError> {
    let n = tape.value(h).rows();
    let out_dim = tape.value(layer.self_weight).cols();
    let q = tape.matmul(h, layer.query_weight)?;
    let k = tape.matmul(h, layer.key_weight)?;
    let v = tape.matmul(h, layer.value_weight)?;
    let s = tape.matmul(h, layer.self_weight)?;

    let q_dst = tape.gather_rows(q, &edges.dst)?;
    let k_src = tape.gather_rows(k, &edges.src)?;
    let qk = tape.mul(q_dst, k_src)?;
    let dots = tape.row_sum(qk)?;
    let scores = tape.scale(dots, 1.0 / (out_dim as f64).sqrt())?;
    let attention = tape.segment_softmax(scores, &edges.dst, n)?;

    let coef = match mode {
        EdgeWeightMode::StructuralOnly => attention,
        EdgeWeightMode::ScaleMessage => {
            let w = tape.constant(Tensor::column_vector(edges.weight.clone()));
            tape.mul(attention, w)?
        }
    };
    let v_src = tape.gather_rows(v, &edges.src)?;
    let messages = tape.mul_col(v_src, coef)?;
    let agg = tape.segment_sum(messages, &edges.dst, n)?;
    let output = tape.add(s, agg)?;
    Ok(ConvOutput { output, attention })
}

/// `sigmoid(layer_norm(residual·h + conv(h)))`.
pub fn encode_layer(
    tape: &mut Tape,
    layer: &LayerVars,
    h: Var,
    edges: &DirectedEdges,
    mode: EdgeWeightMode,
) -> Result<Var, TensorError> {
    let conv = transformer_conv(tape, layer, h, edges, mode)?;
    let res = tape.matmul(h, layer.residual_weight)?;
    let pre = tape.add(res, conv.output)?;
    let normed = tape.layer_norm(pre, layer.gamma, layer.beta, LAYER_NORM_EPS)?;
    tape.sigmoid(normed)
}

/// Additive readout: one row per graph.
pub fn pool_graph(
    tape: &mut Tape,
    h: Var,
    graph_ids: &[usize],
    num_graphs: usize,
) -> Result<Var, TensorError> {
    tape.segment_sum(h, graph_ids, num_graphs)
}

/// Head: linear, layer norm, dropout, sigmoid, linear. Returns `g × 1` raw
/// logits.
pub fn classify(
    tape: &mut Tape,
    head: &HeadVars,
    z: Var,
    dropout: f64,
    rng: &mut RngStream,
    mode: Mode,
) -> Result<Var, TensorError> {
    let lin = tape.matmul(z, head.hidden_weight)?;
    let z1 = tape.add_row(lin, head.hidden_bias)?;
    let z2 = tape.layer_norm(z1, head.gamma, head.beta, LAYER_NORM_EPS)?;
    let z3 = tape.dropout(z2, dropout, rng, mode)?;
    let z4 = tape.sigmoid(z3)?;
    let out = tape.matmul(z4, head.out_weight)?;
    tape.add_row(out, head.out_bias)
}

/// Intermediate handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardTrace {
    pub mask: Var,
    pub layer_outputs: [Var; 2],
    pub pooled: Var,
    pub logits: Var,
}

/// Full forward pass over a batch; one mask sample is shared by the batch.
pub fn forward_batch(
    tape: &mut Tape,
    params: &ModelParams,
    vars: &ParamVars,
    batch: &GraphBatch,
    tau: f64,
    rng: &mut RngStream,
    mode: Mode,
) -> Result<ForwardTrace, TensorError> {
    if batch.features.cols() != params.config.input_dim {
        return Err(TensorError::Config(format!(
            "graph features have dim {}, model expects {}",
            batch.features.cols(),
            params.config.input_dim
        )));
    }
    let x = tape.constant(batch.features.clone());
    let mask = gumbel_sigmoid_mask(tape, vars.mask_logits, tau, rng, mode)?;
    let mut h = apply_mask(tape, x, mask)?;
    let ewm = params.config.edge_weight_mode;
    let h1 = encode_layer(tape, &vars.layers[0], h, &batch.edges, ewm)?;
    h = encode_layer(tape, &vars.layers[1], h1, &batch.edges, ewm)?;
    let pooled = pool_graph(tape, h, &batch.graph_ids, batch.num_graphs)?;
    let logits = classify(tape, &vars.head, pooled, params.config.dropout, rng, mode)?;
    Ok(ForwardTrace {
        mask,
        layer_outputs: [h1, h],
        pooled,
        logits,
    })
}

/// Logit of a single graph.
pub fn forward(
    params: &ModelParams,
    graph: &HierGraph,
    tau: f64,
    rng: &mut RngStream,
    mode: Mode,
) -> Result<f64, TensorError> {
    let batch = GraphBatch::single(graph)?;
    Ok(batch_logits(params, &batch, tau, rng, mode)?[0])
}

/// Logits of a batch without gradient tracking.
pub fn batch_logits(
    params: &ModelParams,
    batch: &GraphBatch,
    tau: f64,
    rng: &mut RngStream,
    mode: Mode,
) -> Result<Vec<f64>, TensorError> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let trace = forward_batch(&mut tape, params, &vars, batch, tau, rng, mode)?;
    Ok(tape.value(trace.logits).data().to_vec())
}

/// Eval-mode probability and label; ties at 0.5 go to the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub label: bool,
}

impl Prediction {
    pub fn from_logit(logit: f64) -> Self {
        let probability = crate::tensor::stable_sigmoid(logit);
        Prediction {
            probability,
            label: probability >= 0.5,
        }
    }
}

/// Eval-mode prediction at the model's inference temperature.
pub fn predict(params: &ModelParams, graph: &HierGraph) -> Result<Prediction, TensorError> {
    let mut rng = RngStream::new(0);
    let logit = forward(params, graph, params.config.tau, &mut rng, Mode::Eval)?;
    Ok(Prediction::from_logit(logit))
}

/// Eval-mode predictions for many graphs, evaluated in chunks of `batch`.
pub fn predict_many(
    params: &ModelParams,
    graphs: &[HierGraph],
    batch: usize,
) -> Result<Vec<Prediction>, TensorError> {
    let mut out = Vec::with_capacity(graphs.len());
    let mut rng = RngStream::new(0);
    for chunk in graphs.chunks(batch.max(1)) {
        let refs: Vec<&HierGraph> = chunk.iter().collect();
        let b = GraphBatch::from_graphs(&refs)?;
        let logits = batch_logits(params, &b, params.config.tau, &mut rng, Mode::Eval)?;
        out.extend(logits.into_iter().map(Prediction::from_logit));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::hash_embed;
    use crate::hiergraph::{to_hiergraph, LevelConfig};
    use crate::hypergraph::build_hypergraph;
    use crate::segment::segment;

    fn small_config(dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim: dim,
            hidden_dims: [6, 5],
            head_dim: 3,
            ..ModelConfig::default()
        }
    }

    fn toy_graph(dim: usize) -> HierGraph {
        let d = segment("toy", "the cat sat. a dog ran far. birds sing.").unwrap();
        let b = hash_embed(&d, dim, 11).unwrap();
        to_hiergraph(&build_hypergraph(&d, &b).unwrap(), LevelConfig::Full).unwrap()
    }

    fn scalar_layer(tape: &mut Tape, w_self: f64) -> LayerVars {
        let mut one = |v: f64| tape.constant(Tensor::scalar(v));
        LayerVars {
            self_weight: one(w_self),
            value_weight: one(1.0),
            query_weight: one(1.0),
            key_weight: one(1.0),
            residual_weight: one(0.0),
            gamma: one(1.0),
            beta: one(0.0),
        }
    }

    #[test]
    fn scalar_conv_example() {
        let mut tape = Tape::new();
        let layer = scalar_layer(&mut tape, 0.0);
        let h = tape.constant(Tensor::column_vector(vec![1.0, 1.0, 2.0]));
        let mut edges = DirectedEdges::default();
        edges.push(1, 0, 1.0);
        edges.push(2, 0, 1.0);
        let out =
            transformer_conv(&mut tape, &layer, h, &edges, EdgeWeightMode::ScaleMessage).unwrap();
        let alpha = tape.value(out.attention).data().to_vec();
        assert!((alpha[0] - 0.2689).abs() < 1e-4);
        assert!((alpha[1] - 0.7311).abs() < 1e-4);
        let y = tape.value(out.output).get(0, 0);
        assert!((y - 1.7311).abs() < 1e-4, "{y}");
        // nodes 1 and 2 have no incoming edges and keep only the zero self term
        assert_eq!(tape.value(out.output).get(1, 0), 0.0);
    }

    #[test]
    fn single_and_symmetric_neighbors() {
        let mut tape = Tape::new();
        let layer = scalar_layer(&mut tape, 0.0);
        let h = tape.constant(Tensor::column_vector(vec![0.3, 0.7, 0.7]));
        let mut edges = DirectedEdges::default();
        edges.push(0, 1, 1.0);
        edges.push(1, 0, 0.5);
        edges.push(2, 0, 0.5);
        let out =
            transformer_conv(&mut tape, &layer, h, &edges, EdgeWeightMode::StructuralOnly).unwrap();
        let a = tape.value(out.attention).data().to_vec();
        assert_eq!(a[0], 1.0);
        assert!((a[1] - 0.5).abs() < 1e-15 && (a[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn edge_weight_mode_changes_messages() {
        let mut tape = Tape::new();
        let layer = scalar_layer(&mut tape, 0.0);
        let h = tape.constant(Tensor::column_vector(vec![1.0, 2.0]));
        let mut edges = DirectedEdges::default();
        edges.push(1, 0, 0.25);
        let scaled =
            transformer_conv(&mut tape, &layer, h, &edges, EdgeWeightMode::ScaleMessage).unwrap();
        let plain =
            transformer_conv(&mut tape, &layer, h, &edges, EdgeWeightMode::StructuralOnly).unwrap();
        assert_eq!(tape.value(scaled.output).get(0, 0), 0.5);
        assert_eq!(tape.value(plain.output).get(0, 0), 2.0);
    }

    #[test]
    fn mask_examples() {
        let mut tape = Tape::new();
        let mut rng = RngStream::new(1);
        let s = tape.param(Tensor::row_vector(vec![0.0, 2.0, -2.0]));
        let m = gumbel_sigmoid_mask(&mut tape, s, 1.0, &mut rng, Mode::Eval).unwrap();
        assert_eq!(tape.value(m).get(0, 0), 0.5);
        let sharp = gumbel_sigmoid_mask(&mut tape, s, 0.01, &mut rng, Mode::Eval).unwrap();
        assert!((tape.value(sharp).get(0, 1) - 1.0).abs() < 1e-3);
        assert!(tape.value(sharp).get(0, 2) < 1e-3);
        assert!(gumbel_sigmoid_mask(&mut tape, s, 0.0, &mut rng, Mode::Eval).is_err());
        assert!(gumbel_sigmoid_mask(&mut tape, s, -1.0, &mut rng, Mode::Train).is_err());
        let noisy = gumbel_sigmoid_mask(&mut tape, s, 1.0, &mut rng, Mode::Train).unwrap();
        assert!(tape.value(noisy).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn apply_mask_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row_vector(vec![3.0, 5.0]));
        let m = tape.constant(Tensor::row_vector(vec![1.0, 0.0]));
        let y = apply_mask(&mut tape, x, m).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 0.0]);
        let bad = tape.constant(Tensor::row_vector(vec![1.0]));
        assert!(apply_mask(&mut tape, x, bad).is_err());
    }

    #[test]
    fn zero_layer_gives_half() {
        let mut tape = Tape::new();
        let mut rng = RngStream::new(0);
        let mut params = ModelParams::init(small_config(4), &mut rng).unwrap();
        for t in params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let vars = params.register(&mut tape, false);
        let g = toy_graph(4);
        let batch = GraphBatch::single(&g).unwrap();
        let trace =
            forward_batch(&mut tape, &params, &vars, &batch, 1.0, &mut rng, Mode::Eval).unwrap();
        assert!(tape
            .value(trace.layer_outputs[0])
            .data()
            .iter()
            .all(|&v| v == 0.5));
        assert_eq!(tape.value(trace.logits).item(), 0.0);
        assert_eq!(
            Prediction::from_logit(0.0),
            Prediction {
                probability: 0.5,
                label: true
            }
        );
    }

    #[test]
    fn prediction_examples() {
        let p = Prediction::from_logit(-3.0);
        assert!((p.probability - 0.0474).abs() < 1e-4);
        assert!(!p.label);
    }

    #[test]
    fn eval_is_deterministic_and_bounded() {
        let mut rng = RngStream::new(5);
        let params = ModelParams::init(small_config(8), &mut rng).unwrap();
        let g = toy_graph(8);
        let a = forward(&params, &g, 1.0, &mut RngStream::new(1), Mode::Eval).unwrap();
        let b = forward(&params, &g, 1.0, &mut RngStream::new(2), Mode::Eval).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());

        let mut tape = Tape::new();
        let vars = params.register(&mut tape, false);
        let batch = GraphBatch::single(&g).unwrap();
        let t = forward_batch(
            &mut tape,
            &params,
            &vars,
            &batch,
            1.0,
            &mut rng,
            Mode::Train,
        )
        .unwrap();
        for h in t.layer_outputs {
            assert!(tape.value(h).data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mut rng = RngStream::new(5);
        let params = ModelParams::init(small_config(6), &mut rng).unwrap();
        let g = toy_graph(8);
        assert!(matches!(
            forward(&params, &g, 1.0, &mut rng, Mode::Eval),
            Err(TensorError::Config(_))
        ));
    }

    #[test]
    fn single_node_graph() {
        let d = segment("one", "hi").unwrap();
        let b = hash_embed(&d, 4, 0).unwrap();
        let g = to_hiergraph(&build_hypergraph(&d, &b).unwrap(), LevelConfig::WordOnly).unwrap();
        assert!(g.edges.is_empty());
        let mut rng = RngStream::new(5);
        let params = ModelParams::init(small_config(4), &mut rng).unwrap();
        assert!(forward(&params, &g, 1.0, &mut rng, Mode::Train)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn default_shapes() {
        let mut rng = RngStream::new(0);
        let mut p = ModelParams::init(ModelConfig::with_input_dim(32), &mut rng).unwrap();
        assert_eq!(p.layers[0].self_weight.shape(), [32, 128]);
        assert_eq!(p.layers[1].residual_weight.shape(), [128, 64]);
        assert_eq!(p.head.hidden_weight.shape(), [64, 16]);
        assert_eq!(p.head.out_weight.shape(), [16, 1]);
        assert!(p.mask_logits.data().iter().all(|&v| v == 0.5));
        let bound = (6.0f64 / 160.0).sqrt();
        assert!(p.layers[0]
            .query_weight
            .data()
            .iter()
            .all(|v| v.abs() <= bound));
        assert_eq!(p.named().len(), p.tensors_mut().len());
    }
}
