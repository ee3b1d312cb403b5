//! Per-trait training: mini-batches of disjoint graph unions, mean BCE on
//! logits, AdamW with decoupled weight decay.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Trait;
use crate::hiergraph::{HierGraph, LevelConfig};
use crate::model::{
    forward_batch, predict_many, EdgeWeightMode, GraphBatch, ModelConfig, ModelParams,
};
use crate::tensor::{Mode, RngStream, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} graphs but {1} labels")]
    Length(usize, usize),
    #[error("training set for {0} has a single class")]
    SingleClass(Trait),
    #[error("graph `{doc_id}` was built at level {found}, config expects {expected}")]
    Level {
        doc_id: String,
        expected: LevelConfig,
        found: LevelConfig,
    },
}

/// Mask temperature per epoch: constant, or geometric from `initial` to
/// `final_tau` over the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TauSchedule {
    pub initial: f64,
    pub final_tau: Option<f64>,
}

impl Default for TauSchedule {
    fn default() -> Self {
        TauSchedule {
            initial: 1.0,
            final_tau: None,
        }
    }
}

impl TauSchedule {
    pub fn annealed() -> Self {
        TauSchedule {
            initial: 1.0,
            final_tau: Some(0.1),
        }
    }

    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        match self.final_tau {
            None => self.initial,
            Some(_) if epochs <= 1 => self.initial,
            Some(f) => self.initial * (f / self.initial).powf(epoch as f64 / (epochs - 1) as f64),
        }
    }

    pub fn last(&self, epochs: usize) -> f64 {
        self.at(epochs.saturating_sub(1), epochs)
    }
}

/// False for NaN as well as for non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub tau: TauSchedule,
    pub seed: u64,
    pub level: LevelConfig,
    pub edge_weight_mode: EdgeWeightMode,
    pub hidden_dims: [usize; 2],
    pub head_dim: usize,
    pub mask_init: f64,
    /// Global gradient-norm clip; off when `None`.
    pub clip_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 3e-4,
            weight_decay: 3e-4,
            dropout: m.dropout,
            tau: TauSchedule::default(),
            seed: 0,
            level: LevelConfig::Full,
            edge_weight_mode: m.edge_weight_mode,
            hidden_dims: m.hidden_dims,
            head_dim: m.head_dim,
            mask_init: m.mask_init,
            clip_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !positive(self.learning_rate)
            || !(positive(self.weight_decay) || self.weight_decay == 0.0)
        {
            return bad("learning_rate must be positive and weight_decay non-negative".into());
        }
        if !positive(self.tau.initial) || self.tau.final_tau.is_some_and(|t| !positive(t)) {
            return bad("tau must be positive".into());
        }
        if self.clip_grad_norm.is_some_and(|c| !positive(c)) {
            return bad("clip_grad_norm must be positive".into());
        }
        Ok(())
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_dims: self.hidden_dims,
            head_dim: self.head_dim,
            dropout: self.dropout,
            edge_weight_mode: self.edge_weight_mode,
            mask_init: self.mask_init,
            tau: self.tau.last(self.epochs),
        }
    }
}

/// Mean binary cross-entropy on logits, in overflow-free form.
pub fn bce_loss(logits: &[f64], labels: &[f64]) -> Result<f64, TrainError> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(TrainError::Length(logits.len(), labels.len()));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(TrainError::Config(format!("label {y} is not 0 or 1")));
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
        .sum();
    Ok(total / logits.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One update. The parameter list must keep the same order and shapes
    /// across calls. Non-finite gradients abort before anything changes.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[&Tensor],
    ) -> Result<(), TrainError> {
        if params.len() != grads.len() {
            return Err(TrainError::Length(params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(TensorError::Dimension {
                    op: "adamw_step",
                    lhs: p.shape(),
                    rhs: g.shape(),
                }
                .into());
            }
            if !g.all_finite() {
                return Err(TensorError::NonFinite { op: "adamw_step" }.into());
            }
        }
        if self.first.is_empty() {
            self.first = params
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let lr_wd = self.learning_rate * self.weight_decay;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                let mhat = *mj / c1;
                let vhat = *vj / c2;
                *w -= lr_wd * *w;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// One mini-batch: which graphs, their union, and their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub graph: GraphBatch,
    pub labels: Vec<f64>,
}

/// Shuffle with `rng` and cut into batches of `batch_size` (the last may be
/// short).
pub fn make_batches(
    graphs: &[HierGraph],
    labels: &[bool],
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<Vec<Batch>, TrainError> {
    if graphs.len() != labels.len() {
        return Err(TrainError::Length(graphs.len(), labels.len()));
    }
    if graphs.is_empty() || batch_size == 0 {
        return Err(TrainError::Config(
            "need graphs and a positive batch size".into(),
        ));
    }
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    rng.shuffle(&mut order);
    order
        .chunks(batch_size)
        .map(|idx| {
            let refs: Vec<&HierGraph> = idx.iter().map(|&i| &graphs[i]).collect();
            Ok(Batch {
                indices: idx.to_vec(),
                graph: GraphBatch::from_graphs(&refs)?,
                labels: idx.iter().map(|&i| labels[i] as u8 as f64).collect(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tau: f64,
    pub mean_loss: f64,
    pub heldout_accuracy: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub trait_: Option<Trait>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain data serializes") + "\n")
            .collect()
    }

    /// Losses and accuracies without wall-clock, for reproducibility checks.
    pub fn deterministic_view(&self) -> Vec<(usize, u64, u64, Option<u64>)> {
        self.epochs
            .iter()
            .map(|e| {
                (
                    e.epoch,
                    e.tau.to_bits(),
                    e.mean_loss.to_bits(),
                    e.heldout_accuracy.map(f64::to_bits),
                )
            })
            .collect()
    }
}

/// Labeled graphs used for per-epoch held-out accuracy.
#[derive(Clone, Copy, Debug)]
pub struct HeldOut<'a> {
    pub graphs: &'a [HierGraph],
    pub labels: &'a [bool],
}

/// Root of every random stream a training run consumes.
pub fn trait_stream(seed: u64, t: Trait) -> RngStream {
    RngStream::new(seed).split(0x7400 + t.index() as u64)
}

pub fn accuracy(
    params: &ModelParams,
    graphs: &[HierGraph],
    labels: &[bool],
) -> Result<f64, TrainError> {
    if graphs.is_empty() {
        return Ok(0.0);
    }
    let preds = predict_many(params, graphs, 32)?;
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(p, &y)| p.label == y)
        .count();
    Ok(correct as f64 / graphs.len() as f64)
}

fn clip(grads: &mut [Tensor], max_norm: f64) {
    let norm = grads.iter().map(Tensor::l2_norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

pub fn train_trait(
    graphs: &[HierGraph],
    labels: &[bool],
    config: &TrainConfig,
    t: Trait,
    heldout: Option<HeldOut<'_>>,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    config.validate()?;
    if graphs.len() != labels.len() {
        return Err(TrainError::Length(graphs.len(), labels.len()));
    }
    if graphs.len() < 2 || labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(TrainError::SingleClass(t));
    }
    if let Some(g) = graphs.iter().find(|g| g.level != config.level) {
        return Err(TrainError::Level {
            doc_id: g.doc_id.clone(),
            expected: config.level,
            found: g.level,
        });
    }
    let root = trait_stream(config.seed, t);
    let mut params = ModelParams::init(
        config.model_config(graphs[0].feature_dim()),
        &mut root.split(0),
    )?;
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut history = TrainHistory {
        trait_: Some(t),
        epochs: Vec::with_capacity(config.epochs),
    };

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let tau = config.tau.at(epoch, config.epochs);
        let mut rng = root.split(1 + epoch as u64);
        let batches = make_batches(graphs, labels, config.batch_size, &mut rng)?;
        let mut loss_sum = 0.0;
        for batch in &batches {
            let mut tape = Tape::new();
            let vars = params.register(&mut tape, true);
            let trace = forward_batch(
                &mut tape,
                &params,
                &vars,
                &batch.graph,
                tau,
                &mut rng,
                Mode::Train,
            )?;
            let loss = tape.bce_with_logits(trace.logits, &batch.labels)?;
            loss_sum += tape.value(loss).item() * batch.labels.len() as f64;
            tape.backward(loss)?;
            let mut grads: Vec<Tensor> = vars
                .all()
                .into_iter()
                .map(|v| {
                    let shape = tape.value(v).shape();
                    tape.grad(v)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(shape[0], shape[1]))
                })
                .collect();
            if let Some(c) = config.clip_grad_norm {
                clip(&mut grads, c);
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            opt.step(&mut params.tensors_mut(), &grad_refs)?;
        }
        params.config.tau = tau;
        let heldout_accuracy = match heldout {
            Some(h) => Some(accuracy(&params, h.graphs, h.labels)?),
            None => None,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            tau,
            mean_loss: loss_sum / graphs.len() as f64,
            heldout_accuracy,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        log::debug!("{t} epoch {} loss {:.5}", record.epoch, record.mean_loss);
        history.epochs.push(record);
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::hash_embed;
    use crate::hiergraph::to_hiergraph;
    use crate::hypergraph::build_hypergraph;
    use crate::model::batch_logits;
    use crate::segment::segment;

    fn graph(id: &str, text: &str) -> HierGraph {
        let d = segment(id, text).unwrap();
        let b = hash_embed(&d, 8, 2).unwrap();
        to_hiergraph(&build_hypergraph(&d, &b).unwrap(), LevelConfig::Full).unwrap()
    }

    fn corpus(n: usize) -> (Vec<HierGraph>, Vec<bool>) {
        let words = [
            "sun", "rain", "wind", "cloud", "snow", "fog", "hail", "mist",
        ];
        let mut rng = RngStream::new(9);
        let mut graphs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let mut text = String::new();
            for _ in 0..3 {
                for _ in 0..4 {
                    text.push_str(words[rng.below(words.len())]);
                    text.push(' ');
                }
                if pos {
                    text.push_str("zebra ");
                }
                text.push_str(". ");
            }
            graphs.push(graph(&format!("d{i}"), &text));
            labels.push(pos);
        }
        (graphs, labels)
    }

    fn small() -> TrainConfig {
        TrainConfig {
            hidden_dims: [8, 6],
            head_dim: 4,
            epochs: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn bce_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_loss(&[0.0], &[1.0]).unwrap() - ln2).abs() < 1e-15);
        assert!((bce_loss(&[0.0], &[0.0]).unwrap() - ln2).abs() < 1e-15);
        assert!((bce_loss(&[2.0], &[1.0]).unwrap() - 0.126928).abs() < 1e-6);
        let big = bce_loss(&[1000.0], &[1.0]).unwrap();
        assert!(big.is_finite() && big < 1e-300);
        assert!(bce_loss(&[0.0, 1.0], &[1.0]).is_err());
        assert!(bce_loss(&[0.0], &[0.5]).is_err());
    }

    #[test]
    fn adamw_examples() {
        let mut theta = Tensor::scalar(1.0);
        let mut opt = AdamW::new(0.1, 0.0);
        opt.step(&mut [&mut theta], &[&Tensor::scalar(1.0)])
            .unwrap();
        assert!((theta.item() - 0.9).abs() < 1e-6);
        assert_eq!(opt.step, 1);

        let mut still = Tensor::row_vector(vec![0.5, -2.0]);
        let mut opt = AdamW::new(0.1, 0.0);
        opt.step(&mut [&mut still], &[&Tensor::zeros(1, 2)])
            .unwrap();
        assert_eq!(still.data(), &[0.5, -2.0]);

        let mut decayed = Tensor::scalar(2.0);
        let mut opt = AdamW::new(0.1, 0.5);
        opt.step(&mut [&mut decayed], &[&Tensor::scalar(0.0)])
            .unwrap();
        assert_eq!(decayed.item(), 2.0 - 0.1 * 0.5 * 2.0);

        let mut p = Tensor::scalar(1.0);
        let err = opt.step(&mut [&mut p], &[&Tensor::scalar(f64::NAN)]);
        assert!(matches!(
            err,
            Err(TrainError::Tensor(TensorError::NonFinite { .. }))
        ));
        assert_eq!(p.item(), 1.0);
    }

    #[test]
    fn batches_count_and_determinism() {
        let (g, y) = corpus(10);
        let a = make_batches(&g, &y, 8, &mut RngStream::new(4)).unwrap();
        assert_eq!(
            a.iter().map(|b| b.indices.len()).collect::<Vec<_>>(),
            vec![8, 2]
        );
        let b = make_batches(&g, &y, 8, &mut RngStream::new(4)).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.iter().flat_map(|b| b.indices.clone()).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn batched_logits_match_single() {
        let (g, y) = corpus(6);
        let params = ModelParams::init(small().model_config(8), &mut RngStream::new(1)).unwrap();
        let batches = make_batches(&g, &y, 4, &mut RngStream::new(2)).unwrap();
        for b in &batches {
            let joint =
                batch_logits(&params, &b.graph, 1.0, &mut RngStream::new(0), Mode::Eval).unwrap();
            for (k, &i) in b.indices.iter().enumerate() {
                let one = GraphBatch::single(&g[i]).unwrap();
                let solo =
                    batch_logits(&params, &one, 1.0, &mut RngStream::new(0), Mode::Eval).unwrap();
                assert!((joint[k] - solo[0]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn tau_schedule() {
        let s = TauSchedule::annealed();
        assert_eq!(s.at(0, 30), 1.0);
        assert!((s.at(29, 30) - 0.1).abs() < 1e-12);
        assert_eq!(TauSchedule::default().at(10, 30), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, y) = corpus(4);
        let cfg = TrainConfig {
            epochs: 0,
            ..small()
        };
        assert!(matches!(
            train_trait(&g, &y, &cfg, Trait::Openness, None),
            Err(TrainError::Config(_))
        ));
        let ones = vec![true; 4];
        assert!(matches!(
            train_trait(&g, &ones, &small(), Trait::Openness, None),
            Err(TrainError::SingleClass(Trait::Openness))
        ));
        let cfg = TrainConfig {
            level: LevelConfig::WordOnly,
            ..small()
        };
        assert!(matches!(
            train_trait(&g, &y, &cfg, Trait::Openness, None),
            Err(TrainError::Level { .. })
        ));
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        let (g, y) = corpus(16);
        let cfg = TrainConfig {
            epochs: 8,
            learning_rate: 1e-2,
            ..small()
        };
        let held = HeldOut {
            graphs: &g,
            labels: &y,
        };
        let (p1, h1) = train_trait(&g, &y, &cfg, Trait::Extraversion, Some(held)).unwrap();
        let (p2, h2) = train_trait(&g, &y, &cfg, Trait::Extraversion, Some(held)).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1.deterministic_view(), h2.deterministic_view());
        assert_eq!(h1.epochs.len(), 8);
        assert!(h1.epochs[7].mean_loss < h1.epochs[0].mean_loss);
        assert_eq!(h1.to_jsonl().lines().count(), 8);
    }
}
