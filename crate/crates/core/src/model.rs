//! The joint model: a node autoencoder over pair attributes and pooled
//! structure, an edge autoencoder over collaboration attributes, and a
//! logistic head on the concatenated embeddings.

use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{pair_features, FeatureScaler, PairFeatures};
use crate::features::{FeatureConfig, EDGE_DIM, KULC_YEARS};
use crate::graph::CollabGraph;
use crate::io::{open, write_atomic};
use crate::nn::{
    penalized_recon_grad, penalized_recon_loss, Activation, AdamConfig, DenseLayer, ForwardCache,
    LayerGrad, Mlp, MlpAdam, Mode, PenaltyMatrix,
};
use crate::{Error, Result};

/// Chunk-mean pooling of two adjacency rows to `pool_dim` entries, averaged
/// across the pair.
///
/// Rows are split into contiguous chunks of `⌈n/pool_dim⌉` entries (the last
/// one may be short, trailing outputs are zero) and each chunk is replaced by
/// its mean.
pub fn pool(row_i: &[f64], row_j: &[f64], pool_dim: usize) -> Result<Vec<f64>> {
    if row_i.len() != row_j.len() {
        return Err(Error::shape(row_i.len(), row_j.len()));
    }
    if pool_dim == 0 {
        return Err(Error::shape("pool_dim >= 1", 0));
    }
    let n = row_i.len();
    let chunk = n.div_ceil(pool_dim).max(1);
    let mut out = vec![0.0; pool_dim];
    for (k, slot) in out.iter_mut().enumerate() {
        let lo = k * chunk;
        if lo >= n {
            break;
        }
        let hi = (lo + chunk).min(n);
        let len = (hi - lo) as f64;
        let a: f64 = row_i[lo..hi].iter().sum::<f64>() / len;
        let b: f64 = row_j[lo..hi].iter().sum::<f64>() / len;
        *slot = (a + b) / 2.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// Sum of squared weights and biases.
    #[default]
    SquaredNorm,
    /// Literal sum of weights and biases.
    RawSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// No node autoencoder; the head sees the edge embedding only.
    EdgeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub pool_dim: usize,
    /// Encoder widths of the node autoencoder; the decoder mirrors them.
    pub node_layers: Vec<usize>,
    /// Encoder widths of the edge autoencoder.
    pub edge_layers: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub pretrain_learning_rate: f64,
    pub pretrain_epochs: usize,
    pub rho: f64,
    /// Dropout rate on edge-encoder outputs during training.
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the relative change of the epoch loss stays below this for
    /// `convergence_patience` consecutive epochs.
    pub convergence_eps: f64,
    pub convergence_patience: usize,
    pub regularizer: Regularizer,
    pub variant: Variant,
    /// Years of collaboration history visible to the edge features.
    pub feature_window: usize,
    pub features: FeatureConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            pool_dim: 1000,
            node_layers: vec![2000, 1000, 500],
            edge_layers: vec![18, 50],
            alpha: 1e-5,
            beta: 1.0,
            gamma: 0.01,
            learning_rate: 0.01,
            pretrain_learning_rate: 0.01,
            pretrain_epochs: 20,
            rho: 5.0,
            dropout: 0.2,
            batch_size: 64,
            max_epochs: 1000,
            convergence_eps: 1e-5,
            convergence_patience: 5,
            regularizer: Regularizer::SquaredNorm,
            variant: Variant::Full,
            feature_window: KULC_YEARS,
            features: FeatureConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.pool_dim == 0 {
            return fail("pool_dim must be at least 1".into());
        }
        for (name, layers) in [("node_layers", &self.node_layers), ("edge_layers", &self.edge_layers)] {
            if layers.is_empty() || layers.contains(&0) {
                return fail(format!("{name} must be non-empty with positive widths"));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("convergence_eps", self.convergence_eps),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and non-negative"));
            }
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("pretrain_learning_rate", self.pretrain_learning_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive"));
            }
        }
        if !(self.rho.is_finite() && self.rho >= 1.0) {
            return fail("rho must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.feature_window == 0 || self.feature_window > KULC_YEARS {
            return fail(format!("feature_window must be in 1..={KULC_YEARS}"));
        }
        Ok(())
    }

    fn squared(&self) -> bool {
        self.regularizer == Regularizer::SquaredNorm
    }
}

/// One directed candidate pair as the model sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub advisee: usize,
    pub candidate: usize,
    /// Scaled node attributes followed by the pooled structure vector.
    pub node_input: Vec<f64>,
    pub edge_input: Vec<f64>,
    pub label: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Autoencoder {
    fn new<R: Rng>(input: usize, widths: &[usize], rng: &mut R) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(widths);
        let encoder = Mlp::new(&dims, Activation::Sigmoid, rng);
        dims.reverse();
        let decoder = Mlp::new(&dims, Activation::Sigmoid, rng);
        Autoencoder { encoder, decoder }
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.decoder.n_params()
    }

    fn penalty(&self, squared: bool) -> f64 {
        if squared {
            self.encoder.squared_norm() + self.decoder.squared_norm()
        } else {
            self.encoder.raw_sum() + self.decoder.raw_sum()
        }
    }

    fn flat_params(&self, out: &mut Vec<f64>) {
        out.extend(self.encoder.flat_params());
        out.extend(self.decoder.flat_params());
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<usize> {
        let (ne, nd) = (self.encoder.n_params(), self.decoder.n_params());
        if flat.len() < ne + nd {
            return Err(Error::shape(ne + nd, flat.len()));
        }
        self.encoder.set_flat_params(&flat[..ne])?;
        self.decoder.set_flat_params(&flat[ne..ne + nd])?;
        Ok(ne + nd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderGrad {
    pub encoder: Vec<LayerGrad>,
    pub decoder: Vec<LayerGrad>,
}

impl AutoencoderGrad {
    fn add_penalty(&mut self, ae: &Autoencoder, scale: f64, squared: bool) {
        for (g, l) in self.encoder.iter_mut().zip(&ae.encoder.layers) {
            g.add_penalty(l, scale, squared);
        }
        for (g, l) in self.decoder.iter_mut().zip(&ae.decoder.layers) {
            g.add_penalty(l, scale, squared);
        }
    }

    fn flatten_into(&self, out: &mut Vec<f64>) {
        self.encoder.iter().chain(&self.decoder).for_each(|g| g.flatten_into(out));
    }
}

/// Gradients of the joint objective, grouped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub node: Option<AutoencoderGrad>,
    pub edge: AutoencoderGrad,
    pub head: Vec<LayerGrad>,
}

impl ModelGrads {
    /// Flattened in the order of [`JointModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(n) = &self.node {
            n.flatten_into(&mut out);
        }
        self.edge.flatten_into(&mut out);
        self.head.iter().for_each(|g| g.flatten_into(&mut out));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AeAdam {
    encoder: MlpAdam,
    decoder: MlpAdam,
}

impl AeAdam {
    fn new(ae: &Autoencoder, cfg: AdamConfig) -> Self {
        AeAdam {
            encoder: MlpAdam::new(&ae.encoder, cfg),
            decoder: MlpAdam::new(&ae.decoder, cfg),
        }
    }

    fn step(&mut self, ae: &mut Autoencoder, g: &AutoencoderGrad) -> Result<()> {
        self.encoder.step(&mut ae.encoder, &g.encoder)?;
        self.decoder.step(&mut ae.decoder, &g.decoder)
    }
}

/// Adam moments for every parameter group of a [`JointModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    node: Option<AeAdam>,
    edge: AeAdam,
    head: MlpAdam,
}

/// Per-sample means of the loss terms plus the weighted regularizer.
///
/// `l_sum = l_a + l_e + β·l_lr + l_reg` where
/// `l_reg = α·(Σ edge params + γ·Σ node params)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l_a: f64,
    pub l_e: f64,
    pub l_lr: f64,
    pub l_reg: f64,
    pub l_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Pretrain,
    Joint,
}

/// Losses on the full training set, in evaluation mode, after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: LossParts,
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochLog>,
    pub converged: bool,
}

impl TrainingHistory {
    /// `L_sum` before the first joint epoch.
    pub fn joint_start(&self) -> Option<f64> {
        self.epochs
            .iter()
            .rev()
            .find(|e| e.phase != Phase::Joint)
            .map(|e| e.loss.l_sum)
    }

    pub fn write_csv<W: std::io::Write + ?Sized>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "epoch,L_a,L_e,L_lr,L_sum,train_acc,L_reg,phase")?;
        for e in &self.epochs {
            let phase = match e.phase {
                Phase::Initial => "initial",
                Phase::Pretrain => "pretrain",
                Phase::Joint => "joint",
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                e.epoch, e.loss.l_a, e.loss.l_e, e.loss.l_lr, e.loss.l_sum, e.train_acc, e.loss.l_reg, phase
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_csv(w))
    }
}

struct Forward {
    node: Option<(ForwardCache, ForwardCache)>,
    edge: (ForwardCache, ForwardCache),
    head: ForwardCache,
}

struct Batch {
    node: Option<Array2<f64>>,
    edge: Array2<f64>,
    labels: Option<Vec<f64>>,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: JointModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub config: ModelConfig,
    pub node_ae: Option<Autoencoder>,
    pub edge_ae: Autoencoder,
    /// Single sigmoid unit over `[node embedding ∥ edge embedding]`.
    pub head: Mlp,
    pub scaler: FeatureScaler,
    pub optimizer: Option<OptimizerState>,
}

impl JointModel {
    /// Fresh parameters for node inputs of `node_input_dim` entries
    /// (scaled attributes plus pooled structure). The head starts at zero.
    pub fn new(config: ModelConfig, node_input_dim: usize, scaler: FeatureScaler) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let node_ae = match config.variant {
            Variant::Full => Some(Autoencoder::new(node_input_dim, &config.node_layers, &mut rng)),
            Variant::EdgeOnly => None,
        };
        let mut edge_ae = Autoencoder::new(EDGE_DIM, &config.edge_layers, &mut rng);
        edge_ae.encoder.dropout = vec![config.dropout; edge_ae.encoder.layers.len()];
        let d = node_ae.as_ref().map_or(0, |a| a.embed_dim()) + edge_ae.embed_dim();
        let head = Mlp::from_layers(vec![DenseLayer::zeros(d, 1, Activation::Sigmoid)]);
        Ok(JointModel {
            config,
            node_ae,
            edge_ae,
            head,
            scaler,
            optimizer: None,
        })
    }

    pub fn node_input_dim(&self) -> Option<usize> {
        self.node_ae.as_ref().map(|a| a.encoder.input_dim())
    }

    pub fn n_params(&self) -> usize {
        self.node_ae.as_ref().map_or(0, |a| a.n_params()) + self.edge_ae.n_params() + self.head.n_params()
    }

    /// Node autoencoder, edge autoencoder, then head.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        if let Some(a) = &self.node_ae {
            a.flat_params(&mut out);
        }
        self.edge_ae.flat_params(&mut out);
        out.extend(self.head.flat_params());
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::shape(self.n_params(), flat.len()));
        }
        let mut at = 0;
        if let Some(a) = &mut self.node_ae {
            at += a.set_flat_params(&flat[at..])?;
        }
        at += self.edge_ae.set_flat_params(&flat[at..])?;
        self.head.set_flat_params(&flat[at..])
    }

    fn is_finite(&self) -> bool {
        self.node_ae
            .as_ref()
            .is_none_or(|a| a.encoder.is_finite() && a.decoder.is_finite())
            && self.edge_ae.encoder.is_finite()
            && self.edge_ae.decoder.is_finite()
            && self.head.is_finite()
    }

    fn batch(&self, samples: &[&PairSample], need_labels: bool) -> Result<Batch> {
        let b = samples.len();
        let node = match self.node_input_dim() {
            Some(d) => {
                let mut m = Array2::zeros((b, d));
                for (r, s) in samples.iter().enumerate() {
                    if s.node_input.len() != d {
                        return Err(Error::shape(d, s.node_input.len()));
                    }
                    m.row_mut(r).assign(&ndarray::aview1(&s.node_input));
                }
                Some(m)
            }
            None => None,
        };
        let mut edge = Array2::zeros((b, EDGE_DIM));
        for (r, s) in samples.iter().enumerate() {
            if s.edge_input.len() != EDGE_DIM {
                return Err(Error::shape(EDGE_DIM, s.edge_input.len()));
            }
            edge.row_mut(r).assign(&ndarray::aview1(&s.edge_input));
        }
        let labels = if need_labels {
            let mut ls = Vec::with_capacity(b);
            for s in samples {
                ls.push(s.label.ok_or(Error::UnlabeledSample {
                    advisee: s.advisee,
                    candidate: s.candidate,
                })?);
            }
            Some(ls)
        } else {
            None
        };
        Ok(Batch { node, edge, labels })
    }

    fn forward<R: Rng>(&self, batch: &Batch, mode: Mode, rng: &mut R) -> Result<Forward> {
        let node = match (&self.node_ae, &batch.node) {
            (Some(ae), Some(x)) => {
                let enc = ae.encoder.forward(x.view(), mode, rng)?;
                let dec = ae.decoder.forward(enc.output().view(), mode, rng)?;
                Some((enc, dec))
            }
            _ => None,
        };
        let enc = self.edge_ae.encoder.forward(batch.edge.view(), mode, rng)?;
        let dec = self.edge_ae.decoder.forward(enc.output().view(), mode, rng)?;
        let d = match &node {
            Some((ne, _)) => ndarray::concatenate(Axis(1), &[ne.output().view(), enc.output().view()])
                .expect("embedding rows agree"),
            None => enc.output().clone(),
        };
        let head = self.head.forward(d.view(), mode, rng)?;
        Ok(Forward {
            node,
            edge: (enc, dec),
            head,
        })
    }

    fn regularizer(&self) -> f64 {
        let sq = self.config.squared();
        let node = self.node_ae.as_ref().map_or(0.0, |a| a.penalty(sq));
        self.config.alpha * (self.edge_ae.penalty(sq) + self.config.gamma * node)
    }

    fn losses(&self, batch: &Batch, fwd: &Forward) -> Result<LossParts> {
        let b = batch.edge.nrows() as f64;
        let penalty = PenaltyMatrix::new(self.config.rho);
        let l_a = match (&fwd.node, &batch.node) {
            (Some((_, dec)), Some(x)) => penalized_recon_loss(x.view(), dec.output().view(), penalty)? / b,
            _ => 0.0,
        };
        let l_e = penalized_recon_loss(
            batch.edge.view(),
            fwd.edge.1.output().view(),
            PenaltyMatrix::new(1.0),
        )? / b;
        let labels = batch.labels.as_ref().expect("labels checked");
        let p = fwd.head.output();
        let l_lr = labels
            .iter()
            .zip(p.column(0))
            .map(|(&y, &q)| (y - q).abs())
            .sum::<f64>()
            / b;
        let l_reg = self.regularizer();
        Ok(LossParts {
            l_a,
            l_e,
            l_lr,
            l_reg,
            l_sum: l_a + l_e + self.config.beta * l_lr + l_reg,
        })
    }

    fn gradients(&self, batch: &Batch, fwd: &Forward) -> Result<ModelGrads> {
        let cfg = &self.config;
        let b = batch.edge.nrows() as f64;
        let sq = cfg.squared();
        let labels = batch.labels.as_ref().expect("labels checked");

        // Head: d|y − p|/dp = sign(p − y), zero at the kink.
        let p = fwd.head.output();
        let mut dp = Array2::zeros(p.raw_dim());
        for (r, &y) in labels.iter().enumerate() {
            let diff = p[[r, 0]] - y;
            dp[[r, 0]] = if diff > 0.0 {
                cfg.beta / b
            } else if diff < 0.0 {
                -cfg.beta / b
            } else {
                0.0
            };
        }
        let (head, d_d) = self.head.backward(&fwd.head, dp.view())?;
        let k_node = self.node_ae.as_ref().map_or(0, |a| a.embed_dim());

        let edge_dec_grad = penalized_recon_grad(
            batch.edge.view(),
            fwd.edge.1.output().view(),
            PenaltyMatrix::new(1.0),
        )? / b;
        let (edge_dec, d_he) = self.edge_ae.decoder.backward(&fwd.edge.1, edge_dec_grad.view())?;
        let d_he = d_he + &d_d.slice(s![.., k_node..]);
        let (edge_enc, _) = self.edge_ae.encoder.backward(&fwd.edge.0, d_he.view())?;
        let mut edge = AutoencoderGrad {
            encoder: edge_enc,
            decoder: edge_dec,
        };
        edge.add_penalty(&self.edge_ae, cfg.alpha, sq);

        let node = match (&self.node_ae, &fwd.node, &batch.node) {
            (Some(ae), Some((enc_c, dec_c)), Some(x)) => {
                let g = penalized_recon_grad(x.view(), dec_c.output().view(), PenaltyMatrix::new(cfg.rho))? / b;
                let (dec, d_hn) = ae.decoder.backward(dec_c, g.view())?;
                let d_hn = d_hn + &d_d.slice(s![.., ..k_node]);
                let (enc, _) = ae.encoder.backward(enc_c, d_hn.view())?;
                let mut grad = AutoencoderGrad {
                    encoder: enc,
                    decoder: dec,
                };
                grad.add_penalty(ae, cfg.alpha * cfg.gamma, sq);
                Some(grad)
            }
            _ => None,
        };
        Ok(ModelGrads { node, edge, head })
    }

    /// Joint loss and its gradient on a batch. In training mode the dropout
    /// masks are drawn from `rng`.
    pub fn loss_and_grad<R: Rng>(
        &self,
        samples: &[&PairSample],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(LossParts, ModelGrads)> {
        let batch = self.batch(samples, true)?;
        let fwd = self.forward(&batch, mode, rng)?;
        Ok((self.losses(&batch, &fwd)?, self.gradients(&batch, &fwd)?))
    }

    /// Joint loss of a batch in evaluation mode.
    pub fn batch_loss(&self, samples: &[&PairSample]) -> Result<LossParts> {
        let batch = self.batch(samples, true)?;
        let fwd = self.forward(&batch, Mode::Eval, &mut NoRng)?;
        self.losses(&batch, &fwd)
    }

    /// Loss terms of a single labeled sample.
    pub fn sample_loss(&self, sample: &PairSample) -> Result<LossParts> {
        self.batch_loss(&[sample])
    }

    pub fn predict_batch(&self, samples: &[&PairSample]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let batch = self.batch(samples, false)?;
        let fwd = self.forward(&batch, Mode::Eval, &mut NoRng)?;
        Ok(fwd.head.output().column(0).to_vec())
    }

    pub fn predict_pair(&self, sample: &PairSample) -> Result<f64> {
        Ok(self.predict_batch(&[sample])?[0])
    }

    /// Model input for `(advisee, candidate)` built from the graph.
    pub fn sample_for(&self, graph: &CollabGraph, advisee: usize, candidate: usize) -> Result<PairSample> {
        let pf = pair_features(graph, advisee, candidate, &self.config.features, self.config.pool_dim)?;
        self.scaler.sample(&pf)
    }

    /// Scores every collaborator of `advisee`, best first; ties go to the
    /// smaller id.
    pub fn identify_advisor(&self, graph: &CollabGraph, advisee: usize) -> Result<Vec<(usize, f64)>> {
        let candidates = graph.collaborators(advisee);
        if candidates.is_empty() {
            return Err(Error::NoCollaborators(advisee));
        }
        let samples = candidates
            .iter()
            .map(|&c| self.sample_for(graph, advisee, c))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&PairSample> = samples.iter().collect();
        let probs = self.predict_batch(&refs)?;
        let mut ranked: Vec<(usize, f64)> = candidates.into_iter().zip(probs).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        write_atomic(path, |w| {
            serde_json::to_writer(&mut *w, &ck)?;
            w.write_all(b"\n")
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = std::io::BufReader::new(open(path)?);
        let ck: Checkpoint =
            serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                ck.format_version
            )));
        }
        Ok(ck.model)
    }

    fn epoch_log(&self, samples: &[&PairSample], epoch: usize, phase: Phase) -> Result<EpochLog> {
        let batch = self.batch(samples, true)?;
        let fwd = self.forward(&batch, Mode::Eval, &mut NoRng)?;
        let loss = self.losses(&batch, &fwd)?;
        if !loss.l_sum.is_finite() || !self.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let labels = batch.labels.as_ref().expect("labels checked");
        let correct = labels
            .iter()
            .zip(fwd.head.output().column(0))
            .filter(|(&y, &p)| (p >= 0.5) == (y >= 0.5))
            .count();
        Ok(EpochLog {
            epoch,
            phase,
            loss,
            train_acc: correct as f64 / labels.len() as f64,
        })
    }
}

/// Stand-in generator for passes that never draw (evaluation mode, or
/// networks without dropout).
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("evaluation passes draw no random numbers")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("evaluation passes draw no random numbers")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("evaluation passes draw no random numbers")
    }
}

fn check_trainable(samples: &[PairSample]) -> Result<()> {
    let mut pos = 0;
    let mut neg = 0;
    for s in samples {
        match s.label {
            Some(y) if y >= 0.5 => pos += 1,
            Some(_) => neg += 1,
            None => {
                return Err(Error::UnlabeledSample {
                    advisee: s.advisee,
                    candidate: s.candidate,
                })
            }
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateDataset(format!(
            "{pos} positive and {neg} negative samples"
        )));
    }
    Ok(())
}

/// Pre-trains both autoencoders independently, then trains all parameters
/// jointly until the epoch loss settles or `max_epochs` joint epochs pass.
///
/// Epoch 0 of the history is the untrained model; every later entry is an
/// evaluation-mode pass over `samples` after one epoch of updates.
pub fn train(model: &mut JointModel, samples: &[PairSample]) -> Result<TrainingHistory> {
    check_trainable(samples)?;
    let cfg = model.config.clone();
    cfg.validate()?;
    let all: Vec<&PairSample> = samples.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainingHistory::default();
    history.epochs.push(model.epoch_log(&all, 0, Phase::Initial)?);

    let pre = AdamConfig::with_alpha(cfg.pretrain_learning_rate);
    let sq = cfg.squared();
    let mut pre_node = model.node_ae.as_ref().map(|a| AeAdam::new(a, pre));
    let mut pre_edge = AeAdam::new(&model.edge_ae, pre);
    let mut epoch = 0;
    for _ in 0..cfg.pretrain_epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PairSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let x = model.batch(&batch, false)?;
            if let (Some(ae), Some(xn), Some(adam)) = (&mut model.node_ae, &x.node, &mut pre_node) {
                autoencoder_step(ae, xn, cfg.rho, cfg.alpha * cfg.gamma, sq, adam, &mut rng)?;
            }
            autoencoder_step(&mut model.edge_ae, &x.edge, 1.0, cfg.alpha, sq, &mut pre_edge, &mut rng)?;
        }
        history.epochs.push(model.epoch_log(&all, epoch, Phase::Pretrain)?);
    }

    let joint = AdamConfig::with_alpha(cfg.learning_rate);
    let mut opt = OptimizerState {
        node: model.node_ae.as_ref().map(|a| AeAdam::new(a, joint)),
        edge: AeAdam::new(&model.edge_ae, joint),
        head: MlpAdam::new(&model.head, joint),
    };
    let mut prev = history.epochs.last().map(|e| e.loss.l_sum).unwrap_or(f64::NAN);
    let mut calm = 0;
    for _ in 0..cfg.max_epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PairSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (_, g) = model.loss_and_grad(&batch, Mode::Train, &mut rng)?;
            if let (Some(ae), Some(ga), Some(adam)) = (&mut model.node_ae, &g.node, &mut opt.node) {
                adam.step(ae, ga)?;
            }
            opt.edge.step(&mut model.edge_ae, &g.edge)?;
            opt.head.step(&mut model.head, &g.head)?;
        }
        let log = model.epoch_log(&all, epoch, Phase::Joint)?;
        let cur = log.loss.l_sum;
        history.epochs.push(log);
        let rel = ((prev - cur) / cur).abs();
        calm = if rel < cfg.convergence_eps { calm + 1 } else { 0 };
        prev = cur;
        if calm >= cfg.convergence_patience.max(1) {
            history.converged = true;
            break;
        }
    }
    model.optimizer = Some(opt);
    Ok(history)
}

/// One reconstruction-only update of an autoencoder.
fn autoencoder_step<R: Rng>(
    ae: &mut Autoencoder,
    x: &Array2<f64>,
    rho: f64,
    penalty_scale: f64,
    squared: bool,
    adam: &mut AeAdam,
    rng: &mut R,
) -> Result<()> {
    let b = x.nrows() as f64;
    let enc = ae.encoder.forward(x.view(), Mode::Train, rng)?;
    let dec = ae.decoder.forward(enc.output().view(), Mode::Train, rng)?;
    let g = penalized_recon_grad(x.view(), dec.output().view(), PenaltyMatrix::new(rho))? / b;
    let (dg, dh) = ae.decoder.backward(&dec, g.view())?;
    let (eg, _) = ae.encoder.backward(&enc, dh.view())?;
    let mut grad = AutoencoderGrad {
        encoder: eg,
        decoder: dg,
    };
    grad.add_penalty(ae, penalty_scale, squared);
    adam.step(ae, &grad)
}

/// Fits the scaler on `pairs`, builds a fresh model and trains it.
pub fn fit(config: ModelConfig, pairs: &[PairFeatures]) -> Result<(JointModel, TrainingHistory)> {
    config.validate()?;
    for p in pairs {
        if p.pool_dim != config.pool_dim {
            return Err(Error::shape(
                format!("pool_dim {}", config.pool_dim),
                format!("pool_dim {}", p.pool_dim),
            ));
        }
    }
    let scaler = FeatureScaler::fit(pairs, config.feature_window)?;
    let samples = scaler.samples(pairs)?;
    let node_dim = scaler.node_dim + config.pool_dim;
    let mut model = JointModel::new(config, node_dim, scaler)?;
    let history = train(&mut model, &samples)?;
    Ok((model, history))
}
