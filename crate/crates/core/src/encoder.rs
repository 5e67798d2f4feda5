//! Desk-scale text encoder and its contrastive training loop.
//!
//! A (context, question, answer) triple is tokenized, concatenated and
//! truncated from the front so the answer's final tokens always survive.
//! The representation is
//!
//! ```text
//! w_j = 1 + exp(a) * [j in answer] + exp(b) * [j is last]
//! p   = sum_j w_j E[x_j] / sum_j w_j
//! h   = tanh(W p + c)
//! ```
//!
//! where `E` is the token embedding table, `W`/`c` the combiner, and `a`/`b`
//! learned emphasis logits. The last-position term gives the pooled vector
//! the final-token flavour of a decoder hidden state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContrastiveSample, EmbeddingVector, NegativeType};
use crate::simgrad::{cosine_sim, infonce_loss, LossConfig};
use crate::text::{encoder_tokens, substream_seed};

pub const UNK: &str = "<unk>";
const CHECKPOINT_FORMAT: &str = "faithtune-encoder";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Sorted token set with `<unk>` at row 0.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = tokens.into_iter().filter(|t| t != UNK).collect();
        let mut list = vec![UNK.to_string()];
        list.extend(set);
        Self::from_list(list)
    }

    fn from_list(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn from_samples(samples: &[ContrastiveSample]) -> Self {
        let mut all = Vec::new();
        for s in samples {
            for text in sample_texts(s) {
                all.extend(encoder_tokens(text));
            }
        }
        Self::from_tokens(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

fn sample_texts(s: &ContrastiveSample) -> impl Iterator<Item = &str> {
    [
        s.anchor.context.as_str(),
        s.anchor.question.as_str(),
        s.anchor.golden_answer.as_str(),
        s.positive.as_str(),
    ]
    .into_iter()
    .chain(s.negatives.iter().map(|(_, t)| t.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "TrainConfig::default_lr")]
    pub learning_rate: f64,
    #[serde(default = "TrainConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "TrainConfig::default_max_tokens")]
    pub max_sequence_tokens: usize,
    #[serde(default = "TrainConfig::default_dim")]
    pub dim: usize,
    /// Per-step gradient norms above this are scaled down to it. Cosine
    /// gradients grow as 1/|h|, so a near-zero embedding can otherwise throw
    /// tanh into saturation in one step.
    #[serde(default = "TrainConfig::default_max_grad_norm")]
    pub max_grad_norm: f64,
}

impl TrainConfig {
    fn default_lr() -> f64 {
        0.002
    }
    fn default_epochs() -> usize {
        15
    }
    fn default_max_tokens() -> usize {
        128
    }
    fn default_dim() -> usize {
        32
    }
    fn default_max_grad_norm() -> f64 {
        50.0
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "TrainConfig.learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("TrainConfig.epochs must be >= 1".into()));
        }
        if self.max_sequence_tokens < 1 {
            return Err(Error::Config("TrainConfig.max_sequence_tokens must be >= 1".into()));
        }
        if self.dim < 4 {
            return Err(Error::Config(format!("TrainConfig.dim must be >= 4, got {}", self.dim)));
        }
        if !(self.max_grad_norm > 0.0 && self.max_grad_norm.is_finite()) {
            return Err(Error::Config(format!(
                "TrainConfig.max_grad_norm must be finite and > 0, got {}",
                self.max_grad_norm
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: Self::default_lr(),
            epochs: Self::default_epochs(),
            loss: LossConfig::default(),
            seed: 0,
            max_sequence_tokens: Self::default_max_tokens(),
            dim: Self::default_dim(),
            max_grad_norm: Self::default_max_grad_norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dim: usize,
    pub seed: u64,
    pub max_sequence_tokens: usize,
    pub vocab: Vocab,
    /// Row-major `vocab.len() x dim`.
    pub embedding: Vec<f64>,
    /// Row-major `dim x dim`.
    pub combiner: Vec<f64>,
    pub bias: Vec<f64>,
    /// Logit of the answer span's share of the pooled vector.
    pub answer_emphasis: f64,
    /// Slope of the positional weighting inside the answer span; positive
    /// values favour its final tokens.
    pub final_emphasis: f64,
}

/// Token ids of one encoder input with the answer span marked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    ids: Vec<usize>,
    answer_len: usize,
}

impl Sequence {
    /// Vocabulary row of each token, answer span last.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

struct Forward {
    pooled: Vec<f64>,
    /// Answer share of the pool: sigmoid(answer_emphasis), or 0/1 when one
    /// side is empty.
    alpha: f64,
    answer_mean: Vec<f64>,
    rest_mean: Vec<f64>,
    /// Normalized positional weights over the answer span.
    answer_weights: Vec<f64>,
    /// Relative positions (k+1)/L of the answer tokens.
    positions: Vec<f64>,
    hidden: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl EncoderParams {
    /// Uniform(-0.1, 0.1) initialization of every parameter.
    pub fn init(vocab: Vocab, dim: usize, max_sequence_tokens: usize, seed: u64) -> Result<Self> {
        if dim < 4 {
            return Err(Error::Config(format!("encoder dim must be >= 4, got {dim}")));
        }
        if max_sequence_tokens == 0 {
            return Err(Error::Config("max_sequence_tokens must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "init"));
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-0.1..0.1)).collect() };
        let embedding = draw(vocab.len() * dim);
        let combiner = draw(dim * dim);
        let bias = draw(dim);
        let emph = draw(2);
        Ok(EncoderParams {
            dim,
            seed,
            max_sequence_tokens,
            vocab,
            embedding,
            combiner,
            bias,
            answer_emphasis: emph[0],
            final_emphasis: emph[1],
        })
    }

    pub fn num_params(&self) -> usize {
        self.embedding.len() + self.combiner.len() + self.bias.len() + 2
    }

    /// All parameters in a fixed order: embedding, combiner, bias, answer
    /// emphasis, final emphasis.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.embedding);
        out.extend_from_slice(&self.combiner);
        out.extend_from_slice(&self.bias);
        out.push(self.answer_emphasis);
        out.push(self.final_emphasis);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let (e, rest) = flat.split_at(self.embedding.len());
        let (w, rest) = rest.split_at(self.combiner.len());
        let (b, rest) = rest.split_at(self.bias.len());
        self.embedding.copy_from_slice(e);
        self.combiner.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        self.answer_emphasis = rest[0];
        self.final_emphasis = rest[1];
        Ok(())
    }

    pub fn tokenize(&self, context: &str, question: &str, answer: &str) -> Result<Sequence> {
        let mut ids: Vec<usize> = Vec::new();
        for part in [context, question] {
            ids.extend(encoder_tokens(part).iter().map(|t| self.vocab.id(t)));
        }
        let answer_ids: Vec<usize> = encoder_tokens(answer).iter().map(|t| self.vocab.id(t)).collect();
        ids.extend(&answer_ids);
        if ids.is_empty() {
            return Err(Error::Contract("empty (context, question, answer) concatenation".into()));
        }
        let start = ids.len().saturating_sub(self.max_sequence_tokens);
        let ids = ids.split_off(start);
        let answer_len = answer_ids.len().min(ids.len());
        Ok(Sequence { ids, answer_len })
    }

    /// pooled = alpha * sum_k u_k E[a_k] + (1 - alpha) * mean_r E[r], with
    /// u_k proportional to exp(final_emphasis * (k+1)/L) over the answer span.
    fn forward(&self, seq: &Sequence) -> Forward {
        let d = self.dim;
        let n = seq.ids.len();
        let split = n - seq.answer_len;
        let (rest, answer) = seq.ids.split_at(split);
        let row = |id: usize| &self.embedding[id * d..(id + 1) * d];

        let positions: Vec<f64> = (0..answer.len()).map(|k| (k + 1) as f64 / answer.len() as f64).collect();
        let raw: Vec<f64> = positions.iter().map(|t| (self.final_emphasis * t).exp()).collect();
        let total: f64 = raw.iter().sum();
        let answer_weights: Vec<f64> = raw.iter().map(|u| u / total).collect();
        let mut answer_mean = vec![0.0; d];
        for (&id, u) in answer.iter().zip(&answer_weights) {
            for (m, e) in answer_mean.iter_mut().zip(row(id)) {
                *m += u * e;
            }
        }
        let mut rest_mean = vec![0.0; d];
        for &id in rest {
            for (m, e) in rest_mean.iter_mut().zip(row(id)) {
                *m += e;
            }
        }
        if !rest.is_empty() {
            let inv = 1.0 / rest.len() as f64;
            rest_mean.iter_mut().for_each(|m| *m *= inv);
        }
        let alpha = match (answer.is_empty(), rest.is_empty()) {
            (true, _) => 0.0,
            (false, true) => 1.0,
            (false, false) => sigmoid(self.answer_emphasis),
        };
        let pooled: Vec<f64> = answer_mean
            .iter()
            .zip(&rest_mean)
            .map(|(a, r)| alpha * a + (1.0 - alpha) * r)
            .collect();
        let hidden = (0..d)
            .map(|i| {
                let w = &self.combiner[i * d..(i + 1) * d];
                let z: f64 = w.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>() + self.bias[i];
                z.tanh()
            })
            .collect();
        Forward {
            pooled,
            alpha,
            answer_mean,
            rest_mean,
            answer_weights,
            positions,
            hidden,
        }
    }

    pub fn encode_sequence(&self, seq: &Sequence) -> Result<EmbeddingVector> {
        EmbeddingVector::new(self.forward(seq).hidden)
    }

    pub fn encode(&self, context: &str, question: &str, answer: &str) -> Result<EmbeddingVector> {
        let seq = self.tokenize(context, question, answer)?;
        self.encode_sequence(&seq)
    }

    /// Chain `grad_hidden` (dL/dh) back into `acc`.
    fn backward(&self, seq: &Sequence, fwd: &Forward, grad_hidden: &[f64], acc: &mut ParamGrads) {
        let d = self.dim;
        let gz: Vec<f64> = grad_hidden
            .iter()
            .zip(&fwd.hidden)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        let mut gp = vec![0.0; d];
        for i in 0..d {
            acc.bias[i] += gz[i];
            let row = &self.combiner[i * d..(i + 1) * d];
            let grow = &mut acc.combiner[i * d..(i + 1) * d];
            for k in 0..d {
                grow[k] += gz[i] * fwd.pooled[k];
                gp[k] += row[k] * gz[i];
            }
        }
        let split = seq.ids.len() - seq.answer_len;
        let (rest, answer) = seq.ids.split_at(split);
        let alpha = fwd.alpha;
        let mut add_row = |id: usize, scale: f64| {
            let grow = acc.embedding.entry(id).or_insert_with(|| vec![0.0; d]);
            for (g, v) in grow.iter_mut().zip(&gp) {
                *g += scale * v;
            }
        };
        if !rest.is_empty() {
            let scale = (1.0 - alpha) / rest.len() as f64;
            for &id in rest {
                add_row(id, scale);
            }
        }
        for (&id, u) in answer.iter().zip(&fwd.answer_weights) {
            add_row(id, alpha * u);
        }
        if !answer.is_empty() && !rest.is_empty() {
            let diff: f64 = fwd
                .answer_mean
                .iter()
                .zip(&fwd.rest_mean)
                .zip(&gp)
                .map(|((a, r), g)| (a - r) * g)
                .sum();
            acc.answer_emphasis += alpha * (1.0 - alpha) * diff;
        }
        if !answer.is_empty() {
            // d u_k / d s = u_k (t_k - t_bar)
            let t_bar: f64 = fwd.answer_weights.iter().zip(&fwd.positions).map(|(u, t)| u * t).sum();
            let mut g_slope = 0.0;
            for ((&id, u), t) in answer.iter().zip(&fwd.answer_weights).zip(&fwd.positions) {
                let e = &self.embedding[id * d..(id + 1) * d];
                let eg: f64 = e.iter().zip(&gp).map(|(e, g)| e * g).sum();
                g_slope += u * (t - t_bar) * eg;
            }
            acc.final_emphasis += alpha * g_slope;
        }
    }

    /// InfoNCE loss of one prepared sample and its gradient with respect to
    /// every parameter. Pure: `self` is not modified.
    pub fn sample_loss_and_grad(&self, sample: &PreparedSample, cfg: &LossConfig) -> Result<(f64, ParamGrads)> {
        let fa = self.forward(&sample.anchor);
        let fp = self.forward(&sample.positive);
        let fns: Vec<Forward> = sample.negatives.iter().map(|s| self.forward(s)).collect();
        let ha = EmbeddingVector::new(fa.hidden.clone())?;
        let hp = EmbeddingVector::new(fp.hidden.clone())?;
        let hn = fns
            .iter()
            .map(|f| EmbeddingVector::new(f.hidden.clone()))
            .collect::<Result<Vec<_>>>()?;
        let result = infonce_loss(&ha, &hp, &hn, cfg)?;
        let mut acc = ParamGrads::zeros(self.dim);
        self.backward(&sample.anchor, &fa, result.gradients.anchor.as_slice(), &mut acc);
        self.backward(&sample.positive, &fp, result.gradients.positive.as_slice(), &mut acc);
        for ((seq, f), g) in sample.negatives.iter().zip(&fns).zip(&result.gradients.negatives) {
            self.backward(seq, f, g.as_slice(), &mut acc);
        }
        Ok((result.loss, acc))
    }

    pub fn sample_loss(&self, sample: &PreparedSample, cfg: &LossConfig) -> Result<f64> {
        let ha = self.encode_sequence(&sample.anchor)?;
        let hp = self.encode_sequence(&sample.positive)?;
        let hn = sample
            .negatives
            .iter()
            .map(|s| self.encode_sequence(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(infonce_loss(&ha, &hp, &hn, cfg)?.loss)
    }

    pub fn apply(&mut self, grads: &ParamGrads, learning_rate: f64) {
        let d = self.dim;
        for (&row, g) in &grads.embedding {
            for (p, gv) in self.embedding[row * d..(row + 1) * d].iter_mut().zip(g) {
                *p -= learning_rate * gv;
            }
        }
        for (p, g) in self.combiner.iter_mut().zip(&grads.combiner) {
            *p -= learning_rate * g;
        }
        for (p, g) in self.bias.iter_mut().zip(&grads.bias) {
            *p -= learning_rate * g;
        }
        self.answer_emphasis -= learning_rate * grads.answer_emphasis;
        self.final_emphasis -= learning_rate * grads.final_emphasis;
    }

    /// One SGD step on one sample, returning new parameters and the
    /// pre-step loss. The input parameters are left untouched.
    pub fn step(&self, sample: &PreparedSample, cfg: &LossConfig, learning_rate: f64) -> Result<(EncoderParams, f64)> {
        let (loss, grads) = self.sample_loss_and_grad(sample, cfg)?;
        let mut next = self.clone();
        next.apply(&grads, learning_rate);
        Ok((next, loss))
    }

    pub fn prepare(&self, sample: &ContrastiveSample) -> Result<PreparedSample> {
        let a = &sample.anchor;
        let tok = |ans: &str| self.tokenize(&a.context, &a.question, ans);
        Ok(PreparedSample {
            anchor: tok(&a.golden_answer)?,
            positive: tok(&sample.positive)?,
            negatives: sample
                .negatives
                .iter()
                .map(|(_, t)| tok(t))
                .collect::<Result<Vec<_>>>()?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dim: self.dim,
            seed: self.seed,
            max_sequence_tokens: self.max_sequence_tokens,
            vocab: self.vocab.tokens.clone(),
            embedding: self.embedding.clone(),
            combiner: self.combiner.clone(),
            bias: self.bias.clone(),
            answer_emphasis: self.answer_emphasis,
            final_emphasis: self.final_emphasis,
        };
        let mut text = serde_json::to_string(&ckpt)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&raw).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let d = ckpt.dim;
        let v = ckpt.vocab.len();
        if d < 4
            || v == 0
            || ckpt.vocab[0] != UNK
            || ckpt.embedding.len() != v * d
            || ckpt.combiner.len() != d * d
            || ckpt.bias.len() != d
        {
            return Err(Error::Validation("checkpoint shapes are inconsistent".into()));
        }
        let params = EncoderParams {
            dim: d,
            seed: ckpt.seed,
            max_sequence_tokens: ckpt.max_sequence_tokens,
            vocab: Vocab::from_list(ckpt.vocab),
            embedding: ckpt.embedding,
            combiner: ckpt.combiner,
            bias: ckpt.bias,
            answer_emphasis: ckpt.answer_emphasis,
            final_emphasis: ckpt.final_emphasis,
        };
        if params.flatten().iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("checkpoint contains non-finite values".into()));
        }
        Ok(params)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dim: usize,
    seed: u64,
    max_sequence_tokens: usize,
    vocab: Vec<String>,
    embedding: Vec<f64>,
    combiner: Vec<f64>,
    bias: Vec<f64>,
    answer_emphasis: f64,
    final_emphasis: f64,
}

/// Gradient with a sparse embedding part: only rows touched by the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub embedding: BTreeMap<usize, Vec<f64>>,
    pub combiner: Vec<f64>,
    pub bias: Vec<f64>,
    pub answer_emphasis: f64,
    pub final_emphasis: f64,
}

impl ParamGrads {
    pub fn zeros(dim: usize) -> Self {
        ParamGrads {
            embedding: BTreeMap::new(),
            combiner: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
            answer_emphasis: 0.0,
            final_emphasis: 0.0,
        }
    }

    /// Euclidean norm over every parameter.
    pub fn norm(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        (self.embedding.values().map(|r| sq(r)).sum::<f64>()
            + sq(&self.combiner)
            + sq(&self.bias)
            + self.answer_emphasis.powi(2)
            + self.final_emphasis.powi(2))
        .sqrt()
    }

    /// Dense gradient in [`EncoderParams::flatten`] order.
    pub fn to_dense(&self, params: &EncoderParams) -> Vec<f64> {
        let d = params.dim;
        let mut out = vec![0.0; params.num_params()];
        for (&row, g) in &self.embedding {
            out[row * d..(row + 1) * d].copy_from_slice(g);
        }
        let mut off = params.embedding.len();
        out[off..off + self.combiner.len()].copy_from_slice(&self.combiner);
        off += self.combiner.len();
        out[off..off + self.bias.len()].copy_from_slice(&self.bias);
        off += self.bias.len();
        out[off] = self.answer_emphasis;
        out[off + 1] = self.final_emphasis;
        out
    }
}

/// A contrastive sample already tokenized against a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedSample {
    pub anchor: Sequence,
    pub positive: Sequence,
    pub negatives: Vec<Sequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_margin_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub trajectory: Vec<EpochStats>,
}

/// Build a vocabulary from `samples`, initialize from `cfg.seed`, and train.
pub fn train(samples: &[ContrastiveSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Contract("training needs at least one sample".into()));
    }
    let params = EncoderParams::init(Vocab::from_samples(samples), cfg.dim, cfg.max_sequence_tokens, cfg.seed)?;
    train_from(params, samples, cfg)
}

/// Per-sample SGD over `cfg.epochs` seeded shuffles of `samples`.
pub fn train_from(mut params: EncoderParams, samples: &[ContrastiveSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Contract("training needs at least one sample".into()));
    }
    for s in samples {
        s.check()
            .map_err(|r| Error::Validation(format!("{}: {r}", s.id())))?;
    }
    let prepared = samples
        .iter()
        .map(|s| params.prepare(s))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut trajectory = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = params
                .sample_loss_and_grad(&prepared[i], &cfg.loss)
                .map_err(|e| match e {
                    Error::Numeric(_) | Error::Degenerate(_) => Error::Divergence { epoch, loss: f64::NAN },
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let norm = grads.norm();
            let lr = if norm > cfg.max_grad_norm {
                cfg.learning_rate * cfg.max_grad_norm / norm
            } else {
                cfg.learning_rate
            };
            params.apply(&grads, lr);
            total += loss;
        }
        let mean_loss = total / prepared.len() as f64;
        if !mean_loss.is_finite() || params.flatten().iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { epoch, loss: mean_loss });
        }
        let margins = prepared
            .iter()
            .map(|p| prepared_margin(&params, p, &cfg.loss))
            .collect::<Result<Vec<_>>>()?;
        let train_margin_fraction = margins.iter().filter(|m| **m > 0.0).count() as f64 / margins.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean_loss:.6}, train margin fraction {train_margin_fraction:.4}");
        trajectory.push(EpochStats {
            epoch,
            mean_loss,
            train_margin_fraction,
        });
    }
    Ok(TrainOutcome { params, trajectory })
}

fn prepared_margin(params: &EncoderParams, p: &PreparedSample, cfg: &LossConfig) -> Result<f64> {
    let ha = params.encode_sequence(&p.anchor)?;
    let sp = cosine_sim(&ha, &params.encode_sequence(&p.positive)?, cfg.epsilon_norm)?;
    let mut best = f64::NEG_INFINITY;
    for n in &p.negatives {
        best = best.max(cosine_sim(&ha, &params.encode_sequence(n)?, cfg.epsilon_norm)?);
    }
    Ok(sp - best)
}

/// Similarities of one holdout sample against its anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleScores {
    pub sample_id: String,
    pub positive: f64,
    /// Ordered type1, type2, type3.
    pub negatives: [f64; 3],
}

impl SampleScores {
    pub fn margin(&self) -> f64 {
        self.positive - self.negatives.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub samples: usize,
    pub mean_margin: f64,
    pub positive_margin_fraction: f64,
    pub mean_positive_similarity: f64,
    pub mean_negative_similarity: BTreeMap<NegativeType, f64>,
    pub per_sample: Vec<SampleScores>,
}

pub fn score_sample(params: &EncoderParams, s: &ContrastiveSample, cfg: &LossConfig) -> Result<SampleScores> {
    let a = &s.anchor;
    let ha = params.encode(&a.context, &a.question, &a.golden_answer)?;
    let sim = |ans: &str| -> Result<f64> {
        let h = params.encode(&a.context, &a.question, ans)?;
        cosine_sim(&ha, &h, cfg.epsilon_norm)
    };
    Ok(SampleScores {
        sample_id: s.id().to_string(),
        positive: sim(&s.positive)?,
        negatives: [
            sim(s.negative(NegativeType::InjectedExternal))?,
            sim(s.negative(NegativeType::ContextConflicting))?,
            sim(s.negative(NegativeType::Irrelevant))?,
        ],
    })
}

/// Fan `f` out over `items` on scoped threads, preserving input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8);
    if threads <= 1 || items.len() < 64 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

pub fn evaluate_separation(
    params: &EncoderParams,
    holdout: &[ContrastiveSample],
    cfg: &LossConfig,
) -> Result<SeparationReport> {
    if holdout.is_empty() {
        return Err(Error::Contract("separation needs a non-empty holdout".into()));
    }
    let per_sample = par_map(holdout, |s| score_sample(params, s, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = per_sample.len() as f64;
    let margins: Vec<f64> = per_sample.iter().map(SampleScores::margin).collect();
    let mut per_type = BTreeMap::new();
    for ty in NegativeType::ALL {
        let mean = per_sample.iter().map(|s| s.negatives[ty.index()]).sum::<f64>() / n;
        per_type.insert(ty, mean);
    }
    Ok(SeparationReport {
        samples: per_sample.len(),
        mean_margin: margins.iter().sum::<f64>() / n,
        positive_margin_fraction: margins.iter().filter(|m| **m > 0.0).count() as f64 / n,
        mean_positive_similarity: per_sample.iter().map(|s| s.positive).sum::<f64>() / n,
        mean_negative_similarity: per_type,
        per_sample,
    })
}
