//! Cosine similarity, the InfoNCE objective over one anchor, one positive and
//! N negatives, and its analytic gradient with respect to every input vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "LossConfig::default_temperature")]
    pub temperature: f64,
    #[serde(default = "LossConfig::default_epsilon")]
    pub epsilon_norm: f64,
}

impl LossConfig {
    pub const DEFAULT_TEMPERATURE: f64 = 0.05;

    fn default_temperature() -> f64 {
        Self::DEFAULT_TEMPERATURE
    }

    fn default_epsilon() -> f64 {
        1e-12
    }

    pub fn with_temperature(temperature: f64) -> Self {
        LossConfig {
            temperature,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "LossConfig.temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.epsilon_norm > 0.0 && self.epsilon_norm <= 1e-8) {
            return Err(Error::Config(format!(
                "LossConfig.epsilon_norm must be in (0, 1e-8], got {}",
                self.epsilon_norm
            )));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: Self::default_temperature(),
            epsilon_norm: Self::default_epsilon(),
        }
    }
}

/// Gradients of the loss with respect to each input role.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceGrads {
    pub anchor: EmbeddingVector,
    pub positive: EmbeddingVector,
    pub negatives: Vec<EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    /// Unscaled cosine similarity of anchor and positive.
    pub positive_score: f64,
    pub negative_scores: Vec<f64>,
    pub gradients: InfoNceGrads,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_pair(x: &EmbeddingVector, y: &EmbeddingVector, eps: f64) -> Result<(f64, f64)> {
    if x.dim() != y.dim() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let (nx, ny) = (x.norm(), y.norm());
    if nx <= eps || ny <= eps {
        return Err(Error::Degenerate(format!(
            "vector norm at or below guard {eps:e} (norms {nx:e}, {ny:e})"
        )));
    }
    Ok((nx, ny))
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine_sim(x: &EmbeddingVector, y: &EmbeddingVector, epsilon_norm: f64) -> Result<f64> {
    let (nx, ny) = check_pair(x, y, epsilon_norm)?;
    Ok((dot(x.as_slice(), y.as_slice()) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Cosine similarity plus its partial derivatives in both arguments.
///
/// d s / d x = y / (|x||y|) - s x / |x|^2, symmetric for y. The clamp is
/// treated as the identity for differentiation.
fn cosine_with_grad(
    x: &EmbeddingVector,
    y: &EmbeddingVector,
    eps: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (nx, ny) = check_pair(x, y, eps)?;
    let (xs, ys) = (x.as_slice(), y.as_slice());
    let raw = dot(xs, ys) / (nx * ny);
    let inv = 1.0 / (nx * ny);
    let gx = xs
        .iter()
        .zip(ys)
        .map(|(a, b)| b * inv - raw * a / (nx * nx))
        .collect();
    let gy = xs
        .iter()
        .zip(ys)
        .map(|(a, b)| a * inv - raw * b / (ny * ny))
        .collect();
    Ok((raw.clamp(-1.0, 1.0), gx, gy))
}

/// InfoNCE loss with gradients.
///
/// loss = -log(exp(s_pos/t) / (exp(s_pos/t) + sum_i exp(s_neg_i/t))), evaluated
/// as `(m - l_pos) + ln_1p(sum_{k != argmax} exp(l_k - m))` with `m` the largest
/// scaled score, so it neither overflows at small temperature nor loses the
/// tail when the loss is tiny.
pub fn infonce_loss(
    anchor: &EmbeddingVector,
    pos: &EmbeddingVector,
    negs: &[EmbeddingVector],
    cfg: &LossConfig,
) -> Result<LossResult> {
    cfg.validate()?;
    if negs.is_empty() {
        return Err(Error::Contract("InfoNCE needs at least one negative".into()));
    }
    let eps = cfg.epsilon_norm;
    let tau = cfg.temperature;

    let (s_pos, ga_pos, gp) = cosine_with_grad(anchor, pos, eps)?;
    let mut scores = Vec::with_capacity(negs.len() + 1);
    let mut anchor_parts = Vec::with_capacity(negs.len() + 1);
    let mut neg_parts = Vec::with_capacity(negs.len());
    scores.push(s_pos);
    anchor_parts.push(ga_pos);
    for neg in negs {
        let (s, ga, gn) = cosine_with_grad(anchor, neg, eps)?;
        scores.push(s);
        anchor_parts.push(ga);
        neg_parts.push(gn);
    }

    let logits: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    let (arg_max, m) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, l)| if l > best.1 { (i, l) } else { best });
    let shifted: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let rest: f64 = shifted
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != arg_max)
        .map(|(_, e)| e)
        .sum();
    let loss = ((m - logits[0]) + rest.ln_1p()).max(0.0);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite InfoNCE loss {loss}")));
    }

    let total = 1.0 + rest;
    let probs: Vec<f64> = shifted.iter().map(|e| e / total).collect();
    // dL/ds_0 = (p_0 - 1)/t, dL/ds_i = p_i/t
    let coeffs: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(k, p)| if k == 0 { (p - 1.0) / tau } else { p / tau })
        .collect();

    let dim = anchor.dim();
    let mut g_anchor = vec![0.0; dim];
    for (c, part) in coeffs.iter().zip(&anchor_parts) {
        for (g, v) in g_anchor.iter_mut().zip(part) {
            *g += c * v;
        }
    }
    let g_pos: Vec<f64> = gp.iter().map(|v| coeffs[0] * v).collect();
    let g_negs = neg_parts
        .iter()
        .zip(&coeffs[1..])
        .map(|(part, c)| EmbeddingVector::new(part.iter().map(|v| c * v).collect()))
        .collect::<Result<Vec<_>>>()?;

    Ok(LossResult {
        loss,
        positive_score: s_pos,
        negative_scores: scores[1..].to_vec(),
        gradients: InfoNceGrads {
            anchor: EmbeddingVector::new(g_anchor)?,
            positive: EmbeddingVector::new(g_pos)?,
            negatives: g_negs,
        },
    })
}

pub fn infonce_grad(
    anchor: &EmbeddingVector,
    pos: &EmbeddingVector,
    negs: &[EmbeddingVector],
    cfg: &LossConfig,
) -> Result<InfoNceGrads> {
    infonce_loss(anchor, pos, negs, cfg).map(|r| r.gradients)
}
