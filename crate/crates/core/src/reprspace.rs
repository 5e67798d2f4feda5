//! Representation-space analysis: anchor-centred deltas, 2D projections
//! (PCA and exact t-SNE) and separation statistics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::{par_map, EncoderParams};
use crate::error::{Error, Result};
use crate::model::{ContrastiveSample, EmbeddingVector, NegativeType};
use crate::text::substream_seed;

pub use crate::teacher::RequestKind as Role;

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPoint {
    /// `h - h_anchor`, both on the unit sphere.
    pub delta: EmbeddingVector,
    pub role: Role,
    pub sample_id: String,
}

/// Unit anchor embedding plus four deltas for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Centred {
    pub anchor: EmbeddingVector,
    pub points: Vec<DeltaPoint>,
}

/// `encode` output scaled to unit length. Training only shapes directions
/// (the loss is cosine based), so the norm carries no learned signal and
/// would otherwise dominate the deltas.
pub fn unit_embedding(params: &EncoderParams, context: &str, question: &str, answer: &str) -> Result<EmbeddingVector> {
    let h = params.encode(context, question, answer)?;
    let n = h.norm();
    if !(n > 0.0) {
        return Err(Error::Degenerate("encoder output has zero norm".into()));
    }
    Ok(h.scale(1.0 / n))
}

fn centre_one(params: &EncoderParams, s: &ContrastiveSample) -> Result<Centred> {
    let a = &s.anchor;
    let ha = unit_embedding(params, &a.context, &a.question, &a.golden_answer)?;
    let mut points = Vec::with_capacity(4);
    let roles = std::iter::once((Role::Positive, s.positive.as_str()))
        .chain(NegativeType::ALL.iter().map(|t| (Role::negative(*t), s.negative(*t))));
    for (role, text) in roles {
        let h = unit_embedding(params, &a.context, &a.question, text)?;
        points.push(DeltaPoint {
            delta: h.sub(&ha),
            role,
            sample_id: s.id().to_string(),
        });
    }
    Ok(Centred { anchor: ha, points })
}

/// Per-sample anchors and deltas, in input order.
pub fn centralize_with_anchors(samples: &[ContrastiveSample], params: &EncoderParams) -> Result<Vec<Centred>> {
    par_map(samples, |s| {
        centre_one(params, s).map_err(|e| Error::Anchor {
            anchor_id: s.id().to_string(),
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect()
}

/// Four deltas per sample: positive, type1, type2, type3.
pub fn centralize(samples: &[ContrastiveSample], params: &EncoderParams) -> Result<Vec<DeltaPoint>> {
    Ok(centralize_with_anchors(samples, params)?
        .into_iter()
        .flat_map(|c| c.points)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum Method {
    Pca,
    Tsne {
        perplexity: f64,
        iterations: usize,
    },
}

impl Method {
    pub fn tsne() -> Self {
        Method::Tsne {
            perplexity: 30.0,
            iterations: 1000,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Tsne { .. } => "tsne",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedPoint {
    pub sample_id: String,
    pub role: Role,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub points: Vec<ProjectedPoint>,
    /// Explained-variance ratios of the two axes (PCA only).
    pub explained_variance: Option<[f64; 2]>,
    /// Sample variance along each axis (PCA only).
    pub axis_variance: Option<[f64; 2]>,
    pub method: Method,
}

impl ProjectionResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,role,x,y\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{:.12e},{:.12e}\n", p.sample_id, p.role.tag(), p.x, p.y));
        }
        out
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors
/// as columns of a row-major `n x n` matrix.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + col] = v[k * n + src];
        }
    }
    (values, vectors)
}

fn check_input(points: &[DeltaPoint]) -> Result<usize> {
    if points.len() < 3 {
        return Err(Error::Contract(format!("projection needs at least 3 points, got {}", points.len())));
    }
    let d = points[0].delta.dim();
    if d < 2 {
        return Err(Error::Contract(format!("projection needs dimension >= 2, got {d}")));
    }
    if let Some(p) = points.iter().find(|p| p.delta.dim() != d) {
        return Err(Error::Contract(format!(
            "mixed dimensions: {} vs {d} at {}",
            p.delta.dim(),
            p.sample_id
        )));
    }
    Ok(d)
}

fn centred_matrix(points: &[DeltaPoint], d: usize) -> Vec<f64> {
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p.delta.as_slice()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    points
        .iter()
        .flat_map(|p| p.delta.as_slice().iter().zip(&mean).map(|(x, m)| x - m).collect::<Vec<_>>())
        .collect()
}

fn pca(points: &[DeltaPoint], d: usize) -> Result<ProjectionResult> {
    let n = points.len();
    let x = centred_matrix(points, d);
    let mut cov = vec![0.0; d * d];
    for row in x.chunks(d) {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    let (values, vectors) = symmetric_eigen(&cov, d);
    let mut axes = [vec![0.0; d], vec![0.0; d]];
    for (c, axis) in axes.iter_mut().enumerate() {
        for k in 0..d {
            axis[k] = vectors[k * d + c];
        }
        let pivot = axis
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let coords: Vec<[f64; 2]> = x
        .chunks(d)
        .map(|row| {
            let dot = |a: &[f64]| row.iter().zip(a).map(|(r, v)| r * v).sum::<f64>();
            [dot(&axes[0]), dot(&axes[1])]
        })
        .collect();
    let lam = [values[0].max(0.0), values[1].max(0.0)];
    let axis_variance = [0, 1].map(|c| coords.iter().map(|p| p[c] * p[c]).sum::<f64>() / (n - 1) as f64);
    Ok(ProjectionResult {
        points: points
            .iter()
            .zip(&coords)
            .map(|(p, c)| ProjectedPoint {
                sample_id: p.sample_id.clone(),
                role: p.role,
                x: c[0],
                y: c[1],
            })
            .collect(),
        explained_variance: Some([(lam[0] / total).min(1.0), (lam[1] / total).min(1.0)]),
        axis_variance: Some(axis_variance),
        method: Method::Pca,
    })
}

fn squared_distances(rows: &[&[f64]]) -> Vec<f64> {
    let n = rows.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Symmetrized input affinities with per-point bandwidth found by bisection
/// on the target perplexity.
fn input_affinities(dist: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut probs = vec![0.0; n];
        for _ in 0..64 {
            let min_d = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                probs[j] = if j == i { 0.0 } else { (-(row[j] - min_d) * beta).exp() };
                sum += probs[j];
            }
            let mut entropy = 0.0;
            for j in 0..n {
                probs[j] /= sum;
                if probs[j] > 0.0 {
                    entropy -= probs[j] * probs[j].ln();
                }
            }
            if (entropy - target).abs() < 1e-5 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        p[i * n..(i + 1) * n].copy_from_slice(&probs);
    }
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    sym
}

fn tsne(points: &[DeltaPoint], perplexity: f64, iterations: usize, seed: u64) -> Result<ProjectionResult> {
    let n = points.len();
    let rows: Vec<&[f64]> = points.iter().map(|p| p.delta.as_slice()).collect();
    let dist = squared_distances(&rows);
    if dist.iter().all(|d| *d == 0.0) {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    let perplexity = perplexity.min((n - 1) as f64 / 3.0).max(1.0);
    let p = input_affinities(&dist, n, perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "tsne"));
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let learning_rate = (n as f64 / 12.0).max(50.0);
    let exaggeration_until = 250.min(iterations / 4);
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    for it in 0..iterations {
        let exaggeration = if it < exaggeration_until { 12.0 } else { 1.0 };
        let momentum = if it < exaggeration_until { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let m = 4.0 * (exaggeration * p[i * n + j] - q / z) * q;
                grad[2 * i] += m * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += m * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (velocity[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            velocity[k] = momentum * velocity[k] - learning_rate * gains[k] * grad[k];
            y[k] += velocity[k];
        }
        let (mx, my) = (0..n).fold((0.0, 0.0), |(a, b), i| (a + y[2 * i], b + y[2 * i + 1]));
        for i in 0..n {
            y[2 * i] -= mx / n as f64;
            y[2 * i + 1] -= my / n as f64;
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("t-SNE produced non-finite coordinates".into()));
    }
    Ok(ProjectionResult {
        points: points
            .iter()
            .enumerate()
            .map(|(i, p)| ProjectedPoint {
                sample_id: p.sample_id.clone(),
                role: p.role,
                x: y[2 * i],
                y: y[2 * i + 1],
            })
            .collect(),
        explained_variance: None,
        axis_variance: None,
        method: Method::Tsne { perplexity, iterations },
    })
}

pub fn project_2d(points: &[DeltaPoint], method: Method, seed: u64) -> Result<ProjectionResult> {
    let d = check_input(points)?;
    match method {
        Method::Pca => pca(points, d),
        Method::Tsne { perplexity, iterations } => {
            if !(perplexity > 0.0) || iterations == 0 {
                return Err(Error::Config("t-SNE needs perplexity > 0 and iterations >= 1".into()));
            }
            tsne(points, perplexity, iterations, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerceptronFit {
    /// Training accuracy at the best epoch.
    pub accuracy: f64,
    /// Per-point predictions at the best epoch.
    #[serde(skip)]
    pub predictions: Vec<bool>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub converged: bool,
}

pub const PERCEPTRON_EPOCH_CAP: usize = 1000;
const PERCEPTRON_MARGIN: f64 = 0.1;

/// Margin perceptron with bias on `(x, label)` pairs. Features are scaled by
/// one global RMS factor so the margin is dimensionless.
pub fn margin_perceptron(xs: &[&[f64]], labels: &[bool], seed: u64, epoch_cap: usize) -> Result<PerceptronFit> {
    if xs.len() != labels.len() || xs.is_empty() {
        return Err(Error::Contract("perceptron needs one label per point".into()));
    }
    if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
        return Err(Error::Contract("perceptron needs both classes".into()));
    }
    let d = xs[0].len();
    let sq: f64 = xs.iter().flat_map(|x| x.iter()).map(|v| v * v).sum();
    let rms = (sq / (xs.len() * d) as f64).sqrt();
    let inv = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    let data: Vec<(Vec<f64>, f64)> = xs
        .iter()
        .zip(labels)
        .map(|(x, &l)| {
            let mut v: Vec<f64> = x.iter().map(|v| v * inv).collect();
            v.push(1.0);
            (v, if l { 1.0 } else { -1.0 })
        })
        .collect();
    let mut w = vec![0.0; d + 1];
    // Running sum of `w` after every visit; its direction is the averaged
    // perceptron, which settles where the last iterate keeps oscillating.
    let mut w_sum = vec![0.0; d + 1];
    let score = |w: &[f64], x: &[f64]| -> f64 { w.iter().zip(x).map(|(a, b)| a * b).sum() };
    let accuracy = |w: &[f64]| -> f64 {
        data.iter().filter(|(x, y)| score(w, x) * y > 0.0).count() as f64 / data.len() as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "perceptron"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best = (0.0, 0);
    let mut best_w = w.clone();
    let mut epochs_run = 0;
    let mut converged = false;
    for epoch in 0..epoch_cap {
        order.shuffle(&mut rng);
        let mut updates = 0;
        for &i in &order {
            let (x, y) = &data[i];
            if score(&w, x) * y <= PERCEPTRON_MARGIN {
                for (wk, xk) in w.iter_mut().zip(x) {
                    *wk += y * xk;
                }
                updates += 1;
            }
            for (s, wk) in w_sum.iter_mut().zip(&w) {
                *s += wk;
            }
        }
        epochs_run = epoch + 1;
        for cand in [&w, &w_sum] {
            let acc = accuracy(cand);
            if acc > best.0 {
                best = (acc, epoch);
                best_w.copy_from_slice(cand);
            }
        }
        if updates == 0 {
            converged = true;
            break;
        }
    }
    Ok(PerceptronFit {
        accuracy: best.0,
        predictions: data.iter().map(|(x, _)| score(&best_w, x) > 0.0).collect(),
        best_epoch: best.1,
        epochs_run,
        converged,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient. Points in singleton clusters score 0.
pub fn silhouette(xs: &[&[f64]], labels: &[usize]) -> Result<f64> {
    let n = xs.len();
    if n != labels.len() || n < 2 {
        return Err(Error::Contract("silhouette needs at least two labelled points".into()));
    }
    let k = labels.iter().max().copied().unwrap_or(0) + 1;
    let sizes = labels.iter().fold(vec![0usize; k], |mut acc, l| {
        acc[*l] += 1;
        acc
    });
    if sizes.iter().filter(|s| **s > 0).count() < 2 {
        return Err(Error::Contract("silhouette needs at least two clusters".into()));
    }
    let idx: Vec<usize> = (0..n).collect();
    let scores = par_map(&idx, |&i| {
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(xs[i], xs[j]);
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            return 0.0;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            (b - a) / m
        } else {
            0.0
        }
    });
    Ok(scores.iter().sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationStats {
    pub points: usize,
    /// Positive vs all-negative linear separability.
    pub perceptron: PerceptronFit,
    /// Share of each role's points on the correct side at the best epoch.
    pub role_accuracy: BTreeMap<String, f64>,
    /// Four-role clustering.
    pub silhouette: f64,
    /// Distance of each role centroid from the anchor origin.
    pub centroid_norms: BTreeMap<String, f64>,
    /// Pairwise centroid distances, keyed `a|b`.
    pub centroid_distances: BTreeMap<String, f64>,
}

fn role_index(r: Role) -> usize {
    match r {
        Role::Positive => 0,
        Role::Type1 => 1,
        Role::Type2 => 2,
        Role::Type3 => 3,
    }
}

const ROLES: [Role; 4] = [Role::Positive, Role::Type1, Role::Type2, Role::Type3];

pub fn separation_stats(points: &[DeltaPoint], seed: u64) -> Result<SeparationStats> {
    let has_pos = points.iter().any(|p| p.role == Role::Positive);
    let has_neg = points.iter().any(|p| p.role != Role::Positive);
    if !(has_pos && has_neg) {
        return Err(Error::Contract("separation needs both positive and negative points".into()));
    }
    let d = points[0].delta.dim();
    if points.iter().any(|p| p.delta.dim() != d) {
        return Err(Error::Contract("mixed delta dimensions".into()));
    }
    let xs: Vec<&[f64]> = points.iter().map(|p| p.delta.as_slice()).collect();
    let is_pos: Vec<bool> = points.iter().map(|p| p.role == Role::Positive).collect();
    let perceptron = margin_perceptron(&xs, &is_pos, seed, PERCEPTRON_EPOCH_CAP)?;
    let roles: Vec<usize> = points.iter().map(|p| role_index(p.role)).collect();
    let mut tally = [(0usize, 0usize); 4];
    for ((r, pred), truth) in roles.iter().zip(&perceptron.predictions).zip(&is_pos) {
        tally[*r].1 += 1;
        if pred == truth {
            tally[*r].0 += 1;
        }
    }
    let role_accuracy = tally
        .iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(r, (ok, n))| (ROLES[r].tag().to_string(), *ok as f64 / *n as f64))
        .collect();
    let sil = silhouette(&xs, &roles)?;

    let mut centroids: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for p in points {
        let e = centroids.entry(role_index(p.role)).or_insert_with(|| (vec![0.0; d], 0));
        for (c, x) in e.0.iter_mut().zip(p.delta.as_slice()) {
            *c += x;
        }
        e.1 += 1;
    }
    let centroids: BTreeMap<usize, Vec<f64>> = centroids
        .into_iter()
        .map(|(r, (sum, count))| (r, sum.into_iter().map(|v| v / count as f64).collect()))
        .collect();
    let origin = vec![0.0; d];
    let centroid_norms = centroids
        .iter()
        .map(|(r, c)| (ROLES[*r].tag().to_string(), dist(c, &origin)))
        .collect();
    let mut centroid_distances = BTreeMap::new();
    for (a, ca) in &centroids {
        for (b, cb) in centroids.range(a + 1..) {
            centroid_distances.insert(format!("{}|{}", ROLES[*a].tag(), ROLES[*b].tag()), dist(ca, cb));
        }
    }
    Ok(SeparationStats {
        points: points.len(),
        perceptron,
        role_accuracy,
        silhouette: sil,
        centroid_norms,
        centroid_distances,
    })
}
