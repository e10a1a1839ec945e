//! Linear classifier head, adaptive margin loss, margin/query scores and
//! their gradients.
//!
//! Gradients are closed-form: the featurizer is frozen, so every gradient
//! with respect to the features is `Wᵀ · ∂/∂z` for the head weights `W`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Magic, Result};

pub const HEAD_MAGIC: [u8; 4] = *b"SDMH";
pub const HEAD_VERSION: u32 = 1;

/// Cosine similarity treats gradients below this norm as zero.
pub const ZERO_GRADIENT_NORM: f64 = 1e-12;

/// Linear map `z = W f + b` with `W` stored K x D row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearHead {
    pub fn new(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "a head needs at least 2 classes, got {classes}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("feature dimension must be positive".into()));
        }
        if weights.len() != classes * dim || bias.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "{classes}x{dim} head needs {} weights and {classes} biases, got {} and {}",
                classes * dim,
                weights.len(),
                bias.len()
            )));
        }
        ensure_finite("head weights", &weights)?;
        ensure_finite("head bias", &bias)?;
        Ok(Self {
            classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn zeros(classes: usize, dim: usize) -> Result<Self> {
        Self::new(classes, dim, vec![0.0; classes * dim], vec![0.0; classes])
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    fn weight_row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    fn check_features(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "head expects {} features, got {}",
                self.dim,
                f.len()
            )));
        }
        ensure_finite("features", f)
    }

    pub fn logits(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_features(f)?;
        Ok(self.logits_unchecked(f))
    }

    pub(crate) fn logits_unchecked(&self, f: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| dot(self.weight_row(k), f) + self.bias[k])
            .collect()
    }

    /// Chain rule through the head: `Wᵀ · grad_z`.
    pub fn grad_wrt_features(&self, grad_z: &[f64]) -> Result<Vec<f64>> {
        if grad_z.len() != self.classes {
            return Err(Error::ShapeMismatch(format!(
                "logit gradient has {} entries for {} classes",
                grad_z.len(),
                self.classes
            )));
        }
        Ok(self.backprop(grad_z))
    }

    fn backprop(&self, grad_z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &g) in grad_z.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.weight_row(k)) {
                *o += g * w;
            }
        }
        out
    }

    /// Most probable class and its softmax probability, lowest index on ties.
    pub fn predict(&self, f: &[f64]) -> Result<(usize, f64)> {
        let p = softmax_probs(&self.logits(f)?);
        let (best, _) = top_two(&p);
        Ok((best, p[best]))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.weights.len() + self.bias.len()));
        out.extend_from_slice(&HEAD_MAGIC);
        out.extend_from_slice(&HEAD_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "head file";
        if let Some(found) = bytes.get(..4) {
            if found != HEAD_MAGIC {
                return Err(Error::BadMagic {
                    expected: Magic(HEAD_MAGIC),
                    found: Magic(found.try_into().unwrap()),
                });
            }
        }
        if bytes.len() < 16 {
            return Err(Error::Truncated {
                what: WHAT,
                needed: 16,
                available: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != HEAD_VERSION {
            return Err(Error::UnsupportedVersion { what: WHAT, version });
        }
        let classes = word(8) as usize;
        let dim = word(12) as usize;
        let count = classes
            .checked_mul(dim)
            .and_then(|n| n.checked_add(classes))
            .ok_or(Error::Overflow("head size"))?;
        let needed = count.checked_mul(8).ok_or(Error::Overflow("head size"))?;
        let payload = &bytes[16..];
        if payload.len() < needed {
            return Err(Error::Truncated {
                what: WHAT,
                needed,
                available: payload.len(),
            });
        }
        if payload.len() > needed {
            return Err(Error::TrailingBytes {
                what: WHAT,
                count: payload.len() - needed,
            });
        }
        let mut values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bias = values.split_off(classes * dim);
        LinearHead::new(classes, dim, values, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Max-shifted softmax.
pub fn softmax_probs(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Indices of the largest and second-largest entries; lowest index wins ties.
pub fn top_two(p: &[f64]) -> (usize, usize) {
    assert!(p.len() >= 2, "top_two needs at least two entries");
    let (mut first, mut second) = if p[1] > p[0] { (1, 0) } else { (0, 1) };
    for (i, &v) in p.iter().enumerate().skip(2) {
        if v > p[first] {
            second = first;
            first = i;
        } else if v > p[second] {
            second = i;
        }
    }
    (first, second)
}

/// `1 - (p_first - p_second)` over the softmax of `z`.
pub fn margin_score(z: &[f64]) -> f64 {
    let p = softmax_probs(z);
    let (a, b) = top_two(&p);
    1.0 - (p[a] - p[b])
}

pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q * q.ln())
        .sum::<f64>()
}

fn check_label(z: &[f64], label: usize) -> Result<()> {
    if label >= z.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: z.len(),
        });
    }
    Ok(())
}

fn check_margin(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("margin width must be positive, got {m}")));
    }
    Ok(())
}

/// `Σ_{i≠j} (γ_i [m - z_j + z_i]_+ - z_j)` with `γ_i = 1 - (z_j - z_i)/m`.
pub fn adaptive_margin_loss(z: &[f64], label: usize, m: f64) -> Result<f64> {
    check_label(z, label)?;
    check_margin(m)?;
    let zj = z[label];
    Ok(z.iter()
        .enumerate()
        .filter(|&(i, _)| i != label)
        .map(|(_, &zi)| {
            let gamma = 1.0 - (zj - zi) / m;
            gamma * (m - zj + zi).max(0.0) - zj
        })
        .sum())
}

/// How `γ_i` is treated when differentiating the margin loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaConvention {
    /// `γ_i` is a constant weight on the hinge gradient.
    #[default]
    DetachedGamma,
    /// Product rule through `γ_i` as well; doubles the hinge part.
    Full,
}

impl std::str::FromStr for GammaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detached-gamma" | "detached" => Ok(Self::DetachedGamma),
            "full" => Ok(Self::Full),
            other => Err(Error::InvalidParameter(format!(
                "unknown gradient convention {other:?}"
            ))),
        }
    }
}

/// Gradient of the margin loss with respect to the logits. A hinge sitting
/// exactly on its boundary contributes nothing.
pub fn grad_loss_wrt_logits(
    z: &[f64],
    label: usize,
    m: f64,
    convention: GammaConvention,
) -> Result<Vec<f64>> {
    check_label(z, label)?;
    check_margin(m)?;
    let scale = match convention {
        GammaConvention::DetachedGamma => 1.0,
        GammaConvention::Full => 2.0,
    };
    let zj = z[label];
    let mut grad = vec![0.0; z.len()];
    let mut hinge_total = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        if i == label {
            continue;
        }
        let d = zj - zi;
        if d < m {
            let g = scale * (1.0 - d / m);
            grad[i] = g;
            hinge_total += g;
        }
    }
    grad[label] = -hinge_total - (z.len() - 1) as f64;
    Ok(grad)
}

/// `∂M/∂z = -(∇p_first - ∇p_second)` with `∇p_k = p_k (e_k - p)`; the
/// top-two indices are held fixed.
pub fn grad_margin_wrt_logits(z: &[f64]) -> Vec<f64> {
    let p = softmax_probs(z);
    let (a, b) = top_two(&p);
    let gap = p[a] - p[b];
    p.iter()
        .enumerate()
        .map(|(k, &pk)| {
            let mut d = pk * gap;
            if k == a {
                d -= p[a];
            }
            if k == b {
                d += p[b];
            }
            d
        })
        .collect()
}

/// Label-free estimate of the feature-space loss gradient, mixing the two
/// most probable labels by their probabilities (detached-gamma convention).
pub fn estimate_loss_gradient(head: &LinearHead, f: &[f64], m: f64) -> Result<Vec<f64>> {
    let z = head.logits(f)?;
    check_margin(m)?;
    Ok(estimate_from_logits(head, &z, &softmax_probs(&z), m))
}

fn estimate_from_logits(head: &LinearHead, z: &[f64], p: &[f64], m: f64) -> Vec<f64> {
    let (a, b) = top_two(p);
    let ga = grad_loss_wrt_logits(z, a, m, GammaConvention::DetachedGamma).expect("validated");
    let gb = grad_loss_wrt_logits(z, b, m, GammaConvention::DetachedGamma).expect("validated");
    let mixed: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| p[a] * x + p[b] * y).collect();
    head.backprop(&mixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginParams {
    pub m: f64,
    pub lambda: f64,
}

impl MarginParams {
    pub fn new(m: f64, lambda: f64) -> Result<Self> {
        let params = Self { m, lambda };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_margin(self.m)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

impl Default for MarginParams {
    fn default() -> Self {
        Self { m: 1.0, lambda: 0.001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub sample_index: usize,
    pub margin_score: f64,
    pub cosine_term: f64,
    pub q_value: f64,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < ZERO_GRADIENT_NORM || nb < ZERO_GRADIENT_NORM {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// `Q = M + λ·cos(∇_f L̂, ∇_f M)` for one sample.
pub fn query_score(head: &LinearHead, f: &[f64], params: &MarginParams) -> Result<QueryRecord> {
    params.validate()?;
    let z = head.logits(f)?;
    let p = softmax_probs(&z);
    let (a, b) = top_two(&p);
    let margin = 1.0 - (p[a] - p[b]);
    let loss_grad = estimate_from_logits(head, &z, &p, params.m);
    let margin_grad = head.backprop(&grad_margin_wrt_logits(&z));
    let cosine = cosine_similarity(&loss_grad, &margin_grad);
    Ok(QueryRecord {
        sample_index: 0,
        margin_score: margin,
        cosine_term: cosine,
        q_value: margin + params.lambda * cosine,
    })
}

/// Frozen, forward-only map from raw inputs to head features.
#[derive(Debug, Clone, PartialEq)]
pub enum Featurizer {
    /// Flattens the raw input as-is.
    IdentityFlatten { dim: usize },
    /// Fixed Gaussian projection `P x / sqrt(D_in)` drawn from a seed.
    RandomProjection {
        input_dim: usize,
        output_dim: usize,
        seed: u64,
        projection: Vec<f64>,
    },
    /// Inputs already are features.
    External { dim: usize },
}

impl Featurizer {
    pub fn random_projection(input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        use rand_distr::{Distribution, StandardNormal};
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidParameter("projection dimensions must be positive".into()));
        }
        let mut rng = crate::rng::seeded_stream(seed, "featurizer");
        let scale = 1.0 / (input_dim as f64).sqrt();
        let projection = (0..input_dim * output_dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * scale
            })
            .collect();
        Ok(Featurizer::RandomProjection {
            input_dim,
            output_dim,
            seed,
            projection,
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Featurizer::IdentityFlatten { dim } | Featurizer::External { dim } => *dim,
            Featurizer::RandomProjection { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Featurizer::IdentityFlatten { dim } | Featurizer::External { dim } => *dim,
            Featurizer::RandomProjection { output_dim, .. } => *output_dim,
        }
    }

    pub fn forward(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "featurizer expects {} inputs, got {}",
                self.input_dim(),
                raw.len()
            )));
        }
        Ok(match self {
            Featurizer::IdentityFlatten { .. } | Featurizer::External { .. } => raw.to_vec(),
            Featurizer::RandomProjection {
                input_dim,
                projection,
                ..
            } => projection.chunks_exact(*input_dim).map(|row| dot(row, raw)).collect(),
        })
    }
}

/// Runs `raw` through the featurizer and head.
pub fn predict(head: &LinearHead, featurizer: &Featurizer, raw: &[f64]) -> Result<(usize, f64)> {
    if featurizer.output_dim() != head.dim() {
        return Err(Error::ShapeMismatch(format!(
            "featurizer produces {} features, head expects {}",
            featurizer.output_dim(),
            head.dim()
        )));
    }
    head.predict(&featurizer.forward(raw)?)
}
