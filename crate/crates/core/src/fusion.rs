//! Fusion heads and losses.
//!
//! Two classifier heads exist: the standard one is a 2-way softmax over the
//! concatenated modality representations; the similarity-only head is a 2x2
//! softmax over `[s, 1-s]`, used by the ablation that drops the concatenation
//! entirely. Both cross-entropy losses clamp their probability argument to
//! `[EPS, 1-EPS]` because the endpoints are reachable (identical
//! representations give similarity exactly 1).

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::numerics::{concat, softmax, Matrix, SeededRng, Vector};

/// Clamp applied inside both cross-entropy losses.
pub const EPS: f64 = 1e-12;

/// Loss mixing weights: `alpha` scales the prediction loss, `beta` the
/// similarity loss.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss weights must be non-negative with a positive sum, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(LossWeights { alpha, beta })
    }
}

/// Classifier head parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head")]
pub enum ClassifierParams {
    /// 2 x 2d weights over the concatenation of both representations.
    Concat { weight: Matrix, bias: Vector },
    /// 2 x 2 weights over `[s, 1-s]`.
    SimilarityOnly { weight: Matrix, bias: Vector },
}

impl ClassifierParams {
    pub fn init_concat(latent_dim: usize, rng: &mut SeededRng) -> Self {
        ClassifierParams::Concat {
            weight: rng.normal_matrix(2, 2 * latent_dim, crate::encoder::INIT_SCALE),
            bias: Vector::zeros(2),
        }
    }

    pub fn init_similarity_only(rng: &mut SeededRng) -> Self {
        ClassifierParams::SimilarityOnly {
            weight: rng.normal_matrix(2, 2, crate::encoder::INIT_SCALE),
            bias: Vector::zeros(2),
        }
    }

    pub fn weight(&self) -> &Matrix {
        match self {
            ClassifierParams::Concat { weight, .. }
            | ClassifierParams::SimilarityOnly { weight, .. } => weight,
        }
    }

    pub fn bias(&self) -> &Vector {
        match self {
            ClassifierParams::Concat { bias, .. }
            | ClassifierParams::SimilarityOnly { bias, .. } => bias,
        }
    }
}

/// Probability of fake from the concatenation head: the first softmax
/// component of `W (t ⊕ v) + b`. Also returns the full softmax pair.
pub fn predict_prob(params: &ClassifierParams, t: &Vector, v: &Vector) -> Result<(f64, Vector)> {
    let ClassifierParams::Concat { weight, bias } = params else {
        return Err(Error::InvalidParameter(
            "concatenation prediction requires the concat head".into(),
        ));
    };
    let joint = concat(t, v);
    if weight.cols() != joint.len() {
        return Err(Error::DimensionMismatch {
            context: "predict_prob",
            expected: weight.cols(),
            actual: joint.len(),
        });
    }
    let mut logits = weight.matvec(&joint);
    logits.add_scaled(bias, 1.0);
    let probs = softmax(&logits);
    Ok((probs[0], probs))
}

/// Probability of fake from the similarity-only head: the first softmax
/// component of `W [s, 1-s]ᵀ + b`.
pub fn predict_prob_from_similarity(
    params: &ClassifierParams,
    s: f64,
) -> Result<(f64, Vector)> {
    let ClassifierParams::SimilarityOnly { weight, bias } = params else {
        return Err(Error::InvalidParameter(
            "similarity prediction requires the similarity-only head".into(),
        ));
    };
    let features = Vector::new(vec![s, 1.0 - s]);
    let mut logits = weight.matvec(&features);
    logits.add_scaled(bias, 1.0);
    let probs = softmax(&logits);
    Ok((probs[0], probs))
}

/// Shifted-and-rescaled cosine similarity, `(cos θ + 1) / 2`, so that the
/// result lands in [0, 1] and can feed a cross-entropy loss directly.
pub fn similarity(t: &Vector, v: &Vector) -> Result<f64> {
    let (nt, nv) = (t.norm(), v.norm());
    if nt == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let s = (t.dot(v) + nt * nv) / (2.0 * nt * nv);
    Ok(s.clamp(0.0, 1.0))
}

fn clamped(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

/// Cross-entropy of the predicted fake probability against the label.
pub fn prediction_loss(yhat: f64, y: Label) -> f64 {
    let p = clamped(yhat);
    -(y.target() * p.ln() + (1.0 - y.target()) * (1.0 - p).ln())
}

/// Cross-entropy on the similarity score: fake articles are penalized for
/// high similarity, true articles for low similarity.
pub fn similarity_loss(s: f64, y: Label) -> f64 {
    let p = clamped(s);
    -(y.target() * (1.0 - p).ln() + (1.0 - y.target()) * p.ln())
}

/// `alpha * prediction_loss + beta * similarity_loss`.
pub fn total_loss(weights: &LossWeights, yhat: f64, s: f64, y: Label) -> f64 {
    weights.alpha * prediction_loss(yhat, y) + weights.beta * similarity_loss(s, y)
}

/// d(similarity_loss)/ds at the clamped point.
pub fn similarity_loss_grad(s: f64, y: Label) -> f64 {
    let p = clamped(s);
    y.target() / (1.0 - p) - (1.0 - y.target()) / p
}

/// Gradient of the similarity score with respect to `t`:
/// `(v₀ - (2s - 1) t₀) / (2 ‖t‖)` with unit vectors t₀, v₀. Symmetric in the
/// arguments, so the v-side gradient is `similarity_grad(v, t, s)`.
pub fn similarity_grad(t: &Vector, v: &Vector, s: f64) -> Result<Vector> {
    let (nt, nv) = (t.norm(), v.norm());
    if nt == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let t0 = t.scaled(1.0 / nt);
    let v0 = v.scaled(1.0 / nv);
    let mut grad = v0;
    grad.add_scaled(&t0, -(2.0 * s - 1.0));
    Ok(grad.scaled(1.0 / (2.0 * nt)))
}

/// Full d(similarity_loss)/dt, the product of the two pieces above.
pub fn similarity_loss_grad_wrt(t: &Vector, v: &Vector, s: f64, y: Label) -> Result<Vector> {
    Ok(similarity_grad(t, v, s)?.scaled(similarity_loss_grad(s, y)))
}
