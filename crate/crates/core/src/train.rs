//! Per-sample SGD with hand-derived gradients, and the finite-difference
//! checker that keeps them honest.
//!
//! Update rules, for one example with label y and learning rate γ:
//!
//! * head logits z = W (t ⊕ v) + b, Δy = [ŷ − y, y − ŷ]ᵀ,
//!   so dL/dW = α Δy (t ⊕ v)ᵀ and dL/db = α Δy;
//! * representation seed B_t = α ∇pred(t) + β ∇sim(t), where
//!   ∇pred(t) is the first-d-columns block of Wᵀ Δy and
//!   ∇sim(t) = [y/(1−s) − (1−y)/s] · (v₀ − (2s−1) t₀) / (2‖t‖);
//! * projection dL/dW = B ĉᵀ, dL/db = B;
//! * filter g: dL/dw = m · (WᵀB)_g · x(î), dL/db = m · (WᵀB)_g, where î is
//!   the pooling argmax and m is the ReLU mask of the winning window
//!   (gradient flows only through the argmax window; the subgradient at a
//!   pre-activation of exactly 0 is taken as 0).
//!
//! Variants cut pathways structurally: a disabled branch contributes zero
//! representations, receives no updates, and is never touched by zero-scaled
//! arithmetic (this makes degenerate weights bit-identical to the matching
//! ablation). The similarity-only variant routes the prediction loss through
//! the 2x2 head into s and on into both encoders, alongside the similarity
//! loss itself.

use serde::{Deserialize, Serialize};

use crate::data::{Label, NewsArticle};
use crate::encoder::{encode, EncoderParams, ForwardCache};
use crate::error::{Error, Result};
use crate::exec;
use crate::fusion::{
    predict_prob, predict_prob_from_similarity, prediction_loss, similarity, similarity_grad,
    similarity_loss, similarity_loss_grad, ClassifierParams,
};
use crate::numerics::{concat, streams, Matrix, SeededRng, Vector};
use crate::text::{embed_sequence, tokenize, EmbeddingTable, TokenSequence, Vocabulary};

/// Proximity to a ReLU kink or pooling tie below which a finite-difference
/// entry is reported as skipped rather than checked.
pub const KINK_TOL: f64 = 1e-7;

/// Entries where both the analytic and the numeric value sit at or below the
/// relative-error denominator floor carry no measurable signal: the central
/// difference of a ~O(1) loss bottoms out around 1e-11 of pure rounding
/// noise. Such entries are reported as skipped, like kink-adjacent ones.
pub const RESOLUTION_FLOOR: f64 = 1e-8;

/// Model variant. The ablations zero out one pathway each; `SimilarityOnly`
/// replaces the concatenation head with a 2x2 head reading `[s, 1-s]`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoText,
    NoCaption,
    NoSimilarity,
    SimilarityOnly,
}

impl Variant {
    /// Ablation-table order.
    pub const ABLATION_ORDER: [Variant; 5] = [
        Variant::NoText,
        Variant::NoCaption,
        Variant::NoSimilarity,
        Variant::SimilarityOnly,
        Variant::Full,
    ];

    pub fn uses_text(self) -> bool {
        self != Variant::NoText
    }

    pub fn uses_caption(self) -> bool {
        self != Variant::NoCaption
    }

    pub fn has_concat_head(self) -> bool {
        self != Variant::SimilarityOnly
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoText => "no-text",
            Variant::NoCaption => "no-caption",
            Variant::NoSimilarity => "no-similarity",
            Variant::SimilarityOnly => "similarity-only",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Variant::Full),
            "no-text" => Ok(Variant::NoText),
            "no-caption" => Ok(Variant::NoCaption),
            "no-similarity" => Ok(Variant::NoSimilarity),
            "similarity-only" => Ok(Variant::SimilarityOnly),
            other => Err(format!(
                "unknown variant {other:?} (expected full, no-text, no-caption, \
                 no-similarity or similarity-only)"
            )),
        }
    }
}

/// Training hyperparameters. All randomness in a run flows from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    /// Convolution window sizes.
    pub windows: Vec<usize>,
    pub filters_per_window: usize,
    /// Word-embedding dimension k.
    pub embed_dim: usize,
    /// Representation dimension d.
    pub latent_dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Reshuffle the corpus each epoch (seeded).
    pub shuffle: bool,
    /// Truncate documents beyond this many tokens.
    pub max_tokens: usize,
    pub min_count: usize,
    /// Stop early once |Δ mean epoch loss| falls below this.
    pub early_stop_delta: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            beta: 0.5,
            learning_rate: 1e-4,
            windows: vec![3, 4],
            filters_per_window: 1,
            embed_dim: 32,
            latent_dim: 32,
            epochs: 100,
            seed: 42,
            variant: Variant::Full,
            shuffle: true,
            max_tokens: 1000,
            min_count: 1,
            early_stop_delta: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha and beta must be non-negative with a positive sum, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::InvalidParameter(
                "window sizes must be a non-empty list of positive integers".into(),
            ));
        }
        if self.filters_per_window == 0 || self.embed_dim == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidParameter(
                "filters per window, embedding dim and latent dim must be positive".into(),
            ));
        }
        if self.max_tokens < self.max_window() {
            return Err(Error::InvalidParameter(format!(
                "max tokens {} is below the largest window {}",
                self.max_tokens,
                self.max_window()
            )));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidParameter("min count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_window(&self) -> usize {
        self.windows.iter().copied().max().unwrap_or(1)
    }

    /// Loss weights after variant gating: zeroing a branch makes the
    /// similarity score undefined, so those variants drop the similarity
    /// loss; the no-similarity ablation drops it by definition.
    pub fn effective_weights(&self) -> (f64, f64) {
        match self.variant {
            Variant::Full | Variant::SimilarityOnly => (self.alpha, self.beta),
            Variant::NoText | Variant::NoCaption | Variant::NoSimilarity => (self.alpha, 0.0),
        }
    }

    /// Whether forward passes must compute the similarity score. True for
    /// the similarity-only head regardless of beta (the head reads s).
    pub fn similarity_active(&self) -> bool {
        match self.variant {
            Variant::SimilarityOnly => true,
            Variant::Full => self.beta > 0.0,
            Variant::NoText | Variant::NoCaption | Variant::NoSimilarity => false,
        }
    }
}

/// All trainable parameters plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: TrainConfig,
    pub text_encoder: EncoderParams,
    pub caption_encoder: EncoderParams,
    pub classifier: ClassifierParams,
    pub epoch: u64,
}

impl ModelState {
    /// Seeded random initialization. Each parameter block draws from its own
    /// RNG stream so the blocks stay independent of one another.
    pub fn init(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut text_rng = SeededRng::stream(config.seed, streams::TEXT_PARAMS);
        let mut caption_rng = SeededRng::stream(config.seed, streams::CAPTION_PARAMS);
        let mut head_rng = SeededRng::stream(config.seed, streams::CLASSIFIER_PARAMS);
        let text_encoder = EncoderParams::init(
            &config.windows,
            config.filters_per_window,
            config.embed_dim,
            config.latent_dim,
            &mut text_rng,
        );
        let caption_encoder = EncoderParams::init(
            &config.windows,
            config.filters_per_window,
            config.embed_dim,
            config.latent_dim,
            &mut caption_rng,
        );
        let classifier = if config.variant.has_concat_head() {
            ClassifierParams::init_concat(config.latent_dim, &mut head_rng)
        } else {
            ClassifierParams::init_similarity_only(&mut head_rng)
        };
        Ok(ModelState {
            config,
            text_encoder,
            caption_encoder,
            classifier,
            epoch: 0,
        })
    }
}

/// An article embedded and ready for the trainer.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub id: String,
    pub label: Label,
    pub text: Vec<Vector>,
    pub caption: Vec<Vector>,
}

/// Embed articles for training or evaluation. Articles without a caption are
/// skipped (and counted) whenever the similarity pathway is active: the score
/// is undefined on an empty input. Variants that never read the score keep
/// them.
pub fn prepare_articles(
    articles: &[NewsArticle],
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<(Vec<PreparedExample>, usize)> {
    let min_len = config.max_window();
    let mut prepared = Vec::with_capacity(articles.len());
    let mut skipped = 0;
    for article in articles {
        if config.similarity_active() && !article.has_caption() {
            skipped += 1;
            continue;
        }
        let text_seq =
            TokenSequence::encode(&tokenize(&article.text), vocab, config.max_tokens, min_len);
        let caption_seq = TokenSequence::encode(
            &tokenize(&article.caption),
            vocab,
            config.max_tokens,
            min_len,
        );
        prepared.push(PreparedExample {
            id: article.id.clone(),
            label: article.label,
            text: embed_sequence(&text_seq, table, config.embed_dim)?,
            caption: embed_sequence(&caption_seq, table, config.embed_dim)?,
        });
    }
    Ok((prepared, skipped))
}

/// One forward pass, with everything backprop or evaluation needs.
#[derive(Clone, Debug)]
pub struct Forward {
    pub t: Vector,
    pub v: Vector,
    pub text_cache: Option<ForwardCache>,
    pub caption_cache: Option<ForwardCache>,
    pub s: Option<f64>,
    pub yhat: f64,
    pub loss_pred: f64,
    pub loss_sim: Option<f64>,
    /// Weighted objective for this example.
    pub total: f64,
}

pub fn forward_example(state: &ModelState, ex: &PreparedExample) -> Result<Forward> {
    let config = &state.config;
    let d = config.latent_dim;

    let (t, text_cache) = if config.variant.uses_text() {
        let (t, cache) = encode(&state.text_encoder, &ex.text)?;
        (t, Some(cache))
    } else {
        (Vector::zeros(d), None)
    };
    let (v, caption_cache) = if config.variant.uses_caption() {
        let (v, cache) = encode(&state.caption_encoder, &ex.caption)?;
        (v, Some(cache))
    } else {
        (Vector::zeros(d), None)
    };

    let s = if config.similarity_active() {
        Some(similarity(&t, &v)?)
    } else {
        None
    };

    let (yhat, _) = match config.variant {
        Variant::SimilarityOnly => predict_prob_from_similarity(
            &state.classifier,
            s.expect("similarity-only head always computes s"),
        )?,
        _ => predict_prob(&state.classifier, &t, &v)?,
    };

    let loss_pred = prediction_loss(yhat, ex.label);
    let loss_sim = s.map(|s| similarity_loss(s, ex.label));
    let (alpha, beta) = config.effective_weights();
    let mut total = 0.0;
    if alpha > 0.0 {
        total += alpha * loss_pred;
    }
    if beta > 0.0 {
        total += beta * loss_sim.expect("positive beta implies an active similarity pathway");
    }

    Ok(Forward {
        t,
        v,
        text_cache,
        caption_cache,
        s,
        yhat,
        loss_pred,
        loss_sim,
        total,
    })
}

/// Gradient of the weighted objective for one encoder's parameters.
#[derive(Clone, Debug)]
pub struct EncoderGrads {
    /// Per filter: (d/dweights, d/dbias).
    pub filters: Vec<(Vector, f64)>,
    pub proj: Matrix,
    pub proj_bias: Vector,
}

#[derive(Clone, Debug)]
pub struct ClassifierGrads {
    pub weight: Matrix,
    pub bias: Vector,
}

/// Gradients of the weighted objective, shaped exactly like [`ModelState`]'s
/// parameters, plus the intermediates the derivation passes through (kept for
/// diagnostics and tests).
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub classifier: ClassifierGrads,
    pub text: Option<EncoderGrads>,
    pub caption: Option<EncoderGrads>,
    pub delta_y: Vector,
    /// B_t: objective gradient at the text representation.
    pub seed_text: Option<Vector>,
    pub seed_caption: Option<Vector>,
    /// Unweighted prediction-loss gradient at t / v.
    pub pred_grad_text: Option<Vector>,
    pub pred_grad_caption: Option<Vector>,
    /// Unweighted similarity-loss gradient at t / v.
    pub sim_grad_text: Option<Vector>,
    pub sim_grad_caption: Option<Vector>,
}

fn encoder_grads(params: &EncoderParams, cache: &ForwardCache, seed: &Vector) -> EncoderGrads {
    let proj = Matrix::outer(seed, &cache.pooled);
    let proj_bias = seed.clone();
    let coef = params.proj.tr_matvec(seed);
    let filters = params
        .filters
        .iter()
        .enumerate()
        .map(|(i, filter)| {
            let map = &cache.maps[i];
            // ReLU mask of the winning window; ties and exact zeros pass no
            // gradient.
            let c = if map.pre[map.argmax] > 0.0 {
                coef[i]
            } else {
                0.0
            };
            let weights = if c != 0.0 {
                cache.winning_window(i).scaled(c)
            } else {
                Vector::zeros(filter.weights.len())
            };
            (weights, c)
        })
        .collect();
    EncoderGrads {
        filters,
        proj,
        proj_bias,
    }
}

fn zero_classifier_grads(params: &ClassifierParams) -> ClassifierGrads {
    ClassifierGrads {
        weight: Matrix::zeros(params.weight().rows(), params.weight().cols()),
        bias: Vector::zeros(params.bias().len()),
    }
}

pub fn compute_gradients(
    state: &ModelState,
    ex: &PreparedExample,
    fwd: &Forward,
) -> Result<GradientSet> {
    let config = &state.config;
    let (alpha, beta) = config.effective_weights();
    let y = ex.label.target();
    let delta_y = Vector::new(vec![fwd.yhat - y, y - fwd.yhat]);

    // Head gradients and the unweighted prediction-loss gradient at the
    // representations.
    let (classifier, pred_t, pred_v) = match &state.classifier {
        ClassifierParams::Concat { weight, .. } => {
            let joint = concat(&fwd.t, &fwd.v);
            let grads = if alpha > 0.0 {
                ClassifierGrads {
                    weight: Matrix::outer(&delta_y, &joint).scaled(alpha),
                    bias: delta_y.scaled(alpha),
                }
            } else {
                zero_classifier_grads(&state.classifier)
            };
            let back = weight.tr_matvec(&delta_y);
            let d = config.latent_dim;
            let pred_t = Vector::new(back.as_slice()[..d].to_vec());
            let pred_v = Vector::new(back.as_slice()[d..].to_vec());
            (grads, pred_t, pred_v)
        }
        ClassifierParams::SimilarityOnly { weight, .. } => {
            let s = fwd.s.expect("similarity-only head always computes s");
            let features = Vector::new(vec![s, 1.0 - s]);
            let grads = if alpha > 0.0 {
                ClassifierGrads {
                    weight: Matrix::outer(&delta_y, &features).scaled(alpha),
                    bias: delta_y.scaled(alpha),
                }
            } else {
                zero_classifier_grads(&state.classifier)
            };
            // Chain the prediction loss through the head into s, then into
            // the representations: dz/ds = W[:,0] - W[:,1].
            let dloss_ds = delta_y[0] * (weight[(0, 0)] - weight[(0, 1)])
                + delta_y[1] * (weight[(1, 0)] - weight[(1, 1)]);
            let pred_t = similarity_grad(&fwd.t, &fwd.v, s)?.scaled(dloss_ds);
            let pred_v = similarity_grad(&fwd.v, &fwd.t, s)?.scaled(dloss_ds);
            (grads, pred_t, pred_v)
        }
    };

    let (sim_t, sim_v) = match fwd.s {
        Some(s) => {
            let g = similarity_loss_grad(s, ex.label);
            (
                Some(similarity_grad(&fwd.t, &fwd.v, s)?.scaled(g)),
                Some(similarity_grad(&fwd.v, &fwd.t, s)?.scaled(g)),
            )
        }
        None => (None, None),
    };

    let combine = |pred: &Vector, sim: Option<&Vector>| -> Vector {
        let mut seed = Vector::zeros(pred.len());
        if alpha > 0.0 {
            seed.add_scaled(pred, alpha);
        }
        if beta > 0.0 {
            seed.add_scaled(sim.expect("positive beta implies similarity gradient"), beta);
        }
        seed
    };

    let (text, seed_text) = match &fwd.text_cache {
        Some(cache) => {
            let seed = combine(&pred_t, sim_t.as_ref());
            (
                Some(encoder_grads(&state.text_encoder, cache, &seed)),
                Some(seed),
            )
        }
        None => (None, None),
    };
    let (caption, seed_caption) = match &fwd.caption_cache {
        Some(cache) => {
            let seed = combine(&pred_v, sim_v.as_ref());
            (
                Some(encoder_grads(&state.caption_encoder, cache, &seed)),
                Some(seed),
            )
        }
        None => (None, None),
    };

    Ok(GradientSet {
        classifier,
        text,
        caption,
        delta_y,
        seed_text,
        seed_caption,
        pred_grad_text: Some(pred_t),
        pred_grad_caption: Some(pred_v),
        sim_grad_text: sim_t,
        sim_grad_caption: sim_v,
    })
}

fn apply_encoder(enc: &mut EncoderParams, grads: &EncoderGrads, lr: f64) {
    for (filter, (gw, gb)) in enc.filters.iter_mut().zip(&grads.filters) {
        filter.weights.add_scaled(gw, -lr);
        filter.bias -= lr * gb;
    }
    enc.proj.add_scaled(&grads.proj, -lr);
    enc.proj_bias.add_scaled(&grads.proj_bias, -lr);
}

fn apply_gradients(state: &mut ModelState, grads: &GradientSet) {
    let lr = state.config.learning_rate;
    let (alpha, _) = state.config.effective_weights();
    if alpha > 0.0 {
        match &mut state.classifier {
            ClassifierParams::Concat { weight, bias }
            | ClassifierParams::SimilarityOnly { weight, bias } => {
                weight.add_scaled(&grads.classifier.weight, -lr);
                bias.add_scaled(&grads.classifier.bias, -lr);
            }
        }
    }
    if let Some(g) = &grads.text {
        apply_encoder(&mut state.text_encoder, g, lr);
    }
    if let Some(g) = &grads.caption {
        apply_encoder(&mut state.caption_encoder, g, lr);
    }
}

/// One SGD step. Returns the example's weighted loss before the update.
pub fn sgd_step(state: &mut ModelState, ex: &PreparedExample) -> Result<f64> {
    let fwd = forward_example(state, ex)?;
    let grads = compute_gradients(state, ex, &fwd)?;
    apply_gradients(state, &grads);
    Ok(fwd.total)
}

/// Run the configured number of epochs of per-sample SGD. Returns the mean
/// loss per epoch. Deterministic given (seed, corpus order, config).
pub fn train(state: &mut ModelState, examples: &[PreparedExample]) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut trace = Vec::with_capacity(state.config.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = SeededRng::stream(state.config.seed, streams::SHUFFLE);
    for _ in 0..state.config.epochs {
        if state.config.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut sum = 0.0;
        for &i in &order {
            sum += sgd_step(state, &examples[i])?;
        }
        trace.push(sum / examples.len() as f64);
        state.epoch += 1;
        if let Some(delta) = state.config.early_stop_delta {
            let n = trace.len();
            if n >= 2 && (trace[n - 1] - trace[n - 2]).abs() < delta {
                break;
            }
        }
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Flat parameter access, used by the finite-difference checker.
// ---------------------------------------------------------------------------

const ENCODER_SEGMENTS: [&str; 4] = ["filters", "filter_biases", "proj", "proj_bias"];

fn encoder_segment_sizes(enc: &EncoderParams) -> [usize; 4] {
    [
        enc.filters.iter().map(|f| f.weights.len()).sum(),
        enc.filters.len(),
        enc.proj.data().len(),
        enc.proj_bias.len(),
    ]
}

fn encoder_param_mut(enc: &mut EncoderParams, segment: usize, mut idx: usize) -> &mut f64 {
    match segment {
        0 => {
            for f in &mut enc.filters {
                if idx < f.weights.len() {
                    return &mut f.weights.as_mut_slice()[idx];
                }
                idx -= f.weights.len();
            }
            unreachable!("filter weight index out of range")
        }
        1 => &mut enc.filters[idx].bias,
        2 => &mut enc.proj.data_mut()[idx],
        _ => &mut enc.proj_bias.as_mut_slice()[idx],
    }
}

impl ModelState {
    /// (group name, length) segments of the flattened parameter vector, in
    /// a fixed documented order.
    pub fn param_segments(&self) -> Vec<(String, usize)> {
        let mut segments = vec![
            ("classifier.weight".to_string(), self.classifier.weight().data().len()),
            ("classifier.bias".to_string(), self.classifier.bias().len()),
        ];
        for (prefix, enc) in [("text", &self.text_encoder), ("caption", &self.caption_encoder)] {
            for (name, size) in ENCODER_SEGMENTS.iter().zip(encoder_segment_sizes(enc)) {
                segments.push((format!("{prefix}.{name}"), size));
            }
        }
        segments
    }

    pub fn param_count(&self) -> usize {
        self.param_segments().iter().map(|(_, n)| n).sum()
    }

    /// Copy of every parameter in the same flat order as [`Self::param_mut`].
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.classifier.weight().data());
        out.extend_from_slice(self.classifier.bias().as_slice());
        for enc in [&self.text_encoder, &self.caption_encoder] {
            for f in &enc.filters {
                out.extend_from_slice(f.weights.as_slice());
            }
            out.extend(enc.filters.iter().map(|f| f.bias));
            out.extend_from_slice(enc.proj.data());
            out.extend_from_slice(enc.proj_bias.as_slice());
        }
        out
    }

    /// Mutable access to the idx-th parameter in flat order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        let head_w = self.classifier.weight().data().len();
        if idx < head_w {
            return match &mut self.classifier {
                ClassifierParams::Concat { weight, .. }
                | ClassifierParams::SimilarityOnly { weight, .. } => &mut weight.data_mut()[idx],
            };
        }
        idx -= head_w;
        let head_b = self.classifier.bias().len();
        if idx < head_b {
            return match &mut self.classifier {
                ClassifierParams::Concat { bias, .. }
                | ClassifierParams::SimilarityOnly { bias, .. } => &mut bias.as_mut_slice()[idx],
            };
        }
        idx -= head_b;
        let text_sizes = encoder_segment_sizes(&self.text_encoder);
        let text_total: usize = text_sizes.iter().sum();
        if idx < text_total {
            for (segment, &size) in text_sizes.iter().enumerate() {
                if idx < size {
                    return encoder_param_mut(&mut self.text_encoder, segment, idx);
                }
                idx -= size;
            }
        }
        idx -= text_total;
        let caption_sizes = encoder_segment_sizes(&self.caption_encoder);
        for (segment, &size) in caption_sizes.iter().enumerate() {
            if idx < size {
                return encoder_param_mut(&mut self.caption_encoder, segment, idx);
            }
            idx -= size;
        }
        panic!("parameter index out of range");
    }
}

fn flatten_encoder_grads(out: &mut Vec<f64>, enc: &EncoderParams, grads: Option<&EncoderGrads>) {
    match grads {
        Some(g) => {
            for (gw, _) in &g.filters {
                out.extend_from_slice(gw.as_slice());
            }
            out.extend(g.filters.iter().map(|(_, gb)| *gb));
            out.extend_from_slice(g.proj.data());
            out.extend_from_slice(g.proj_bias.as_slice());
        }
        None => {
            let total: usize = encoder_segment_sizes(enc).iter().sum();
            out.extend(std::iter::repeat_n(0.0, total));
        }
    }
}

impl GradientSet {
    /// Flatten to the same order as [`ModelState::param_mut`]. Frozen
    /// branches flatten to zeros.
    pub fn flatten(&self, state: &ModelState) -> Vec<f64> {
        let mut out = Vec::with_capacity(state.param_count());
        out.extend_from_slice(self.classifier.weight.data());
        out.extend_from_slice(self.classifier.bias.as_slice());
        flatten_encoder_grads(&mut out, &state.text_encoder, self.text.as_ref());
        flatten_encoder_grads(&mut out, &state.caption_encoder, self.caption.as_ref());
        out
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.failures == 0)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().fold(0.0, |m, g| m.max(g.max_rel_err))
    }

    pub fn total_checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }

    pub fn total_skipped(&self) -> usize {
        self.groups.iter().map(|g| g.skipped).sum()
    }

    pub fn total_failures(&self) -> usize {
        self.groups.iter().map(|g| g.failures).sum()
    }

    /// Fold another report (same group layout) into this one.
    pub fn merge(&mut self, other: &GradCheckReport) {
        assert_eq!(self.groups.len(), other.groups.len(), "mismatched reports");
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.checked += b.checked;
            a.skipped += b.skipped;
            a.failures += b.failures;
            a.max_rel_err = a.max_rel_err.max(b.max_rel_err);
        }
    }
}

/// Argmax positions and ReLU masks of every feature map, in order. An FD
/// entry is only trusted when this is identical at the base point and both
/// perturbations.
fn smoothness_signature(fwd: &Forward) -> Vec<(usize, bool)> {
    let mut sig = Vec::new();
    for cache in [&fwd.text_cache, &fwd.caption_cache].into_iter().flatten() {
        for map in &cache.maps {
            sig.push((map.argmax, map.pre[map.argmax] > 0.0));
        }
    }
    sig
}

/// True when the base point sits close enough to a ReLU kink, pooling tie or
/// loss clamp that central differences are unreliable for any parameter.
fn near_nonsmooth_point(fwd: &Forward) -> bool {
    for cache in [&fwd.text_cache, &fwd.caption_cache].into_iter().flatten() {
        for map in &cache.maps {
            if map.pre[map.argmax].abs() < KINK_TOL {
                return true;
            }
            // A pooling tie only matters when the winner is active: a map
            // whose entries are all ReLU-clamped to zero is flat, not tied.
            let best = map.act[map.argmax];
            let runner_up = map
                .act
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != map.argmax)
                .map(|(_, &a)| a)
                .fold(f64::NEG_INFINITY, f64::max);
            if best > KINK_TOL && runner_up.is_finite() && best - runner_up < KINK_TOL {
                return true;
            }
        }
    }
    if fwd.yhat.min(1.0 - fwd.yhat) < 1e-9 {
        return true;
    }
    if let Some(s) = fwd.s {
        if s.min(1.0 - s) < 1e-9 {
            return true;
        }
    }
    false
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference check of an externally supplied gradient set. Exposed
/// separately so tests can feed deliberately wrong gradients (negative
/// control).
pub fn gradient_check_against(
    state: &ModelState,
    ex: &PreparedExample,
    grads: &GradientSet,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let base = forward_example(state, ex)?;
    let base_sig = smoothness_signature(&base);
    let example_kinky = near_nonsmooth_point(&base);
    let analytic = grads.flatten(state);

    let indices: Vec<usize> = (0..analytic.len()).collect();
    // Entries are pure perturbed forwards, safe to fan out. A perturbation
    // that lands on a degenerate configuration (zero-norm representation)
    // counts as non-smooth and is skipped.
    let outcomes: Vec<Result<Option<f64>>> = exec::map_slice(&indices, |&i| {
        if example_kinky {
            return Ok(None);
        }
        let mut plus = state.clone();
        *plus.param_mut(i) += step;
        let mut minus = state.clone();
        *minus.param_mut(i) -= step;
        let (fwd_plus, fwd_minus) = match (forward_example(&plus, ex), forward_example(&minus, ex))
        {
            (Ok(p), Ok(m)) => (p, m),
            (Err(Error::ZeroVector), _) | (_, Err(Error::ZeroVector)) => return Ok(None),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        if smoothness_signature(&fwd_plus) != base_sig
            || smoothness_signature(&fwd_minus) != base_sig
        {
            return Ok(None);
        }
        Ok(Some((fwd_plus.total - fwd_minus.total) / (2.0 * step)))
    });

    let mut groups: Vec<GroupCheck> = state
        .param_segments()
        .into_iter()
        .map(|(name, _)| GroupCheck {
            name,
            checked: 0,
            skipped: 0,
            failures: 0,
            max_rel_err: 0.0,
        })
        .collect();
    let segments = state.param_segments();

    let mut segment = 0;
    let mut offset = 0;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        while i - offset >= segments[segment].1 {
            offset += segments[segment].1;
            segment += 1;
        }
        let group = &mut groups[segment];
        match outcome? {
            None => group.skipped += 1,
            Some(numeric)
                if analytic[i].abs() < RESOLUTION_FLOOR && numeric.abs() < RESOLUTION_FLOOR =>
            {
                group.skipped += 1
            }
            Some(numeric) => {
                let err = relative_error(analytic[i], numeric);
                group.checked += 1;
                group.max_rel_err = group.max_rel_err.max(err);
                if err >= tolerance {
                    group.failures += 1;
                }
            }
        }
    }

    Ok(GradCheckReport {
        step,
        tolerance,
        groups,
    })
}

/// Check the analytic gradients of `state` on one example against central
/// finite differences of the weighted objective.
pub fn gradient_check(
    state: &ModelState,
    ex: &PreparedExample,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let fwd = forward_example(state, ex)?;
    let grads = compute_gradients(state, ex, &fwd)?;
    gradient_check_against(state, ex, &grads, step, tolerance)
}

/// Weight values exercised by the gradient-check suite.
pub const CHECK_WEIGHT_GRID: [f64; 4] = [0.0, 0.4, 0.6, 1.0];

/// A randomly initialized model plus a random embedded example, for checks
/// that need no corpus. Deterministic in (config.seed, salt).
pub fn random_check_instance(
    config: &TrainConfig,
    salt: u64,
) -> Result<(ModelState, PreparedExample)> {
    let mut cfg = config.clone();
    cfg.seed = config.seed.wrapping_add(salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let state = ModelState::init(cfg.clone())?;
    let mut rng = SeededRng::stream(cfg.seed, streams::GRADCHECK);
    let max_window = cfg.max_window();
    let text_len = max_window + 2 + rng.uniform_below(5);
    let caption_len = max_window + 1 + rng.uniform_below(4);
    let embed = |rng: &mut SeededRng, n: usize| -> Vec<Vector> {
        (0..n).map(|_| rng.normal_vector(cfg.embed_dim, 1.0)).collect()
    };
    let label = if rng.uniform_f64() < 0.5 {
        Label::Fake
    } else {
        Label::True
    };
    let ex = PreparedExample {
        id: format!("check-{salt}"),
        label,
        text: embed(&mut rng, text_len),
        caption: embed(&mut rng, caption_len),
    };
    Ok((state, ex))
}

#[derive(Clone, Debug)]
pub struct ComboCheck {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    pub report: GradCheckReport,
}

/// Run the checker across variants and weight pairs, `examples_per_combo`
/// fresh model/example pairs each. Degenerate draws (a representation with
/// zero norm, which the similarity score rejects) are re-rolled
/// deterministically.
pub fn gradient_check_suite(
    base: &TrainConfig,
    variants: &[Variant],
    weight_pairs: &[(f64, f64)],
    examples_per_combo: usize,
    step: f64,
    tolerance: f64,
) -> Result<Vec<ComboCheck>> {
    let mut combos = Vec::new();
    let mut salt = 0u64;
    for &variant in variants {
        for &(alpha, beta) in weight_pairs {
            if alpha + beta <= 0.0 {
                continue;
            }
            let mut config = base.clone();
            config.variant = variant;
            config.alpha = alpha;
            config.beta = beta;
            // Variants that cut the similarity pathway leave alpha = 0 with
            // an empty objective; its gradient is identically zero and every
            // entry legitimately reports as skipped.
            let (eff_alpha, eff_beta) = config.effective_weights();
            let objective_is_empty = eff_alpha + eff_beta == 0.0;
            let mut merged: Option<GradCheckReport> = None;
            for _ in 0..examples_per_combo {
                // re-roll instances whose forward pass is degenerate or whose
                // base point is entirely kink-adjacent
                let report = loop {
                    salt += 1;
                    let (state, ex) = random_check_instance(&config, salt)?;
                    match gradient_check(&state, &ex, step, tolerance) {
                        Ok(report) if report.total_checked() == 0 && !objective_is_empty => {
                            continue
                        }
                        Ok(report) => break report,
                        Err(Error::ZeroVector) => continue,
                        Err(e) => return Err(e),
                    }
                };
                match &mut merged {
                    Some(m) => m.merge(&report),
                    None => merged = Some(report),
                }
            }
            if let Some(report) = merged {
                combos.push(ComboCheck {
                    variant,
                    alpha,
                    beta,
                    report,
                });
            }
        }
    }
    Ok(combos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::LossWeights;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            embed_dim: 4,
            latent_dim: 3,
            windows: vec![2, 3],
            learning_rate: 1e-2,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn instance(variant: Variant, alpha: f64, beta: f64, salt: u64) -> (ModelState, PreparedExample) {
        let config = TrainConfig {
            variant,
            alpha,
            beta,
            ..tiny_config()
        };
        random_check_instance(&config, salt).unwrap()
    }

    #[test]
    fn delta_y_matches_hand_values() {
        let (state, mut ex) = instance(Variant::Full, 1.0, 0.0, 1);
        ex.label = Label::Fake;
        let fwd = forward_example(&state, &ex).unwrap();
        let grads = compute_gradients(&state, &ex, &fwd).unwrap();
        let expected = [fwd.yhat - 1.0, 1.0 - fwd.yhat];
        assert_eq!(grads.delta_y.as_slice(), &expected);
        // y = 1, yhat = 0.7 gives [-0.3, 0.3]
        assert!((0.7_f64 - 1.0 + 0.3).abs() < 1e-15);
    }

    #[test]
    fn classifier_grads_zero_at_perfect_prediction() {
        // Force yhat == y by checking the formula directly: delta_y = 0 makes
        // both head gradients vanish.
        let (state, ex) = instance(Variant::Full, 1.0, 0.0, 2);
        let mut fwd = forward_example(&state, &ex).unwrap();
        fwd.yhat = ex.label.target();
        let grads = compute_gradients(&state, &ex, &fwd).unwrap();
        assert!(grads.classifier.weight.data().iter().all(|&g| g == 0.0));
        assert!(grads.classifier.bias.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn classifier_grads_match_finite_differences_of_prediction_loss() {
        // step 1e-6, tolerance 1e-5, objective alpha * prediction loss
        let (state, ex) = instance(Variant::Full, 1.0, 0.0, 3);
        let fwd = forward_example(&state, &ex).unwrap();
        let grads = compute_gradients(&state, &ex, &fwd).unwrap();
        let step = 1e-6;
        let head_len = state.classifier.weight().data().len() + 2;
        for i in 0..head_len {
            let mut plus = state.clone();
            *plus.param_mut(i) += step;
            let mut minus = state.clone();
            *minus.param_mut(i) -= step;
            let numeric = (forward_example(&plus, &ex).unwrap().total
                - forward_example(&minus, &ex).unwrap().total)
                / (2.0 * step);
            let analytic = grads.flatten(&state)[i];
            assert!(
                relative_error(analytic, numeric) < 1e-5,
                "head param {i}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn similarity_gradient_reduces_to_closed_form_for_true_labels() {
        let mut rng = SeededRng::new(51);
        for _ in 0..100 {
            let t = rng.normal_vector(5, 1.0);
            let v = rng.normal_vector(5, 1.0);
            let s = similarity(&t, &v).unwrap();
            let implemented =
                crate::fusion::similarity_loss_grad_wrt(&t, &v, s, Label::True).unwrap();
            // closed form for y = 0: ((2s-1) t0 - v0) / (2 s ||t||)
            let t0 = t.scaled(1.0 / t.norm());
            let v0 = v.scaled(1.0 / v.norm());
            let mut closed = t0.scaled(2.0 * s - 1.0);
            closed.add_scaled(&v0, -1.0);
            let closed = closed.scaled(1.0 / (2.0 * s * t.norm()));
            let diff = implemented.sub(&closed).norm();
            let scale = implemented.norm().max(closed.norm()).max(1e-8);
            assert!(diff / scale < 1e-10, "relative gap {}", diff / scale);
        }
    }

    #[test]
    fn similarity_gradient_matches_finite_differences_both_labels() {
        let mut rng = SeededRng::new(53);
        for trial in 0..50 {
            let t = rng.normal_vector(4, 1.0);
            let v = rng.normal_vector(4, 1.0);
            let label = if trial % 2 == 0 { Label::Fake } else { Label::True };
            let s = similarity(&t, &v).unwrap();
            if s.min(1.0 - s) < 1e-6 {
                continue;
            }
            let grad = crate::fusion::similarity_loss_grad_wrt(&t, &v, s, label).unwrap();
            let step = 1e-6;
            for i in 0..t.len() {
                let mut plus = t.clone();
                plus[i] += step;
                let mut minus = t.clone();
                minus[i] -= step;
                let lp = similarity_loss(similarity(&plus, &v).unwrap(), label);
                let lm = similarity_loss(similarity(&minus, &v).unwrap(), label);
                let numeric = (lp - lm) / (2.0 * step);
                assert!(
                    relative_error(grad[i], numeric) < 1e-5,
                    "entry {i}: {} vs {numeric}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn encoder_grads_zero_seed_gives_zero_slice() {
        let (state, ex) = instance(Variant::Full, 1.0, 0.0, 4);
        let fwd = forward_example(&state, &ex).unwrap();
        let cache = fwd.text_cache.as_ref().unwrap();
        let grads = encoder_grads(&state.text_encoder, cache, &Vector::zeros(3));
        assert!(grads.proj.data().iter().all(|&g| g == 0.0));
        assert!(grads.proj_bias.iter().all(|&g| g == 0.0));
        for (gw, gb) in &grads.filters {
            assert!(gw.iter().all(|&g| g == 0.0));
            assert_eq!(*gb, 0.0);
        }
    }

    #[test]
    fn encoder_grads_respect_relu_mask() {
        // Zero filter weights with a negative bias: every pre-activation is
        // negative, the pooled output clamps to zero, and no gradient reaches
        // the filter.
        let (mut state, ex) = instance(Variant::Full, 1.0, 0.0, 5);
        for f in &mut state.text_encoder.filters {
            f.weights = Vector::zeros(f.weights.len());
            f.bias = -1.0;
        }
        let fwd = forward_example(&state, &ex).unwrap();
        let grads = compute_gradients(&state, &ex, &fwd).unwrap();
        for (gw, gb) in &grads.text.as_ref().unwrap().filters {
            assert!(gw.iter().all(|&g| g == 0.0));
            assert_eq!(*gb, 0.0);
        }
        // the projection still learns: its input is the (zero) pooled vector
        assert!(grads.text.as_ref().unwrap().proj_bias.norm() > 0.0);
    }

    #[test]
    fn full_gradient_check_passes_across_variants_and_weights() {
        let pairs: Vec<(f64, f64)> = CHECK_WEIGHT_GRID
            .iter()
            .flat_map(|&a| CHECK_WEIGHT_GRID.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a + b > 0.0)
            .collect();
        let combos = gradient_check_suite(
            &tiny_config(),
            &Variant::ABLATION_ORDER,
            &pairs,
            1,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert_eq!(combos.len(), 5 * pairs.len());
        for combo in &combos {
            assert!(
                combo.report.passed(),
                "{} alpha={} beta={}: max rel err {}",
                combo.variant,
                combo.alpha,
                combo.beta,
                combo.report.max_rel_err()
            );
            let mut config = tiny_config();
            config.variant = combo.variant;
            config.alpha = combo.alpha;
            config.beta = combo.beta;
            let (ea, eb) = config.effective_weights();
            if ea + eb > 0.0 {
                assert!(combo.report.total_checked() > 0);
            }
        }
    }

    #[test]
    fn gradient_check_negative_control_flags_everything() {
        // Zeroed analytic gradients on a generic instance: every checked
        // entry must fail.
        let (state, ex) = instance(Variant::Full, 0.6, 0.4, 8);
        let fwd = forward_example(&state, &ex).unwrap();
        let grads = compute_gradients(&state, &ex, &fwd).unwrap();
        let zeroed = GradientSet {
            classifier: ClassifierGrads {
                weight: Matrix::zeros(
                    grads.classifier.weight.rows(),
                    grads.classifier.weight.cols(),
                ),
                bias: Vector::zeros(2),
            },
            text: None,
            caption: None,
            ..grads
        };
        let report = gradient_check_against(&state, &ex, &zeroed, 1e-5, 1e-4).unwrap();
        assert!(!report.passed());
        assert_eq!(
            report.total_failures(),
            report.total_checked(),
            "every checked entry should fail the negative control"
        );
        assert!(report.total_checked() > 0);
    }

    #[test]
    fn gradient_check_halving_the_step_stays_in_truncation_regime() {
        let (state, ex) = instance(Variant::Full, 0.5, 0.5, 9);
        let coarse = gradient_check(&state, &ex, 1e-5, 1e-4).unwrap();
        let fine = gradient_check(&state, &ex, 5e-6, 1e-4).unwrap();
        assert!(
            fine.max_rel_err() <= 4.0 * coarse.max_rel_err() + 1e-12,
            "fine {} vs coarse {}",
            fine.max_rel_err(),
            coarse.max_rel_err()
        );
    }

    #[test]
    fn sgd_step_zero_learning_rate_keeps_parameters() {
        let (mut state, ex) = instance(Variant::Full, 0.5, 0.5, 10);
        // init validates lr > 0; the step itself accepts a zero rate
        state.config.learning_rate = 0.0;
        let before = state.clone();
        let loss = sgd_step(&mut state, &ex).unwrap();
        assert!(loss > 0.0);
        assert_eq!(state, before);
    }

    #[test]
    fn sgd_step_delta_is_minus_lr_times_gradient() {
        let (state, ex) = instance(Variant::Full, 0.4, 0.6, 11);
        let fwd = forward_example(&state, &ex).unwrap();
        let grads = compute_gradients(&state, &ex, &fwd).unwrap();
        let flat_grads = grads.flatten(&state);
        let mut stepped = state.clone();
        sgd_step(&mut stepped, &ex).unwrap();
        let lr = state.config.learning_rate;
        let mut base = state.clone();
        for (i, &g) in flat_grads.iter().enumerate() {
            let expected = *base.param_mut(i) - lr * g;
            assert_eq!(*stepped.param_mut(i), expected, "param {i}");
        }
    }

    #[test]
    fn sgd_step_is_deterministic() {
        let (state, ex) = instance(Variant::Full, 0.5, 0.5, 12);
        let mut a = state.clone();
        let mut b = state;
        let la = sgd_step(&mut a, &ex).unwrap();
        let lb = sgd_step(&mut b, &ex).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn single_small_step_descends() {
        let (state, ex) = instance(Variant::Full, 0.5, 0.5, 13);
        let mut stepped = state.clone();
        stepped.config.learning_rate = 1e-6;
        let before = sgd_step(&mut stepped, &ex).unwrap();
        let after = forward_example(&stepped, &ex).unwrap().total;
        assert!(after <= before, "loss rose from {before} to {after}");
    }

    #[test]
    fn train_zero_epochs_is_identity() {
        let (mut state, ex) = instance(Variant::Full, 0.5, 0.5, 14);
        state.config.epochs = 0;
        let before = state.clone();
        let trace = train(&mut state, std::slice::from_ref(&ex)).unwrap();
        assert!(trace.is_empty());
        assert_eq!(state, before);
    }

    #[test]
    fn train_single_example_converges() {
        // 200 epochs at lr 1e-2 on one repeated example: the loss must at
        // least halve.
        let (mut state, ex) = instance(Variant::Full, 0.5, 0.5, 15);
        state.config.epochs = 200;
        state.config.learning_rate = 1e-2;
        let trace = train(&mut state, std::slice::from_ref(&ex)).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(
            trace[199] <= 0.5 * trace[0],
            "loss went {} -> {}",
            trace[0],
            trace[199]
        );
        assert_eq!(state.epoch, 200);
    }

    #[test]
    fn train_rejects_empty_corpus() {
        let (mut state, _) = instance(Variant::Full, 0.5, 0.5, 16);
        assert!(matches!(train(&mut state, &[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn frozen_branch_stays_bit_identical() {
        let (mut state, ex) = instance(Variant::NoText, 1.0, 0.0, 17);
        let text_before = state.text_encoder.clone();
        state.config.epochs = 5;
        train(&mut state, std::slice::from_ref(&ex)).unwrap();
        assert_eq!(state.text_encoder, text_before);
        // symmetric freeze for the caption branch
        let (mut state, ex) = instance(Variant::NoCaption, 1.0, 0.0, 18);
        let caption_before = state.caption_encoder.clone();
        state.config.epochs = 5;
        train(&mut state, std::slice::from_ref(&ex)).unwrap();
        assert_eq!(state.caption_encoder, caption_before);
    }

    #[test]
    fn early_stop_cuts_the_trace() {
        let (mut state, ex) = instance(Variant::Full, 0.5, 0.5, 19);
        state.config.epochs = 500;
        state.config.learning_rate = 1e-9;
        state.config.early_stop_delta = Some(1e-6);
        let trace = train(&mut state, std::slice::from_ref(&ex)).unwrap();
        assert!(trace.len() < 500, "early stop never fired");
    }

    #[test]
    fn total_loss_matches_fusion_composition() {
        let (state, ex) = instance(Variant::Full, 0.4, 0.6, 20);
        let fwd = forward_example(&state, &ex).unwrap();
        let weights = LossWeights::new(0.4, 0.6).unwrap();
        let direct = crate::fusion::total_loss(&weights, fwd.yhat, fwd.s.unwrap(), ex.label);
        assert!((fwd.total - direct).abs() < 1e-15);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = tiny_config();
        config.alpha = 0.0;
        config.beta = 0.0;
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.learning_rate = 0.0;
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.windows.clear();
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.max_tokens = 2;
        assert!(config.validate().is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ABLATION_ORDER {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }
}
