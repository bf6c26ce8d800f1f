//! Model files and the end-to-end fit/predict pipeline.
//!
//! A trained model bundles the parameters with the vocabulary and frozen
//! embedding table that featurized its training corpus, so evaluation needs
//! nothing but the model file and a corpus. The on-disk format is JSON with
//! fields in declaration order (format version, vocabulary hash, vocabulary,
//! embeddings, parameters); floats survive the round trip bit-exactly, and
//! saving a loaded model reproduces the file byte-for-byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Label, NewsArticle};
use crate::error::{Error, Result};
use crate::fusion::ClassifierParams;
use crate::numerics::{streams, SeededRng};
use crate::text::{tokenize, EmbeddingTable, Vocabulary};
use crate::train::{
    forward_example, prepare_articles, train, ModelState, TrainConfig,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub vocab_sha256: String,
    pub vocabulary: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub state: ModelState,
}

pub struct FitOutcome {
    pub model: TrainedModel,
    /// Mean loss per epoch.
    pub trace: Vec<f64>,
    /// Articles dropped because the similarity pathway needs a caption.
    pub skipped: usize,
}

/// Build the vocabulary and embeddings from a training corpus, then run the
/// configured training loop.
pub fn fit(corpus: &Corpus, config: &TrainConfig, embeddings: Option<&Path>) -> Result<FitOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let docs: Vec<Vec<String>> = corpus
        .articles
        .iter()
        .flat_map(|a| [tokenize(&a.text), tokenize(&a.caption)])
        .collect();
    let vocab = Vocabulary::build(&docs, config.min_count);
    let mut rng = SeededRng::stream(config.seed, streams::EMBEDDINGS);
    let table = match embeddings {
        Some(path) => EmbeddingTable::from_file(path, &vocab, config.embed_dim, &mut rng)?,
        None => EmbeddingTable::random(vocab.len(), config.embed_dim, &mut rng),
    };
    let (examples, skipped) = prepare_articles(&corpus.articles, &vocab, &table, config)?;
    let mut state = ModelState::init(config.clone())?;
    let trace = train(&mut state, &examples)?;
    Ok(FitOutcome {
        model: TrainedModel {
            format_version: FORMAT_VERSION,
            vocab_sha256: vocab.sha256_hex(),
            vocabulary: vocab,
            embeddings: table,
            state,
        },
        trace,
        skipped,
    })
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    /// Predicted probability of fake.
    pub fake_prob: f64,
    /// Decision at the symmetric 0.5 threshold.
    pub fake: bool,
    pub similarity: Option<f64>,
}

/// Classify articles. Returns predictions for the usable articles plus the
/// count skipped (captionless articles under an active similarity pathway).
pub fn predict(
    model: &TrainedModel,
    articles: &[NewsArticle],
) -> Result<(Vec<Prediction>, usize)> {
    let config = &model.state.config;
    let (examples, skipped) =
        prepare_articles(articles, &model.vocabulary, &model.embeddings, config)?;
    let predictions = examples
        .iter()
        .map(|ex| {
            let fwd = forward_example(&model.state, ex)?;
            Ok(Prediction {
                id: ex.id.clone(),
                label: ex.label,
                fake_prob: fwd.yhat,
                fake: fwd.yhat >= 0.5,
                similarity: fwd.s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((predictions, skipped))
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes =
        serde_json::to_vec(model).map_err(|e| Error::CorruptModelFile(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path)?;
    let model: TrainedModel =
        serde_json::from_slice(&bytes).map_err(|e| Error::CorruptModelFile(e.to_string()))?;
    if model.format_version != FORMAT_VERSION {
        return Err(Error::CorruptModelFile(format!(
            "unsupported format version {}",
            model.format_version
        )));
    }
    let computed = model.vocabulary.sha256_hex();
    if computed != model.vocab_sha256 {
        return Err(Error::VocabularyMismatch {
            stored: model.vocab_sha256,
            computed,
        });
    }
    validate_shapes(&model)?;
    Ok(model)
}

fn validate_shapes(model: &TrainedModel) -> Result<()> {
    let config = &model.state.config;
    config
        .validate()
        .map_err(|e| Error::CorruptModelFile(e.to_string()))?;
    if model.embeddings.len() != model.vocabulary.len()
        || model.embeddings.dim() != config.embed_dim
    {
        return Err(Error::CorruptModelFile(
            "embedding table does not match the vocabulary or configured dimension".into(),
        ));
    }
    for enc in [&model.state.text_encoder, &model.state.caption_encoder] {
        enc.check_shapes(config.embed_dim)
            .map_err(|e| Error::CorruptModelFile(e.to_string()))?;
        if enc.latent_dim() != config.latent_dim {
            return Err(Error::CorruptModelFile(
                "encoder latent dimension does not match the config".into(),
            ));
        }
    }
    let expected_cols = if config.variant.has_concat_head() {
        2 * config.latent_dim
    } else {
        2
    };
    let head_matches = match &model.state.classifier {
        ClassifierParams::Concat { weight, bias } => {
            config.variant.has_concat_head()
                && weight.rows() == 2
                && weight.cols() == expected_cols
                && bias.len() == 2
        }
        ClassifierParams::SimilarityOnly { weight, bias } => {
            !config.variant.has_concat_head()
                && weight.rows() == 2
                && weight.cols() == 2
                && bias.len() == 2
        }
    };
    if !head_matches {
        return Err(Error::CorruptModelFile(
            "classifier head does not match the configured variant".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec};

    fn tiny_fit() -> FitOutcome {
        let corpus = generate_synthetic(&SynthSpec {
            size: 12,
            ..SynthSpec::default()
        })
        .unwrap();
        let config = TrainConfig {
            embed_dim: 6,
            latent_dim: 4,
            epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        fit(&corpus, &config, None).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let outcome = tiny_fit();
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("model.json");
        let second = dir.path().join("model2.json");
        save_model(&outcome.model, &first).unwrap();
        let loaded = load_model(&first).unwrap();
        assert_eq!(loaded, outcome.model);
        save_model(&loaded, &second).unwrap();
        assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let outcome = tiny_fit();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&outcome.model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::CorruptModelFile(_))
        ));
    }

    #[test]
    fn tampered_vocabulary_is_a_mismatch() {
        let outcome = tiny_fit();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&outcome.model, &path).unwrap();

        let mut value: serde_json::Value =
            serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        let vocab = value["vocabulary"].as_array_mut().unwrap();
        vocab.push(serde_json::Value::String("smuggled".into()));
        fs::write(&path, serde_json::to_vec(&value).unwrap()).unwrap();

        assert!(matches!(
            load_model(&path),
            Err(Error::VocabularyMismatch { .. })
        ));
    }

    #[test]
    fn predict_reports_decisions_and_similarity() {
        let outcome = tiny_fit();
        let corpus = generate_synthetic(&SynthSpec {
            size: 8,
            seed: 2,
            ..SynthSpec::default()
        })
        .unwrap();
        let (preds, skipped) = predict(&outcome.model, &corpus.articles).unwrap();
        assert_eq!(preds.len(), 8);
        assert_eq!(skipped, 0);
        for p in &preds {
            assert!((0.0..=1.0).contains(&p.fake_prob));
            assert_eq!(p.fake, p.fake_prob >= 0.5);
            assert!(p.similarity.is_some());
        }
    }

    #[test]
    fn predict_skips_captionless_articles_when_similarity_is_active() {
        let outcome = tiny_fit();
        let mut corpus = generate_synthetic(&SynthSpec {
            size: 8,
            seed: 3,
            ..SynthSpec::default()
        })
        .unwrap();
        corpus.articles[0].caption.clear();
        corpus.articles[1].caption = "   ".into();
        let (preds, skipped) = predict(&outcome.model, &corpus.articles).unwrap();
        assert_eq!(preds.len(), 6);
        assert_eq!(skipped, 2);
    }

    #[test]
    fn fit_skips_captionless_articles_under_full_variant_only() {
        let mut corpus = generate_synthetic(&SynthSpec {
            size: 12,
            ..SynthSpec::default()
        })
        .unwrap();
        corpus.articles[0].caption.clear();
        let config = TrainConfig {
            embed_dim: 6,
            latent_dim: 4,
            epochs: 1,
            ..TrainConfig::default()
        };
        let outcome = fit(&corpus, &config, None).unwrap();
        assert_eq!(outcome.skipped, 1);

        // variants that never read the similarity score keep them
        for variant in [
            crate::train::Variant::NoSimilarity,
            crate::train::Variant::NoCaption,
        ] {
            let outcome = fit(
                &corpus,
                &TrainConfig {
                    variant,
                    ..config.clone()
                },
                None,
            )
            .unwrap();
            assert_eq!(outcome.skipped, 0, "{variant} should keep captionless articles");
        }
    }
}
