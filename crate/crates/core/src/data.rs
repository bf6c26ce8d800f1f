//! Corpus ingestion, dataset splits, and a synthetic corpus generator.
//!
//! Corpus files are UTF-8 JSON lines. Each line is an object with required
//! keys `id` (string), `text` (string), `label` (integer 0 = true news,
//! 1 = fake), `published_at` (ISO-8601 date or datetime) and an optional
//! `caption` (string, the sentence derived from the article's image by an
//! external captioning step). Unknown keys are ignored.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{streams, SeededRng};

/// Article label; fake is the positive class throughout.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    True,
    Fake,
}

impl Label {
    /// Numeric target: 0 for true news, 1 for fake.
    pub fn target(self) -> f64 {
        match self {
            Label::True => 0.0,
            Label::Fake => 1.0,
        }
    }

    pub fn is_fake(self) -> bool {
        matches!(self, Label::Fake)
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::True),
            1 => Ok(Label::Fake),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::True => 0,
            Label::Fake => 1,
        }
    }
}

/// One labeled example: body text plus the image-derived caption sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct NewsArticle {
    pub id: String,
    pub text: String,
    pub caption: String,
    pub label: Label,
    pub published_at: Option<NaiveDateTime>,
}

impl NewsArticle {
    /// Whether a usable caption is present. Articles without one cannot feed
    /// the similarity pathway.
    pub fn has_caption(&self) -> bool {
        !self.caption.trim().is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub articles: Vec<NewsArticle>,
    pub provenance: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    caption: Option<String>,
    label: i64,
    published_at: String,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    caption: Option<&'a str>,
    label: u8,
    published_at: String,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = s.parse::<NaiveDateTime>() {
        return Some(dt);
    }
    s.parse::<NaiveDate>()
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Load a JSON-lines corpus. Blank lines are skipped; any other defect is a
/// hard error with a 1-based line number.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path)?;
    let mut articles = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        let label = u8::try_from(raw.label)
            .ok()
            .and_then(|v| Label::try_from(v).ok())
            .ok_or_else(|| Error::MalformedRecord {
                line: lineno + 1,
                reason: format!("label must be 0 or 1, got {}", raw.label),
            })?;
        let published_at = parse_timestamp(&raw.published_at).ok_or_else(|| {
            Error::MalformedRecord {
                line: lineno + 1,
                reason: format!("unparseable published_at {:?}", raw.published_at),
            }
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        articles.push(NewsArticle {
            id: raw.id,
            text: raw.text,
            caption: raw.caption.unwrap_or_default(),
            label,
            published_at: Some(published_at),
        });
    }
    Ok(Corpus {
        articles,
        provenance: path.display().to_string(),
    })
}

/// Write a corpus in the JSON-lines format `load_corpus` reads.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for a in &corpus.articles {
        let published_at = a
            .published_at
            .ok_or_else(|| Error::MissingTimestamp(a.id.clone()))?
            .format("%Y-%m-%dT%H:%M:%S")
            .to_string();
        let rec = OutRecord {
            id: &a.id,
            text: &a.text,
            caption: if a.has_caption() {
                Some(&a.caption)
            } else {
                None
            },
            label: u8::from(a.label),
            published_at,
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Split by publication date: the earliest `floor(fraction * m)` articles go
/// to train, the newest remainder to test. Ties break by id, so the split is
/// deterministic.
pub fn temporal_split(corpus: &Corpus, train_fraction: f64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut sorted = corpus.articles.clone();
    for a in &sorted {
        if a.published_at.is_none() {
            return Err(Error::MissingTimestamp(a.id.clone()));
        }
    }
    sorted.sort_by(|a, b| {
        a.published_at
            .cmp(&b.published_at)
            .then_with(|| a.id.cmp(&b.id))
    });
    let n_train = (train_fraction * corpus.len() as f64).floor() as usize;
    let test = sorted.split_off(n_train);
    Ok((
        Corpus {
            articles: sorted,
            provenance: format!("{} [train]", corpus.provenance),
        },
        Corpus {
            articles: test,
            provenance: format!("{} [test]", corpus.provenance),
        },
    ))
}

/// Seeded k-fold splitter: shuffle once, then cut into k near-equal folds.
/// Returns (train, validation) pairs; the validation folds partition the
/// corpus exactly.
pub fn kfold_split(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<(Corpus, Corpus)>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    if corpus.len() < k {
        return Err(Error::TooFewExamples {
            have: corpus.len(),
            need: k,
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    SeededRng::stream(seed, streams::KFOLD).shuffle(&mut order);

    let m = corpus.len();
    let base = m / k;
    let extra = m % k;
    let mut folds: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }

    let pairs = folds
        .iter()
        .enumerate()
        .map(|(f, validation)| {
            let train_articles: Vec<NewsArticle> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, idx)| idx.iter().map(|&i| corpus.articles[i].clone()))
                .collect();
            let val_articles: Vec<NewsArticle> = validation
                .iter()
                .map(|&i| corpus.articles[i].clone())
                .collect();
            (
                Corpus {
                    articles: train_articles,
                    provenance: format!("{} [fold {f} train]", corpus.provenance),
                },
                Corpus {
                    articles: val_articles,
                    provenance: format!("{} [fold {f} validation]", corpus.provenance),
                },
            )
        })
        .collect();
    Ok(pairs)
}

/// Recipe for a synthetic corpus with a planted text/caption mismatch signal.
///
/// The synthetic vocabulary is split into a topic pool and a disjoint
/// off-topic pool. Every text comes from the topic pool, and so does every
/// matched caption; a fake article draws its caption from the off-topic pool
/// with probability `mismatch`. At `mismatch = 0` the two classes are
/// distributionally identical, so the only learnable fake signal is the
/// mismatch itself.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub size: usize,
    pub vocab_size: usize,
    pub mismatch: f64,
    pub seed: u64,
    pub text_len: (usize, usize),
    pub caption_len: (usize, usize),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            size: 400,
            vocab_size: 60,
            mismatch: 1.0,
            seed: 1,
            text_len: (16, 24),
            caption_len: (8, 12),
        }
    }
}

fn sample_words(rng: &mut SeededRng, pool: &[String], len: (usize, usize)) -> String {
    let n = rng.uniform_range(len.0, len.1);
    (0..n)
        .map(|_| pool[rng.uniform_below(pool.len())].clone())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic synthetic corpus; labels alternate so both classes appear on
/// both sides of any temporal split. Publication dates advance one day per
/// article.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Corpus> {
    if spec.size < 4 || !spec.size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "synthetic size must be even and >= 4, got {}",
            spec.size
        )));
    }
    if spec.vocab_size < 4 || !spec.vocab_size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "synthetic vocab size must be even and >= 4, got {}",
            spec.vocab_size
        )));
    }
    if !(0.0..=1.0).contains(&spec.mismatch) {
        return Err(Error::InvalidParameter(format!(
            "mismatch strength must be in [0, 1], got {}",
            spec.mismatch
        )));
    }

    let words: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i:03}")).collect();
    let (topic_pool, offtopic_pool) = words.split_at(spec.vocab_size / 2);
    let mut rng = SeededRng::stream(spec.seed, streams::SYNTH);
    let epoch_day = NaiveDate::from_ymd_opt(2020, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time");

    let articles = (0..spec.size)
        .map(|j| {
            let label = if j % 2 == 0 { Label::True } else { Label::Fake };
            let mismatched = label.is_fake() && rng.uniform_f64() < spec.mismatch;
            let caption_pool: &[String] = if mismatched {
                offtopic_pool
            } else {
                topic_pool
            };
            NewsArticle {
                id: format!("synth-{j:05}"),
                text: sample_words(&mut rng, topic_pool, spec.text_len),
                caption: sample_words(&mut rng, caption_pool, spec.caption_len),
                label,
                published_at: Some(epoch_day + Duration::days(j as i64)),
            }
        })
        .collect();

    Ok(Corpus {
        articles,
        provenance: format!(
            "synthetic(size={}, vocab={}, mismatch={}, seed={})",
            spec.size, spec.vocab_size, spec.mismatch, spec.seed
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn article(id: &str, day: u32, label: Label) -> NewsArticle {
        NewsArticle {
            id: id.to_string(),
            text: format!("text of {id}"),
            caption: format!("caption of {id}"),
            label,
            published_at: NaiveDate::from_ymd_opt(2020, 1, day)
                .unwrap()
                .and_hms_opt(0, 0, 0),
        }
    }

    fn corpus_of(n: usize) -> Corpus {
        Corpus {
            articles: (0..n)
                .map(|i| article(&format!("a{i:03}"), (i % 28) as u32 + 1, Label::True))
                .collect(),
            provenance: "test".into(),
        }
    }

    #[test]
    fn load_corpus_happy_path() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"id":"a","text":"T","caption":"C","label":1,"published_at":"2020-01-01"}}"#
        )
        .unwrap();
        writeln!(
            file,
            r#"{{"id":"b","text":"T","label":0,"published_at":"2020-01-02T10:30:00","extra":42}}"#
        )
        .unwrap();
        writeln!(
            file,
            r#"{{"id":"c","text":"T","caption":"","label":0,"published_at":"2020-01-03"}}"#
        )
        .unwrap();
        let corpus = load_corpus(file.path()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(corpus.articles[0].label.is_fake());
        assert!(!corpus.articles[1].has_caption());
        assert!(!corpus.articles[2].has_caption());
    }

    #[test]
    fn load_corpus_reports_bad_lines() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"id":"a","text":"T","label":1,"published_at":"2020-01-01"}}"#
        )
        .unwrap();
        writeln!(file, r#"{{"id":"b","text":"T","published_at":"2020-01-01"}}"#).unwrap();
        match load_corpus(file.path()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn load_corpus_rejects_bad_label_and_duplicate_id() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"id":"a","text":"T","label":2,"published_at":"2020-01-01"}}"#
        )
        .unwrap();
        assert!(matches!(
            load_corpus(file.path()),
            Err(Error::MalformedRecord { line: 1, .. })
        ));

        let mut file = tempfile::NamedTempFile::new().unwrap();
        for _ in 0..2 {
            writeln!(
                file,
                r#"{{"id":"a","text":"T","label":1,"published_at":"2020-01-01"}}"#
            )
            .unwrap();
        }
        assert!(matches!(
            load_corpus(file.path()),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn save_load_round_trip_preserves_fields() {
        let corpus = Corpus {
            articles: vec![
                article("a", 1, Label::Fake),
                NewsArticle {
                    caption: String::new(),
                    ..article("b", 2, Label::True)
                },
            ],
            provenance: "test".into(),
        };
        let file = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&corpus, file.path()).unwrap();
        let loaded = load_corpus(file.path()).unwrap();
        assert_eq!(loaded.articles, corpus.articles);
    }

    #[test]
    fn temporal_split_orders_and_floors() {
        let corpus = corpus_of(10);
        let (train, test) = temporal_split(&corpus, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let max_train = train.articles.iter().map(|a| a.published_at).max();
        let min_test = test.articles.iter().map(|a| a.published_at).min();
        assert!(max_train <= min_test);

        let (train, test) = temporal_split(&corpus_of(3), 0.5).unwrap();
        assert_eq!((train.len(), test.len()), (1, 2));
    }

    #[test]
    fn temporal_split_tie_break_by_id() {
        let mut corpus = corpus_of(4);
        for a in &mut corpus.articles {
            a.published_at = NaiveDate::from_ymd_opt(2020, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0);
        }
        let (train, _) = temporal_split(&corpus, 0.5).unwrap();
        let ids: Vec<&str> = train.articles.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(ids, vec!["a000", "a001"]);
    }

    #[test]
    fn temporal_split_preserves_multiset() {
        let corpus = corpus_of(7);
        let (train, test) = temporal_split(&corpus, 0.4).unwrap();
        let mut combined: Vec<String> = train
            .articles
            .iter()
            .chain(&test.articles)
            .map(|a| a.id.clone())
            .collect();
        combined.sort();
        let mut original: Vec<String> = corpus.articles.iter().map(|a| a.id.clone()).collect();
        original.sort();
        assert_eq!(combined, original);
    }

    #[test]
    fn temporal_split_missing_timestamp() {
        let mut corpus = corpus_of(3);
        corpus.articles[1].published_at = None;
        assert!(matches!(
            temporal_split(&corpus, 0.5),
            Err(Error::MissingTimestamp(_))
        ));
    }

    #[test]
    fn kfold_sizes_partition_and_determinism() {
        let corpus = corpus_of(10);
        let folds = kfold_split(&corpus, 5, 9).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|(_, v)| v.len() == 2));

        let mut seen: HashSet<String> = HashSet::new();
        for (train, val) in &folds {
            assert_eq!(train.len() + val.len(), corpus.len());
            for a in &val.articles {
                assert!(seen.insert(a.id.clone()), "article in two validation folds");
            }
        }
        assert_eq!(seen.len(), corpus.len());

        let again = kfold_split(&corpus, 5, 9).unwrap();
        for (a, b) in folds.iter().zip(&again) {
            assert_eq!(a.1.articles, b.1.articles);
        }
    }

    #[test]
    fn kfold_rejects_small_corpora() {
        assert!(matches!(
            kfold_split(&corpus_of(3), 5, 0),
            Err(Error::TooFewExamples { have: 3, need: 5 })
        ));
        assert!(matches!(
            kfold_split(&corpus_of(3), 1, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn synthetic_reproducible_and_balanced() {
        let spec = SynthSpec {
            size: 40,
            ..SynthSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.articles, b.articles);
        let fakes = a.articles.iter().filter(|x| x.label.is_fake()).count();
        assert_eq!(fakes, 20);
        assert!(a.articles.iter().all(|x| x.has_caption()));
    }

    #[test]
    fn synthetic_full_mismatch_means_disjoint_pools() {
        let spec = SynthSpec {
            size: 60,
            mismatch: 1.0,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        for a in &corpus.articles {
            let text: HashSet<&str> = a.text.split(' ').collect();
            let caption: HashSet<&str> = a.caption.split(' ').collect();
            let overlap = text.intersection(&caption).count();
            if a.label.is_fake() {
                assert_eq!(overlap, 0, "fake article {} shares tokens", a.id);
            }
        }
    }

    #[test]
    fn synthetic_zero_mismatch_makes_classes_indistinguishable() {
        // With no mismatch both labels draw captions from the topic pool,
        // so the (text, caption) pairing carries no label information.
        let spec = SynthSpec {
            size: 60,
            mismatch: 0.0,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let topic: HashSet<String> = (0..spec.vocab_size / 2).map(|i| format!("w{i:03}")).collect();
        for a in &corpus.articles {
            for token in a.text.split(' ').chain(a.caption.split(' ')) {
                assert!(topic.contains(token), "{} used off-topic {token}", a.id);
            }
        }
    }

    #[test]
    fn synthetic_rejects_bad_sizes() {
        for size in [3, 5] {
            let spec = SynthSpec {
                size,
                ..SynthSpec::default()
            };
            assert!(generate_synthetic(&spec).is_err());
        }
    }

    // Independent oracle: a bag-of-words overlap classifier must separate a
    // full-mismatch corpus almost perfectly, because fake captions share no
    // tokens with their texts.
    #[test]
    fn synthetic_overlap_oracle() {
        let spec = SynthSpec {
            size: 200,
            mismatch: 1.0,
            seed: 1,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let overlaps: Vec<usize> = corpus
            .articles
            .iter()
            .map(|a| {
                let text: HashSet<&str> = a.text.split(' ').collect();
                let caption: HashSet<&str> = a.caption.split(' ').collect();
                text.intersection(&caption).count()
            })
            .collect();
        let mut sorted = overlaps.clone();
        sorted.sort_unstable();
        let median = (sorted[99] + sorted[100]) as f64 / 2.0;
        let correct = corpus
            .articles
            .iter()
            .zip(&overlaps)
            .filter(|(a, &o)| ((o as f64) < median) == a.label.is_fake())
            .count();
        let accuracy = correct as f64 / corpus.len() as f64;
        assert!(accuracy >= 0.9, "overlap oracle accuracy {accuracy}");
    }
}
