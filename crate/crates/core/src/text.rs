//! Text pipeline: tokenization, vocabulary, and word-embedding lookup.
//!
//! Raw strings (news bodies or image-derived captions) become sequences of
//! k-dimensional embedding vectors. Embeddings are frozen; the trainer never
//! updates them.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Vector};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Lowercase and split on whitespace, with ASCII punctuation broken out into
/// standalone tokens. Deterministic; applying it to its own joined output is a
/// fixed point.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_ascii_punctuation() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.extend(ch.to_lowercase());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Token/index bijection with reserved `<pad>` (0) and `<unk>` (1) entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from token lists, keeping tokens with frequency >= `min_count`.
    /// Index assignment is deterministic: frequency descending, then
    /// lexicographic.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Self {
        assert!(min_count >= 1, "min_count must be >= 1");
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in corpus {
            for tok in doc {
                *counts.entry(tok.as_ref()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // PAD and UNK are always present
    }

    /// Index for a token, falling back to `<unk>`.
    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    /// SHA-256 over the newline-joined token list, hex encoded. Stored in
    /// model files to guard against evaluating with a different vocabulary.
    pub fn sha256_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = String;
    fn try_from(tokens: Vec<String>) -> std::result::Result<Self, String> {
        if tokens.len() < 2 || tokens[PAD_INDEX] != PAD_TOKEN || tokens[UNK_INDEX] != UNK_TOKEN {
            return Err("vocabulary must start with <pad>, <unk>".into());
        }
        let vocab = Vocabulary::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err("vocabulary contains duplicate tokens".into());
        }
        Ok(vocab)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.tokens
    }
}

/// Token indices plus the pre-padding length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    indices: Vec<usize>,
    original_len: usize,
}

impl TokenSequence {
    /// Encode tokens against a vocabulary: truncate to `max_len`, map
    /// out-of-vocabulary tokens to `<unk>`, right-pad with `<pad>` up to
    /// `min_len` (callers pass the largest convolution window here).
    pub fn encode<S: AsRef<str>>(
        tokens: &[S],
        vocab: &Vocabulary,
        max_len: usize,
        min_len: usize,
    ) -> Self {
        let kept = tokens.len().min(max_len);
        let mut indices: Vec<usize> = tokens[..kept]
            .iter()
            .map(|t| vocab.index_of(t.as_ref()))
            .collect();
        while indices.len() < min_len {
            indices.push(PAD_INDEX);
        }
        TokenSequence {
            indices,
            original_len: kept,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn padded_len(&self) -> usize {
        self.indices.len()
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }
}

/// Frozen embedding rows, one per vocabulary entry. The `<pad>` row is all
/// zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    rows: Vec<Vector>,
}

impl EmbeddingTable {
    /// Seeded-normal rows with scale 1/sqrt(k); `<pad>` forced to zero.
    pub fn random(vocab_len: usize, dim: usize, rng: &mut SeededRng) -> Self {
        assert!(dim >= 1, "embedding dim must be >= 1");
        let scale = 1.0 / (dim as f64).sqrt();
        let rows = (0..vocab_len)
            .map(|i| {
                if i == PAD_INDEX {
                    Vector::zeros(dim)
                } else {
                    rng.normal_vector(dim, scale)
                }
            })
            .collect();
        EmbeddingTable { dim, rows }
    }

    /// Load from a plain-text file, one `token v1 .. vk` line per row
    /// (single-space separated, UTF-8). Rows for in-vocabulary tokens are
    /// copied verbatim; tokens absent from the file fall back to seeded-normal
    /// rows with scale 1/sqrt(k). `<pad>` is always zero.
    pub fn from_file(
        path: &Path,
        vocab: &Vocabulary,
        dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut table = Self::random(vocab.len(), dim, rng);
        let file = File::open(path)?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line has a first field");
            let values: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| Error::MalformedEmbeddingFile {
                        line: lineno + 1,
                        reason: format!("non-numeric field {p:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::MalformedEmbeddingFile {
                    line: lineno + 1,
                    reason: format!("expected {dim} values, found {}", values.len()),
                });
            }
            if vocab.contains(token) {
                let idx = vocab.index_of(token);
                if idx != PAD_INDEX {
                    table.rows[idx] = Vector::new(values);
                }
            }
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, index: usize) -> &Vector {
        &self.rows[index]
    }
}

/// One k-vector per padded position; `<pad>` positions map to zero vectors.
pub fn embed_sequence(
    seq: &TokenSequence,
    table: &EmbeddingTable,
    expected_dim: usize,
) -> Result<Vec<Vector>> {
    if table.dim() != expected_dim {
        return Err(Error::DimensionMismatch {
            context: "embed_sequence",
            expected: expected_dim,
            actual: table.dim(),
        });
    }
    Ok(seq
        .indices()
        .iter()
        .map(|&i| table.row(i).clone())
        .collect())
}
