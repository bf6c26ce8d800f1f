//! Minimal dense vector/matrix arithmetic and seeded randomness.
//!
//! Everything is plain `f64`; gradient checking needs the headroom of 64-bit
//! floats. Matrices are row-major with explicit dimension checks on every
//! multiply, since shape bugs are the dominant failure mode when gradients
//! are derived by hand.
//!
//! Randomness is ChaCha20 seeded from a single `u64`. Independent deterministic
//! streams are derived with [`SeededRng::stream`] so that, say, parameter
//! initialization and epoch shuffling never perturb each other's draws.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense vector of finite `f64` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()), "non-finite entry");
        Vector(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot of unequal lengths");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * c).collect())
    }

    /// `self += c * other`, in place.
    pub fn add_scaled(&mut self, other: &Vector, c: f64) {
        assert_eq!(self.len(), other.len(), "add_scaled of unequal lengths");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "sub of unequal lengths");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector::new(v)
    }
}

/// Concatenation: `a`'s entries first, order preserved.
pub fn concat(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a.as_slice());
    out.extend_from_slice(b.as_slice());
    Vector(out)
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite entry");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `M v`, length `rows`.
    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.cols, v.len(), "matvec: cols != vector length");
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
        }
        Vector(out)
    }

    /// `Mᵀ v`, length `cols`.
    pub fn tr_matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.rows, v.len(), "tr_matvec: rows != vector length");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let vi = v[i];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        Vector(out)
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: &Vector, v: &Vector) -> Matrix {
        let mut data = Vec::with_capacity(u.len() * v.len());
        for a in u.iter() {
            for b in v.iter() {
                data.push(a * b);
            }
        }
        Matrix {
            rows: u.len(),
            cols: v.len(),
            data,
        }
    }

    /// `self += c * other`, in place.
    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "add_scaled of unequal shapes"
        );
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Numerically stable softmax (max subtraction). Output entries are positive
/// and sum to 1.
pub fn softmax(z: &Vector) -> Vector {
    assert!(!z.is_empty(), "softmax of an empty vector");
    let max = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Vector(exps.into_iter().map(|e| e / sum).collect())
}

/// Cosine similarity, in [-1, 1]. Errors on a zero-norm argument.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    assert_eq!(a.len(), b.len(), "cosine of unequal lengths");
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Stream ids for the independent RNG streams derived from the run seed.
pub mod streams {
    pub const TEXT_PARAMS: u64 = 1;
    pub const CAPTION_PARAMS: u64 = 2;
    pub const CLASSIFIER_PARAMS: u64 = 3;
    pub const EMBEDDINGS: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const KFOLD: u64 = 7;
    pub const GRADCHECK: u64 = 8;
}

/// Deterministic random source: ChaCha20 keyed by a 64-bit seed.
///
/// Identical seed and stream id give an identical draw sequence on every
/// platform and run.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Same key as `new(seed)` but an independent ChaCha stream.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { inner }
    }

    /// `n` pseudo-normal draws with mean 0 and standard deviation `scale`.
    pub fn normal_vector(&mut self, n: usize, scale: f64) -> Vector {
        assert!(n >= 1, "normal_vector needs n >= 1");
        assert!(scale > 0.0, "normal_vector needs scale > 0");
        let dist = Normal::new(0.0, scale).expect("finite positive scale");
        Vector((0..n).map(|_| dist.sample(&mut self.inner)).collect())
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
        let v = self.normal_vector(rows * cols, scale);
        Matrix::from_rows(rows, cols, v.0)
    }

    pub fn uniform_below(&mut self, bound: usize) -> usize {
        self.inner.random_range(0..bound)
    }

    pub fn uniform_range(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        self.inner.random_range(lo..=hi_inclusive)
    }

    pub fn uniform_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
