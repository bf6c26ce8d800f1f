//! Convolutional text encoder: one filter per window size slides over word
//! embeddings, ReLU activations are max-pooled over time, and an affine
//! projection maps the pooled features to the d-dimensional modality
//! representation. The same encoder is instantiated twice, once for body text
//! and once for image captions, with independent parameters.
//!
//! Every forward pass records the intermediates manual backprop needs: full
//! feature maps, pre-activations, and the argmax position of each pooled
//! value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng, Vector};

/// Initialization scale for filters and the projection.
pub const INIT_SCALE: f64 = 0.1;

/// One convolution filter over windows of `window` consecutive words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvFilter {
    pub window: usize,
    /// Flattened weights of length `window * k`.
    pub weights: Vector,
    pub bias: f64,
}

/// Parameters of one modality encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub filters: Vec<ConvFilter>,
    /// Projection, `latent_dim x filters.len()`.
    pub proj: Matrix,
    pub proj_bias: Vector,
}

impl EncoderParams {
    /// Seeded-normal filters and projection (scale 0.1), zero biases. One
    /// filter per window size times `per_window`.
    pub fn init(
        windows: &[usize],
        per_window: usize,
        embed_dim: usize,
        latent_dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(!windows.is_empty() && per_window >= 1);
        let mut filters = Vec::with_capacity(windows.len() * per_window);
        for &h in windows {
            for _ in 0..per_window {
                filters.push(ConvFilter {
                    window: h,
                    weights: rng.normal_vector(h * embed_dim, INIT_SCALE),
                    bias: 0.0,
                });
            }
        }
        let pooled_dim = filters.len();
        EncoderParams {
            filters,
            proj: rng.normal_matrix(latent_dim, pooled_dim, INIT_SCALE),
            proj_bias: Vector::zeros(latent_dim),
        }
    }

    /// Number of pooled features (projection columns).
    pub fn pooled_dim(&self) -> usize {
        self.filters.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.proj.rows()
    }

    pub fn check_shapes(&self, embed_dim: usize) -> Result<()> {
        for f in &self.filters {
            if f.weights.len() != f.window * embed_dim {
                return Err(Error::DimensionMismatch {
                    context: "encoder filter",
                    expected: f.window * embed_dim,
                    actual: f.weights.len(),
                });
            }
        }
        if self.proj.cols() != self.filters.len() {
            return Err(Error::DimensionMismatch {
                context: "encoder projection",
                expected: self.filters.len(),
                actual: self.proj.cols(),
            });
        }
        if self.proj_bias.len() != self.proj.rows() {
            return Err(Error::DimensionMismatch {
                context: "encoder projection bias",
                expected: self.proj.rows(),
                actual: self.proj_bias.len(),
            });
        }
        Ok(())
    }
}

/// Convolution outputs over all windows of one filter, plus the pooling
/// argmax (lowest index on ties).
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub argmax: usize,
}

/// Everything backprop needs from one encoder forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// The embedded input, one k-vector per padded position.
    pub embedded: Vec<Vector>,
    pub maps: Vec<FeatureMap>,
    /// Pooled activations, one per filter.
    pub pooled: Vector,
    /// The d-dimensional representation `proj * pooled + proj_bias`.
    pub output: Vector,
}

impl ForwardCache {
    /// Concatenated embeddings under the winning window of filter `f`.
    pub fn winning_window(&self, f: usize) -> Vector {
        let map = &self.maps[f];
        let h = self.window_of(f);
        window_at(&self.embedded, map.argmax, h)
    }

    fn window_of(&self, f: usize) -> usize {
        // window length recoverable from the map extent
        self.embedded.len() + 1 - self.maps[f].pre.len()
    }
}

/// Concatenation of `h` consecutive embeddings starting at `start`.
pub fn window_at(embedded: &[Vector], start: usize, h: usize) -> Vector {
    let k = embedded[0].len();
    let mut out = Vec::with_capacity(h * k);
    for e in &embedded[start..start + h] {
        out.extend_from_slice(e.as_slice());
    }
    Vector::new(out)
}

/// One filter application: pre-activation `w · x + b` and its ReLU.
pub fn convolve_window(filter: &Vector, bias: f64, window: &Vector) -> Result<(f64, f64)> {
    if filter.len() != window.len() {
        return Err(Error::DimensionMismatch {
            context: "convolve_window",
            expected: filter.len(),
            actual: window.len(),
        });
    }
    let pre = filter.dot(window) + bias;
    Ok((pre, pre.max(0.0)))
}

/// Slide `filter` over every window of the embedded sequence and pool.
pub fn feature_map(filter: &ConvFilter, embedded: &[Vector]) -> Result<FeatureMap> {
    let n = embedded.len();
    let h = filter.window;
    if n < h {
        return Err(Error::SequenceTooShort { len: n, window: h });
    }
    let mut pre = Vec::with_capacity(n - h + 1);
    let mut act = Vec::with_capacity(n - h + 1);
    for i in 0..=n - h {
        let (p, a) = convolve_window(&filter.weights, filter.bias, &window_at(embedded, i, h))?;
        pre.push(p);
        act.push(a);
    }
    let (_, argmax) = max_pool(&act)?;
    Ok(FeatureMap { pre, act, argmax })
}

/// Max-over-time pooling. Returns the maximum and the lowest index attaining
/// it.
pub fn max_pool(values: &[f64]) -> Result<(f64, usize)> {
    if values.is_empty() {
        return Err(Error::EmptyMap);
    }
    let mut best = values[0];
    let mut arg = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            arg = i;
        }
    }
    Ok((best, arg))
}

/// Full encoder forward pass: per-filter feature maps, pooling, projection.
pub fn encode(params: &EncoderParams, embedded: &[Vector]) -> Result<(Vector, ForwardCache)> {
    if embedded.is_empty() {
        return Err(Error::EmptyInput);
    }
    params.check_shapes(embedded[0].len())?;
    let maps: Vec<FeatureMap> = params
        .filters
        .iter()
        .map(|f| feature_map(f, embedded))
        .collect::<Result<_>>()?;
    let pooled = Vector::new(maps.iter().map(|m| m.act[m.argmax]).collect());
    let mut output = params.proj.matvec(&pooled);
    output.add_scaled(&params.proj_bias, 1.0);
    let cache = ForwardCache {
        embedded: embedded.to_vec(),
        maps,
        pooled,
        output: output.clone(),
    };
    Ok((output, cache))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(v: &[f64]) -> Vector {
        Vector::new(v.to_vec())
    }

    fn random_embedded(rng: &mut SeededRng, n: usize, k: usize) -> Vec<Vector> {
        (0..n).map(|_| rng.normal_vector(k, 1.0)).collect()
    }

    #[test]
    fn convolve_window_cases() {
        // zero filter: only the bias survives
        let (pre, act) = convolve_window(&Vector::zeros(2), 1.0, &vec_of(&[9.0, 9.0])).unwrap();
        assert_eq!((pre, act), (1.0, 1.0));
        // ReLU clamp
        let (pre, act) =
            convolve_window(&vec_of(&[1.0, 1.0]), -5.0, &vec_of(&[1.0, 1.0])).unwrap();
        assert_eq!((pre, act), (-3.0, 0.0));
        // plain dot product
        let (pre, act) = convolve_window(&vec_of(&[2.0, 0.0]), 0.0, &vec_of(&[3.0, 9.0])).unwrap();
        assert_eq!((pre, act), (6.0, 6.0));
        assert!(matches!(
            convolve_window(&Vector::zeros(2), 0.0, &Vector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn feature_map_counts() {
        let mut rng = SeededRng::new(4);
        let embedded = random_embedded(&mut rng, 5, 2);
        let filter = ConvFilter {
            window: 3,
            weights: rng.normal_vector(6, 1.0),
            bias: 0.0,
        };
        let map = feature_map(&filter, &embedded).unwrap();
        assert_eq!(map.pre.len(), 3); // n - h + 1

        let boundary = feature_map(
            &ConvFilter {
                window: 5,
                weights: rng.normal_vector(10, 1.0),
                bias: 0.0,
            },
            &embedded,
        )
        .unwrap();
        assert_eq!(boundary.pre.len(), 1);

        assert!(matches!(
            feature_map(
                &ConvFilter {
                    window: 6,
                    weights: rng.normal_vector(12, 1.0),
                    bias: 0.0,
                },
                &embedded,
            ),
            Err(Error::SequenceTooShort { len: 5, window: 6 })
        ));
    }

    #[test]
    fn feature_map_all_pad_is_zero() {
        let embedded = vec![Vector::zeros(2); 4];
        let filter = ConvFilter {
            window: 2,
            weights: vec_of(&[0.3, -0.7, 0.2, 0.9]),
            bias: 0.0,
        };
        let map = feature_map(&filter, &embedded).unwrap();
        assert!(map.act.iter().all(|&a| a == 0.0));
        assert_eq!(map.argmax, 0);
    }

    #[test]
    fn max_pool_cases() {
        assert_eq!(max_pool(&[3.0, 1.0, 2.0]).unwrap(), (3.0, 0));
        assert_eq!(max_pool(&[0.0, 0.0]).unwrap(), (0.0, 0));
        assert_eq!(max_pool(&[-0.0, 0.0]).unwrap(), (-0.0, 0));
        assert!(matches!(max_pool(&[]), Err(Error::EmptyMap)));
    }

    #[test]
    fn encode_zero_projection_gives_bias() {
        let mut rng = SeededRng::new(5);
        let embedded = random_embedded(&mut rng, 6, 3);
        let mut params = EncoderParams::init(&[2, 3], 1, 3, 4, &mut rng);
        params.proj = Matrix::zeros(4, 2);
        params.proj_bias = vec_of(&[1.0, 2.0, 3.0, 4.0]);
        let (out, _) = encode(&params, &embedded).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn encode_ones_column_broadcasts_pooled_value() {
        // Single window size, W a column of ones: representation = pooled value
        // in every coordinate.
        let embedded = vec![vec_of(&[2.0]), vec_of(&[0.5]), vec_of(&[1.0])];
        let params = EncoderParams {
            filters: vec![ConvFilter {
                window: 1,
                weights: vec_of(&[1.0]),
                bias: 0.0,
            }],
            proj: Matrix::from_rows(3, 1, vec![1.0, 1.0, 1.0]),
            proj_bias: Vector::zeros(3),
        };
        let (out, cache) = encode(&params, &embedded).unwrap();
        assert_eq!(cache.pooled.as_slice(), &[2.0]);
        assert_eq!(out.as_slice(), &[2.0, 2.0, 2.0]);
        assert_eq!(cache.maps[0].argmax, 0);
    }

    // Independent straight-line re-implementation of the whole encoder used
    // as an oracle: nested loops, no shared helpers.
    #[allow(clippy::needless_range_loop)]
    fn naive_encode(params: &EncoderParams, embedded: &[Vector]) -> Vec<f64> {
        let k = embedded[0].len();
        let mut pooled = Vec::new();
        for f in &params.filters {
            let h = f.window;
            let mut best = f64::NEG_INFINITY;
            for i in 0..=embedded.len() - h {
                let mut z = f.bias;
                for j in 0..h {
                    for c in 0..k {
                        z += f.weights[j * k + c] * embedded[i + j][c];
                    }
                }
                let a = if z > 0.0 { z } else { 0.0 };
                if a > best {
                    best = a;
                }
            }
            pooled.push(best);
        }
        let d = params.proj.rows();
        let g = params.proj.cols();
        let mut out = vec![0.0; d];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, p) in pooled.iter().enumerate().take(g) {
                acc += params.proj[(r, c)] * p;
            }
            *o = acc + params.proj_bias[r];
        }
        out
    }

    #[test]
    fn encode_matches_naive_oracle() {
        let mut rng = SeededRng::new(17);
        for _ in 0..20 {
            let n = 5 + rng.uniform_below(6);
            let embedded = random_embedded(&mut rng, n, 3);
            let params = EncoderParams::init(&[3, 4], 1, 3, 4, &mut rng);
            let (out, cache) = encode(&params, &embedded).unwrap();
            let naive = naive_encode(&params, &embedded);
            for (a, b) in out.iter().zip(&naive) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            // cached pairs respect the ReLU relation and the argmax invariant
            for map in &cache.maps {
                for (&p, &a) in map.pre.iter().zip(&map.act) {
                    assert_eq!(a, p.max(0.0));
                }
                assert!(map.act.iter().all(|&a| a <= map.act[map.argmax]));
            }
        }
    }

    #[test]
    fn encode_is_pure() {
        let mut rng = SeededRng::new(23);
        let embedded = random_embedded(&mut rng, 7, 3);
        let params = EncoderParams::init(&[2], 1, 3, 4, &mut rng);
        let (a, _) = encode(&params, &embedded).unwrap();
        let (b, _) = encode(&params, &embedded).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaling_filters_scales_pooled_values_keeps_argmax() {
        let mut rng = SeededRng::new(29);
        let embedded = random_embedded(&mut rng, 8, 3);
        let params = EncoderParams::init(&[2, 3], 1, 3, 4, &mut rng);
        let (_, cache) = encode(&params, &embedded).unwrap();

        let lambda = 2.0;
        let mut scaled = params.clone();
        for f in &mut scaled.filters {
            f.weights = f.weights.scaled(lambda);
            f.bias *= lambda;
        }
        let (_, scaled_cache) = encode(&scaled, &embedded).unwrap();
        for (orig, new) in cache.maps.iter().zip(&scaled_cache.maps) {
            assert_eq!(orig.argmax, new.argmax);
        }
        for (orig, new) in cache.pooled.iter().zip(scaled_cache.pooled.iter()) {
            assert!((new - lambda * orig).abs() < 1e-12);
        }
    }

    #[test]
    fn prepended_pad_never_decreases_pooled_values() {
        // Non-negative filters over non-negative embeddings: the old windows
        // all survive a one-position shift, so the max can only grow.
        let mut rng = SeededRng::new(31);
        let embedded: Vec<Vector> = (0..6)
            .map(|_| {
                Vector::new(
                    rng.normal_vector(3, 1.0)
                        .iter()
                        .map(|v| v.abs())
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let mut params = EncoderParams::init(&[2, 3], 1, 3, 2, &mut rng);
        for f in &mut params.filters {
            f.weights = Vector::new(f.weights.iter().map(|v| v.abs()).collect());
        }
        let (_, before) = encode(&params, &embedded).unwrap();

        let mut shifted = vec![Vector::zeros(3)];
        shifted.extend(embedded);
        let (_, after) = encode(&params, &shifted).unwrap();
        for (b, a) in before.pooled.iter().zip(after.pooled.iter()) {
            assert!(a >= b);
        }
    }

    #[test]
    fn winning_window_matches_argmax_position() {
        let mut rng = SeededRng::new(37);
        let embedded = random_embedded(&mut rng, 7, 2);
        let params = EncoderParams::init(&[3], 1, 2, 2, &mut rng);
        let (_, cache) = encode(&params, &embedded).unwrap();
        let expected = window_at(&embedded, cache.maps[0].argmax, 3);
        assert_eq!(cache.winning_window(0), expected);
    }
}
