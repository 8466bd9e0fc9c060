//! Minimal forward-only network primitives on f32 matrices. Rows are tokens,
//! columns are feature dimensions. Dropout layers from the training recipe
//! are identities at inference and are not represented.

use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2};

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Fully connected layer; `weight` is [out, in].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl LinearWeights {
    pub fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn out_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn in_features(&self) -> usize {
        self.weight.ncols()
    }
}

/// Layer-norm scale/shift over the feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct NormWeights {
    pub scale: Array1<f32>,
    pub shift: Array1<f32>,
}

/// Row-wise standardization: mean 0, variance 1 (biased), before scale/shift.
pub fn standardize_rows(x: &Array2<f32>, eps: f32) -> Array2<f32> {
    let d = x.ncols() as f32;
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / d;
        let mut var = 0.0f32;
        for v in row.iter() {
            let t = v - mean;
            var += t * t;
        }
        var /= d;
        let inv = 1.0 / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

pub fn layer_norm(x: &Array2<f32>, w: &NormWeights) -> Array2<f32> {
    let mut out = standardize_rows(x, LAYER_NORM_EPS);
    for mut row in out.rows_mut() {
        row.zip_mut_with(&w.scale, |v, s| *v *= s);
        row.zip_mut_with(&w.shift, |v, b| *v += b);
    }
    out
}

/// Numerically stable row softmax.
pub fn softmax_rows(x: &mut Array2<f32>) {
    for mut row in x.rows_mut() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|v| v / sum);
    }
}

pub fn relu_inplace(x: &mut Array2<f32>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Q/K/V/output projections of one attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub q: LinearWeights,
    pub k: LinearWeights,
    pub v: LinearWeights,
    pub out: LinearWeights,
}

fn check_attention_dims(
    w: &AttentionWeights,
    q_in: &Array2<f32>,
    kv_in: &Array2<f32>,
    n_heads: usize,
) -> Result<usize> {
    let d = w.q.in_features();
    if q_in.ncols() != d || kv_in.ncols() != d {
        return Err(Error::BadDims(format!(
            "attention expects {d}-dim tokens, got {} / {}",
            q_in.ncols(),
            kv_in.ncols()
        )));
    }
    if d % n_heads != 0 {
        return Err(Error::BadDims(format!("{d} dims not divisible into {n_heads} heads")));
    }
    Ok(d / n_heads)
}

/// Scaled dot-product multi-head attention. `q_in` supplies the queries,
/// `kv_in` the keys and values (pass the same matrix for self-attention).
pub fn multi_head_attention(
    w: &AttentionWeights,
    q_in: &Array2<f32>,
    kv_in: &Array2<f32>,
    n_heads: usize,
) -> Result<Array2<f32>> {
    let dh = check_attention_dims(w, q_in, kv_in, n_heads)?;
    let q = w.q.forward(q_in);
    let k = w.k.forward(kv_in);
    let v = w.v.forward(kv_in);
    let mut concat = Array2::<f32>::zeros((q_in.nrows(), n_heads * dh));
    let scale = 1.0 / (dh as f32).sqrt();
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        softmax_rows(&mut scores);
        let head_out = scores.dot(&v.slice(cols));
        concat.slice_mut(cols).assign(&head_out);
    }
    Ok(w.out.forward(&concat))
}

/// Per-head attention probability matrices (rows sum to 1); diagnostic twin
/// of [`multi_head_attention`].
pub fn attention_probs(
    w: &AttentionWeights,
    q_in: &Array2<f32>,
    kv_in: &Array2<f32>,
    n_heads: usize,
) -> Result<Vec<Array2<f32>>> {
    let dh = check_attention_dims(w, q_in, kv_in, n_heads)?;
    let q = w.q.forward(q_in);
    let k = w.k.forward(kv_in);
    let scale = 1.0 / (dh as f32).sqrt();
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        softmax_rows(&mut scores);
        probs.push(scores);
    }
    Ok(probs)
}

pub fn sigmoid32(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_linear(rng: &mut ChaCha8Rng, out_f: usize, in_f: usize) -> LinearWeights {
        LinearWeights {
            weight: Array2::from_shape_fn((out_f, in_f), |_| rng.gen_range(-0.05..0.05)),
            bias: Array1::from_shape_fn(out_f, |_| rng.gen_range(-0.05..0.05)),
        }
    }

    fn random_attention(rng: &mut ChaCha8Rng, d: usize) -> AttentionWeights {
        AttentionWeights {
            q: random_linear(rng, d, d),
            k: random_linear(rng, d, d),
            v: random_linear(rng, d, d),
            out: random_linear(rng, d, d),
        }
    }

    #[test]
    fn linear_shapes_and_values() {
        let w = LinearWeights {
            weight: ndarray::array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            bias: ndarray::array![0.5, -0.5, 0.0],
        };
        let x = ndarray::array![[1.0, 1.0]];
        let y = w.forward(&x);
        assert_eq!(y, ndarray::array![[3.5, 6.5, 11.0]]);
    }

    #[test]
    fn standardized_rows_have_zero_mean_unit_var() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((5, 64), |_| rng.gen_range(-2.0f32..2.0));
        let z = standardize_rows(&x, 1e-9);
        for row in z.rows() {
            let mean = row.sum() / 64.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 64.0;
            assert!(mean.abs() < 1e-5, "mean={mean}");
            assert!((var - 1.0).abs() < 1e-4, "var={var}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Array2::from_shape_fn((7, 13), |_| rng.gen_range(-5.0f32..5.0));
        softmax_rows(&mut x);
        for row in x.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_probs_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_attention(&mut rng, 32);
        let q = Array2::from_shape_fn((6, 32), |_| rng.gen_range(-1.0f32..1.0));
        let kv = Array2::from_shape_fn((11, 32), |_| rng.gen_range(-1.0f32..1.0));
        for head in attention_probs(&w, &q, &kv, 4).unwrap() {
            assert_eq!(head.nrows(), 6);
            assert_eq!(head.ncols(), 11);
            for row in head.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn attention_preserves_query_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = random_attention(&mut rng, 32);
        let q = Array2::from_shape_fn((3, 32), |_| rng.gen_range(-1.0f32..1.0));
        let kv = Array2::from_shape_fn((9, 32), |_| rng.gen_range(-1.0f32..1.0));
        let out = multi_head_attention(&w, &q, &kv, 4).unwrap();
        assert_eq!(out.dim(), (3, 32));
    }

    #[test]
    fn attention_rejects_bad_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_attention(&mut rng, 32);
        let q = Array2::<f32>::zeros((3, 16));
        let kv = Array2::<f32>::zeros((9, 32));
        assert!(matches!(multi_head_attention(&w, &q, &kv, 4), Err(Error::BadDims(_))));
    }
}
