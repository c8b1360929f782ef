//! Multi-head self-attention with pluggable relative position biases.
//!
//! The layer projects `L x d_model` inputs through one fused
//! `d_model -> 3 d_z` linear map, splits heads, and scores with
//! `q k^T / sqrt(d_z)` (the configured `d_z`, also in multi-head mode).
//! Relative information enters in one of three ways:
//!
//! - eRPE: a per-head `2L-1` scalar vector gathered into an `L x L`
//!   matrix and added to the attention weights *after* the softmax, so
//!   the mixed rows need not sum to 1;
//! - Shaw: clipped relative embeddings added inside the key dot product
//!   and again in the value mix;
//! - Vector: skewed `q P^T` scores added pre-softmax.

use std::sync::Arc;

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::encoding::relative::{abs_index_map, clip_index_map, offset_index_map, EMBED_INIT_SCALE};
use crate::error::{Error, Result};
use crate::tensor::{glorot, uniform, Tensor};

/// How the post-softmax eRPE bias mixes content: through the value
/// projections (default), or the literal reading that mixes the raw
/// inputs themselves (needs `d_model == d_z`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ErpeMixing {
    Values,
    RawInput,
}

/// Pure scaled dot-product scores: `e[i][j] = q_i . k_j / sqrt(d_z)`.
/// The divisor is the configured attention width, not the head width.
pub fn scaled_dot_scores(q: &Tensor, k: &Tensor, d_z: usize) -> Result<Tensor> {
    let (lq, dq) = q.dims2()?;
    let (lk, dk) = k.dims2()?;
    if dq != dk || lq != lk {
        return Err(Error::shape(
            "scaled_dot_scores",
            format!("q {:?} vs k {:?}", q.shape(), k.shape()),
        ));
    }
    if d_z == 0 {
        return Err(Error::InvalidArgument("d_z must be positive".into()));
    }
    Ok(q.matmul(&k.transposed()?)?.scale(1.0 / (d_z as f64).sqrt()))
}

/// Pure row softmax with max subtraction; rejects NaN input.
pub fn softmax_rows(e: &Tensor) -> Result<Tensor> {
    if e.has_nan() {
        return Err(Error::Numeric("softmax input contains NaN".into()));
    }
    let (r, c) = e.dims2()?;
    let mut out = Tensor::zeros(&[r, c]);
    for i in 0..r {
        let row = e.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..c {
            let v = (row[j] - m).exp();
            out.set2(i, j, v);
            denom += v;
        }
        for j in 0..c {
            let v = out.at2(i, j) / denom;
            out.set2(i, j, v);
        }
    }
    Ok(out)
}

/// Which relative bias a layer carries, with its parameters.
#[derive(Clone, Debug)]
pub enum RelParams {
    None,
    Erpe {
        /// `heads x (2L-1)` offset weights.
        weights: ParamId,
        map: Arc<Vec<u32>>,
    },
    Shaw {
        /// `(2 clip_k + 1) x d_z`, shared by key and value lookups.
        table: ParamId,
        clip_k: usize,
        map: Arc<Vec<u32>>,
    },
    Vector {
        /// `L x d_z`, row r encoding distance magnitude r.
        embeddings: ParamId,
        map: Arc<Vec<u32>>,
    },
}

/// Relative-encoding choice passed to [`AttentionLayer::new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RelKind {
    None,
    Shaw,
    Vector,
    Erpe,
}

#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub wqkv: ParamId,
    pub bqkv: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub relative: RelParams,
    pub length: usize,
    pub d_model: usize,
    pub d_z: usize,
    pub heads: usize,
    pub erpe_mixing: ErpeMixing,
}

impl AttentionLayer {
    /// Register a fresh layer's parameters in `store`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        length: usize,
        d_model: usize,
        d_z: usize,
        heads: usize,
        rel: RelKind,
        shaw_clip: Option<usize>,
        erpe_mixing: ErpeMixing,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        if heads == 0 || d_z % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_z = {d_z} must be divisible by heads = {heads}"
            )));
        }
        if length == 0 {
            return Err(Error::InvalidArgument("attention needs length >= 1".into()));
        }
        if rel == RelKind::Erpe && erpe_mixing == ErpeMixing::RawInput && d_model != d_z {
            return Err(Error::InvalidArgument(format!(
                "raw-input eRPE mixing needs d_model == d_z, got {d_model} vs {d_z}"
            )));
        }
        let wqkv = store.add(
            format!("{prefix}.wqkv"),
            glorot(&[d_model, 3 * d_z], d_model, 3 * d_z, rng),
        );
        let bqkv = store.add(format!("{prefix}.bqkv"), Tensor::zeros(&[3 * d_z]));
        let w_out = store.add(
            format!("{prefix}.w_out"),
            glorot(&[d_z, d_model], d_z, d_model, rng),
        );
        let b_out = store.add(format!("{prefix}.b_out"), Tensor::zeros(&[d_model]));
        let relative = match rel {
            RelKind::None => RelParams::None,
            RelKind::Erpe => RelParams::Erpe {
                weights: store.add(
                    format!("{prefix}.erpe_w"),
                    Tensor::zeros(&[heads, 2 * length - 1]),
                ),
                map: Arc::new(offset_index_map(length)),
            },
            RelKind::Shaw => {
                let k = shaw_clip.unwrap_or(length - 1);
                RelParams::Shaw {
                    table: store.add(
                        format!("{prefix}.shaw_table"),
                        uniform(&[2 * k + 1, d_z], -EMBED_INIT_SCALE, EMBED_INIT_SCALE, rng),
                    ),
                    clip_k: k,
                    map: Arc::new(clip_index_map(length, k)),
                }
            }
            RelKind::Vector => RelParams::Vector {
                embeddings: store.add(
                    format!("{prefix}.vector_p"),
                    uniform(&[length, d_z], -EMBED_INIT_SCALE, EMBED_INIT_SCALE, rng),
                ),
                map: Arc::new(abs_index_map(length)),
            },
        };
        Ok(AttentionLayer {
            wqkv,
            bqkv,
            w_out,
            b_out,
            relative,
            length,
            d_model,
            d_z,
            heads,
            erpe_mixing,
        })
    }

    /// Build the attention computation on `g` for input `x` (`L x d_model`).
    pub fn forward(&self, g: &mut Graph, x: Var, store: &ParamStore) -> Result<Var> {
        let (l, dm) = g.value(x).dims2()?;
        if dm != self.d_model {
            return Err(Error::shape(
                "attention",
                format!("input width {dm} vs d_model {}", self.d_model),
            ));
        }
        if l != self.length {
            return Err(Error::shape(
                "attention",
                format!("input length {l} vs layer length {}", self.length),
            ));
        }
        let d_z = self.d_z;
        let dh = d_z / self.heads;
        let scale = 1.0 / (d_z as f64).sqrt();

        let wqkv = g.param(store, self.wqkv);
        let bqkv = g.param(store, self.bqkv);
        let proj = g.matmul(x, wqkv)?;
        let qkv = g.add_row_broadcast(proj, bqkv)?;
        let q = g.slice_cols(qkv, 0, d_z)?;
        let k = g.slice_cols(qkv, d_z, d_z)?;
        let v = g.slice_cols(qkv, 2 * d_z, d_z)?;

        let mut heads_out = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let qk = g.matmul(qh, kt)?;

            let scores = match &self.relative {
                RelParams::Shaw { table, map, .. } => {
                    let tab = g.param(store, *table);
                    let tab_h = g.slice_cols(tab, h * dh, dh)?;
                    let tab_t = g.transpose(tab_h)?;
                    let qp = g.matmul(qh, tab_t)?;
                    let rel = g.gather_rows(qp, Arc::clone(map), l)?;
                    let sum = g.add(qk, rel)?;
                    g.scale(sum, scale)
                }
                RelParams::Vector { embeddings, map } => {
                    let p = g.param(store, *embeddings);
                    let p_h = g.slice_cols(p, h * dh, dh)?;
                    let p_t = g.transpose(p_h)?;
                    let qp = g.matmul(qh, p_t)?;
                    let srel = g.gather_rows(qp, Arc::clone(map), l)?;
                    let sum = g.add(qk, srel)?;
                    g.scale(sum, scale)
                }
                _ => g.scale(qk, scale),
            };
            let a = g.softmax_rows(scores)?;

            let head_out = match &self.relative {
                RelParams::None | RelParams::Vector { .. } => g.matmul(a, vh)?,
                RelParams::Erpe { weights, map } => {
                    let w_all = g.param(store, *weights);
                    let w_h = g.slice_rows(w_all, h, 1)?;
                    let wmat = g.gather_vec(w_h, Arc::clone(map), l, l)?;
                    let aw = g.add(a, wmat)?;
                    match self.erpe_mixing {
                        ErpeMixing::Values => g.matmul(aw, vh)?,
                        ErpeMixing::RawInput => {
                            let xh = g.slice_cols(x, h * dh, dh)?;
                            g.matmul(aw, xh)?
                        }
                    }
                }
                RelParams::Shaw { table, map, clip_k } => {
                    let base = g.matmul(a, vh)?;
                    let grouped = g.scatter_cols(a, Arc::clone(map), 2 * clip_k + 1)?;
                    let tab = g.param(store, *table);
                    let tab_h = g.slice_cols(tab, h * dh, dh)?;
                    let rel = g.matmul(grouped, tab_h)?;
                    g.add(base, rel)?
                }
            };
            heads_out.push(head_out);
        }
        let concat = g.concat_cols(&heads_out)?;
        let w_out = g.param(store, self.w_out);
        let b_out = g.param(store, self.b_out);
        let out = g.matmul(concat, w_out)?;
        g.add_row_broadcast(out, b_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_position_score_is_squared_norm_over_sqrt_dz() {
        let q = Tensor::new(vec![1, 4], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let e = scaled_dot_scores(&q, &q, 4).unwrap();
        let want = (1.0 + 4.0 + 1.0 + 0.25) / 2.0;
        assert!((e.at2(0, 0) - want).abs() < 1e-12);
    }

    #[test]
    fn zero_queries_give_zero_scores() {
        let q = Tensor::zeros(&[3, 4]);
        let k = uniform(&[3, 4], -1.0, 1.0, &mut crate::rng_from_seed(0));
        let e = scaled_dot_scores(&q, &k, 4).unwrap();
        assert_eq!(e, Tensor::zeros(&[3, 3]));
    }

    #[test]
    fn scores_match_triple_loop_oracle() {
        let (l, d) = (3usize, 4usize);
        let mut rng = crate::rng_from_seed(11);
        let q = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let k = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let e = scaled_dot_scores(&q, &k, d).unwrap();
        for i in 0..l {
            for j in 0..l {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += q.at2(i, t) * k.at2(j, t);
                }
                acc /= (d as f64).sqrt();
                assert!((e.at2(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_of_constant_rows_is_uniform() {
        let e = Tensor::full(&[2, 5], 3.7);
        let a = softmax_rows(&e).unwrap();
        for v in a.data() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_large_shifts() {
        // Row [x, x + 1000] must come out as about [0, 1] without overflow.
        let e = Tensor::new(vec![1, 2], vec![3.0, 1003.0]).unwrap();
        let a = softmax_rows(&e).unwrap();
        assert!(a.data().iter().all(|v| v.is_finite()));
        assert!(a.at2(0, 0) < 1e-300);
        assert!((a.at2(0, 1) - 1.0).abs() < 1e-12);
        // Exact check at a small scale: [0, ln 3] -> [1/4, 3/4].
        let e = Tensor::new(vec![1, 2], vec![0.0, 3f64.ln()]).unwrap();
        let a = softmax_rows(&e).unwrap();
        assert!((a.at2(0, 0) - 0.25).abs() < 1e-12);
        assert!((a.at2(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::rng_from_seed(7);
        let e = uniform(&[6, 6], -5.0, 5.0, &mut rng);
        let a = softmax_rows(&e).unwrap();
        for i in 0..6 {
            let s: f64 = a.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        let e = Tensor::new(vec![1, 2], vec![f64::NAN, 0.0]).unwrap();
        assert!(softmax_rows(&e).is_err());
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let q = Tensor::zeros(&[3, 4]);
        let k = Tensor::zeros(&[3, 5]);
        assert!(scaled_dot_scores(&q, &k, 4).is_err());
    }
}
