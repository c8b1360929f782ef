//! Relative position encodings and their cost accounting.
//!
//! eRPE keeps one trainable scalar per relative offset per head: a
//! vector of length `2L-1` from which the `L x L` bias matrix is
//! gathered as `B[i][j] = w[i - j + L]` (1-based), so `L^2` positions
//! are served by `O(L)` parameters and the materialized matrix is
//! constant along every diagonal. The Shaw and Vector baselines are the
//! embedding-based alternatives the ablations compare against.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{uniform, Tensor};

/// Initialization scale for the Shaw / Vector embedding tables.
pub const EMBED_INIT_SCALE: f64 = 0.02;

/// Index map for the eRPE gather: entry `(i, j)` holds the 0-based
/// position of offset `i - j` in a `2L-1` weight vector.
pub fn offset_index_map(length: usize) -> Vec<u32> {
    let l = length as i64;
    let mut map = Vec::with_capacity(length * length);
    for i in 0..l {
        for j in 0..l {
            map.push((i - j + l - 1) as u32);
        }
    }
    map
}

/// Index map for Shaw's clipped lookup: entry `(i, j)` is
/// `clip(i - j, -k, k) + k`, a row of a `2k+1`-row table.
pub fn clip_index_map(length: usize, clip_k: usize) -> Vec<u32> {
    let l = length as i64;
    let k = clip_k as i64;
    let mut map = Vec::with_capacity(length * length);
    for i in 0..l {
        for j in 0..l {
            let d = (i - j).clamp(-k, k);
            map.push((d + k) as u32);
        }
    }
    map
}

/// Index map for the skewed vector encoding: entry `(i, j)` is
/// `|i - j|`, a row of an `L`-row embedding table. The `L` embeddings
/// cover all `L x L` pairs by distance magnitude, which keeps the
/// alignment translation-equivariant for a bidirectional encoder.
pub fn abs_index_map(length: usize) -> Vec<u32> {
    let l = length as i64;
    let mut map = Vec::with_capacity(length * length);
    for i in 0..l {
        for j in 0..l {
            map.push((i - j).unsigned_abs() as u32);
        }
    }
    map
}

/// Per-head trainable scalar bias over relative offsets.
#[derive(Clone, Debug)]
pub struct RelativeBias {
    /// `heads x (2L-1)`; row `h` is head `h`'s offset weights.
    pub weights: Tensor,
    pub index_cache: Option<Arc<Vec<u32>>>,
    pub heads: usize,
    pub length: usize,
}

/// Zero-initialized eRPE weights: training starts at the bias-free
/// model. The seed is accepted for interface uniformity.
pub fn erpe_new(length: usize, heads: usize, _seed: u64) -> Result<RelativeBias> {
    if length == 0 || heads == 0 {
        return Err(Error::InvalidArgument(format!(
            "eRPE needs length >= 1 and heads >= 1, got L={length}, heads={heads}"
        )));
    }
    Ok(RelativeBias {
        weights: Tensor::zeros(&[heads, 2 * length - 1]),
        index_cache: None,
        heads,
        length,
    })
}

impl RelativeBias {
    /// Trainable scalars per head.
    pub fn params_per_head(&self) -> usize {
        2 * self.length - 1
    }

    /// Pre-compute and store the `L^2` gather indices. Idempotent;
    /// materializations made before and after caching are identical
    /// because the cache holds exactly the indices computed on the fly.
    pub fn cache_indices(&mut self) {
        if self.index_cache.is_none() {
            self.index_cache = Some(Arc::new(offset_index_map(self.length)));
        }
    }

    /// The cached map, or a freshly computed one.
    pub fn indices(&self) -> Arc<Vec<u32>> {
        match &self.index_cache {
            Some(m) => Arc::clone(m),
            None => Arc::new(offset_index_map(self.length)),
        }
    }

    /// Materialize one head's `L x L` bias matrix through the gather
    /// index path.
    pub fn materialize(&self, head: usize) -> Result<Tensor> {
        if head >= self.heads {
            return Err(Error::InvalidArgument(format!(
                "head {head} out of range for {} heads",
                self.heads
            )));
        }
        let map = self.indices();
        let row = self.weights.row(head);
        let data: Vec<f64> = map.iter().map(|&m| row[m as usize]).collect();
        Tensor::new(vec![self.length, self.length], data)
    }
}

/// Shaw-style clipped relative embeddings. One `(2k+1) x d_z` table is
/// shared by the key-side and value-side lookups; sharing keeps the
/// trainable count at `(2L-1) d_z` when `k = L-1`.
#[derive(Clone, Debug)]
pub struct ShawBias {
    table: Tensor,
    pub clip_k: usize,
    pub d_z: usize,
}

pub fn shaw_new(clip_k: usize, d_z: usize, seed: u64) -> Result<ShawBias> {
    if d_z == 0 {
        return Err(Error::InvalidArgument("Shaw bias needs d_z >= 1".into()));
    }
    let mut rng = crate::rng_from_seed(seed);
    Ok(ShawBias {
        table: uniform(
            &[2 * clip_k + 1, d_z],
            -EMBED_INIT_SCALE,
            EMBED_INIT_SCALE,
            &mut rng,
        ),
        clip_k,
        d_z,
    })
}

impl ShawBias {
    pub fn keys_table(&self) -> &Tensor {
        &self.table
    }

    pub fn values_table(&self) -> &Tensor {
        &self.table
    }

    pub fn keys_table_mut(&mut self) -> &mut Tensor {
        &mut self.table
    }

    pub fn rows(&self) -> usize {
        2 * self.clip_k + 1
    }

    pub fn params(&self) -> usize {
        self.table.numel()
    }
}

/// Pre-softmax Shaw scores: `e[i][j] = q_i . (k_j + P[clip(i-j)]) / sqrt(d_z)`.
/// The relative term is computed as `q P^T` (`L x (2k+1)`) and gathered
/// per pair, never materializing an `L x L x d_z` tensor.
pub fn shaw_attention_scores(q: &Tensor, k: &Tensor, bias: &ShawBias) -> Result<Tensor> {
    let (l, d) = q.dims2()?;
    let (lk, dk) = k.dims2()?;
    if lk != l || dk != d || d != bias.d_z {
        return Err(Error::shape(
            "shaw_attention_scores",
            format!("q {:?}, k {:?}, d_z {}", q.shape(), k.shape(), bias.d_z),
        ));
    }
    let scale = 1.0 / (bias.d_z as f64).sqrt();
    let qk = q.matmul(&k.transposed()?)?;
    let qp = q.matmul(&bias.keys_table().transposed()?)?; // L x (2k+1)
    let map = clip_index_map(l, bias.clip_k);
    let mut out = Tensor::zeros(&[l, l]);
    for i in 0..l {
        for j in 0..l {
            let rel = qp.at2(i, map[i * l + j] as usize);
            out.set2(i, j, (qk.at2(i, j) + rel) * scale);
        }
    }
    Ok(out)
}

/// Shaw value mixing: `z_i = sum_j alpha[i][j] (v_j + P[clip(i-j)])`.
/// The relative term groups attention mass by clipped offset first
/// (`L x (2k+1)`), then multiplies by the table once.
pub fn shaw_values_mix(alpha: &Tensor, v: &Tensor, bias: &ShawBias) -> Result<Tensor> {
    let (l, l2) = alpha.dims2()?;
    let (lv, d) = v.dims2()?;
    if l != l2 || lv != l || d != bias.d_z {
        return Err(Error::shape(
            "shaw_values_mix",
            format!("alpha {:?}, v {:?}, d_z {}", alpha.shape(), v.shape(), bias.d_z),
        ));
    }
    let base = alpha.matmul(v)?;
    let rows = bias.rows();
    let map = clip_index_map(l, bias.clip_k);
    let mut grouped = Tensor::zeros(&[l, rows]);
    for i in 0..l {
        for j in 0..l {
            let b = map[i * l + j] as usize;
            let cur = grouped.at2(i, b);
            grouped.set2(i, b, cur + alpha.at2(i, j));
        }
    }
    let rel = grouped.matmul(bias.values_table())?;
    base.add(&rel)
}

/// Skewed vector relative embeddings: `L x d_z`, row `r` encoding
/// distance magnitude `r`, shared across heads by column slices.
#[derive(Clone, Debug)]
pub struct VectorBias {
    pub embeddings: Tensor,
}

pub fn vector_new(length: usize, d_z: usize, seed: u64) -> Result<VectorBias> {
    if length == 0 || d_z == 0 {
        return Err(Error::InvalidArgument(
            "vector bias needs length >= 1 and d_z >= 1".into(),
        ));
    }
    let mut rng = crate::rng_from_seed(seed);
    Ok(VectorBias {
        embeddings: uniform(&[length, d_z], -EMBED_INIT_SCALE, EMBED_INIT_SCALE, &mut rng),
    })
}

impl VectorBias {
    pub fn params(&self) -> usize {
        self.embeddings.numel()
    }
}

/// Align a query-times-embedding product into offset positions:
/// given `qp[i][r] = q_i . P_r` (`L x L`), produce
/// `S_rel[i][j] = qp[i][|i-j|]`. Peak intermediate memory is the
/// `L x L` product plus the output, `O(L d_z + L^2)` cells overall,
/// instead of the `O(L^2 d_z)` a per-pair embedding tensor would take.
pub fn vector_skew(qp: &Tensor) -> Result<Tensor> {
    let (l, r) = qp.dims2()?;
    if r < l {
        return Err(Error::shape(
            "vector_skew",
            format!("need at least {l} embedding columns, got {r}"),
        ));
    }
    let map = abs_index_map(l);
    let mut out = Tensor::zeros(&[l, l]);
    for i in 0..l {
        for j in 0..l {
            out.set2(i, j, qp.at2(i, map[i * l + j] as usize));
        }
    }
    Ok(out)
}

/// Full vector-encoding relative score term from raw inputs:
/// `S_rel = skew(q P^T)`.
pub fn vector_srel(q: &Tensor, bias: &VectorBias) -> Result<Tensor> {
    let qp = q.matmul(&bias.embeddings.transposed()?)?;
    vector_skew(&qp)
}

/// Position-encoding methods compared by the cost accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tAPE")]
    Tape,
    #[serde(rename = "VanillaAPE")]
    VanillaApe,
    #[serde(rename = "Learned")]
    Learned,
    #[serde(rename = "Shaw")]
    Shaw,
    #[serde(rename = "Vector")]
    Vector,
    #[serde(rename = "eRPE")]
    Erpe,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Tape,
        Method::VanillaApe,
        Method::Learned,
        Method::Shaw,
        Method::Vector,
        Method::Erpe,
    ];

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "tape" => Ok(Method::Tape),
            "vanilla" | "vanillaape" => Ok(Method::VanillaApe),
            "learned" | "learn" => Ok(Method::Learned),
            "shaw" => Ok(Method::Shaw),
            "vector" => Ok(Method::Vector),
            "erpe" => Ok(Method::Erpe),
            other => Err(Error::InvalidArgument(format!(
                "unknown position-encoding method '{other}'"
            ))),
        }
    }
}

/// Parameter count, working-memory cells, and multiply-adds of one
/// encoding method at sequence length `L` and width `d_z` (absolute
/// methods read `d_z` as `d_model`). Counts are per head for the
/// relative methods; embedding tables are shared across heads.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ComplexityReport {
    pub method: Method,
    #[serde(rename = "L")]
    pub l: usize,
    pub d_z: usize,
    pub params: u64,
    pub memory_cells: u64,
    pub mult_adds: u64,
}

pub fn complexity_report(method: Method, l: usize, d_z: usize) -> ComplexityReport {
    let lu = l as u64;
    let d = d_z as u64;
    let (params, memory_cells, mult_adds) = match method {
        Method::Tape | Method::VanillaApe => (0, lu * d, lu * d),
        Method::Learned => (lu * d, lu * d, lu * d),
        Method::Shaw => ((2 * lu - 1) * d, lu * lu * d + lu * lu, lu * lu * d),
        Method::Vector => (lu * d, lu * d + lu * lu, lu * lu * d),
        Method::Erpe => (2 * lu - 1, lu + lu * lu, lu * lu),
    };
    ComplexityReport {
        method,
        l,
        d_z,
        params,
        memory_cells,
        mult_adds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent O(L^2) double-loop oracle for the eRPE bias matrix,
    /// straight from the 1-based index formula `w[i - j + L]`.
    fn naive_materialize(weights: &[f64], l: usize) -> Tensor {
        let mut out = Tensor::zeros(&[l, l]);
        for i in 1..=l {
            for j in 1..=l {
                let m = (i as i64 - j as i64 + l as i64) as usize; // 1-based
                out.set2(i - 1, j - 1, weights[m - 1]);
            }
        }
        out
    }

    #[test]
    fn hand_case_l2_matches_the_index_formula() {
        // weights [a, b, c] for L = 2 must materialize to [[b, a], [c, b]].
        let mut bias = erpe_new(2, 1, 0).unwrap();
        bias.weights = Tensor::new(vec![1, 3], vec![10.0, 20.0, 30.0]).unwrap();
        let b = bias.materialize(0).unwrap();
        assert_eq!(b.data(), &[20.0, 10.0, 30.0, 20.0]);
    }

    #[test]
    fn zero_weights_materialize_to_zero() {
        let bias = erpe_new(5, 2, 0).unwrap();
        assert_eq!(bias.materialize(1).unwrap(), Tensor::zeros(&[5, 5]));
    }

    #[test]
    fn gather_path_equals_naive_double_loop_exactly() {
        for l in [1usize, 2, 3, 7, 50] {
            let mut bias = erpe_new(l, 1, 0).unwrap();
            let mut rng = crate::rng_from_seed(l as u64);
            bias.weights = uniform(&[1, 2 * l - 1], -1.0, 1.0, &mut rng);
            let via_gather = bias.materialize(0).unwrap();
            let via_loop = naive_materialize(bias.weights.row(0), l);
            assert_eq!(via_gather, via_loop, "L = {l}");
        }
    }

    #[test]
    fn materialized_bias_is_constant_along_diagonals() {
        let mut bias = erpe_new(9, 1, 0).unwrap();
        let mut rng = crate::rng_from_seed(9);
        bias.weights = uniform(&[1, 17], -1.0, 1.0, &mut rng);
        let b = bias.materialize(0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(b.at2(i, j), b.at2(i + 1, j + 1));
            }
        }
        // The main diagonal reads the center element (position L, 1-based).
        assert_eq!(b.at2(3, 3), bias.weights.row(0)[8]);
    }

    #[test]
    fn sizes_follow_2l_minus_1() {
        let b = erpe_new(30, 1, 0).unwrap();
        assert_eq!(b.params_per_head(), 59);
        assert_eq!(b.weights.numel(), 59);
        let b = erpe_new(1, 4, 0).unwrap();
        assert_eq!(b.params_per_head(), 1);
        assert_eq!(b.weights.numel(), 4);
        let same = erpe_new(30, 2, 7).unwrap();
        assert_eq!(same.weights, erpe_new(30, 2, 7).unwrap().weights);
    }

    #[test]
    fn cached_and_uncached_materializations_are_identical() {
        let mut bias = erpe_new(12, 1, 0).unwrap();
        let mut rng = crate::rng_from_seed(12);
        bias.weights = uniform(&[1, 23], -1.0, 1.0, &mut rng);
        let before = bias.materialize(0).unwrap();
        bias.cache_indices();
        let cache = bias.index_cache.as_ref().unwrap().clone();
        assert_eq!(cache.len(), 12 * 12);
        let after = bias.materialize(0).unwrap();
        assert_eq!(before, after);
        bias.cache_indices();
        assert!(Arc::ptr_eq(&cache, bias.index_cache.as_ref().unwrap()));
    }

    #[test]
    fn head_out_of_range_is_an_error() {
        let bias = erpe_new(4, 2, 0).unwrap();
        assert!(bias.materialize(2).is_err());
    }

    /// Brute-force oracle that builds the full L x L x d relative
    /// tensor for Shaw's method.
    fn shaw_oracle(q: &Tensor, k: &Tensor, v: &Tensor, bias: &ShawBias) -> (Tensor, Tensor) {
        let (l, d) = q.dims2().unwrap();
        let kk = bias.clip_k as i64;
        let scale = 1.0 / (d as f64).sqrt();
        let mut scores = Tensor::zeros(&[l, l]);
        for i in 0..l {
            for j in 0..l {
                let row = ((i as i64 - j as i64).clamp(-kk, kk) + kk) as usize;
                let mut acc = 0.0;
                for t in 0..d {
                    acc += q.at2(i, t) * (k.at2(j, t) + bias.keys_table().at2(row, t));
                }
                scores.set2(i, j, acc * scale);
            }
        }
        // Row-softmax then the value mix with the per-pair value lookup.
        let mut alpha = Tensor::zeros(&[l, l]);
        for i in 0..l {
            let m = (0..l).map(|j| scores.at2(i, j)).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..l).map(|j| (scores.at2(i, j) - m).exp()).sum();
            for j in 0..l {
                alpha.set2(i, j, (scores.at2(i, j) - m).exp() / denom);
            }
        }
        let mut z = Tensor::zeros(&[l, d]);
        for i in 0..l {
            for j in 0..l {
                let row = ((i as i64 - j as i64).clamp(-kk, kk) + kk) as usize;
                for t in 0..d {
                    let cur = z.at2(i, t);
                    z.set2(
                        i,
                        t,
                        cur + alpha.at2(i, j) * (v.at2(j, t) + bias.values_table().at2(row, t)),
                    );
                }
            }
        }
        (scores, z)
    }

    fn softmax_rows_plain(e: &Tensor) -> Tensor {
        let (r, c) = e.dims2().unwrap();
        let mut out = Tensor::zeros(&[r, c]);
        for i in 0..r {
            let m = e.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = e.row(i).iter().map(|&v| (v - m).exp()).sum();
            for j in 0..c {
                out.set2(i, j, (e.at2(i, j) - m).exp() / denom);
            }
        }
        out
    }

    #[test]
    fn shaw_matches_the_full_tensor_oracle() {
        let (l, d) = (6usize, 4usize);
        let mut rng = crate::rng_from_seed(42);
        let q = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let k = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let v = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let mut bias = shaw_new(2, d, 5).unwrap();
        bias.table = uniform(&[5, d], -1.0, 1.0, &mut rng);

        let scores = shaw_attention_scores(&q, &k, &bias).unwrap();
        let alpha = softmax_rows_plain(&scores);
        let z = shaw_values_mix(&alpha, &v, &bias).unwrap();

        let (oracle_scores, oracle_z) = shaw_oracle(&q, &k, &v, &bias);
        for (a, b) in scores.data().iter().zip(oracle_scores.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in z.data().iter().zip(oracle_z.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_tables_reduce_shaw_to_vanilla_attention() {
        let (l, d) = (5usize, 3usize);
        let mut rng = crate::rng_from_seed(1);
        let q = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let k = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let v = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let mut bias = shaw_new(l - 1, d, 0).unwrap();
        bias.table = Tensor::zeros(&[2 * (l - 1) + 1, d]);

        let scores = shaw_attention_scores(&q, &k, &bias).unwrap();
        let vanilla = q.matmul(&k.transposed().unwrap()).unwrap().scale(1.0 / (d as f64).sqrt());
        assert_eq!(scores, vanilla);

        let alpha = softmax_rows_plain(&scores);
        let z = shaw_values_mix(&alpha, &v, &bias).unwrap();
        let plain = alpha.matmul(&v).unwrap();
        for (a, b) in z.data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn clip_zero_reads_one_row_and_shifts_scores_per_query() {
        // With k = 0 every pair uses the single center row, so the
        // relative term adds the constant q_i . p0 to row i.
        let (l, d) = (4usize, 3usize);
        let mut rng = crate::rng_from_seed(2);
        let q = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let k = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let mut bias = shaw_new(0, d, 0).unwrap();
        bias.table = uniform(&[1, d], -1.0, 1.0, &mut rng);
        let scores = shaw_attention_scores(&q, &k, &bias).unwrap();
        let vanilla = q.matmul(&k.transposed().unwrap()).unwrap().scale(1.0 / (d as f64).sqrt());
        let scale = 1.0 / (d as f64).sqrt();
        for i in 0..l {
            let shift: f64 = (0..d).map(|t| q.at2(i, t) * bias.table.at2(0, t)).sum();
            for j in 0..l {
                let want = vanilla.at2(i, j) + shift * scale;
                assert!((scores.at2(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clip_at_l_minus_1_is_inactive() {
        let (l, d) = (5usize, 2usize);
        let mut rng = crate::rng_from_seed(3);
        let q = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let k = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let table = uniform(&[2 * (l - 1) + 1, d], -1.0, 1.0, &mut rng);
        let mut clipped = shaw_new(l - 1, d, 0).unwrap();
        clipped.table = table.clone();
        // A wider table whose extra rows can never be selected at L = 5.
        let mut padded = shaw_new(l + 1, d, 0).unwrap();
        let mut wide = Tensor::zeros(&[2 * (l + 1) + 1, d]);
        for r in 0..table.shape()[0] {
            for c in 0..d {
                wide.set2(r + 2, c, table.at2(r, c));
            }
        }
        padded.table = wide;
        let a = shaw_attention_scores(&q, &k, &clipped).unwrap();
        let b = shaw_attention_scores(&q, &k, &padded).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn skew_places_each_sentinel_at_its_distance() {
        // Tag embedding row r with sentinel value 100 + r in component 0
        // and probe with unit queries: cell (i, j) must then hold the
        // sentinel of its own relative distance, matching a naive
        // per-pair lookup.
        let l = 4usize;
        let mut bias = vector_new(l, 2, 0).unwrap();
        let mut table = Tensor::zeros(&[l, 2]);
        for r in 0..l {
            table.set2(r, 0, 100.0 + r as f64);
        }
        bias.embeddings = table;
        let mut q = Tensor::zeros(&[l, 2]);
        for i in 0..l {
            q.set2(i, 0, 1.0);
        }
        let srel = vector_srel(&q, &bias).unwrap();
        for i in 0..l {
            for j in 0..l {
                let dist = (i as i64 - j as i64).unsigned_abs() as usize;
                assert_eq!(srel.at2(i, j), 100.0 + dist as f64, "({i}, {j})");
            }
        }
    }

    #[test]
    fn zero_embeddings_give_zero_srel() {
        let l = 5;
        let mut bias = vector_new(l, 3, 0).unwrap();
        bias.embeddings = Tensor::zeros(&[l, 3]);
        let mut rng = crate::rng_from_seed(4);
        let q = uniform(&[l, 3], -1.0, 1.0, &mut rng);
        assert_eq!(vector_srel(&q, &bias).unwrap(), Tensor::zeros(&[l, l]));
    }

    #[test]
    fn skew_matches_naive_per_pair_construction() {
        let (l, d) = (8usize, 5usize);
        let mut rng = crate::rng_from_seed(8);
        let q = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let mut bias = vector_new(l, d, 0).unwrap();
        bias.embeddings = uniform(&[l, d], -1.0, 1.0, &mut rng);
        let srel = vector_srel(&q, &bias).unwrap();
        // Naive O(L^2 d): per-pair embedding lookup and dot product.
        for i in 0..l {
            for j in 0..l {
                let dist = (i as i64 - j as i64).unsigned_abs() as usize;
                let want: f64 = (0..d).map(|t| q.at2(i, t) * bias.embeddings.at2(dist, t)).sum();
                assert!((srel.at2(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complexity_report_matches_the_published_formulas() {
        let shaw = complexity_report(Method::Shaw, 30, 64);
        assert_eq!(shaw.params, 59 * 64);
        assert_eq!(shaw.params, 3776);
        let erpe = complexity_report(Method::Erpe, 30, 64);
        assert_eq!(erpe.params, 59);
        assert_eq!(erpe.memory_cells, 30 + 900);
        assert_eq!(erpe.mult_adds, 900);
        let learned = complexity_report(Method::Learned, 30, 64);
        assert_eq!(learned.params, 1920);
        for m in [Method::Tape, Method::VanillaApe] {
            let r = complexity_report(m, 30, 64);
            assert_eq!(r.params, 0);
            assert_eq!(r.memory_cells, 30 * 64);
        }
        let vector = complexity_report(Method::Vector, 30, 64);
        assert_eq!(vector.params, 30 * 64);
        assert_eq!(vector.memory_cells, 30 * 64 + 900);
    }

    #[test]
    fn report_counts_match_live_objects() {
        let l = 30;
        let d = 64;
        let erpe = erpe_new(l, 1, 0).unwrap();
        assert_eq!(erpe.weights.numel() as u64, complexity_report(Method::Erpe, l, d).params);
        let shaw = shaw_new(l - 1, d, 0).unwrap();
        assert_eq!(shaw.params() as u64, complexity_report(Method::Shaw, l, d).params);
        let vector = vector_new(l, d, 0).unwrap();
        assert_eq!(vector.params() as u64, complexity_report(Method::Vector, l, d).params);
        let learned = crate::encoding::absolute::build_learned_ape(l, d, 0).unwrap();
        assert_eq!(
            learned.values.numel() as u64,
            complexity_report(Method::Learned, l, d).params
        );
    }

    #[test]
    fn complexity_json_uses_the_documented_keys() {
        let r = complexity_report(Method::Erpe, 30, 64);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"method":"eRPE","L":30,"d_z":64,"params":59,"memory_cells":930,"mult_adds":900}"#
        );
        let back: ComplexityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
