//! Absolute position encodings.
//!
//! Three table builders share one sinusoidal kernel:
//!
//! - vanilla sinusoidal tables with `w_k = 10000^(-2k/d_model)`;
//! - tAPE, which rescales every frequency by `d_model / L` so the table
//!   keeps distance awareness on long series and stays isotropic at low
//!   embedding dimensions (when `d_model == L` the scale is exactly 1
//!   and the two tables are bit-identical);
//! - learned tables, initialized small and trained like any parameter.
//!
//! Tables are immutable after construction; a learned table only
//! changes through the optimizer that owns its parameter store.

use crate::error::{Error, Result};
use crate::tensor::{uniform, Tensor};

/// Initialization scale for learned tables: uniform in [-0.02, 0.02].
pub const LEARNED_INIT_SCALE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbsKind {
    VanillaApe,
    Tape,
    Learned,
}

/// An `L x d_model` table of absolute position embeddings.
#[derive(Clone, Debug)]
pub struct PositionTable {
    pub values: Tensor,
    pub kind: AbsKind,
    pub trainable: bool,
}

impl PositionTable {
    pub fn length(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn d_model(&self) -> usize {
        self.values.shape()[1]
    }
}

fn check_dims(length: usize, d_model: usize, sinusoidal: bool) -> Result<()> {
    if length == 0 {
        return Err(Error::InvalidArgument("position table length must be >= 1".into()));
    }
    if d_model == 0 || (sinusoidal && d_model % 2 != 0) {
        return Err(Error::InvalidArgument(format!(
            "sinusoidal tables need an even positive d_model, got {d_model}"
        )));
    }
    Ok(())
}

/// Shared sinusoidal kernel: entry `(i, 2k) = sin(i * w_k * freq_scale)`
/// and `(i, 2k+1) = cos(...)`. Both sinusoidal builders go through this
/// one evaluation order, which is what makes the tAPE/vanilla equality
/// at `d_model == L` exact.
fn sinusoid_table(length: usize, d_model: usize, freq_scale: f64) -> Tensor {
    let mut t = Tensor::zeros(&[length, d_model]);
    for k in 0..d_model / 2 {
        let w = 10000f64.powf(-2.0 * k as f64 / d_model as f64) * freq_scale;
        for i in 0..length {
            let angle = i as f64 * w;
            t.set2(i, 2 * k, angle.sin());
            t.set2(i, 2 * k + 1, angle.cos());
        }
    }
    t
}

/// Fixed sinusoidal table with the original frequencies.
pub fn build_vanilla_ape(length: usize, d_model: usize) -> Result<PositionTable> {
    check_dims(length, d_model, true)?;
    Ok(PositionTable {
        values: sinusoid_table(length, d_model, 1.0),
        kind: AbsKind::VanillaApe,
        trainable: false,
    })
}

/// Sinusoidal table with frequencies rescaled by `d_model / L`.
pub fn build_tape(length: usize, d_model: usize) -> Result<PositionTable> {
    check_dims(length, d_model, true)?;
    let scale = d_model as f64 / length as f64;
    Ok(PositionTable {
        values: sinusoid_table(length, d_model, scale),
        kind: AbsKind::Tape,
        trainable: false,
    })
}

/// Trainable table, uniform in `[-0.02, 0.02]`, deterministic per seed.
pub fn build_learned_ape(length: usize, d_model: usize, seed: u64) -> Result<PositionTable> {
    check_dims(length, d_model, false)?;
    let mut rng = crate::rng_from_seed(seed);
    Ok(PositionTable {
        values: uniform(
            &[length, d_model],
            -LEARNED_INIT_SCALE,
            LEARNED_INIT_SCALE,
            &mut rng,
        ),
        kind: AbsKind::Learned,
        trainable: true,
    })
}

/// Add a position table to an input embedding of the same shape.
pub fn inject_absolute(x: &Tensor, table: &PositionTable) -> Result<Tensor> {
    if x.shape() != table.values.shape() {
        return Err(Error::shape(
            "inject_absolute",
            format!("input {:?} vs table {:?}", x.shape(), table.values.shape()),
        ));
    }
    x.add(&table.values)
}

/// Mean dot product between rows at every offset `K` in
/// `-(L-1) ..= L-1`: `curve[K] = mean_i dot(row_i, row_{i+K})` over the
/// valid `i`. Output has exactly `2L - 1` points.
pub fn similarity_curve(table: &PositionTable) -> Vec<(i64, f64)> {
    let (l, _d) = table.values.dims2().expect("tables are rank 2");
    let l = l as i64;
    let mut out = Vec::with_capacity((2 * l - 1) as usize);
    for k in -(l - 1)..=(l - 1) {
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..l {
            let j = i + k;
            if j < 0 || j >= l {
                continue;
            }
            let a = table.values.row(i as usize);
            let b = table.values.row(j as usize);
            acc += a.iter().zip(b).map(|(&x, &y)| x * y).sum::<f64>();
            count += 1;
        }
        out.push((k, acc / count as f64));
    }
    out
}

/// Mean cosine similarity between distinct rows; the anisotropy metric.
/// With `absolute` set, magnitudes are averaged instead of signed values.
pub fn mean_offdiag_cosine(table: &PositionTable, absolute: bool) -> f64 {
    let (l, _d) = table.values.dims2().expect("tables are rank 2");
    let norms: Vec<f64> = (0..l)
        .map(|i| {
            table
                .values
                .row(i)
                .iter()
                .map(|&v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..l {
        for j in 0..l {
            if i == j {
                continue;
            }
            let dot: f64 = table
                .values
                .row(i)
                .iter()
                .zip(table.values.row(j))
                .map(|(&x, &y)| x * y)
                .sum();
            let cos = dot / (norms[i] * norms[j]);
            acc += if absolute { cos.abs() } else { cos };
            count += 1;
        }
    }
    acc / count as f64
}

/// Count the increases (within `tol`) of a curve segment; 0 means the
/// segment is monotonically non-increasing.
pub fn monotonicity_violations(values: &[f64], tol: f64) -> usize {
    values
        .windows(2)
        .filter(|w| w[1] > w[0] + tol)
        .count()
}

/// Write a similarity curve as CSV: header `offset,dot_product`, one
/// row per offset, LF line endings.
pub fn curve_to_csv(curve: &[(i64, f64)]) -> String {
    let mut s = String::from("offset,dot_product\n");
    for (k, v) in curve {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}
