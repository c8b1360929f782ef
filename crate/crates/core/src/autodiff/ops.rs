//! Differentiable operations recorded on a [`Graph`].
//!
//! Each constructor validates shapes, computes the forward value, and
//! registers a closure that routes the output gradient to the inputs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{GradSink, Graph, Var};

const LN_EPS: f64 = 1e-5;

impl Graph {
    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let out = self.value(a).add(self.value(b))?;
        let v = self.push(out, self.requires[a.id] || self.requires[b.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink: &mut GradSink| {
                sink.add(a.id, g.clone());
                sink.add(b.id, g.clone());
            }),
        );
        Ok(v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let out = self.value(a).sub(self.value(b))?;
        let v = self.push(out, self.requires[a.id] || self.requires[b.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                sink.add(a.id, g.clone());
                sink.add(b.id, g.scale(-1.0));
            }),
        );
        Ok(v)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let v = self.push(out, self.requires[a.id] || self.requires[b.id]);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                sink.add(a.id, g.zip_map(&vals[b.id], |gv, bv| gv * bv).unwrap());
                sink.add(b.id, g.zip_map(&vals[a.id], |gv, av| gv * av).unwrap());
            }),
        );
        Ok(v)
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                sink.add(a.id, g.scale(s));
            }),
        );
        v
    }

    /// `a[i][j] + bias[j]` for a rank-2 `a` and rank-1 `bias`.
    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(a).dims2()?;
        if self.value(bias).shape() != [c] {
            return Err(Error::shape(
                "add_row_broadcast",
                format!("bias {:?} vs width {}", self.value(bias).shape(), c),
            ));
        }
        let mut out = self.value(a).clone();
        {
            let bdat: Vec<f64> = self.value(bias).data().to_vec();
            for i in 0..r {
                for j in 0..c {
                    out.data_mut()[i * c + j] += bdat[j];
                }
            }
        }
        let v = self.push(out, self.requires[a.id] || self.requires[bias.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                sink.add(a.id, g.clone());
                if let Some(db) = sink.entry(bias.id, &[c]) {
                    for i in 0..r {
                        for j in 0..c {
                            db.data_mut()[j] += g.data()[i * c + j];
                        }
                    }
                }
            }),
        );
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let out = self.value(a).matmul(self.value(b))?;
        let v = self.push(out, self.requires[a.id] || self.requires[b.id]);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                if sink.requires[a.id] {
                    let bt = vals[b.id].transposed().unwrap();
                    sink.add(a.id, g.matmul(&bt).unwrap());
                }
                if sink.requires[b.id] {
                    let at = vals[a.id].transposed().unwrap();
                    sink.add(b.id, at.matmul(g).unwrap());
                }
            }),
        );
        Ok(v)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let out = self.value(a).transposed()?;
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                sink.add(a.id, g.transposed().unwrap());
            }),
        );
        Ok(v)
    }

    /// Columns `[start, start+len)` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(a).dims2()?;
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) out of width {c}", start + len),
            ));
        }
        let mut out = Tensor::zeros(&[r, len]);
        for i in 0..r {
            let src = &self.value(a).data()[i * c + start..i * c + start + len];
            out.data_mut()[i * len..(i + 1) * len].copy_from_slice(src);
        }
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                if let Some(da) = sink.entry(a.id, &[r, c]) {
                    for i in 0..r {
                        for j in 0..len {
                            da.data_mut()[i * c + start + j] += g.data()[i * len + j];
                        }
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Rows `[start, start+len)` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(a).dims2()?;
        if start + len > r {
            return Err(Error::shape(
                "slice_rows",
                format!("[{start}, {}) out of height {r}", start + len),
            ));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new(vec![len, c], data)?;
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                if let Some(da) = sink.entry(a.id, &[r, c]) {
                    for (d, &gv) in da.data_mut()[start * c..(start + len) * c]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *d += gv;
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Horizontal concatenation of rank-2 tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.check_live()?;
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_cols of nothing".into()));
        }
        let r = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0usize;
        for &p in parts {
            let (pr, pc) = self.value(p).dims2()?;
            if pr != r {
                return Err(Error::shape("concat_cols", format!("rows {pr} vs {r}")));
            }
            widths.push(pc);
            total += pc;
        }
        let mut out = Tensor::zeros(&[r, total]);
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            for i in 0..r {
                let src = &self.value(p).data()[i * w..(i + 1) * w];
                out.data_mut()[i * total + offset..i * total + offset + w].copy_from_slice(src);
            }
            offset += w;
        }
        let requires = parts.iter().any(|p| self.requires[p.id]);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let v = self.push(out, requires);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                let mut offset = 0;
                for (&id, &w) in ids.iter().zip(&widths) {
                    if let Some(dp) = sink.entry(id, &[r, w]) {
                        for i in 0..r {
                            for j in 0..w {
                                dp.data_mut()[i * w + j] += g.data()[i * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }),
        );
        Ok(v)
    }

    /// Same-length 1-D convolution of every input channel with every
    /// filter. Input `x` is `C x L`, weights are `F x K`, bias is `[F]`;
    /// the output is `(F*C) x L` with row `f*C + c`. Padding is on the
    /// left (`K-1` zeros), so output step `t` sees inputs `t-K+1 ..= t`
    /// and a kernel whose last tap is 1 acts as the identity.
    pub fn conv1d_same(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (c_in, l) = self.value(x).dims2()?;
        let (f, k) = self.value(w).dims2()?;
        if self.value(b).shape() != [f] {
            return Err(Error::shape(
                "conv1d_same",
                format!("bias {:?} vs filters {}", self.value(b).shape(), f),
            ));
        }
        if k == 0 || k > l {
            return Err(Error::shape(
                "conv1d_same",
                format!("kernel length {k} vs series length {l}"),
            ));
        }
        let mut out = Tensor::zeros(&[f * c_in, l]);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = self.value(b).data();
            for fi in 0..f {
                for ci in 0..c_in {
                    let orow = (fi * c_in + ci) * l;
                    for t in 0..l {
                        let mut acc = bv[fi];
                        let tau_min = (k - 1).saturating_sub(t);
                        for tau in tau_min..k {
                            let s = t + tau + 1 - k;
                            acc += wv[fi * k + tau] * xv[ci * l + s];
                        }
                        out.data_mut()[orow + t] = acc;
                    }
                }
            }
        }
        let requires =
            self.requires[x.id] || self.requires[w.id] || self.requires[b.id];
        let v = self.push(out, requires);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                let gd = g.data();
                if sink.requires[b.id] {
                    let mut db = vec![0.0; f];
                    for fi in 0..f {
                        for ci in 0..c_in {
                            let orow = (fi * c_in + ci) * l;
                            db[fi] += gd[orow..orow + l].iter().sum::<f64>();
                        }
                    }
                    if let Some(dbt) = sink.entry(b.id, &[f]) {
                        for (d, v) in dbt.data_mut().iter_mut().zip(db) {
                            *d += v;
                        }
                    }
                }
                if sink.requires[w.id] {
                    let xv = vals[x.id].data();
                    let mut dw = vec![0.0; f * k];
                    for fi in 0..f {
                        for ci in 0..c_in {
                            let orow = (fi * c_in + ci) * l;
                            for t in 0..l {
                                let gv = gd[orow + t];
                                if gv == 0.0 {
                                    continue;
                                }
                                let tau_min = (k - 1).saturating_sub(t);
                                for tau in tau_min..k {
                                    let s = t + tau + 1 - k;
                                    dw[fi * k + tau] += gv * xv[ci * l + s];
                                }
                            }
                        }
                    }
                    if let Some(dwt) = sink.entry(w.id, &[f, k]) {
                        for (d, v) in dwt.data_mut().iter_mut().zip(dw) {
                            *d += v;
                        }
                    }
                }
                if sink.requires[x.id] {
                    let wv = vals[w.id].data();
                    let mut dx = vec![0.0; c_in * l];
                    for fi in 0..f {
                        for ci in 0..c_in {
                            let orow = (fi * c_in + ci) * l;
                            for t in 0..l {
                                let gv = gd[orow + t];
                                if gv == 0.0 {
                                    continue;
                                }
                                let tau_min = (k - 1).saturating_sub(t);
                                for tau in tau_min..k {
                                    let s = t + tau + 1 - k;
                                    dx[ci * l + s] += gv * wv[fi * k + tau];
                                }
                            }
                        }
                    }
                    if let Some(dxt) = sink.entry(x.id, &[c_in, l]) {
                        for (d, v) in dxt.data_mut().iter_mut().zip(dx) {
                            *d += v;
                        }
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Row-wise softmax with max subtraction. NaN inputs are rejected.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(a).dims2()?;
        if self.value(a).has_nan() {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let mut out = Tensor::zeros(&[r, c]);
        for i in 0..r {
            let row = self.value(a).row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                out.data_mut()[i * c + j] = e;
                denom += e;
            }
            for j in 0..c {
                out.data_mut()[i * c + j] /= denom;
            }
        }
        let v = self.push(out, self.requires[a.id]);
        let out_id = v.id;
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                let y = &vals[out_id];
                let mut da = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    let gr = &g.data()[i * c..(i + 1) * c];
                    let yr = y.row(i);
                    let dot: f64 = gr.iter().zip(yr).map(|(&gv, &yv)| gv * yv).sum();
                    for j in 0..c {
                        da.data_mut()[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                sink.add(a.id, da);
            }),
        );
        Ok(v)
    }

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, a: Var) -> Var {
        const C0: f64 = 0.7978845608028654; // sqrt(2/pi)
        const C1: f64 = 0.044715;
        let out = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (C0 * (x + C1 * x * x * x)).tanh()));
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                let x = &vals[a.id];
                let dx = g
                    .zip_map(x, |gv, xv| {
                        let u = C0 * (xv + C1 * xv * xv * xv);
                        let th = u.tanh();
                        let sech2 = 1.0 - th * th;
                        gv * (0.5 * (1.0 + th)
                            + 0.5 * xv * sech2 * C0 * (1.0 + 3.0 * C1 * xv * xv))
                    })
                    .unwrap();
                sink.add(a.id, dx);
            }),
        );
        v
    }

    /// ELU activation with alpha = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > 0.0 { x } else { x.exp() - 1.0 });
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                let dx = g
                    .zip_map(&vals[a.id], |gv, xv| {
                        if xv > 0.0 {
                            gv
                        } else {
                            gv * xv.exp()
                        }
                    })
                    .unwrap();
                sink.add(a.id, dx);
            }),
        );
        v
    }

    /// Row-wise layer normalization with affine parameters.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(x).dims2()?;
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "gamma {:?} / beta {:?} vs width {}",
                    self.value(gamma).shape(),
                    self.value(beta).shape(),
                    c
                ),
            ));
        }
        let mut out = Tensor::zeros(&[r, c]);
        {
            let xv = self.value(x).data();
            let gv = self.value(gamma).data();
            let bv = self.value(beta).data();
            for i in 0..r {
                let row = &xv[i * c..(i + 1) * c];
                let mu = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
                let inv = 1.0 / (var + LN_EPS).sqrt();
                for j in 0..c {
                    out.data_mut()[i * c + j] = gv[j] * (row[j] - mu) * inv + bv[j];
                }
            }
        }
        let requires =
            self.requires[x.id] || self.requires[gamma.id] || self.requires[beta.id];
        let v = self.push(out, requires);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                let xv = vals[x.id].data();
                let gammav = vals[gamma.id].data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    let row = &xv[i * c..(i + 1) * c];
                    let gr = &g.data()[i * c..(i + 1) * c];
                    let mu = row.iter().sum::<f64>() / c as f64;
                    let var =
                        row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|&v| (v - mu) * inv).collect();
                    let dxhat: Vec<f64> =
                        gr.iter().zip(gammav).map(|(&gv, &ga)| gv * ga).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / c as f64;
                    let mean_dxhat_xhat = dxhat
                        .iter()
                        .zip(&xhat)
                        .map(|(&d, &h)| d * h)
                        .sum::<f64>()
                        / c as f64;
                    for j in 0..c {
                        dgamma[j] += gr[j] * xhat[j];
                        dbeta[j] += gr[j];
                        dx.data_mut()[i * c + j] =
                            inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                sink.add(x.id, dx);
                if let Some(dg) = sink.entry(gamma.id, &[c]) {
                    for (d, v) in dg.data_mut().iter_mut().zip(dgamma) {
                        *d += v;
                    }
                }
                if let Some(db) = sink.entry(beta.id, &[c]) {
                    for (d, v) in db.data_mut().iter_mut().zip(dbeta) {
                        *d += v;
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Per-sample normalization of conv feature maps: rows are grouped
    /// into `groups` consecutive blocks, statistics are taken over each
    /// block's cells, and each group has one scale/shift pair.
    pub fn instance_norm(
        &mut self,
        x: Var,
        groups: usize,
        gamma: Var,
        beta: Var,
    ) -> Result<Var> {
        self.check_live()?;
        let (r, l) = self.value(x).dims2()?;
        if groups == 0 || r % groups != 0 {
            return Err(Error::shape(
                "instance_norm",
                format!("{r} rows not divisible into {groups} groups"),
            ));
        }
        if self.value(gamma).shape() != [groups] || self.value(beta).shape() != [groups] {
            return Err(Error::shape(
                "instance_norm",
                format!("affine params must have shape [{groups}]"),
            ));
        }
        let rpg = r / groups;
        let n = rpg * l;
        let mut out = Tensor::zeros(&[r, l]);
        {
            let xv = self.value(x).data();
            let gv = self.value(gamma).data();
            let bv = self.value(beta).data();
            for g_idx in 0..groups {
                let lo = g_idx * rpg * l;
                let hi = lo + n;
                let cells = &xv[lo..hi];
                let mu = cells.iter().sum::<f64>() / n as f64;
                let var = cells.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
                let inv = 1.0 / (var + LN_EPS).sqrt();
                for (o, &v) in out.data_mut()[lo..hi].iter_mut().zip(cells) {
                    *o = gv[g_idx] * (v - mu) * inv + bv[g_idx];
                }
            }
        }
        let requires =
            self.requires[x.id] || self.requires[gamma.id] || self.requires[beta.id];
        let v = self.push(out, requires);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                let xv = vals[x.id].data();
                let gammav = vals[gamma.id].data();
                let mut dgamma = vec![0.0; groups];
                let mut dbeta = vec![0.0; groups];
                let mut dx = Tensor::zeros(&[r, l]);
                for g_idx in 0..groups {
                    let lo = g_idx * rpg * l;
                    let hi = lo + n;
                    let cells = &xv[lo..hi];
                    let gr = &g.data()[lo..hi];
                    let mu = cells.iter().sum::<f64>() / n as f64;
                    let var =
                        cells.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    let ga = gammav[g_idx];
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for (&gv, &xc) in gr.iter().zip(cells) {
                        let xhat = (xc - mu) * inv;
                        dgamma[g_idx] += gv * xhat;
                        dbeta[g_idx] += gv;
                        mean_dxhat += gv * ga;
                        mean_dxhat_xhat += gv * ga * xhat;
                    }
                    mean_dxhat /= n as f64;
                    mean_dxhat_xhat /= n as f64;
                    for (k, (&gv, &xc)) in gr.iter().zip(cells).enumerate() {
                        let xhat = (xc - mu) * inv;
                        dx.data_mut()[lo + k] =
                            inv * (gv * ga - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
                sink.add(x.id, dx);
                if let Some(dg) = sink.entry(gamma.id, &[groups]) {
                    for (d, v) in dg.data_mut().iter_mut().zip(dgamma) {
                        *d += v;
                    }
                }
                if let Some(db) = sink.entry(beta.id, &[groups]) {
                    for (d, v) in db.data_mut().iter_mut().zip(dbeta) {
                        *d += v;
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Gather from a flat weight vector into a rank-2 output:
    /// `out[i] = w[map[i]]`. The backward pass scatter-adds, so every
    /// output position using weight `m` contributes to `dw[m]`.
    pub fn gather_vec(
        &mut self,
        w: Var,
        map: Arc<Vec<u32>>,
        rows: usize,
        cols: usize,
    ) -> Result<Var> {
        self.check_live()?;
        let wn = self.value(w).numel();
        if map.len() != rows * cols {
            return Err(Error::shape(
                "gather_vec",
                format!("index map has {} entries, want {}", map.len(), rows * cols),
            ));
        }
        if let Some(&bad) = map.iter().find(|&&m| m as usize >= wn) {
            return Err(Error::shape(
                "gather_vec",
                format!("index {bad} out of range for {wn} weights"),
            ));
        }
        let wd = self.value(w).data();
        let data: Vec<f64> = map.iter().map(|&m| wd[m as usize]).collect();
        let out = Tensor::new(vec![rows, cols], data)?;
        let wshape = self.value(w).shape().to_vec();
        let map_b = Arc::clone(&map);
        let v = self.push(out, self.requires[w.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                if let Some(dw) = sink.entry(w.id, &wshape) {
                    for (&m, &gv) in map_b.iter().zip(g.data()) {
                        dw.data_mut()[m as usize] += gv;
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Per-row gather: `out[i][j] = src[i][map[i*cols + j]]`.
    pub fn gather_rows(
        &mut self,
        src: Var,
        map: Arc<Vec<u32>>,
        cols: usize,
    ) -> Result<Var> {
        self.check_live()?;
        let (r, v_cols) = self.value(src).dims2()?;
        if map.len() != r * cols {
            return Err(Error::shape(
                "gather_rows",
                format!("index map has {} entries, want {}", map.len(), r * cols),
            ));
        }
        if let Some(&bad) = map.iter().find(|&&m| m as usize >= v_cols) {
            return Err(Error::shape(
                "gather_rows",
                format!("index {bad} out of range for {v_cols} columns"),
            ));
        }
        let mut out = Tensor::zeros(&[r, cols]);
        {
            let sd = self.value(src).data();
            for i in 0..r {
                for j in 0..cols {
                    out.data_mut()[i * cols + j] =
                        sd[i * v_cols + map[i * cols + j] as usize];
                }
            }
        }
        let map_b = Arc::clone(&map);
        let v = self.push(out, self.requires[src.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                if let Some(ds) = sink.entry(src.id, &[r, v_cols]) {
                    for i in 0..r {
                        for j in 0..cols {
                            ds.data_mut()[i * v_cols + map_b[i * cols + j] as usize] +=
                                g.data()[i * cols + j];
                        }
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Per-row scatter-add into buckets: `out[i][map[i*cols+j]] += src[i][j]`.
    /// This is the adjoint of [`Graph::gather_rows`].
    pub fn scatter_cols(
        &mut self,
        src: Var,
        map: Arc<Vec<u32>>,
        buckets: usize,
    ) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(src).dims2()?;
        if map.len() != r * c {
            return Err(Error::shape(
                "scatter_cols",
                format!("index map has {} entries, want {}", map.len(), r * c),
            ));
        }
        if let Some(&bad) = map.iter().find(|&&m| m as usize >= buckets) {
            return Err(Error::shape(
                "scatter_cols",
                format!("bucket {bad} out of range {buckets}"),
            ));
        }
        let mut out = Tensor::zeros(&[r, buckets]);
        {
            let sd = self.value(src).data();
            for i in 0..r {
                for j in 0..c {
                    out.data_mut()[i * buckets + map[i * c + j] as usize] += sd[i * c + j];
                }
            }
        }
        let map_b = Arc::clone(&map);
        let v = self.push(out, self.requires[src.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                if let Some(ds) = sink.entry(src.id, &[r, c]) {
                    for i in 0..r {
                        for j in 0..c {
                            ds.data_mut()[i * c + j] +=
                                g.data()[i * buckets + map_b[i * c + j] as usize];
                        }
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Mean over rows (time axis): `L x D -> 1 x D`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(a).dims2()?;
        let mut out = Tensor::zeros(&[1, c]);
        for i in 0..r {
            for j in 0..c {
                out.data_mut()[j] += self.value(a).data()[i * c + j];
            }
        }
        for v in out.data_mut() {
            *v /= r as f64;
        }
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                if let Some(da) = sink.entry(a.id, &[r, c]) {
                    for i in 0..r {
                        for j in 0..c {
                            da.data_mut()[i * c + j] += g.data()[j] / r as f64;
                        }
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Column-wise max over rows (time axis): `L x D -> 1 x D`.
    /// Ties resolve to the earliest row, which keeps backward deterministic.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(a).dims2()?;
        if r == 0 {
            return Err(Error::shape("max_rows", "empty input"));
        }
        let mut out = Tensor::zeros(&[1, c]);
        let mut argmax = vec![0usize; c];
        for j in 0..c {
            let mut best = self.value(a).data()[j];
            for i in 1..r {
                let v = self.value(a).data()[i * c + j];
                if v > best {
                    best = v;
                    argmax[j] = i;
                }
            }
            out.data_mut()[j] = best;
        }
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                if let Some(da) = sink.entry(a.id, &[r, c]) {
                    for j in 0..c {
                        da.data_mut()[argmax[j] * c + j] += g.data()[j];
                    }
                }
            }),
        );
        Ok(v)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let shape = self.value(a).shape().to_vec();
        let v = self.push(out, self.requires[a.id]);
        self.record(
            v,
            Box::new(move |g, _vals, sink| {
                sink.add(a.id, Tensor::full(&shape, g.data()[0]));
            }),
        );
        v
    }

    /// Mean of all entries, as a scalar.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Cross-entropy of a `1 x c` logit row against a class index,
    /// computed via a stable log-sum-exp.
    pub fn cross_entropy_logits(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.check_live()?;
        let (r, c) = self.value(logits).dims2()?;
        if r != 1 {
            return Err(Error::shape(
                "cross_entropy_logits",
                format!("want a 1 x c row of logits, got {r} x {c}"),
            ));
        }
        if target >= c {
            return Err(Error::InvalidArgument(format!(
                "target class {target} out of range for {c} classes"
            )));
        }
        if !self.value(logits).all_finite() {
            return Err(Error::Numeric("non-finite logits in cross entropy".into()));
        }
        let z = self.value(logits).data();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let out = Tensor::scalar(lse - z[target]);
        let v = self.push(out, self.requires[logits.id]);
        self.record(
            v,
            Box::new(move |g, vals, sink| {
                let z = vals[logits.id].data();
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = z.iter().map(|&v| (v - m).exp()).sum();
                let gv = g.data()[0];
                let mut dz = Tensor::zeros(&[1, c]);
                for j in 0..c {
                    let p = (z[j] - m).exp() / denom;
                    dz.data_mut()[j] = gv * (p - if j == target { 1.0 } else { 0.0 });
                }
                sink.add(logits.id, dz);
            }),
        );
        Ok(v)
    }
}
