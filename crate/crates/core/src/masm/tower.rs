use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{MasmParameters, ModelConfig};
use super::{add_outer, dot, mat_vec, vec_mat};
use crate::corpus::{TextSequence, PAD};
use crate::error::{Error, Result};
use crate::math;

const L1_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tower {
    Query,
    Product,
}

/// `h × d` aspect vectors of one text.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectVectors {
    pub h: usize,
    pub d: usize,
    pub data: Vec<f64>,
    pub owner: Tower,
}

impl AspectVectors {
    pub fn zeros(h: usize, d: usize, owner: Tower) -> Self {
        Self {
            h,
            d,
            data: vec![0.0; h * d],
            owner,
        }
    }

    pub fn aspect(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Activations kept for the backward pass. Only the `n = valid_len`
/// leading positions are materialized; padded positions contribute exact
/// zeros and are never computed.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerTrace {
    pub tower: Tower,
    pub ids: Vec<u32>,
    /// `n × d` projected embeddings.
    proj: Vec<f64>,
    /// `n × d` attention queries and keys.
    att_q: Vec<f64>,
    att_k: Vec<f64>,
    /// `n × n` pre-activation attention scores.
    scores: Vec<f64>,
    /// Column means of the rectified attention map over the `n` valid rows.
    col_mean: Vec<f64>,
    /// `h × n` convolved attention before optional normalization.
    alpha_raw: Vec<f64>,
    /// `h × n` attention weights applied to `proj`.
    alpha: Vec<f64>,
    /// Per-aspect L1 norms (only when normalization is on).
    l1: Vec<f64>,
    pub aspects: AspectVectors,
}

impl TowerTrace {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `h × n` attention weights.
    pub fn attention(&self) -> &[f64] {
        &self.alpha
    }
}

pub fn encode_tower(seq: &TextSequence, params: &MasmParameters, tower: Tower) -> Result<AspectVectors> {
    Ok(encode_tower_traced(seq, params, tower)?.aspects)
}

pub fn encode_tower_traced(seq: &TextSequence, params: &MasmParameters, tower: Tower) -> Result<TowerTrace> {
    seq.check()?;
    let c = &params.config;
    let ids = seq.valid_ids().to_vec();
    if let Some(bad) = ids.iter().find(|&&id| id as usize >= c.vocab_size) {
        return Err(Error::Shape(format!(
            "token id {bad} outside vocabulary of {}",
            c.vocab_size
        )));
    }
    let tp = params.tower(tower);
    let (n, d, h, w) = (ids.len(), c.d, c.h, c.w);
    let half = w / 2;

    let mut proj = vec![0.0; n * d];
    for (t, &id) in ids.iter().enumerate() {
        let row = &mut proj[t * d..(t + 1) * d];
        vec_mat(params.embedding.row(id as usize), &tp.proj_w.data, d, row);
        for (x, b) in row.iter_mut().zip(&tp.proj_b.data) {
            *x = math::tanh(*x + b);
        }
    }

    let mut att_q = vec![0.0; n * d];
    let mut att_k = vec![0.0; n * d];
    for t in 0..n {
        let e = &proj[t * d..(t + 1) * d];
        vec_mat(e, &tp.w_q.data, d, &mut att_q[t * d..(t + 1) * d]);
        vec_mat(e, &tp.w_k.data, d, &mut att_k[t * d..(t + 1) * d]);
    }

    let mut scores = vec![0.0; n * n];
    let mut col_mean = vec![0.0; n];
    for r in 0..n {
        let qr = &att_q[r * d..(r + 1) * d];
        for j in 0..n {
            let s = dot(qr, &att_k[j * d..(j + 1) * d]);
            scores[r * n + j] = s;
            if s > 0.0 {
                col_mean[j] += s;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    col_mean.iter_mut().for_each(|m| *m *= inv_n);

    // Same-padded convolution of every attention row; by linearity the row
    // average commutes with the convolution.
    let mut alpha_raw = vec![0.0; h * n];
    for k in 0..h {
        let taps = &tp.kernels.data[k * w..(k + 1) * w];
        for j in 0..n {
            let mut acc = 0.0;
            for (o, tap) in taps.iter().enumerate() {
                let src = j + o;
                if src >= half && src - half < n {
                    acc += tap * col_mean[src - half];
                }
            }
            alpha_raw[k * n + j] = acc;
        }
    }

    let (alpha, l1) = if c.l1_normalize_aspects {
        let mut alpha = alpha_raw.clone();
        let mut l1 = vec![0.0; h];
        for k in 0..h {
            let row = &mut alpha[k * n..(k + 1) * n];
            let norm: f64 = row.iter().map(|x| x.abs()).sum::<f64>() + L1_EPS;
            row.iter_mut().for_each(|x| *x /= norm);
            l1[k] = norm;
        }
        (alpha, l1)
    } else {
        (alpha_raw.clone(), Vec::new())
    };

    let mut aspects = AspectVectors::zeros(h, d, tower);
    for k in 0..h {
        let out = &mut aspects.data[k * d..(k + 1) * d];
        for j in 0..n {
            let a = alpha[k * n + j];
            for (o, e) in out.iter_mut().zip(&proj[j * d..(j + 1) * d]) {
                *o += a * e;
            }
        }
    }

    Ok(TowerTrace {
        tower,
        ids,
        proj,
        att_q,
        att_k,
        scores,
        col_mean,
        alpha_raw,
        alpha,
        l1,
        aspects,
    })
}

/// Accumulates parameter gradients given `d_aspects` (`h × d`).
pub(crate) fn tower_backward(
    trace: &TowerTrace,
    d_aspects: &[f64],
    params: &MasmParameters,
    grads: &mut MasmParameters,
) {
    let c: &ModelConfig = &params.config;
    let tp = params.tower(trace.tower);
    let (n, d, h, w) = (trace.ids.len(), c.d, c.h, c.w);
    let half = w / 2;

    // aspects = alpha · proj
    let mut d_alpha = vec![0.0; h * n];
    let mut d_proj = vec![0.0; n * d];
    for k in 0..h {
        let g = &d_aspects[k * d..(k + 1) * d];
        for j in 0..n {
            let e = &trace.proj[j * d..(j + 1) * d];
            d_alpha[k * n + j] = dot(g, e);
            let a = trace.alpha[k * n + j];
            for (dp, gi) in d_proj[j * d..(j + 1) * d].iter_mut().zip(g) {
                *dp += a * gi;
            }
        }
    }

    // optional L1 normalization
    let d_alpha_raw = if c.l1_normalize_aspects {
        let mut out = vec![0.0; h * n];
        for k in 0..h {
            let norm = trace.l1[k];
            let raw = &trace.alpha_raw[k * n..(k + 1) * n];
            let g = &d_alpha[k * n..(k + 1) * n];
            let inner = dot(g, raw);
            for j in 0..n {
                let sign = if raw[j] > 0.0 {
                    1.0
                } else if raw[j] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                out[k * n + j] = g[j] / norm - sign * inner / (norm * norm);
            }
        }
        out
    } else {
        d_alpha
    };

    // convolution over column means
    let gt = grads.tower_mut(trace.tower);
    let mut d_col_mean = vec![0.0; n];
    for k in 0..h {
        let taps = &tp.kernels.data[k * w..(k + 1) * w];
        let d_taps = &mut gt.kernels.data[k * w..(k + 1) * w];
        for j in 0..n {
            let g = d_alpha_raw[k * n + j];
            if g == 0.0 {
                continue;
            }
            for o in 0..w {
                let src = j + o;
                if src >= half && src - half < n {
                    d_taps[o] += g * trace.col_mean[src - half];
                    d_col_mean[src - half] += g * taps[o];
                }
            }
        }
    }

    // column mean of ReLU(scores); scores = att_q · att_k^T
    let inv_n = 1.0 / n as f64;
    let mut d_att_q = vec![0.0; n * d];
    let mut d_att_k = vec![0.0; n * d];
    for r in 0..n {
        for j in 0..n {
            if trace.scores[r * n + j] <= 0.0 {
                continue;
            }
            let g = d_col_mean[j] * inv_n;
            if g == 0.0 {
                continue;
            }
            for i in 0..d {
                d_att_q[r * d + i] += g * trace.att_k[j * d + i];
                d_att_k[j * d + i] += g * trace.att_q[r * d + i];
            }
        }
    }

    // att_q = proj · W_Q, att_k = proj · W_K
    let mut tmp = vec![0.0; d];
    for t in 0..n {
        let e = &trace.proj[t * d..(t + 1) * d];
        let gq = &d_att_q[t * d..(t + 1) * d];
        let gk = &d_att_k[t * d..(t + 1) * d];
        add_outer(&mut gt.w_q.data, e, gq);
        add_outer(&mut gt.w_k.data, e, gk);
        mat_vec(&tp.w_q.data, gq, &mut tmp);
        for (dp, x) in d_proj[t * d..(t + 1) * d].iter_mut().zip(&tmp) {
            *dp += x;
        }
        mat_vec(&tp.w_k.data, gk, &mut tmp);
        for (dp, x) in d_proj[t * d..(t + 1) * d].iter_mut().zip(&tmp) {
            *dp += x;
        }
    }

    // proj = tanh(E[id] · W_p + b_p)
    let mut d_pre = vec![0.0; d];
    let mut d_emb = vec![0.0; d];
    for (t, &id) in trace.ids.iter().enumerate() {
        for i in 0..d {
            let y = trace.proj[t * d + i];
            d_pre[i] = d_proj[t * d + i] * (1.0 - y * y);
        }
        let gt = grads.tower_mut(trace.tower);
        add_outer(&mut gt.proj_w.data, params.embedding.row(id as usize), &d_pre);
        for (b, g) in gt.proj_b.data.iter_mut().zip(&d_pre) {
            *b += g;
        }
        if id != PAD {
            mat_vec(&tp.proj_w.data, &d_pre, &mut d_emb);
            for (e, g) in grads.embedding.row_mut(id as usize).iter_mut().zip(&d_emb) {
                *e += g;
            }
        }
    }
}
