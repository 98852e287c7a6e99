use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{HeadParams, MasmParameters};
use super::tower::AspectVectors;
use super::{add_outer, dot, mat_vec, vec_mat};
use crate::error::{Error, Result};
use crate::math;

/// `h × 4d` rows `[q_i, p_i, q_i + p_i, q_i - p_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRepr {
    pub h: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl InteractionRepr {
    pub fn row(&self, i: usize) -> &[f64] {
        let w = 4 * self.d;
        &self.data[i * w..(i + 1) * w]
    }
}

pub fn interact(q: &AspectVectors, p: &AspectVectors) -> Result<InteractionRepr> {
    if q.h != p.h || q.d != p.d || q.data.len() != q.h * q.d || p.data.len() != p.h * p.d {
        return Err(Error::Shape(format!(
            "aspect shapes {}x{} and {}x{} differ",
            q.h, q.d, p.h, p.d
        )));
    }
    let (h, d) = (q.h, q.d);
    let mut data = vec![0.0; h * 4 * d];
    for i in 0..h {
        let (qi, pi) = (q.aspect(i), p.aspect(i));
        let row = &mut data[i * 4 * d..(i + 1) * 4 * d];
        for j in 0..d {
            row[j] = qi[j];
            row[d + j] = pi[j];
            row[2 * d + j] = qi[j] + pi[j];
            row[3 * d + j] = qi[j] - pi[j];
        }
    }
    Ok(InteractionRepr { h, d, data })
}

/// Per-aspect hidden activations kept for backward.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub repr: InteractionRepr,
    /// `h × d` tanh outputs.
    hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutput {
    pub s_aspects: Vec<f64>,
    /// Pre-sigmoid pooled value.
    pub logit: f64,
    pub s_final: f64,
}

/// Aspect scores `tanh(r_i W1 + b1) · w2 + b2`, pooled as
/// `sigmoid(Σ u_i s_i + c)`.
pub fn score(repr: &InteractionRepr, params: &MasmParameters) -> Result<ScoreOutput> {
    Ok(score_traced(repr.clone(), params)?.0)
}

pub(crate) fn score_traced(repr: InteractionRepr, params: &MasmParameters) -> Result<(ScoreOutput, HeadTrace)> {
    let c = &params.config;
    if repr.h != c.h || repr.d != c.d || repr.data.len() != c.h * 4 * c.d {
        return Err(Error::Shape(format!(
            "interaction {}x{} does not match model h={} d={}",
            repr.h, 4 * repr.d, c.h, c.d
        )));
    }
    let hp: &HeadParams = &params.head;
    let (h, d) = (c.h, c.d);
    let mut hidden = vec![0.0; h * d];
    let mut s_aspects = vec![0.0; h];
    for i in 0..h {
        let a = &mut hidden[i * d..(i + 1) * d];
        vec_mat(repr.row(i), &hp.w1.data, d, a);
        for (x, b) in a.iter_mut().zip(&hp.b1.data) {
            *x = math::tanh(*x + b);
        }
        s_aspects[i] = dot(a, &hp.w2.data) + hp.b2.data[0];
    }
    let logit = dot(&s_aspects, &hp.pool_w.data) + hp.pool_b.data[0];
    let out = ScoreOutput {
        s_aspects,
        logit,
        s_final: math::sigmoid(logit),
    };
    Ok((out, HeadTrace { repr, hidden }))
}

/// Accumulates head gradients for `d_logit` and returns `(d_q, d_p)`, each `h × d`.
pub(crate) fn head_backward(
    trace: &HeadTrace,
    out: &ScoreOutput,
    d_logit: f64,
    params: &MasmParameters,
    grads: &mut MasmParameters,
) -> (Vec<f64>, Vec<f64>) {
    let (h, d) = (params.config.h, params.config.d);
    let hp = &params.head;
    let gh = &mut grads.head;
    gh.pool_b.data[0] += d_logit;
    let mut d_q = vec![0.0; h * d];
    let mut d_p = vec![0.0; h * d];
    let mut d_z = vec![0.0; d];
    let mut d_r = vec![0.0; 4 * d];
    for i in 0..h {
        gh.pool_w.data[i] += d_logit * out.s_aspects[i];
        let ds = d_logit * hp.pool_w.data[i];
        gh.b2.data[0] += ds;
        let a = &trace.hidden[i * d..(i + 1) * d];
        for j in 0..d {
            gh.w2.data[j] += ds * a[j];
            d_z[j] = ds * hp.w2.data[j] * (1.0 - a[j] * a[j]);
            gh.b1.data[j] += d_z[j];
        }
        add_outer(&mut gh.w1.data, trace.repr.row(i), &d_z);
        mat_vec(&hp.w1.data, &d_z, &mut d_r);
        let (dq, dp) = (&mut d_q[i * d..(i + 1) * d], &mut d_p[i * d..(i + 1) * d]);
        for j in 0..d {
            let (r0, r1, r2, r3) = (d_r[j], d_r[d + j], d_r[2 * d + j], d_r[3 * d + j]);
            dq[j] = r0 + r2 + r3;
            dp[j] = r1 + r2 - r3;
        }
    }
    (d_q, d_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masm::{ModelConfig, Tower};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_aspects(h: usize, d: usize, owner: Tower, rng: &mut ChaCha8Rng) -> AspectVectors {
        AspectVectors {
            h,
            d,
            data: (0..h * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            owner,
        }
    }

    #[test]
    fn interaction_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = random_aspects(10, 64, Tower::Query, &mut rng);
        let p = random_aspects(10, 64, Tower::Product, &mut rng);
        let r = interact(&q, &p).unwrap();
        assert_eq!((r.h, r.data.len()), (10, 10 * 256));
        assert_eq!(r.row(3).len(), 256);
        assert_eq!(&r.row(3)[..64], q.aspect(3));
        assert_eq!(&r.row(3)[64..128], p.aspect(3));

        let same = interact(&q, &q).unwrap();
        assert!(same.row(5)[192..].iter().all(|&x| x == 0.0));
        let zero = AspectVectors::zeros(10, 64, Tower::Query);
        assert!(interact(&zero, &zero).unwrap().data.iter().all(|&x| x == 0.0));

        let small = AspectVectors::zeros(3, 64, Tower::Product);
        assert!(matches!(interact(&q, &small), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_head_scores_one_half() {
        let cfg = ModelConfig {
            vocab_size: 4,
            d: 5,
            h: 3,
            ..ModelConfig::default()
        };
        let params = MasmParameters::zeros(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = interact(
            &random_aspects(3, 5, Tower::Query, &mut rng),
            &random_aspects(3, 5, Tower::Product, &mut rng),
        )
        .unwrap();
        let out = score(&r, &params).unwrap();
        assert!(out.s_aspects.iter().all(|&s| s == 0.0));
        assert_eq!(out.s_final, 0.5);
    }

    /// Straight-line re-implementation of the scoring head.
    fn reference_score(r: &InteractionRepr, p: &MasmParameters) -> f64 {
        let (h, d) = (p.config.h, p.config.d);
        let mut pooled = p.head.pool_b.data[0];
        for i in 0..h {
            let row = r.row(i);
            let mut s = p.head.b2.data[0];
            for j in 0..d {
                let mut z = p.head.b1.data[j];
                for (k, x) in row.iter().enumerate() {
                    z += x * p.head.w1.data[k * d + j];
                }
                s += libm::tanh(z) * p.head.w2.data[j];
            }
            pooled += p.head.pool_w.data[i] * s;
        }
        1.0 / (1.0 + libm::exp(-pooled))
    }

    #[test]
    fn matches_straight_line_reference() {
        let cfg = ModelConfig {
            vocab_size: 4,
            d: 7,
            h: 4,
            ..ModelConfig::default()
        };
        for seed in 0..5 {
            let mut params = MasmParameters::init(&cfg, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for t in [&mut params.head.b1, &mut params.head.b2, &mut params.head.pool_b, &mut params.head.pool_w] {
                t.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
            }
            let r = interact(
                &random_aspects(4, 7, Tower::Query, &mut rng),
                &random_aspects(4, 7, Tower::Product, &mut rng),
            )
            .unwrap();
            let out = score(&r, &params).unwrap();
            assert!((out.s_final - reference_score(&r, &params)).abs() < 1e-12);
            assert!(out.s_final > 0.0 && out.s_final < 1.0);
        }
    }
}
