//! Multi-aspect semantic model.
//!
//! Each tower embeds its tokens, projects them through a tanh layer, builds
//! a ReLU self-attention map, turns that map into `h` attention vectors with
//! `h` single-channel convolution kernels, and returns `h` aspect vectors.
//! The head scores every aspect pair `[q_i, p_i, q_i + p_i, q_i - p_i]`
//! with a tanh MLP and pools the aspect scores with learned weights and a
//! sigmoid.

mod head;
mod model;
mod params;
mod tower;

pub use head::{interact, score, HeadTrace, InteractionRepr, ScoreOutput};
pub use model::{backward, backward_logit, forward, predict, ForwardOutput, Trace};
pub use params::{Gradients, HeadParams, MasmParameters, ModelConfig, Tensor, TowerParams};
pub use tower::{encode_tower, encode_tower_traced, AspectVectors, Tower, TowerTrace};

/// `out = x · W` for a row vector `x` (len `rows`) and row-major `W` (`rows × cols`).
#[inline]
pub(crate) fn vec_mat(x: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    debug_assert_eq!(x.len() * cols, w.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (xi, row) in x.iter().zip(w.chunks_exact(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `out = W · y` for row-major `W` (`rows × cols`) and `y` of len `cols`.
#[inline]
pub(crate) fn mat_vec(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = y.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, y);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W += x^T · g` (outer product accumulate).
#[inline]
pub(crate) fn add_outer(w: &mut [f64], x: &[f64], g: &[f64]) {
    let cols = g.len();
    for (xi, row) in x.iter().zip(w.chunks_exact_mut(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (wij, gj) in row.iter_mut().zip(g) {
            *wij += xi * gj;
        }
    }
}
