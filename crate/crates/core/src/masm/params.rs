use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clicksim::seeded_rng;
use crate::corpus::{DEFAULT_QUERY_MAX_LEN, DEFAULT_TITLE_MAX_LEN};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Embedding and aspect-vector dimension.
    pub d: usize,
    /// Number of aspects (convolution kernels).
    pub h: usize,
    /// Convolution kernel width, odd.
    pub w: usize,
    pub vocab_size: usize,
    pub query_max_len: usize,
    pub title_max_len: usize,
    /// Divide each attention vector by its L1 norm. Off by default.
    pub l1_normalize_aspects: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            h: 10,
            w: 3,
            vocab_size: 2,
            query_max_len: DEFAULT_QUERY_MAX_LEN,
            title_max_len: DEFAULT_TITLE_MAX_LEN,
            l1_normalize_aspects: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if self.h == 0 {
            return Err(Error::config("h", "must be at least 1"));
        }
        if self.w == 0 || self.w.is_multiple_of(2) {
            return Err(Error::config("w", "must be odd and at least 1"));
        }
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size", "must include PAD and UNK"));
        }
        if self.query_max_len == 0 || self.title_max_len == 0 {
            return Err(Error::config("max_len", "must be at least 1"));
        }
        Ok(())
    }

    /// Total trainable scalars for this configuration.
    pub fn param_count(&self) -> usize {
        let (d, h, w, v) = (self.d, self.h, self.w, self.vocab_size);
        let tower = d * d + d + 2 * d * d + h * w;
        v * d + 2 * tower + 4 * d * d + d + d + 1 + h + 1
    }
}

/// Embedding rows start with unit variance, `uniform(-sqrt 3, sqrt 3)`.
/// A table-wide glorot bound shrinks with the vocabulary and leaves the
/// towers too close to linear for matching features to emerge.
pub const EMBEDDING_LIMIT: f64 = 1.732_050_807_568_877_2;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self::uniform(shape, math::sqrt(6.0 / (fan_in + fan_out) as f64), rng)
    }

    fn uniform(shape: &[usize], limit: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::zeros(shape);
        for x in &mut t.data {
            *x = rng.gen_range(-limit..=limit);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerParams {
    /// Projection layer, `d × d`.
    pub proj_w: Tensor,
    pub proj_b: Tensor,
    /// Attention query map, `d × d`.
    pub w_q: Tensor,
    /// Attention key map, `d × d`.
    pub w_k: Tensor,
    /// `h × w` convolution taps.
    pub kernels: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `4d × d`.
    pub w1: Tensor,
    pub b1: Tensor,
    /// `d` weights of the per-aspect scalar output.
    pub w2: Tensor,
    pub b2: Tensor,
    /// `h` pooling weights.
    pub pool_w: Tensor,
    pub pool_b: Tensor,
}

/// All trainable tensors. Gradients and optimizer moments use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MasmParameters {
    pub config: ModelConfig,
    /// Shared `vocab_size × d` table; row 0 (PAD) stays zero.
    pub embedding: Tensor,
    pub query: TowerParams,
    pub product: TowerParams,
    pub head: HeadParams,
}

/// Gradient accumulator with the parameter layout.
pub type Gradients = MasmParameters;

impl TowerParams {
    fn zeros(c: &ModelConfig) -> Self {
        Self {
            proj_w: Tensor::zeros(&[c.d, c.d]),
            proj_b: Tensor::zeros(&[c.d]),
            w_q: Tensor::zeros(&[c.d, c.d]),
            w_k: Tensor::zeros(&[c.d, c.d]),
            kernels: Tensor::zeros(&[c.h, c.w]),
        }
    }

    fn init(c: &ModelConfig, rng: &mut impl Rng) -> Self {
        Self {
            proj_w: Tensor::glorot(&[c.d, c.d], c.d, c.d, rng),
            proj_b: Tensor::zeros(&[c.d]),
            w_q: Tensor::glorot(&[c.d, c.d], c.d, c.d, rng),
            w_k: Tensor::glorot(&[c.d, c.d], c.d, c.d, rng),
            kernels: Tensor::glorot(&[c.h, c.w], c.w, c.h, rng),
        }
    }
}

const TENSOR_NAMES: [&str; 17] = [
    "embedding",
    "query.proj_w",
    "query.proj_b",
    "query.w_q",
    "query.w_k",
    "query.kernels",
    "product.proj_w",
    "product.proj_b",
    "product.w_q",
    "product.w_k",
    "product.kernels",
    "head.w1",
    "head.b1",
    "head.w2",
    "head.b2",
    "head.pool_w",
    "head.pool_b",
];

impl MasmParameters {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        Ok(Self {
            config: c.clone(),
            embedding: Tensor::zeros(&[c.vocab_size, c.d]),
            query: TowerParams::zeros(c),
            product: TowerParams::zeros(c),
            head: HeadParams {
                w1: Tensor::zeros(&[4 * c.d, c.d]),
                b1: Tensor::zeros(&[c.d]),
                w2: Tensor::zeros(&[c.d]),
                b2: Tensor::zeros(&[1]),
                pool_w: Tensor::zeros(&[c.h]),
                pool_b: Tensor::zeros(&[1]),
            },
        })
    }

    /// Unit-variance embeddings, glorot-uniform weights, zero biases, pooling
    /// weights `1/h`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut rng = seeded_rng(seed, 100);
        let mut embedding = Tensor::uniform(&[c.vocab_size, c.d], EMBEDDING_LIMIT, &mut rng);
        embedding.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
        let query = TowerParams::init(c, &mut rng);
        let product = TowerParams::init(c, &mut rng);
        let head = HeadParams {
            w1: Tensor::glorot(&[4 * c.d, c.d], 4 * c.d, c.d, &mut rng),
            b1: Tensor::zeros(&[c.d]),
            w2: Tensor::glorot(&[c.d], c.d, 1, &mut rng),
            b2: Tensor::zeros(&[1]),
            pool_w: Tensor {
                shape: vec![c.h],
                data: vec![1.0 / c.h as f64; c.h],
            },
            pool_b: Tensor::zeros(&[1]),
        };
        Ok(Self {
            config: c.clone(),
            embedding,
            query,
            product,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    pub fn tower(&self, tower: super::Tower) -> &TowerParams {
        match tower {
            super::Tower::Query => &self.query,
            super::Tower::Product => &self.product,
        }
    }

    pub(crate) fn tower_mut(&mut self, tower: super::Tower) -> &mut TowerParams {
        match tower {
            super::Tower::Query => &mut self.query,
            super::Tower::Product => &mut self.product,
        }
    }

    /// Tensors in manifest order with their names.
    pub fn named_tensors(&self) -> [(&'static str, &Tensor); 17] {
        let (q, p, h) = (&self.query, &self.product, &self.head);
        let t = [
            &self.embedding,
            &q.proj_w,
            &q.proj_b,
            &q.w_q,
            &q.w_k,
            &q.kernels,
            &p.proj_w,
            &p.proj_b,
            &p.w_q,
            &p.w_k,
            &p.kernels,
            &h.w1,
            &h.b1,
            &h.w2,
            &h.b2,
            &h.pool_w,
            &h.pool_b,
        ];
        let mut i = 0;
        t.map(|x| {
            i += 1;
            (TENSOR_NAMES[i - 1], x)
        })
    }

    pub fn named_tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 17] {
        let (q, p, h) = (&mut self.query, &mut self.product, &mut self.head);
        let t = [
            &mut self.embedding,
            &mut q.proj_w,
            &mut q.proj_b,
            &mut q.w_q,
            &mut q.w_k,
            &mut q.kernels,
            &mut p.proj_w,
            &mut p.proj_b,
            &mut p.w_q,
            &mut p.w_k,
            &mut p.kernels,
            &mut h.w1,
            &mut h.b1,
            &mut h.w2,
            &mut h.b2,
            &mut h.pool_w,
            &mut h.pool_b,
        ];
        let mut i = 0;
        t.map(|x| {
            i += 1;
            (TENSOR_NAMES[i - 1], x)
        })
    }

    pub fn tensor_names() -> &'static [&'static str] {
        &TENSOR_NAMES
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rebuilds parameters from named tensors, checking every shape.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if tensors.len() != TENSOR_NAMES.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, found {}",
                TENSOR_NAMES.len(),
                tensors.len()
            )));
        }
        for ((name, slot), (given_name, given)) in params.named_tensors_mut().into_iter().zip(tensors) {
            if name != given_name {
                return Err(Error::Shape(format!("expected tensor `{name}`, found `{given_name}`")));
            }
            if slot.shape != given.shape || given.data.len() != slot.data.len() {
                return Err(Error::Shape(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    given.shape, slot.shape
                )));
            }
            *slot = given;
        }
        if params.param_count() != config.param_count() {
            return Err(Error::Shape("parameter count mismatch".into()));
        }
        Ok(params)
    }

    /// Structural agreement of two parameter sets.
    pub fn check_same_layout(&self, other: &Self) -> Result<()> {
        for ((name, a), (_, b)) in self.named_tensors().iter().zip(other.named_tensors().iter()) {
            if a.shape != b.shape {
                return Err(Error::Shape(format!(
                    "tensor `{name}`: {:?} vs {:?}",
                    a.shape, b.shape
                )));
            }
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.named_tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) {
        for ((_, a), (_, b)) in self.named_tensors_mut().into_iter().zip(other.named_tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += factor * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.named_tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.data.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        math::sqrt(
            self.named_tensors()
                .iter()
                .flat_map(|(_, t)| t.data.iter())
                .map(|x| x * x)
                .sum(),
        )
    }
}
