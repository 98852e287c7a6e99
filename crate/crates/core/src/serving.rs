//! Precomputed aspect vectors and the head-only scoring path.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::TextSequence;
use crate::error::{Error, Result};
use crate::masm::{encode_tower, interact, score, AspectVectors, MasmParameters, Tower};
use crate::math;

/// `h × d` aspect matrices per id, stored in 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    pub side: Tower,
    /// Hex digest of the checkpoint the vectors came from.
    pub fingerprint: String,
    pub h: usize,
    pub d: usize,
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    data: Vec<f32>,
}

impl VectorStore {
    pub fn new(side: Tower, fingerprint: impl Into<String>, h: usize, d: usize) -> Self {
        Self {
            side,
            fingerprint: fingerprint.into(),
            h,
            d,
            ids: Vec::new(),
            index: BTreeMap::new(),
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn insert(&mut self, id: impl Into<String>, values: &[f32]) -> Result<()> {
        let id = id.into();
        if values.len() != self.h * self.d {
            return Err(Error::Shape(format!(
                "entry `{id}` has {} values, expected {}x{}",
                values.len(),
                self.h,
                self.d
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Dataset(format!("duplicate store id `{id}`")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Option<&[f32]> {
        let i = *self.index.get(id)?;
        let w = self.h * self.d;
        Some(&self.data[i * w..(i + 1) * w])
    }

    /// Entry widened to 64-bit aspect vectors.
    pub fn aspects(&self, id: &str) -> Option<AspectVectors> {
        self.entry(id).map(|v| AspectVectors {
            h: self.h,
            d: self.d,
            data: v.iter().map(|&x| x as f64).collect(),
            owner: self.side,
        })
    }

    pub fn check_fingerprint(&self, expected: &str) -> Result<()> {
        if self.fingerprint != expected {
            return Err(Error::Fingerprint {
                expected: expected.into(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Confirms the store fits a model with this config and fingerprint.
    pub fn check_compatible(&self, params: &MasmParameters, fingerprint: &str) -> Result<()> {
        self.check_fingerprint(fingerprint)?;
        if self.h != params.config.h || self.d != params.config.d {
            return Err(Error::Shape(format!(
                "store is {}x{}, model is {}x{}",
                self.h, self.d, params.config.h, params.config.d
            )));
        }
        Ok(())
    }
}

/// Encodes every item with one tower and keeps the result in 32-bit.
pub fn build_store<'a, I>(params: &MasmParameters, items: I, side: Tower, fingerprint: &str) -> Result<VectorStore>
where
    I: IntoIterator<Item = (&'a str, &'a TextSequence)>,
{
    let c = &params.config;
    let mut store = VectorStore::new(side, fingerprint, c.h, c.d);
    for (id, seq) in items {
        let a = encode_tower(seq, params, side)?;
        let v: Vec<f32> = a.data.iter().map(|&x| x as f32).collect();
        store.insert(id, &v)?;
    }
    Ok(store)
}

/// Interaction and head only.
pub fn score_from_vectors(q: &AspectVectors, p: &AspectVectors, params: &MasmParameters) -> Result<f64> {
    if q.owner != Tower::Query || p.owner != Tower::Product {
        return Err(Error::Precondition("expected query vectors then product vectors".into()));
    }
    Ok(score(&interact(q, p)?, params)?.s_final)
}

/// The head with its first layer folded per side:
/// `[q, p, q+p, q-p]·W1 = q·(W1a + W1c + W1d) + p·(W1b + W1c - W1d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FastHead {
    pub h: usize,
    pub d: usize,
    query_fold: Vec<f64>,
    product_fold: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    pool_w: Vec<f64>,
    pool_b: f64,
}

impl FastHead {
    pub fn new(params: &MasmParameters) -> Self {
        let (h, d) = (params.config.h, params.config.d);
        let w1 = &params.head.w1.data;
        let block = |k: usize, r: usize, c: usize| w1[(k * d + r) * d + c];
        let mut query_fold = vec![0.0; d * d];
        let mut product_fold = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                query_fold[r * d + c] = block(0, r, c) + block(2, r, c) + block(3, r, c);
                product_fold[r * d + c] = block(1, r, c) + block(2, r, c) - block(3, r, c);
            }
        }
        let hp = &params.head;
        Self {
            h,
            d,
            query_fold,
            product_fold,
            b1: hp.b1.data.clone(),
            w2: hp.w2.data.clone(),
            b2: hp.b2.data[0],
            pool_w: hp.pool_w.data.clone(),
            pool_b: hp.pool_b.data[0],
        }
    }

    /// Per-aspect half pre-activations (`h × d`) for one side.
    pub fn project<T: Copy + Into<f64>>(&self, side: Tower, aspects: &[T]) -> Result<Vec<f64>> {
        let (h, d) = (self.h, self.d);
        if aspects.len() != h * d {
            return Err(Error::Shape(format!("{} values, expected {h}x{d}", aspects.len())));
        }
        let fold = match side {
            Tower::Query => &self.query_fold,
            Tower::Product => &self.product_fold,
        };
        let mut out = vec![0.0; h * d];
        for i in 0..h {
            let o = &mut out[i * d..(i + 1) * d];
            for (r, x) in aspects[i * d..(i + 1) * d].iter().enumerate() {
                let x: f64 = (*x).into();
                for (oc, w) in o.iter_mut().zip(&fold[r * d..(r + 1) * d]) {
                    *oc += x * w;
                }
            }
        }
        Ok(out)
    }

    /// Final score from two projected sides.
    pub fn score_projected(&self, q: &[f64], p: &[f64]) -> f64 {
        let d = self.d;
        let mut pooled = self.pool_b;
        for i in 0..self.h {
            let (qi, pi) = (&q[i * d..(i + 1) * d], &p[i * d..(i + 1) * d]);
            let mut s = self.b2;
            for j in 0..d {
                s += math::tanh(qi[j] + pi[j] + self.b1[j]) * self.w2[j];
            }
            pooled += self.pool_w[i] * s;
        }
        math::sigmoid(pooled)
    }
}

/// A store with every entry already projected through the folded head.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedStore {
    pub side: Tower,
    pub fingerprint: String,
    width: usize,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
}

impl ProjectedStore {
    pub fn new(store: &VectorStore, head: &FastHead) -> Result<Self> {
        if store.h != head.h || store.d != head.d {
            return Err(Error::Shape(format!(
                "store is {}x{}, head is {}x{}",
                store.h, store.d, head.h, head.d
            )));
        }
        let width = head.h * head.d;
        let mut data = Vec::with_capacity(store.len() * width);
        for id in store.ids() {
            let entry = store.entry(id).expect("listed id");
            data.extend(head.project(store.side, entry)?);
        }
        Ok(Self {
            side: store.side,
            fingerprint: store.fingerprint.clone(),
            width,
            index: store.index.clone(),
            data,
        })
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        let i = *self.index.get(id)?;
        Some(&self.data[i * self.width..(i + 1) * self.width])
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Id-based scorer over precomputed query and product sides.
#[derive(Debug, Clone)]
pub struct FastScorer {
    pub head: FastHead,
    pub fingerprint: String,
    queries: ProjectedStore,
    products: ProjectedStore,
}

impl FastScorer {
    pub fn new(params: &MasmParameters, fingerprint: &str, queries: &VectorStore, products: &VectorStore) -> Result<Self> {
        if queries.side != Tower::Query || products.side != Tower::Product {
            return Err(Error::Precondition("stores are on the wrong sides".into()));
        }
        queries.check_compatible(params, fingerprint)?;
        products.check_compatible(params, fingerprint)?;
        let head = FastHead::new(params);
        Ok(Self {
            queries: ProjectedStore::new(queries, &head)?,
            products: ProjectedStore::new(products, &head)?,
            head,
            fingerprint: fingerprint.into(),
        })
    }

    pub fn score_ids(&self, query_id: &str, product_id: &str) -> Result<f64> {
        let q = self.queries.get(query_id).ok_or_else(|| Error::UnknownId {
            kind: "query",
            id: query_id.into(),
        })?;
        let p = self.products.get(product_id).ok_or_else(|| Error::UnknownId {
            kind: "product",
            id: product_id.into(),
        })?;
        Ok(self.head.score_projected(q, p))
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn n_products(&self) -> usize {
        self.products.len()
    }
}
