//! Synthetic e-commerce world with known relevance, and a click simulator
//! following the examination hypothesis:
//! `P(click) = bias[position] * attractiveness(product) * rate[grade]`.
//!
//! Categories are grouped into families. Queries and titles carry a family
//! token, a category token and attribute tokens, so products from a sibling
//! category look close to relevant ones. Retrieval returns products of the
//! query's family ranked by a noisy relevance-correlated score; the first
//! `page_size` of them form page 1.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub type Grade = u8;

/// Mixes a seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

macro_rules! id_type {
    ($name:ident, $prefix:literal, $width:literal, $kind:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{:0", $width, "}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                s.strip_prefix($prefix)
                    .and_then(|rest| rest.parse::<u32>().ok())
                    .map($name)
                    .ok_or_else(|| Error::UnknownId {
                        kind: $kind,
                        id: s.to_string(),
                    })
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

id_type!(QueryId, "q", "5", "query");
id_type!(ProductId, "p", "6", "product");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_categories: usize,
    /// Categories per family; siblings share the family token.
    pub family_size: usize,
    pub products_per_category: usize,
    /// Must be even: every (category, attribute) intent gets two phrasings.
    pub queries_per_category: usize,
    pub attribute_vocab_size: usize,
    pub attributes_per_product: usize,
    pub n_brands: usize,
    /// Examination probability per position, position 1 first.
    pub bias_curve: Vec<f64>,
    /// Standard deviation of log-attractiveness.
    pub attractiveness_spread: f64,
    /// Base click probability indexed by grade (0, 1, 2).
    pub relevance_click_rates: [f64; 3],
    pub randomized_fraction: f64,
    pub page_size: usize,
    /// Per-session retrieval noise.
    pub retrieval_noise: f64,
    /// Fixed per (query, product) retrieval error.
    pub retrieval_static_noise: f64,
    /// Chance that a query also gets a low-confidence attribute-changing rewrite.
    pub attribute_rewrite_prob: f64,
    /// Grades at or above this are labelled Good.
    pub label_threshold: Grade,
    pub seed: u64,
}

pub const DEFAULT_BIAS_CURVE: [f64; 10] = [1.00, 0.85, 0.72, 0.61, 0.52, 0.44, 0.37, 0.32, 0.27, 0.23];

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_categories: 32,
            family_size: 4,
            products_per_category: 40,
            queries_per_category: 4,
            attribute_vocab_size: 16,
            attributes_per_product: 2,
            n_brands: 24,
            bias_curve: DEFAULT_BIAS_CURVE.to_vec(),
            attractiveness_spread: 0.35,
            relevance_click_rates: [0.10, 0.22, 0.32],
            randomized_fraction: 0.1,
            page_size: 10,
            retrieval_noise: 0.25,
            retrieval_static_noise: 0.35,
            attribute_rewrite_prob: 0.1,
            label_threshold: 1,
            seed: 42,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: usize| {
            if v == 0 {
                Err(Error::config(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("n_categories", self.n_categories)?;
        positive("products_per_category", self.products_per_category)?;
        positive("attribute_vocab_size", self.attribute_vocab_size)?;
        positive("attributes_per_product", self.attributes_per_product)?;
        positive("n_brands", self.n_brands)?;
        positive("page_size", self.page_size)?;
        if self.family_size < 2 || !self.n_categories.is_multiple_of(self.family_size) {
            return Err(Error::config(
                "family_size",
                "must be at least 2 and divide n_categories",
            ));
        }
        if self.queries_per_category < 2 || !self.queries_per_category.is_multiple_of(2) {
            return Err(Error::config("queries_per_category", "must be even and at least 2"));
        }
        if self.queries_per_category / 2 > self.attribute_vocab_size {
            return Err(Error::config(
                "queries_per_category",
                "needs queries_per_category / 2 distinct attributes",
            ));
        }
        if self.attributes_per_product > self.attribute_vocab_size {
            return Err(Error::config("attributes_per_product", "exceeds attribute_vocab_size"));
        }
        if self.bias_curve.len() != self.page_size {
            return Err(Error::config("bias_curve", "length must equal page_size"));
        }
        if !(self.bias_curve[0] > 0.0) {
            return Err(Error::config("bias_curve", "first entry must be positive"));
        }
        if self.bias_curve.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
            return Err(Error::config("bias_curve", "entries must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.randomized_fraction) {
            return Err(Error::config("randomized_fraction", "must lie in [0, 1]"));
        }
        if !(self.attractiveness_spread >= 0.0) {
            return Err(Error::config("attractiveness_spread", "must be non-negative"));
        }
        if self
            .relevance_click_rates
            .iter()
            .any(|r| !(0.0..=1.0).contains(r))
        {
            return Err(Error::config("relevance_click_rates", "must lie in [0, 1]"));
        }
        if !(self.retrieval_noise >= 0.0 && self.retrieval_static_noise >= 0.0) {
            return Err(Error::config("retrieval_noise", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.attribute_rewrite_prob) {
            return Err(Error::config("attribute_rewrite_prob", "must lie in [0, 1]"));
        }
        if self.label_threshold > 2 {
            return Err(Error::config("label_threshold", "must be a grade in 0..=2"));
        }
        if self.products_per_category < self.page_size {
            return Err(Error::config(
                "products_per_category",
                "must be at least page_size so first pages can be relevant",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: QueryId,
    pub tokens: Vec<String>,
    pub category: u32,
    pub attributes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: ProductId,
    pub tokens: Vec<String>,
    pub category: u32,
    pub attributes: Vec<u32>,
    pub attractiveness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteEntry {
    pub original_query_id: QueryId,
    pub rewritten_query_id: QueryId,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub queries: Vec<Query>,
    pub products: Vec<Product>,
    pub rewrite_table: Vec<RewriteEntry>,
}

const MODIFIERS: [&str; 6] = ["new", "cheap", "best", "sale", "original", "popular"];
const FILLERS: [&str; 12] = [
    "cotton", "slim", "summer", "classic", "soft", "women", "men", "kids", "light", "premium",
    "winter", "casual",
];

fn family_of(config: &WorldConfig, category: u32) -> u32 {
    category / config.family_size as u32
}

/// Builds the world deterministically from `config.seed`.
pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed, 1);
    let n_families = config.n_categories / config.family_size;
    let intents_per_category = config.queries_per_category / 2;

    let attr_ids: Vec<u32> = (0..config.attribute_vocab_size as u32).collect();
    let family_attrs: Vec<Vec<u32>> = (0..n_families)
        .map(|_| {
            let mut picked: Vec<u32> = attr_ids
                .choose_multiple(&mut rng, intents_per_category)
                .copied()
                .collect();
            picked.sort_unstable();
            picked
        })
        .collect();

    let mut queries = Vec::with_capacity(config.n_categories * config.queries_per_category);
    for category in 0..config.n_categories as u32 {
        let family = family_of(config, category);
        for &attr in &family_attrs[family as usize] {
            for variant in 0..2 {
                let mut tokens = Vec::with_capacity(4);
                if variant == 1 {
                    tokens.push(MODIFIERS.choose(&mut rng).unwrap().to_string());
                }
                tokens.push(format!("fam{family}"));
                tokens.push(format!("cat{category}"));
                tokens.push(format!("attr{attr}"));
                queries.push(Query {
                    id: QueryId(queries.len() as u32),
                    tokens,
                    category,
                    attributes: alloc::vec![attr],
                });
            }
        }
    }

    let brand_log_attr: Vec<f64> = (0..config.n_brands)
        .map(|_| config.attractiveness_spread * 0.8 * normal(&mut rng))
        .collect();
    let mut products = Vec::with_capacity(config.n_categories * config.products_per_category);
    for category in 0..config.n_categories as u32 {
        let family = family_of(config, category);
        for _ in 0..config.products_per_category {
            let mut attributes: Vec<u32> = attr_ids
                .choose_multiple(&mut rng, config.attributes_per_product)
                .copied()
                .collect();
            attributes.sort_unstable();
            let brand = rng.gen_range(0..config.n_brands);
            let log_attr =
                brand_log_attr[brand] + config.attractiveness_spread * 0.6 * normal(&mut rng);
            let mut tokens = Vec::with_capacity(8);
            tokens.push(format!("brand{brand}"));
            tokens.push(format!("fam{family}"));
            tokens.push(format!("cat{category}"));
            for a in &attributes {
                tokens.push(format!("attr{a}"));
            }
            let n_fill = rng.gen_range(1..=3);
            for filler in FILLERS.choose_multiple(&mut rng, n_fill) {
                tokens.push(filler.to_string());
            }
            products.push(Product {
                id: ProductId(products.len() as u32),
                tokens,
                category,
                attributes,
                attractiveness: math::exp(log_attr),
            });
        }
    }

    let rewrite_table = generate_rewrites(config, &queries, &mut rng);
    Ok(World {
        config: config.clone(),
        queries,
        products,
        rewrite_table,
    })
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn generate_rewrites(config: &WorldConfig, queries: &[Query], rng: &mut ChaCha8Rng) -> Vec<RewriteEntry> {
    let mut by_category: BTreeMap<u32, Vec<&Query>> = BTreeMap::new();
    for q in queries {
        by_category.entry(q.category).or_default().push(q);
    }
    let mut table = Vec::new();
    for q in queries {
        // Same intent, other phrasing.
        let twin = by_category[&q.category]
            .iter()
            .find(|o| o.id != q.id && o.attributes == q.attributes)
            .expect("every intent has two phrasings");
        table.push(RewriteEntry {
            original_query_id: q.id,
            rewritten_query_id: twin.id,
            confidence: rng.gen_range(0.7..=1.0),
        });

        // Intent change: a sibling category in the same family.
        let family = family_of(config, q.category);
        let mut siblings: Vec<u32> = (0..config.family_size as u32)
            .map(|i| family * config.family_size as u32 + i)
            .filter(|&c| c != q.category)
            .collect();
        siblings.shuffle(rng);
        for &sib in siblings.iter().take(2) {
            let candidates: Vec<&&Query> = by_category[&sib]
                .iter()
                .filter(|o| o.attributes == q.attributes)
                .collect();
            let target = candidates
                .choose(rng)
                .copied()
                .unwrap_or_else(|| by_category[&sib].choose(rng).unwrap());
            table.push(RewriteEntry {
                original_query_id: q.id,
                rewritten_query_id: target.id,
                confidence: rng.gen_range(0.02..=0.3),
            });
        }

        if rng.gen_bool(config.attribute_rewrite_prob) {
            let others: Vec<&&Query> = by_category[&q.category]
                .iter()
                .filter(|o| o.attributes != q.attributes)
                .collect();
            if let Some(target) = others.choose(rng) {
                table.push(RewriteEntry {
                    original_query_id: q.id,
                    rewritten_query_id: target.id,
                    confidence: rng.gen_range(0.05..=0.3),
                });
            }
        }
    }
    table
}

impl World {
    pub fn query(&self, id: QueryId) -> Result<&Query> {
        self.queries.get(id.0 as usize).ok_or_else(|| Error::UnknownId {
            kind: "query",
            id: id.to_string(),
        })
    }

    pub fn product(&self, id: ProductId) -> Result<&Product> {
        self.products.get(id.0 as usize).ok_or_else(|| Error::UnknownId {
            kind: "product",
            id: id.to_string(),
        })
    }

    /// 2 when category and every required attribute match, 1 for a category
    /// match only, else 0.
    pub fn grade(&self, query: QueryId, product: ProductId) -> Result<Grade> {
        let q = self.query(query)?;
        let p = self.product(product)?;
        Ok(grade_of(q, p))
    }

    /// All world tokens, queries first, in a fixed order.
    pub fn token_streams(&self) -> impl Iterator<Item = &[String]> {
        self.queries
            .iter()
            .map(|q| q.tokens.as_slice())
            .chain(self.products.iter().map(|p| p.tokens.as_slice()))
    }

    /// Products of the query's family: the retrieval candidate set.
    pub fn candidates(&self, query: QueryId) -> Result<Vec<ProductId>> {
        let q = self.query(query)?;
        let family = family_of(&self.config, q.category);
        Ok(self
            .products
            .iter()
            .filter(|p| family_of(&self.config, p.category) == family)
            .map(|p| p.id)
            .collect())
    }
}

fn grade_of(q: &Query, p: &Product) -> Grade {
    if q.category != p.category {
        0
    } else if q.attributes.iter().all(|a| p.attributes.contains(a)) {
        2
    } else {
        1
    }
}

/// Binary relevance label: 1 when the grade reaches `world.config.label_threshold`.
pub fn ground_truth_label(world: &World, query: QueryId, product: ProductId) -> Result<u8> {
    Ok((world.grade(query, product)? >= world.config.label_threshold) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Organic,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpressionEvent {
    pub query_id: QueryId,
    pub product_id: ProductId,
    /// 1-based position on the page.
    pub position: u32,
    pub page: u32,
    pub clicked: bool,
    pub bucket: Bucket,
    /// Session index; events of one page share it.
    pub session: u64,
}

/// Static retrieval affinity of every candidate, fixed per world.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    /// Per query: (product, static score) over the family candidates.
    pools: Vec<Vec<(ProductId, f64)>>,
}

impl RetrievalIndex {
    pub fn build(world: &World) -> Self {
        let mut rng = seeded_rng(world.config.seed, 2);
        let pools = world
            .queries
            .iter()
            .map(|q| {
                world
                    .candidates(q.id)
                    .expect("query exists")
                    .into_iter()
                    .map(|pid| {
                        let p = &world.products[pid.0 as usize];
                        let cat = (p.category == q.category) as u8 as f64;
                        let attr_hits = q
                            .attributes
                            .iter()
                            .filter(|a| p.attributes.contains(a))
                            .count() as f64;
                        let attr = attr_hits / q.attributes.len().max(1) as f64;
                        let noise = world.config.retrieval_static_noise * normal(&mut rng);
                        (pid, cat + 0.8 * attr + noise)
                    })
                    .collect()
            })
            .collect();
        Self { pools }
    }

    pub fn pool(&self, query: QueryId) -> &[(ProductId, f64)] {
        &self.pools[query.0 as usize]
    }

    /// The `depth` best candidates by static score, best first.
    pub fn top(&self, query: QueryId, depth: usize) -> Vec<ProductId> {
        let mut pool = self.pool(query).to_vec();
        pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        pool.truncate(depth);
        pool.into_iter().map(|(p, _)| p).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationOutput {
    pub events: Vec<ImpressionEvent>,
    pub skipped_sessions: usize,
}

/// Sessions are generated in fixed-size chunks, each with its own derived
/// seed, so the stream does not depend on how chunks are scheduled.
pub const SESSION_CHUNK: u64 = 4096;

pub fn simulate_logs(world: &World, n_sessions: usize, config: &WorldConfig) -> Result<SimulationOutput> {
    config.validate()?;
    if n_sessions == 0 {
        return Err(Error::config("n_sessions", "must be at least 1"));
    }
    let index = RetrievalIndex::build(world);
    let mut out = SimulationOutput {
        events: Vec::with_capacity(n_sessions * config.page_size),
        skipped_sessions: 0,
    };
    let n = n_sessions as u64;
    let mut chunk = 0;
    while chunk * SESSION_CHUNK < n {
        let start = chunk * SESSION_CHUNK;
        let end = (start + SESSION_CHUNK).min(n);
        simulate_chunk(world, &index, config, chunk, start..end, &mut out);
        chunk += 1;
    }
    if out.skipped_sessions > 0 {
        log::warn!("{} sessions skipped for lack of candidates", out.skipped_sessions);
    }
    Ok(out)
}

fn simulate_chunk(
    world: &World,
    index: &RetrievalIndex,
    config: &WorldConfig,
    chunk: u64,
    sessions: core::ops::Range<u64>,
    out: &mut SimulationOutput,
) {
    let mut rng = seeded_rng(config.seed, 1_000 + chunk);
    let page = config.page_size;
    let mut scored: Vec<(ProductId, f64)> = Vec::new();
    for session in sessions {
        let qid = QueryId(rng.gen_range(0..world.queries.len() as u32));
        let pool = index.pool(qid);
        if pool.len() < page {
            out.skipped_sessions += 1;
            continue;
        }
        scored.clear();
        scored.extend(
            pool.iter()
                .map(|&(pid, s)| (pid, s + config.retrieval_noise * normal(&mut rng))),
        );
        scored.select_nth_unstable_by(page - 1, |a, b| b.1.total_cmp(&a.1));
        let top = &mut scored[..page];
        top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let bucket = if rng.gen_bool(config.randomized_fraction) {
            top.shuffle(&mut rng);
            Bucket::Randomized
        } else {
            Bucket::Organic
        };
        let q = &world.queries[qid.0 as usize];
        for (slot, &(pid, _)) in top.iter().enumerate() {
            let p = &world.products[pid.0 as usize];
            let grade = grade_of(q, p);
            let prob = (config.bias_curve[slot]
                * p.attractiveness
                * config.relevance_click_rates[grade as usize])
                .clamp(0.0, 1.0);
            let clicked = rng.gen_bool(prob);
            out.events.push(ImpressionEvent {
                query_id: qid,
                product_id: pid,
                position: slot as u32 + 1,
                page: 1,
                clicked,
                bucket,
                session,
            });
        }
    }
}

/// A ground-truth labelled (query, product) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledPair {
    pub query_id: QueryId,
    pub product_id: ProductId,
    pub label: u8,
}

/// Samples distinct labelled pairs from each query's top `pool_depth`
/// retrieval candidates so that `positive_share` of them are Good.
pub fn sample_eval_pairs(
    world: &World,
    n_pairs: usize,
    positive_share: f64,
    pool_depth: usize,
    seed: u64,
) -> Result<Vec<LabelledPair>> {
    if !(0.0..=1.0).contains(&positive_share) {
        return Err(Error::config("positive_share", "must lie in [0, 1]"));
    }
    let index = RetrievalIndex::build(world);
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for q in &world.queries {
        for pid in index.top(q.id, pool_depth) {
            let label = ground_truth_label(world, q.id, pid)?;
            let pair = LabelledPair {
                query_id: q.id,
                product_id: pid,
                label,
            };
            if label == 1 {
                good.push(pair);
            } else {
                bad.push(pair);
            }
        }
    }
    let want_good = math::round(n_pairs as f64 * positive_share) as usize;
    let want_bad = n_pairs - want_good;
    if want_good > good.len() || want_bad > bad.len() {
        return Err(Error::Dataset(format!(
            "asked for {want_good} good / {want_bad} bad pairs but the pools hold {} / {}",
            good.len(),
            bad.len()
        )));
    }
    let mut rng = seeded_rng(seed, 3);
    let mut pairs: Vec<LabelledPair> = good
        .choose_multiple(&mut rng, want_good)
        .chain(bad.choose_multiple(&mut rng, want_bad))
        .copied()
        .collect();
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            n_categories: 8,
            products_per_category: 20,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn ids_round_trip_as_strings() {
        assert_eq!(QueryId(12).to_string(), "q00012");
        assert_eq!(ProductId(7).to_string(), "p000007");
        assert_eq!("q00012".parse::<QueryId>().unwrap(), QueryId(12));
        assert!("x1".parse::<QueryId>().is_err());
    }

    #[test]
    fn world_is_deterministic() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_world(&WorldConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = WorldConfig {
            randomized_fraction: 1.5,
            ..small()
        };
        match generate_world(&cfg) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "randomized_fraction"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = WorldConfig {
            bias_curve: alloc::vec![1.0; 3],
            ..small()
        };
        assert!(matches!(generate_world(&cfg), Err(Error::Config { field: "bias_curve", .. })));
    }

    #[test]
    fn grade_rule() {
        let world = generate_world(&small()).unwrap();
        let q = &world.queries[0];
        for p in &world.products {
            let g = world.grade(q.id, p.id).unwrap();
            let expected = if p.category != q.category {
                0
            } else if p.attributes.contains(&q.attributes[0]) {
                2
            } else {
                1
            };
            assert_eq!(g, expected);
            assert_eq!(ground_truth_label(&world, q.id, p.id).unwrap(), (g >= 1) as u8);
        }
        assert!(world.grade(QueryId(9999), ProductId(0)).is_err());
    }

    #[test]
    fn query_tokens_name_category_and_attribute() {
        let world = generate_world(&small()).unwrap();
        for q in &world.queries {
            assert!(q.tokens.contains(&format!("cat{}", q.category)));
            assert!(q.tokens.contains(&format!("attr{}", q.attributes[0])));
            let relevant = world
                .products
                .iter()
                .filter(|p| world.grade(q.id, p.id).unwrap() >= 1)
                .count();
            assert!(relevant >= world.config.page_size);
        }
    }

    #[test]
    fn rewrite_table_has_high_and_low_confidence_per_query() {
        let world = generate_world(&small()).unwrap();
        for q in &world.queries {
            let entries: Vec<_> = world
                .rewrite_table
                .iter()
                .filter(|e| e.original_query_id == q.id)
                .collect();
            assert!(entries.iter().any(|e| e.confidence >= 0.7));
            assert!(entries.iter().any(|e| e.confidence <= 0.3));
            for e in entries {
                assert_ne!(e.original_query_id, e.rewritten_query_id);
                assert!((0.0..=1.0).contains(&e.confidence));
                let r = world.query(e.rewritten_query_id).unwrap();
                if e.confidence >= 0.7 {
                    assert_eq!((r.category, &r.attributes), (q.category, &q.attributes));
                } else {
                    assert!(r.category != q.category || r.attributes != q.attributes);
                }
            }
        }
    }

    #[test]
    fn simulation_emits_full_first_pages() {
        let cfg = small();
        let world = generate_world(&cfg).unwrap();
        let out = simulate_logs(&world, 500, &cfg).unwrap();
        assert_eq!(out.skipped_sessions, 0);
        assert_eq!(out.events.len(), 500 * cfg.page_size);
        for page in out.events.chunks(cfg.page_size) {
            let positions: Vec<u32> = page.iter().map(|e| e.position).collect();
            assert_eq!(positions, (1..=cfg.page_size as u32).collect::<Vec<_>>());
            assert!(page.iter().all(|e| e.page == 1 && e.session == page[0].session));
            let mut ids: Vec<_> = page.iter().map(|e| e.product_id).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), cfg.page_size);
        }
        assert_eq!(out, simulate_logs(&world, 500, &cfg).unwrap());
        assert!(simulate_logs(&world, 0, &cfg).is_err());
    }

    #[test]
    fn short_candidate_pools_are_skipped() {
        let cfg = WorldConfig {
            n_categories: 2,
            family_size: 2,
            products_per_category: 10,
            page_size: 10,
            ..small()
        };
        let world = generate_world(&cfg).unwrap();
        let big_page = WorldConfig {
            page_size: 25,
            bias_curve: alloc::vec![0.5; 25],
            products_per_category: 25,
            ..cfg.clone()
        };
        let out = simulate_logs(&world, 10, &big_page).unwrap();
        assert_eq!(out.skipped_sessions, 10);
        assert!(out.events.is_empty());
    }

    #[test]
    fn eval_sampler_hits_share_exactly() {
        let world = generate_world(&small()).unwrap();
        let pairs = sample_eval_pairs(&world, 200, 0.8, 40, 1).unwrap();
        assert_eq!(pairs.len(), 200);
        assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), 160);
        for p in &pairs {
            assert_eq!(p.label, ground_truth_label(&world, p.query_id, p.product_id).unwrap());
        }
        assert!(sample_eval_pairs(&world, 1_000_000, 0.8, 40, 1).is_err());
    }
}
