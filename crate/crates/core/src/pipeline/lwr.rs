use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bias::PositionBiasTable;
use crate::clicksim::{seeded_rng, ImpressionEvent, ProductId, QueryId, RewriteEntry, World};
use crate::corpus::{encode, TextSequence, Vocabulary};
use crate::error::{Error, Result};

/// The five confidence levels of a training pair, each with its loss threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceType {
    StrongRelevant,
    Relevant,
    WeakRelevant,
    WeakIrrelevant,
    StrongIrrelevant,
}

impl RelevanceType {
    pub const ALL: [RelevanceType; 5] = [
        RelevanceType::StrongRelevant,
        RelevanceType::Relevant,
        RelevanceType::WeakRelevant,
        RelevanceType::WeakIrrelevant,
        RelevanceType::StrongIrrelevant,
    ];

    pub fn threshold(self) -> f64 {
        match self {
            RelevanceType::StrongRelevant => 0.9,
            RelevanceType::Relevant => 0.8,
            RelevanceType::WeakRelevant => 0.6,
            RelevanceType::WeakIrrelevant => 0.3,
            RelevanceType::StrongIrrelevant => 0.1,
        }
    }

    pub fn is_positive(self) -> bool {
        self.threshold() > 0.5
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceType::StrongRelevant => "strong_relevant",
            RelevanceType::Relevant => "relevant",
            RelevanceType::WeakRelevant => "weak_relevant",
            RelevanceType::WeakIrrelevant => "weak_irrelevant",
            RelevanceType::StrongIrrelevant => "strong_irrelevant",
        }
    }
}

impl fmt::Display for RelevanceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelevanceType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RelevanceType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownId {
                kind: "relevance type",
                id: s.into(),
            })
    }
}

/// Sample proportions of the five types in the reference click-log dataset,
/// in `RelevanceType::ALL` order.
pub const REFERENCE_MIXTURE: [f64; 5] = [
    548_946_058.0 / 6_224_653_531.0,
    653_660_431.0 / 6_224_653_531.0,
    82_702_879.0 / 6_224_653_531.0,
    3_656_998_276.0 / 6_224_653_531.0,
    1_282_345_887.0 / 6_224_653_531.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LwrConfig {
    pub min_pair_exposures: u64,
    pub min_products_per_query: usize,
    pub rewrite_confidence_threshold: f64,
    /// Random negatives drawn per query before mixture capping.
    pub strong_irrelevant_per_query: usize,
    /// Target type proportions enforced by down-sampling; `None` keeps everything.
    pub mixture: Option<[f64; 5]>,
    pub seed: u64,
}

impl Default for LwrConfig {
    fn default() -> Self {
        Self {
            min_pair_exposures: 25,
            min_products_per_query: 5,
            rewrite_confidence_threshold: 0.35,
            strong_irrelevant_per_query: 20,
            mixture: Some(REFERENCE_MIXTURE),
            seed: 42,
        }
    }
}

/// First-page click statistics of one (query, product) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrStat {
    pub query_id: QueryId,
    pub product_id: ProductId,
    pub first_page_exposures: u64,
    pub clicks: u64,
    /// Exposure counts per 1-based position (index 0 is position 1).
    pub exposures_by_position: Vec<u64>,
    pub exposure_bias_sum: f64,
    pub calibrated_ctr: f64,
}

/// Clicks divided by the summed position bias of every exposure; `None`
/// when that sum is zero.
pub fn calibrated_ctr(stat: &CtrStat, table: &PositionBiasTable) -> Option<f64> {
    let sum: f64 = stat
        .exposures_by_position
        .iter()
        .enumerate()
        .map(|(i, &n)| n as f64 * table.bias.get(i).copied().unwrap_or(0.0))
        .sum();
    (sum > 0.0).then(|| stat.clicks as f64 / sum)
}

/// Aggregates page-1 events (both buckets) into per-pair statistics.
pub fn collect_ctr_stats<'a, I>(events: I, table: &PositionBiasTable) -> BTreeMap<QueryId, Vec<CtrStat>>
where
    I: IntoIterator<Item = &'a ImpressionEvent>,
{
    let p = table.page_size();
    let mut raw: BTreeMap<(QueryId, ProductId), (u64, Vec<u64>)> = BTreeMap::new();
    for e in events {
        if e.page != 1 || e.position == 0 || e.position as usize > p {
            continue;
        }
        let entry = raw
            .entry((e.query_id, e.product_id))
            .or_insert_with(|| (0, vec![0; p]));
        entry.0 += e.clicked as u64;
        entry.1[e.position as usize - 1] += 1;
    }
    let mut out: BTreeMap<QueryId, Vec<CtrStat>> = BTreeMap::new();
    for ((q, pid), (clicks, by_pos)) in raw {
        let mut stat = CtrStat {
            query_id: q,
            product_id: pid,
            first_page_exposures: by_pos.iter().sum(),
            clicks,
            exposures_by_position: by_pos,
            exposure_bias_sum: 0.0,
            calibrated_ctr: 0.0,
        };
        stat.exposure_bias_sum = stat
            .exposures_by_position
            .iter()
            .zip(&table.bias)
            .map(|(&n, &b)| n as f64 * b)
            .sum();
        match calibrated_ctr(&stat, table) {
            Some(ctr) => stat.calibrated_ctr = ctr,
            None => continue,
        }
        out.entry(q).or_default().push(stat);
    }
    out
}

/// Splits a query's clicked products into strong / regular / weak relevant
/// by calibrated CTR: top ceil(k/5), bottom ceil(k/5), the rest in between.
/// Returns nothing when fewer than `min_products_per_query` products qualify.
pub fn bucket_positives(stats: &[CtrStat], config: &LwrConfig) -> Vec<(ProductId, RelevanceType)> {
    let mut eligible: Vec<&CtrStat> = stats
        .iter()
        .filter(|s| s.first_page_exposures >= config.min_pair_exposures && s.clicks >= 1)
        .collect();
    let k = eligible.len();
    if k < config.min_products_per_query.max(1) {
        return Vec::new();
    }
    eligible.sort_by(|a, b| {
        b.calibrated_ctr
            .total_cmp(&a.calibrated_ctr)
            .then(a.product_id.cmp(&b.product_id))
    });
    let slice = k.div_ceil(5);
    let n_strong = slice.min(k);
    let n_weak = slice.min(k - n_strong);
    eligible
        .iter()
        .enumerate()
        .map(|(rank, s)| {
            let t = if rank < n_strong {
                RelevanceType::StrongRelevant
            } else if rank >= k - n_weak {
                RelevanceType::WeakRelevant
            } else {
                RelevanceType::Relevant
            };
            (s.product_id, t)
        })
        .collect()
}

/// Products clicked under low-confidence rewrites of `query`, minus the
/// query's own positives.
pub fn gen_weak_irrelevant(
    query: QueryId,
    rewrite_table: &[RewriteEntry],
    clicked: &BTreeMap<QueryId, BTreeSet<ProductId>>,
    positives: &BTreeSet<ProductId>,
    conf_threshold: f64,
) -> Vec<ProductId> {
    let mut out = BTreeSet::new();
    for entry in rewrite_table
        .iter()
        .filter(|e| e.original_query_id == query && e.confidence < conf_threshold)
    {
        if let Some(products) = clicked.get(&entry.rewritten_query_id) {
            out.extend(products.iter().filter(|p| !positives.contains(p)).copied());
        }
    }
    out.into_iter().collect()
}

/// Uniform sample without replacement of up to `k` pool products outside
/// `excluded`. The second value is the shortfall when the pool runs dry.
pub fn gen_strong_irrelevant<R: Rng + ?Sized>(
    pool: &[ProductId],
    excluded: &BTreeSet<ProductId>,
    k: usize,
    rng: &mut R,
) -> (Vec<ProductId>, usize) {
    let available: Vec<ProductId> = pool.iter().filter(|p| !excluded.contains(p)).copied().collect();
    let mut picked: Vec<ProductId> = available.choose_multiple(rng, k).copied().collect();
    picked.sort_unstable();
    let shortfall = k - picked.len();
    (picked, shortfall)
}

/// A dataset row by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LwrRecord {
    pub query_id: QueryId,
    pub product_id: ProductId,
    pub rtype: RelevanceType,
}

/// An encoded training instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LwrExample {
    pub query: TextSequence,
    pub title: TextSequence,
    pub rtype: RelevanceType,
}

impl LwrExample {
    pub fn encode(query_tokens: &[String], title_tokens: &[String], rtype: RelevanceType, vocab: &Vocabulary, query_max_len: usize, title_max_len: usize) -> Self {
        Self {
            query: encode(query_tokens, vocab, query_max_len),
            title: encode(title_tokens, vocab, title_max_len),
            rtype,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeStats {
    pub samples: usize,
    pub queries: usize,
    pub products: usize,
    pub proportion: f64,
}

/// Per-type counts in the layout of the reference dataset statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub strong_relevant: TypeStats,
    pub relevant: TypeStats,
    pub weak_relevant: TypeStats,
    pub weak_irrelevant: TypeStats,
    pub strong_irrelevant: TypeStats,
    pub all: TypeStats,
    pub queries_skipped_for_positives: usize,
    pub strong_irrelevant_shortfall: usize,
}

impl StatsReport {
    pub fn from_records(records: &[LwrRecord]) -> Self {
        let mut per: [(usize, BTreeSet<QueryId>, BTreeSet<ProductId>); 5] = Default::default();
        let mut all_q = BTreeSet::new();
        let mut all_p = BTreeSet::new();
        for r in records {
            let slot = &mut per[r.rtype.index()];
            slot.0 += 1;
            slot.1.insert(r.query_id);
            slot.2.insert(r.product_id);
            all_q.insert(r.query_id);
            all_p.insert(r.product_id);
        }
        let total = records.len();
        let stats = |i: usize| TypeStats {
            samples: per[i].0,
            queries: per[i].1.len(),
            products: per[i].2.len(),
            proportion: if total == 0 { 0.0 } else { per[i].0 as f64 / total as f64 },
        };
        StatsReport {
            strong_relevant: stats(0),
            relevant: stats(1),
            weak_relevant: stats(2),
            weak_irrelevant: stats(3),
            strong_irrelevant: stats(4),
            all: TypeStats {
                samples: total,
                queries: all_q.len(),
                products: all_p.len(),
                proportion: if total == 0 { 0.0 } else { 1.0 },
            },
            queries_skipped_for_positives: 0,
            strong_irrelevant_shortfall: 0,
        }
    }

    pub fn get(&self, t: RelevanceType) -> &TypeStats {
        match t {
            RelevanceType::StrongRelevant => &self.strong_relevant,
            RelevanceType::Relevant => &self.relevant,
            RelevanceType::WeakRelevant => &self.weak_relevant,
            RelevanceType::WeakIrrelevant => &self.weak_irrelevant,
            RelevanceType::StrongIrrelevant => &self.strong_irrelevant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LwrOutput {
    /// Sorted by (query, product, type).
    pub records: Vec<LwrRecord>,
    pub stats: StatsReport,
}

/// Constructs the five-level dataset from first-page logs.
pub fn build_lwr(
    events: &[ImpressionEvent],
    table: &PositionBiasTable,
    world: &World,
    config: &LwrConfig,
) -> Result<LwrOutput> {
    if !(config.rewrite_confidence_threshold > 0.0 && config.rewrite_confidence_threshold < 1.0) {
        return Err(Error::config("rewrite_confidence_threshold", "must lie in (0, 1)"));
    }
    if let Some(mix) = &config.mixture {
        if mix.iter().any(|&m| !(m >= 0.0)) || mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("mixture", "weights must be non-negative with a positive sum"));
        }
    }
    let stats = collect_ctr_stats(events, table);

    let mut clicked: BTreeMap<QueryId, BTreeSet<ProductId>> = BTreeMap::new();
    let mut exposed: BTreeMap<QueryId, BTreeSet<ProductId>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.page == 1) {
        exposed.entry(e.query_id).or_default().insert(e.product_id);
        if e.clicked {
            clicked.entry(e.query_id).or_default().insert(e.product_id);
        }
    }

    let mut by_type: [Vec<LwrRecord>; 5] = Default::default();
    let mut skipped = 0usize;
    let mut positives: BTreeMap<QueryId, BTreeSet<ProductId>> = BTreeMap::new();
    for q in &world.queries {
        let buckets = stats
            .get(&q.id)
            .map(|s| bucket_positives(s, config))
            .unwrap_or_default();
        if buckets.is_empty() {
            skipped += 1;
        }
        let set = positives.entry(q.id).or_default();
        for (pid, t) in buckets {
            set.insert(pid);
            by_type[t.index()].push(LwrRecord {
                query_id: q.id,
                product_id: pid,
                rtype: t,
            });
        }
    }

    let empty = BTreeSet::new();
    let pool: Vec<ProductId> = world.products.iter().map(|p| p.id).collect();
    let mut rng = seeded_rng(config.seed, 10);
    let mut shortfall = 0usize;
    for q in &world.queries {
        let pos = positives.get(&q.id).unwrap_or(&empty);
        // Positive membership takes precedence over the rewrite path.
        let weak = gen_weak_irrelevant(
            q.id,
            &world.rewrite_table,
            &clicked,
            pos,
            config.rewrite_confidence_threshold,
        );
        let mut excluded = exposed.get(&q.id).cloned().unwrap_or_default();
        excluded.extend(pos.iter().copied());
        excluded.extend(weak.iter().copied());
        for pid in weak {
            by_type[RelevanceType::WeakIrrelevant.index()].push(LwrRecord {
                query_id: q.id,
                product_id: pid,
                rtype: RelevanceType::WeakIrrelevant,
            });
        }
        let (strong, short) = gen_strong_irrelevant(&pool, &excluded, config.strong_irrelevant_per_query, &mut rng);
        shortfall += short;
        for pid in strong {
            by_type[RelevanceType::StrongIrrelevant.index()].push(LwrRecord {
                query_id: q.id,
                product_id: pid,
                rtype: RelevanceType::StrongIrrelevant,
            });
        }
    }
    if shortfall > 0 {
        log::warn!("strong-irrelevant pool exhausted: {shortfall} samples short");
    }

    if let Some(mix) = &config.mixture {
        apply_mixture(&mut by_type, mix, &mut rng);
    }

    let mut records: Vec<LwrRecord> = by_type.into_iter().flatten().collect();
    records.sort();
    let mut report = StatsReport::from_records(&records);
    report.queries_skipped_for_positives = skipped;
    report.strong_irrelevant_shortfall = shortfall;
    Ok(LwrOutput { records, stats: report })
}

/// Down-samples types so proportions follow `mixture`, keeping as many
/// samples as the scarcest weighted type allows.
fn apply_mixture<R: Rng>(by_type: &mut [Vec<LwrRecord>; 5], mixture: &[f64; 5], rng: &mut R) {
    let total: f64 = mixture.iter().sum();
    let scale = by_type
        .iter()
        .zip(mixture)
        .filter(|(_, &m)| m > 0.0)
        .map(|(v, &m)| v.len() as f64 / (m / total))
        .fold(f64::INFINITY, f64::min);
    if !scale.is_finite() {
        return;
    }
    for (records, &m) in by_type.iter_mut().zip(mixture) {
        let cap = crate::math::floor(scale * m / total) as usize;
        if records.len() > cap {
            let mut kept: Vec<LwrRecord> = records.choose_multiple(rng, cap).copied().collect();
            kept.sort();
            *records = kept;
        }
    }
}
