use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clicksim::{Bucket, ImpressionEvent, QueryId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub page_size: usize,
    /// A query contributes only if every position has at least this many
    /// randomized first-page exposures.
    pub min_exposures_per_position: u64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            page_size: 10,
            min_exposures_per_position: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionBiasTable {
    pub bias: Vec<f64>,
    pub relative: Vec<f64>,
    pub queries_used: usize,
    pub min_exposures_per_position: u64,
}

impl PositionBiasTable {
    /// Builds a table from absolute bias values, deriving the relative column.
    pub fn from_bias(bias: Vec<f64>, queries_used: usize, min_exposures_per_position: u64) -> Result<Self> {
        if bias.is_empty() {
            return Err(Error::Estimation("empty bias table".into()));
        }
        if let Some(i) = bias.iter().position(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::Estimation(format!(
                "bias at position {} is not positive",
                i + 1
            )));
        }
        let first = bias[0];
        let relative = bias.iter().map(|&b| b / first).collect();
        Ok(Self {
            bias,
            relative,
            queries_used,
            min_exposures_per_position,
        })
    }

    pub fn page_size(&self) -> usize {
        self.bias.len()
    }

    /// Bias at a 1-based position.
    pub fn at(&self, position: u32) -> Option<f64> {
        self.bias.get((position as usize).checked_sub(1)?).copied()
    }
}

fn counted(event: &ImpressionEvent) -> bool {
    event.bucket == Bucket::Randomized && event.page == 1
}

/// Overall click rate of a query over its randomized first-page exposures,
/// or `None` when it has none.
pub fn estimate_real_ctr<'a, I>(events: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a ImpressionEvent>,
{
    let (clicks, exposures) = events
        .into_iter()
        .filter(|e| counted(e))
        .fold((0u64, 0u64), |(c, n), e| (c + e.clicked as u64, n + 1));
    (exposures > 0).then(|| clicks as f64 / exposures as f64)
}

/// Click rate at a 1-based position, or `None` below the exposure floor.
pub fn estimate_position_ctr<'a, I>(events: I, position: u32, min_exposures: u64) -> Option<f64>
where
    I: IntoIterator<Item = &'a ImpressionEvent>,
{
    let (clicks, exposures) = events
        .into_iter()
        .filter(|e| counted(e) && e.position == position)
        .fold((0u64, 0u64), |(c, n), e| (c + e.clicked as u64, n + 1));
    (exposures > 0 && exposures >= min_exposures).then(|| clicks as f64 / exposures as f64)
}

#[derive(Default, Clone)]
struct Counts {
    clicks: Vec<u64>,
    exposures: Vec<u64>,
}

/// Per-query ratio of positional CTR to overall CTR, averaged without
/// weights over queries that clear the exposure floor at every position.
pub fn estimate_bias<'a, I>(events: I, config: &BiasConfig) -> Result<PositionBiasTable>
where
    I: IntoIterator<Item = &'a ImpressionEvent>,
{
    let p = config.page_size;
    let mut per_query: BTreeMap<QueryId, Counts> = BTreeMap::new();
    for e in events.into_iter().filter(|e| counted(e)) {
        let slot = e.position as usize;
        if slot == 0 || slot > p {
            return Err(Error::Precondition(format!(
                "event position {} outside 1..={p}",
                e.position
            )));
        }
        let c = per_query.entry(e.query_id).or_insert_with(|| Counts {
            clicks: vec![0; p],
            exposures: vec![0; p],
        });
        c.exposures[slot - 1] += 1;
        c.clicks[slot - 1] += e.clicked as u64;
    }

    let mut sums = vec![0.0; p];
    let mut used = 0usize;
    let mut below_floor = 0usize;
    let mut no_clicks = 0usize;
    for counts in per_query.values() {
        if counts
            .exposures
            .iter()
            .any(|&n| n < config.min_exposures_per_position.max(1))
        {
            below_floor += 1;
            continue;
        }
        let clicks: u64 = counts.clicks.iter().sum();
        let exposures: u64 = counts.exposures.iter().sum();
        if clicks == 0 {
            no_clicks += 1;
            continue;
        }
        let real = clicks as f64 / exposures as f64;
        for ((sum, &c), &n) in sums.iter_mut().zip(&counts.clicks).zip(&counts.exposures) {
            *sum += c as f64 / n as f64 / real;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Estimation(format!(
            "no query qualifies: {} queries with randomized traffic, {below_floor} below the \
             per-position floor of {}, {no_clicks} without clicks",
            per_query.len(),
            config.min_exposures_per_position
        )));
    }
    let bias = sums.into_iter().map(|s| s / used as f64).collect();
    PositionBiasTable::from_bias(bias, used, config.min_exposures_per_position)
}
