//! Wall-clock comparison of the full forward pass and the precomputed path.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use lwr_core::corpus::TextSequence;
use lwr_core::masm::{predict, MasmParameters};
use lwr_core::serving::FastScorer;

use crate::error::{LwrError, Result};

pub const REPETITIONS: usize = 5;
pub const MIN_PAIRS: usize = 1000;

/// One benchmark pair, addressable both by text and by id.
#[derive(Debug, Clone)]
pub struct BenchPair<'a> {
    pub query: &'a TextSequence,
    pub title: &'a TextSequence,
    pub query_id: &'a str,
    pub product_id: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_pairs: usize,
    pub repetitions: usize,
    pub full_ns_per_pair: f64,
    pub precomputed_ns_per_pair: f64,
    pub speedup: f64,
    /// Largest |full − precomputed| over the benchmarked pairs.
    pub max_abs_diff: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_pass(mut f: impl FnMut() -> Result<f64>) -> Result<(f64, f64)> {
    let start = Instant::now();
    let checksum = f()?;
    Ok((start.elapsed().as_nanos() as f64, checksum))
}

/// Times both paths after one warm-up pass each and reports the median of
/// [`REPETITIONS`] timed passes.
pub fn run_bench(params: &MasmParameters, scorer: &FastScorer, pairs: &[BenchPair<'_>]) -> Result<BenchReport> {
    if pairs.len() < MIN_PAIRS {
        return Err(LwrError::Usage(format!("bench needs at least {MIN_PAIRS} pairs, got {}", pairs.len())));
    }
    let full_pass = || -> Result<f64> {
        let mut acc = 0.0;
        for p in pairs {
            acc += predict(black_box(p.query), black_box(p.title), params)?;
        }
        Ok(black_box(acc))
    };
    let fast_pass = || -> Result<f64> {
        let mut acc = 0.0;
        for p in pairs {
            acc += scorer.score_ids(black_box(p.query_id), black_box(p.product_id))?;
        }
        Ok(black_box(acc))
    };

    let mut max_abs_diff: f64 = 0.0;
    for p in pairs {
        let full = predict(p.query, p.title, params)?;
        let fast = scorer.score_ids(p.query_id, p.product_id)?;
        max_abs_diff = max_abs_diff.max((full - fast).abs());
    }

    time_pass(full_pass)?;
    time_pass(fast_pass)?;
    let mut full_ns = Vec::with_capacity(REPETITIONS);
    let mut fast_ns = Vec::with_capacity(REPETITIONS);
    for _ in 0..REPETITIONS {
        full_ns.push(time_pass(full_pass)?.0);
        fast_ns.push(time_pass(fast_pass)?.0);
    }
    let n = pairs.len() as f64;
    let full = median(full_ns) / n;
    let fast = median(fast_ns) / n;
    Ok(BenchReport {
        n_pairs: pairs.len(),
        repetitions: REPETITIONS,
        full_ns_per_pair: full,
        precomputed_ns_per_pair: fast,
        speedup: full / fast.max(f64::MIN_POSITIVE),
        max_abs_diff,
    })
}
