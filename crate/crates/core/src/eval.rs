//! Ranking metrics against ground-truth Good (1) / Bad (0) labels.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedPair;
use crate::error::{Error, Result};
use crate::masm::{predict, MasmParameters};
use crate::pipeline::{LwrExample, RelevanceType};

pub const HISTOGRAM_BINS: usize = 20;
pub const HISTOGRAM_CSV_HEADER: &str = "bin_low,bin_high,count_good,count_bad";

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Mann-Whitney statistic with tied ranks averaged.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("roc_auc needs both Good and Bad labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] != 0).count();
        pos_rank_sum += mean_rank * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision for retrieving Bad items when ranked by `-score`.
/// Ties keep input order.
pub fn neg_pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_bad = labels.iter().filter(|&&l| l == 0).count();
    if n_bad == 0 {
        return Err(Error::UndefinedMetric("neg_pr_auc needs at least one Bad label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if labels[idx] == 0 {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / n_bad as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count_good: usize,
    pub count_bad: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub bins: Vec<HistogramBin>,
}

impl ScoreHistogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count_good + b.count_bad).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTOGRAM_CSV_HEADER);
        out.push('\n');
        for b in &self.bins {
            let _ = writeln!(out, "{},{},{},{}", b.bin_low, b.bin_high, b.count_good, b.count_bad);
        }
        out
    }
}

/// Equal-width bins over `[0, 1]`; the top edge belongs to the last bin.
pub fn score_histogram(scores: &[f64], labels: &[u8], bins: usize) -> Result<ScoreHistogram> {
    check_lengths(scores, labels)?;
    if bins == 0 {
        return Err(Error::config("bins", "must be at least 1"));
    }
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            bin_low: i as f64 / bins as f64,
            bin_high: (i + 1) as f64 / bins as f64,
            count_good: 0,
            count_bad: 0,
        })
        .collect();
    for (&s, &l) in scores.iter().zip(labels) {
        let idx = ((s.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        if l != 0 {
            out[idx].count_good += 1;
        } else {
            out[idx].count_bad += 1;
        }
    }
    Ok(ScoreHistogram { bins: out })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc_auc: f64,
    pub neg_pr_auc: f64,
    pub n_samples: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub histogram: ScoreHistogram,
    /// Keyed by the snake_case type name.
    pub per_type_medians: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn from_scores(scores: &[f64], labels: &[u8]) -> Result<Self> {
        let n_positive = labels.iter().filter(|&&l| l != 0).count();
        Ok(Self {
            roc_auc: roc_auc(scores, labels)?,
            neg_pr_auc: neg_pr_auc(scores, labels)?,
            n_samples: scores.len(),
            n_positive,
            n_negative: scores.len() - n_positive,
            histogram: score_histogram(scores, labels, HISTOGRAM_BINS)?,
            per_type_medians: BTreeMap::new(),
        })
    }

    /// Fraction of Good samples whose score exceeds `cut`.
    pub fn good_share_above(scores: &[f64], labels: &[u8], cut: f64) -> f64 {
        let good: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l != 0).map(|(&s, _)| s).collect();
        if good.is_empty() {
            return 0.0;
        }
        good.iter().filter(|&&s| s > cut).count() as f64 / good.len() as f64
    }

    pub fn type_median(&self, t: RelevanceType) -> Option<f64> {
        self.per_type_medians.get(t.as_str()).copied()
    }
}

pub fn score_pairs(params: &MasmParameters, pairs: &[AnnotatedPair]) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::with_capacity(pairs.len());
    for p in pairs {
        scores.push(predict(&p.query, &p.title, params)?);
    }
    Ok((scores, pairs.iter().map(|p| p.label).collect()))
}

/// Median score per relevance type over held-out typed pairs.
pub fn per_type_medians(params: &MasmParameters, typed: &[LwrExample]) -> Result<BTreeMap<String, f64>> {
    let mut by_type: Vec<Vec<f64>> = vec![Vec::new(); RelevanceType::ALL.len()];
    for ex in typed {
        by_type[ex.rtype.index()].push(predict(&ex.query, &ex.title, params)?);
    }
    Ok(RelevanceType::ALL
        .iter()
        .filter_map(|t| median(&by_type[t.index()]).map(|m| (String::from(t.as_str()), m)))
        .collect())
}

/// Scores the test pairs and, when given, the typed held-out pairs.
pub fn evaluate(params: &MasmParameters, test: &[AnnotatedPair], typed: &[LwrExample]) -> Result<EvalReport> {
    let (scores, labels) = score_pairs(params, test)?;
    let mut report = EvalReport::from_scores(&scores, &labels)?;
    report.per_type_medians = per_type_medians(params, typed)?;
    Ok(report)
}
