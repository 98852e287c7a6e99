//! From click logs to training data: position-bias estimation on the
//! randomized bucket, bias-calibrated CTR, and the five-level dataset.

mod bias;
mod click_pairs;
mod lwr;

pub use bias::{
    estimate_bias, estimate_position_ctr, estimate_real_ctr, BiasConfig, PositionBiasTable,
};
pub use click_pairs::{build_click_pairs, ClickPairRecord};
pub use lwr::{
    bucket_positives, build_lwr, calibrated_ctr, collect_ctr_stats, gen_strong_irrelevant,
    gen_weak_irrelevant, CtrStat, LwrConfig, LwrExample, LwrOutput, LwrRecord, RelevanceType,
    StatsReport, TypeStats, REFERENCE_MIXTURE,
};
