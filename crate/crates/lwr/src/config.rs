//! Run configuration for the synthetic benchmark and its dataset splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use lwr_core::clicksim::{seeded_rng, LabelledPair, WorldConfig};
use lwr_core::masm::ModelConfig;
use lwr_core::pipeline::{BiasConfig, LwrConfig, LwrRecord};
use lwr_core::training::TrainConfig;

/// How the ground-truth labelled pairs are drawn and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSplitConfig {
    pub n_pairs: usize,
    /// Share of Good pairs, matching the label skew of annotated search data.
    pub positive_share: f64,
    /// Candidates per query the pairs are drawn from.
    pub pool_depth: usize,
    pub finetune_share: f64,
    pub val_share: f64,
}

impl Default for EvalSplitConfig {
    fn default() -> Self {
        Self {
            n_pairs: 3000,
            positive_share: 0.8,
            pool_depth: 40,
            finetune_share: 0.4,
            val_share: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub n_sessions: usize,
    pub bias: BiasConfig,
    pub lwr: LwrConfig,
    /// Share of level-wise records held out for per-type score statistics.
    pub heldout_share: f64,
    pub max_click_pairs: usize,
    pub vocab_min_freq: usize,
    pub max_vocab: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub click: TrainConfig,
    pub finetune: TrainConfig,
    pub eval: EvalSplitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig {
            learning_rate: 3e-3,
            max_epochs: 40,
            early_stop_patience: 10,
            ..TrainConfig::default()
        };
        Self {
            seed: 42,
            world: WorldConfig::default(),
            n_sessions: 60_000,
            bias: BiasConfig::default(),
            lwr: LwrConfig::default(),
            heldout_share: 0.1,
            max_click_pairs: 20_000,
            vocab_min_freq: 1,
            max_vocab: 50_000,
            model: ModelConfig {
                l1_normalize_aspects: true,
                ..ModelConfig::default()
            },
            // About the same number of optimizer steps as the level-wise run.
            click: TrainConfig {
                max_epochs: 15,
                early_stop_patience: 3,
                ..train.clone()
            },
            finetune: TrainConfig {
                max_epochs: 10,
                early_stop_patience: 3,
                ..train.clone()
            },
            train,
            eval: EvalSplitConfig::default(),
        }
    }
}

impl RunConfig {
    /// Pushes one seed into every stochastic component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.world.seed = seed;
        self.lwr.seed = seed;
        self.train.shuffle_seed = seed;
        self.click.shuffle_seed = seed;
        self.finetune.shuffle_seed = seed;
        self
    }

    /// Applies a (possibly partial) JSON document over the defaults; nested
    /// objects merge key by key, so `{"train": {"max_epochs": 2}}` keeps
    /// every other training setting.
    pub fn from_overlay(overlay: serde_json::Value) -> serde_json::Result<Self> {
        let mut base = serde_json::to_value(Self::default())?;
        merge(&mut base, overlay);
        serde_json::from_value(base)
    }
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Splits records into (train, held-out) by a seeded shuffle; both halves
/// keep the input order.
pub fn split_heldout(records: &[LwrRecord], share: f64, seed: u64) -> (Vec<LwrRecord>, Vec<LwrRecord>) {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut seeded_rng(seed, 30));
    let n_held = (records.len() as f64 * share).round() as usize;
    let mut held: Vec<usize> = idx[..n_held].to_vec();
    let mut train: Vec<usize> = idx[n_held..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    (
        train.into_iter().map(|i| records[i]).collect(),
        held.into_iter().map(|i| records[i]).collect(),
    )
}

/// Splits labelled pairs into (finetune, val, test) in sampled order.
pub fn split_eval(
    pairs: &[LabelledPair],
    cfg: &EvalSplitConfig,
) -> (Vec<LabelledPair>, Vec<LabelledPair>, Vec<LabelledPair>) {
    let n = pairs.len();
    let n_ft = (n as f64 * cfg.finetune_share).round() as usize;
    let n_val = (n as f64 * cfg.val_share).round() as usize;
    (
        pairs[..n_ft].to_vec(),
        pairs[n_ft..n_ft + n_val].to_vec(),
        pairs[n_ft + n_val..].to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use lwr_core::clicksim::{ProductId, QueryId};
    use lwr_core::pipeline::RelevanceType;

    fn records(n: u32) -> Vec<LwrRecord> {
        (0..n)
            .map(|i| LwrRecord {
                query_id: QueryId(i / 10),
                product_id: ProductId(i),
                rtype: RelevanceType::ALL[(i % 5) as usize],
            })
            .collect()
    }

    #[test]
    fn heldout_split_partitions_and_is_seeded() {
        let r = records(200);
        let (train, held) = split_heldout(&r, 0.1, 7);
        assert_eq!(held.len(), 20);
        assert_eq!(train.len() + held.len(), r.len());
        let mut all: Vec<LwrRecord> = train.iter().chain(&held).copied().collect();
        all.sort();
        assert_eq!(all, r);
        assert!(train.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(split_heldout(&r, 0.1, 7), (train.clone(), held.clone()));
        assert_ne!(split_heldout(&r, 0.1, 8).1, held);
    }

    #[test]
    fn eval_split_is_contiguous() {
        let pairs: Vec<LabelledPair> = (0..10)
            .map(|i| LabelledPair {
                query_id: QueryId(i),
                product_id: ProductId(i),
                label: (i % 2) as u8,
            })
            .collect();
        let (ft, val, test) = split_eval(&pairs, &EvalSplitConfig::default());
        assert_eq!((ft.len(), val.len(), test.len()), (4, 2, 4));
        assert_eq!(ft[0].query_id, QueryId(0));
        assert_eq!(val[0].query_id, QueryId(4));
        assert_eq!(test[0].query_id, QueryId(6));
    }

    #[test]
    fn seed_reaches_every_component() {
        let c = RunConfig::default().with_seed(9);
        assert_eq!(c.world.seed, 9);
        assert_eq!(c.lwr.seed, 9);
        assert_eq!(c.train.shuffle_seed, 9);
        assert_eq!(c.click.shuffle_seed, 9);
        assert_eq!(c.finetune.shuffle_seed, 9);
    }

    #[test]
    fn partial_config_files_fill_defaults() {
        let overlay = serde_json::json!({"n_sessions": 10, "train": {"max_epochs": 2}});
        let c = RunConfig::from_overlay(overlay).unwrap();
        let d = RunConfig::default();
        assert_eq!(c.n_sessions, 10);
        assert_eq!(c.train.max_epochs, 2);
        assert_eq!(c.train.learning_rate, d.train.learning_rate);
        assert_eq!(c.model, d.model);
        assert_eq!(c.eval, d.eval);
    }

    #[test]
    fn overlay_rejects_wrong_types() {
        assert!(RunConfig::from_overlay(serde_json::json!({"n_sessions": "many"})).is_err());
    }
}
