//! Losses, Adam, and the shared mini-batch loop with validation early stopping.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clicksim::seeded_rng;
use crate::corpus::{AnnotatedPair, TextSequence};
use crate::error::{Error, Result};
use crate::eval::{neg_pr_auc, roc_auc, score_pairs};
use crate::masm::{backward, backward_logit, forward, MasmParameters};
use crate::math;
use crate::pipeline::{LwrExample, RelevanceType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations without a validation ROC-AUC improvement before stopping.
    pub early_stop_patience: usize,
    pub shuffle_seed: u64,
    /// Batches between evaluations; 0 evaluates once per epoch.
    pub eval_every: usize,
    /// Build batches that keep every relevance type at its dataset share.
    pub stratified: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            max_epochs: 10,
            early_stop_patience: 3,
            shuffle_seed: 42,
            eval_every: 0,
            stratified: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta2", "must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Level-wise threshold hinge: returns `(loss, dloss/ds)`.
pub fn lwr_loss(s: f64, rtype: RelevanceType) -> (f64, f64) {
    let t = rtype.threshold();
    let sign = if t > 0.5 { 1.0 } else { -1.0 };
    let v = sign * (t - s);
    if v > 0.0 {
        (v, -sign)
    } else {
        (0.0, 0.0)
    }
}

/// Mean squared error over a batch.
pub fn mse_loss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Shape(format!(
            "mse over {} scores and {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let sum: f64 = scores.iter().zip(labels).map(|(s, &l)| (l as f64 - s) * (l as f64 - s)).sum();
    Ok(sum / scores.len() as f64)
}

/// Logistic pair loss on pre-sigmoid logits.
pub fn pairwise_click_loss(z_pos: f64, z_neg: f64) -> f64 {
    math::softplus(-(z_pos - z_neg))
}

/// `d loss / d z_pos`; the gradient for `z_neg` is its negation.
pub fn pairwise_click_grad(z_pos: f64, z_neg: f64) -> f64 {
    -math::sigmoid(-(z_pos - z_neg))
}

/// Adam moments mirroring the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: MasmParameters,
    pub v: MasmParameters,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(params: &MasmParameters) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. The PAD embedding row is never touched.
pub fn adam_step(
    params: &mut MasmParameters,
    grads: &MasmParameters,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    params.check_same_layout(grads)?;
    params.check_same_layout(&state.m)?;
    params.check_same_layout(&state.v)?;
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, lr, eps) = (config.beta1, config.beta2, config.learning_rate, config.epsilon);
    let c1 = 1.0 - math::powi(b1, t);
    let c2 = 1.0 - math::powi(b2, t);
    let d = params.config.d;
    let tensors = params
        .named_tensors_mut()
        .into_iter()
        .zip(grads.named_tensors())
        .zip(state.m.named_tensors_mut())
        .zip(state.v.named_tensors_mut());
    for ((((name, p), (_, g)), (_, m)), (_, v)) in tensors {
        let skip = if name == "embedding" { d } else { 0 };
        for i in skip..p.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
            let m_hat = m.data[i] / c1;
            let v_hat = v.data[i] / c2;
            p.data[i] -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

/// Clicked/unclicked titles from one session, for the pairwise click baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickExample {
    pub query: TextSequence,
    pub clicked: TextSequence,
    pub unclicked: TextSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: u64,
    pub epoch: usize,
    /// Mean batch loss since the previous evaluation; absent at step 0.
    pub train_loss: Option<f64>,
    pub val_roc_auc: f64,
    pub val_neg_pr_auc: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the highest recorded validation ROC-AUC.
    pub best: MasmParameters,
    pub best_step: u64,
    pub best_val_roc_auc: f64,
    pub log: Vec<TrainLogEntry>,
    pub batch_losses: Vec<f64>,
    pub steps: u64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Shuffled epoch order; in stratified mode each type is spread evenly.
fn epoch_order(n: usize, strata: Option<&[usize]>, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = seeded_rng(seed, 0x5eed_0000 + epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let Some(strata) = strata else {
        return order;
    };
    let n_groups = strata.iter().copied().max().map_or(0, |m| m + 1);
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for &i in &order {
        queues[strata[i]].push(i);
    }
    let totals: Vec<usize> = queues.iter().map(Vec::len).collect();
    let mut taken = vec![0usize; n_groups];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        // next group is the one furthest behind its share
        let g = (0..n_groups)
            .filter(|&g| taken[g] < totals[g])
            .min_by(|&a, &b| {
                let fa = (taken[a] + 1) as f64 / totals[a] as f64;
                let fb = (taken[b] + 1) as f64 / totals[b] as f64;
                fa.total_cmp(&fb).then(a.cmp(&b))
            })
            .expect("remaining items");
        out.push(queues[g][taken[g]]);
        taken[g] += 1;
    }
    out
}

fn validation_metrics(params: &MasmParameters, val: &[AnnotatedPair]) -> Result<(f64, f64)> {
    let (scores, labels) = score_pairs(params, val)?;
    Ok((roc_auc(&scores, &labels)?, neg_pr_auc(&scores, &labels)?))
}

fn check_validation(val: &[AnnotatedPair]) -> Result<()> {
    let good = val.iter().filter(|p| p.label != 0).count();
    if good == 0 || good == val.len() {
        return Err(Error::Dataset(format!(
            "validation set needs Good and Bad pairs, has {good} Good of {}",
            val.len()
        )));
    }
    Ok(())
}

/// Mini-batch loop shared by all objectives. `sample` accumulates one
/// example's gradient into `grads` and returns its loss.
fn run_loop<F>(
    init: MasmParameters,
    n: usize,
    strata: Option<&[usize]>,
    val: &[AnnotatedPair],
    config: &TrainConfig,
    mut sample: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &MasmParameters, &mut MasmParameters) -> Result<f64>,
{
    config.validate()?;
    check_validation(val)?;
    let mut params = init;
    let mut state = OptimizerState::new(&params);
    let mut grads = params.zeros_like();

    let (auc0, pr0) = validation_metrics(&params, val)?;
    let mut best = params.clone();
    let mut best_auc = auc0;
    let mut best_step = 0;
    let mut log = vec![TrainLogEntry {
        step: 0,
        epoch: 0,
        train_loss: None,
        val_roc_auc: auc0,
        val_neg_pr_auc: pr0,
        best_so_far: auc0,
    }];
    info!("step 0: val roc_auc {auc0:.4}");

    let mut batch_losses = Vec::new();
    let mut since_eval = Vec::new();
    let mut stale = 0;
    let mut step: u64 = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;

    'epochs: for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        let order = epoch_order(n, strata, config.shuffle_seed, epoch);
        let n_batches = order.len().div_ceil(config.batch_size);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill_zero();
            let mut loss = 0.0;
            for &i in batch {
                loss += sample(i, &params, &mut grads)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.scale(inv);
            loss *= inv;
            adam_step(&mut params, &grads, &mut state, config)?;
            step += 1;
            batch_losses.push(loss);
            since_eval.push(loss);

            let due = if config.eval_every == 0 {
                b + 1 == n_batches
            } else {
                step.is_multiple_of(config.eval_every as u64) || (b + 1 == n_batches && epoch + 1 == config.max_epochs)
            };
            if !due {
                continue;
            }
            let (auc, pr) = validation_metrics(&params, val)?;
            let train_loss = since_eval.iter().sum::<f64>() / since_eval.len() as f64;
            since_eval.clear();
            if auc > best_auc {
                best_auc = auc;
                best = params.clone();
                best_step = step;
                stale = 0;
            } else {
                stale += 1;
            }
            log.push(TrainLogEntry {
                step,
                epoch: epoch + 1,
                train_loss: Some(train_loss),
                val_roc_auc: auc,
                val_neg_pr_auc: pr,
                best_so_far: best_auc,
            });
            debug!("step {step} epoch {}: loss {train_loss:.5} val roc_auc {auc:.4}", epoch + 1);
            if stale >= config.early_stop_patience {
                stopped_early = true;
                break 'epochs;
            }
        }
    }
    info!("best val roc_auc {best_auc:.4} at step {best_step}");
    Ok(TrainOutcome {
        best,
        best_step,
        best_val_roc_auc: best_auc,
        log,
        batch_losses,
        steps: step,
        epochs_run,
        stopped_early,
    })
}

/// Trains with the level-wise threshold loss.
pub fn train_lwr(
    dataset: &[LwrExample],
    val: &[AnnotatedPair],
    init: MasmParameters,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let positives = dataset.iter().filter(|e| e.rtype.is_positive()).count();
    if positives == 0 || positives == dataset.len() {
        return Err(Error::Dataset(format!(
            "level-wise training needs positive and negative types; got {positives} positive of {} examples",
            dataset.len()
        )));
    }
    let strata: Vec<usize> = dataset.iter().map(|e| e.rtype.index()).collect();
    let strata = config.stratified.then_some(strata.as_slice());
    run_loop(init, dataset.len(), strata, val, config, |i, params, grads| {
        let ex = &dataset[i];
        let out = forward(&ex.query, &ex.title, params)?;
        let (loss, d_s) = lwr_loss(out.s_final(), ex.rtype);
        if d_s != 0.0 {
            backward(&out.trace, d_s, params, grads)?;
        }
        Ok(loss)
    })
}

/// Supervised fine-tuning on binary labels with a fresh optimizer.
pub fn finetune(
    init: MasmParameters,
    pairs: &[AnnotatedPair],
    val: &[AnnotatedPair],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::Dataset("no annotated pairs to fine-tune on".into()));
    }
    run_loop(init, pairs.len(), None, val, config, |i, params, grads| {
        let p = &pairs[i];
        let out = forward(&p.query, &p.title, params)?;
        let s = out.s_final();
        let diff = s - p.label as f64;
        if diff != 0.0 {
            backward(&out.trace, 2.0 * diff, params, grads)?;
        }
        Ok(diff * diff)
    })
}

/// Pairwise clicked-over-unclicked baseline.
pub fn train_click(
    pairs: &[ClickExample],
    val: &[AnnotatedPair],
    init: MasmParameters,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::Dataset("no click pairs".into()));
    }
    run_loop(init, pairs.len(), None, val, config, |i, params, grads| {
        let ex = &pairs[i];
        let pos = forward(&ex.query, &ex.clicked, params)?;
        let neg = forward(&ex.query, &ex.unclicked, params)?;
        let (zp, zn) = (pos.score.logit, neg.score.logit);
        let g = pairwise_click_grad(zp, zn);
        backward_logit(&pos.trace, g, params, grads)?;
        backward_logit(&neg.trace, -g, params, grads)?;
        Ok(pairwise_click_loss(zp, zn))
    })
}
