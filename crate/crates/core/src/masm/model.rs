use alloc::format;

use super::head::{head_backward, score_traced, HeadTrace, ScoreOutput};
use super::params::{MasmParameters, ModelConfig};
use super::tower::{encode_tower_traced, tower_backward, Tower, TowerTrace};
use super::interact;
use crate::corpus::TextSequence;
use crate::error::{Error, Result};

/// Everything backward needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    config: ModelConfig,
    pub query: TowerTrace,
    pub title: TowerTrace,
    head: HeadTrace,
    pub output: ScoreOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub score: ScoreOutput,
    pub trace: Trace,
}

impl ForwardOutput {
    pub fn s_final(&self) -> f64 {
        self.score.s_final
    }
}

pub fn forward(query: &TextSequence, title: &TextSequence, params: &MasmParameters) -> Result<ForwardOutput> {
    let q = encode_tower_traced(query, params, Tower::Query)?;
    let p = encode_tower_traced(title, params, Tower::Product)?;
    let repr = interact(&q.aspects, &p.aspects)?;
    let (score, head) = score_traced(repr, params)?;
    Ok(ForwardOutput {
        score: score.clone(),
        trace: Trace {
            config: params.config.clone(),
            query: q,
            title: p,
            head,
            output: score,
        },
    })
}

/// Final score only.
pub fn predict(query: &TextSequence, title: &TextSequence, params: &MasmParameters) -> Result<f64> {
    Ok(forward(query, title, params)?.score.s_final)
}

/// Accumulates `dL/dθ` into `grads` given `dL/ds_final`.
pub fn backward(trace: &Trace, d_score: f64, params: &MasmParameters, grads: &mut MasmParameters) -> Result<()> {
    let s = trace.output.s_final;
    backward_logit(trace, d_score * s * (1.0 - s), params, grads)
}

/// Accumulates `dL/dθ` into `grads` given the gradient at the pre-sigmoid logit.
pub fn backward_logit(trace: &Trace, d_logit: f64, params: &MasmParameters, grads: &mut MasmParameters) -> Result<()> {
    if trace.config != params.config {
        return Err(Error::Shape(format!(
            "trace recorded for {:?}, parameters are {:?}",
            trace.config, params.config
        )));
    }
    params.check_same_layout(grads)?;
    if d_logit == 0.0 {
        return Ok(());
    }
    let (d_q, d_p) = head_backward(&trace.head, &trace.output, d_logit, params, grads);
    tower_backward(&trace.query, &d_q, params, grads);
    tower_backward(&trace.title, &d_p, params, grads);
    grads.embedding.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
    Ok(())
}
