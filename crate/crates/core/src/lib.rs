//! Level-wise relevance learning from click logs.
//!
//! This crate holds the allocation-only core: tokenization and vocabularies,
//! a synthetic click-log world, position-bias estimation and level-wise
//! dataset construction, the multi-aspect semantic model with exact
//! reverse-mode gradients, losses and Adam, ranking metrics, and the
//! precomputed-vector scoring path. Everything that touches files, sockets
//! or clocks lives in the companion `lwr` crate.

#![no_std]
// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod clicksim;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod masm;
pub mod math;
pub mod pipeline;
pub mod serving;
pub mod training;

pub use error::{Error, Result};
