//! Domain-generalization training toolkit.
//!
//! The crate pairs a small feed-forward training core with two Mixup-driven
//! techniques for multi-source domain generalization:
//!
//! * **Pareto-guided optimization.** The shared feature extractor is updated
//!   along `d = G ω`, a convex combination of per-objective gradients. The
//!   weights `ω` come from a small linear program whose preference direction
//!   is the gradient of the classification loss on an out-of-distribution
//!   Mixup set (OPTD), see [`paretolp`].
//! * **Mixup-based model selection.** Checkpoints are ranked by accuracy on a
//!   same-class Mixup validation set (VALD) instead of a plain held-out split,
//!   see [`mixgen`] and [`selection`].
//!
//! [`harness`] ties everything together into an experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datadomains;
pub mod divergediag;
mod error;
pub mod harness;
pub mod mixgen;
pub mod numcore;
pub mod objectives;
pub mod paretolp;
pub mod selection;

pub use error::{Error, Result};
