//! Pareto-guided weighting of objective gradients.
//!
//! Given the θ_f gradients `G = [g_0 … g_k]` of all objectives and the
//! gradient `g_optd` of the classification loss on the Mixup guidance set,
//! [`solve_lp`] picks simplex weights `ω*` so that `d* = Gω*` either follows
//! the guidance direction or, when guidance cannot be followed, descends on
//! every objective. [`theorem1_check`] verifies that dichotomy numerically.

mod guidance;
mod problem;
pub mod simplex;

pub use guidance::{compute_guidance, fuse_and_apply, fuse_weights_and_apply, Guidance, GuidanceMode};
pub use problem::{
    build_index_sets, solve_lp, theorem1_check, ConstraintSet, ConstraintSlack, GradientProblem,
    IndexSets, LpStatus, Mode, Predicate, SimplexWeights, Theorem1Branch, Theorem1Report,
    DESCENT_TOL, TIE_TOL,
};
