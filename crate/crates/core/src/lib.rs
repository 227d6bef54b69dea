//! Additive comment-quality score over 20 deliberation criteria.
//!
//! Per-criterion predictions (levels 0–3) are combined with correlation
//! weights into a raw score, then rescaled to `[0, 5]` using the score
//! bounds implied by the weights.

pub mod corpus;
pub mod criterion;
pub mod eval;
pub mod fmt;
pub mod predict;
pub mod score;
pub mod weights;

pub use criterion::{Criterion, CriterionMap, Dimension, DEFAULT_MAX_LEVEL, NUM_CRITERIA};
pub use score::{aqua_score, AquaScore, PredictionVector};
pub use weights::{default_weights, WeightTable};
