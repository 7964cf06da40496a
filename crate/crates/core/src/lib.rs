//! Rule-based logic-error identification and repair for concept-bottleneck predictions.
//!
//! A rule file over concept variables `c<i>` and category variables `y<j>` is
//! compiled into a weighted factor graph. Predictions are scored against it,
//! flagged when their satisfaction falls too far below the achievable maximum,
//! and repaired by flipping concepts so that violated rules become satisfied.

pub mod attacks;
pub mod evaluation;
pub mod experiment;
pub mod factor_graph;
pub mod intervention;
pub mod rule_lang;
pub mod scoring;
pub mod synthbench;
pub mod weights;
