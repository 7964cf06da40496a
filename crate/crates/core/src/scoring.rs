//! Weighted satisfaction, the exact conditional probability of a concept
//! assignment given its category, and the relaxed identification test.
//!
//! Both sides of the identification inequality share the same partition
//! function, so [`identify`] only needs `exp(S - S_max)` and never enumerates
//! unless [`SmaxMode::Exact`] is requested.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor_graph::{binarize, Assignment, FactorGraph, GraphError};

pub const DEFAULT_ENUMERATION_CAP: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("exact enumeration over {num_concepts} concepts exceeds the cap of {cap}")]
    EnumerationCap { num_concepts: usize, cap: usize },
    #[error("identification threshold {0} outside [0,1]")]
    Threshold(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SmaxMode {
    /// Maximum over all concept assignments at the fixed category.
    Exact,
    /// Sum of all weights; exact whenever the rules are jointly satisfiable.
    #[default]
    AllSatisfied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Comprehensible,
    LogicError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    pub threshold: f64,
    pub mode: SmaxMode,
    pub cap: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig { threshold: DEFAULT_THRESHOLD, mode: SmaxMode::AllSatisfied, cap: DEFAULT_ENUMERATION_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub satisfaction: f64,
    pub total_weight: f64,
    pub log_partition: Option<f64>,
    pub conditional_probability: Option<f64>,
    pub max_satisfaction: f64,
    pub ratio: f64,
    pub lsm: f64,
    pub verdict: Verdict,
}

/// S = Σ w_i ψ_i.
pub fn satisfaction_weight(graph: &FactorGraph, assignment: &Assignment) -> f64 {
    graph
        .factors()
        .iter()
        .enumerate()
        .filter(|(i, _)| graph.evaluate_potential(*i, assignment))
        .map(|(_, f)| f.weight)
        .sum()
}

/// Σ w_i (1 − ψ_i): the weight of violated rules.
pub fn violated_weight(graph: &FactorGraph, assignment: &Assignment) -> f64 {
    graph
        .factors()
        .iter()
        .enumerate()
        .filter(|(i, _)| !graph.evaluate_potential(*i, assignment))
        .map(|(_, f)| f.weight)
        .sum()
}

pub(crate) fn satisfaction_mask(graph: &FactorGraph, concepts: u64, category: usize) -> f64 {
    graph
        .factors()
        .iter()
        .enumerate()
        .filter(|(i, _)| graph.potential_mask(*i, concepts, category))
        .map(|(_, f)| f.weight)
        .sum()
}

pub(crate) fn check_cap(graph: &FactorGraph, cap: usize) -> Result<(), ScoreError> {
    let m = graph.num_concepts();
    if m > cap || m >= 63 {
        return Err(ScoreError::EnumerationCap { num_concepts: m, cap });
    }
    Ok(())
}

/// Numerically stable log(Σ exp(x)).
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    // streaming form: keep running max and rescaled sum
    let (max, sum) = values.into_iter().fold((f64::NEG_INFINITY, 0.0f64), |(max, sum), x| {
        if x <= max {
            (max, sum + (x - max).exp())
        } else {
            (x, sum * (max - x).exp() + 1.0)
        }
    });
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + sum.ln()
}

/// log a: log of the sum over all 2^M concept assignments of exp(S) at `category`.
pub fn log_partition(graph: &FactorGraph, category: usize, cap: usize) -> Result<f64, ScoreError> {
    check_cap(graph, cap)?;
    let m = graph.num_concepts();
    Ok(log_sum_exp((0u64..1 << m).map(|mask| satisfaction_mask(graph, mask, category))))
}

/// ℙ(concepts | category) under the log-linear model.
pub fn conditional_probability(graph: &FactorGraph, assignment: &Assignment, cap: usize) -> Result<f64, ScoreError> {
    let log_a = log_partition(graph, assignment.category(), cap)?;
    Ok((satisfaction_weight(graph, assignment) - log_a).exp())
}

/// Upper bound S_max on the weighted satisfaction at `category`.
pub fn max_satisfaction(graph: &FactorGraph, category: usize, mode: SmaxMode, cap: usize) -> Result<f64, ScoreError> {
    match mode {
        SmaxMode::AllSatisfied => Ok(graph.total_weight()),
        SmaxMode::Exact => {
            check_cap(graph, cap)?;
            let m = graph.num_concepts();
            Ok((0u64..1 << m)
                .map(|mask| satisfaction_mask(graph, mask, category))
                .fold(if graph.num_factors() == 0 { 0.0 } else { f64::NEG_INFINITY }, f64::max))
        }
    }
}

/// S_max − S, never negative.
fn satisfaction_gap(
    graph: &FactorGraph,
    assignment: &Assignment,
    cfg: &IdentifyConfig,
) -> Result<(f64, f64), ScoreError> {
    match cfg.mode {
        SmaxMode::AllSatisfied => Ok((violated_weight(graph, assignment), graph.total_weight())),
        SmaxMode::Exact => {
            let s_max = max_satisfaction(graph, assignment.category(), SmaxMode::Exact, cfg.cap)?;
            Ok(((s_max - satisfaction_weight(graph, assignment)).max(0.0), s_max))
        }
    }
}

fn verdict_from_gap(gap: f64, s_max: f64, threshold: f64) -> Verdict {
    // an assignment attaining the bound is comprehensible for every threshold, including 1
    let attained = gap <= 1e-12 * s_max.abs().max(1.0);
    if attained || (-gap).exp() > threshold {
        Verdict::Comprehensible
    } else {
        Verdict::LogicError
    }
}

/// Relaxed identification on an already binarized assignment.
pub fn identify_assignment(
    graph: &FactorGraph,
    assignment: &Assignment,
    cfg: &IdentifyConfig,
) -> Result<Verdict, ScoreError> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(ScoreError::Threshold(cfg.threshold));
    }
    let (gap, s_max) = satisfaction_gap(graph, assignment, cfg)?;
    Ok(verdict_from_gap(gap, s_max, cfg.threshold))
}

/// Binarizes `activation` at `predicted_category` and applies the identification test.
pub fn identify(
    graph: &FactorGraph,
    activation: &[f64],
    predicted_category: usize,
    cfg: &IdentifyConfig,
) -> Result<Verdict, ScoreError> {
    let assignment = binarize(activation, predicted_category, graph.schema())?;
    identify_assignment(graph, &assignment, cfg)
}

/// exp(S − W) in (0, 1]; 1 iff every weighted rule holds.
pub fn instance_lsm(graph: &FactorGraph, assignment: &Assignment) -> f64 {
    (-violated_weight(graph, assignment)).exp()
}

/// Full report; the partition function is only computed when `with_probability`.
pub fn score(
    graph: &FactorGraph,
    assignment: &Assignment,
    cfg: &IdentifyConfig,
    with_probability: bool,
) -> Result<ScoreReport, ScoreError> {
    let satisfaction = satisfaction_weight(graph, assignment);
    let (gap, s_max) = satisfaction_gap(graph, assignment, cfg)?;
    let (log_partition, conditional_probability) = if with_probability {
        let log_a = log_partition(graph, assignment.category(), cfg.cap)?;
        (Some(log_a), Some((satisfaction - log_a).exp()))
    } else {
        (None, None)
    };
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(ScoreError::Threshold(cfg.threshold));
    }
    Ok(ScoreReport {
        satisfaction,
        total_weight: graph.total_weight(),
        log_partition,
        conditional_probability,
        max_satisfaction: s_max,
        ratio: (-gap).exp(),
        lsm: instance_lsm(graph, assignment),
        verdict: verdict_from_gap(gap, s_max, cfg.threshold),
    })
}
