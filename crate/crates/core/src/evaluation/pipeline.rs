use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{detection_rates, e_acc, lsm_mean, p_acc, Counts, MetricsReport};
use super::EvalError;
use crate::factor_graph::{binarize, FactorGraph};
use crate::intervention::{repair, RepairConfig};
use crate::scoring::{identify_assignment, instance_lsm, satisfaction_weight, IdentifyConfig, ScoreError, Verdict};
use crate::synthbench::{predict_category, CategorySignature, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub identify: IdentifyConfig,
    pub max_passes: usize,
    pub repair: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            identify: IdentifyConfig::default(),
            max_passes: RepairConfig::default().max_passes,
            repair: true,
        }
    }
}

/// Outcome of identify → repair → re-predict for one instance.
///
/// `satisfaction_*` and `lsm_*` are measured on the reference graph, which may
/// differ from the graph used for identification and repair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub index: usize,
    pub true_category: usize,
    pub predicted_category: usize,
    /// At least one concept was moved by an attack.
    pub attacked: bool,
    pub verdict: Verdict,
    pub flips: Vec<usize>,
    pub satisfaction_before: f64,
    pub satisfaction_after: f64,
    pub lsm_before: f64,
    pub lsm_after: f64,
    pub true_concepts: Vec<bool>,
    pub activation: Vec<f64>,
    pub rectified: Vec<f64>,
    pub predicted_after: usize,
}

/// Graphs used by the pipeline: `active` drives identification and repair,
/// `reference` is what satisfaction and LSM are reported against.
#[derive(Clone, Copy)]
pub struct Graphs<'a> {
    pub reference: &'a FactorGraph,
    pub active: &'a FactorGraph,
}

impl<'a> Graphs<'a> {
    pub fn same(graph: &'a FactorGraph) -> Self {
        Graphs { reference: graph, active: graph }
    }
}

pub fn process_instance(
    graphs: Graphs<'_>,
    index: usize,
    instance: &Instance,
    signatures: &[CategorySignature],
    cfg: &PipelineConfig,
) -> Result<InstanceResult, ScoreError> {
    let y_hat = instance.predicted_category;
    let before = binarize(&instance.activation, y_hat, graphs.reference.schema())?;
    let active_before = binarize(&instance.activation, y_hat, graphs.active.schema())?;
    let verdict = identify_assignment(graphs.active, &active_before, &cfg.identify)?;
    let (rectified, flips) = if cfg.repair && verdict == Verdict::LogicError {
        let rcfg = RepairConfig { max_passes: cfg.max_passes, identify: cfg.identify, force: true };
        let plan = repair(graphs.active, &instance.activation, y_hat, &rcfg)?;
        let flips = (0..plan.mask.len()).filter(|&j| plan.mask[j]).collect();
        (plan.rectified, flips)
    } else {
        (instance.activation.clone(), Vec::new())
    };
    let after = binarize(&rectified, y_hat, graphs.reference.schema())?;
    Ok(InstanceResult {
        index,
        true_category: instance.true_category,
        predicted_category: y_hat,
        attacked: instance.attack.as_ref().is_some_and(|a| !a.flipped.is_empty()),
        verdict,
        flips,
        satisfaction_before: satisfaction_weight(graphs.reference, &before),
        satisfaction_after: satisfaction_weight(graphs.reference, &after),
        lsm_before: instance_lsm(graphs.reference, &before),
        lsm_after: instance_lsm(graphs.reference, &after),
        true_concepts: instance.true_concepts.clone(),
        activation: instance.activation.clone(),
        predicted_after: predict_category(&rectified, signatures),
        rectified,
    })
}

/// Runs every instance in parallel; results keep input order. Instances that
/// fail are returned as errors in place and never abort the batch.
pub fn process_split(
    graphs: Graphs<'_>,
    instances: &[Instance],
    signatures: &[CategorySignature],
    cfg: &PipelineConfig,
) -> Vec<Result<InstanceResult, ScoreError>> {
    instances.par_iter().enumerate().map(|(i, inst)| process_instance(graphs, i, inst, signatures, cfg)).collect()
}

/// Summarizes one split. For a clean split SR is reported; for an attacked
/// split IR is computed over instances with at least one achieved flip.
pub fn summarize(
    label: &str,
    budget: Option<usize>,
    results: &[InstanceResult],
    failed: usize,
    signatures: &[CategorySignature],
) -> Result<MetricsReport, EvalError> {
    let verdicts = |attacked: bool| -> Vec<Verdict> {
        results.iter().filter(|r| r.attacked == attacked).map(|r| r.verdict).collect()
    };
    let (clean_v, attacked_v) = (verdicts(false), verdicts(true));
    let (ir, sr) = if budget.is_some() {
        (detection_rates(&[], &attacked_v).0, None)
    } else {
        (None, detection_rates(&clean_v, &[]).1)
    };
    let counts = Counts {
        total: results.len(),
        clean: clean_v.len(),
        attacked: attacked_v.len(),
        flagged: attacked_v.iter().filter(|&&v| v == Verdict::LogicError).count(),
        passed: clean_v.iter().filter(|&&v| v == Verdict::Comprehensible).count(),
        repaired: results.iter().filter(|r| !r.flips.is_empty()).count(),
        failed,
    };
    Ok(MetricsReport {
        label: label.to_string(),
        budget,
        lsm_mean: lsm_mean(results.iter().map(|r| r.lsm_after))?,
        lsm_mean_before: lsm_mean(results.iter().map(|r| r.lsm_before))?,
        ir,
        sr,
        e_acc: e_acc(results.iter().map(|r| (&r.rectified[..], &r.true_concepts[..])))?,
        e_acc_before: e_acc(results.iter().map(|r| (&r.activation[..], &r.true_concepts[..])))?,
        p_acc: p_acc(results.iter().map(|r| (&r.rectified[..], r.true_category)), signatures)?,
        p_acc_before: p_acc(results.iter().map(|r| (&r.activation[..], r.true_category)), signatures)?,
        counts,
    })
}

/// Splits results into successes and a failure count.
pub fn partition_results(
    results: Vec<Result<InstanceResult, ScoreError>>,
) -> (Vec<InstanceResult>, Vec<(usize, ScoreError)>) {
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => failed.push((i, e)),
        }
    }
    (ok, failed)
}
