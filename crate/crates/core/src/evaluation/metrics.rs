use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scoring::Verdict;
use crate::synthbench::{predict_category, CategorySignature};

/// Mean fraction of concepts (binarized at 0.5) matching ground truth, ×100.
pub fn e_acc<'a, I>(pairs: I) -> Result<f64, EvalError>
where
    I: IntoIterator<Item = (&'a [f64], &'a [bool])>,
{
    mean(pairs.into_iter().map(|(act, truth)| {
        let hits = act.iter().zip(truth).filter(|(&a, &t)| (a > 0.5) == t).count();
        hits as f64 / truth.len().max(1) as f64
    }))
    .map(|m| 100.0 * m)
}

/// Accuracy of the category predictor on the given activations, ×100.
pub fn p_acc<'a, I>(pairs: I, signatures: &[CategorySignature]) -> Result<f64, EvalError>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    mean(pairs.into_iter().map(|(act, y)| if predict_category(act, signatures) == y { 1.0 } else { 0.0 }))
        .map(|m| 100.0 * m)
}

/// Mean instance LSM, ×100.
pub fn lsm_mean<I: IntoIterator<Item = f64>>(lsm: I) -> Result<f64, EvalError> {
    mean(lsm).map(|m| 100.0 * m)
}

/// (IR, SR): flagged share of attacked instances and passed share of clean
/// ones, ×100; `None` when a side is empty.
pub fn detection_rates(clean: &[Verdict], attacked: &[Verdict]) -> (Option<f64>, Option<f64>) {
    let share = |v: &[Verdict], target: Verdict| {
        (!v.is_empty()).then(|| 100.0 * v.iter().filter(|&&x| x == target).count() as f64 / v.len() as f64)
    };
    (share(attacked, Verdict::LogicError), share(clean, Verdict::Comprehensible))
}

/// Sequential sum so the result does not depend on thread scheduling.
fn mean<I: IntoIterator<Item = f64>>(values: I) -> Result<f64, EvalError> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        Err(EvalError::Empty)
    } else {
        Ok(sum / n as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub clean: usize,
    pub attacked: usize,
    pub flagged: usize,
    pub passed: usize,
    pub repaired: usize,
    pub failed: usize,
}

/// One report row. Percentages are ×100; `_before` fields describe the
/// explanation as it entered the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub budget: Option<usize>,
    pub lsm_mean: f64,
    pub lsm_mean_before: f64,
    pub ir: Option<f64>,
    pub sr: Option<f64>,
    pub e_acc: f64,
    pub e_acc_before: f64,
    pub p_acc: f64,
    pub p_acc_before: f64,
    pub counts: Counts,
}
