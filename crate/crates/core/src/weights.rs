//! Factor weights: taken from rule confidences, or fitted by exact
//! maximum likelihood of observed concepts given their category.

use std::collections::HashMap;
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor_graph::{Assignment, FactorGraph};
use crate::rule_lang::RuleSet;
use crate::scoring::{check_cap, log_sum_exp, ScoreError, DEFAULT_ENUMERATION_CAP};

pub const W_MIN: f64 = 0.01;
pub const W_MAX: f64 = 1.0;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("rule {rule} has no confidence; use MLE weights or add `conf=` to every rule")]
    MissingConfidence { rule: usize },
    #[error("invalid weight config: {0}")]
    Config(String),
    #[error("negative log-likelihood became non-finite at epoch {epoch} (nll = {nll})")]
    NonFinite { epoch: usize, nll: f64 },
    #[error("weights file line {line}: {msg}")]
    Sidecar { line: usize, msg: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Prior,
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub mode: WeightMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub initial: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub cap: usize,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            mode: WeightMode::Prior,
            learning_rate: 0.05,
            epochs: 200,
            initial: 0.5,
            w_min: W_MIN,
            w_max: W_MAX,
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl WeightConfig {
    pub fn check(&self) -> Result<(), WeightError> {
        let bad = |m: &str| Err(WeightError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.w_min > 0.0 && self.w_min <= self.w_max && self.w_max <= 1.0) {
            return bad("clamp bounds must satisfy 0 < w_min <= w_max <= 1");
        }
        if !(0.0..=1.0).contains(&self.initial) {
            return bad("initial weight must be in [0, 1]");
        }
        Ok(())
    }

    fn clamp(&self, w: f64) -> f64 {
        w.clamp(self.w_min, self.w_max)
    }
}

/// w_i = confidence_i.
pub fn prior_weights(rules: &RuleSet) -> Result<Vec<f64>, WeightError> {
    rules.iter().map(|r| r.confidence.ok_or(WeightError::MissingConfidence { rule: r.id })).collect()
}

/// Distinct potential patterns of one category with their multiplicities.
/// The partition function depends on the masks only through these.
struct CategoryTable {
    patterns: Vec<(Vec<bool>, f64)>,
}

impl CategoryTable {
    fn build(graph: &FactorGraph, category: usize) -> Self {
        let n = graph.num_factors();
        let mut counts: HashMap<Vec<bool>, u64> = HashMap::new();
        for mask in 0u64..1 << graph.num_concepts() {
            let psi: Vec<bool> = (0..n).map(|f| graph.potential_mask(f, mask, category)).collect();
            *counts.entry(psi).or_default() += 1;
        }
        let mut patterns: Vec<(Vec<bool>, f64)> = counts.into_iter().map(|(p, c)| (p, c as f64)).collect();
        patterns.sort_by(|a, b| a.0.cmp(&b.0));
        CategoryTable { patterns }
    }

    /// (log Z, E[ψ]) under weights `w`.
    fn moments(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let scores: Vec<f64> = self.patterns.iter().map(|(psi, count)| count.ln() + dot(w, psi)).collect();
        let log_z = log_sum_exp(scores.iter().copied());
        let mut expect = vec![0.0; w.len()];
        for ((psi, _), s) in self.patterns.iter().zip(&scores) {
            let p = (s - log_z).exp();
            for (e, &on) in expect.iter_mut().zip(psi) {
                if on {
                    *e += p;
                }
            }
        }
        (log_z, expect)
    }
}

fn dot(w: &[f64], psi: &[bool]) -> f64 {
    w.iter().zip(psi).filter(|(_, &on)| on).map(|(w, _)| w).sum()
}

/// Sufficient statistics of a dataset plus per-category enumeration tables;
/// reusable across weight vectors.
pub struct LikelihoodModel {
    num_factors: usize,
    tables: Vec<Option<CategoryTable>>,
    category_counts: Vec<f64>,
    observed_psi: Vec<f64>,
    samples: usize,
}

impl LikelihoodModel {
    pub fn new(graph: &FactorGraph, data: &[Assignment], cap: usize) -> Result<Self, ScoreError> {
        check_cap(graph, cap)?;
        let n = graph.num_factors();
        let k = graph.num_categories();
        let mut category_counts = vec![0.0; k];
        let mut observed_psi = vec![0.0; n];
        for a in data {
            category_counts[a.category()] += 1.0;
            for (f, o) in observed_psi.iter_mut().enumerate() {
                if graph.evaluate_potential(f, a) {
                    *o += 1.0;
                }
            }
        }
        let tables = (0..k)
            .into_par_iter()
            .map(|y| (category_counts[y] > 0.0).then(|| CategoryTable::build(graph, y)))
            .collect();
        Ok(LikelihoodModel { num_factors: n, tables, category_counts, observed_psi, samples: data.len() })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Negative log-likelihood and its gradient, summed over samples.
    pub fn evaluate(&self, w: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(w.len(), self.num_factors, "weight vector length");
        let mut nll = -dot_f(w, &self.observed_psi);
        let mut grad: Vec<f64> = self.observed_psi.iter().map(|o| -o).collect();
        for (table, &n_y) in self.tables.iter().zip(&self.category_counts) {
            let Some(table) = table else { continue };
            let (log_z, expect) = table.moments(w);
            nll += n_y * log_z;
            for (g, e) in grad.iter_mut().zip(expect) {
                *g += n_y * e;
            }
        }
        (nll, grad)
    }
}

fn dot_f(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// nll = −Σ log P(concepts | category, w); grad_i = Σ (E_w[ψ_i | category] − ψ_i(observed)).
pub fn nll_and_gradient(
    graph: &FactorGraph,
    data: &[Assignment],
    w: &[f64],
    cap: usize,
) -> Result<(f64, Vec<f64>), ScoreError> {
    Ok(LikelihoodModel::new(graph, data, cap)?.evaluate(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub weights: Vec<f64>,
    pub nll: f64,
    /// nll at each iterate, starting with the initial weights.
    pub nll_trace: Vec<f64>,
}

/// Projected gradient descent on the summed nll with a fixed step; returns the
/// iterate with the lowest nll.
pub fn mle_fit(graph: &FactorGraph, data: &[Assignment], cfg: &WeightConfig) -> Result<MleFit, WeightError> {
    cfg.check()?;
    let model = LikelihoodModel::new(graph, data, cfg.cap)?;
    let mut w = vec![cfg.clamp(cfg.initial); graph.num_factors()];
    let mut best = (f64::INFINITY, w.clone());
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let (nll, grad) = model.evaluate(&w);
        if !nll.is_finite() {
            return Err(WeightError::NonFinite { epoch, nll });
        }
        trace.push(nll);
        if nll < best.0 {
            best = (nll, w.clone());
        }
        if epoch == cfg.epochs {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi = cfg.clamp(*wi - cfg.learning_rate * g);
        }
    }
    Ok(MleFit { weights: best.1, nll: best.0, nll_trace: trace })
}

/// Sidecar text: one `rule_id weight` pair per line.
pub fn format_weights(weights: &[f64]) -> String {
    let mut out = String::from("# rule_id weight\n");
    for (i, w) in weights.iter().enumerate() {
        writeln!(out, "{i} {w:.6}").unwrap();
    }
    out
}

pub fn parse_weights(text: &str, num_rules: usize) -> Result<Vec<f64>, WeightError> {
    let mut weights: Vec<Option<f64>> = vec![None; num_rules];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| WeightError::Sidecar { line: lineno + 1, msg };
        let mut parts = line.split_whitespace();
        let (Some(id), Some(w), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `rule_id weight`".into()));
        };
        let id: usize = id.parse().map_err(|_| err(format!("bad rule id `{id}`")))?;
        let w: f64 = w.parse().map_err(|_| err(format!("bad weight `{w}`")))?;
        if !(0.0..=1.0).contains(&w) {
            return Err(err(format!("weight {w} outside [0, 1]")));
        }
        let slot = weights.get_mut(id).ok_or_else(|| err(format!("rule id {id} out of range ({num_rules} rules)")))?;
        if slot.replace(w).is_some() {
            return Err(err(format!("rule id {id} listed twice")));
        }
    }
    weights
        .into_iter()
        .enumerate()
        .map(|(i, w)| w.ok_or(WeightError::Sidecar { line: 0, msg: format!("missing weight for rule {i}") }))
        .collect()
}
