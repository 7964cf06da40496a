//! Reproducible experiment runs driven by one TOML config: dataset
//! generation, weight learning, the attack → identify → repair pipeline,
//! bound checks and factor sweeps. Every artifact lands in `output_dir`.

pub mod config;
pub mod io;
pub mod report;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{apply_override, ExperimentConfig};

use crate::attacks::{attack_dataset, AttackSpec};
use crate::evaluation::{
    cell_means, estimate_characteristics, lemma2_lower_bound, partition_results, process_split, summarize,
    sweep_and_ablation, tau, theorem1_bound, theorem2_bound, theorem2_check, BoundError, BoundInputs,
    ConceptBoundCheck, EvalError, Graphs, InstanceResult, MetricsReport, PipelineConfig, SweepRow,
};
use crate::factor_graph::{Assignment, FactorGraph, GraphError};
use crate::rule_lang::{
    format_rules, parse_rules, validate_rules, ParseError, RuleFamily, RuleSchema, RuleSet, ValidateOptions,
    ValidationError,
};
use crate::scoring::ScoreError;
use crate::synthbench::{derive_rules, gen_dataset, CategorySignature, Instance, SynthDataset, SynthError};
use crate::weights::{format_weights, mle_fit, parse_weights, prior_weights, MleFit, WeightError, WeightMode};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("rules: {0}")]
    Parse(#[from] ParseError),
    #[error("rules: {0}")]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("bounds: {0}")]
    Bound(#[from] BoundError),
}

impl ExperimentError {
    /// Invalid input as opposed to a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Format { .. }
                | ExperimentError::Parse(_)
                | ExperimentError::Validation(_)
                | ExperimentError::Synth(_)
                | ExperimentError::Graph(_)
                | ExperimentError::Bound(_)
        ) || matches!(self, ExperimentError::Weight(e) if !matches!(e, WeightError::NonFinite { .. } | WeightError::Score(_)))
    }
}

/// Wall-clock durations of named phases.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub phases: Vec<(String, Duration)>,
}

impl Timings {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.phases.push((name.to_string(), start.elapsed()));
        out
    }
}

/// Dataset, rules and schema for one experiment.
pub struct Prepared {
    pub dataset: SynthDataset,
    pub rules: RuleSet,
    pub schema: RuleSchema,
    pub generated: bool,
}

impl Prepared {
    pub fn family_counts(&self) -> (usize, usize) {
        let y = self.rules.iter().filter(|r| r.family == RuleFamily::CategoryConcept).count();
        (y, self.rules.len() - y)
    }
}

fn out_path(cfg: &ExperimentConfig, file: &str) -> PathBuf {
    cfg.output_dir.join(file)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let synth = cfg.synth();
    let schema = synth.schema()?;
    let (dataset, generated) = match &cfg.dataset.path {
        Some(dir) => {
            let signatures: Vec<CategorySignature> = io::read_json(&dir.join(io::SIGNATURES_FILE))?;
            let instances: Vec<Instance> = io::read_jsonl(&dir.join(io::INSTANCES_FILE))?;
            (SynthDataset { num_concepts: synth.num_concepts, signatures, instances }, false)
        }
        None => (gen_dataset(&synth)?, true),
    };
    check_dataset(&dataset, &schema)?;
    let rules = match &cfg.rules.path {
        Some(p) => parse_rules(&io::read_text(p)?)?,
        None => derive_rules(&dataset.signatures, synth.num_concepts, cfg.rules.omission_rate, cfg.rules.seed),
    };
    let opts = ValidateOptions { max_arity: cfg.rules.max_arity, dedup: false };
    let rules = validate_rules(&rules, &schema, opts)?;
    Ok(Prepared { dataset, rules, schema, generated })
}

fn check_dataset(ds: &SynthDataset, schema: &RuleSchema) -> Result<(), ExperimentError> {
    let bad = |msg: String| Err(ExperimentError::Config(msg));
    if ds.signatures.len() != schema.num_categories {
        return bad(format!("{} signatures for {} categories", ds.signatures.len(), schema.num_categories));
    }
    for (i, inst) in ds.instances.iter().enumerate() {
        if inst.activation.len() != schema.num_concepts || inst.true_concepts.len() != schema.num_concepts {
            return bad(format!("instance {i}: expected {} concepts", schema.num_concepts));
        }
        if inst.true_category >= schema.num_categories || inst.predicted_category >= schema.num_categories {
            return bad(format!("instance {i}: category out of range"));
        }
    }
    Ok(())
}

/// Training assignments: ground-truth concepts at the true category.
fn training_data(p: &Prepared) -> Result<Vec<Assignment>, ExperimentError> {
    p.dataset
        .instances
        .iter()
        .map(|i| Assignment::new(i.true_concepts.clone(), i.true_category, &p.schema).map_err(Into::into))
        .collect()
}

pub fn fit_weights(cfg: &ExperimentConfig, p: &Prepared) -> Result<MleFit, ExperimentError> {
    let unit = FactorGraph::build(&p.rules, &p.schema, &vec![1.0; p.rules.len()])?;
    Ok(mle_fit(&unit, &training_data(p)?, &cfg.weight_config())?)
}

/// Sidecar file if configured, else prior confidences or an MLE fit.
pub fn resolve_weights(cfg: &ExperimentConfig, p: &Prepared) -> Result<Vec<f64>, ExperimentError> {
    if let Some(path) = &cfg.weights.path {
        return Ok(parse_weights(&io::read_text(path)?, p.rules.len())?);
    }
    match cfg.weights.mode {
        WeightMode::Prior => Ok(prior_weights(&p.rules)?),
        WeightMode::Mle => Ok(fit_weights(cfg, p)?.weights),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub concepts: usize,
    pub categories: usize,
    pub factors: usize,
    pub category_concept: usize,
    pub concept_concept: usize,
    pub instances: usize,
}

impl std::fmt::Display for GenSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "concepts: {}", self.concepts)?;
        writeln!(f, "categories: {}", self.categories)?;
        writeln!(
            f,
            "factors: {} (category-concept {}, concept-concept {})",
            self.factors, self.category_concept, self.concept_concept
        )?;
        write!(f, "instances: {}", self.instances)
    }
}

fn write_inputs(cfg: &ExperimentConfig, p: &Prepared) -> Result<(), ExperimentError> {
    io::write_jsonl(&out_path(cfg, io::INSTANCES_FILE), &p.dataset.instances)?;
    io::write_json(&out_path(cfg, io::SIGNATURES_FILE), &p.dataset.signatures)?;
    io::write_text(&out_path(cfg, io::RULES_FILE), &format_rules(&p.rules))
}

/// Generates (or loads) the dataset and rules and writes them out.
pub fn cmd_gen(cfg: &ExperimentConfig, t: &mut Timings) -> Result<GenSummary, ExperimentError> {
    let p = t.time("generate", || prepare(cfg))?;
    t.time("write", || write_inputs(cfg, &p))?;
    let (y, c) = p.family_counts();
    Ok(GenSummary {
        concepts: p.schema.num_concepts,
        categories: p.schema.num_categories,
        factors: p.rules.len(),
        category_concept: y,
        concept_concept: c,
        instances: p.dataset.instances.len(),
    })
}

/// MLE fit on the clean training assignments; writes the weights sidecar.
pub fn cmd_learn_weights(cfg: &ExperimentConfig, t: &mut Timings) -> Result<MleFit, ExperimentError> {
    let p = t.time("prepare", || prepare(cfg))?;
    let fit = t.time("fit", || fit_weights(cfg, &p))?;
    io::write_text(&out_path(cfg, io::WEIGHTS_FILE), &format_weights(&fit.weights))?;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDetail {
    pub label: String,
    pub budget: Option<usize>,
    pub results: Vec<InstanceResult>,
    pub failures: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<MetricsReport>,
    pub splits: Vec<SplitDetail>,
}

pub fn pipeline_config(cfg: &ExperimentConfig) -> PipelineConfig {
    PipelineConfig { identify: cfg.identify_config(), max_passes: cfg.repair.max_passes, repair: cfg.repair.enabled }
}

pub fn attack_spec(cfg: &ExperimentConfig, budget: usize) -> AttackSpec {
    AttackSpec {
        kind: cfg.attack.kind,
        budget,
        gamma: cfg.attack.gamma,
        seed: cfg.attack.seed,
        erase_targets: cfg.attack.erase_targets.clone(),
        introduce_targets: cfg.attack.introduce_targets.clone(),
    }
}

fn run_split(
    graph: &FactorGraph,
    p: &Prepared,
    instances: &[Instance],
    label: String,
    budget: Option<usize>,
    pcfg: &PipelineConfig,
) -> Result<(MetricsReport, SplitDetail), ExperimentError> {
    let (ok, failed) = partition_results(process_split(Graphs::same(graph), instances, &p.dataset.signatures, pcfg));
    let row = summarize(&label, budget, &ok, failed.len(), &p.dataset.signatures)?;
    let failures = failed.into_iter().map(|(i, e)| (i, e.to_string())).collect();
    Ok((row, SplitDetail { label, budget, results: ok, failures }))
}

/// Clean row plus one attacked row per budget, on one weighted graph.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    p: &Prepared,
    weights: &[f64],
    t: &mut Timings,
) -> Result<(RunReport, Vec<Vec<Instance>>), ExperimentError> {
    for &b in &cfg.attack.budgets {
        attack_spec(cfg, b).check(p.schema.num_concepts).map_err(|e| ExperimentError::Config(e.to_string()))?;
    }
    let graph = FactorGraph::build(&p.rules, &p.schema, weights)?;
    let pcfg = pipeline_config(cfg);
    let mut rows = Vec::new();
    let mut splits = Vec::new();
    let mut attacked_sets = Vec::new();
    let (row, detail) = t.time("clean", || run_split(&graph, p, &p.dataset.instances, "clean".into(), None, &pcfg))?;
    rows.push(row);
    splits.push(detail);
    for &b in &cfg.attack.budgets {
        let attacked = t.time(&format!("attack b{b}"), || {
            attack_dataset(&p.dataset.instances, &attack_spec(cfg, b), &p.dataset.signatures)
        });
        let (row, detail) = t.time(&format!("pipeline b{b}"), || {
            run_split(&graph, p, &attacked, format!("{}_b{b}", cfg.attack.kind), Some(b), &pcfg)
        })?;
        rows.push(row);
        splits.push(detail);
        attacked_sets.push(attacked);
    }
    Ok((RunReport { rows, splits }, attacked_sets))
}

/// Full pipeline; writes inputs, weights, attacked datasets and reports.
pub fn cmd_run(cfg: &ExperimentConfig, t: &mut Timings) -> Result<RunReport, ExperimentError> {
    let p = t.time("prepare", || prepare(cfg))?;
    let weights = t.time("weights", || resolve_weights(cfg, &p))?;
    let (report, attacked) = run_experiment(cfg, &p, &weights, t)?;
    t.time("write", || -> Result<(), ExperimentError> {
        write_inputs(cfg, &p)?;
        io::write_text(&out_path(cfg, io::WEIGHTS_FILE), &format_weights(&weights))?;
        for (b, set) in cfg.attack.budgets.iter().zip(&attacked) {
            io::write_jsonl(&out_path(cfg, &io::attacked_file(*b)), set)?;
        }
        io::write_text(&out_path(cfg, io::REPORT_CSV), &report::metrics_csv(&report.rows))?;
        io::write_json(&out_path(cfg, io::REPORT_JSON), &report)
    })?;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitBounds {
    pub lemma2: Option<BoundInputs>,
    pub theorem1: Option<Theorem1Inputs>,
    pub theorem2: Option<Theorem2Inputs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Inputs {
    pub l_values: Vec<f64>,
    /// τ values, or (U^T, L^F) pairs to compute them from.
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub tau_pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Inputs {
    pub n: usize,
    pub theta_t: f64,
    pub theta_f: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplicitBoundValues {
    pub lemma2: Option<f64>,
    pub taus: Vec<f64>,
    pub theorem1: Option<f64>,
    pub theorem2: Option<f64>,
    pub theorem2_assumption_holds: Option<bool>,
}

pub fn evaluate_explicit(inputs: &ExplicitBounds) -> Result<ExplicitBoundValues, BoundError> {
    let mut out = ExplicitBoundValues {
        lemma2: inputs.lemma2.as_ref().map(lemma2_lower_bound).transpose()?,
        ..Default::default()
    };
    if let Some(t1) = &inputs.theorem1 {
        let mut taus = t1.taus.clone();
        for &(u, l) in &t1.tau_pairs {
            taus.push(tau(u, l)?);
        }
        out.theorem1 = Some(theorem1_bound(&t1.l_values, &taus)?);
        out.taus = taus;
    }
    if let Some(t2) = &inputs.theorem2 {
        out.theorem2 = Some(theorem2_bound(t2.n, t2.theta_t, t2.theta_f));
        out.theorem2_assumption_holds = Some(t2.theta_t > t2.theta_f);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// Per budget: per-concept bound vs measured post-repair accuracy.
    pub checks: Vec<(usize, Vec<ConceptBoundCheck>)>,
    /// (budget, N, Θ^T, Θ^F, bound) with Θ averaged over all factor–concept pairs.
    pub table: Vec<(usize, usize, f64, f64, f64)>,
    pub explicit: Option<ExplicitBoundValues>,
}

/// Estimates characteristics on each attacked set and compares the
/// factor-count bound with measured accuracy after repair.
pub fn cmd_bounds(cfg: &ExperimentConfig, t: &mut Timings) -> Result<BoundsReport, ExperimentError> {
    let explicit = match &cfg.eval.bound_inputs {
        Some(path) => {
            let inputs: ExplicitBounds = toml::from_str(&io::read_text(path)?)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
            Some(evaluate_explicit(&inputs)?)
        }
        None => None,
    };
    let p = t.time("prepare", || prepare(cfg))?;
    let weights = t.time("weights", || resolve_weights(cfg, &p))?;
    let (run, attacked) = run_experiment(cfg, &p, &weights, t)?;
    let graph = FactorGraph::build(&p.rules, &p.schema, &weights)?;
    let mut checks = Vec::new();
    let mut table = Vec::new();
    for ((&b, set), split) in cfg.attack.budgets.iter().zip(&attacked).zip(&run.splits[1..]) {
        let ch = t.time(&format!("characteristics b{b}"), || estimate_characteristics(&graph, set))?;
        checks.push((b, theorem2_check(&graph, &ch, &split.results, cfg.eval.bound_slack)));
        let defined: Vec<(f64, f64)> = ch.iter().filter_map(|c| Some((c.theta_t?, c.theta_f?))).collect();
        if !defined.is_empty() {
            let k = defined.len() as f64;
            let tt = defined.iter().map(|d| d.0).sum::<f64>() / k;
            let tf = defined.iter().map(|d| d.1).sum::<f64>() / k;
            for n in 0..=cfg.eval.bound_max_factors {
                table.push((b, n, tt, tf, theorem2_bound(n, tt, tf)));
            }
        }
    }
    let out = BoundsReport { checks, table, explicit };
    io::write_text(&out_path(cfg, io::BOUNDS_CSV), &report::concept_checks_csv(&out.checks))?;
    io::write_text(&out_path(cfg, io::BOUNDS_TABLE_CSV), &report::bound_table_csv(&out.table))?;
    io::write_json(&out_path(cfg, io::BOUNDS_JSON), &out)?;
    Ok(out)
}

/// Ratio sweep and family ablation at the largest configured budget.
pub fn cmd_sweep(cfg: &ExperimentConfig, t: &mut Timings) -> Result<Vec<SweepRow>, ExperimentError> {
    let p = t.time("prepare", || prepare(cfg))?;
    let weights = t.time("weights", || resolve_weights(cfg, &p))?;
    let graph = FactorGraph::build(&p.rules, &p.schema, &weights)?;
    let budget =
        cfg.attack.budgets.iter().copied().max().ok_or_else(|| ExperimentError::Config("no attack budgets".into()))?;
    let spec = attack_spec(cfg, budget);
    spec.check(p.schema.num_concepts).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let rows = t.time("sweep", || {
        sweep_and_ablation(
            &graph,
            &p.dataset.instances,
            &p.dataset.signatures,
            &spec,
            &pipeline_config(cfg),
            &cfg.sweep_config(),
        )
    })?;
    let mut csv = report::sweep_csv(&rows);
    csv.push('\n');
    csv.push_str(&report::cell_means_csv(&cell_means(&rows)));
    io::write_text(&out_path(cfg, io::SWEEP_CSV), &csv)?;
    io::write_json(&out_path(cfg, io::SWEEP_JSON), &rows)?;
    Ok(rows)
}
