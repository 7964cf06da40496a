//! Factor-subset sweeps and rule-family ablation. Identification and repair
//! run on the restricted graph; metrics are always taken on the full graph.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::pipeline::{partition_results, process_split, summarize, Graphs, PipelineConfig};
use super::EvalError;
use crate::attacks::{attack_dataset, AttackSpec};
use crate::factor_graph::FactorGraph;
use crate::rule_lang::RuleFamily;
use crate::synthbench::{domain, seeded_rng, CategorySignature, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyFilter {
    /// No factors.
    None,
    /// Category–concept factors only.
    Category,
    /// Concept–concept factors only.
    Concept,
    Both,
}

impl FamilyFilter {
    pub const ALL: [FamilyFilter; 4] =
        [FamilyFilter::None, FamilyFilter::Category, FamilyFilter::Concept, FamilyFilter::Both];

    pub fn keeps(self, family: RuleFamily) -> bool {
        match self {
            FamilyFilter::None => false,
            FamilyFilter::Category => family == RuleFamily::CategoryConcept,
            FamilyFilter::Concept => family == RuleFamily::ConceptConcept,
            FamilyFilter::Both => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyFilter::None => "none",
            FamilyFilter::Category => "category",
            FamilyFilter::Concept => "concept",
            FamilyFilter::Both => "both",
        }
    }
}

/// Seeded subset of ⌈ratio·N⌉ factors; the full graph at ratio 1.
pub fn ratio_subgraph(graph: &FactorGraph, ratio: f64, seed: u64, repeat: u64) -> Result<FactorGraph, EvalError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(EvalError::Ratio(ratio));
    }
    let n = graph.num_factors();
    let k = ((ratio * n as f64).ceil() as usize).min(n);
    let mut keep = vec![false; n];
    for i in sample(&mut seeded_rng(seed, domain::SUBSET, repeat), n, k) {
        keep[i] = true;
    }
    Ok(graph.subgraph(|i, _| keep[i]))
}

pub fn family_subgraph(graph: &FactorGraph, filter: FamilyFilter) -> FactorGraph {
    graph.subgraph(|_, f| filter.keeps(f.family))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub families: Vec<FamilyFilter>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { ratios: vec![0.25, 0.5, 0.75, 1.0], families: FamilyFilter::ALL.to_vec(), repeats: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: Option<f64>,
    pub family: Option<FamilyFilter>,
    pub repeat: usize,
    pub active_factors: usize,
    pub metrics: MetricsReport,
}

impl SweepRow {
    pub fn cell(&self) -> String {
        match (self.ratio, self.family) {
            (Some(r), _) => format!("ratio={r}"),
            (None, Some(f)) => format!("family={}", f.name()),
            (None, None) => "full".to_string(),
        }
    }
}

/// One attacked dataset per repeat (attack seed offset by the repeat index),
/// evaluated under every ratio subset and every family filter.
pub fn sweep_and_ablation(
    graph: &FactorGraph,
    instances: &[Instance],
    signatures: &[CategorySignature],
    attack: &AttackSpec,
    pipeline: &PipelineConfig,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>, EvalError> {
    let mut rows = Vec::new();
    for repeat in 0..cfg.repeats {
        let spec = AttackSpec { seed: attack.seed.wrapping_add(repeat as u64), ..attack.clone() };
        let attacked = attack_dataset(instances, &spec, signatures);
        let mut run =
            |active: FactorGraph, ratio: Option<f64>, family: Option<FamilyFilter>| -> Result<(), EvalError> {
                let graphs = Graphs { reference: graph, active: &active };
                let (ok, failed) = partition_results(process_split(graphs, &attacked, signatures, pipeline));
                let label = match (ratio, family) {
                    (Some(r), _) => format!("ratio={r}"),
                    (_, Some(f)) => format!("family={}", f.name()),
                    _ => String::new(),
                };
                let metrics = summarize(&label, Some(spec.budget), &ok, failed.len(), signatures)?;
                rows.push(SweepRow { ratio, family, repeat, active_factors: active.num_factors(), metrics });
                Ok(())
            };
        for &r in &cfg.ratios {
            run(ratio_subgraph(graph, r, attack.seed, repeat as u64)?, Some(r), None)?;
        }
        for &f in &cfg.families {
            run(family_subgraph(graph, f), None, Some(f))?;
        }
    }
    Ok(rows)
}

/// Mean of each metric per sweep cell, in first-seen cell order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub cell: String,
    pub repeats: usize,
    pub lsm_mean: f64,
    pub e_acc: f64,
    pub p_acc: f64,
    pub ir: Option<f64>,
}

pub fn cell_means(rows: &[SweepRow]) -> Vec<CellMean> {
    let mut cells: Vec<String> = Vec::new();
    for r in rows {
        if !cells.contains(&r.cell()) {
            cells.push(r.cell());
        }
    }
    cells
        .into_iter()
        .map(|cell| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.cell() == cell).collect();
            let n = sel.len() as f64;
            let avg = |f: &dyn Fn(&MetricsReport) -> f64| sel.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
            let irs: Vec<f64> = sel.iter().filter_map(|r| r.metrics.ir).collect();
            CellMean {
                repeats: sel.len(),
                lsm_mean: avg(&|m| m.lsm_mean),
                e_acc: avg(&|m| m.e_acc),
                p_acc: avg(&|m| m.p_acc),
                ir: (irs.len() == sel.len() && !irs.is_empty()).then(|| irs.iter().sum::<f64>() / n),
                cell,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::pipeline::summarize;
    use crate::synthbench::{derive_rules, gen_dataset, SynthConfig};

    fn setup() -> (crate::synthbench::SynthDataset, FactorGraph) {
        let cfg = SynthConfig { num_samples: 120, seed: 2, ..Default::default() };
        let ds = gen_dataset(&cfg).unwrap();
        let rules = derive_rules(&ds.signatures, 10, 0.0, 2);
        let g = FactorGraph::build(&rules, &cfg.schema().unwrap(), &vec![1.0; rules.len()]).unwrap();
        (ds, g)
    }

    #[test]
    fn subset_sizes() {
        let (_, g) = setup();
        let n = g.num_factors();
        assert_eq!(ratio_subgraph(&g, 1.0, 0, 0).unwrap().num_factors(), n);
        assert_eq!(ratio_subgraph(&g, 0.25, 0, 0).unwrap().num_factors(), (0.25 * n as f64).ceil() as usize);
        assert!(ratio_subgraph(&g, 0.0, 0, 0).is_err());
        assert!(ratio_subgraph(&g, 1.5, 0, 0).is_err());
        assert_eq!(family_subgraph(&g, FamilyFilter::None).num_factors(), 0);
        let y = family_subgraph(&g, FamilyFilter::Category).num_factors();
        let c = family_subgraph(&g, FamilyFilter::Concept).num_factors();
        assert_eq!(y + c, n);
    }

    #[test]
    fn full_ratio_equals_headline() {
        let (ds, g) = setup();
        let spec = AttackSpec { budget: 2, seed: 4, ..Default::default() };
        let cfg = SweepConfig { ratios: vec![1.0], families: vec![FamilyFilter::Both, FamilyFilter::None], repeats: 1 };
        let rows =
            sweep_and_ablation(&g, &ds.instances, &ds.signatures, &spec, &PipelineConfig::default(), &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        let attacked = attack_dataset(&ds.instances, &spec, &ds.signatures);
        let (ok, _) =
            partition_results(process_split(Graphs::same(&g), &attacked, &ds.signatures, &PipelineConfig::default()));
        let headline = summarize("", Some(2), &ok, 0, &ds.signatures).unwrap();
        for row in &rows[..2] {
            assert_eq!(row.metrics.lsm_mean, headline.lsm_mean);
            assert_eq!(row.metrics.e_acc, headline.e_acc);
        }
        assert_eq!(rows[2].metrics.lsm_mean, headline.lsm_mean_before);
        let means = cell_means(&rows);
        assert_eq!(means.len(), 3);
        assert_eq!(means[0].cell, "ratio=1");
    }
}
