//! Interactive intervention switch: per violated factor, try every nonempty
//! subset of its concept variables, keep the flip with the largest weighted
//! potential gain, then aggregate the candidates into one conflict-free
//! intervention and splice it into the activation vector.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::factor_graph::{binarize, Assignment, FactorGraph};
use crate::rule_lang::Var;
use crate::scoring::{identify_assignment, IdentifyConfig, ScoreError, Verdict};

pub const DEFAULT_MAX_PASSES: usize = 3;

/// Gains at or below this are treated as zero.
const GAIN_EPS: f64 = 1e-12;

/// Flip of a nonempty subset of one factor's concept variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub factor_id: usize,
    pub flip_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionCase {
    pub factor_id: usize,
    pub flip_set: Vec<usize>,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairStats {
    pub passes: usize,
    /// Distinct (factor, flip set) cases scored across all passes.
    pub cases_enumerated: usize,
    /// Gain evaluations, counting a case again each pass it is re-scored.
    pub gain_evaluations: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub applied_cases: Vec<InterventionCase>,
    /// Binary concept values after the intervention (1 = active).
    pub z: Vec<bool>,
    /// 1 where the concept was intervened.
    pub mask: Vec<bool>,
    pub rectified: Vec<f64>,
    pub stats: RepairStats,
}

impl InterventionPlan {
    fn untouched(activation: &[f64], concepts: Vec<bool>) -> Self {
        InterventionPlan {
            applied_cases: Vec::new(),
            mask: vec![false; concepts.len()],
            z: concepts,
            rectified: activation.to_vec(),
            stats: RepairStats::default(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.applied_cases.is_empty()
    }

    pub fn num_flips(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairConfig {
    pub max_passes: usize,
    pub identify: IdentifyConfig,
    /// Repair even when the input passes identification.
    pub force: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig { max_passes: DEFAULT_MAX_PASSES, identify: IdentifyConfig::default(), force: false }
    }
}

fn subsets_in_order(p: usize) -> Vec<u32> {
    let mut masks: Vec<u32> = (1u32..1 << p).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
}

/// All `2^p - 1` flip sets over the factor's `p` concept variables, smallest
/// first. Category variables are never intervened; a category-only factor
/// yields no cases.
pub fn enumerate_cases(graph: &FactorGraph, factor_id: usize) -> Vec<Intervention> {
    let concepts: Vec<usize> = graph.factor(factor_id).concept_neighbors().collect();
    subsets_in_order(concepts.len())
        .into_iter()
        .map(|m| Intervention {
            factor_id,
            flip_set: concepts.iter().enumerate().filter(|(p, _)| m >> p & 1 == 1).map(|(_, &c)| c).collect(),
        })
        .collect()
}

fn flipped_value<'a>(assignment: &'a Assignment, flips: &'a [usize]) -> impl Fn(Var) -> bool + 'a {
    move |v: Var| {
        let base = assignment.value(v);
        if v.is_concept() && flips.contains(&v.index) {
            !base
        } else {
            base
        }
    }
}

/// s = Σ_{j ∈ F_i} w_j (ψ_j after − ψ_j before), where F_i is the factor and every
/// factor sharing a variable with it. `assignment` is not modified.
pub fn potential_difference(graph: &FactorGraph, assignment: &Assignment, case: &Intervention) -> f64 {
    let after = flipped_value(assignment, &case.flip_set);
    graph
        .neighbor_factors(case.factor_id)
        .iter()
        .map(|&j| {
            let before = graph.evaluate_potential(j, assignment);
            let now = graph.potential_by(j, &after);
            graph.factor(j).weight * (now as i8 - before as i8) as f64
        })
        .sum()
}

/// Same value as [`potential_difference`], summing only over factors that touch
/// a flipped variable (every other term of F_i is zero).
fn local_gain(graph: &FactorGraph, assignment: &Assignment, flips: &[usize], scratch: &mut Vec<usize>) -> f64 {
    scratch.clear();
    for &c in flips {
        scratch.extend_from_slice(graph.concept_factors(c));
    }
    scratch.sort_unstable();
    scratch.dedup();
    let after = flipped_value(assignment, flips);
    scratch
        .iter()
        .map(|&j| {
            let before = graph.evaluate_potential(j, assignment);
            let now = graph.potential_by(j, &after);
            graph.factor(j).weight * (now as i8 - before as i8) as f64
        })
        .sum()
}

/// Factors grouped by each unordered pair of concepts they both touch.
fn pair_index(graph: &FactorGraph) -> HashMap<(usize, usize), Vec<usize>> {
    let mut index: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fid, f) in graph.factors().iter().enumerate() {
        let cs: Vec<usize> = f.concept_neighbors().collect();
        for (i, &a) in cs.iter().enumerate() {
            for &b in &cs[i + 1..] {
                index.entry((a.min(b), a.max(b))).or_default().push(fid);
            }
        }
    }
    index
}

/// Gains against one fixed assignment in O(1) per case for binary factors:
/// single-concept deltas are summed, then factors touching two or more
/// flipped concepts are corrected individually.
struct GainTable<'a> {
    graph: &'a FactorGraph,
    pairs: &'a HashMap<(usize, usize), Vec<usize>>,
    single: Vec<f64>,
}

impl<'a> GainTable<'a> {
    fn new(graph: &'a FactorGraph, pairs: &'a HashMap<(usize, usize), Vec<usize>>, assignment: &Assignment) -> Self {
        let single = (0..graph.num_concepts()).map(|c| local_gain(graph, assignment, &[c], &mut Vec::new())).collect();
        GainTable { graph, pairs, single }
    }

    fn factor_delta(&self, fid: usize, assignment: &Assignment, flips: &[usize]) -> f64 {
        let before = self.graph.evaluate_potential(fid, assignment);
        let now = self.graph.potential_by(fid, flipped_value(assignment, flips));
        self.graph.factor(fid).weight * (now as i8 - before as i8) as f64
    }

    /// Flips `flips` in `assignment`, refreshing the single-concept deltas of
    /// every concept sharing a factor with a flipped one.
    fn apply(&mut self, assignment: &mut Assignment, flips: &[usize], scratch: &mut Vec<usize>) {
        scratch.clear();
        for &c in flips {
            scratch.extend_from_slice(self.graph.concept_factors(c));
        }
        scratch.sort_unstable();
        scratch.dedup();
        for sign in [-1.0, 1.0] {
            if sign > 0.0 {
                for &c in flips {
                    assignment.flip(c);
                }
            }
            for &fid in scratch.iter() {
                for v in self.graph.factor(fid).concept_neighbors() {
                    self.single[v] += sign * self.factor_delta(fid, assignment, &[v]);
                }
            }
        }
    }

    fn gain(&self, assignment: &Assignment, flips: &[usize], scratch: &mut Vec<usize>) -> f64 {
        let mut gain: f64 = flips.iter().map(|&c| self.single[c]).sum();
        if flips.len() < 2 {
            return gain;
        }
        scratch.clear();
        for (i, &a) in flips.iter().enumerate() {
            for &b in &flips[i + 1..] {
                if let Some(fs) = self.pairs.get(&(a.min(b), a.max(b))) {
                    scratch.extend_from_slice(fs);
                }
            }
        }
        scratch.sort_unstable();
        scratch.dedup();
        for &fid in scratch.iter() {
            let counted: f64 = self
                .graph
                .factor(fid)
                .concept_neighbors()
                .filter(|c| flips.contains(c))
                .map(|c| self.factor_delta(fid, assignment, &[c]))
                .sum();
            gain += self.factor_delta(fid, assignment, flips) - counted;
        }
        gain
    }
}

/// Runs the intervention switch on `activation` at `predicted_category`.
///
/// Inputs that pass identification are returned untouched unless `cfg.force`.
/// Each concept is intervened at most once, so `z`, `mask` and `rectified`
/// describe a single set of flips.
pub fn repair(
    graph: &FactorGraph,
    activation: &[f64],
    predicted_category: usize,
    cfg: &RepairConfig,
) -> Result<InterventionPlan, ScoreError> {
    let mut working = binarize(activation, predicted_category, graph.schema())?;
    if !cfg.force && identify_assignment(graph, &working, &cfg.identify)? == Verdict::Comprehensible {
        return Ok(InterventionPlan::untouched(activation, working.concepts));
    }
    let m = graph.num_concepts();
    let mut locked = vec![false; m];
    let mut applied = Vec::new();
    let mut stats = RepairStats::default();
    let mut scratch = Vec::new();
    let pairs = pair_index(graph);
    let mut seen: HashSet<(usize, Vec<usize>)> = HashSet::new();

    for _ in 0..cfg.max_passes {
        stats.passes += 1;
        let mut table = GainTable::new(graph, &pairs, &working);
        let mut candidates: Vec<InterventionCase> = Vec::new();
        for fid in 0..graph.num_factors() {
            if graph.evaluate_potential(fid, &working) {
                continue;
            }
            let mut best: Option<InterventionCase> = None;
            for case in enumerate_cases(graph, fid) {
                if case.flip_set.iter().any(|&c| locked[c]) {
                    continue;
                }
                stats.gain_evaluations += 1;
                if seen.insert((fid, case.flip_set.clone())) {
                    stats.cases_enumerated += 1;
                }
                let gain = table.gain(&working, &case.flip_set, &mut scratch);
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(InterventionCase { factor_id: fid, flip_set: case.flip_set, gain });
                }
            }
            if let Some(b) = best.filter(|b| b.gain > GAIN_EPS) {
                candidates.push(b);
            }
        }
        stats.candidates += candidates.len();
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.factor_id.cmp(&b.factor_id)));

        let mut progressed = false;
        for cand in candidates {
            if cand.flip_set.iter().any(|&c| locked[c]) {
                continue;
            }
            let gain = table.gain(&working, &cand.flip_set, &mut scratch);
            if gain <= GAIN_EPS {
                continue;
            }
            table.apply(&mut working, &cand.flip_set, &mut scratch);
            for &c in &cand.flip_set {
                locked[c] = true;
            }
            applied.push(InterventionCase { gain, ..cand });
            progressed = true;
        }
        if !progressed {
            break;
        }
    }

    let z = working.concepts;
    let rectified = (0..m)
        .map(|j| {
            if locked[j] {
                if z[j] {
                    1.0
                } else {
                    0.0
                }
            } else {
                activation[j]
            }
        })
        .collect();
    Ok(InterventionPlan { applied_cases: applied, z, mask: locked, rectified, stats })
}
