//! Empirical factor characteristics: how often a factor's rule holds when an
//! incident concept is predicted correctly, and fails when it is wrong.

use serde::{Deserialize, Serialize};

use super::bounds::{theorem2_assumption_holds, theorem2_bound};
use super::pipeline::InstanceResult;
use crate::factor_graph::{binarize, FactorGraph};
use crate::scoring::ScoreError;
use crate::synthbench::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCharacteristics {
    pub factor: usize,
    pub concept: usize,
    pub correct: usize,
    pub wrong: usize,
    /// P(ψ = 1 | concept correct)
    pub t_p: Option<f64>,
    /// P(ψ = 0 | concept wrong)
    pub t_n: Option<f64>,
    pub f_n: Option<f64>,
    pub f_p: Option<f64>,
    pub theta_t: Option<f64>,
    pub theta_f: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Frequencies per (factor, incident concept), pooled over instances; the
/// explanation is binarized at its predicted category. Empty cells are `None`.
pub fn estimate_characteristics(
    graph: &FactorGraph,
    instances: &[Instance],
) -> Result<Vec<PairCharacteristics>, ScoreError> {
    let mut cells: Vec<(usize, usize, [usize; 4])> = graph
        .factors()
        .iter()
        .enumerate()
        .flat_map(|(f, factor)| factor.concept_neighbors().map(move |c| (f, c, [0usize; 4])))
        .collect();
    for inst in instances {
        let a = binarize(&inst.activation, inst.predicted_category, graph.schema())?;
        for (f, c, n) in cells.iter_mut() {
            let correct = a.concepts[*c] == inst.true_concepts[*c];
            let sat = graph.evaluate_potential(*f, &a);
            // [correct, correct & sat, wrong, wrong & unsat]
            if correct {
                n[0] += 1;
                n[1] += sat as usize;
            } else {
                n[2] += 1;
                n[3] += !sat as usize;
            }
        }
    }
    Ok(cells
        .into_iter()
        .map(|(factor, concept, n)| {
            let t_p = ratio(n[1], n[0]);
            let t_n = ratio(n[3], n[2]);
            let f_n = t_p.map(|t| 1.0 - t);
            let f_p = t_n.map(|t| 1.0 - t);
            let both = |a: Option<f64>, b: Option<f64>| Some((a? + b?) / 2.0);
            PairCharacteristics {
                factor,
                concept,
                correct: n[0],
                wrong: n[2],
                t_p,
                t_n,
                f_n,
                f_p,
                theta_t: both(t_p, t_n),
                theta_f: both(f_n, f_p),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptBoundCheck {
    pub concept: usize,
    /// Factors incident to the concept.
    pub factors: usize,
    pub theta_t: f64,
    pub theta_f: f64,
    pub bound: f64,
    pub assumption_holds: bool,
    /// Share of instances whose repaired concept matches ground truth.
    pub accuracy: f64,
    pub satisfied: bool,
}

/// Per concept: the factor-count bound with Θ averaged over the concept's
/// incident factors, against measured post-repair accuracy. Concepts without a
/// fully estimated incident factor are omitted.
pub fn theorem2_check(
    graph: &FactorGraph,
    characteristics: &[PairCharacteristics],
    results: &[InstanceResult],
    slack: f64,
) -> Vec<ConceptBoundCheck> {
    (0..graph.num_concepts())
        .filter_map(|m| {
            let thetas: Vec<(f64, f64)> = characteristics
                .iter()
                .filter(|p| p.concept == m)
                .filter_map(|p| Some((p.theta_t?, p.theta_f?)))
                .collect();
            if thetas.is_empty() || results.is_empty() {
                return None;
            }
            let k = thetas.len() as f64;
            let theta_t = thetas.iter().map(|t| t.0).sum::<f64>() / k;
            let theta_f = thetas.iter().map(|t| t.1).sum::<f64>() / k;
            let factors = graph.concept_factors(m).len();
            let bound = theorem2_bound(factors, theta_t, theta_f);
            let hits = results.iter().filter(|r| (r.rectified[m] > 0.5) == r.true_concepts[m]).count();
            let accuracy = hits as f64 / results.len() as f64;
            Some(ConceptBoundCheck {
                concept: m,
                factors,
                theta_t,
                theta_f,
                bound,
                assumption_holds: theorem2_assumption_holds(theta_t, theta_f),
                accuracy,
                satisfied: accuracy >= bound - slack,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_lang::{parse_rules, RuleSchema};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(truth: &[bool], act: &[f64]) -> Instance {
        Instance {
            true_concepts: truth.to_vec(),
            true_category: 0,
            activation: act.to_vec(),
            predicted_category: 0,
            attack: None,
        }
    }

    #[test]
    fn always_satisfied_when_correct() {
        let g =
            FactorGraph::build(&parse_rules("c0 <-> y0").unwrap(), &RuleSchema::new(1, 2).unwrap(), &[1.0]).unwrap();
        let data = vec![inst(&[true], &[0.9]), inst(&[true], &[0.8]), inst(&[true], &[0.2])];
        let ch = estimate_characteristics(&g, &data).unwrap();
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].t_p, Some(1.0));
        assert_eq!(ch[0].t_n, Some(1.0));
        assert_eq!(ch[0].theta_t, Some(1.0));
        assert_eq!(ch[0].theta_f, Some(0.0));
    }

    #[test]
    fn empty_cell_is_absent() {
        let g =
            FactorGraph::build(&parse_rules("c0 <-> y0").unwrap(), &RuleSchema::new(1, 2).unwrap(), &[1.0]).unwrap();
        let ch = estimate_characteristics(&g, &[inst(&[true], &[0.9])]).unwrap();
        assert_eq!(ch[0].t_n, None);
        assert_eq!(ch[0].theta_t, None);
    }

    #[test]
    fn uniform_data_matches_satisfaction_rate() {
        // with predictions independent of truth, T^P is the rule's satisfaction rate
        let g = FactorGraph::build(
            &parse_rules("c0 OR c1\nc0 XOR c1\n").unwrap(),
            &RuleSchema::new(2, 2).unwrap(),
            &[1.0, 1.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<Instance> = (0..40_000)
            .map(|_| {
                let truth = [rng.random_bool(0.5), rng.random_bool(0.5)];
                let act = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                inst(&truth, &act)
            })
            .collect();
        let ch = estimate_characteristics(&g, &data).unwrap();
        let expect = [0.75, 0.75, 0.5, 0.5];
        for (p, e) in ch.iter().zip(expect) {
            assert!((p.t_p.unwrap() - e).abs() < 0.01, "{p:?}");
        }
    }
}
