//! Bipartite factor graph over concept and category variables.
//!
//! Each validated rule becomes one factor whose potential is the rule's truth
//! value on its neighbor variables. Potentials are compiled into truth tables at
//! build time; the graph is immutable afterwards and can be shared across
//! threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rule_lang::{Expr, RuleFamily, RuleSchema, RuleSet, Var, VarKind};

/// Largest neighborhood compiled into a truth table.
pub const MAX_TABLE_ARITY: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("expected {expected} weights, got {got}")]
    WeightLength { expected: usize, got: usize },
    #[error("weight {weight} for rule {rule} outside [0,1]")]
    WeightRange { rule: usize, weight: f64 },
    #[error("rule {rule} references {var}, outside the schema")]
    VarOutOfRange { rule: usize, var: Var },
    #[error("rule {rule} has {arity} variables; at most {MAX_TABLE_ARITY} supported")]
    ArityTooLarge { rule: usize, arity: usize },
    #[error("activation {value} for concept {index} outside [0,1]")]
    Activation { index: usize, value: f64 },
    #[error("expected {expected} concepts, got {got}")]
    ConceptLength { expected: usize, got: usize },
    #[error("category {category} out of range (K={num_categories})")]
    CategoryRange { category: usize, num_categories: usize },
}

/// Concept bits plus a one-hot category, stored as the hot index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub concepts: Vec<bool>,
    category: usize,
    num_categories: usize,
}

impl Assignment {
    pub fn new(concepts: Vec<bool>, category: usize, schema: &RuleSchema) -> Result<Self, GraphError> {
        if concepts.len() != schema.num_concepts {
            return Err(GraphError::ConceptLength { expected: schema.num_concepts, got: concepts.len() });
        }
        if category >= schema.num_categories {
            return Err(GraphError::CategoryRange { category, num_categories: schema.num_categories });
        }
        Ok(Assignment { concepts, category, num_categories: schema.num_categories })
    }

    pub fn category(&self) -> usize {
        self.category
    }

    pub fn category_one_hot(&self) -> Vec<bool> {
        (0..self.num_categories).map(|j| j == self.category).collect()
    }

    pub fn value(&self, var: Var) -> bool {
        match var.kind {
            VarKind::Concept => self.concepts[var.index],
            VarKind::Category => var.index == self.category,
        }
    }

    pub fn flip(&mut self, concept: usize) {
        self.concepts[concept] = !self.concepts[concept];
    }

    /// Concept bits packed little-endian into a mask (`M <= 64`).
    pub fn concept_mask(&self) -> u64 {
        self.concepts.iter().enumerate().fold(0u64, |m, (i, &b)| if b { m | 1 << i } else { m })
    }
}

/// Continuous concept activations with the category predicted from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptActivation {
    pub values: Vec<f64>,
    pub predicted_category: usize,
}

/// Thresholds activations at 0.5 (strictly greater is active) and one-hot
/// encodes the predicted category.
pub fn binarize(activation: &[f64], predicted_category: usize, schema: &RuleSchema) -> Result<Assignment, GraphError> {
    if let Some((index, &value)) = activation.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(GraphError::Activation { index, value });
    }
    Assignment::new(activation.iter().map(|&a| a > 0.5).collect(), predicted_category, schema)
}

#[derive(Debug, Clone)]
pub struct Factor {
    pub rule_id: usize,
    pub formula: Expr,
    pub family: RuleFamily,
    pub weight: f64,
    /// Distinct variables of the formula, sorted; bit `p` of a table row is `neighbors[p]`.
    pub neighbors: Vec<Var>,
    table: Vec<bool>,
}

impl Factor {
    fn row<F: Fn(Var) -> bool>(&self, value: F) -> usize {
        self.neighbors.iter().enumerate().fold(0usize, |row, (p, &v)| if value(v) { row | 1 << p } else { row })
    }

    pub fn concept_neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.neighbors.iter().filter(|v| v.is_concept()).map(|v| v.index)
    }
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    schema: RuleSchema,
    factors: Vec<Factor>,
    concept_factors: Vec<Vec<usize>>,
    category_factors: Vec<Vec<usize>>,
    factor_neighbors: Vec<Vec<usize>>,
}

impl FactorGraph {
    /// One factor per rule, weighted by `weights[rule.id]` order.
    pub fn build(rules: &RuleSet, schema: &RuleSchema, weights: &[f64]) -> Result<Self, GraphError> {
        if weights.len() != rules.len() {
            return Err(GraphError::WeightLength { expected: rules.len(), got: weights.len() });
        }
        let mut factors = Vec::with_capacity(rules.len());
        let mut concept_factors = vec![Vec::new(); schema.num_concepts];
        let mut category_factors = vec![Vec::new(); schema.num_categories];
        for (fid, (rule, &weight)) in rules.iter().zip(weights).enumerate() {
            if !(0.0..=1.0).contains(&weight) {
                return Err(GraphError::WeightRange { rule: rule.id, weight });
            }
            let neighbors = rule.formula.variables();
            if let Some(&var) = neighbors.iter().find(|v| !schema.contains(**v)) {
                return Err(GraphError::VarOutOfRange { rule: rule.id, var });
            }
            if neighbors.len() > MAX_TABLE_ARITY {
                return Err(GraphError::ArityTooLarge { rule: rule.id, arity: neighbors.len() });
            }
            let table = (0usize..1 << neighbors.len())
                .map(|row| {
                    rule.formula.eval(|v| {
                        let p = neighbors.binary_search(&v).expect("neighbor");
                        row >> p & 1 == 1
                    })
                })
                .collect();
            for v in &neighbors {
                match v.kind {
                    VarKind::Concept => concept_factors[v.index].push(fid),
                    VarKind::Category => category_factors[v.index].push(fid),
                }
            }
            factors.push(Factor {
                rule_id: rule.id,
                formula: rule.formula.clone(),
                family: rule.family,
                weight,
                neighbors,
                table,
            });
        }
        let mut graph = FactorGraph {
            schema: schema.clone(),
            factors,
            concept_factors,
            category_factors,
            factor_neighbors: Vec::new(),
        };
        graph.factor_neighbors = (0..graph.factors.len()).map(|f| graph.compute_neighbor_factors(f)).collect();
        Ok(graph)
    }

    pub fn schema(&self) -> &RuleSchema {
        &self.schema
    }

    /// Graph over the factors selected by `keep`, with their weights; factor ids are renumbered.
    pub fn subgraph<F: Fn(usize, &Factor) -> bool>(&self, keep: F) -> FactorGraph {
        let kept: Vec<&Factor> = self.factors.iter().enumerate().filter(|(i, f)| keep(*i, f)).map(|(_, f)| f).collect();
        let rules = RuleSet::from_formulas(kept.iter().map(|f| (f.formula.clone(), None)));
        let weights: Vec<f64> = kept.iter().map(|f| f.weight).collect();
        Self::build(&rules, &self.schema, &weights).expect("subgraph of a valid graph")
    }

    pub fn num_concepts(&self) -> usize {
        self.schema.num_concepts
    }

    pub fn num_categories(&self) -> usize {
        self.schema.num_categories
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn num_variables(&self) -> usize {
        self.schema.num_vars()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, id: usize) -> &Factor {
        &self.factors[id]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.factors.iter().map(|f| f.weight).sum()
    }

    /// Same structure, new weights.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self, GraphError> {
        if weights.len() != self.factors.len() {
            return Err(GraphError::WeightLength { expected: self.factors.len(), got: weights.len() });
        }
        let mut g = self.clone();
        for (f, &w) in g.factors.iter_mut().zip(weights) {
            if !(0.0..=1.0).contains(&w) {
                return Err(GraphError::WeightRange { rule: f.rule_id, weight: w });
            }
            f.weight = w;
        }
        Ok(g)
    }

    /// Factors incident to a variable.
    pub fn var_factors(&self, var: Var) -> &[usize] {
        match var.kind {
            VarKind::Concept => &self.concept_factors[var.index],
            VarKind::Category => &self.category_factors[var.index],
        }
    }

    pub fn concept_factors(&self, concept: usize) -> &[usize] {
        &self.concept_factors[concept]
    }

    /// ψ_i under `assignment`.
    pub fn evaluate_potential(&self, factor_id: usize, assignment: &Assignment) -> bool {
        let f = &self.factors[factor_id];
        f.table[f.row(|v| assignment.value(v))]
    }

    /// ψ_i under an arbitrary valuation of its neighbor variables.
    pub fn potential_by<F: Fn(Var) -> bool>(&self, factor_id: usize, value: F) -> bool {
        let f = &self.factors[factor_id];
        f.table[f.row(value)]
    }

    /// ψ_i for a packed concept mask at a fixed category.
    pub fn potential_mask(&self, factor_id: usize, concepts: u64, category: usize) -> bool {
        let f = &self.factors[factor_id];
        f.table[f.row(|v| match v.kind {
            VarKind::Concept => concepts >> v.index & 1 == 1,
            VarKind::Category => v.index == category,
        })]
    }

    /// Factors sharing at least one variable with `factor_id`, including itself; sorted.
    pub fn neighbor_factors(&self, factor_id: usize) -> &[usize] {
        &self.factor_neighbors[factor_id]
    }

    fn compute_neighbor_factors(&self, factor_id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.factors[factor_id]
            .neighbors
            .iter()
            .flat_map(|&v| self.var_factors(v).iter().copied())
            .chain(std::iter::once(factor_id))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_lang::{parse_rules, validate_rules, ValidateOptions};
    use proptest::prelude::*;

    fn graph(text: &str, m: usize, k: usize) -> FactorGraph {
        let schema = RuleSchema::new(m, k).unwrap();
        let rules = validate_rules(&parse_rules(text).unwrap(), &schema, ValidateOptions::default()).unwrap();
        let w = vec![1.0; rules.len()];
        FactorGraph::build(&rules, &schema, &w).unwrap()
    }

    fn assign(bits: &[u8], cat: usize, k: usize) -> Assignment {
        let schema = RuleSchema::new(bits.len(), k).unwrap();
        Assignment::new(bits.iter().map(|&b| b == 1).collect(), cat, &schema).unwrap()
    }

    #[test]
    fn build_counts_and_adjacency() {
        let g = graph("c0 AND c1\nc1 XOR c2\n", 4, 2);
        assert_eq!(g.num_factors(), 2);
        assert_eq!(g.num_variables(), 6);
        assert_eq!(g.factor(0).neighbors, vec![Var::concept(0), Var::concept(1)]);
        assert_eq!(g.concept_factors(1), &[0, 1]);
        assert!(g.concept_factors(3).is_empty());
    }

    #[test]
    fn empty_rule_set_builds() {
        let schema = RuleSchema::new(3, 2).unwrap();
        let g = FactorGraph::build(&RuleSet::default(), &schema, &[]).unwrap();
        assert_eq!(g.num_factors(), 0);
        assert_eq!(g.total_weight(), 0.0);
    }

    #[test]
    fn weight_errors() {
        let schema = RuleSchema::new(3, 2).unwrap();
        let rules = parse_rules("c0 XOR c1").unwrap();
        assert!(matches!(
            FactorGraph::build(&rules, &schema, &[]),
            Err(GraphError::WeightLength { expected: 1, got: 0 })
        ));
        assert!(matches!(FactorGraph::build(&rules, &schema, &[1.5]), Err(GraphError::WeightRange { .. })));
    }

    #[test]
    fn potentials() {
        let g = graph("c4 XOR c5", 6, 2);
        assert!(g.evaluate_potential(0, &assign(&[0, 0, 0, 0, 1, 0], 0, 2)));
        let g = graph("c0 <-> y0", 2, 3);
        assert!(!g.evaluate_potential(0, &assign(&[1, 0], 2, 3)));
        assert!(g.evaluate_potential(0, &assign(&[1, 0], 0, 3)));
        let g = graph("NOT c1 AND c2", 3, 2);
        assert!(g.evaluate_potential(0, &assign(&[0, 0, 1], 0, 2)));
    }

    #[test]
    fn binarize_threshold_is_strict() {
        let schema = RuleSchema::new(2, 2).unwrap();
        let a = binarize(&[0.9, 0.4], 1, &schema).unwrap();
        assert_eq!(a.concepts, vec![true, false]);
        assert_eq!(a.category_one_hot(), vec![false, true]);
        let a = binarize(&[0.5, 0.50001], 0, &schema).unwrap();
        assert_eq!(a.concepts, vec![false, true]);
        assert!(matches!(binarize(&[1.2, 0.0], 0, &schema), Err(GraphError::Activation { index: 0, .. })));
        assert!(binarize(&[f64::NAN, 0.0], 0, &schema).is_err());
        assert!(binarize(&[0.1, 0.0], 2, &schema).is_err());
    }

    #[test]
    fn neighbor_factor_sets() {
        let g = graph("c0 XOR c2\nc1 XOR c2\n", 3, 2);
        assert_eq!(g.neighbor_factors(0), &[0, 1]);
        assert_eq!(g.neighbor_factors(1), &[0, 1]);
        let g = graph("c0 XOR c1\nc2 AND c3\n", 4, 2);
        assert_eq!(g.neighbor_factors(1), &[1]);
        // chain f0 - c1 - f1 - c2 - f2
        let g = graph("c0 XOR c1\nc1 XOR c2\nc2 XOR c3\n", 4, 2);
        assert_eq!(g.neighbor_factors(1), &[0, 1, 2]);
        assert_eq!(g.neighbor_factors(0), &[0, 1]);
    }

    #[test]
    fn mask_and_assignment_agree() {
        let g = graph("c0 <-> y1\nNOT (c1 AND c2)\nc0 OR c2\n", 3, 2);
        for mask in 0u64..8 {
            for cat in 0..2 {
                let a = assign(&[(mask & 1) as u8, (mask >> 1 & 1) as u8, (mask >> 2 & 1) as u8], cat, 2);
                assert_eq!(a.concept_mask(), mask);
                for f in 0..g.num_factors() {
                    assert_eq!(g.evaluate_potential(f, &a), g.potential_mask(f, mask, cat));
                    assert_eq!(g.evaluate_potential(f, &a), g.factor(f).formula.eval(|v| a.value(v)));
                }
            }
        }
    }

    fn random_graph_text(pairs: &[(usize, usize, u8)]) -> String {
        pairs
            .iter()
            .filter(|(a, b, _)| a != b)
            .map(|(a, b, op)| {
                let op = ["AND", "OR", "XOR", "<->"][*op as usize % 4];
                format!("c{a} {op} c{b}\n")
            })
            .collect()
    }

    proptest! {
        #[test]
        fn potential_depends_only_on_neighbors(
            pairs in prop::collection::vec((0usize..6, 0usize..6, 0u8..4), 1..10),
            mask in 0u64..64,
            flip in 0usize..6,
        ) {
            let text = random_graph_text(&pairs);
            prop_assume!(!text.is_empty());
            let schema = RuleSchema::new(6, 2).unwrap();
            let rules = validate_rules(&parse_rules(&text).unwrap(), &schema,
                ValidateOptions { dedup: true, ..Default::default() }).unwrap();
            let g = FactorGraph::build(&rules, &schema, &vec![0.5; rules.len()]).unwrap();
            for f in 0..g.num_factors() {
                if !g.factor(f).neighbors.contains(&Var::concept(flip)) {
                    prop_assert_eq!(g.potential_mask(f, mask, 0), g.potential_mask(f, mask ^ (1 << flip), 0));
                }
                for v in &g.factor(f).neighbors {
                    prop_assert!(g.var_factors(*v).contains(&f));
                }
                prop_assert!(g.neighbor_factors(f).contains(&f));
                for &n in g.neighbor_factors(f) {
                    prop_assert!(g.neighbor_factors(n).contains(&f));
                }
            }
            for c in 0..6 {
                for &f in g.concept_factors(c) {
                    prop_assert!(g.factor(f).neighbors.contains(&Var::concept(c)));
                }
            }
        }
    }
}
