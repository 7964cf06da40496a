//! Synthetic benchmark: categories defined by k-concept signatures, rules
//! derived from the signatures, and a surrogate concept bottleneck (bounded
//! noise concept predictor + nearest-signature category predictor).

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::AttackRecord;
use crate::rule_lang::{Expr, RuleSchema, RuleSet, Var};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("cannot draw {num_categories} distinct {k}-subsets of {num_concepts} concepts with pairwise Hamming distance >= {min_distance}")]
    Infeasible { num_categories: usize, num_concepts: usize, k: usize, min_distance: usize },
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

/// Independent, reproducible RNG for `(seed, domain, index)`.
pub fn seeded_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

pub(crate) mod domain {
    pub const SIGNATURES: u64 = 1;
    pub const INSTANCES: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const OMISSION: u64 = 4;
    pub const ATTACK: u64 = 5;
    pub const SUBSET: u64 = 6;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySignature {
    pub category: usize,
    pub concepts: Vec<usize>,
}

impl CategorySignature {
    pub fn indicator(&self, num_concepts: usize) -> Vec<bool> {
        let mut v = vec![false; num_concepts];
        for &c in &self.concepts {
            v[c] = true;
        }
        v
    }

    pub fn contains(&self, concept: usize) -> bool {
        self.concepts.binary_search(&concept).is_ok()
    }

    fn distance(&self, other: &[usize]) -> usize {
        let shared = other.iter().filter(|c| self.contains(**c)).count();
        self.concepts.len() + other.len() - 2 * shared
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub true_concepts: Vec<bool>,
    pub true_category: usize,
    pub activation: Vec<f64>,
    pub predicted_category: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_categories: usize,
    pub num_concepts: usize,
    pub signature_size: usize,
    pub num_samples: usize,
    /// Minimum pairwise Hamming distance between signatures.
    pub min_distance: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_categories: 12,
            num_concepts: 10,
            signature_size: 4,
            num_samples: 1000,
            min_distance: 4,
            noise: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn schema(&self) -> Result<RuleSchema, SynthError> {
        RuleSchema::new(self.num_concepts, self.num_categories).map_err(|e| SynthError::Config(e.to_string()))
    }

    pub fn check(&self) -> Result<(), SynthError> {
        self.schema()?;
        if self.signature_size == 0 || self.signature_size > self.num_concepts {
            return Err(SynthError::Config(format!(
                "signature size {} must be in 1..={}",
                self.signature_size, self.num_concepts
            )));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(SynthError::Config(format!("noise {} must be in [0, 0.5)", self.noise)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub num_concepts: usize,
    pub signatures: Vec<CategorySignature>,
    pub instances: Vec<Instance>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

const ENUMERATE_LIMIT: u128 = 20_000;
const RESTARTS: u64 = 64;

/// Draws `K` distinct k-subsets with pairwise distance >= `min_distance`.
pub fn gen_signatures(cfg: &SynthConfig) -> Result<Vec<CategorySignature>, SynthError> {
    cfg.check()?;
    let (m, k, n_cat) = (cfg.num_concepts, cfg.signature_size, cfg.num_categories);
    let infeasible =
        SynthError::Infeasible { num_categories: n_cat, num_concepts: m, k, min_distance: cfg.min_distance };
    let total = binomial(m, k);
    if total < n_cat as u128 {
        return Err(infeasible);
    }
    let pool: Option<Vec<Vec<usize>>> =
        (total <= ENUMERATE_LIMIT).then(|| itertools::Itertools::combinations(0..m, k).collect());

    for restart in 0..RESTARTS {
        let mut rng = seeded_rng(cfg.seed, domain::SIGNATURES, restart);
        let mut chosen: Vec<CategorySignature> = Vec::with_capacity(n_cat);
        let accept = |cand: Vec<usize>, chosen: &mut Vec<CategorySignature>| {
            let ok = chosen.iter().all(|s| s.concepts != cand && s.distance(&cand) >= cfg.min_distance);
            if ok {
                chosen.push(CategorySignature { category: chosen.len(), concepts: cand });
            }
        };
        match &pool {
            Some(pool) => {
                let mut order = pool.clone();
                order.shuffle(&mut rng);
                for cand in order {
                    if chosen.len() == n_cat {
                        break;
                    }
                    accept(cand, &mut chosen);
                }
            }
            None => {
                let all: Vec<usize> = (0..m).collect();
                for _ in 0..200 * n_cat {
                    if chosen.len() == n_cat {
                        break;
                    }
                    let mut cand: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
                    cand.sort_unstable();
                    accept(cand, &mut chosen);
                }
            }
        }
        if chosen.len() == n_cat {
            return Ok(chosen);
        }
    }
    Err(infeasible)
}

/// ĉ_j in [1−η, 1] for active concepts and [0, η] for inactive ones.
pub fn simulate_concept_predictor<R: Rng>(true_concepts: &[bool], noise: f64, rng: &mut R) -> Vec<f64> {
    true_concepts
        .iter()
        .map(|&c| {
            let u: f64 = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
            if c {
                1.0 - u.abs()
            } else {
                u.abs()
            }
        })
        .collect()
}

/// Nearest signature by Hamming distance on the 0.5-binarized vector; the
/// lowest category id wins ties.
pub fn predict_category(activation: &[f64], signatures: &[CategorySignature]) -> usize {
    let bits: Vec<bool> = activation.iter().map(|&a| a > 0.5).collect();
    signatures.iter().map(|s| (hamming(&bits, s), s.category)).min().map(|(_, c)| c).unwrap_or(0)
}

pub(crate) fn hamming(bits: &[bool], sig: &CategorySignature) -> usize {
    bits.iter().enumerate().filter(|(j, &b)| b != sig.contains(*j)).count()
}

/// Signatures, then `num_samples` instances with categories drawn uniformly.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    let signatures = gen_signatures(cfg)?;
    let instances = (0..cfg.num_samples)
        .map(|i| {
            let mut rng = seeded_rng(cfg.seed, domain::INSTANCES, i as u64);
            let y = rng.random_range(0..cfg.num_categories);
            let c = signatures[y].indicator(cfg.num_concepts);
            let mut noise_rng = seeded_rng(cfg.seed, domain::NOISE, i as u64);
            let activation = simulate_concept_predictor(&c, cfg.noise, &mut noise_rng);
            let predicted_category = predict_category(&activation, &signatures);
            Instance { true_concepts: c, true_category: y, activation, predicted_category, attack: None }
        })
        .collect();
    Ok(SynthDataset { num_concepts: cfg.num_concepts, signatures, instances })
}

/// Rules implied by the signatures, each kept with probability `1 − omission_rate`.
///
/// - a concept in exactly one signature `j`: `c <-> y_j`
/// - any other concept: `c OR NOT y_j` for each signature `j` holding it and
///   `NOT c OR NOT y_j` for each signature lacking it
/// - a pair that is active in exactly one of its two members in every
///   signature: `c_a XOR c_b`
/// - any other pair that never co-occurs: `NOT (c_a AND c_b)`
///
/// Every clean instance satisfies every derived rule.
pub fn derive_rules(signatures: &[CategorySignature], num_concepts: usize, omission_rate: f64, seed: u64) -> RuleSet {
    let c = |i: usize| Expr::lit(Var::concept(i));
    let mut formulas = Vec::new();
    let owners = |j: usize| signatures.iter().filter(|s| s.contains(j)).count();
    for s in signatures {
        let y = Expr::lit(Var::category(s.category));
        for j in 0..num_concepts {
            match (s.contains(j), owners(j)) {
                (true, 1) => formulas.push(Expr::iff(c(j), y.clone())),
                (true, _) => formulas.push(Expr::or(c(j), Expr::not(y.clone()))),
                (false, 1) => {}
                (false, _) => formulas.push(Expr::or(Expr::not(c(j)), Expr::not(y.clone()))),
            }
        }
    }
    for a in 0..num_concepts {
        for b in a + 1..num_concepts {
            if signatures.iter().any(|s| s.contains(a) && s.contains(b)) {
                continue;
            }
            let complementary = signatures.iter().all(|s| s.contains(a) != s.contains(b));
            formulas.push(if complementary { Expr::xor(c(a), c(b)) } else { Expr::not(Expr::and(c(a), c(b))) });
        }
    }
    let mut rng = seeded_rng(seed, domain::OMISSION, 0);
    let kept: Vec<(Expr, Option<f64>)> = formulas
        .into_iter()
        .filter(|_| !rng.random_bool(omission_rate.clamp(0.0, 1.0)))
        .map(|f| (f, Some(1.0)))
        .collect();
    RuleSet::from_formulas(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{binarize, FactorGraph};
    use crate::rule_lang::{format_rules, validate_rules, ValidateOptions};
    use crate::scoring::instance_lsm;
    use proptest::prelude::*;

    fn sig(category: usize, concepts: &[usize]) -> CategorySignature {
        CategorySignature { category, concepts: concepts.to_vec() }
    }

    #[test]
    fn default_scale_signatures() {
        let cfg = SynthConfig::default();
        let sigs = gen_signatures(&cfg).unwrap();
        assert_eq!(sigs.len(), 12);
        for (i, s) in sigs.iter().enumerate() {
            assert_eq!(s.category, i);
            assert_eq!(s.concepts.len(), 4);
            for t in &sigs[..i] {
                assert!(s.distance(&t.concepts) >= 4);
            }
        }
        assert_eq!(gen_signatures(&cfg).unwrap(), sigs);
    }

    #[test]
    fn infeasible_configs() {
        let cfg = SynthConfig {
            num_categories: 11,
            num_concepts: 5,
            signature_size: 2,
            min_distance: 0,
            ..Default::default()
        };
        assert!(matches!(gen_signatures(&cfg), Err(SynthError::Infeasible { .. })));
        // only two disjoint pairs fit in 5 concepts
        let cfg = SynthConfig {
            num_categories: 3,
            num_concepts: 5,
            signature_size: 2,
            min_distance: 4,
            ..Default::default()
        };
        assert!(gen_signatures(&cfg).is_err());
        let cfg = SynthConfig { signature_size: 11, ..Default::default() };
        assert!(matches!(gen_signatures(&cfg), Err(SynthError::Config(_))));
    }

    #[test]
    fn rule_shapes() {
        let sigs = vec![sig(0, &[0, 2]), sig(1, &[1, 2]), sig(2, &[3])];
        let text = format_rules(&derive_rules(&sigs, 4, 0.0, 0));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "conf=1 c0 <-> y0",
                "conf=1 c2 OR NOT y0",
                "conf=1 c1 <-> y1",
                "conf=1 c2 OR NOT y1",
                "conf=1 NOT c2 OR NOT y2",
                "conf=1 c3 <-> y2",
                "conf=1 NOT (c0 AND c1)",
                "conf=1 NOT (c0 AND c3)",
                "conf=1 NOT (c1 AND c3)",
                "conf=1 c2 XOR c3",
            ]
        );
        let sigs = vec![sig(0, &[0]), sig(1, &[1])];
        let text = format_rules(&derive_rules(&sigs, 2, 0.0, 0));
        assert!(text.ends_with("conf=1 c0 XOR c1\n"));
    }

    #[test]
    fn omission_is_seeded() {
        let sigs = gen_signatures(&SynthConfig::default()).unwrap();
        let full = derive_rules(&sigs, 10, 0.0, 1);
        let a = derive_rules(&sigs, 10, 0.3, 7);
        assert_eq!(a, derive_rules(&sigs, 10, 0.3, 7));
        assert!(a.len() < full.len());
        assert_eq!(derive_rules(&sigs, 10, 0.0, 1), full);
        let nearly_all = derive_rules(&sigs, 10, 0.99, 1);
        assert!(nearly_all.len() <= full.len());
    }

    #[test]
    fn derived_rules_validate() {
        let cfg = SynthConfig::default();
        let sigs = gen_signatures(&cfg).unwrap();
        let rules = derive_rules(&sigs, 10, 0.0, 0);
        let schema = cfg.schema().unwrap();
        assert_eq!(validate_rules(&rules, &schema, ValidateOptions::default()).unwrap().len(), rules.len());
    }

    #[test]
    fn zero_noise_is_exact() {
        let mut rng = seeded_rng(0, 0, 0);
        let c = vec![true, false, true];
        assert_eq!(simulate_concept_predictor(&c, 0.0, &mut rng), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn noise_ranges() {
        let mut rng = seeded_rng(9, 0, 0);
        for _ in 0..10_000 {
            let a = simulate_concept_predictor(&[true, false], 0.1, &mut rng);
            assert!((0.9..=1.0).contains(&a[0]));
            assert!((0.0..=0.1).contains(&a[1]));
        }
    }

    #[test]
    fn nearest_signature() {
        let sigs = vec![sig(0, &[0, 1]), sig(1, &[2, 3]), sig(2, &[0, 2])];
        assert_eq!(predict_category(&[0.0, 0.0, 0.9, 0.9], &sigs), 1);
        assert_eq!(predict_category(&[0.0; 4], &sigs), 0);
        let sigs = gen_signatures(&SynthConfig::default()).unwrap();
        for s in &sigs {
            let mut a: Vec<f64> = s.indicator(10).iter().map(|&b| if b { 0.95 } else { 0.05 }).collect();
            assert_eq!(predict_category(&a, &sigs), s.category);
            a[s.concepts[0]] = 0.4;
            assert_eq!(predict_category(&a, &sigs), s.category);
        }
    }

    #[test]
    fn dataset_is_deterministic() {
        let cfg = SynthConfig { num_samples: 50, seed: 11, ..Default::default() };
        assert_eq!(gen_dataset(&cfg).unwrap(), gen_dataset(&cfg).unwrap());
        let other = gen_dataset(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(other.instances, gen_dataset(&cfg).unwrap().instances);
    }

    fn small_config() -> impl Strategy<Value = SynthConfig> {
        (any::<u64>(), 0.0f64..0.49, prop_oneof![Just((12, 10, 4)), Just((4, 6, 3)), Just((6, 8, 3))]).prop_map(
            |(seed, noise, (k_cat, m, k))| SynthConfig {
                num_categories: k_cat,
                num_concepts: m,
                signature_size: k,
                num_samples: 40,
                noise,
                seed,
                ..Default::default()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn clean_instances_binarize_to_truth(cfg in small_config()) {
            let ds = gen_dataset(&cfg).unwrap();
            let schema = cfg.schema().unwrap();
            for inst in &ds.instances {
                let a = binarize(&inst.activation, inst.predicted_category, &schema).unwrap();
                prop_assert_eq!(&a.concepts, &inst.true_concepts);
                prop_assert_eq!(inst.predicted_category, inst.true_category);
            }
        }

        #[test]
        fn clean_instances_satisfy_all_rules(cfg in small_config(), rseed in any::<u64>()) {
            let ds = gen_dataset(&cfg).unwrap();
            let rules = derive_rules(&ds.signatures, cfg.num_concepts, 0.0, rseed);
            let schema = cfg.schema().unwrap();
            let g = FactorGraph::build(&rules, &schema, &vec![1.0; rules.len()]).unwrap();
            for inst in &ds.instances {
                let a = binarize(&inst.activation, inst.true_category, &schema).unwrap();
                prop_assert_eq!(instance_lsm(&g, &a), 1.0);
            }
        }
    }
}
