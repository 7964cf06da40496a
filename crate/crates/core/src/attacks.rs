//! Concept-space attacks on explanations that keep the category prediction
//! fixed: erase active concepts, introduce inactive ones, or both.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synthbench::{domain, hamming, predict_category, seeded_rng, CategorySignature, Instance};

/// Distance past γ that an attacked activation is moved to.
pub const DISPLACEMENT: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("attack budget must be at least 1")]
    Budget,
    #[error("gamma {0} must be in (0, 1)")]
    Gamma(f64),
    #[error("target concept {concept} out of range ({num_concepts} concepts)")]
    Target { concept: usize, num_concepts: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Erasure,
    Introduction,
    #[default]
    Confounding,
}

impl AttackKind {
    fn erases(self) -> bool {
        matches!(self, AttackKind::Erasure | AttackKind::Confounding)
    }

    fn introduces(self) -> bool {
        matches!(self, AttackKind::Introduction | AttackKind::Confounding)
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackKind::Erasure => "erasure",
            AttackKind::Introduction => "introduction",
            AttackKind::Confounding => "confounding",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub budget: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Concepts that may be erased; all active concepts when unset.
    pub erase_targets: Option<Vec<usize>>,
    /// Concepts that may be introduced; all inactive concepts when unset.
    pub introduce_targets: Option<Vec<usize>>,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            kind: AttackKind::Confounding,
            budget: 1,
            gamma: 0.5,
            seed: 0,
            erase_targets: None,
            introduce_targets: None,
        }
    }
}

impl AttackSpec {
    pub fn check(&self, num_concepts: usize) -> Result<(), AttackError> {
        if self.budget == 0 {
            return Err(AttackError::Budget);
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(AttackError::Gamma(self.gamma));
        }
        for t in [&self.erase_targets, &self.introduce_targets].into_iter().flatten() {
            if let Some(&concept) = t.iter().find(|&&c| c >= num_concepts) {
                return Err(AttackError::Target { concept, num_concepts });
            }
        }
        Ok(())
    }

    fn allowed(targets: &Option<Vec<usize>>, j: usize) -> bool {
        targets.as_ref().is_none_or(|t| t.contains(&j))
    }

    fn erasable(&self, activation: &[f64], j: usize) -> bool {
        self.kind.erases() && activation[j] > self.gamma && Self::allowed(&self.erase_targets, j)
    }

    fn introducible(&self, activation: &[f64], j: usize) -> bool {
        self.kind.introduces() && activation[j] < self.gamma && Self::allowed(&self.introduce_targets, j)
    }

    fn displaced(&self, value: f64) -> f64 {
        if value > self.gamma {
            (self.gamma - DISPLACEMENT).max(0.0)
        } else {
            (self.gamma + DISPLACEMENT).min(1.0)
        }
    }
}

/// Provenance attached to attacked instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub kind: AttackKind,
    pub budget: usize,
    pub flipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub activation: Vec<f64>,
    /// Concepts moved across γ, in the order they were applied.
    pub flipped: Vec<usize>,
}

/// Distance to the runner-up minus distance to `category`.
fn margin(bits: &[bool], category: usize, signatures: &[CategorySignature]) -> i64 {
    let own = hamming(bits, &signatures[category]) as i64;
    let other = signatures
        .iter()
        .filter(|s| s.category != category)
        .map(|s| hamming(bits, s) as i64)
        .min()
        .unwrap_or(i64::MAX / 2);
    other - own
}

/// Greedy attack under the prediction-invariance constraint.
///
/// Each step tries the untried eligible concept whose flip leaves the largest
/// classifier margin (seeded random tie-break). A flip that changes the
/// prediction is rolled back and the search continues; at most `budget`
/// flips are kept.
pub fn attack(activation: &[f64], spec: &AttackSpec, signatures: &[CategorySignature], stream: u64) -> AttackOutcome {
    let baseline = predict_category(activation, signatures);
    let mut current = activation.to_vec();
    let mut untried: Vec<usize> =
        (0..activation.len()).filter(|&j| spec.erasable(activation, j) || spec.introducible(activation, j)).collect();
    untried.shuffle(&mut seeded_rng(spec.seed, domain::ATTACK, stream));
    let mut flipped = Vec::new();

    while flipped.len() < spec.budget && !untried.is_empty() {
        let bits: Vec<bool> = current.iter().map(|&a| a > 0.5).collect();
        let score = |j: usize| {
            let mut b = bits.clone();
            b[j] = spec.displaced(current[j]) > 0.5;
            margin(&b, baseline, signatures)
        };
        // first maximum in shuffled order
        let (pos, _) = untried.iter().enumerate().map(|(p, &j)| (p, score(j))).fold((0, i64::MIN), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
        let j = untried.remove(pos);
        let before = current[j];
        current[j] = spec.displaced(before);
        if predict_category(&current, signatures) == baseline {
            flipped.push(j);
        } else {
            current[j] = before;
        }
    }
    AttackOutcome { activation: current, flipped }
}

/// Attacks every instance in parallel; output order matches input order.
pub fn attack_dataset(instances: &[Instance], spec: &AttackSpec, signatures: &[CategorySignature]) -> Vec<Instance> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let out = attack(&inst.activation, spec, signatures, i as u64);
            Instance {
                activation: out.activation,
                attack: Some(AttackRecord { kind: spec.kind, budget: spec.budget, flipped: out.flipped }),
                ..inst.clone()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    /// (concept, crossed γ in the attack's direction) for every target.
    pub crossed: Vec<(usize, bool)>,
    pub prediction_unchanged: bool,
    pub success: bool,
}

/// Recomputes which targets crossed γ and whether the prediction held.
pub fn attack_success_check(
    original: &[f64],
    attacked: &[f64],
    spec: &AttackSpec,
    signatures: &[CategorySignature],
) -> AttackReport {
    let g = spec.gamma;
    let crossed: Vec<(usize, bool)> = (0..original.len())
        .filter_map(|j| {
            if spec.erasable(original, j) {
                Some((j, attacked[j] < g))
            } else if spec.introducible(original, j) {
                Some((j, attacked[j] > g))
            } else {
                None
            }
        })
        .collect();
    let prediction_unchanged = predict_category(original, signatures) == predict_category(attacked, signatures);
    let success = prediction_unchanged && crossed.iter().any(|(_, c)| *c);
    AttackReport { crossed, prediction_unchanged, success }
}
