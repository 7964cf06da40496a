use std::collections::HashMap;

use thiserror::Error;

use super::{format_rule, Expr, Rule, RuleSchema, RuleSet, Var};

pub const DEFAULT_MAX_ARITY: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("rule {rule}: variable {var} out of range for schema (M={num_concepts}, K={num_categories})")]
    IndexOutOfRange { rule: usize, var: Var, num_concepts: usize, num_categories: usize },
    #[error("rule {rule}: references {arity} variables, maximum is {max}")]
    Arity { rule: usize, arity: usize, max: usize },
    #[error("rule {rule} duplicates rule {first}: `{text}`")]
    Duplicate { rule: usize, first: usize, text: String },
    #[error("rule {rule} is a {kind}: `{text}`")]
    Degenerate { rule: usize, kind: &'static str, text: String },
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub max_arity: usize,
    /// Drop later duplicates instead of failing.
    pub dedup: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { max_arity: DEFAULT_MAX_ARITY, dedup: false }
    }
}

/// Counts satisfying rows of the truth table over the formula's own variables.
pub(crate) fn satisfying_rows(formula: &Expr, vars: &[Var]) -> usize {
    (0u32..1 << vars.len())
        .filter(|&row| {
            formula.eval(|v| {
                let pos = vars.iter().position(|x| *x == v).expect("variable in table");
                row >> pos & 1 == 1
            })
        })
        .count()
}

/// Checks rules against a schema. On success the returned set has ids `0..N-1`
/// (renumbered when duplicates were dropped).
pub fn validate_rules(rules: &RuleSet, schema: &RuleSchema, opts: ValidateOptions) -> Result<RuleSet, ValidationError> {
    schema.check()?;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut kept: Vec<(Expr, Option<f64>)> = Vec::with_capacity(rules.len());
    for rule in rules.iter() {
        let vars = rule.formula.variables();
        if let Some(&var) = vars.iter().find(|v| !schema.contains(**v)) {
            return Err(ValidationError::IndexOutOfRange {
                rule: rule.id,
                var,
                num_concepts: schema.num_concepts,
                num_categories: schema.num_categories,
            });
        }
        if vars.len() > opts.max_arity {
            return Err(ValidationError::Arity { rule: rule.id, arity: vars.len(), max: opts.max_arity });
        }
        check_degenerate(rule, &vars)?;
        let key = rule.formula.commutative_key();
        if let Some(&first) = seen.get(&key) {
            if opts.dedup {
                continue;
            }
            return Err(ValidationError::Duplicate { rule: rule.id, first, text: format_rule(rule) });
        }
        seen.insert(key, rule.id);
        kept.push((rule.formula.clone(), rule.confidence));
    }
    Ok(RuleSet::from_formulas(kept))
}

fn check_degenerate(rule: &Rule, vars: &[Var]) -> Result<(), ValidationError> {
    let sat = satisfying_rows(&rule.formula, vars);
    let kind = if sat == 0 {
        "contradiction"
    } else if sat == 1 << vars.len() {
        "tautology"
    } else {
        return Ok(());
    };
    Err(ValidationError::Degenerate { rule: rule.id, kind, text: format_rule(rule) })
}
