//! Textual rule language for logic constraints between concepts and categories.
//!
//! A rule file holds one rule per line:
//!
//! ```text
//! # category 0 signature
//! c0 <-> y0
//! conf=0.8 c4 XOR c5
//! NOT (c1 AND c3)
//! ```
//!
//! Literals are `c<N>` (concept `N`) and `y<N>` (category `N`). Connectives, from
//! loosest to tightest binding: `<->`, `XOR`, `OR`, `AND`, `NOT`. `AND` and `OR`
//! chain left-associatively; `XOR` and `<->` are strictly binary and must be
//! parenthesized to nest.

mod format;
mod parser;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use format::{format_rule, format_rules};
pub use parser::{parse_rules, ParseError, ParseErrorKind};
pub use validate::{validate_rules, ValidateOptions, ValidationError, DEFAULT_MAX_ARITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    Concept,
    Category,
}

/// A graph variable: concept `c<index>` or category `y<index>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub fn concept(index: usize) -> Self {
        Var { kind: VarKind::Concept, index }
    }

    pub fn category(index: usize) -> Self {
        Var { kind: VarKind::Category, index }
    }

    pub fn is_concept(&self) -> bool {
        self.kind == VarKind::Concept
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VarKind::Concept => write!(f, "c{}", self.index),
            VarKind::Category => write!(f, "y{}", self.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub var: Var,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: Var) -> Self {
        Literal { var, negated: false }
    }

    pub fn neg(var: Var) -> Self {
        Literal { var, negated: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    And,
    Or,
    Xor,
    Iff,
}

impl BinOp {
    pub(crate) fn keyword(self) -> &'static str {
        match self {
            BinOp::And => "AND",
            BinOp::Or => "OR",
            BinOp::Xor => "XOR",
            BinOp::Iff => "<->",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Iff => 1,
            BinOp::Xor => 2,
            BinOp::Or => 3,
            BinOp::And => 4,
        }
    }

    /// `AND`/`OR` may be chained without parentheses; `XOR`/`<->` may not.
    pub(crate) fn chains(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn apply(self, a: bool, b: bool) -> bool {
        match self {
            BinOp::And => a && b,
            BinOp::Or => a || b,
            BinOp::Xor => a != b,
            BinOp::Iff => a == b,
        }
    }
}

/// Boolean formula over literals.
///
/// Canonical form never wraps a bare literal in `Not`; negation of a literal is
/// carried on the literal itself. Use [`Expr::not`] to build negations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(Literal),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn lit(var: Var) -> Self {
        Expr::Lit(Literal::pos(var))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Expr) -> Self {
        match inner {
            Expr::Lit(l) => Expr::Lit(Literal { negated: !l.negated, ..l }),
            other => Expr::Not(Box::new(other)),
        }
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Self {
        Expr::bin(BinOp::And, lhs, rhs)
    }

    pub fn or(lhs: Expr, rhs: Expr) -> Self {
        Expr::bin(BinOp::Or, lhs, rhs)
    }

    pub fn xor(lhs: Expr, rhs: Expr) -> Self {
        Expr::bin(BinOp::Xor, lhs, rhs)
    }

    pub fn iff(lhs: Expr, rhs: Expr) -> Self {
        Expr::bin(BinOp::Iff, lhs, rhs)
    }

    /// Distinct variables referenced, in sorted order (concepts before categories).
    pub fn variables(&self) -> Vec<Var> {
        let mut set = BTreeSet::new();
        self.collect_vars(&mut set);
        set.into_iter().collect()
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Lit(l) => {
                out.insert(l.var);
            }
            Expr::Not(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates the formula with `value` supplying each variable's truth value.
    pub fn eval<F: Fn(Var) -> bool + Copy>(&self, value: F) -> bool {
        match self {
            Expr::Lit(l) => value(l.var) != l.negated,
            Expr::Not(e) => !e.eval(value),
            Expr::Bin(op, a, b) => op.apply(a.eval(value), b.eval(value)),
        }
    }

    pub fn mentions_category(&self) -> bool {
        self.variables().iter().any(|v| v.kind == VarKind::Category)
    }

    /// A key identical for formulas equal up to operand order of commutative connectives.
    pub(crate) fn commutative_key(&self) -> String {
        match self {
            Expr::Lit(l) => format!("{}{}", if l.negated { "!" } else { "" }, l.var),
            Expr::Not(e) => format!("!({})", e.commutative_key()),
            Expr::Bin(op, a, b) => {
                let (mut ka, mut kb) = (a.commutative_key(), b.commutative_key());
                if ka > kb {
                    std::mem::swap(&mut ka, &mut kb);
                }
                format!("{}({},{})", op.keyword(), ka, kb)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleFamily {
    /// Every predicate is a concept.
    ConceptConcept,
    /// At least one predicate is a category.
    CategoryConcept,
}

impl RuleFamily {
    pub fn of(formula: &Expr) -> Self {
        if formula.mentions_category() {
            RuleFamily::CategoryConcept
        } else {
            RuleFamily::ConceptConcept
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: usize,
    pub formula: Expr,
    pub family: RuleFamily,
    pub confidence: Option<f64>,
}

impl Rule {
    pub fn new(id: usize, formula: Expr, confidence: Option<f64>) -> Self {
        let family = RuleFamily::of(&formula);
        Rule { id, formula, family, confidence }
    }

    pub fn arity(&self) -> usize {
        self.formula.variables().len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    /// Builds a rule set from formulas, numbering them `0..N-1`.
    pub fn from_formulas<I>(formulas: I) -> Self
    where
        I: IntoIterator<Item = (Expr, Option<f64>)>,
    {
        let rules = formulas.into_iter().enumerate().map(|(id, (f, conf))| Rule::new(id, f, conf)).collect();
        RuleSet { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rule> {
        self.rules.iter()
    }

    /// Keeps rules matching `keep` and renumbers ids from zero.
    pub fn filtered<F: FnMut(&Rule) -> bool>(&self, mut keep: F) -> RuleSet {
        RuleSet::from_formulas(self.rules.iter().filter(|r| keep(r)).map(|r| (r.formula.clone(), r.confidence)))
    }
}

/// Variable universe: `M` concepts and `K` categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSchema {
    pub num_concepts: usize,
    pub num_categories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_names: Option<Vec<String>>,
}

impl RuleSchema {
    pub fn new(num_concepts: usize, num_categories: usize) -> Result<Self, ValidationError> {
        let schema = RuleSchema { num_concepts, num_categories, concept_names: None, category_names: None };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<(), ValidationError> {
        if self.num_concepts < 1 || self.num_categories < 2 {
            return Err(ValidationError::Schema(format!(
                "need at least 1 concept and 2 categories, got M={} K={}",
                self.num_concepts, self.num_categories
            )));
        }
        for (label, names, expected) in [
            ("concept", &self.concept_names, self.num_concepts),
            ("category", &self.category_names, self.num_categories),
        ] {
            if let Some(names) = names {
                if names.len() != expected {
                    return Err(ValidationError::Schema(format!(
                        "{} names: expected {expected}, got {}",
                        label,
                        names.len()
                    )));
                }
                let unique: BTreeSet<&String> = names.iter().collect();
                if unique.len() != names.len() {
                    return Err(ValidationError::Schema(format!("duplicate {label} names")));
                }
            }
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_concepts + self.num_categories
    }

    pub fn contains(&self, var: Var) -> bool {
        match var.kind {
            VarKind::Concept => var.index < self.num_concepts,
            VarKind::Category => var.index < self.num_categories,
        }
    }
}
