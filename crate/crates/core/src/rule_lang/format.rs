use std::fmt::Write;

use super::{Expr, Rule, RuleSet};

const ATOM_PRECEDENCE: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Lit(_) | Expr::Not(_) => ATOM_PRECEDENCE,
        Expr::Bin(op, _, _) => op.precedence(),
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Lit(l) => {
            if l.negated {
                out.push_str("NOT ");
            }
            write!(out, "{}", l.var).unwrap();
        }
        Expr::Not(inner) => {
            out.push_str("NOT ");
            write_operand(out, inner, matches!(**inner, Expr::Bin(..)));
        }
        Expr::Bin(op, lhs, rhs) => {
            let p = op.precedence();
            let lhs_parens = if op.chains() { precedence(lhs) < p } else { precedence(lhs) <= p };
            write_operand(out, lhs, lhs_parens);
            write!(out, " {} ", op.keyword()).unwrap();
            write_operand(out, rhs, precedence(rhs) <= p);
        }
    }
}

fn write_operand(out: &mut String, e: &Expr, parens: bool) {
    if parens {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

/// Canonical single-line text for one rule (no trailing newline).
pub fn format_rule(rule: &Rule) -> String {
    let mut out = String::new();
    if let Some(conf) = rule.confidence {
        write!(out, "conf={conf} ").unwrap();
    }
    write_expr(&mut out, &rule.formula);
    out
}

/// Canonical rule file; `parse_rules` of the result reproduces `rules` exactly.
pub fn format_rules(rules: &RuleSet) -> String {
    let mut out = String::new();
    for rule in rules.iter() {
        out.push_str(&format_rule(rule));
        out.push('\n');
    }
    out
}
