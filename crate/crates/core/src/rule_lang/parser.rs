use std::fmt;

use thiserror::Error;

use super::{BinOp, Expr, Rule, RuleSet, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    BadIndex(String),
    BadConfidence(String),
    /// `XOR` / `<->` chained without parentheses.
    ConnectiveArity(&'static str),
    EmptyRuleSet,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token `{t}`"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of line"),
            ParseErrorKind::BadIndex(t) => write!(f, "invalid variable index in `{t}`"),
            ParseErrorKind::BadConfidence(t) => {
                write!(f, "confidence must be a number in [0,1], got `{t}`")
            }
            ParseErrorKind::ConnectiveArity(op) => {
                write!(f, "`{op}` is binary; parenthesize to combine more than two operands")
            }
            ParseErrorKind::EmptyRuleSet => write!(f, "rule file contains no rules"),
        }
    }
}

/// Parse failure with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(Var),
    Not,
    Op(BinOp),
    LParen,
    RParen,
    Conf(f64),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Var(v) => write!(f, "{v}"),
            Tok::Not => f.write_str("NOT"),
            Tok::Op(op) => f.write_str(op.keyword()),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
            Tok::Conf(c) => write!(f, "conf={c}"),
        }
    }
}

struct Lexed {
    toks: Vec<(Tok, usize)>,
    end_col: usize,
}

fn lex_line(line: &str, line_no: usize) -> Result<Lexed, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let err = |column: usize, kind| ParseError { line: line_no, column, kind };
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '(' => {
                toks.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, col));
                i += 1;
            }
            '<' => {
                if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') {
                    toks.push((Tok::Op(BinOp::Iff), col));
                    i += 3;
                } else {
                    return Err(err(col, ParseErrorKind::UnexpectedChar(c)));
                }
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '=' | '.' | '-' | '+'))
                {
                    // `-` only belongs to a word inside `conf=` (exponents); stop at `<->`.
                    if chars[i] == '-' && !chars[start..i].starts_with(&['c', 'o', 'n', 'f', '=']) {
                        break;
                    }
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                toks.push((word_token(&word).map_err(|k| err(col, k))?, col));
            }
            other => return Err(err(col, ParseErrorKind::UnexpectedChar(other))),
        }
    }
    Ok(Lexed { toks, end_col: chars.len() + 1 })
}

fn word_token(word: &str) -> Result<Tok, ParseErrorKind> {
    match word {
        "NOT" => return Ok(Tok::Not),
        "AND" => return Ok(Tok::Op(BinOp::And)),
        "OR" => return Ok(Tok::Op(BinOp::Or)),
        "XOR" => return Ok(Tok::Op(BinOp::Xor)),
        _ => {}
    }
    if let Some(value) = word.strip_prefix("conf=") {
        return match value.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(Tok::Conf(v)),
            _ => Err(ParseErrorKind::BadConfidence(value.to_string())),
        };
    }
    let (head, digits) = word.split_at(1);
    let make: fn(usize) -> Var = match head {
        "c" => Var::concept,
        "y" => Var::category,
        _ => return Err(ParseErrorKind::UnexpectedToken(word.to_string())),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseErrorKind::BadIndex(word.to_string()));
    }
    digits.parse::<usize>().map(|i| Tok::Var(make(i))).map_err(|_| ParseErrorKind::BadIndex(word.to_string()))
}

struct LineParser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl LineParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { line: self.line, column: self.col(), kind }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(t) => self.error(ParseErrorKind::UnexpectedToken(t.to_string())),
            None => self.error(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn rule(&mut self) -> Result<(Expr, Option<f64>), ParseError> {
        let confidence = match self.peek() {
            Some(Tok::Conf(c)) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        };
        let expr = self.iff()?;
        if self.pos < self.toks.len() {
            return Err(self.unexpected());
        }
        Ok((expr, confidence))
    }

    /// Non-chaining binary level: `lower [op lower]`.
    fn binary_once(&mut self, op: BinOp, lower: fn(&mut Self) -> Result<Expr, ParseError>) -> Result<Expr, ParseError> {
        let lhs = lower(self)?;
        if self.peek() != Some(&Tok::Op(op)) {
            return Ok(lhs);
        }
        self.pos += 1;
        let rhs = lower(self)?;
        if self.peek() == Some(&Tok::Op(op)) {
            return Err(self.error(ParseErrorKind::ConnectiveArity(op.keyword())));
        }
        Ok(Expr::bin(op, lhs, rhs))
    }

    /// Left-associative chain: `lower (op lower)*`.
    fn binary_chain(
        &mut self,
        op: BinOp,
        lower: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let mut lhs = lower(self)?;
        while self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            let rhs = lower(self)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn iff(&mut self) -> Result<Expr, ParseError> {
        self.binary_once(BinOp::Iff, Self::xor)
    }

    fn xor(&mut self) -> Result<Expr, ParseError> {
        self.binary_once(BinOp::Xor, Self::or)
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(BinOp::Or, Self::and)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(BinOp::And, Self::unary)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Expr::not(self.unary()?))
            }
            Some(Tok::Var(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Expr::lit(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.iff()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.unexpected());
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.unexpected()),
        }
    }
}

/// Parses a rule file. Rules receive ids `0..N-1` in file order.
pub fn parse_rules(text: &str) -> Result<RuleSet, ParseError> {
    let mut rules = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let lexed = lex_line(line, line_no)?;
        if lexed.toks.is_empty() {
            continue;
        }
        let mut p = LineParser { toks: lexed.toks, pos: 0, line: line_no, end_col: lexed.end_col };
        let (formula, confidence) = p.rule()?;
        rules.push(Rule::new(rules.len(), formula, confidence));
    }
    if rules.is_empty() {
        return Err(ParseError { line: 1, column: 1, kind: ParseErrorKind::EmptyRuleSet });
    }
    Ok(RuleSet { rules })
}
