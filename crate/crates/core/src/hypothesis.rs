//! Null hypotheses as predicates over type configurations, and a small text
//! grammar for writing them:
//!
//! ```text
//! expr       := or_term
//! or_term    := and_term { "or" and_term }
//! and_term   := atom { "and" atom }
//! atom       := comparison | "(" expr ")" | preset
//! comparison := operand cmp number
//! operand    := quantity | quantity "/" quantity
//! quantity   := never | killed | defiers | saved | compliers | always
//!             | affected | avg_effect
//! cmp        := "==" | "<=" | ">=" | "<" | ">"
//! preset     := fisher_null | neyman_null
//! number     := integer | decimal | integer "/" integer | "inf" | "-" number
//! ```
//!
//! A comparison whose operand is undefined (a `0/0` ratio) is false, so such
//! configurations never belong to a ratio null.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lattice::{enumerate_type_configs, SampleSize, TypeConfiguration};
use crate::quantity::{Extended, Operand, Quantity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
    Lt,
    Gt,
}

impl Cmp {
    fn holds(self, ord: Ordering) -> bool {
        match self {
            Cmp::Eq => ord == Ordering::Equal,
            Cmp::Le => ord != Ordering::Greater,
            Cmp::Ge => ord != Ordering::Less,
            Cmp::Lt => ord == Ordering::Less,
            Cmp::Gt => ord == Ordering::Greater,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "==",
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Lt => "<",
            Cmp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Nobody is affected: no defiers and no compliers.
    FisherNull,
    /// Zero average effect: as many defiers as compliers.
    NeymanNull,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Or(Vec<Expr>),
    And(Vec<Expr>),
    Compare { operand: Operand, cmp: Cmp, value: Extended },
    Preset(Preset),
}

impl Expr {
    pub fn compare(operand: impl Into<Operand>, cmp: Cmp, value: Extended) -> Self {
        Expr::Compare { operand: operand.into(), cmp, value }
    }

    pub fn eval(&self, theta: &TypeConfiguration) -> bool {
        match self {
            Expr::Or(xs) => xs.iter().any(|x| x.eval(theta)),
            Expr::And(xs) => xs.iter().all(|x| x.eval(theta)),
            Expr::Compare { operand, cmp, value } => operand
                .eval(theta)
                .compare(value)
                .is_some_and(|ord| cmp.holds(ord)),
            Expr::Preset(Preset::FisherNull) => theta.defier == 0 && theta.complier == 0,
            Expr::Preset(Preset::NeymanNull) => theta.defier == theta.complier,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Or(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " or ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            Expr::And(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " and ")?;
                    }
                    match x {
                        Expr::Or(_) => write!(f, "({x})")?,
                        _ => write!(f, "{x}")?,
                    }
                }
                Ok(())
            }
            Expr::Compare { operand, cmp, value } => write!(f, "{operand} {} {value}", cmp.symbol()),
            Expr::Preset(Preset::FisherNull) => write!(f, "fisher_null"),
            Expr::Preset(Preset::NeymanNull) => write!(f, "neyman_null"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(Ratio<i64>),
    Cmp(Cmp),
    Slash,
    Minus,
    LParen,
    RParen,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax { position, message: message.into() }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b'/' => {
                out.push((start, Tok::Slash));
                i += 1;
            }
            b'-' => {
                out.push((start, Tok::Minus));
                i += 1;
            }
            b'=' | b'<' | b'>' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                let cmp = match (c, two) {
                    (b'=', true) => Cmp::Eq,
                    (b'<', true) => Cmp::Le,
                    (b'>', true) => Cmp::Ge,
                    (b'<', false) => Cmp::Lt,
                    (b'>', false) => Cmp::Gt,
                    _ => return Err(syntax(start, "expected '==' ")),
                };
                i += if two { 2 } else { 1 };
                out.push((start, Tok::Cmp(cmp)));
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let lit = &text[start..i];
                out.push((start, Tok::Number(parse_decimal(lit).ok_or_else(|| syntax(start, format!("bad number {lit:?}")))?)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_ascii_lowercase())));
            }
            _ => return Err(syntax(start, format!("unexpected character {:?}", c as char))),
        }
    }
    Ok(out)
}

fn parse_decimal(lit: &str) -> Option<Ratio<i64>> {
    let (int, frac) = lit.split_once('.').unwrap_or((lit, ""));
    if int.is_empty() && frac.is_empty() || frac.contains('.') || frac.len() > 15 {
        return None;
    }
    let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let scale = 10i64.pow(frac.len() as u32);
    let frac: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Ratio::new(int.checked_mul(scale)?.checked_add(frac)?, scale))
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.and_term()?];
        while self.keyword("or") {
            self.pos += 1;
            terms.push(self.and_term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Or(terms) })
    }

    fn and_term(&mut self) -> Result<Expr> {
        let mut atoms = vec![self.atom()?];
        while self.keyword("and") {
            self.pos += 1;
            atoms.push(self.atom()?);
        }
        Ok(if atoms.len() == 1 { atoms.pop().unwrap() } else { Expr::And(atoms) })
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.here();
        match self.next() {
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(syntax(self.toks.get(self.pos - 1).map_or(self.end, |t| t.0), "expected ')'")),
                }
            }
            Some(Tok::Ident(w)) if w == "fisher_null" => Ok(Expr::Preset(Preset::FisherNull)),
            Some(Tok::Ident(w)) if w == "neyman_null" => Ok(Expr::Preset(Preset::NeymanNull)),
            Some(Tok::Ident(w)) => {
                let first: Quantity = w.parse().map_err(|_| syntax(at, format!("unknown quantity {w:?}")))?;
                let operand = if self.peek() == Some(&Tok::Slash) {
                    self.pos += 1;
                    let at2 = self.here();
                    match self.next() {
                        Some(Tok::Ident(w2)) => Operand::Ratio(
                            first,
                            w2.parse().map_err(|_| syntax(at2, format!("unknown quantity {w2:?}")))?,
                        ),
                        _ => return Err(syntax(at2, "expected a quantity after '/'")),
                    }
                } else {
                    Operand::Single(first)
                };
                let at_cmp = self.here();
                let cmp = match self.next() {
                    Some(Tok::Cmp(c)) => c,
                    _ => return Err(syntax(at_cmp, "expected a comparison operator")),
                };
                let value = self.number()?;
                Ok(Expr::Compare { operand, cmp, value })
            }
            _ => Err(syntax(at, "expected a comparison, preset or '('")),
        }
    }

    fn number(&mut self) -> Result<Extended> {
        let at = self.here();
        match self.next() {
            Some(Tok::Minus) => Ok(match self.number()? {
                Extended::Finite(r) => Extended::Finite(-r),
                Extended::PosInf => Extended::NegInf,
                _ => return Err(syntax(at, "bad negative number")),
            }),
            Some(Tok::Ident(w)) if w == "inf" => Ok(Extended::PosInf),
            Some(Tok::Number(n)) => {
                if self.peek() == Some(&Tok::Slash) {
                    self.pos += 1;
                    let at2 = self.here();
                    match self.next() {
                        Some(Tok::Number(d)) if n.is_integer() && d.is_integer() && *d.numer() != 0 => {
                            Ok(Extended::Finite(n / d))
                        }
                        _ => Err(syntax(at2, "expected a nonzero integer denominator")),
                    }
                } else {
                    Ok(Extended::Finite(n))
                }
            }
            _ => Err(syntax(at, "expected a number")),
        }
    }
}

/// Parses hypothesis text into an expression tree.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks: &toks, pos: 0, end: text.len() };
    let e = p.expr()?;
    if p.pos < toks.len() {
        return Err(syntax(p.here(), "unexpected trailing input"));
    }
    Ok(e)
}

/// A finite set of type configurations: the null hypothesis.
#[derive(Debug, Clone)]
pub struct HypothesisSet {
    label: String,
    expr: Option<Expr>,
    s: SampleSize,
    members: Vec<u32>,
    mask: Vec<bool>,
}

impl HypothesisSet {
    pub fn new(expr: Expr, s: SampleSize) -> Result<Self> {
        let label = expr.to_string();
        let e = expr.clone();
        let mut set = Self::from_predicate(label, s, move |t| e.eval(t))?;
        set.expr = Some(expr);
        Ok(set)
    }

    /// Parses and enumerates; empty sets are rejected.
    pub fn parse(text: &str, s: SampleSize) -> Result<Self> {
        Self::new(parse_expr(text)?, s)
    }

    pub fn from_predicate(
        label: impl Into<String>,
        s: SampleSize,
        pred: impl Fn(&TypeConfiguration) -> bool,
    ) -> Result<Self> {
        let label = label.into();
        let mut members = Vec::new();
        let mut mask = vec![false; s.lattice_len()];
        for (rank, theta) in enumerate_type_configs(s).enumerate() {
            if pred(&theta) {
                members.push(rank as u32);
                mask[rank] = true;
            }
        }
        if members.is_empty() {
            return Err(Error::InvalidHypothesis(format!("{label:?} has no members at s={s}")));
        }
        Ok(HypothesisSet { label, expr: None, s, members, mask })
    }

    /// The whole lattice.
    pub fn everything(s: SampleSize) -> Self {
        Self::from_predicate("all", s, |_| true).expect("lattice is nonempty")
    }

    pub fn fisher_null(s: SampleSize) -> Self {
        Self::new(Expr::Preset(Preset::FisherNull), s).expect("fisher null is nonempty")
    }

    pub fn neyman_null(s: SampleSize) -> Self {
        Self::new(Expr::Preset(Preset::NeymanNull), s).expect("neyman null is nonempty")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }

    pub fn sample_size(&self) -> SampleSize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member ranks in canonical order.
    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = TypeConfiguration> + '_ {
        self.members.iter().map(|&r| TypeConfiguration::from_rank(self.s, r as usize))
    }

    #[inline]
    pub fn contains_rank(&self, rank: usize) -> bool {
        self.mask[rank]
    }

    pub fn contains(&self, theta: &TypeConfiguration) -> bool {
        theta.total() == self.s.get() && self.mask[theta.rank()]
    }

    pub fn is_subset_of(&self, other: &HypothesisSet) -> bool {
        self.s == other.s && self.members.iter().all(|&r| other.mask[r as usize])
    }
}

impl Serialize for HypothesisSet {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ss(s: u32) -> SampleSize {
        SampleSize::new(s).unwrap()
    }

    #[test]
    fn killed_zero_count() {
        let h = HypothesisSet::parse("killed == 0", ss(100)).unwrap();
        assert_eq!(h.len(), 5151);
        let h = HypothesisSet::parse("killed == 0 and saved >= 1", ss(100)).unwrap();
        assert_eq!(h.len(), 5050);
    }

    #[test]
    fn ratio_null_membership() {
        let h = HypothesisSet::parse("saved / killed >= 5", ss(100)).unwrap();
        assert!(h.contains(&TypeConfiguration::new(0, 0, 100, 0)));
        assert!(!h.contains(&TypeConfiguration::new(100, 0, 0, 0)));
        assert!(h.contains(&TypeConfiguration::new(0, 2, 10, 88)));
        assert!(!h.contains(&TypeConfiguration::new(0, 2, 9, 89)));
    }

    #[test]
    fn presets() {
        let f = HypothesisSet::fisher_null(ss(100));
        assert_eq!(f.len(), 101);
        let n = HypothesisSet::parse("neyman_null", ss(4)).unwrap();
        assert!(n.iter().all(|t| t.defier == t.complier));
    }

    #[test]
    fn precedence_and_parentheses() {
        let e = parse_expr("never == 1 or killed == 0 and saved == 0").unwrap();
        assert!(matches!(e, Expr::Or(ref v) if v.len() == 2));
        let e = parse_expr("(never == 1 or killed == 0) and saved == 0").unwrap();
        assert!(matches!(e, Expr::And(ref v) if v.len() == 2));
        assert_eq!(e.to_string(), "(never == 1 or defiers == 0) and compliers == 0");
    }

    #[test]
    fn numbers() {
        let e = parse_expr("avg_effect >= 0.4").unwrap();
        assert!(e.eval(&TypeConfiguration::new(30, 10, 50, 10)));
        assert!(!e.eval(&TypeConfiguration::new(30, 11, 50, 9)));
        let e = parse_expr("avg_effect > -1/3").unwrap();
        assert!(!e.eval(&TypeConfiguration::new(0, 1, 0, 2)));
        assert!(parse_expr("saved / killed <= inf").is_ok());
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_expr("killed = 0") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 7),
            other => panic!("{other:?}"),
        }
        match parse_expr("killed == 0 and") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 15),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("deaths == 0"), Err(Error::Syntax { position: 0, .. })));
        assert!(matches!(parse_expr("(killed == 0"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("killed == 0 )"), Err(Error::Syntax { position: 12, .. })));
    }

    #[test]
    fn empty_set_rejected() {
        let err = HypothesisSet::parse("killed > 3", ss(3)).unwrap_err();
        assert!(matches!(err, Error::InvalidHypothesis(_)));
    }
}
