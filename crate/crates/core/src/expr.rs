//! Scalar expressions over named uncertain parameters.
//!
//! Constraint matrix entries are written as small arithmetic expressions,
//! e.g. `c/(M^2*I_m)`, parsed once and evaluated at every sampled parameter
//! vector. The grammar is
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | base
//! base   := atom ("^" integer)?
//! atom   := number | identifier | "(" expr ")"
//! ```
//!
//! Exponents are integers and may carry a leading minus sign (`x^-2`).

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

/// Name lookup used by [`Expr::eval`].
pub trait Env {
    fn get(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn get(&self, name: &str) -> Option<f64> {
        HashMap::get(self, name).copied()
    }
}

impl<F: Fn(&str) -> Option<f64>> Env for F {
    fn get(&self, name: &str) -> Option<f64> {
        self(name)
    }
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn param(name: impl Into<String>) -> Self {
        Expr::Param(name.into())
    }

    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        parse(text)
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Param(name) => env
                .get(name)
                .ok_or_else(|| EvalError::Unbound(name.clone()))?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                num / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval(env)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                base.powi(*k)
            }
        })
    }

    /// Every identifier referenced by the tree.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Param(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(a) | Expr::Pow(a, _) => a.collect_params(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.free_params().is_empty()
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Param(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) => 1 + a.depth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Param(_) => 5,
        }
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}
binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

// Printing uses the minimal parenthesization that parses back to the same
// tree. Negative constants have no literal form and print as `(-c)`, which
// reads back as `Neg(Const(c))`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "(-{:?})", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Param(name) => f.write_str(name),
            Expr::Neg(a) => {
                f.write_str("-")?;
                child(f, a, a.precedence() < 3)
            }
            Expr::Pow(a, k) => {
                let atom = matches!(**a, Expr::Param(_))
                    || matches!(**a, Expr::Const(v) if v >= 0.0 && !v.is_sign_negative());
                child(f, a, !atom)?;
                write!(f, "^{k}")
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let p = self.precedence();
                let op = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    Expr::Mul(..) => "*",
                    _ => "/",
                };
                child(f, a, a.precedence() < p)?;
                f.write_str(op)?;
                child(f, b, b.precedence() <= p)
            }
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => toks.push((start, Tok::Plus)),
            b'-' => toks.push((start, Tok::Minus)),
            b'*' => toks.push((start, Tok::Star)),
            b'/' => toks.push((start, Tok::Slash)),
            b'^' => toks.push((start, Tok::Caret)),
            b'(' => toks.push((start, Tok::LParen)),
            b')' => toks.push((start, Tok::RParen)),
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::BadNumber(lit.to_string()),
                })?;
                toks.push((start, Tok::Num(v)));
                continue;
            }
            c if c == b'_' || c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::UnknownCharacter(ch),
                });
            }
        }
        i += 1;
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind,
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(t) => self.error(ParseErrorKind::UnexpectedToken(format!("{t:?}"))),
            None => self.error(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = lhs + self.term()?;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = lhs * self.factor()?;
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = lhs / self.factor()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            return Ok(-self.factor()?);
        }
        self.base()
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let atom = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let negative = if let Some(Tok::Minus) = self.peek() {
                self.pos += 1;
                true
            } else {
                false
            };
            let at = self.offset();
            match self.peek().cloned() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    self.pos += 1;
                    let k = v as i32;
                    return Ok(Expr::Pow(Box::new(atom), if negative { -k } else { k }));
                }
                Some(_) => {
                    return Err(ParseError {
                        offset: at,
                        kind: ParseErrorKind::NonIntegerExponent,
                    })
                }
                None => return Err(self.error(ParseErrorKind::UnexpectedEnd)),
            }
        }
        Ok(atom)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(Expr::Param(name))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.unexpected()),
                }
            }
            _ => Err(self.unexpected()),
        }
    }
}

/// Parses `text` under the module grammar.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.unexpected());
    }
    Ok(e)
}

pub fn eval<E: Env + ?Sized>(e: &Expr, q: &E) -> Result<f64, EvalError> {
    e.eval(q)
}

pub fn free_params(e: &Expr) -> BTreeSet<String> {
    e.free_params()
}

/// One uncertain parameter with its nominal value and box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub nominal: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Ordered table of uncertain parameters; its length is the uncertainty
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamTable {
    pub fn new(params: Vec<Parameter>) -> Result<Self, crate::error::ModelError> {
        use crate::error::ModelError;
        let mut index = HashMap::new();
        for (i, p) in params.iter().enumerate() {
            if !is_identifier(&p.name) {
                return Err(ModelError::schema(
                    format!("parameters[{i}].name"),
                    format!("`{}` is not an identifier", p.name),
                ));
            }
            if !(p.lower.is_finite() && p.upper.is_finite() && p.nominal.is_finite()) {
                return Err(ModelError::schema(
                    format!("parameters[{i}]"),
                    "bounds and nominal must be finite",
                ));
            }
            if !(p.lower <= p.nominal && p.nominal <= p.upper) {
                return Err(ModelError::schema(
                    format!("parameters[{i}]"),
                    format!(
                        "need lower <= nominal <= upper, got {} <= {} <= {}",
                        p.lower, p.nominal, p.upper
                    ),
                ));
            }
            if index.insert(p.name.clone(), i).is_some() {
                return Err(ModelError::schema(
                    format!("parameters[{i}].name"),
                    format!("duplicate parameter `{}`", p.name),
                ));
            }
        }
        Ok(ParamTable { params, index })
    }

    /// Box of relative half-width `fraction` around each nominal value,
    /// with endpoints ordered for negative nominals.
    pub fn relative_box(
        nominals: &[(&str, f64)],
        fraction: f64,
    ) -> Result<Self, crate::error::ModelError> {
        let params = nominals
            .iter()
            .map(|&(name, nominal)| {
                let a = nominal * (1.0 - fraction);
                let b = nominal * (1.0 + fraction);
                Parameter {
                    name: name.to_string(),
                    nominal,
                    lower: a.min(b),
                    upper: a.max(b),
                }
            })
            .collect();
        Self::new(params)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn nominal(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.nominal).collect()
    }

    /// Same table with every box collapsed onto its nominal value.
    pub fn collapsed(&self) -> Self {
        let params = self
            .params
            .iter()
            .map(|p| Parameter {
                lower: p.nominal,
                upper: p.nominal,
                ..p.clone()
            })
            .collect();
        ParamTable {
            params,
            index: self.index.clone(),
        }
    }

    /// Binds a value vector (in table order) for expression evaluation.
    pub fn bind<'a>(&'a self, values: &'a [f64]) -> Binding<'a> {
        Binding {
            table: self,
            values,
        }
    }
}

/// A parameter vector viewed through its table.
#[derive(Clone, Copy)]
pub struct Binding<'a> {
    table: &'a ParamTable,
    values: &'a [f64],
}

impl Env for Binding<'_> {
    fn get(&self, name: &str) -> Option<f64> {
        self.table.index_of(name).and_then(|i| self.values.get(i).copied())
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}
