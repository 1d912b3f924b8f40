use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnknownCharacter(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    NonIntegerExponent,
    BadNumber(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnknownCharacter(c) => write!(f, "unknown character `{c}`"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token {t}"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            ParseErrorKind::NonIntegerExponent => f.write_str("exponent must be an integer"),
            ParseErrorKind::BadNumber(s) => write!(f, "malformed number `{s}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("unbound parameter `{0}`")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("block {block}: evaluation failed at entry ({row},{col}): {source}")]
    Eval {
        block: usize,
        row: usize,
        col: usize,
        #[source]
        source: EvalError,
    },
    #[error("block {block}: matrix not symmetric (|M - M^T| = {asymmetry:.3e})")]
    Asymmetric { block: usize, asymmetry: f64 },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { got: usize, expected: usize },
    #[error("design vector has length {got}, expected {expected}")]
    ThetaLength { got: usize, expected: usize },
    #[error("dimension {0} too large for principal-minor enumeration (max 12)")]
    TooLarge(usize),
}

impl ModelError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevelError {
    #[error("{name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("validation bound is vacuous: denominator {0} <= 0")]
    VacuousBound(f64),
    #[error("a = infinity is only admissible with rho = 0")]
    InfiniteA,
    #[error("iteration {k} outside 1..={k_t}")]
    Iteration { k: u64, k_t: u64 },
    #[error("k_t must exceed 1, got {0}")]
    TooFewIterations(u64),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("problem exceeds desk-scale limits: {0}")]
    TooLarge(String),
    #[error("problem is not affine in the free variables: {0}")]
    NotAffine(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
