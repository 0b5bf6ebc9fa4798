use std::fmt;

/// A single broken constraint found by [`crate::model::validate_policy`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BelowZero { file: usize, value: f64 },
    AboveOne { file: usize, value: f64 },
    NotFinite { file: usize },
    SumMismatch { sum: f64, cache_size: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BelowZero { file, value } => {
                write!(f, "c[{}] = {} is below 0", file + 1, value)
            }
            Violation::AboveOne { file, value } => {
                write!(f, "c[{}] = {} exceeds 1", file + 1, value)
            }
            Violation::NotFinite { file } => write!(f, "c[{}] is not finite", file + 1),
            Violation::SumMismatch { sum, cache_size } => {
                write!(
                    f,
                    "sum of caching probabilities {} != cache size {}",
                    sum, cache_size
                )
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("caching policy violates constraints: {}", format_violations(.0))]
    PolicyViolation(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
