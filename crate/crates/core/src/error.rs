use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} outside attainable range ({lo}, {hi})")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("log of non-positive value at tape node {node}")]
    LogDomain { node: usize },

    #[error("non-finite ELBO term for sample {sample}")]
    NonFiniteTerm { sample: usize },

    #[error("degenerate tail: {0}")]
    DegenerateTail(String),

    #[error("integration interval [{lo}, {hi}] misses posterior mass")]
    Interval { lo: f64, hi: f64 },

    #[error("no finite starting point after {attempts} attempts")]
    Init { attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}
