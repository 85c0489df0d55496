use std::io;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every residue is zero; the iterate is a fixed point.
    #[error("converged: zero residue")]
    EmptySupport,

    #[error("probability vector is not coherent with the residue at coordinate {0}")]
    Incoherent(usize),

    #[error("infeasible marginals at coordinate {coord}: {msg}")]
    Infeasible { coord: usize, msg: String },

    #[error("iterates diverged by iteration {0}")]
    Diverged(usize),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
