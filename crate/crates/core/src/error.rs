use thiserror::Error;

/// Errors raised by the numerical kernels and the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("deflation basis has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("block {block} is degenerate (sigma_min = {sigma_min:e}){}", iteration_suffix(.iteration))]
    DegenerateBlock {
        block: usize,
        sigma_min: f64,
        iteration: Option<usize>,
    },
}

fn iteration_suffix(iteration: &Option<usize>) -> String {
    match iteration {
        Some(t) => format!(" at iteration {t}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
