use thiserror::Error;

#[derive(Debug, Error)]
pub enum SosError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("function is negative at {point:?} (value {value:e})")]
    Negative { point: Vec<f64>, value: f64 },
    #[error("pointwise derivative bound fails for k = {k}; the planar k ≥ 4 path is unavailable")]
    GateFailed { k: usize },
    #[error("no interior minimum in the window of cube {cube} at depth {depth}; decrease nu")]
    Minimizer { cube: usize, depth: usize },
    #[error("partition exceeded {0} cubes; increase nu or shrink the box")]
    TooManyCubes(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SosError>;
