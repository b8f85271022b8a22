use thiserror::Error;

use crate::regularizer::Regularizer;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure of the scalar projection solve for a single constraint.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThetaError {
    #[error("projection has no representable real solution ({0})")]
    NoRealSolution(&'static str),
    #[error("projection root-find did not converge after {iterations} iterations (residual {residual:e})")]
    RootFind { iterations: usize, residual: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("measure must have at least one atom")]
    EmptyMeasure,
    #[error("measure has no positive weight")]
    ZeroMass,
    #[error("weight {index} is invalid: {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("atom {index} of measure `{which}` has zero weight")]
    ZeroWeightAtom { which: &'static str, index: usize },
    #[error("cost entry ({row}, {col}) is invalid: {value}")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("point {index} has dimension {found}, expected {expected}")]
    MixedDimensions {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),
    #[error("{regularizer} domain violation at index {index}: {value}")]
    Domain {
        regularizer: Regularizer,
        index: usize,
        value: f64,
    },
    #[error("projection of constraint ({i}, {j}) failed at gamma = {gamma:e}: {source}")]
    Projection {
        i: usize,
        j: usize,
        gamma: f64,
        #[source]
        source: ThetaError,
    },
    #[error("masses are unbalanced: total(a) = {a}, total(b) = {b}")]
    Unbalanced { a: f64, b: f64 },
    #[error("exact solver: {0}")]
    Exact(String),
    #[error("k-means: {0}")]
    Quantize(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
