use thiserror::Error;

/// Failure kinds shared by every module.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("geometry degenerate: focal point at distance {distance}")]
    GeometryDegenerate { distance: f64 },
    #[error("graph leaves the chart: {0}")]
    OutOfChart(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error("foliation violation: {0}")]
    FoliationViolation(String),
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),
    #[error("no contraction: {0}")]
    NoContraction(String),
    #[error("step size: {0}")]
    StepSize(String),
    #[error("degenerate gradient: {0}")]
    DegenerateGradient(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::InvalidArgument(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidArgument(msg.into()))
}

pub(crate) fn numeric<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::NumericFailure(msg.into()))
}
