use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum DseError {
    #[error("case file, line {line}: {message}")]
    CaseFormat { line: usize, message: String },
    #[error("island detected: bus {0} is not connected to the rest of the network")]
    IslandDetected(i64),
    #[error("network not reducible")]
    NetworkNotReducible,
    #[error("network solve failed")]
    NetworkSolveFailed,
    #[error("integration diverged")]
    IntegrationDiverged,
    #[error("unstable trajectory at t = {0:.4} s")]
    UnstableTrajectory(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate point cloud")]
    DegeneratePointCloud,
    #[error("sample too small")]
    SampleTooSmall,
    #[error("gain computation failed")]
    GainComputationFailed,
    #[error("prediction covariance not PD")]
    PredictionCovarianceNotPd,
    #[error("covariance not PD")]
    CovarianceNotPd,
    #[error("IRLS did not converge")]
    IrlsNotConverged,
    #[error("rank deficient")]
    RankDeficient,
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("unknown measurement channel `{0}`")]
    UnknownChannel(String),
}

impl DseError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            DseError::CaseFormat { .. }
                | DseError::Scenario(_)
                | DseError::UnknownChannel(_)
                | DseError::InvalidParameter(_)
                | DseError::IslandDetected(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, DseError>;
