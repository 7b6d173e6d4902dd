use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QStateError {
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("state is not normalized (trace {0})")]
    NotNormalized(f64),
    #[error("state is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("rotation axis is not a unit vector (norm {0})")]
    AxisNotUnit(f64),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("coherence time must be positive, got {0}")]
    NonPositiveCoherenceTime(f64),
    #[error("free evolution time must be non-negative, got {0}")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field, reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhotonicsError {
    #[error("inconsistent provenance pattern: {0}")]
    InconsistentProvenance(String),
    #[error("histogram fit failed: {0}")]
    FitFailure(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no data: {0}")]
    Empty(&'static str),
    #[error("degenerate confusion matrix (f_up + f_down = 1)")]
    DegenerateConfusion,
    #[error("readout fidelity {0} is outside [0.5, 1]")]
    ReadoutFidelityOutOfRange(f64),
    #[error("probabilities are not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("dtau grid value {value} ns exceeds the detection window ({window} ns)")]
    GridOutOfRange { value: f64, window: f64 },
    #[error(transparent)]
    Photonics(#[from] PhotonicsError),
}
