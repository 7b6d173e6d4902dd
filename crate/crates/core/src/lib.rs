//! Simulation and analysis of heralded remote entanglement between two
//! solid-state spin qubits via two-round single-photon interference.

pub mod analysis;
pub mod config;
pub mod error;
pub mod photonics;
pub mod protocol;
pub mod qstate;

pub use config::ExperimentConfig;
pub use error::{AnalysisError, ConfigError, PhotonicsError, QStateError};
pub use qstate::{BellSign, MeasurementBasis, TwoQubitState};
