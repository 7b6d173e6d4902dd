//! Every physical and protocol parameter of a simulated experiment.
//!
//! Defaults reproduce the calibrated two-node setup: 4e-4 per-pulse
//! detection efficiency, 20 kHz attempts in trains of 300, 600 ns between
//! the two excitation rounds, CR thresholds of 45 and 20 photons, and the
//! spin error budget (microwave 3.5 %, initialization 2 %, optical spin
//! flips 1 %, dephasing 1 %). Readout fidelities are placeholders, not
//! calibrated values.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::photonics::herald::DetectionWindows;
use crate::photonics::overlap::{IndistinguishabilityModel, OverlapKind};
use crate::photonics::timing::{DetectorModel, EmissionModel};
use crate::qstate::{BellSign, ErrorChannel, MeasurementBasis, Node, TwoQubitState};

/// Optical path phase φ in radians, taken modulo 2π.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathPhase(pub f64);

impl PathPhase {
    pub fn radians(self) -> f64 {
        self.0.rem_euclid(std::f64::consts::TAU)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutErrorModel {
    /// Probability of reporting ↑ for a spin in ↑.
    pub f_up: f64,
    /// Probability of reporting ↓ for a spin in ↓.
    pub f_down: f64,
}

impl Default for ReadoutErrorModel {
    fn default() -> Self {
        Self { f_up: 0.95, f_down: 0.99 }
    }
}

impl ReadoutErrorModel {
    pub const PERFECT: Self = Self { f_up: 1.0, f_down: 1.0 };

    pub fn validate(&self, field: &'static str) -> Result<(), ConfigError> {
        for v in [self.f_up, self.f_down] {
            if !(0.5..=1.0).contains(&v) {
                return Err(ConfigError::invalid(field, format!("readout fidelity {v} outside [0.5, 1]")));
            }
        }
        Ok(())
    }
}

/// Spin error channels applied to every heralded state.
///
/// Initialization errors act as a phase flip: a node prepared in ↓ instead
/// of ↑ ends in the Z-flipped superposition, which commutes with the
/// spin-selective excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorBudget {
    pub mw_error_prob: f64,
    pub init_error_prob: f64,
    pub optical_spin_flip_prob: f64,
    pub dephasing_prob: f64,
}

impl Default for ErrorBudget {
    fn default() -> Self {
        Self { mw_error_prob: 0.035, init_error_prob: 0.02, optical_spin_flip_prob: 0.01, dephasing_prob: 0.01 }
    }
}

impl ErrorBudget {
    pub const NONE: Self =
        Self { mw_error_prob: 0.0, init_error_prob: 0.0, optical_spin_flip_prob: 0.0, dephasing_prob: 0.0 };

    /// Each budget entry is the fidelity reduction it causes on an ideal Bell
    /// state, split evenly between the two nodes.
    pub fn apply(&self, state: &TwoQubitState) -> TwoQubitState {
        let channels = [
            // A mis-initialized spin randomizes the relative phase of its branch.
            (ErrorChannel::Dephasing, self.init_error_prob),
            (ErrorChannel::BitFlip, self.optical_spin_flip_prob / 2.0),
            (ErrorChannel::Dephasing, self.dephasing_prob),
            (ErrorChannel::Depolarizing, 2.0 * self.mw_error_prob / 3.0),
        ];
        let mut out = state.clone();
        for node in [Node::A, Node::B] {
            for (kind, p) in channels {
                out = out.apply_error_channel(node, kind, p).expect("validated probability");
            }
        }
        out
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for (name, p) in [
            ("errors.mw_error_prob", self.mw_error_prob),
            ("errors.init_error_prob", self.init_error_prob),
            ("errors.optical_spin_flip_prob", self.optical_spin_flip_prob),
            ("errors.dephasing_prob", self.dephasing_prob),
        ] {
            check_prob(name, p)?;
        }
        Ok(())
    }
}

/// Charge-resonance preparation: green repump followed by a photon-counting probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrModel {
    pub threshold_a: u32,
    pub threshold_b: u32,
    /// Mean probe counts of a node exactly on resonance.
    pub probe_mean_counts_a: f64,
    pub probe_mean_counts_b: f64,
    pub probe_duration_us: f64,
    pub repump_duration_us: f64,
    /// Standard deviation of the post-repump resonance offset, in linewidths.
    pub resonance_jump_sigma: f64,
}

impl Default for CrModel {
    fn default() -> Self {
        Self {
            threshold_a: 45,
            threshold_b: 20,
            probe_mean_counts_a: 60.0,
            probe_mean_counts_b: 27.0,
            probe_duration_us: 60.0,
            repump_duration_us: 10.0,
            resonance_jump_sigma: 1.0,
        }
    }
}

impl CrModel {
    pub fn threshold(&self, node: Node) -> u32 {
        match node {
            Node::A => self.threshold_a,
            Node::B => self.threshold_b,
        }
    }

    pub fn probe_mean(&self, node: Node) -> f64 {
        match node {
            Node::A => self.probe_mean_counts_a,
            Node::B => self.probe_mean_counts_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSetting {
    pub a: MeasurementBasis,
    pub b: MeasurementBasis,
    pub weight: f64,
}

pub fn default_schedule() -> Vec<BasisSetting> {
    use MeasurementBasis::*;
    [(Z, Z), (X, X), (MinusX, X)].into_iter().map(|(a, b)| BasisSetting { a, b, weight: 1.0 / 3.0 }).collect()
}

/// Post-selection applied per Bell sign at analysis time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignFilter {
    pub round2_len_ns: f64,
    pub dtau_max_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisFilters {
    pub minus: SignFilter,
    pub plus: SignFilter,
}

impl Default for AnalysisFilters {
    fn default() -> Self {
        Self {
            minus: SignFilter { round2_len_ns: 38.4, dtau_max_ns: 25.6 },
            // Shorter second window against detector afterpulsing.
            plus: SignFilter { round2_len_ns: 19.2, dtau_max_ns: 12.8 },
        }
    }
}

impl AnalysisFilters {
    pub fn for_sign(&self, sign: BellSign) -> SignFilter {
        match sign {
            BellSign::Minus => self.minus,
            BellSign::Plus => self.plus,
        }
    }

    pub fn windows(&self, hardware: &DetectionWindows, sign: BellSign) -> DetectionWindows {
        let f = self.for_sign(sign);
        hardware.restricted(f.round2_len_ns, f.dtau_max_ns)
    }
}

/// Stopping rule of a run; the first limit reached ends it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBudget {
    pub max_attempts: Option<u64>,
    pub max_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub emission_a: EmissionModel,
    pub emission_b: EmissionModel,
    pub detectors: DetectorModel,
    pub indist: IndistinguishabilityModel,
    pub windows: DetectionWindows,
    pub phi: PathPhase,
    pub attempt_rate_hz: f64,
    pub attempts_per_cr: u32,
    pub round_delay_ns: f64,
    pub cr: CrModel,
    pub ionization_prob_per_attempt: f64,
    pub readout_dead_time_us: f64,
    pub errors: ErrorBudget,
    pub readout_a: ReadoutErrorModel,
    pub readout_b: ReadoutErrorModel,
    pub basis_schedule: Vec<BasisSetting>,
    pub filters: AnalysisFilters,
    pub run: RunBudget,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            emission_a: EmissionModel::default(),
            emission_b: EmissionModel::default(),
            detectors: DetectorModel::default(),
            indist: IndistinguishabilityModel::default(),
            windows: DetectionWindows::default(),
            phi: PathPhase::default(),
            attempt_rate_hz: 2e4,
            attempts_per_cr: 300,
            round_delay_ns: 600.0,
            cr: CrModel::default(),
            ionization_prob_per_attempt: 1.0 / 3000.0,
            readout_dead_time_us: 100.0,
            errors: ErrorBudget::default(),
            readout_a: ReadoutErrorModel::default(),
            readout_b: ReadoutErrorModel::default(),
            basis_schedule: default_schedule(),
            filters: AnalysisFilters::default(),
            run: RunBudget::default(),
        }
    }
}

fn check_prob(field: &'static str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("probability {p} outside [0, 1]")))
    }
}

fn check_nonneg(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be non-negative, got {v}")))
    }
}

impl ExperimentConfig {
    /// Lossless detection, no background, perfect interference, no spin or
    /// readout errors and a perfectly stable charge/resonance state.
    pub fn ideal() -> Self {
        let emission = EmissionModel { eta: 1.0, laser_scatter_fraction: 0.0, ..Default::default() };
        Self {
            emission_a: emission,
            emission_b: emission,
            detectors: DetectorModel { dark_count_rate_hz: 0.0, afterpulse_prob: 0.0, ..Default::default() },
            indist: IndistinguishabilityModel::constant(1.0),
            cr: CrModel { resonance_jump_sigma: 0.0, ..Default::default() },
            ionization_prob_per_attempt: 0.0,
            errors: ErrorBudget::NONE,
            readout_a: ReadoutErrorModel::PERFECT,
            readout_b: ReadoutErrorModel::PERFECT,
            ..Default::default()
        }
    }

    /// Same configuration with both detection efficiencies set to `eta`.
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.emission_a.eta = eta;
        self.emission_b.eta = eta;
        self
    }

    pub fn emission(&self, node: Node) -> &EmissionModel {
        match node {
            Node::A => &self.emission_a,
            Node::B => &self.emission_b,
        }
    }

    pub fn readout(&self, node: Node) -> &ReadoutErrorModel {
        match node {
            Node::A => &self.readout_a,
            Node::B => &self.readout_b,
        }
    }

    pub fn attempt_period_s(&self) -> f64 {
        1.0 / self.attempt_rate_hz
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_emission(&self.emission_a, Node::A)?;
        validate_emission(&self.emission_b, Node::B)?;
        check_nonneg("detectors.dark_count_rate_hz", self.detectors.dark_count_rate_hz)?;
        check_prob("detectors.afterpulse_prob", self.detectors.afterpulse_prob)?;
        if !(self.detectors.afterpulse_decay_ns > 0.0) {
            return Err(ConfigError::invalid("detectors.afterpulse_decay_ns", "must be positive"));
        }
        check_prob("indist.v0", self.indist.v0)?;
        if self.indist.kind == OverlapKind::Wavepacket {
            check_nonneg("indist.detuning_sigma_hz", self.indist.detuning_sigma_hz)?;
        }
        self.windows.validate()?;
        if !(self.attempt_rate_hz > 0.0) {
            return Err(ConfigError::invalid("attempt_rate_hz", "must be positive"));
        }
        if self.attempts_per_cr < 1 {
            return Err(ConfigError::invalid("attempts_per_cr", "must be at least 1"));
        }
        let window_end = self.windows.window_offset_ns + self.windows.round1_len_ns;
        if self.round_delay_ns < window_end {
            return Err(ConfigError::invalid("round_delay_ns", "second round starts before the first window closes"));
        }
        check_nonneg("cr.probe_mean_counts_a", self.cr.probe_mean_counts_a)?;
        check_nonneg("cr.probe_mean_counts_b", self.cr.probe_mean_counts_b)?;
        check_nonneg("cr.probe_duration_us", self.cr.probe_duration_us)?;
        check_nonneg("cr.repump_duration_us", self.cr.repump_duration_us)?;
        check_nonneg("cr.resonance_jump_sigma", self.cr.resonance_jump_sigma)?;
        check_prob("ionization_prob_per_attempt", self.ionization_prob_per_attempt)?;
        check_nonneg("readout_dead_time_us", self.readout_dead_time_us)?;
        self.errors.validate()?;
        self.readout_a.validate("readout_a")?;
        self.readout_b.validate("readout_b")?;
        if self.basis_schedule.is_empty() {
            return Err(ConfigError::invalid("basis_schedule", "must not be empty"));
        }
        if self.basis_schedule.iter().any(|s| !(s.weight >= 0.0)) {
            return Err(ConfigError::invalid("basis_schedule", "weights must be non-negative"));
        }
        let total: f64 = self.basis_schedule.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ConfigError::invalid("basis_schedule", format!("weights sum to {total}, not 1")));
        }
        for sign in BellSign::ALL {
            let f = self.filters.for_sign(sign);
            if !(f.round2_len_ns > 0.0) || !(f.dtau_max_ns > 0.0) {
                return Err(ConfigError::invalid("filters", "filter lengths must be positive"));
            }
        }
        if let Some(h) = self.run.max_hours {
            check_nonneg("run.max_hours", h)?;
        }
        Ok(())
    }
}

fn validate_emission(e: &EmissionModel, node: Node) -> Result<(), ConfigError> {
    let [eta, lifetime, pulse, scatter, tail] = match node {
        Node::A => [
            "emission_a.eta",
            "emission_a.lifetime_ns",
            "emission_a.pulse_len_ns",
            "emission_a.laser_scatter_fraction",
            "emission_a.laser_tail_ns",
        ],
        Node::B => [
            "emission_b.eta",
            "emission_b.lifetime_ns",
            "emission_b.pulse_len_ns",
            "emission_b.laser_scatter_fraction",
            "emission_b.laser_tail_ns",
        ],
    };
    check_prob(eta, e.eta)?;
    if !(e.lifetime_ns > 0.0) {
        return Err(ConfigError::invalid(lifetime, "must be positive"));
    }
    check_nonneg(pulse, e.pulse_len_ns)?;
    check_nonneg(scatter, e.laser_scatter_fraction)?;
    check_prob(scatter, e.scatter_prob())?;
    if e.laser_scatter_fraction > 0.0 && !(e.laser_tail_ns > 0.0) {
        return Err(ConfigError::invalid(tail, "must be positive when laser scatter is enabled"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cr.threshold_a, 45);
        assert_eq!(c.cr.threshold_b, 20);
        assert_eq!(c.attempts_per_cr, 300);
        assert_eq!(c.round_delay_ns, 600.0);
        assert_eq!(c.attempt_rate_hz, 2e4);
        assert_eq!(c.errors.mw_error_prob, 0.035);
        ExperimentConfig::ideal().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig::default();
        c.errors.mw_error_prob = 1.2;
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.basis_schedule[0].weight = 0.9;
        assert!(c.validate().is_err());

        let c = ExperimentConfig { attempts_per_cr: 0, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.readout_a.f_up = 0.4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn path_phase_is_periodic() {
        assert!((PathPhase(7.0).radians() - (7.0 - std::f64::consts::TAU)).abs() < 1e-12);
        assert!((PathPhase(-1.0).radians() - (std::f64::consts::TAU - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn error_budget_none_is_identity() {
        let s = TwoQubitState::bell(BellSign::Minus);
        assert!(ErrorBudget::NONE.apply(&s).max_abs_diff(&s) < 1e-15);
        let noisy = ErrorBudget::default().apply(&s);
        assert!(noisy.fidelity_to_bell(BellSign::Minus).unwrap() < 0.95);
    }

    #[test]
    fn each_budget_entry_costs_its_own_fidelity() {
        let s = TwoQubitState::bell(BellSign::Minus);
        let only = [
            ErrorBudget { mw_error_prob: 0.035, ..ErrorBudget::NONE },
            ErrorBudget { init_error_prob: 0.02, ..ErrorBudget::NONE },
            ErrorBudget { optical_spin_flip_prob: 0.01, ..ErrorBudget::NONE },
            ErrorBudget { dephasing_prob: 0.01, ..ErrorBudget::NONE },
        ];
        for (budget, loss) in only.iter().zip([0.035, 0.02, 0.01, 0.01]) {
            let f = budget.apply(&s).fidelity_to_bell(BellSign::Minus).unwrap();
            assert!((1.0 - f - loss).abs() < 0.2 * loss, "{budget:?} {f}");
        }
    }
}
