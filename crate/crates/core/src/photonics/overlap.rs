use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapKind {
    /// `V(δτ) = v0` for every arrival-time difference.
    Constant,
    /// Baseline overlap `v0` dephased by a Gaussian spread of residual
    /// frequency detuning between the two emitters.
    Wavepacket,
}

/// Two-photon indistinguishability. The same factor sets the HOM
/// visibility and scales the coherence of the heralded Bell state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndistinguishabilityModel {
    pub kind: OverlapKind,
    pub v0: f64,
    pub detuning_sigma_hz: f64,
}

impl Default for IndistinguishabilityModel {
    fn default() -> Self {
        Self { kind: OverlapKind::Wavepacket, v0: 0.845, detuning_sigma_hz: 1.4e7 }
    }
}

impl IndistinguishabilityModel {
    pub fn constant(v0: f64) -> Self {
        Self { kind: OverlapKind::Constant, v0, detuning_sigma_hz: 0.0 }
    }

    pub fn wavepacket(v0: f64, detuning_sigma_hz: f64) -> Self {
        Self { kind: OverlapKind::Wavepacket, v0, detuning_sigma_hz }
    }
}

/// Effective two-photon coherence factor at arrival-time difference `dtau_ns`.
///
/// For the wavepacket model a detuning `Δ` imprints a phase `Δ·δτ` on the
/// heralded superposition; averaging over a Gaussian `Δ` gives
/// `v0·exp(-(2π σ δτ)² / 2)`.
pub fn mode_overlap(dtau_ns: f64, model: &IndistinguishabilityModel) -> f64 {
    let v0 = model.v0.clamp(0.0, 1.0);
    match model.kind {
        OverlapKind::Constant => v0,
        OverlapKind::Wavepacket => {
            let x = TAU * model.detuning_sigma_hz * dtau_ns * 1e-9;
            v0 * (-0.5 * x * x).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_model() {
        let m = IndistinguishabilityModel::constant(0.8);
        assert_eq!(mode_overlap(0.0, &m), 0.8);
        assert_eq!(mode_overlap(17.0, &m), 0.8);
        assert_eq!(mode_overlap(-3.0, &IndistinguishabilityModel::constant(1.0)), 1.0);
    }

    #[test]
    fn wavepacket_zero_jitter() {
        let m = IndistinguishabilityModel::wavepacket(0.9, 0.0);
        assert_eq!(mode_overlap(0.0, &m), 0.9);
        assert_eq!(mode_overlap(20.0, &m), 0.9);
        let m = IndistinguishabilityModel::wavepacket(0.9, 5e6);
        assert_eq!(mode_overlap(0.0, &m), 0.9);
    }

    proptest! {
        #[test]
        fn wavepacket_is_bounded_and_monotone(
            v0 in 0.0f64..=1.0,
            sigma in 0.0f64..5e7,
            a in 0.0f64..50.0,
            b in 0.0f64..50.0,
        ) {
            let m = IndistinguishabilityModel::wavepacket(v0, sigma);
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let vn = mode_overlap(near, &m);
            let vf = mode_overlap(-far, &m);
            prop_assert!((0.0..=1.0).contains(&vn));
            prop_assert!((0.0..=1.0).contains(&vf));
            prop_assert!(vf <= vn + 1e-15);
        }
    }
}
