use serde::{Deserialize, Serialize};

use super::timing::{ns_to_ps, ps_to_ns};
use crate::error::ConfigError;
use crate::qstate::BellSign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
}

/// Ground-truth origin of a click. Set when the click is generated, never
/// inferred from observables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NvA,
    NvB,
    LaserScatter,
    DarkCount,
    Afterpulse,
    /// Origin withheld from a blind event log.
    Hidden,
}

impl Provenance {
    pub fn is_nv(self) -> bool {
        matches!(self, Provenance::NvA | Provenance::NvB)
    }

    pub fn is_hidden(&self) -> bool {
        *self == Provenance::Hidden
    }
}

fn hidden() -> Provenance {
    Provenance::Hidden
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClickEvent {
    pub detector: Detector,
    /// Excitation round, 1 or 2.
    pub round: u8,
    /// Arrival time after the round's laser pulse, in picoseconds.
    pub time_ps: i64,
    #[serde(default = "hidden", skip_serializing_if = "Provenance::is_hidden")]
    pub provenance: Provenance,
}

impl ClickEvent {
    pub fn time_ns(&self) -> f64 {
        ps_to_ns(self.time_ps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionWindows {
    pub round1_len_ns: f64,
    pub round2_len_ns: f64,
    pub window_offset_ns: f64,
    pub dtau_max_ns: f64,
}

impl Default for DetectionWindows {
    fn default() -> Self {
        Self { round1_len_ns: 38.4, round2_len_ns: 38.4, window_offset_ns: 2.0, dtau_max_ns: 38.4 }
    }
}

impl DetectionWindows {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("windows.round1_len_ns", self.round1_len_ns),
            ("windows.round2_len_ns", self.round2_len_ns),
            ("windows.window_offset_ns", self.window_offset_ns),
            ("windows.dtau_max_ns", self.dtau_max_ns),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.dtau_max_ns > self.max_len_ns() {
            return Err(ConfigError::invalid("windows.dtau_max_ns", "exceeds the longest detection window"));
        }
        Ok(())
    }

    pub fn max_len_ns(&self) -> f64 {
        self.round1_len_ns.max(self.round2_len_ns)
    }

    pub fn len_ns(&self, round: u8) -> f64 {
        if round == 1 {
            self.round1_len_ns
        } else {
            self.round2_len_ns
        }
    }

    /// `[start, end]` of a round's window in nanoseconds after its pulse.
    pub fn bounds_ns(&self, round: u8) -> (f64, f64) {
        (self.window_offset_ns, self.window_offset_ns + self.len_ns(round))
    }

    pub fn contains(&self, click: &ClickEvent) -> bool {
        let (lo, hi) = self.bounds_ns(click.round);
        click.time_ps >= ns_to_ps(lo) && click.time_ps <= ns_to_ps(hi)
    }

    /// Narrows the second window and the δτ cut; used for per-sign analysis filters.
    pub fn restricted(&self, round2_len_ns: f64, dtau_max_ns: f64) -> Self {
        Self {
            round2_len_ns: self.round2_len_ns.min(round2_len_ns),
            dtau_max_ns: self.dtau_max_ns.min(dtau_max_ns),
            ..*self
        }
    }

    /// Whether an already classified herald also passes these windows.
    pub fn accepts(&self, herald: &Herald) -> bool {
        self.contains(&herald.first)
            && self.contains(&herald.second)
            && herald.dtau_ps.abs() <= ns_to_ps(self.dtau_max_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Herald {
    pub sign: BellSign,
    /// `τ₂ − τ₁` in picoseconds.
    pub dtau_ps: i64,
    pub first: ClickEvent,
    pub second: ClickEvent,
}

impl Herald {
    pub fn dtau_ns(&self) -> f64 {
        ps_to_ns(self.dtau_ps)
    }
}

/// A herald requires exactly one in-window click in each round and
/// `|τ₂ − τ₁| ≤ dtau_max`. Same detector twice heralds ψ⁺, different ψ⁻.
pub fn herald_classify(clicks: &[ClickEvent], windows: &DetectionWindows) -> Option<Herald> {
    let mut first = None;
    let mut second = None;
    for click in clicks.iter().filter(|c| windows.contains(c)) {
        let slot = match click.round {
            1 => &mut first,
            2 => &mut second,
            _ => continue,
        };
        if slot.is_some() {
            return None;
        }
        *slot = Some(*click);
    }
    let (first, second) = (first?, second?);
    let dtau_ps = second.time_ps - first.time_ps;
    if dtau_ps.abs() > ns_to_ps(windows.dtau_max_ns) {
        return None;
    }
    Some(Herald { sign: BellSign::from_same_detector(first.detector == second.detector), dtau_ps, first, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn click(detector: Detector, round: u8, t_ns: f64) -> ClickEvent {
        ClickEvent { detector, round, time_ps: ns_to_ps(t_ns), provenance: Provenance::NvA }
    }

    fn windows() -> DetectionWindows {
        DetectionWindows { dtau_max_ns: 25.6, ..Default::default() }
    }

    #[test]
    fn different_detectors_herald_minus() {
        let h = herald_classify(&[click(Detector::D1, 1, 5.0), click(Detector::D2, 2, 8.0)], &windows()).unwrap();
        assert_eq!(h.sign, BellSign::Minus);
        assert_eq!(h.dtau_ps, 3000);
        assert_eq!(h.dtau_ns(), 3.0);
    }

    #[test]
    fn same_detector_heralds_plus() {
        let h = herald_classify(&[click(Detector::D1, 1, 5.0), click(Detector::D1, 2, 8.0)], &windows()).unwrap();
        assert_eq!(h.sign, BellSign::Plus);
    }

    #[test]
    fn rejects_missing_or_extra_clicks() {
        assert!(herald_classify(&[click(Detector::D1, 1, 5.0)], &windows()).is_none());
        let two = [click(Detector::D1, 1, 5.0), click(Detector::D2, 1, 9.0), click(Detector::D1, 2, 8.0)];
        assert!(herald_classify(&two, &windows()).is_none());
        assert!(herald_classify(&[], &windows()).is_none());
    }

    #[test]
    fn applies_dtau_cut_and_windows() {
        let far = [click(Detector::D1, 1, 3.0), click(Detector::D2, 2, 30.0)];
        assert!(herald_classify(&far, &windows()).is_none());
        // A click before the window opens is ignored rather than counted.
        let early = [click(Detector::D1, 1, 1.0), click(Detector::D1, 1, 5.0), click(Detector::D2, 2, 8.0)];
        assert!(herald_classify(&early, &windows()).is_some());
    }

    #[test]
    fn window_validation() {
        assert!(DetectionWindows::default().validate().is_ok());
        let bad = DetectionWindows { dtau_max_ns: 50.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = DetectionWindows { round1_len_ns: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn arb_click() -> impl Strategy<Value = ClickEvent> {
        (any::<bool>(), 1u8..=2, 0i64..45_000).prop_map(|(d, round, t)| ClickEvent {
            detector: if d { Detector::D1 } else { Detector::D2 },
            round,
            time_ps: t,
            provenance: Provenance::DarkCount,
        })
    }

    proptest! {
        #[test]
        fn never_heralds_without_single_click_per_round(clicks in prop::collection::vec(arb_click(), 0..6)) {
            let w = windows();
            let per_round = |r: u8| clicks.iter().filter(|c| c.round == r && w.contains(c)).count();
            if per_round(1) != 1 || per_round(2) != 1 {
                prop_assert!(herald_classify(&clicks, &w).is_none());
            }
            if let Some(h) = herald_classify(&clicks, &w) {
                prop_assert!(h.dtau_ps.abs() <= ns_to_ps(w.dtau_max_ns));
                prop_assert_eq!(h.sign == BellSign::Plus, h.first.detector == h.second.detector);
            }
        }
    }
}
