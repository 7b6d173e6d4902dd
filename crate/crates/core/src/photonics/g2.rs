//! Cross-detector coincidence histogram and two-photon interference visibility.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::herald::{ClickEvent, Detector};
use super::timing::ns_to_ps;
use crate::error::PhotonicsError;

/// Side peaks this far from zero (in repetition periods) are histogrammed.
pub const MAX_PEAK_ORDER: i64 = 8;
/// Nearest side peaks pair the two rounds of one attempt, whose spin
/// branches are anticorrelated; the non-interfering reference uses
/// peaks from this order on.
pub const MIN_REFERENCE_ORDER: i64 = 2;
const MIN_SIDE_COUNTS: u64 = 10;
const FIT_RANGE_NS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedClick {
    pub attempt: u64,
    #[serde(flatten)]
    pub click: ClickEvent,
}

impl TaggedClick {
    /// Each round is one excitation slot; slots are `repetition_period` apart.
    fn absolute_ps(&self, period_ps: i64) -> i64 {
        let slot = 2 * self.attempt as i64 + (self.click.round as i64 - 1);
        slot * period_ps + self.click.time_ps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub bin_width_ns: f64,
    pub repetition_period_ns: f64,
    /// Bin `k` collects `t(D2) − t(D1)` within half a bin of `k · bin_width`.
    pub bins: BTreeMap<i64, u64>,
}

impl G2Histogram {
    pub fn new(bin_width_ns: f64, repetition_period_ns: f64) -> Self {
        Self { bin_width_ns, repetition_period_ns, bins: BTreeMap::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    pub fn bin_center_ns(&self, bin: i64) -> f64 {
        bin as f64 * self.bin_width_ns
    }

    /// Adds another histogram with the same binning; order does not matter.
    pub fn merge(&mut self, other: &G2Histogram) {
        assert_eq!(self.bin_width_ns, other.bin_width_ns);
        assert_eq!(self.repetition_period_ns, other.repetition_period_ns);
        for (k, v) in &other.bins {
            *self.bins.entry(*k).or_insert(0) += v;
        }
    }

    /// Peak order of a bin and the bin centre's offset from that peak.
    fn peak_offset(&self, bin: i64) -> (i64, f64) {
        let c = self.bin_center_ns(bin);
        let k = (c / self.repetition_period_ns).round() as i64;
        (k, c - k as f64 * self.repetition_period_ns)
    }

    /// Total counts of peak `k` within `|offset| < half_width_ns`.
    pub fn peak_area(&self, k: i64, half_width_ns: f64) -> u64 {
        self.bins
            .iter()
            .filter(|(b, _)| {
                let (kk, x) = self.peak_offset(**b);
                kk == k && x.abs() < half_width_ns
            })
            .map(|(_, v)| v)
            .sum()
    }

    /// Keeps only pairs drawn from clicks passing `keep`.
    pub fn from_filtered(
        clicks: &[TaggedClick],
        bin_width_ns: f64,
        repetition_period_ns: f64,
        keep: impl Fn(&TaggedClick) -> bool,
    ) -> Self {
        let kept: Vec<TaggedClick> = clicks.iter().filter(|c| keep(c)).copied().collect();
        g2_histogram(&kept, bin_width_ns, repetition_period_ns)
    }
}

/// Coincidences between the two detectors over a click stream tagged with
/// attempt indices, including side peaks at multiples of the repetition
/// period.
pub fn g2_histogram(clicks: &[TaggedClick], bin_width_ns: f64, repetition_period_ns: f64) -> G2Histogram {
    let mut hist = G2Histogram::new(bin_width_ns, repetition_period_ns);
    let period = ns_to_ps(repetition_period_ns);
    let width = ns_to_ps(bin_width_ns).max(1);
    let reach = (2 * MAX_PEAK_ORDER + 1) * period / 2;
    let times = |det: Detector| -> Vec<i64> {
        let mut t: Vec<i64> =
            clicks.iter().filter(|c| c.click.detector == det).map(|c| c.absolute_ps(period)).collect();
        t.sort_unstable();
        t
    };
    let d1 = times(Detector::D1);
    let d2 = times(Detector::D2);
    let mut start = 0;
    for &t1 in &d1 {
        while start < d2.len() && d2[start] < t1 - reach {
            start += 1;
        }
        for &t2 in d2[start..].iter().take_while(|&&t2| t2 <= t1 + reach) {
            let dt = t2 - t1;
            let bin = (dt + width / 2).div_euclid(width);
            *hist.bins.entry(bin).or_insert(0) += 1;
        }
    }
    hist
}

/// Two-sided exponential `amplitude · exp(-|dt| / decay_ns)` fitted to the
/// side peaks, in counts per bin per peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub amplitude: f64,
    pub decay_ns: f64,
}

impl PeakFit {
    pub fn eval(&self, offset_ns: f64) -> f64 {
        self.amplitude * (-offset_ns.abs() / self.decay_ns).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityEstimate {
    /// `(g⊥ − g) / g⊥` integrated over `|dt| < central_half_width_ns`.
    pub visibility: f64,
    /// Delta-method standard error from Poisson noise in the central peak
    /// and in the fitted reference.
    pub visibility_se: f64,
    pub central_half_width_ns: f64,
    pub g_perp_fit: PeakFit,
    pub central_counts: u64,
    pub expected_central_counts: f64,
    /// Whole-peak area of the central peak over the mean reference side peak.
    pub area_ratio: f64,
    pub side_peaks_used: usize,
}

pub fn interference_visibility(g: f64, g_perp: f64) -> f64 {
    (g_perp - g) / g_perp
}

/// Fits the side-peak shape and compares the central peak against the
/// non-interfering expectation `g⊥`, half the side-peak height.
pub fn visibility_from_histogram(
    hist: &G2Histogram,
    central_half_width_ns: f64,
) -> Result<VisibilityEstimate, PhotonicsError> {
    let half_period = hist.repetition_period_ns / 2.0;
    let orders: Vec<i64> = (MIN_REFERENCE_ORDER..=MAX_PEAK_ORDER).flat_map(|k| [-k, k]).collect();
    let side_total: u64 = orders.iter().map(|&k| hist.peak_area(k, half_period)).sum();
    if side_total < MIN_SIDE_COUNTS {
        return Err(PhotonicsError::FitFailure(format!(
            "side peaks hold {side_total} coincidences, need at least {MIN_SIDE_COUNTS}"
        )));
    }

    // Every bin of every reference peak is one sample of the common shape,
    // including empty bins.
    let bins_per_peak = (hist.repetition_period_ns / hist.bin_width_ns).round() as i64;
    let mut points = Vec::new();
    for &k in &orders {
        let center = (k as f64 * hist.repetition_period_ns / hist.bin_width_ns).round() as i64;
        for b in (center - bins_per_peak / 2)..=(center + bins_per_peak / 2) {
            let (kk, x) = hist.peak_offset(b);
            if kk == k && x.abs() <= FIT_RANGE_NS {
                points.push((x.abs(), *hist.bins.get(&b).unwrap_or(&0) as f64));
            }
        }
    }
    let fit = fit_decay(&points)?;
    let fitted_counts: f64 = points.iter().map(|p| p.1).sum();

    let mut central = 0u64;
    let mut expected = 0.0;
    let half_bins = (central_half_width_ns / hist.bin_width_ns).ceil() as i64 + 1;
    for b in -half_bins..=half_bins {
        let x = hist.bin_center_ns(b);
        if x.abs() < central_half_width_ns {
            central += hist.bins.get(&b).copied().unwrap_or(0);
            expected += 0.5 * fit.eval(x);
        }
    }
    let mean_side = side_total as f64 / orders.len() as f64;
    let ratio = central as f64 / expected;
    Ok(VisibilityEstimate {
        visibility: interference_visibility(central as f64, expected),
        visibility_se: (central as f64 / (expected * expected) + ratio * ratio / fitted_counts).sqrt(),
        central_half_width_ns,
        g_perp_fit: fit,
        central_counts: central,
        expected_central_counts: expected,
        area_ratio: hist.peak_area(0, half_period) as f64 / mean_side,
        side_peaks_used: orders.len(),
    })
}

/// Poisson maximum likelihood for `n(x) ~ A exp(-x / τ)`: for a fixed `τ`
/// the amplitude is closed-form, and the profile likelihood in `τ` is
/// maximized by golden-section search.
fn fit_decay(points: &[(f64, f64)]) -> Result<PeakFit, PhotonicsError> {
    let total: f64 = points.iter().map(|p| p.1).sum();
    let weighted_x: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let amplitude = |tau: f64| total / points.iter().map(|p| (-p.0 / tau).exp()).sum::<f64>();
    let profile = |tau: f64| {
        let a = amplitude(tau);
        total * a.ln() - weighted_x / tau - a * points.iter().map(|p| (-p.0 / tau).exp()).sum::<f64>()
    };
    let (mut lo, mut hi) = (0.05f64.ln(), 1e4f64.ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if profile(m1.exp()) < profile(m2.exp()) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let tau = (0.5 * (lo + hi)).exp();
    let a = amplitude(tau);
    if !a.is_finite() || !tau.is_finite() || a <= 0.0 {
        return Err(PhotonicsError::FitFailure("degenerate side-peak shape".into()));
    }
    Ok(PeakFit { amplitude: a, decay_ns: tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::herald::Provenance;

    fn click(attempt: u64, detector: Detector, round: u8, t_ns: f64) -> TaggedClick {
        TaggedClick {
            attempt,
            click: ClickEvent { detector, round, time_ps: ns_to_ps(t_ns), provenance: Provenance::NvA },
        }
    }

    #[test]
    fn empty_stream() {
        assert!(g2_histogram(&[], 1.0, 600.0).is_empty());
    }

    #[test]
    fn pairs_land_in_expected_bins() {
        let clicks =
            [click(0, Detector::D1, 1, 10.0), click(0, Detector::D2, 1, 13.0), click(1, Detector::D2, 1, 10.0)];
        let h = g2_histogram(&clicks, 1.0, 600.0);
        assert_eq!(h.bins.get(&3), Some(&1));
        assert_eq!(h.bins.get(&1200), Some(&1));
        assert_eq!(h.total(), 2);
        assert_eq!(h.peak_area(0, 300.0), 1);
        assert_eq!(h.peak_area(2, 300.0), 1);
    }

    #[test]
    fn merge_is_additive() {
        let a = g2_histogram(&[click(0, Detector::D1, 1, 5.0), click(0, Detector::D2, 2, 5.0)], 1.0, 600.0);
        let mut b = a.clone();
        b.merge(&a);
        assert_eq!(b.total(), 2 * a.total());
    }

    #[test]
    fn visibility_formula() {
        assert!((interference_visibility(0.1, 0.5) - 0.8).abs() < 1e-12);
        assert_eq!(interference_visibility(0.5, 0.5), 0.0);
        assert_eq!(interference_visibility(0.0, 0.5), 1.0);
    }

    fn synthetic(central_scale: f64) -> G2Histogram {
        let mut h = G2Histogram::new(0.5, 600.0);
        for k in -MAX_PEAK_ORDER..=MAX_PEAK_ORDER {
            let scale = if k == 0 { central_scale } else { 1.0 };
            for b in -60..=60 {
                let x = b as f64 * 0.5;
                let counts = (scale * 1000.0 * (-x.abs() / 12.0).exp()).round() as u64;
                h.bins.insert(k * 1200 + b, counts);
            }
        }
        h
    }

    #[test]
    fn recovers_synthetic_visibility() {
        // Central peak at 0.1 of a side peak: g⊥ = 0.5 of side, V = 0.8.
        let est = visibility_from_histogram(&synthetic(0.1), 2.56).unwrap();
        assert!((est.visibility - 0.8).abs() < 0.005, "{est:?}");
        assert!((est.g_perp_fit.decay_ns - 12.0).abs() < 0.2);
        let est = visibility_from_histogram(&synthetic(0.5), 2.56).unwrap();
        assert!(est.visibility.abs() < 0.01);
        assert!((est.area_ratio - 0.5).abs() < 0.01);
        let est = visibility_from_histogram(&synthetic(0.0), 2.56).unwrap();
        assert!((est.visibility - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_side_peaks_fail() {
        let mut h = G2Histogram::new(0.5, 600.0);
        h.bins.insert(0, 100);
        h.bins.insert(2400, 3);
        assert!(matches!(visibility_from_histogram(&h, 2.56), Err(PhotonicsError::FitFailure(_))));
    }
}
