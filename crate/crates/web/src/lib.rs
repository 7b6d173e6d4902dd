//! Browser bindings for three interactive views: exact heralded-state
//! fidelity against one model parameter, a simulated two-photon
//! coincidence histogram, and the fidelity/event-count trade-off of the
//! photon time-difference cut.
//!
//! Each binding takes plain numbers and returns a JSON string; failures come
//! back as `{"error": "..."}` so the page never has to catch exceptions.

use herald_core::analysis::{exact_estimate, sweep_dtau, AnalysisOptions, SweepRow};
use herald_core::photonics::{
    analytic_heralded_state, g2_histogram, visibility_from_histogram, IndistinguishabilityModel,
};
use herald_core::protocol::{run_experiment_with, RunOptions};
use herald_core::{BellSign, ExperimentConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest attempt budget accepted from the page.
pub const MAX_ATTEMPTS: u64 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityPoint {
    pub x: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    pub f_lower_minus: f64,
    pub f_lower_plus: f64,
    /// Accepted heralds per attempt, both signs.
    pub p_herald: f64,
}

fn set_knob(config: &mut ExperimentConfig, knob: &str, x: f64) -> Result<(), String> {
    match knob {
        "visibility" => config.indist.v0 = x,
        "detuning_mhz" => config.indist.detuning_sigma_hz = x * 1e6,
        "afterpulse" => config.detectors.afterpulse_prob = x,
        "eta" => {
            config.emission_a.eta = x;
            config.emission_b.eta = x;
        }
        "dark_hz" => config.detectors.dark_count_rate_hz = x,
        other => return Err(format!("unknown parameter {other:?}")),
    }
    config.validate().map_err(|e| e.to_string())
}

/// Exact fidelities of the calibrated setup with one parameter varied.
pub fn fidelity_scan(knob: &str, values: &[f64]) -> Result<Vec<FidelityPoint>, String> {
    values
        .iter()
        .map(|&x| {
            let mut config = ExperimentConfig::default();
            set_knob(&mut config, knob, x)?;
            let h = analytic_heralded_state(&config);
            let minus = exact_estimate(h.state(BellSign::Minus), BellSign::Minus);
            let plus = exact_estimate(h.state(BellSign::Plus), BellSign::Plus);
            Ok(FidelityPoint {
                x,
                f_minus: minus.f_best,
                f_plus: plus.f_best,
                f_lower_minus: minus.f_lower,
                f_lower_plus: plus.f_lower,
                p_herald: h.p_herald,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct G2Demo {
    pub bin_width_ns: f64,
    /// `(bin centre in ns, coincidences)` for every non-empty bin.
    pub bins: Vec<(f64, u64)>,
    pub visibility: f64,
    pub visibility_se: f64,
    pub area_ratio: f64,
    pub clicks: usize,
}

fn check_attempts(attempts: u64) -> Result<(), String> {
    if attempts == 0 || attempts > MAX_ATTEMPTS {
        return Err(format!("attempts must be between 1 and {MAX_ATTEMPTS}"));
    }
    Ok(())
}

/// Simulates a click stream and histograms detector-detector coincidences.
/// A negative `visibility` keeps the calibrated wavepacket model; otherwise
/// the overlap is that constant.
pub fn g2_demo(eta: f64, visibility: f64, attempts: u64, bin_width_ns: f64, seed: u64) -> Result<G2Demo, String> {
    check_attempts(attempts)?;
    if !(bin_width_ns > 0.0) {
        return Err("bin width must be positive".into());
    }
    let mut config = ExperimentConfig::default().with_eta(eta);
    if visibility >= 0.0 {
        config.indist = IndistinguishabilityModel::constant(visibility);
    }
    config.seed = seed;
    config.run.max_attempts = Some(attempts);
    let log = run_experiment_with(&config, RunOptions { record_clicks: true }).map_err(|e| e.to_string())?;
    let clicks = log.clicks.unwrap_or_default();
    let hist = g2_histogram(&clicks, bin_width_ns, config.round_delay_ns);
    let est = visibility_from_histogram(&hist, 2.56).map_err(|e| e.to_string())?;
    Ok(G2Demo {
        bin_width_ns,
        bins: hist.bins.iter().map(|(&b, &n)| (hist.bin_center_ns(b), n)).collect(),
        visibility: est.visibility,
        visibility_se: est.visibility_se,
        area_ratio: est.area_ratio,
        clicks: clicks.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDemo {
    pub heralds: usize,
    pub rows: Vec<SweepRow>,
}

/// Runs the calibrated setup at boosted efficiency and re-filters the heralds
/// on a grid of `|δτ|` cuts.
pub fn sweep_demo(eta: f64, attempts: u64, seed: u64) -> Result<SweepDemo, String> {
    check_attempts(attempts)?;
    let mut config = ExperimentConfig::default().with_eta(eta);
    config.seed = seed;
    config.run.max_attempts = Some(attempts);
    let log = run_experiment_with(&config, RunOptions::default()).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (1..=12).map(|i| f64::from(32 * i) / 10.0).collect();
    let opts = AnalysisOptions { replicates: 200, ..AnalysisOptions::for_log(&log) };
    let rows = sweep_dtau(&log, &grid, &opts).map_err(|e| e.to_string())?;
    Ok(SweepDemo { heralds: log.records.len(), rows })
}

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

#[wasm_bindgen(js_name = fidelityScan)]
pub fn fidelity_scan_json(knob: &str, values: &[f64]) -> String {
    to_json(fidelity_scan(knob, values))
}

#[wasm_bindgen(js_name = g2Demo)]
pub fn g2_demo_json(eta: f64, visibility: f64, attempts: f64, bin_width_ns: f64, seed: f64) -> String {
    to_json(g2_demo(eta, visibility, attempts as u64, bin_width_ns, seed as u64))
}

#[wasm_bindgen(js_name = sweepDemo)]
pub fn sweep_demo_json(eta: f64, attempts: f64, seed: f64) -> String {
    to_json(sweep_demo(eta, attempts as u64, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_knob_is_reported() {
        assert!(fidelity_scan("colour", &[1.0]).is_err());
        let text = fidelity_scan_json("colour", &[1.0]);
        assert!(text.starts_with("{\"error\""));
    }

    #[test]
    fn out_of_range_value_is_reported() {
        assert!(fidelity_scan("afterpulse", &[1.5]).is_err());
    }

    #[test]
    fn attempt_budget_is_bounded() {
        assert!(g2_demo(0.1, -1.0, 0, 0.64, 1).is_err());
        assert!(sweep_demo(0.01, MAX_ATTEMPTS + 1, 1).is_err());
    }
}
