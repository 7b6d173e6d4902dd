//! Estimation from heralded readout records: readout-error correction,
//! parity contrast, fidelity bounds, bootstrap intervals and δτ sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisFilters, ReadoutErrorModel};
use crate::error::AnalysisError;
use crate::photonics::herald::DetectionWindows;
use crate::photonics::overlap::mode_overlap;
use crate::protocol::{EventLog, HeraldRecord};
use crate::qstate::{BellSign, MeasurementBasis, OutcomeProbabilities, TwoQubitState};

const MLE_TOL: f64 = 1e-10;
const MLE_MAX_ITER: usize = 200_000;
const SIMPLEX_TOL: f64 = 1e-9;

/// `P_ψ = η_A η_B / 2`: one photon from each node, one per round, either detector pairing.
pub fn success_probability(eta_a: f64, eta_b: f64) -> f64 {
    0.5 * eta_a * eta_b
}

/// Raw joint readout counts per Bell sign and basis setting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<CorrelationRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub sign: BellSign,
    pub basis: (MeasurementBasis, MeasurementBasis),
    /// `n_uu, n_ud, n_du, n_dd`.
    pub counts: [u64; 4],
}

impl CorrelationTable {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a HeraldRecord>) -> Self {
        let mut table = Self::default();
        for r in records {
            let row = match table.rows.iter_mut().position(|row| row.sign == r.sign && row.basis == r.basis) {
                Some(i) => &mut table.rows[i],
                None => {
                    table.rows.push(CorrelationRow { sign: r.sign, basis: r.basis, counts: [0; 4] });
                    table.rows.last_mut().expect("just pushed")
                }
            };
            row.counts[r.outcome_index()] += 1;
        }
        table.rows.sort_by_key(|row| (row.sign, basis_order(row.basis.0), basis_order(row.basis.1)));
        table
    }

    pub fn counts(&self, sign: BellSign, basis: (MeasurementBasis, MeasurementBasis)) -> [u64; 4] {
        self.rows.iter().find(|row| row.sign == sign && row.basis == basis).map_or([0; 4], |row| row.counts)
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flat_map(|row| row.counts).sum()
    }
}

fn basis_order(b: MeasurementBasis) -> u8 {
    match b {
        MeasurementBasis::Z => 0,
        MeasurementBasis::X => 1,
        MeasurementBasis::MinusX => 2,
    }
}

/// Column-stochastic `P(reported | true)` for one node in `(up, down)` order.
fn node_confusion(m: &ReadoutErrorModel) -> [[f64; 2]; 2] {
    [[m.f_up, 1.0 - m.f_down], [1.0 - m.f_up, m.f_down]]
}

fn check_readout(m: &ReadoutErrorModel) -> Result<(), AnalysisError> {
    for f in [m.f_up, m.f_down] {
        if !(0.5..=1.0).contains(&f) {
            return Err(AnalysisError::ReadoutFidelityOutOfRange(f));
        }
    }
    if (m.f_up + m.f_down - 1.0).abs() < 1e-12 {
        return Err(AnalysisError::DegenerateConfusion);
    }
    Ok(())
}

/// Maximum-likelihood true outcome probabilities given raw counts and the
/// two nodes' readout fidelities.
///
/// When the linear inversion lands inside the simplex it is the likelihood
/// maximum; otherwise expectation-maximization runs on the simplex.
pub fn mle_correct(
    counts: [f64; 4],
    model_a: &ReadoutErrorModel,
    model_b: &ReadoutErrorModel,
) -> Result<[f64; 4], AnalysisError> {
    check_readout(model_a)?;
    check_readout(model_b)?;
    let total: f64 = counts.iter().sum();
    if !(total >= 1.0) {
        return Err(AnalysisError::Empty("no counts to correct"));
    }
    let (ma, mb) = (node_confusion(model_a), node_confusion(model_b));
    let m = |j: usize, k: usize| ma[j >> 1][k >> 1] * mb[j & 1][k & 1];
    let q: [f64; 4] = counts.map(|n| n / total);

    let inv = |c: &[[f64; 2]; 2]| {
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]]
    };
    let (ia, ib) = (inv(&ma), inv(&mb));
    let mut linear = [0.0; 4];
    for (k, p) in linear.iter_mut().enumerate() {
        *p = (0..4).map(|j| ia[k >> 1][j >> 1] * ib[k & 1][j & 1] * q[j]).sum();
    }
    if linear.iter().all(|&p| p > 0.0) {
        return Ok(normalized(linear));
    }

    let mut p = [0.25; 4];
    for _ in 0..MLE_MAX_ITER {
        let predicted: [f64; 4] = std::array::from_fn(|j| (0..4).map(|k| m(j, k) * p[k]).sum());
        let next: [f64; 4] = std::array::from_fn(|k| {
            p[k] * (0..4).filter(|&j| q[j] > 0.0).map(|j| q[j] * m(j, k) / predicted[j]).sum::<f64>()
        });
        let change = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        p = normalized(next);
        if change < MLE_TOL {
            break;
        }
    }
    Ok(p)
}

fn normalized(p: [f64; 4]) -> [f64; 4] {
    let clipped = p.map(|x| x.max(0.0));
    let s: f64 = clipped.iter().sum();
    clipped.map(|x| x / s)
}

/// Which average of the two rotated-basis parities defines the contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastWeighting {
    /// Both settings count equally, whatever their sample sizes.
    #[default]
    Equal,
    /// Settings weighted by their number of heralds.
    Exposure,
}

fn check_simplex(p: &OutcomeProbabilities) -> Result<(), AnalysisError> {
    let s = p.sum();
    if (s - 1.0).abs() > SIMPLEX_TOL || p.to_array().iter().any(|&x| x < -SIMPLEX_TOL) {
        return Err(AnalysisError::NotNormalized(s));
    }
    Ok(())
}

/// Odd/even contrast of the rotated bases, oriented so that the target
/// Bell state scores `+1`: ψ⁻ is odd in `{X,X}` and even in `{−X,X}`, ψ⁺
/// the opposite.
pub fn contrast(
    probs_xx: &OutcomeProbabilities,
    probs_mxx: &OutcomeProbabilities,
    sign: BellSign,
) -> Result<f64, AnalysisError> {
    contrast_weighted(probs_xx, probs_mxx, sign, 0.5)
}

/// Contrast with weight `w_xx` on the `{X,X}` setting and `1 − w_xx` on `{−X,X}`.
pub fn contrast_weighted(
    probs_xx: &OutcomeProbabilities,
    probs_mxx: &OutcomeProbabilities,
    sign: BellSign,
    w_xx: f64,
) -> Result<f64, AnalysisError> {
    check_simplex(probs_xx)?;
    check_simplex(probs_mxx)?;
    let (s, s_rot) = match sign {
        BellSign::Minus => (1.0, -1.0),
        BellSign::Plus => (-1.0, 1.0),
    };
    let parity = |p: &OutcomeProbabilities| p.odd() - p.even();
    Ok((w_xx * s * parity(probs_xx) + (1.0 - w_xx) * s_rot * parity(probs_mxx)).clamp(-1.0, 1.0))
}

/// `½(P_ud + P_du + C) − √(P_uu P_dd)`, unclamped.
pub fn fidelity_lower_bound_raw(p: &OutcomeProbabilities, c: f64) -> f64 {
    fidelity_best_estimate(p, c) - (p.uu.max(0.0) * p.dd.max(0.0)).sqrt()
}

/// The lower bound as reported, clamped at zero.
pub fn fidelity_lower_bound(p: &OutcomeProbabilities, c: f64) -> f64 {
    fidelity_lower_bound_raw(p, c).max(0.0)
}

/// The lower bound with the square-root term dropped.
pub fn fidelity_best_estimate(p: &OutcomeProbabilities, c: f64) -> f64 {
    0.5 * (p.ud + p.du + c)
}

/// Noise-free values of the estimators for a known state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactEstimate {
    pub probabilities: OutcomeProbabilities,
    pub contrast: f64,
    pub f_lower: f64,
    pub f_best: f64,
}

pub fn exact_estimate(state: &TwoQubitState, sign: BellSign) -> ExactEstimate {
    use MeasurementBasis::*;
    let zz = state.measurement_probabilities(Z, Z);
    let c = contrast(&state.measurement_probabilities(X, X), &state.measurement_probabilities(MinusX, X), sign)
        .expect("state probabilities are normalized");
    ExactEstimate {
        probabilities: zz,
        contrast: c,
        f_lower: fidelity_lower_bound_raw(&zz, c),
        f_best: fidelity_best_estimate(&zz, c),
    }
}

/// Point estimate for one sign from a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignEstimate {
    pub probabilities: OutcomeProbabilities,
    pub contrast: f64,
    pub f_lower_raw: f64,
    pub f_best: f64,
}

const ZZ: (MeasurementBasis, MeasurementBasis) = (MeasurementBasis::Z, MeasurementBasis::Z);
const XX: (MeasurementBasis, MeasurementBasis) = (MeasurementBasis::X, MeasurementBasis::X);
const MXX: (MeasurementBasis, MeasurementBasis) = (MeasurementBasis::MinusX, MeasurementBasis::X);

fn tally<'a>(records: impl IntoIterator<Item = &'a HeraldRecord>) -> [[f64; 4]; 3] {
    let mut counts = [[0.0; 4]; 3];
    for r in records {
        let slot = match r.basis {
            ZZ => 0,
            XX => 1,
            MXX => 2,
            _ => continue,
        };
        counts[slot][r.outcome_index()] += 1.0;
    }
    counts
}

fn estimate_from_counts(
    counts: &[[f64; 4]; 3],
    sign: BellSign,
    readout: (&ReadoutErrorModel, &ReadoutErrorModel),
    weighting: ContrastWeighting,
) -> Result<SignEstimate, AnalysisError> {
    let corrected = |c: [f64; 4], what| {
        if c.iter().sum::<f64>() < 1.0 {
            return Err(AnalysisError::Empty(what));
        }
        mle_correct(c, readout.0, readout.1).map(OutcomeProbabilities::from_array)
    };
    let zz = corrected(counts[0], "no {Z,Z} readouts")?;
    let xx = corrected(counts[1], "no {X,X} readouts")?;
    let mxx = corrected(counts[2], "no {-X,X} readouts")?;
    let w_xx = match weighting {
        ContrastWeighting::Equal => 0.5,
        ContrastWeighting::Exposure => {
            let (n1, n2) = (counts[1].iter().sum::<f64>(), counts[2].iter().sum::<f64>());
            n1 / (n1 + n2)
        }
    };
    let c = contrast_weighted(&xx, &mxx, sign, w_xx)?;
    Ok(SignEstimate {
        probabilities: zz,
        contrast: c,
        f_lower_raw: fidelity_lower_bound_raw(&zz, c),
        f_best: fidelity_best_estimate(&zz, c),
    })
}

pub fn estimate_sign(
    records: &[&HeraldRecord],
    sign: BellSign,
    readout: (&ReadoutErrorModel, &ReadoutErrorModel),
    weighting: ContrastWeighting,
) -> Result<SignEstimate, AnalysisError> {
    estimate_from_counts(&tally(records.iter().copied()), sign, readout, weighting)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Central percentile interval of `samples` at confidence `level`.
pub fn percentile_interval(samples: &[f64], level: f64) -> Interval {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Interval { low: quantile(&sorted, tail), high: quantile(&sorted, 1.0 - tail) }
}

/// Resamples `items` with replacement `replicates` times and evaluates
/// `statistic` on each resample. Replicates where the statistic is
/// undefined are dropped.
pub fn bootstrap_replicates<T, S, F>(items: &[T], replicates: usize, seed: u64, statistic: F) -> Vec<S>
where
    F: Fn(&[&T]) -> Option<S>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample: Vec<&T> = Vec::with_capacity(items.len());
    let mut out = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        sample.clear();
        sample.extend((0..items.len()).map(|_| &items[rng.random_range(0..items.len())]));
        if let Some(s) = statistic(&sample) {
            out.push(s);
        }
    }
    out
}

/// Nonparametric percentile bootstrap interval of a scalar statistic.
pub fn bootstrap_ci<T, F>(
    items: &[T],
    statistic: F,
    level: f64,
    replicates: usize,
    seed: u64,
) -> Result<Interval, AnalysisError>
where
    F: Fn(&[&T]) -> f64,
{
    if items.len() < 2 {
        return Err(AnalysisError::Empty("bootstrap needs at least two records"));
    }
    let samples = bootstrap_replicates(items, replicates, seed, |s| Some(statistic(s)));
    Ok(percentile_interval(&samples, level))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub filters: AnalysisFilters,
    /// Replaces both signs' δτ cut when set.
    pub dtau_max_ns: Option<f64>,
    pub weighting: ContrastWeighting,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub oracle: bool,
}

impl AnalysisOptions {
    pub fn for_log(log: &EventLog) -> Self {
        Self {
            filters: log.config.filters,
            dtau_max_ns: None,
            weighting: ContrastWeighting::Equal,
            replicates: 2000,
            level: 0.68,
            seed: log.config.seed,
            oracle: false,
        }
    }

    fn windows(&self, hardware: &DetectionWindows, sign: BellSign) -> DetectionWindows {
        let w = self.filters.windows(hardware, sign);
        match self.dtau_max_ns {
            Some(d) => DetectionWindows { dtau_max_ns: d, ..w },
            None => w,
        }
    }
}

fn select<'a>(log: &'a EventLog, sign: BellSign, windows: &DetectionWindows) -> Vec<&'a HeraldRecord> {
    log.records.iter().filter(|r| r.sign == sign && windows.accepts(&r.herald())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub sign: BellSign,
    pub n_events: usize,
    pub round2_len_ns: f64,
    pub dtau_max_ns: f64,
    pub probabilities: OutcomeProbabilities,
    pub probabilities_ci: [Interval; 4],
    pub contrast: f64,
    pub contrast_ci: Interval,
    /// Reported lower bound, clamped at zero.
    pub f_lower: f64,
    pub f_lower_raw: f64,
    pub f_lower_ci: Interval,
    pub f_best: f64,
    pub f_best_ci: Interval,
    /// Bootstrap standard error of `f_best`.
    pub f_best_se: f64,
    /// Fraction of bootstrap replicates with the lower bound above ½.
    pub p_value_above_half: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_true_fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_fidelity_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
    pub weighting: ContrastWeighting,
    pub signs: Vec<SignReport>,
    /// Signs whose filtered records miss at least one basis setting.
    pub insufficient: Vec<BellSign>,
    pub table: CorrelationTable,
}

fn report_sign(
    log: &EventLog,
    sign: BellSign,
    windows: &DetectionWindows,
    opts: &AnalysisOptions,
) -> Result<SignReport, AnalysisError> {
    let records = select(log, sign, windows);
    let readout = (&log.config.readout_a, &log.config.readout_b);
    let point = estimate_sign(&records, sign, readout, opts.weighting)?;
    let seed = opts.seed
        ^ match sign {
            BellSign::Minus => 0x6d69_6e75,
            BellSign::Plus => 0x706c_7573,
        };
    let reps = bootstrap_replicates(&records, opts.replicates, seed, |s| {
        let refs: Vec<&HeraldRecord> = s.iter().map(|r| **r).collect();
        estimate_sign(&refs, sign, readout, opts.weighting).ok()
    });
    if reps.is_empty() {
        return Err(AnalysisError::Empty("every bootstrap replicate lacked a basis setting"));
    }
    let column = |f: &dyn Fn(&SignEstimate) -> f64| reps.iter().map(f).collect::<Vec<f64>>();
    let ci = |f: &dyn Fn(&SignEstimate) -> f64| percentile_interval(&column(f), opts.level);
    let best = column(&|e| e.f_best);
    let mean = best.iter().sum::<f64>() / best.len() as f64;
    let se = (best.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (best.len().max(2) - 1) as f64).sqrt();
    let above = reps.iter().filter(|e| e.f_lower_raw > 0.5).count() as f64 / reps.len() as f64;

    let (mean_true, true_se) = if opts.oracle {
        let f: Vec<f64> = records.iter().filter_map(|r| r.true_state_fidelity).collect();
        if f.is_empty() {
            (None, None)
        } else {
            let m = f.iter().sum::<f64>() / f.len() as f64;
            let var = f.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (f.len().max(2) - 1) as f64;
            (Some(m), Some((var / f.len() as f64).sqrt()))
        }
    } else {
        (None, None)
    };

    Ok(SignReport {
        sign,
        n_events: records.len(),
        round2_len_ns: windows.round2_len_ns,
        dtau_max_ns: windows.dtau_max_ns,
        probabilities: point.probabilities,
        probabilities_ci: [
            ci(&|e| e.probabilities.uu),
            ci(&|e| e.probabilities.ud),
            ci(&|e| e.probabilities.du),
            ci(&|e| e.probabilities.dd),
        ],
        contrast: point.contrast,
        contrast_ci: ci(&|e| e.contrast),
        f_lower: point.f_lower_raw.max(0.0),
        f_lower_raw: point.f_lower_raw,
        f_lower_ci: ci(&|e| e.f_lower_raw),
        f_best: point.f_best,
        f_best_ci: ci(&|e| e.f_best),
        f_best_se: se,
        p_value_above_half: above,
        mean_true_fidelity: mean_true,
        true_fidelity_se: true_se,
    })
}

/// Readout-corrected fidelity estimates for both Bell signs, each with its
/// own post-selection windows.
pub fn analyze(log: &EventLog, opts: &AnalysisOptions) -> Result<FidelityReport, AnalysisError> {
    if log.records.is_empty() {
        return Err(AnalysisError::Empty("event log has no heralds"));
    }
    let hw = &log.config.windows;
    let mut signs = Vec::new();
    let mut insufficient = Vec::new();
    let mut kept: Vec<&HeraldRecord> = Vec::new();
    for sign in BellSign::ALL {
        let windows = opts.windows(hw, sign);
        kept.extend(select(log, sign, &windows));
        match report_sign(log, sign, &windows, opts) {
            Ok(r) => signs.push(r),
            Err(AnalysisError::Empty(_)) => insufficient.push(sign),
            Err(e) => return Err(e),
        }
    }
    if signs.is_empty() {
        return Err(AnalysisError::Empty("no sign has readouts in every basis setting"));
    }
    Ok(FidelityReport {
        level: opts.level,
        replicates: opts.replicates,
        seed: opts.seed,
        weighting: opts.weighting,
        signs,
        insufficient,
        table: CorrelationTable::from_records(kept),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub sign: BellSign,
    pub n_events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_best: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_best_ci: Option<Interval>,
    /// `(1 + ⟨V(δτ)⟩)/2` over the selected heralds.
    pub interference_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dtau_max_ns: f64,
    pub cells: Vec<SweepCell>,
}

/// Re-filters the log at each `δτ_max` of `grid` (each sign keeping its
/// own second-window length) and re-estimates the fidelity.
pub fn sweep_dtau(log: &EventLog, grid: &[f64], opts: &AnalysisOptions) -> Result<Vec<SweepRow>, AnalysisError> {
    let hw = &log.config.windows;
    for &d in grid {
        if !(d >= 0.0) || d > hw.dtau_max_ns {
            return Err(AnalysisError::GridOutOfRange { value: d, window: hw.dtau_max_ns });
        }
    }
    let indist = &log.config.indist;
    let mut rows = Vec::with_capacity(grid.len());
    for &d in grid {
        let row_opts = AnalysisOptions { dtau_max_ns: Some(d), ..*opts };
        let mut cells = Vec::new();
        for sign in BellSign::ALL {
            let windows = row_opts.windows(hw, sign);
            let records = select(log, sign, &windows);
            let mean_v = if records.is_empty() {
                mode_overlap(0.0, indist)
            } else {
                records.iter().map(|r| mode_overlap(r.dtau_ns, indist)).sum::<f64>() / records.len() as f64
            };
            let (f_best, f_best_ci) = match report_sign(log, sign, &windows, &row_opts) {
                Ok(r) => (Some(r.f_best), Some(r.f_best_ci)),
                Err(AnalysisError::Empty(_)) => (None, None),
                Err(e) => return Err(e),
            };
            cells.push(SweepCell {
                sign,
                n_events: records.len(),
                f_best,
                f_best_ci,
                interference_bound: 0.5 * (1.0 + mean_v),
            });
        }
        rows.push(SweepRow { dtau_max_ns: d, cells });
    }
    Ok(rows)
}
