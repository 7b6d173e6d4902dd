//! Post-herald spin states, per event class and as an exact expectation
//! over all classes.
//!
//! Round-1 spin branches are labelled by the initial spin pair
//! `(↑↑, ↑↓, ↓↑, ↓↓)`; a node is bright in round 1 when its spin is ↑ and
//! bright in round 2 (after the π flip) when it started in ↓. Reported
//! states are after that flip.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::herald::{DetectionWindows, Provenance};
use super::overlap::{mode_overlap, IndistinguishabilityModel};
use super::timing::{ArrivalLaw, DetectorModel};
use crate::config::{ExperimentConfig, PathPhase};
use crate::error::PhotonicsError;
use crate::qstate::{BellSign, TwoQubitState, DD, DU, UD, UU};

/// Detection efficiencies that weight the spin branches consistent with a click pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchContext {
    pub eta_a: f64,
    pub eta_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum ClickKind {
    Nv,
    Spurious,
}

fn kind_of(p: Provenance) -> ClickKind {
    if p.is_nv() {
        ClickKind::Nv
    } else {
        ClickKind::Spurious
    }
}

/// One spin branch consistent with a click pattern: branch index, relative
/// weight (without the uniform 1/4 prior) and the emitting node of each
/// NV click.
#[derive(Debug, Clone, Copy)]
struct BranchTerm {
    branch: usize,
    weight: f64,
    first: Option<Provenance>,
    second: Option<Provenance>,
}

fn branch_terms(first: ClickKind, second: ClickKind, ctx: &BranchContext) -> Vec<BranchTerm> {
    use ClickKind::*;
    use Provenance::{NvA, NvB};
    let (a, b) = (ctx.eta_a, ctx.eta_b);
    let t = |branch, weight, first, second| BranchTerm { branch, weight, first, second };
    match (first, second) {
        (Nv, Nv) => vec![t(UD, a * b, Some(NvA), Some(NvB)), t(DU, b * a, Some(NvB), Some(NvA))],
        // The round-2 photon of an odd branch was lost; ↑↑ emitted one photon
        // in round 1 and none in round 2.
        (Nv, Spurious) => vec![
            t(UD, a * (1.0 - b), Some(NvA), None),
            t(DU, b * (1.0 - a), Some(NvB), None),
            t(UU, a * (1.0 - b), Some(NvA), None),
            t(UU, b * (1.0 - a), Some(NvB), None),
        ],
        (Spurious, Nv) => vec![
            t(UD, (1.0 - a) * b, None, Some(NvB)),
            t(DU, (1.0 - b) * a, None, Some(NvA)),
            t(DD, a * (1.0 - b), None, Some(NvA)),
            t(DD, b * (1.0 - a), None, Some(NvB)),
        ],
        (Spurious, Spurious) => {
            let w = (1.0 - a) * (1.0 - b);
            [UU, UD, DU, DD].into_iter().map(|br| t(br, w, None, None)).collect()
        }
    }
}

/// Heralded state when both clicks are resonant photons from different
/// nodes. The path phase enters both rounds and cancels; the off-diagonal
/// element is scaled by `coherence`.
fn nv_pair_state(sign: BellSign, coherence: f64, phi: PathPhase) -> TwoQubitState {
    // Detector signs: D1 in round 1, then D1 (ψ⁺) or D2 (ψ⁻) in round 2.
    let s1 = 1.0;
    let s2 = sign.signum();
    let phase = Complex64::from_polar(1.0, -phi.radians());
    let zero = Complex64::new(0.0, 0.0);
    let amp_ud = phase * s2;
    let amp_du = phase * s1;
    let coherent = TwoQubitState::from_pure([zero, amp_ud, amp_du, zero]);
    let populations = TwoQubitState::diagonal(coherent.populations());
    populations.mix(&coherent, coherence).flip_both()
}

fn branch_mixture(terms: &[BranchTerm]) -> Option<TwoQubitState> {
    let mut pops = [0.0; 4];
    for term in terms {
        pops[term.branch] += term.weight;
    }
    let total: f64 = pops.iter().sum();
    (total > 0.0).then(|| TwoQubitState::diagonal(pops).flip_both())
}

/// Exact post-herald state for one event class, before spin errors.
///
/// Classes with a spurious click carry no coherence: the undetected photon
/// of the odd branches leaves which-path information behind.
pub fn conditional_heralded_state(
    first: Provenance,
    second: Provenance,
    ctx: &BranchContext,
    dtau_ns: f64,
    phi: PathPhase,
    sign: BellSign,
    indist: &IndistinguishabilityModel,
) -> Result<TwoQubitState, PhotonicsError> {
    if first.is_hidden() || second.is_hidden() {
        return Err(PhotonicsError::InconsistentProvenance("click origin is hidden".into()));
    }
    if first == Provenance::Afterpulse {
        return Err(PhotonicsError::InconsistentProvenance(
            "an afterpulse cannot be the only click of the first round".into(),
        ));
    }
    if first.is_nv() && first == second {
        return Err(PhotonicsError::InconsistentProvenance(format!("{first:?} cannot be bright in both rounds")));
    }
    if second == Provenance::Afterpulse && sign == BellSign::Minus {
        return Err(PhotonicsError::InconsistentProvenance(
            "an afterpulse fires on the same detector and heralds ψ⁺ only".into(),
        ));
    }
    let (k1, k2) = (kind_of(first), kind_of(second));
    if (k1, k2) == (ClickKind::Nv, ClickKind::Nv) {
        return Ok(nv_pair_state(sign, mode_overlap(dtau_ns, indist), phi));
    }
    branch_mixture(&branch_terms(k1, k2, ctx))
        .ok_or_else(|| PhotonicsError::InconsistentProvenance("pattern has zero likelihood".into()))
}

/// Exact herald statistics of one attempt, averaged over all event classes.
#[derive(Debug, Clone)]
pub struct AnalyticHerald {
    /// Heralded states including the spin error budget.
    pub rho_plus: TwoQubitState,
    pub rho_minus: TwoQubitState,
    /// Probability per attempt of a herald of each sign.
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_herald: f64,
    /// Probability per attempt of each (round 1, round 2) provenance pair.
    pub provenance_mass: BTreeMap<(Provenance, Provenance), f64>,
}

impl AnalyticHerald {
    pub fn state(&self, sign: BellSign) -> &TwoQubitState {
        match sign {
            BellSign::Plus => &self.rho_plus,
            BellSign::Minus => &self.rho_minus,
        }
    }

    pub fn probability(&self, sign: BellSign) -> f64 {
        match sign {
            BellSign::Plus => self.p_plus,
            BellSign::Minus => self.p_minus,
        }
    }

    /// Fraction of heralds whose two clicks were both resonant photons.
    pub fn genuine_fraction(&self) -> f64 {
        let genuine: f64 =
            self.provenance_mass.iter().filter(|((a, b), _)| a.is_nv() && b.is_nv()).map(|(_, m)| m).sum();
        genuine / self.p_herald
    }
}

/// Herald statistics under the configured per-sign analysis filters.
pub fn analytic_heralded_state(config: &ExperimentConfig) -> AnalyticHerald {
    let minus = config.filters.windows(&config.windows, BellSign::Minus);
    let plus = config.filters.windows(&config.windows, BellSign::Plus);
    analytic_heralded_state_filtered(config, &minus, &plus)
}

/// Herald statistics of everything the hardware windows accept.
pub fn analytic_heralded_state_unfiltered(config: &ExperimentConfig) -> AnalyticHerald {
    analytic_heralded_state_filtered(config, &config.windows, &config.windows)
}

/// Herald statistics with separate post-selection windows per sign, e.g.
/// the shorter second window used for ψ⁺. Filters must lie within the
/// hardware windows of `config`.
pub fn analytic_heralded_state_filtered(
    config: &ExperimentConfig,
    minus: &DetectionWindows,
    plus: &DetectionWindows,
) -> AnalyticHerald {
    let m = accumulate(config, minus);
    let p = if minus == plus { m.clone() } else { accumulate(config, plus) };
    let finish = |acc: &Accumulated, sign: BellSign| {
        let parts = acc.states[sign_index(sign)].iter().map(|(w, s)| (*w, s));
        let state = TwoQubitState::mixture(parts).unwrap_or_else(TwoQubitState::maximally_mixed);
        config.errors.apply(&state)
    };
    let mut provenance_mass = BTreeMap::new();
    for (acc, sign) in [(&m, BellSign::Minus), (&p, BellSign::Plus)] {
        for ((a, b, s), mass) in &acc.mass {
            if *s == sign {
                *provenance_mass.entry((*a, *b)).or_insert(0.0) += mass;
            }
        }
    }
    let p_minus = m.sign_total(BellSign::Minus);
    let p_plus = p.sign_total(BellSign::Plus);
    AnalyticHerald {
        rho_plus: finish(&p, BellSign::Plus),
        rho_minus: finish(&m, BellSign::Minus),
        p_plus,
        p_minus,
        p_herald: p_plus + p_minus,
        provenance_mass,
    }
}

fn sign_index(sign: BellSign) -> usize {
    match sign {
        BellSign::Minus => 0,
        BellSign::Plus => 1,
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulated {
    mass: BTreeMap<(Provenance, Provenance, BellSign), f64>,
    states: [Vec<(f64, TwoQubitState)>; 2],
}

impl Accumulated {
    fn sign_total(&self, sign: BellSign) -> f64 {
        self.mass.iter().filter(|((_, _, s), _)| *s == sign).map(|(_, m)| m).sum()
    }
}

/// One click source within a round: provenance, arrival law and the odds
/// `p / (1 - p)` that it fires (for background sources).
#[derive(Debug, Clone, Copy)]
struct Source {
    provenance: Provenance,
    law: SourceLaw,
    odds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SourceLaw {
    Arrival(ArrivalLaw),
    Afterpulse,
}

const GRID_CELLS: usize = 1000;

/// Time integrals over the two click times for a pair of sources.
struct TimeIntegrator<'a> {
    hw: &'a DetectionWindows,
    filter: &'a DetectionWindows,
    detectors: &'a DetectorModel,
    indist: &'a IndistinguishabilityModel,
    round_delay_ns: f64,
    cache: Vec<((ArrivalLaw, SourceLaw), (f64, f64))>,
}

impl TimeIntegrator<'_> {
    /// Returns `(∫∫ weight, ∫∫ weight·V(δτ))` over the post-selected region.
    fn integrate(&mut self, first: ArrivalLaw, second: SourceLaw) -> (f64, f64) {
        if let Some((_, v)) = self.cache.iter().find(|(k, _)| *k == (first, second)) {
            return *v;
        }
        let v = self.compute(first, second);
        self.cache.push(((first, second), v));
        v
    }

    fn compute(&self, first: ArrivalLaw, second: SourceLaw) -> (f64, f64) {
        let (lo1, hi1) = self.hw.bounds_ns(1);
        let (lo2, hi2) = self.hw.bounds_ns(2);
        let end2 = self.filter.bounds_ns(2).1.min(hi2);
        let dtau = self.filter.dtau_max_ns.min(self.hw.dtau_max_ns);
        let r = self.round_delay_ns;
        let det = self.detectors;
        let law1 = first.truncated(lo1, hi1);
        let law2 = match second {
            SourceLaw::Arrival(l) => Some(l.truncated(lo2, hi2)),
            SourceLaw::Afterpulse => None,
        };
        let overlap = |d: f64| mode_overlap(d, self.indist);

        let n = GRID_CELLS;
        let h1 = (hi1 - lo1) / n as f64;
        let h2 = (hi2 - lo2) / n as f64;
        let boundaries2: Vec<f64> = (0..=n).map(|j| lo2 + j as f64 * h2).collect();
        // Weight of a sub-interval of round 2, without the factor that
        // depends on the first click.
        let tau = det.afterpulse_decay_ns;
        let partial_mass = |a: f64, b: f64| match &law2 {
            Some(l) => l.interval_mass(a, b) * (1.0 - det.afterpulse_mass(0.5 * (a + b), 0.5 * (a + b), hi2)),
            None => (-a / tau).exp() - (-b / tau).exp(),
        };
        let column: Vec<f64> = (0..n).map(|j| partial_mass(boundaries2[j], boundaries2[j + 1])).collect();
        // Afterpulse mass `p·e^{-(r + a - t1)/τ}` factorizes while the
        // second window starts after the first click.
        let afterpulse_scale = |t1: f64| det.afterpulse_prob * ((t1 - r) / tau).exp();
        let separable = law2.is_some() || r + lo2 >= hi1;

        // On a common grid the time difference of two cell centres depends
        // only on the index offset.
        let shared_grid = (h1 - h2).abs() <= 1e-12 * h1.max(h2);
        let offset_overlap: Vec<f64> = if shared_grid {
            (0..2 * n).map(|k| overlap(lo2 - lo1 + (k as f64 - n as f64) * h2)).collect()
        } else {
            Vec::new()
        };

        let (mut total, mut coherent) = (0.0, 0.0);
        for i in 0..n {
            let a1 = lo1 + i as f64 * h1;
            let t1 = a1 + 0.5 * h1;
            let m1 = law1.interval_mass(a1, a1 + h1);
            if m1 == 0.0 {
                continue;
            }
            let first_factor = match second {
                SourceLaw::Arrival(_) => {
                    1.0 - det.afterpulse_mass(t1, t1, hi1) - det.afterpulse_mass(t1, r + lo2, r + hi2)
                }
                SourceLaw::Afterpulse => afterpulse_scale(t1),
            };
            let lo = lo2.max(t1 - dtau);
            let hi = end2.min(t1 + dtau);
            if hi <= lo {
                continue;
            }
            let j_lo = (((lo - lo2) / h2).floor() as usize).min(n - 1);
            let j_hi = (((hi - lo2) / h2).ceil() as usize).min(n);
            let (mut row, mut row_v) = (0.0, 0.0);
            for j in j_lo..j_hi {
                let (a2, b2) = (boundaries2[j], boundaries2[j + 1]);
                let (a, b) = (a2.max(lo), b2.min(hi));
                if b <= a {
                    continue;
                }
                let interior = a == a2 && b == b2;
                let w = if !separable {
                    det.afterpulse_mass(t1, r + a, r + b) / afterpulse_scale(t1)
                } else if interior {
                    column[j]
                } else {
                    partial_mass(a, b)
                };
                if w == 0.0 {
                    continue;
                }
                let v = if interior && shared_grid { offset_overlap[j + n - i] } else { overlap(0.5 * (a + b) - t1) };
                row += w;
                row_v += w * v;
            }
            total += m1 * first_factor * row;
            coherent += m1 * first_factor * row_v;
        }
        (total, coherent)
    }
}

fn accumulate(config: &ExperimentConfig, filter: &DetectionWindows) -> Accumulated {
    let hw = &config.windows;
    let det = &config.detectors;
    let ctx = BranchContext { eta_a: config.emission_a.eta, eta_b: config.emission_b.eta };

    let round_sources = |round: u8| -> (f64, Vec<Source>, Vec<Source>) {
        let dark = det.dark_prob(hw.len_ns(round));
        let sa = config.emission_a.scatter_prob();
        let sb = config.emission_b.scatter_prob();
        let quiet = (1.0 - sa) * (1.0 - sb) * (1.0 - dark) * (1.0 - dark);
        let odds = |p: f64| if p < 1.0 { p / (1.0 - p) } else { f64::INFINITY };
        let background = vec![
            Source {
                provenance: Provenance::LaserScatter,
                law: SourceLaw::Arrival(config.emission_a.scatter_law()),
                odds: odds(sa),
            },
            Source {
                provenance: Provenance::LaserScatter,
                law: SourceLaw::Arrival(config.emission_b.scatter_law()),
                odds: odds(sb),
            },
            Source {
                provenance: Provenance::DarkCount,
                law: SourceLaw::Arrival(ArrivalLaw::Uniform),
                odds: 2.0 * odds(dark),
            },
        ];
        let nv = vec![
            Source {
                provenance: Provenance::NvA,
                law: SourceLaw::Arrival(config.emission_a.emission_law()),
                odds: 1.0,
            },
            Source {
                provenance: Provenance::NvB,
                law: SourceLaw::Arrival(config.emission_b.emission_law()),
                odds: 1.0,
            },
        ];
        (quiet, nv, background)
    };
    let (quiet1, nv1, bg1) = round_sources(1);
    let (quiet2, nv2, mut bg2) = round_sources(2);
    if det.afterpulse_prob > 0.0 {
        bg2.push(Source { provenance: Provenance::Afterpulse, law: SourceLaw::Afterpulse, odds: 1.0 });
    }

    let mut integrator = TimeIntegrator {
        hw,
        filter,
        detectors: det,
        indist: &config.indist,
        round_delay_ns: config.round_delay_ns,
        cache: Vec::new(),
    };

    let mut acc = Accumulated::default();
    for k1 in [ClickKind::Nv, ClickKind::Spurious] {
        for k2 in [ClickKind::Nv, ClickKind::Spurious] {
            for term in branch_terms(k1, k2, &ctx) {
                if term.weight == 0.0 {
                    continue;
                }
                let firsts: Vec<Source> = match term.first {
                    Some(p) => nv1.iter().filter(|s| s.provenance == p).copied().collect(),
                    None => bg1.clone(),
                };
                let seconds: Vec<Source> = match term.second {
                    Some(p) => nv2.iter().filter(|s| s.provenance == p).copied().collect(),
                    None => bg2.clone(),
                };
                for s1 in &firsts {
                    let SourceLaw::Arrival(law1) = s1.law else { continue };
                    for s2 in &seconds {
                        let (t, tv) = integrator.integrate(law1, s2.law);
                        let mass = 0.25 * term.weight * quiet1 * quiet2 * s1.odds * s2.odds * t;
                        if !(mass > 0.0) {
                            continue;
                        }
                        let signs: &[(BellSign, f64)] = if s2.provenance == Provenance::Afterpulse {
                            &[(BellSign::Plus, 1.0)]
                        } else {
                            &[(BellSign::Minus, 0.5), (BellSign::Plus, 0.5)]
                        };
                        for &(sign, share) in signs {
                            let m = mass * share;
                            *acc.mass.entry((s1.provenance, s2.provenance, sign)).or_insert(0.0) += m;
                            let state = if k1 == ClickKind::Nv && k2 == ClickKind::Nv {
                                nv_pair_state(sign, tv / t, config.phi)
                            } else {
                                let mut pops = [0.0; 4];
                                pops[term.branch] = 1.0;
                                TwoQubitState::diagonal(pops).flip_both()
                            };
                            acc.states[sign_index(sign)].push((m, state));
                        }
                    }
                }
            }
        }
    }
    acc
}
