//! Experiment sequencing: charge-resonance preparation, attempt trains,
//! heralded readout and wall-clock accounting.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{BasisSetting, ExperimentConfig, ReadoutErrorModel};
use crate::error::ConfigError;
use crate::photonics::g2::TaggedClick;
use crate::photonics::herald::{herald_classify, ClickEvent, Detector, Herald, Provenance};
use crate::photonics::heralded::{conditional_heralded_state, BranchContext};
use crate::photonics::overlap::mode_overlap;
use crate::photonics::timing::{ns_to_ps, ps_to_ns, ArrivalLaw, Truncated};
use crate::qstate::{BellSign, MeasurementBasis, Node, TwoQubitState};

/// Relative excitation rate of a node detuned by `offset` linewidths.
pub fn resonance_factor(offset_linewidths: f64) -> f64 {
    1.0 / (1.0 + offset_linewidths * offset_linewidths)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrState {
    pub charge_ok: [bool; 2],
    pub offset_linewidths: [f64; 2],
}

impl Default for CrState {
    /// Before the first repump: charge state unknown.
    fn default() -> Self {
        Self { charge_ok: [false; 2], offset_linewidths: [0.0; 2] }
    }
}

impl CrState {
    /// Charge restored and exactly on resonance.
    pub fn prepared() -> Self {
        Self { charge_ok: [true; 2], offset_linewidths: [0.0; 2] }
    }

    /// Within one linewidth of resonance.
    pub fn on_resonance(&self, node: Node) -> bool {
        self.offset_linewidths[node_index(node)].abs() <= 1.0
    }

    /// Detection efficiency scale of a node: zero when ionized.
    pub fn brightness(&self, node: Node) -> f64 {
        let i = node_index(node);
        if self.charge_ok[i] {
            resonance_factor(self.offset_linewidths[i])
        } else {
            0.0
        }
    }
}

fn node_index(node: Node) -> usize {
    match node {
        Node::A => 0,
        Node::B => 1,
    }
}

const NODES: [Node; 2] = [Node::A, Node::B];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrCheck {
    pub passed: bool,
    pub probe_counts: [u32; 2],
    pub state: CrState,
    /// Whether a repump preceded the probe.
    pub repumped: bool,
}

/// One preparation round: repump nodes whose charge is not known good
/// (drawing a fresh resonance offset), then probe both nodes.
pub fn cr_check<R: Rng + ?Sized>(state: &CrState, config: &ExperimentConfig, rng: &mut R) -> CrCheck {
    let mut next = *state;
    let mut repumped = false;
    for i in 0..2 {
        if !next.charge_ok[i] {
            next.charge_ok[i] = true;
            next.offset_linewidths[i] = if config.cr.resonance_jump_sigma > 0.0 {
                Normal::new(0.0, config.cr.resonance_jump_sigma).expect("validated sigma").sample(rng)
            } else {
                0.0
            };
            repumped = true;
        }
    }
    let mut probe_counts = [0u32; 2];
    let mut passed = true;
    for node in NODES {
        let mean = config.cr.probe_mean(node) * next.brightness(node);
        let counts = if mean > 0.0 { Poisson::new(mean).expect("positive mean").sample(rng) as u32 } else { 0 };
        probe_counts[node_index(node)] = counts;
        passed &= counts >= config.cr.threshold(node);
    }
    if !passed {
        // A failed preparation is repeated from the repump.
        next.charge_ok = [false; 2];
    }
    CrCheck { passed, probe_counts, state: next, repumped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    fn flipped(self) -> Self {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Samples the joint outcome, then flips each reported bit according to
/// its node's readout fidelities.
pub fn single_shot_readout<R: Rng + ?Sized>(
    state: &TwoQubitState,
    basis: (MeasurementBasis, MeasurementBasis),
    readout: (&ReadoutErrorModel, &ReadoutErrorModel),
    rng: &mut R,
) -> (Spin, Spin) {
    let p = state.measurement_probabilities(basis.0, basis.1).to_array();
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut outcome = 3;
    let mut acc = 0.0;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            outcome = k;
            break;
        }
    }
    let true_a = if outcome >> 1 == 0 { Spin::Up } else { Spin::Down };
    let true_b = if outcome & 1 == 0 { Spin::Up } else { Spin::Down };
    let mut report = |spin: Spin, model: &ReadoutErrorModel| {
        let correct = match spin {
            Spin::Up => model.f_up,
            Spin::Down => model.f_down,
        };
        if rng.random::<f64>() < correct {
            spin
        } else {
            spin.flipped()
        }
    };
    let a = report(true_a, readout.0);
    let b = report(true_b, readout.1);
    (a, b)
}

/// Deterministic smooth weighted round-robin over basis settings.
#[derive(Debug, Clone)]
pub struct BasisScheduler {
    settings: Vec<BasisSetting>,
    current: Vec<f64>,
}

impl BasisScheduler {
    pub fn new(settings: &[BasisSetting]) -> Self {
        Self { settings: settings.to_vec(), current: vec![0.0; settings.len()] }
    }

    pub fn next_setting(&mut self) -> (MeasurementBasis, MeasurementBasis) {
        let total: f64 = self.settings.iter().map(|s| s.weight).sum();
        let mut best = 0;
        for (i, s) in self.settings.iter().enumerate() {
            self.current[i] += s.weight;
            if self.current[i] > self.current[best] + 1e-12 {
                best = i;
            }
        }
        self.current[best] -= total;
        (self.settings[best].a, self.settings[best].b)
    }
}

/// Click sources of one attempt, fixed while the nodes' brightness is.
#[derive(Debug, Clone)]
struct AttemptModel {
    /// Firing probabilities in `SOURCES` order.
    probs: [f64; SOURCE_COUNT],
    /// `P(first firing source = i | at least one fires)`, cumulative.
    first_cdf: [f64; SOURCE_COUNT],
    p_click: f64,
    ctx: BranchContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Nv(Node),
    Scatter(Node, u8),
    Dark(Detector, u8),
}

const SOURCE_COUNT: usize = 10;
const SOURCES: [Source; SOURCE_COUNT] = [
    Source::Nv(Node::A),
    Source::Nv(Node::B),
    Source::Scatter(Node::A, 1),
    Source::Scatter(Node::B, 1),
    Source::Dark(Detector::D1, 1),
    Source::Dark(Detector::D2, 1),
    Source::Scatter(Node::A, 2),
    Source::Scatter(Node::B, 2),
    Source::Dark(Detector::D1, 2),
    Source::Dark(Detector::D2, 2),
];

impl AttemptModel {
    fn new(config: &ExperimentConfig, brightness: [f64; 2]) -> Self {
        let eta = [config.emission_a.eta * brightness[0], config.emission_b.eta * brightness[1]];
        let mut probs = [0.0; SOURCE_COUNT];
        for (p, src) in probs.iter_mut().zip(SOURCES) {
            *p = match src {
                Source::Nv(n) => eta[node_index(n)],
                Source::Scatter(n, _) => config.emission(n).scatter_prob(),
                Source::Dark(_, round) => config.detectors.dark_prob(config.windows.len_ns(round)),
            };
        }
        let mut first_cdf = [0.0; SOURCE_COUNT];
        let mut none_before = 1.0;
        let mut acc = 0.0;
        for (c, p) in first_cdf.iter_mut().zip(probs) {
            acc += none_before * p;
            *c = acc;
            none_before *= 1.0 - p;
        }
        let p_click = 1.0 - none_before;
        if p_click > 0.0 {
            for c in &mut first_cdf {
                *c /= p_click;
            }
        }
        Self { probs, first_cdf, p_click, ctx: BranchContext { eta_a: eta[0], eta_b: eta[1] } }
    }

    /// Which sources fire, given that at least one does.
    fn sample_fired<R: Rng + ?Sized>(&self, rng: &mut R) -> [bool; SOURCE_COUNT] {
        let u: f64 = rng.random();
        let first = self.first_cdf.iter().position(|&c| u < c).unwrap_or(SOURCE_COUNT - 1);
        let mut fired = [false; SOURCE_COUNT];
        fired[first] = true;
        for (f, &p) in fired.iter_mut().zip(&self.probs).skip(first + 1) {
            *f = rng.random::<f64>() < p;
        }
        fired
    }
}

/// Time laws restricted to the hardware windows, shared by all attempts.
#[derive(Debug, Clone)]
struct WindowLaws {
    emission: [[Truncated; 2]; 2],
    scatter: [[Truncated; 2]; 2],
    uniform: [Truncated; 2],
}

impl WindowLaws {
    fn new(config: &ExperimentConfig) -> Self {
        let w = &config.windows;
        let per_round = |law: ArrivalLaw| {
            [1u8, 2].map(|r| {
                let (lo, hi) = w.bounds_ns(r);
                law.truncated(lo, hi)
            })
        };
        Self {
            emission: NODES.map(|n| per_round(config.emission(n).emission_law())),
            scatter: NODES.map(|n| per_round(config.emission(n).scatter_law())),
            uniform: per_round(ArrivalLaw::Uniform),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttemptOutcome {
    pub clicks: Vec<ClickEvent>,
    pub herald: Option<Herald>,
    /// Heralded state including the spin error budget.
    pub heralded_state: Option<TwoQubitState>,
}

fn random_detector<R: Rng + ?Sized>(rng: &mut R) -> Detector {
    if rng.random::<bool>() {
        Detector::D1
    } else {
        Detector::D2
    }
}

fn other(d: Detector) -> Detector {
    match d {
        Detector::D1 => Detector::D2,
        Detector::D2 => Detector::D1,
    }
}

/// Builds the click record of an attempt in which at least one source fired.
fn realize_clicks<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    laws: &WindowLaws,
    fired: &[bool; SOURCE_COUNT],
    rng: &mut R,
) -> Vec<ClickEvent> {
    // Spin branch before the first pulse: a node emits in round 1 if up,
    // otherwise in round 2 after the mid-sequence flip.
    let branch: u8 = rng.random_range(0..4);
    let round_of = |node: Node| -> u8 {
        let up = match node {
            Node::A => branch >> 1 == 0,
            Node::B => branch & 1 == 0,
        };
        if up {
            1
        } else {
            2
        }
    };
    let mut primary: Vec<(u8, f64, Detector, Provenance)> = Vec::with_capacity(4);
    let mut photons: Vec<(u8, f64, Provenance)> = Vec::with_capacity(2);
    for (src, _) in SOURCES.iter().zip(fired).filter(|(_, f)| **f) {
        match *src {
            Source::Nv(node) => {
                let round = round_of(node);
                let t = laws.emission[node_index(node)][round as usize - 1].sample(rng);
                let prov = if node == Node::A { Provenance::NvA } else { Provenance::NvB };
                photons.push((round, t, prov));
            }
            Source::Scatter(node, round) => {
                let t = laws.scatter[node_index(node)][round as usize - 1].sample(rng);
                primary.push((round, t, random_detector(rng), Provenance::LaserScatter));
            }
            Source::Dark(det, round) => {
                let t = laws.uniform[round as usize - 1].sample(rng);
                primary.push((round, t, det, Provenance::DarkCount));
            }
        }
    }
    match photons.as_slice() {
        [(r1, t1, p1), (r2, t2, p2)] if r1 == r2 => {
            // Two-photon interference at the beam splitter.
            let v = mode_overlap(t2 - t1, &config.indist);
            let d1 = random_detector(rng);
            let split = rng.random::<f64>() < 0.5 * (1.0 - v);
            let d2 = if split { other(d1) } else { d1 };
            primary.push((*r1, *t1, d1, *p1));
            primary.push((*r2, *t2, d2, *p2));
        }
        _ => {
            for &(r, t, p) in &photons {
                primary.push((r, t, random_detector(rng), p));
            }
        }
    }

    let det = &config.detectors;
    let mut clicks: Vec<ClickEvent> = Vec::with_capacity(primary.len() + 1);
    let push = |clicks: &mut Vec<ClickEvent>, round: u8, t: f64, detector: Detector, provenance: Provenance| {
        clicks.push(ClickEvent { detector, round, time_ps: ns_to_ps(t), provenance });
    };
    for &(round, t, detector, provenance) in &primary {
        push(&mut clicks, round, t, detector, provenance);
    }
    if det.afterpulse_prob > 0.0 {
        let w = &config.windows;
        let decay = rand_distr::Exp::new(1.0 / det.afterpulse_decay_ns).expect("validated decay");
        for &(round, t, detector, _) in &primary {
            if rng.random::<f64>() >= det.afterpulse_prob {
                continue;
            }
            let at = t + decay.sample(rng);
            let (lo, hi) = w.bounds_ns(round);
            if at <= hi {
                if at >= lo {
                    push(&mut clicks, round, at, detector, Provenance::Afterpulse);
                }
            } else if round == 1 {
                let shifted = at - config.round_delay_ns;
                let (lo2, hi2) = w.bounds_ns(2);
                if (lo2..=hi2).contains(&shifted) {
                    push(&mut clicks, 2, shifted, detector, Provenance::Afterpulse);
                }
            }
        }
    }
    clicks.sort_by_key(|c| (c.round, c.time_ps, c.detector));
    clicks
}

fn finish_attempt(config: &ExperimentConfig, ctx: &BranchContext, clicks: Vec<ClickEvent>) -> AttemptOutcome {
    let herald = herald_classify(&clicks, &config.windows);
    let heralded_state = herald.map(|h| {
        let raw = conditional_heralded_state(
            h.first.provenance,
            h.second.provenance,
            ctx,
            h.dtau_ns(),
            config.phi,
            h.sign,
            &config.indist,
        )
        .expect("sampled click patterns are physically consistent");
        config.errors.apply(&raw)
    });
    AttemptOutcome { clicks, herald, heralded_state }
}

/// Simulates a single attempt from scratch. The experiment loop uses the
/// same sampler but skips click-free attempts in bulk.
pub fn run_attempt<R: Rng + ?Sized>(config: &ExperimentConfig, cr: &CrState, rng: &mut R) -> AttemptOutcome {
    let model = AttemptModel::new(config, NODES.map(|n| cr.brightness(n)));
    if !(rng.random::<f64>() < model.p_click) {
        return AttemptOutcome { clicks: Vec::new(), herald: None, heralded_state: None };
    }
    let laws = WindowLaws::new(config);
    let fired = model.sample_fired(rng);
    let clicks = realize_clicks(config, &laws, &fired, rng);
    finish_attempt(config, &model.ctx, clicks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldRecord {
    pub attempt_index: u64,
    pub wall_time_s: f64,
    pub sign: BellSign,
    pub click1: ClickEvent,
    pub click2: ClickEvent,
    pub dtau_ns: f64,
    pub basis: (MeasurementBasis, MeasurementBasis),
    pub readout: (Spin, Spin),
    /// Fidelity of the actual post-herald state; simulator ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_state_fidelity: Option<f64>,
}

impl HeraldRecord {
    pub fn herald(&self) -> Herald {
        Herald {
            sign: self.sign,
            dtau_ps: self.click2.time_ps - self.click1.time_ps,
            first: self.click1,
            second: self.click2,
        }
    }

    /// Joint outcome index in `↑↑, ↑↓, ↓↑, ↓↓` order.
    pub fn outcome_index(&self) -> usize {
        2 * self.readout.0.index() + self.readout.1.index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub attempts: u64,
    pub cr_cycles: u64,
    pub false_starts: u64,
    pub heralds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub config: ExperimentConfig,
    pub records: Vec<HeraldRecord>,
    pub counters: RunCounters,
    pub wall_time_s: f64,
    /// Every click of the run, tagged with its attempt; recorded on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clicks: Option<Vec<TaggedClick>>,
}

impl EventLog {
    pub fn heralds_per_hour(&self) -> f64 {
        if self.wall_time_s > 0.0 {
            self.records.len() as f64 / (self.wall_time_s / 3600.0)
        } else {
            0.0
        }
    }

    /// Drops simulator ground truth, leaving only what a lab would record.
    pub fn without_oracle(mut self) -> Self {
        for r in &mut self.records {
            r.true_state_fidelity = None;
            r.click1.provenance = Provenance::Hidden;
            r.click2.provenance = Provenance::Hidden;
        }
        for c in self.clicks.iter_mut().flatten() {
            c.click.provenance = Provenance::Hidden;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub record_clicks: bool,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<EventLog, ConfigError> {
    run_experiment_with(config, RunOptions::default())
}

/// Alternates preparation checks and attempt trains until the run budget
/// in `config.run` is spent.
pub fn run_experiment_with(config: &ExperimentConfig, options: RunOptions) -> Result<EventLog, ConfigError> {
    config.validate()?;
    let budget = config.run;
    if budget.max_attempts.is_none() && budget.max_hours.is_none() {
        return Err(ConfigError::invalid("run", "set max_attempts or max_hours"));
    }
    let max_attempts = budget.max_attempts.unwrap_or(u64::MAX);
    let max_seconds = budget.max_hours.map_or(f64::INFINITY, |h| h * 3600.0);
    let period = config.attempt_period_s();
    let probe_s = config.cr.probe_duration_us * 1e-6;
    let repump_s = config.cr.repump_duration_us * 1e-6;
    let readout_s = config.readout_dead_time_us * 1e-6;

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let laws = WindowLaws::new(config);
    let mut scheduler = BasisScheduler::new(&config.basis_schedule);
    let ionization = (config.ionization_prob_per_attempt > 0.0)
        .then(|| Geometric::new(config.ionization_prob_per_attempt).expect("validated probability"));

    let mut counters = RunCounters::default();
    let mut records = Vec::new();
    let mut clicks_out = options.record_clicks.then(Vec::new);
    let mut clock = 0.0f64;
    let mut cr = CrState::default();

    while counters.attempts < max_attempts && clock < max_seconds {
        let check = cr_check(&cr, config, &mut rng);
        counters.cr_cycles += 1;
        clock += probe_s + if check.repumped { repump_s } else { 0.0 };
        cr = check.state;
        if !check.passed {
            counters.false_starts += 1;
            continue;
        }

        let train_len = (config.attempts_per_cr as u64).min(max_attempts - counters.attempts);
        // Attempt index within the train at which each node goes dark.
        let dark_from = NODES.map(|_| match &ionization {
            Some(g) => g.sample(&mut rng).saturating_add(1),
            None => u64::MAX,
        });
        let mut boundaries: Vec<u64> = dark_from.iter().copied().filter(|&d| d < train_len).collect();
        boundaries.push(train_len);
        boundaries.sort_unstable();

        let mut start = 0u64;
        let mut heralded_at = None;
        'segments: for &end in &boundaries {
            let mut brightness = NODES.map(|n| cr.brightness(n));
            for (b, &d) in brightness.iter_mut().zip(&dark_from) {
                if start >= d {
                    *b = 0.0;
                }
            }
            let model = AttemptModel::new(config, brightness);
            let skip = (model.p_click > 0.0).then(|| Geometric::new(model.p_click.min(1.0)).expect("probability"));
            let mut k = start;
            while let Some(g) = &skip {
                k = k.saturating_add(g.sample(&mut rng));
                if k >= end {
                    break;
                }
                let fired = model.sample_fired(&mut rng);
                let clicks = realize_clicks(config, &laws, &fired, &mut rng);
                let attempt_index = counters.attempts + k;
                if let Some(out) = clicks_out.as_mut() {
                    out.extend(clicks.iter().map(|&click| TaggedClick { attempt: attempt_index, click }));
                }
                let outcome = finish_attempt(config, &model.ctx, clicks);
                if let (Some(h), Some(state)) = (outcome.herald, outcome.heralded_state) {
                    let basis = scheduler.next_setting();
                    let readout = single_shot_readout(&state, basis, (&config.readout_a, &config.readout_b), &mut rng);
                    records.push(HeraldRecord {
                        attempt_index,
                        wall_time_s: clock + (k + 1) as f64 * period,
                        sign: h.sign,
                        click1: h.first,
                        click2: h.second,
                        dtau_ns: ps_to_ns(h.dtau_ps),
                        basis,
                        readout,
                        true_state_fidelity: Some(state.fidelity_to_bell(h.sign).expect("valid state")),
                    });
                    heralded_at = Some(k);
                    break 'segments;
                }
                k += 1;
            }
            start = end;
        }

        let used = heralded_at.map_or(train_len, |k| k + 1);
        counters.attempts += used;
        clock += used as f64 * period;
        if heralded_at.is_some() {
            counters.heralds += 1;
            clock += readout_s;
        }
        for (i, &d) in dark_from.iter().enumerate() {
            if d < used {
                cr.charge_ok[i] = false;
            }
        }
    }

    Ok(EventLog { config: config.clone(), records, counters, wall_time_s: clock, clicks: clicks_out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::{g2_histogram, G2Histogram, IndistinguishabilityModel};
    use crate::qstate::{BellSign, UD};
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn poisson_tail(mean: f64, k: u32) -> f64 {
        // P(N ≥ k) by summing the complementary pmf.
        let mut term = (-mean).exp();
        let mut below = 0.0;
        for j in 0..k {
            below += term;
            term *= mean / (j + 1) as f64;
        }
        1.0 - below
    }

    #[test]
    fn on_resonance_nodes_pass() {
        let mut cfg = ExperimentConfig::default();
        cfg.cr.probe_mean_counts_a = 3.0 * 45.0;
        cfg.cr.probe_mean_counts_b = 3.0 * 20.0;
        let oracle = poisson_tail(135.0, 45) * poisson_tail(60.0, 20);
        assert!(oracle > 0.999);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let passes = (0..2000).filter(|_| cr_check(&CrState::prepared(), &cfg, &mut rng).passed).count();
        assert!(passes >= 1995, "{passes}");
    }

    #[test]
    fn detuned_node_fails() {
        let cfg = ExperimentConfig::default();
        assert!(resonance_factor(5.0) <= 1.0 / 25.0);
        let state = CrState { charge_ok: [true; 2], offset_linewidths: [5.0, 0.0] };
        let oracle = poisson_tail(cfg.cr.probe_mean_counts_a * resonance_factor(5.0), 45);
        assert!(oracle < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..500).all(|_| !cr_check(&state, &cfg, &mut rng).passed));
        assert_eq!(cfg.cr.threshold(Node::A), 45);
        assert_eq!(cfg.cr.threshold(Node::B), 20);
    }

    #[test]
    fn failed_check_forces_repump() {
        let cfg = ExperimentConfig::default();
        let state = CrState { charge_ok: [true; 2], offset_linewidths: [5.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let check = cr_check(&state, &cfg, &mut rng);
        assert!(!check.passed && !check.repumped);
        assert_eq!(check.state.charge_ok, [false; 2]);
        let again = cr_check(&check.state, &cfg, &mut rng);
        assert!(again.repumped);
    }

    fn post_check_spread(threshold_scale: f64) -> f64 {
        let mut cfg = ExperimentConfig::default();
        cfg.cr.threshold_a = (45.0 * threshold_scale) as u32;
        cfg.cr.threshold_b = (20.0 * threshold_scale) as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut offsets = Vec::new();
        while offsets.len() < 4000 {
            let check = cr_check(&CrState::default(), &cfg, &mut rng);
            if check.passed {
                offsets.push(check.state.offset_linewidths[0]);
            }
        }
        (offsets.iter().map(|x| x * x).sum::<f64>() / offsets.len() as f64).sqrt()
    }

    #[test]
    fn higher_threshold_narrows_the_line() {
        let spreads: Vec<f64> = [0.2, 0.6, 1.0, 1.5].iter().map(|&s| post_check_spread(s)).collect();
        for w in spreads.windows(2) {
            assert!(w[1] <= w[0] + 0.02, "{spreads:?}");
        }
        assert!(spreads[3] < spreads[0] - 0.1);
    }

    #[test]
    fn readout_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ud = TwoQubitState::basis_state(UD);
        let zz = (MeasurementBasis::Z, MeasurementBasis::Z);
        let perfect = ReadoutErrorModel::PERFECT;
        for _ in 0..200 {
            assert_eq!(single_shot_readout(&ud, zz, (&perfect, &perfect), &mut rng), (Spin::Up, Spin::Down));
        }
        let model = ReadoutErrorModel { f_up: 0.95, f_down: 0.99 };
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| single_shot_readout(&ud, zz, (&model, &model), &mut rng) == (Spin::Up, Spin::Down))
            .count();
        let p = hits as f64 / n as f64;
        let sigma = (0.9405 * 0.0595 / n as f64).sqrt();
        assert!((p - 0.9405).abs() < 4.0 * sigma, "{p}");

        let coin = ReadoutErrorModel { f_up: 0.5, f_down: 0.5 };
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            let (a, b) = single_shot_readout(&ud, zz, (&coin, &coin), &mut rng);
            counts[2 * a.index() + b.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 1.0).abs() < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn scheduler_follows_weights() {
        let mut s = BasisScheduler::new(&crate::config::default_schedule());
        let picks: Vec<_> = (0..9).map(|_| s.next_setting()).collect();
        for setting in crate::config::default_schedule() {
            assert_eq!(picks.iter().filter(|p| **p == (setting.a, setting.b)).count(), 3);
        }
    }

    #[test]
    fn ideal_attempts_herald_half_the_time() {
        let cfg = ExperimentConfig::ideal();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4000;
        let mut heralds = 0;
        for _ in 0..n {
            let out = run_attempt(&cfg, &CrState::prepared(), &mut rng);
            if let (Some(h), Some(state)) = (out.herald, out.heralded_state) {
                heralds += 1;
                assert!((state.fidelity_to_bell(h.sign).unwrap() - 1.0).abs() < 1e-12);
            }
        }
        let p = heralds as f64 / n as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn ionized_nodes_stay_dark() {
        let cfg = ExperimentConfig::default().with_eta(0.5);
        let ionized = CrState { charge_ok: [false, false], offset_linewidths: [0.0; 2] };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let out = run_attempt(&cfg, &ionized, &mut rng);
            assert!(out.clicks.iter().all(|c| !c.provenance.is_nv()));
        }
    }

    #[test]
    fn ideal_run_heralds_about_half_the_attempts() {
        let mut cfg = ExperimentConfig::ideal();
        cfg.run.max_attempts = Some(100);
        let log = run_experiment(&cfg).unwrap();
        assert_eq!(log.counters.attempts, 100);
        assert_eq!(log.counters.heralds as usize, log.records.len());
        let n = log.records.len();
        assert!((30..=70).contains(&n), "{n}");
        assert!(log.records.iter().all(|r| r.true_state_fidelity.unwrap() > 1.0 - 1e-12));
        assert!(log.records.windows(2).all(|w| w[0].attempt_index < w[1].attempt_index));
    }

    #[test]
    fn run_requires_a_budget() {
        assert!(run_experiment(&ExperimentConfig::ideal()).is_err());
    }

    #[test]
    fn same_seed_same_log() {
        let mut cfg = ExperimentConfig::default().with_eta(0.02);
        cfg.run.max_attempts = Some(200_000);
        let a = run_experiment_with(&cfg, RunOptions { record_clicks: true }).unwrap();
        let b = run_experiment_with(&cfg, RunOptions { record_clicks: true }).unwrap();
        assert_eq!(a, b);
        assert!(!a.records.is_empty());
        cfg.seed += 1;
        assert_ne!(run_experiment(&cfg).unwrap().records, a.records);
    }

    #[test]
    fn zz_parity_is_odd_dominated() {
        let mut cfg = ExperimentConfig::default().with_eta(0.05);
        cfg.basis_schedule = vec![BasisSetting { a: MeasurementBasis::Z, b: MeasurementBasis::Z, weight: 1.0 }];
        cfg.run.max_attempts = Some(300_000);
        let log = run_experiment(&cfg).unwrap();
        let odd = log.records.iter().filter(|r| r.readout.0 != r.readout.1).count();
        assert!(odd as f64 > 0.7 * log.records.len() as f64, "{odd}/{}", log.records.len());
    }

    #[test]
    fn indistinguishable_nv_photons_never_coincide() {
        let mut cfg = ExperimentConfig::default().with_eta(0.1);
        cfg.indist = IndistinguishabilityModel::constant(1.0);
        cfg.run.max_attempts = Some(1_000_000);
        let log = run_experiment_with(&cfg, RunOptions { record_clicks: true }).unwrap();
        let clicks = log.clicks.unwrap();
        let nv = G2Histogram::from_filtered(&clicks, 0.64, cfg.round_delay_ns, |c| c.click.provenance.is_nv());
        assert_eq!(nv.peak_area(0, 300.0), 0);
        assert!(nv.peak_area(2, 300.0) > 100);
        let all = g2_histogram(&clicks, 0.64, cfg.round_delay_ns);
        assert!(all.peak_area(0, 300.0) > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn records_are_consistent(seed in any::<u64>()) {
            let mut cfg = ExperimentConfig::default().with_eta(0.05);
            cfg.seed = seed;
            cfg.run.max_attempts = Some(20_000);
            let log = run_experiment(&cfg).unwrap();
            prop_assert_eq!(log.counters.heralds as usize, log.records.len());
            for r in &log.records {
                prop_assert_eq!(r.sign == BellSign::Plus, r.click1.detector == r.click2.detector);
                prop_assert!(r.dtau_ns.abs() <= cfg.windows.dtau_max_ns);
                prop_assert!(r.attempt_index < log.counters.attempts);
            }
        }
    }
}
