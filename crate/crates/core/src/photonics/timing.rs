//! Arrival-time laws for photons and background clicks, measured in
//! nanoseconds from the start of the excitation pulse.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

/// Optical emission of one node.
///
/// `eta` is the probability that a resonant photon emitted by a bright node
/// is detected inside the hardware detection window of a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmissionModel {
    pub lifetime_ns: f64,
    pub pulse_len_ns: f64,
    pub eta: f64,
    /// In-window laser-scatter detection probability per pulse, relative to `eta`.
    pub laser_scatter_fraction: f64,
    /// Decay constant of the falling edge of the excitation pulse.
    pub laser_tail_ns: f64,
}

impl Default for EmissionModel {
    fn default() -> Self {
        Self { lifetime_ns: 12.0, pulse_len_ns: 2.0, eta: 4e-4, laser_scatter_fraction: 0.005, laser_tail_ns: 0.5 }
    }
}

impl EmissionModel {
    pub fn emission_law(&self) -> ArrivalLaw {
        ArrivalLaw::PulsedDecay { pulse_len_ns: self.pulse_len_ns, decay_ns: self.lifetime_ns }
    }

    pub fn scatter_law(&self) -> ArrivalLaw {
        ArrivalLaw::PulsedDecay { pulse_len_ns: self.pulse_len_ns, decay_ns: self.laser_tail_ns }
    }

    /// In-window probability of a scattered laser photon per pulse.
    pub fn scatter_prob(&self) -> f64 {
        (self.laser_scatter_fraction * self.eta).min(1.0)
    }
}

/// Dark counts and afterpulsing, shared by both detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub dark_count_rate_hz: f64,
    pub afterpulse_prob: f64,
    pub afterpulse_decay_ns: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { dark_count_rate_hz: 25.0, afterpulse_prob: 3e-3, afterpulse_decay_ns: 1000.0 }
    }
}

impl DetectorModel {
    /// Probability of at least one dark count in a window of `len_ns`.
    pub fn dark_prob(&self, len_ns: f64) -> f64 {
        -(-self.dark_count_rate_hz * len_ns * 1e-9).exp_m1()
    }

    /// Probability that an afterpulse of a click at `t_ns` lands in `[lo_ns, hi_ns]`.
    pub fn afterpulse_mass(&self, t_ns: f64, lo_ns: f64, hi_ns: f64) -> f64 {
        if self.afterpulse_prob == 0.0 || hi_ns <= t_ns {
            return 0.0;
        }
        let lo = (lo_ns - t_ns).max(0.0);
        let hi = hi_ns - t_ns;
        let tau = self.afterpulse_decay_ns;
        self.afterpulse_prob * ((-lo / tau).exp() - (-hi / tau).exp())
    }
}

/// Excitation instant uniform over `[0, pulse_len]`, followed by an
/// exponential delay with mean `decay`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalLaw {
    PulsedDecay { pulse_len_ns: f64, decay_ns: f64 },
    Uniform,
}

impl ArrivalLaw {
    /// Unconditional CDF. `Uniform` is only meaningful after truncation.
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            ArrivalLaw::Uniform => t,
            ArrivalLaw::PulsedDecay { pulse_len_ns: a, decay_ns: tau } => {
                if t <= 0.0 {
                    0.0
                } else if tau <= 0.0 {
                    if a <= 0.0 {
                        1.0
                    } else {
                        (t / a).min(1.0)
                    }
                } else if a <= 0.0 {
                    -(-t / tau).exp_m1()
                } else if t < a {
                    (t + tau * (-t / tau).exp_m1()) / a
                } else {
                    1.0 - tau * ((-(t - a) / tau).exp() - (-t / tau).exp()) / a
                }
            }
        }
    }

    pub fn truncated(self, lo: f64, hi: f64) -> Truncated {
        let (f_lo, f_hi) = (self.cdf(lo), self.cdf(hi));
        Truncated { law: self, lo, hi, f_lo, mass: f_hi - f_lo }
    }
}

/// A law conditioned on lying in `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct Truncated {
    law: ArrivalLaw,
    lo: f64,
    hi: f64,
    f_lo: f64,
    mass: f64,
}

impl Truncated {
    /// Unconditional probability of the window.
    pub fn window_mass(&self) -> f64 {
        self.mass
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Conditional CDF on `[lo, hi]`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.lo {
            0.0
        } else if t >= self.hi {
            1.0
        } else {
            ((self.law.cdf(t) - self.f_lo) / self.mass).clamp(0.0, 1.0)
        }
    }

    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            0.0
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }

    /// Inverse-CDF sampling by bisection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let (mut a, mut b) = (self.lo, self.hi);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if self.cdf(mid) < u {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-7 {
                break;
            }
        }
        0.5 * (a + b)
    }
}

/// Unfiltered emission time of a resonant photon: uniform excitation within
/// the pulse plus an exponential decay with the excited-state lifetime.
pub fn sample_emission_time<R: Rng + ?Sized>(rng: &mut R, model: &EmissionModel) -> f64 {
    let excite = if model.pulse_len_ns > 0.0 { rng.random::<f64>() * model.pulse_len_ns } else { 0.0 };
    let decay = Exp::new(1.0 / model.lifetime_ns).map(|d| d.sample(rng)).unwrap_or(0.0);
    excite + decay
}

/// Nanoseconds to integer picoseconds.
pub fn ns_to_ps(t_ns: f64) -> i64 {
    (t_ns * 1000.0).round() as i64
}

pub fn ps_to_ns(t_ps: i64) -> f64 {
    t_ps as f64 / 1000.0
}
