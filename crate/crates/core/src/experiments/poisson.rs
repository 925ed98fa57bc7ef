//! Poisson input drives.
//!
//! Each channel owns an independent ChaCha stream, so a channel's spike
//! train does not depend on how many other channels there are or on how
//! far ahead the generator has been pulled.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::seeds::{channel_rng, Stream};
use crate::error::{Error, Result};
use crate::network::InputEvent;

/// Minimum gap between two spikes on one channel, ms. Candidates closer
/// than this to the previous spike are discarded.
pub const MIN_GAP_MS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateProfile {
    Homogeneous {
        rate_hz: f64,
    },
    /// Rate `max/2 * (1 - cos(2 pi f t + phase))`, oscillating between 0
    /// and `max_rate_hz`. Channel `c` of `C` gets phase `2 pi c / C`.
    Sinusoidal {
        max_rate_hz: f64,
        mod_freq_hz: f64,
    },
}

impl RateProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RateProfile::Homogeneous { rate_hz } => rate_hz >= 0.0 && rate_hz.is_finite(),
            RateProfile::Sinusoidal {
                max_rate_hz,
                mod_freq_hz,
            } => {
                max_rate_hz >= 0.0
                    && max_rate_hz.is_finite()
                    && mod_freq_hz >= 0.0
                    && mod_freq_hz.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "rates must be finite and non-negative: {self:?}"
            )))
        }
    }

    /// Upper bound of the instantaneous rate, Hz.
    pub fn peak_rate_hz(&self) -> f64 {
        match *self {
            RateProfile::Homogeneous { rate_hz } => rate_hz,
            RateProfile::Sinusoidal { max_rate_hz, .. } => max_rate_hz,
        }
    }

    /// Instantaneous rate in Hz at `t_ms` for a channel with the given phase.
    pub fn rate_hz(&self, t_ms: f64, phase: f64) -> f64 {
        match *self {
            RateProfile::Homogeneous { rate_hz } => rate_hz,
            RateProfile::Sinusoidal {
                max_rate_hz,
                mod_freq_hz,
            } => 0.5 * max_rate_hz * (1.0 - (TAU * mod_freq_hz * t_ms * 1e-3 + phase).cos()),
        }
    }

    /// Same profile with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            RateProfile::Homogeneous { rate_hz } => RateProfile::Homogeneous {
                rate_hz: rate_hz * factor,
            },
            RateProfile::Sinusoidal {
                max_rate_hz,
                mod_freq_hz,
            } => RateProfile::Sinusoidal {
                max_rate_hz: max_rate_hz * factor,
                mod_freq_hz,
            },
        }
    }
}

pub fn channel_phase(channel: usize, channels: usize) -> f64 {
    TAU * channel as f64 / channels.max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonSpec {
    pub profile: RateProfile,
    pub channels: usize,
    pub duration_s: f64,
    pub seed: u64,
}

/// One channel's spike source.
#[derive(Clone, Debug)]
struct ChannelSource {
    rng: ChaCha8Rng,
    phase: f64,
    /// Time of the next candidate event, ms.
    cursor: f64,
    last: f64,
    next: Option<f64>,
}

impl ChannelSource {
    fn new(seed: u64, channel: usize, channels: usize) -> Self {
        Self {
            rng: channel_rng(seed, Stream::Input, channel),
            phase: channel_phase(channel, channels),
            cursor: 0.0,
            last: f64::NEG_INFINITY,
            next: None,
        }
    }

    fn advance(&mut self, profile: &RateProfile) {
        let peak = profile.peak_rate_hz();
        if peak <= 0.0 {
            self.next = Some(f64::INFINITY);
            return;
        }
        let gaps = Exp::new(peak * 1e-3).expect("positive rate");
        loop {
            self.cursor += gaps.sample(&mut self.rng);
            let t = self.cursor;
            let keep = match profile {
                RateProfile::Homogeneous { .. } => true,
                RateProfile::Sinusoidal { .. } => {
                    self.rng.gen::<f64>() * peak < profile.rate_hz(t, self.phase)
                }
            };
            if keep && t - self.last >= MIN_GAP_MS {
                self.last = t;
                self.next = Some(t);
                return;
            }
        }
    }

    fn peek(&mut self, profile: &RateProfile) -> f64 {
        if self.next.is_none() {
            self.advance(profile);
        }
        self.next.unwrap_or(f64::INFINITY)
    }
}

/// Unbounded multi-channel Poisson source, pulled in time order.
#[derive(Clone, Debug)]
pub struct PoissonStream {
    profile: RateProfile,
    sources: Vec<ChannelSource>,
}

impl PoissonStream {
    pub fn new(profile: RateProfile, channels: usize, seed: u64) -> Self {
        Self {
            profile,
            sources: (0..channels)
                .map(|c| ChannelSource::new(seed, c, channels))
                .collect(),
        }
    }

    /// All events with time `<= until` not yet returned, sorted by time and
    /// then channel.
    pub fn take_until(&mut self, until: f64) -> Vec<InputEvent> {
        let mut out = Vec::new();
        for (c, src) in self.sources.iter_mut().enumerate() {
            while src.peek(&self.profile) <= until {
                out.push(InputEvent {
                    channel: c,
                    time: src.next.take().unwrap_or_default(),
                });
            }
        }
        out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.channel.cmp(&b.channel)));
        out
    }
}

/// Spike times (ms) per channel over the spec's duration.
pub fn gen_poisson(spec: &PoissonSpec) -> Vec<Vec<f64>> {
    let until = spec.duration_s * 1e3;
    let mut trains = vec![Vec::new(); spec.channels];
    let mut stream = PoissonStream::new(spec.profile, spec.channels, spec.seed);
    for ev in stream.take_until(until) {
        trains[ev.channel].push(ev.time);
    }
    trains
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_silent() {
        let spec = PoissonSpec {
            profile: RateProfile::Homogeneous { rate_hz: 0.0 },
            channels: 3,
            duration_s: 10.0,
            seed: 1,
        };
        assert!(gen_poisson(&spec).iter().all(Vec::is_empty));
    }

    #[test]
    fn streaming_matches_batch() {
        let profile = RateProfile::Sinusoidal {
            max_rate_hz: 10.0,
            mod_freq_hz: 2.0,
        };
        let batch = gen_poisson(&PoissonSpec {
            profile,
            channels: 4,
            duration_s: 5.0,
            seed: 9,
        });
        let mut stream = PoissonStream::new(profile, 4, 9);
        let mut pulled = vec![Vec::new(); 4];
        let mut t: f64 = 0.0;
        while t < 5000.0 {
            t += 37.3;
            for ev in stream.take_until(t.min(5000.0)) {
                pulled[ev.channel].push(ev.time);
            }
        }
        assert_eq!(batch, pulled);
    }

    #[test]
    fn min_gap_holds() {
        let spec = PoissonSpec {
            profile: RateProfile::Homogeneous { rate_hz: 500.0 },
            channels: 2,
            duration_s: 20.0,
            seed: 3,
        };
        for train in gen_poisson(&spec) {
            assert!(train.windows(2).all(|w| w[1] - w[0] >= MIN_GAP_MS));
        }
    }
}
