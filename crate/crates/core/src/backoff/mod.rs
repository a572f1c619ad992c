//! Random exponential backoff.
//!
//! After `l` failed attempts a Baxos proposer waits `k * 2^l * 2 * RTT` with
//! `k` uniform in the open interval (0, 1) and RTT the current network
//! diameter estimate. The two networking-style schemes draw an integer number
//! of `2 * RTT` slots from `{0, .., 2^l - 1}` instead; plain binary backoff
//! resets the retry counter on success, which produces the capture effect.

mod rtt;
mod termination;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use rtt::RttEstimate;
pub use termination::{monte_carlo_single_winner, termination_probability};

use crate::error::{Error, Result};

/// Exponents above this are clamped so that window arithmetic stays finite.
const MAX_EXPONENT: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Baxos,
    Binary,
    ModifiedBinary,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baxos => "baxos",
            Scheme::Binary => "binary",
            Scheme::ModifiedBinary => "modified-binary",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baxos" => Ok(Scheme::Baxos),
            "binary" => Ok(Scheme::Binary),
            "modified-binary" => Ok(Scheme::ModifiedBinary),
            other => Err(Error::Parse {
                what: "backoff scheme".into(),
                message: format!("unknown scheme `{other}`"),
            }),
        }
    }
}

/// Baxos backoff for a given `k` in (0, 1): `k * 2^l * 2 * rtt`.
pub fn baxos_backoff(retries: u32, rtt: Duration, k: f64) -> Result<Duration> {
    if rtt.is_zero() {
        return Err(Error::Domain("backoff needs a positive RTT".into()));
    }
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Domain(format!("k must lie in (0, 1), got {k}")));
    }
    let window = 2f64.powi(retries.min(MAX_EXPONENT) as i32) * 2.0 * rtt.as_secs_f64();
    Ok(Duration::from_secs_f64(k * window))
}

/// Slotted backoff: `slots * 2 * rtt`.
pub fn slotted_backoff(slots: u64, rtt: Duration) -> Result<Duration> {
    if rtt.is_zero() {
        return Err(Error::Domain("backoff needs a positive RTT".into()));
    }
    Ok(rtt
        .saturating_mul(2)
        .saturating_mul(slots.min(u32::MAX as u64) as u32))
}

/// Retry counter plus a private random stream.
#[derive(Clone, Debug)]
pub struct BackoffState {
    retries: u32,
    scheme: Scheme,
    rng: ChaCha8Rng,
}

impl BackoffState {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        BackoffState {
            retries: 0,
            scheme,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn on_retry(&mut self) {
        self.retries = self.retries.saturating_add(1);
    }

    pub fn on_success(&mut self) {
        self.retries = match self.scheme {
            Scheme::Binary => 0,
            Scheme::Baxos | Scheme::ModifiedBinary => self.retries.saturating_sub(1),
        };
    }

    /// Draws the next backoff for the current retry count.
    pub fn draw(&mut self, rtt: Duration) -> Result<Duration> {
        if rtt.is_zero() {
            return Err(Error::Domain("backoff needs a positive RTT".into()));
        }
        match self.scheme {
            Scheme::Baxos => {
                let k = loop {
                    let k: f64 = self.rng.random();
                    if k > 0.0 {
                        break k;
                    }
                };
                baxos_backoff(self.retries, rtt, k)
            }
            Scheme::Binary | Scheme::ModifiedBinary => {
                let slots = 1u64 << self.retries.min(MAX_EXPONENT);
                let k = self.rng.random_range(0..slots);
                slotted_backoff(k, rtt)
            }
        }
    }

    /// Upper bound (exclusive for Baxos) of the next draw.
    pub fn window(&self, rtt: Duration) -> Duration {
        let exp = self.retries.min(MAX_EXPONENT);
        match self.scheme {
            Scheme::Baxos => {
                Duration::from_secs_f64(2f64.powi(exp as i32) * 2.0 * rtt.as_secs_f64())
            }
            Scheme::Binary | Scheme::ModifiedBinary => rtt
                .saturating_mul(2)
                .saturating_mul(((1u64 << exp) - 1) as u32),
        }
    }
}
