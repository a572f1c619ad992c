//! Deterministic discrete-event wide-area network.
//!
//! Time is an integer number of microseconds. Events are ordered by
//! `(time, sequence number)`, so equal-time events run in the order they were
//! scheduled and a run is a pure function of its configuration and seed.

mod attack;
mod latency;
mod replica;
mod sim;
mod trace;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub use attack::{ActiveAttack, AttackKind, AttackSchedule, Targeting};
pub use latency::{LatencyMatrix, AWS_REGIONS};
pub use replica::{Ctx, Replica, ReplicaStats, Reply, Wire};
pub use sim::{AttackEvent, ByteCounters, Endpoint, SimConfig, Simulation, TraceLevel};
pub use trace::{line_time, Trace};

/// Simulated time in microseconds.
pub type SimTime = u64;

pub const US_PER_MS: SimTime = 1_000;
pub const US_PER_S: SimTime = 1_000_000;

/// Fixed framing charged to every message on top of its payload.
pub const HEADER_BYTES: u64 = 64;

/// Independent seed for a named random stream.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

/// Partial synchrony: before `gst_us` deliveries may take up to
/// `pre_gst_extra_us` longer; from `gst_us` on, with `delta_us` set, no
/// delivery is scheduled further out than `delta_us`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynchronyModel {
    pub gst_us: SimTime,
    pub delta_us: Option<SimTime>,
    pub pre_gst_extra_us: SimTime,
}

/// Per-replica processing cost, paid for every message a replica receives
/// and every message it sends to another endpoint. One message is handled at
/// a time; an outgoing message leaves once its cost has been paid. With both
/// fields zero handling is instantaneous.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpuModel {
    pub per_message_us: f64,
    pub per_kb_us: f64,
}

impl CpuModel {
    pub fn is_free(&self) -> bool {
        self.per_message_us == 0.0 && self.per_kb_us == 0.0
    }

    pub fn cost(&self, bytes: u64) -> SimTime {
        (self.per_message_us + self.per_kb_us * bytes as f64 / 1024.0).round() as SimTime
    }
}
