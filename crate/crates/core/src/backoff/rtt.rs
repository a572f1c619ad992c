use std::time::Duration;

use crate::error::{Error, Result};
use crate::protocol::ReplicaId;

/// Smoothing weight for new samples.
pub const EWMA_WEIGHT: f64 = 0.125;

/// Network-diameter estimate kept by one replica.
///
/// Every peer starts at the configured prior and is smoothed towards its
/// measured round-trip times; the estimate is the maximum over peers.
#[derive(Clone, Debug)]
pub struct RttEstimate {
    me: ReplicaId,
    peers: Vec<f64>,
    current: f64,
}

impl RttEstimate {
    pub fn new(me: ReplicaId, n: usize, prior: Duration) -> Result<Self> {
        if prior.is_zero() {
            return Err(Error::Domain("RTT prior must be positive".into()));
        }
        let ms = prior.as_secs_f64() * 1e3;
        Ok(RttEstimate {
            me,
            peers: vec![ms; n],
            current: ms,
        })
    }

    pub fn current(&self) -> Duration {
        Duration::from_secs_f64(self.current / 1e3)
    }

    pub fn peer(&self, peer: ReplicaId) -> Option<Duration> {
        self.peers
            .get(peer.index())
            .map(|ms| Duration::from_secs_f64(ms / 1e3))
    }

    pub fn observe(&mut self, peer: ReplicaId, sample: Duration) -> Result<()> {
        if sample.is_zero() {
            return Err(Error::Domain("RTT sample must be positive".into()));
        }
        if peer == self.me {
            return Ok(());
        }
        let slot = self
            .peers
            .get_mut(peer.index())
            .ok_or_else(|| Error::Domain(format!("unknown peer {peer}")))?;
        let ms = sample.as_secs_f64() * 1e3;
        *slot += EWMA_WEIGHT * (ms - *slot);
        let me = self.me.index();
        self.current = self
            .peers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != me)
            .map(|(_, v)| *v)
            .fold(f64::MIN_POSITIVE, f64::max);
        Ok(())
    }
}
