use serde::{Deserialize, Serialize};

use super::SimTime;
use crate::protocol::ReplicaId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AttackKind {
    /// Adds `magnitude_us` to every egress message of the victim. With
    /// `ramp`, the delay grows linearly over each burst instead.
    Delay {
        magnitude_us: SimTime,
        #[serde(default)]
        ramp: bool,
    },
    /// Drops each egress transmission of the victim with this probability.
    Loss { fraction: f64 },
    /// Crashes the victim at the start of the attack.
    Crash,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Targeting {
    FollowLeader,
    Fixed(ReplicaId),
    RandomRotating,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSchedule {
    pub kind: AttackKind,
    pub targeting: Targeting,
    pub start_us: SimTime,
    pub stop_us: SimTime,
    /// Burst length for duty-cycled attacks; `None` means one burst from
    /// start to stop.
    pub burst_us: Option<SimTime>,
    pub cooldown_us: SimTime,
}

impl AttackSchedule {
    /// End of a burst that starts at `t`.
    pub fn burst_end(&self, t: SimTime) -> SimTime {
        match self.burst_us {
            Some(b) => (t + b).min(self.stop_us),
            None => self.stop_us,
        }
    }

    /// Start of the burst following one that ended at `t`, if any.
    pub fn next_burst(&self, t: SimTime) -> Option<SimTime> {
        let next = t + self.cooldown_us;
        (self.burst_us.is_some() && next < self.stop_us).then_some(next)
    }

    /// Delay added at time `t` inside a burst that started at `burst_start`.
    pub fn delay_at(&self, t: SimTime, burst_start: SimTime) -> SimTime {
        match self.kind {
            AttackKind::Delay {
                magnitude_us,
                ramp: false,
            } => magnitude_us,
            AttackKind::Delay {
                magnitude_us,
                ramp: true,
            } => {
                let len = self
                    .burst_end(burst_start)
                    .saturating_sub(burst_start)
                    .max(1);
                let into = t.saturating_sub(burst_start).min(len);
                (magnitude_us as u128 * into as u128 / len as u128) as SimTime
            }
            _ => 0,
        }
    }
}

/// Live state of one attack during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveAttack {
    pub victim: Option<ReplicaId>,
    pub burst_start: SimTime,
    pub active: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delay(burst: Option<SimTime>) -> AttackSchedule {
        AttackSchedule {
            kind: AttackKind::Delay {
                magnitude_us: 4_000_000,
                ramp: false,
            },
            targeting: Targeting::FollowLeader,
            start_us: 10_000_000,
            stop_us: 40_000_000,
            burst_us: burst,
            cooldown_us: 1_000_000,
        }
    }

    #[test]
    fn duty_cycle_boundaries() {
        let a = delay(Some(4_000_000));
        assert_eq!(a.burst_end(10_000_000), 14_000_000);
        assert_eq!(a.next_burst(14_000_000), Some(15_000_000));
        assert_eq!(a.burst_end(35_000_000), 39_000_000);
        assert_eq!(a.next_burst(39_000_000), None);
        let b = delay(None);
        assert_eq!(b.burst_end(10_000_000), 40_000_000);
        assert_eq!(b.next_burst(40_000_000), None);
    }

    #[test]
    fn ramp_grows_linearly() {
        let mut a = delay(Some(4_000_000));
        a.kind = AttackKind::Delay {
            magnitude_us: 4_000_000,
            ramp: true,
        };
        assert_eq!(a.delay_at(10_000_000, 10_000_000), 0);
        assert_eq!(a.delay_at(12_000_000, 10_000_000), 2_000_000);
        assert_eq!(a.delay_at(14_000_000, 10_000_000), 4_000_000);
    }
}
