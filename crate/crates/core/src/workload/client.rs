use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multichoice::{Command, Kind, Payload, RequestId};
use crate::protocol::ReplicaId;
use crate::simnet::SimTime;

pub const YCSB_KEYS: u64 = 1000;
pub const ZIPF_EXPONENT: f64 = 0.99;
pub const YCSB_READ_RATIO: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// Writes of a fixed payload to uniformly random keys.
    #[default]
    Micro,
    /// Half reads, half updates over Zipf-distributed keys.
    YcsbA,
}

impl std::str::FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(WorkloadKind::Micro),
            "ycsb-a" => Ok(WorkloadKind::YcsbA),
            other => Err(Error::Parse {
                what: "workload".into(),
                message: format!("unknown workload `{other}`"),
            }),
        }
    }
}

/// One open-loop client attached to a home replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub id: u32,
    pub home: ReplicaId,
    pub rate_per_s: f64,
    pub workload: WorkloadKind,
    pub payload_bytes: u32,
    pub start_us: SimTime,
    pub stop_us: SimTime,
}

/// Poisson arrivals and request contents for one client.
#[derive(Clone, Debug)]
pub struct ClientGen {
    spec: ClientSpec,
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    zipf: Zipf<f64>,
    next_seq: u64,
}

impl ClientGen {
    pub fn new(spec: ClientSpec, seed: u64) -> Result<Self> {
        if !(spec.rate_per_s.is_finite() && spec.rate_per_s > 0.0) {
            return Err(Error::Domain(format!(
                "client {} needs a positive rate, got {}",
                spec.id, spec.rate_per_s
            )));
        }
        let gap = Exp::new(spec.rate_per_s).map_err(|e| Error::Domain(e.to_string()))?;
        let zipf =
            Zipf::new(YCSB_KEYS as f64, ZIPF_EXPONENT).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(ClientGen {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            gap,
            zipf,
            next_seq: 0,
        })
    }

    pub fn spec(&self) -> &ClientSpec {
        &self.spec
    }

    /// Time to the next arrival, at least one microsecond.
    pub fn next_gap(&mut self) -> SimTime {
        let s: f64 = self.gap.sample(&mut self.rng);
        ((s * 1e6).round() as SimTime).max(1)
    }

    /// Builds the next request; sequence numbers start at zero.
    pub fn next_command(&mut self, ingress: ReplicaId) -> Command {
        let seq = self.next_seq;
        self.next_seq += 1;
        let (kind, key) = match self.spec.workload {
            WorkloadKind::Micro => (Kind::Write, self.rng.random_range(0..YCSB_KEYS)),
            WorkloadKind::YcsbA => {
                let key = self.zipf.sample(&mut self.rng) as u64 - 1;
                let kind = if self.rng.random::<f64>() < YCSB_READ_RATIO {
                    Kind::Read
                } else {
                    Kind::Write
                };
                (kind, key)
            }
        };
        let len = match kind {
            Kind::Write => self.spec.payload_bytes,
            Kind::Read => 0,
        };
        Command {
            id: RequestId::new(self.spec.id, seq),
            kind,
            key,
            payload: Payload {
                len,
                token: self.rng.random(),
            },
            ingress,
        }
    }

    pub fn issued(&self) -> u64 {
        self.next_seq
    }

    /// Picks where a new request goes: the home replica when it is up,
    /// otherwise a uniformly random live replica.
    pub fn route(&mut self, alive: &[bool]) -> Option<ReplicaId> {
        if alive.get(self.spec.home.index()).copied().unwrap_or(false) {
            return Some(self.spec.home);
        }
        let live: Vec<usize> = (0..alive.len()).filter(|i| alive[*i]).collect();
        if live.is_empty() {
            return None;
        }
        Some(ReplicaId::from(live[self.rng.random_range(0..live.len())]))
    }
}
