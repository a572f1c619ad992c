//! Scenario documents: TOML in, a validated [`Scenario`] out.

mod presets;
mod raw;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub use presets::{preset, PRESETS};

use crate::backoff::Scheme;
use crate::error::{Error, FieldError, Result};
use crate::multichoice::BaxosOptions;
use crate::multipaxos::{MpOptions, ViewTimeoutPolicy};
use crate::protocol::{ClusterConfig, ReplicaId};
use crate::simnet::{AttackKind, LatencyMatrix, SimConfig, SimTime, Targeting, US_PER_S};
use crate::workload::ClientSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Baxos,
    Multipaxos,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Baxos => "baxos",
            Protocol::Multipaxos => "multipaxos",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baxos" => Ok(Protocol::Baxos),
            "multipaxos" | "multi-paxos" => Ok(Protocol::Multipaxos),
            other => Err(Error::Parse {
                what: "protocol".into(),
                message: format!("expected `baxos` or `multipaxos`, got `{other}`"),
            }),
        }
    }
}

/// A validated run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub protocol: Protocol,
    pub n: usize,
    /// Requests submitted before this are left out of summary metrics.
    pub warmup_us: SimTime,
    pub sim: SimConfig,
    pub baxos: BaxosOptions,
    pub multipaxos: MpOptions,
    /// Adjustments the validator made, such as clamped attack magnitudes.
    pub adjustments: Vec<String>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        raw::parse(text)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// A preset name or a path to a TOML file.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = std::path::Path::new(spec);
        if path.exists() {
            return Self::load(path);
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
        match preset(stem) {
            Some(text) => Self::from_toml(text),
            None if spec.contains('/') || spec.ends_with(".toml") => Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such scenario file"),
            )),
            None => Err(Error::UnknownPreset(spec.to_string())),
        }
    }

    pub fn cluster(&self) -> ClusterConfig {
        ClusterConfig::new(self.n).expect("validated")
    }

    pub fn seed(&self) -> u64 {
        self.sim.seed
    }

    pub fn horizon_us(&self) -> SimTime {
        self.sim.horizon_us
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.seed = seed;
        self
    }

    pub fn with_protocol(mut self, p: Protocol) -> Self {
        self.protocol = p;
        self
    }

    pub fn with_piggyback(mut self, on: bool) -> Self {
        self.baxos.piggyback = on;
        self
    }

    pub fn with_scheme(mut self, s: Scheme) -> Self {
        self.baxos.scheme = s;
        self
    }

    pub fn with_view_timeout(mut self, v: ViewTimeoutPolicy) -> Self {
        self.multipaxos.view_timeout = v;
        self
    }

    /// Moves the horizon; clients stop and attacks end no later than it.
    pub fn with_horizon(mut self, horizon_us: SimTime) -> Self {
        self.sim.horizon_us = horizon_us;
        for c in &mut self.sim.clients {
            c.stop_us = c.stop_us.min(horizon_us);
        }
        self.sim.attacks.retain(|a| a.start_us < horizon_us);
        for a in &mut self.sim.attacks {
            a.stop_us = a.stop_us.min(horizon_us);
        }
        self.sim.crashes.retain(|(t, _)| *t < horizon_us);
        self
    }

    /// Resizes the cluster: AWS regions in order, the same number of
    /// clients per replica as before, cloned from the first client.
    pub fn with_replicas(mut self, n: usize) -> Result<Self> {
        ClusterConfig::new(n)?;
        let jitter = self.sim.latency.jitter();
        let profile = if n <= 5 { "aws-5" } else { "aws-9" };
        self.sim.latency = LatencyMatrix::profile(profile, n, jitter)?;
        let per = (self.sim.clients.len() / self.n.max(1)).max(1);
        if let Some(template) = self.sim.clients.first().cloned() {
            self.sim.clients = (0..n * per)
                .map(|i| ClientSpec {
                    id: i as u32,
                    home: ReplicaId::from(i % n),
                    ..template.clone()
                })
                .collect();
        }
        self.n = n;
        Ok(self)
    }

    /// Sets every client's arrival rate.
    pub fn with_rate(mut self, rate_per_s: f64) -> Self {
        for c in &mut self.sim.clients {
            c.rate_per_s = rate_per_s;
        }
        self
    }

    /// Re-checks the invariants after programmatic edits.
    pub fn validate(&self) -> Result<()> {
        let errs = check(self);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Hex SHA-256 of the canonical JSON form, seed excluded.
    pub fn digest(&self) -> String {
        let mut copy = self.clone();
        copy.sim.seed = 0;
        let json = serde_json::to_vec(&copy).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn check(s: &Scenario) -> Vec<FieldError> {
    let mut errs = Vec::new();
    let mut err = |field: String, message: String| errs.push(FieldError { field, message });
    if let Err(e) = ClusterConfig::new(s.n) {
        err("cluster.n".into(), e.to_string());
    }
    if s.sim.latency.n() != s.n {
        err(
            "latency.matrix".into(),
            format!(
                "matrix is {0}x{0} but the cluster has {1} replicas",
                s.sim.latency.n(),
                s.n
            ),
        );
    }
    let horizon = s.sim.horizon_us;
    if horizon == 0 {
        err("horizon_s".into(), "horizon must be positive".into());
    }
    if s.warmup_us >= horizon.max(1) {
        err(
            "warmup_s".into(),
            "warmup must end before the horizon".into(),
        );
    }
    if s.sim.client_timeout_us == 0 {
        err(
            "client_timeout_s".into(),
            "client timeout must be positive".into(),
        );
    }
    for (i, c) in s.sim.clients.iter().enumerate() {
        if c.home.index() >= s.n {
            err(
                format!("workload.homes[{i}]"),
                format!("no replica {}", c.home),
            );
        }
        if !(c.rate_per_s.is_finite() && c.rate_per_s > 0.0) {
            err(
                "workload.rate_per_client".into(),
                "rate must be positive".into(),
            );
        }
        if c.start_us >= c.stop_us {
            err(
                "workload.start_s".into(),
                "clients must start before they stop".into(),
            );
        }
    }
    let vt = s.multipaxos.view_timeout.base_us;
    if vt == 0 {
        err(
            "multipaxos.view_timeout".into(),
            "view timeout must be positive".into(),
        );
    }
    let mut crashes = s.sim.crashes.len();
    for (i, a) in s.sim.attacks.iter().enumerate() {
        let f = |name: &str| format!("attack[{i}].{name}");
        if a.start_us >= a.stop_us {
            err(f("start_s"), "attack must start before it stops".into());
        }
        if a.stop_us > horizon {
            err(
                f("stop_s"),
                "attack window must lie within the horizon".into(),
            );
        }
        match a.kind {
            AttackKind::Delay {
                magnitude_us: 0, ..
            } => err(f("magnitude_ms"), "delay magnitude must be positive".into()),
            AttackKind::Loss { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                err(f("fraction"), "drop fraction must lie in (0, 1]".into())
            }
            AttackKind::Crash => crashes += 1,
            _ => {}
        }
        if let Some(b) = a.burst_us {
            if b == 0 {
                err(f("burst_s"), "burst length must be positive".into());
            }
            if b > vt {
                err(
                    f("burst_s"),
                    format!("burst {b} us exceeds the view timeout {vt} us"),
                );
            }
        }
        if let Targeting::Fixed(r) = a.targeting {
            if r.index() >= s.n {
                err(f("target"), format!("no replica {r}"));
            }
        }
    }
    for (i, (t, r)) in s.sim.crashes.iter().enumerate() {
        if r.index() >= s.n {
            err(format!("crash[{i}].replica"), format!("no replica {r}"));
        }
        if *t > horizon {
            err(format!("crash[{i}].at_s"), "crash after the horizon".into());
        }
    }
    if s.n >= 3 && crashes > (s.n - 1) / 2 {
        err(
            "crash".into(),
            format!(
                "{crashes} crashes exceed the tolerated f = {}",
                (s.n - 1) / 2
            ),
        );
    }
    if s.baxos.batch_cap == 0 || s.multipaxos.batch_cap == 0 {
        err("batch_cap".into(), "batch cap must be positive".into());
    }
    if s.baxos.rtt_prior_us == 0 {
        err(
            "baxos.rtt_prior_us".into(),
            "RTT prior must be positive".into(),
        );
    }
    errs
}

/// Seconds as a float to whole microseconds.
pub(crate) fn secs(v: f64) -> SimTime {
    (v * US_PER_S as f64).round() as SimTime
}

pub(crate) fn replica(v: u16) -> ReplicaId {
    ReplicaId(v)
}
