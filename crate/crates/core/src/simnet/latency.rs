use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimTime;
use crate::error::{Error, Result};
use crate::protocol::ReplicaId;

/// Region names of the built-in profiles, in matrix order.
pub const AWS_REGIONS: [&str; 9] = [
    "n-virginia",
    "ireland",
    "n-california",
    "tokyo",
    "hong-kong",
    "oregon",
    "mumbai",
    "seoul",
    "cape-town",
];

/// Round-trip pings in milliseconds. The first five regions use the measured
/// table (upper triangle, mirrored); the other four are rough public figures.
const AWS_PING_MS: [[f64; 9]; 9] = [
    [0.0, 66.0, 62.0, 145.0, 191.0, 67.0, 185.0, 175.0, 225.0],
    [66.0, 0.0, 136.0, 201.0, 249.0, 125.0, 120.0, 235.0, 160.0],
    [62.0, 136.0, 0.0, 107.0, 154.0, 22.0, 230.0, 135.0, 285.0],
    [145.0, 201.0, 107.0, 0.0, 51.0, 97.0, 130.0, 33.0, 355.0],
    [191.0, 249.0, 154.0, 51.0, 0.0, 145.0, 95.0, 38.0, 330.0],
    [67.0, 125.0, 22.0, 97.0, 145.0, 0.0, 215.0, 125.0, 275.0],
    [185.0, 120.0, 230.0, 130.0, 95.0, 215.0, 0.0, 145.0, 260.0],
    [175.0, 235.0, 135.0, 33.0, 38.0, 125.0, 145.0, 0.0, 370.0],
    [225.0, 160.0, 285.0, 355.0, 330.0, 275.0, 260.0, 370.0, 0.0],
];

/// One-way base latencies between replicas plus a uniform jitter fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyMatrix {
    one_way_us: Vec<Vec<SimTime>>,
    jitter: f64,
    names: Vec<String>,
}

impl LatencyMatrix {
    /// Builds a matrix from round-trip pings; one-way latency is half the ping.
    pub fn from_ping_ms(ping: &[Vec<f64>], jitter: f64) -> Result<Self> {
        let n = ping.len();
        let mut errors = Vec::new();
        for (i, row) in ping.iter().enumerate() {
            if row.len() != n {
                errors.push(crate::error::FieldError {
                    field: format!("latency.matrix[{i}]"),
                    message: format!("expected {n} columns, got {}", row.len()),
                });
                continue;
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    errors.push(crate::error::FieldError {
                        field: format!("latency.matrix[{i}][{j}]"),
                        message: format!("ping must be a non-negative number, got {v}"),
                    });
                } else if i == j && *v != 0.0 {
                    errors.push(crate::error::FieldError {
                        field: format!("latency.matrix[{i}][{j}]"),
                        message: "diagonal must be zero".into(),
                    });
                }
            }
        }
        if !(0.0..1.0).contains(&jitter) {
            errors.push(crate::error::FieldError {
                field: "latency.jitter".into(),
                message: format!("jitter must lie in [0, 1), got {jitter}"),
            });
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let one_way_us = ping
            .iter()
            .map(|row| row.iter().map(|p| (p * 500.0).round() as SimTime).collect())
            .collect();
        Ok(LatencyMatrix {
            one_way_us,
            jitter,
            names: (0..n).map(|i| format!("site-{i}")).collect(),
        })
    }

    /// `aws-5`, `aws-9` (first `n` regions), or `uniform:<ping ms>`.
    pub fn profile(name: &str, n: usize, jitter: f64) -> Result<Self> {
        let field = |m: String| Error::validation("latency.profile", m);
        if let Some(ms) = name.strip_prefix("uniform:") {
            let ping: f64 = ms
                .parse()
                .map_err(|_| field(format!("bad uniform ping `{ms}`")))?;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { ping }).collect())
                .collect();
            return Self::from_ping_ms(&rows, jitter);
        }
        let limit = match name {
            "aws-5" => 5,
            "aws-9" => 9,
            other => return Err(field(format!("unknown latency profile `{other}`"))),
        };
        if n > limit {
            return Err(field(format!(
                "profile `{name}` has {limit} regions but the cluster has {n} replicas"
            )));
        }
        let rows: Vec<Vec<f64>> = AWS_PING_MS[..n]
            .iter()
            .map(|row| row[..n].to_vec())
            .collect();
        let mut m = Self::from_ping_ms(&rows, jitter)?;
        m.names = AWS_REGIONS[..n].iter().map(|s| s.to_string()).collect();
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.one_way_us.len()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn set_jitter(&mut self, jitter: f64) {
        self.jitter = jitter.clamp(0.0, 0.99);
    }

    pub fn name(&self, r: ReplicaId) -> &str {
        &self.names[r.index()]
    }

    pub fn base_us(&self, a: ReplicaId, b: ReplicaId) -> SimTime {
        self.one_way_us[a.index()][b.index()]
    }

    /// One jittered one-way latency draw.
    pub fn sample<R: Rng>(&self, a: ReplicaId, b: ReplicaId, rng: &mut R) -> SimTime {
        let base = self.base_us(a, b);
        if self.jitter == 0.0 || base == 0 {
            return base;
        }
        let f: f64 = rng.random_range(-self.jitter..=self.jitter);
        ((base as f64) * (1.0 + f)).round().max(0.0) as SimTime
    }

    /// Largest round trip between any two replicas.
    pub fn diameter_rtt_us(&self) -> SimTime {
        self.one_way_us.iter().flatten().copied().max().unwrap_or(0) * 2
    }

    pub fn max_one_way_us(&self) -> SimTime {
        self.diameter_rtt_us() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| self.one_way_us[i][j] == self.one_way_us[j][i]))
    }
}
