use serde::{Deserialize, Serialize};

use crate::multichoice::RequestId;
use crate::protocol::ReplicaId;
use crate::simnet::SimTime;

/// Client-side record of one request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: RequestId,
    pub submit: SimTime,
    /// Time the client received the answer.
    pub commit: Option<SimTime>,
    /// `None` when no replica was alive to take the request.
    pub routed: Option<ReplicaId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success(SimTime),
    Failed,
    /// Still open at the horizon with time left on the client timeout.
    Censored,
}

impl RequestRecord {
    pub fn outcome(&self, timeout: SimTime, horizon: SimTime) -> Outcome {
        match (self.routed, self.commit) {
            (None, _) => Outcome::Failed,
            (_, Some(c)) if c - self.submit <= timeout => Outcome::Success(c - self.submit),
            (_, Some(_)) => Outcome::Failed,
            (_, None) if self.submit + timeout <= horizon => Outcome::Failed,
            (_, None) => Outcome::Censored,
        }
    }
}

/// Nearest-rank quantile of an ascending slice.
pub fn nearest_rank(sorted: &[SimTime], q: f64) -> Option<SimTime> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn population_stddev(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Gini coefficient of non-negative counts; 0 for an all-zero input.
pub fn gini(values: &[u64]) -> f64 {
    let n = values.len();
    let total: u64 = values.iter().sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut diff = 0u128;
    for a in values {
        for b in values {
            diff += a.abs_diff(*b) as u128;
        }
    }
    diff as f64 / (2.0 * n as f64 * total as f64)
}

/// Summary over the requests submitted in `[from, to)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsAggregate {
    pub from_us: SimTime,
    pub to_us: SimTime,
    pub submitted: u64,
    pub committed: u64,
    pub failed: u64,
    pub censored: u64,
    /// Committed requests per second of window.
    pub throughput: f64,
    pub median_us: Option<SimTime>,
    pub p99_us: Option<SimTime>,
    pub mean_us: Option<f64>,
}

impl MetricsAggregate {
    /// `None` when no request was submitted in the window.
    pub fn compute<'a>(
        records: impl IntoIterator<Item = &'a RequestRecord>,
        from: SimTime,
        to: SimTime,
        timeout: SimTime,
        horizon: SimTime,
    ) -> Option<Self> {
        let mut lat = Vec::new();
        let (mut submitted, mut failed, mut censored) = (0, 0, 0);
        for r in records {
            if r.submit < from || r.submit >= to {
                continue;
            }
            submitted += 1;
            match r.outcome(timeout, horizon) {
                Outcome::Success(l) => lat.push(l),
                Outcome::Failed => failed += 1,
                Outcome::Censored => censored += 1,
            }
        }
        if submitted == 0 {
            return None;
        }
        lat.sort_unstable();
        let secs = (to - from) as f64 / 1e6;
        let mean = (!lat.is_empty())
            .then(|| lat.iter().map(|v| *v as f64).sum::<f64>() / lat.len() as f64);
        Some(MetricsAggregate {
            from_us: from,
            to_us: to,
            submitted,
            committed: lat.len() as u64,
            failed,
            censored,
            throughput: lat.len() as f64 / secs,
            median_us: nearest_rank(&lat, 0.5),
            p99_us: nearest_rank(&lat, 0.99),
            mean_us: mean,
        })
    }
}

/// One row of the per-second table, bucketed by the time the client got
/// its answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondRow {
    pub second: u64,
    pub committed: u64,
    pub median_us: Option<SimTime>,
    pub p99_us: Option<SimTime>,
}

impl SecondRow {
    pub fn table<'a>(
        records: impl IntoIterator<Item = &'a RequestRecord>,
        timeout: SimTime,
        horizon: SimTime,
    ) -> Vec<SecondRow> {
        let secs = horizon.div_ceil(1_000_000) as usize;
        let mut buckets: Vec<Vec<SimTime>> = vec![Vec::new(); secs];
        for r in records {
            if let (Outcome::Success(l), Some(c)) = (r.outcome(timeout, horizon), r.commit) {
                if let Some(b) = buckets.get_mut((c / 1_000_000) as usize) {
                    b.push(l);
                }
            }
        }
        buckets
            .into_iter()
            .enumerate()
            .map(|(i, mut b)| {
                b.sort_unstable();
                SecondRow {
                    second: i as u64,
                    committed: b.len() as u64,
                    median_us: nearest_rank(&b, 0.5),
                    p99_us: nearest_rank(&b, 0.99),
                }
            })
            .collect()
    }
}
