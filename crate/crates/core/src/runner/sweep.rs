use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate, RunReport};
use crate::backoff::Scheme;
use crate::error::{Error, Result};
use crate::multipaxos::ViewTimeoutPolicy;
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    ArrivalRate,
    ReplicaCount,
    Scheme,
    ViewTimeout,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::ArrivalRate => "arrival-rate",
            SweepAxis::ReplicaCount => "replica-count",
            SweepAxis::Scheme => "scheme",
            SweepAxis::ViewTimeout => "view-timeout",
        }
    }

    /// Applies one axis value to a copy of the template.
    pub fn apply(self, template: &Scenario, value: &str) -> Result<Scenario> {
        let bad = |m: String| Error::Parse {
            what: format!("{} value", self.name()),
            message: m,
        };
        let s = template.clone();
        let s = match self {
            SweepAxis::ArrivalRate => {
                let r: f64 = value.parse().map_err(|_| bad(format!("`{value}`")))?;
                s.with_rate(r)
            }
            SweepAxis::ReplicaCount => {
                let n: usize = value.parse().map_err(|_| bad(format!("`{value}`")))?;
                s.with_replicas(n)?
            }
            SweepAxis::Scheme => s.with_scheme(value.parse::<Scheme>()?),
            SweepAxis::ViewTimeout => s.with_view_timeout(value.parse::<ViewTimeoutPolicy>()?),
        };
        s.validate()?;
        Ok(s)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arrival-rate" => Ok(SweepAxis::ArrivalRate),
            "replica-count" => Ok(SweepAxis::ReplicaCount),
            "scheme" => Ok(SweepAxis::Scheme),
            "view-timeout" => Ok(SweepAxis::ViewTimeout),
            other => Err(Error::Parse {
                what: "sweep axis".into(),
                message: format!(
                    "expected arrival-rate, replica-count, scheme or view-timeout, got `{other}`"
                ),
            }),
        }
    }
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Some(Estimate { mean, se })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub protocol: String,
    pub seeds: usize,
    pub throughput: Option<Estimate>,
    pub median_ms: Option<Estimate>,
    pub p99_ms: Option<Estimate>,
    pub retries_per_commit: Option<Estimate>,
    pub commit_gini: Option<Estimate>,
    pub byte_rate_stddev_kbps: Option<Estimate>,
}

impl SweepRow {
    fn from_reports(axis: SweepAxis, value: &str, reports: &[RunReport]) -> Self {
        let pick = |f: &dyn Fn(&RunReport) -> Option<f64>| {
            Estimate::of(&reports.iter().filter_map(f).collect::<Vec<_>>())
        };
        SweepRow {
            axis,
            value: value.to_string(),
            protocol: reports
                .first()
                .map_or(String::new(), |r| r.protocol.name().to_string()),
            seeds: reports.len(),
            throughput: pick(&|r| r.summary.as_ref().map(|s| s.throughput)),
            median_ms: pick(&|r| r.summary.as_ref()?.median_us.map(|v| v as f64 / 1e3)),
            p99_ms: pick(&|r| r.summary.as_ref()?.p99_us.map(|v| v as f64 / 1e3)),
            retries_per_commit: pick(&|r| r.retries_per_commit),
            commit_gini: pick(&|r| Some(r.commit_gini)),
            byte_rate_stddev_kbps: pick(&|r| Some(r.byte_rate_stddev_kbps)),
        }
    }

    pub const CSV_HEADER: &'static str = "axis,value,protocol,seeds,throughput,throughput_se,\
        median_ms,median_ms_se,p99_ms,p99_ms_se,retries_per_commit,retries_per_commit_se,\
        commit_gini,commit_gini_se,byte_rate_stddev_kbps,byte_rate_stddev_kbps_se";

    pub fn csv(&self) -> String {
        let e = |v: &Option<Estimate>| {
            v.map_or(",".to_string(), |e| format!("{:.4},{:.4}", e.mean, e.se))
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.axis.name(),
            self.value,
            self.protocol,
            self.seeds,
            e(&self.throughput),
            e(&self.median_ms),
            e(&self.p99_ms),
            e(&self.retries_per_commit),
            e(&self.commit_gini),
            e(&self.byte_rate_stddev_kbps)
        )
    }
}

/// Rows for every cell that finished, and the failure that stopped the
/// sweep if one did.
#[derive(Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failure: Option<(String, Error)>,
}

/// One row per axis value, each averaged over `seeds` run in parallel.
pub fn sweep(
    template: &Scenario,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
) -> SweepResult {
    let mut rows = Vec::new();
    for value in values {
        let cell = axis.apply(template, value).and_then(|s| {
            seeds
                .par_iter()
                .map(|&seed| simulate(&s.clone().with_seed(seed)).map(|(_, r)| r))
                .collect::<Result<Vec<_>>>()
        });
        match cell {
            Ok(reports) => rows.push(SweepRow::from_reports(axis, value, &reports)),
            Err(e) => {
                return SweepResult {
                    rows,
                    failure: Some((value.clone(), e)),
                }
            }
        }
    }
    SweepResult {
        rows,
        failure: None,
    }
}
