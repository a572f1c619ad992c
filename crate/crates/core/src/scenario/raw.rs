use serde::Deserialize;

use super::{check, replica, secs, Protocol, Scenario};
use crate::error::{Error, FieldError, Result};
use crate::multichoice::BaxosOptions;
use crate::multipaxos::{MpOptions, ViewTimeoutPolicy};
use crate::simnet::{
    AttackKind, AttackSchedule, CpuModel, LatencyMatrix, SimConfig, SynchronyModel, Targeting,
    TraceLevel, US_PER_MS,
};
use crate::workload::{ClientSpec, WorkloadKind};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    protocol: Option<String>,
    seed: Option<u64>,
    horizon_s: Option<f64>,
    client_timeout_s: Option<f64>,
    warmup_s: Option<f64>,
    #[serde(default)]
    cluster: RawCluster,
    #[serde(default)]
    latency: RawLatency,
    #[serde(default)]
    synchrony: RawSynchrony,
    #[serde(default)]
    cpu: CpuModel,
    #[serde(default)]
    baxos: BaxosOptions,
    #[serde(default)]
    multipaxos: RawMultiPaxos,
    #[serde(default)]
    workload: RawWorkload,
    #[serde(default)]
    attack: Vec<RawAttack>,
    #[serde(default)]
    crash: Vec<RawCrash>,
    #[serde(default)]
    trace: RawTrace,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCluster {
    n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLatency {
    profile: Option<String>,
    matrix: Option<Vec<Vec<f64>>>,
    jitter: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynchrony {
    gst_s: Option<f64>,
    delta_ms: Option<f64>,
    pre_gst_extra_ms: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMultiPaxos {
    view_timeout: Option<String>,
    batch_us: Option<u64>,
    batch_cap: Option<usize>,
    heartbeat_us: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    kind: Option<WorkloadKind>,
    rate_per_client: Option<f64>,
    payload_bytes: Option<u32>,
    response_bytes: Option<u32>,
    homes: Option<Vec<u16>>,
    start_s: Option<f64>,
    stop_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    #[serde(rename = "type")]
    kind: String,
    target: Option<String>,
    start_s: f64,
    stop_s: f64,
    magnitude_ms: Option<f64>,
    fraction: Option<f64>,
    #[serde(default)]
    ramp: bool,
    burst_s: Option<f64>,
    cooldown_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrash {
    replica: u16,
    at_s: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    level: Option<TraceLevel>,
}

fn non_negative(errs: &mut Vec<FieldError>, field: &str, v: f64) -> f64 {
    if !v.is_finite() || v < 0.0 {
        errs.push(FieldError {
            field: field.into(),
            message: format!("must be a non-negative number, got {v}"),
        });
        0.0
    } else {
        v
    }
}

fn parse_target(s: &str) -> Option<Targeting> {
    match s {
        "follow-leader" => Some(Targeting::FollowLeader),
        "random-rotating" => Some(Targeting::RandomRotating),
        other => other
            .strip_prefix("fixed:")
            .unwrap_or(other)
            .parse::<u16>()
            .ok()
            .map(|r| Targeting::Fixed(replica(r))),
    }
}

pub(super) fn parse(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
        what: "scenario".into(),
        message: e.to_string(),
    })?;
    let mut errs = Vec::new();

    let protocol = match raw
        .protocol
        .as_deref()
        .unwrap_or("baxos")
        .parse::<Protocol>()
    {
        Ok(p) => p,
        Err(e) => {
            errs.push(FieldError {
                field: "protocol".into(),
                message: e.to_string(),
            });
            Protocol::Baxos
        }
    };
    let n = raw.cluster.n.unwrap_or(5);
    let horizon_us = secs(non_negative(
        &mut errs,
        "horizon_s",
        raw.horizon_s.unwrap_or(60.0),
    ));
    let timeout_us = secs(non_negative(
        &mut errs,
        "client_timeout_s",
        raw.client_timeout_s.unwrap_or(8.0),
    ));
    let warmup_us = secs(non_negative(
        &mut errs,
        "warmup_s",
        raw.warmup_s.unwrap_or(0.0),
    ));

    let jitter = raw.latency.jitter.unwrap_or(0.05);
    let latency = match (&raw.latency.matrix, &raw.latency.profile) {
        (Some(_), Some(_)) => {
            errs.push(FieldError {
                field: "latency".into(),
                message: "give either `profile` or `matrix`, not both".into(),
            });
            None
        }
        (Some(m), None) if m.len() != n => {
            errs.push(FieldError {
                field: "latency.matrix".into(),
                message: format!(
                    "matrix has {} rows but the cluster has {n} replicas",
                    m.len()
                ),
            });
            None
        }
        (Some(m), None) => LatencyMatrix::from_ping_ms(m, jitter)
            .map_err(|e| errs_push(&mut errs, e))
            .ok(),
        (None, p) => LatencyMatrix::profile(p.as_deref().unwrap_or("aws-5"), n, jitter)
            .map_err(|e| errs_push(&mut errs, e))
            .ok(),
    };

    let sync = SynchronyModel {
        gst_us: secs(non_negative(
            &mut errs,
            "synchrony.gst_s",
            raw.synchrony.gst_s.unwrap_or(0.0),
        )),
        delta_us: raw
            .synchrony
            .delta_ms
            .map(|d| (non_negative(&mut errs, "synchrony.delta_ms", d) * US_PER_MS as f64) as u64),
        pre_gst_extra_us: (non_negative(
            &mut errs,
            "synchrony.pre_gst_extra_ms",
            raw.synchrony.pre_gst_extra_ms.unwrap_or(0.0),
        ) * US_PER_MS as f64) as u64,
    };

    let mut multipaxos = MpOptions::default();
    if let Some(v) = &raw.multipaxos.view_timeout {
        match v.parse::<ViewTimeoutPolicy>() {
            Ok(p) => multipaxos.view_timeout = p,
            Err(e) => errs.push(FieldError {
                field: "multipaxos.view_timeout".into(),
                message: e.to_string(),
            }),
        }
    }
    if let Some(b) = raw.multipaxos.batch_us {
        multipaxos.batch_us = b;
    }
    if let Some(b) = raw.multipaxos.batch_cap {
        multipaxos.batch_cap = b;
    }
    multipaxos.heartbeat_us = raw.multipaxos.heartbeat_us;

    let w = &raw.workload;
    let kind = w.kind.unwrap_or_default();
    let default_bytes = match kind {
        WorkloadKind::Micro => 8,
        WorkloadKind::YcsbA => 1024,
    };
    let response_bytes = w.response_bytes.unwrap_or(default_bytes);
    let mut baxos = raw.baxos.clone();
    baxos.response_bytes = response_bytes;
    let prior_given = text
        .parse::<toml::Table>()
        .ok()
        .and_then(|t| t.get("baxos")?.get("rtt_prior_us").cloned())
        .is_some();
    if let (false, Some(l)) = (prior_given, &latency) {
        baxos.rtt_prior_us = l.diameter_rtt_us().max(US_PER_MS);
    }
    multipaxos.response_bytes = response_bytes;
    let homes: Vec<u16> = w.homes.clone().unwrap_or_else(|| (0..n as u16).collect());
    let start_us = secs(non_negative(
        &mut errs,
        "workload.start_s",
        w.start_s.unwrap_or(0.0),
    ));
    let stop_us = w
        .stop_s
        .map(|s| secs(non_negative(&mut errs, "workload.stop_s", s)))
        .unwrap_or(horizon_us)
        .min(horizon_us);
    let clients: Vec<ClientSpec> = homes
        .iter()
        .enumerate()
        .map(|(i, h)| ClientSpec {
            id: i as u32,
            home: replica(*h),
            rate_per_s: w.rate_per_client.unwrap_or(2500.0),
            workload: kind,
            payload_bytes: w.payload_bytes.unwrap_or(default_bytes),
            start_us,
            stop_us,
        })
        .collect();

    let mut attacks = Vec::new();
    let mut adjustments = Vec::new();
    for (i, a) in raw.attack.iter().enumerate() {
        let f = |name: &str| format!("attack[{i}].{name}");
        let targeting = match a.target.as_deref() {
            None => Some(Targeting::FollowLeader),
            Some(t) => parse_target(t),
        };
        let Some(targeting) = targeting else {
            errs.push(FieldError {
                field: f("target"),
                message: "expected `follow-leader`, `random-rotating` or `fixed:N`".into(),
            });
            continue;
        };
        let kind = match a.kind.as_str() {
            "delay" => match a.magnitude_ms {
                Some(m) => AttackKind::Delay {
                    magnitude_us: (non_negative(&mut errs, &f("magnitude_ms"), m)
                        * US_PER_MS as f64) as u64,
                    ramp: a.ramp,
                },
                None => {
                    errs.push(FieldError {
                        field: f("magnitude_ms"),
                        message: "delay attacks need a magnitude".into(),
                    });
                    continue;
                }
            },
            "loss" | "packet-loss" => match a.fraction {
                Some(fr) => AttackKind::Loss { fraction: fr },
                None => {
                    errs.push(FieldError {
                        field: f("fraction"),
                        message: "loss attacks need a drop fraction".into(),
                    });
                    continue;
                }
            },
            "crash" => AttackKind::Crash,
            other => {
                errs.push(FieldError {
                    field: f("type"),
                    message: format!("unknown attack type `{other}`"),
                });
                continue;
            }
        };
        attacks.push(AttackSchedule {
            kind,
            targeting,
            start_us: secs(non_negative(&mut errs, &f("start_s"), a.start_s)),
            stop_us: secs(non_negative(&mut errs, &f("stop_s"), a.stop_s)),
            burst_us: a
                .burst_s
                .map(|b| secs(non_negative(&mut errs, &f("burst_s"), b))),
            cooldown_us: secs(non_negative(
                &mut errs,
                &f("cooldown_s"),
                a.cooldown_s.unwrap_or(0.0),
            )),
        });
    }

    if let (Some(delta), Some(lat)) = (sync.delta_us, &latency) {
        let worst = (lat.max_one_way_us() as f64 * (1.0 + lat.jitter())).ceil() as u64;
        if delta < worst {
            errs.push(FieldError {
                field: "synchrony.delta_ms".into(),
                message: format!("bound {delta} us is below the largest link latency {worst} us"),
            });
        }
        for (i, a) in attacks.iter_mut().enumerate() {
            if let AttackKind::Delay { magnitude_us, ramp } = a.kind {
                let room = delta.saturating_sub(worst);
                if a.stop_us > sync.gst_us && magnitude_us > room {
                    a.kind = AttackKind::Delay {
                        magnitude_us: room,
                        ramp,
                    };
                    adjustments.push(format!(
                        "attack[{i}].magnitude_ms clamped from {} to {} ms by the post-GST bound",
                        magnitude_us / US_PER_MS,
                        room / US_PER_MS
                    ));
                }
            }
        }
    }

    let crashes = raw
        .crash
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                secs(non_negative(&mut errs, &format!("crash[{i}].at_s"), c.at_s)),
                replica(c.replica),
            )
        })
        .collect();

    let Some(latency) = latency else {
        return Err(Error::Validation(errs));
    };
    let scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "unnamed".into()),
        protocol,
        n,
        warmup_us,
        sim: SimConfig {
            latency,
            synchrony: sync,
            cpu: raw.cpu,
            attacks,
            crashes,
            clients,
            client_timeout_us: timeout_us,
            horizon_us,
            seed: raw.seed.unwrap_or(1),
            trace_level: raw.trace.level.unwrap_or_default(),
        },
        baxos,
        multipaxos,
        adjustments,
    };
    errs.extend(check(&scenario));
    if errs.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Validation(errs))
    }
}

fn errs_push(errs: &mut Vec<FieldError>, e: Error) {
    match e {
        Error::Validation(v) => errs.extend(v),
        other => errs.push(FieldError {
            field: "latency".into(),
            message: other.to_string(),
        }),
    }
}
