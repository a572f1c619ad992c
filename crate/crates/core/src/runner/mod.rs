//! Building and running simulations from scenarios, and the run artifacts.

mod artifacts;
mod sweep;

use serde::{Deserialize, Serialize};

pub use artifacts::{
    export_run, replay, run_to_dir, state_digest, ReplayReport, RunManifest, ARTIFACTS,
};
pub use sweep::{sweep, Estimate, SweepAxis, SweepResult, SweepRow};

use crate::error::Result;
use crate::multichoice::{BaxosReplica, DecidedLog};
use crate::multipaxos::MpReplica;
use crate::protocol::ReplicaId;
use crate::scenario::{Protocol, Scenario};
use crate::simnet::{
    derive_seed, AttackEvent, ByteCounters, Replica, ReplicaStats, SimTime, Simulation, Trace,
    US_PER_S,
};
use crate::workload::{gini, population_stddev, MetricsAggregate, RequestRecord, SecondRow};

/// A simulation of either protocol.
pub enum AnySim {
    Baxos(Simulation<BaxosReplica>),
    MultiPaxos(Simulation<MpReplica>),
}

macro_rules! each {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            AnySim::Baxos($s) => $body,
            AnySim::MultiPaxos($s) => $body,
        }
    };
}

impl AnySim {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let cluster = scenario.cluster();
        let seed = scenario.seed();
        Ok(match scenario.protocol {
            Protocol::Baxos => {
                let replicas = cluster
                    .replicas()
                    .map(|r| {
                        BaxosReplica::new(
                            r,
                            cluster,
                            scenario.baxos.clone(),
                            derive_seed(seed, "replica", r.0 as u64),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                AnySim::Baxos(Simulation::new(scenario.sim.clone(), replicas)?)
            }
            Protocol::Multipaxos => {
                let replicas = cluster
                    .replicas()
                    .map(|r| {
                        MpReplica::new(
                            r,
                            cluster,
                            scenario.multipaxos.clone(),
                            derive_seed(seed, "replica", r.0 as u64),
                        )
                    })
                    .collect();
                AnySim::MultiPaxos(Simulation::new(scenario.sim.clone(), replicas)?)
            }
        })
    }

    pub fn set_trace(&mut self, trace: Trace) {
        each!(self, s => s.set_trace(trace))
    }

    pub fn run(&mut self) {
        each!(self, s => s.run())
    }

    pub fn run_until(&mut self, t: SimTime) {
        each!(self, s => s.run_until(t))
    }

    pub fn now(&self) -> SimTime {
        each!(self, s => s.now())
    }

    pub fn trace(&self) -> &Trace {
        each!(self, s => s.trace())
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        each!(self, s => s.trace_mut())
    }

    pub fn alive(&self) -> Vec<bool> {
        each!(self, s => s.alive().to_vec())
    }

    pub fn logs(&self) -> Vec<&DecidedLog> {
        each!(self, s => s.replicas().iter().map(|r| r.decided()).collect())
    }

    pub fn stats(&self) -> Vec<ReplicaStats> {
        each!(self, s => s.replicas().iter().map(|r| r.stats()).collect())
    }

    pub fn dumps(&self) -> Vec<String> {
        each!(self, s => s.replicas().iter().map(|r| r.dump_state()).collect())
    }

    pub fn records(&self) -> Vec<RequestRecord> {
        each!(self, s => s.all_records().copied().collect())
    }

    pub fn bytes(&self) -> ByteCounters {
        each!(self, s => s.bytes().clone())
    }

    pub fn in_flight_bytes(&self) -> u64 {
        each!(self, s => s.in_flight_bytes())
    }

    pub fn attack_log(&self) -> Vec<AttackEvent> {
        each!(self, s => s.attack_log().to_vec())
    }

    pub fn events_processed(&self) -> u64 {
        each!(self, s => s.events_processed())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica: ReplicaId,
    pub alive: bool,
    pub ingress_kbps: f64,
    pub egress_kbps: f64,
    pub proposals: u64,
    pub retries: u64,
    pub own_commits: u64,
    pub fast_path: u64,
    pub conflicts: u64,
    pub retries_per_commit: Option<f64>,
    /// Non-empty decided values this replica proposed.
    pub decided_origin: u64,
    pub decided: u64,
    pub applied: u64,
    pub elections: Vec<SimTime>,
    pub leaderships: Vec<SimTime>,
}

/// Everything computed from one finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub horizon_us: SimTime,
    pub summary: Option<MetricsAggregate>,
    pub per_second: Vec<SecondRow>,
    pub replicas: Vec<ReplicaRow>,
    pub bytes: ByteCounters,
    pub in_flight_bytes: u64,
    /// Population standard deviation of per-replica ingress + egress kB/s.
    pub byte_rate_stddev_kbps: f64,
    pub retries_per_commit: Option<f64>,
    pub commit_gini: f64,
    pub attack_log: Vec<AttackEvent>,
    pub trace_digest: String,
    pub trace_lines: u64,
    pub events: u64,
}

impl RunReport {
    pub fn from_sim(scenario: &Scenario, sim: &AnySim) -> Self {
        let horizon = sim.now().min(scenario.horizon_us()).max(1);
        let timeout = scenario.sim.client_timeout_us;
        let records = sim.records();
        let summary =
            MetricsAggregate::compute(&records, scenario.warmup_us, horizon, timeout, horizon);
        let per_second = SecondRow::table(&records, timeout, horizon);
        let alive = sim.alive();
        let logs = sim.logs();
        let stats = sim.stats();
        let bytes = sim.bytes();
        let secs = horizon as f64 / US_PER_S as f64;
        let reference = logs
            .iter()
            .max_by_key(|l| l.entries().len())
            .expect("at least three replicas");
        let mut origins = vec![0u64; logs.len()];
        for e in reference.entries() {
            if !e.value.is_empty() {
                origins[e.value.origin().index()] += 1;
            }
        }
        let replicas: Vec<ReplicaRow> = stats
            .iter()
            .enumerate()
            .map(|(i, st)| ReplicaRow {
                replica: ReplicaId::from(i),
                alive: alive[i],
                ingress_kbps: bytes.ingress[i] as f64 / 1024.0 / secs,
                egress_kbps: bytes.egress[i] as f64 / 1024.0 / secs,
                proposals: st.proposals,
                retries: st.retries,
                own_commits: st.own_commits,
                fast_path: st.fast_path,
                conflicts: st.conflicts + logs[i].conflicts(),
                retries_per_commit: (st.own_commits > 0)
                    .then(|| st.retries as f64 / st.own_commits as f64),
                decided_origin: origins[i],
                decided: logs[i].entries().len() as u64,
                applied: logs[i].applied_requests(),
                elections: st.elections.clone(),
                leaderships: st.leaderships.clone(),
            })
            .collect();
        let rates: Vec<f64> = replicas
            .iter()
            .map(|r| r.ingress_kbps + r.egress_kbps)
            .collect();
        let retries: u64 = stats.iter().map(|s| s.retries).sum();
        let commits: u64 = stats.iter().map(|s| s.own_commits).sum();
        RunReport {
            scenario: scenario.name.clone(),
            protocol: scenario.protocol,
            seed: scenario.seed(),
            horizon_us: horizon,
            summary,
            per_second,
            replicas,
            in_flight_bytes: sim.in_flight_bytes(),
            bytes,
            byte_rate_stddev_kbps: population_stddev(&rates).unwrap_or(0.0),
            retries_per_commit: (commits > 0).then(|| retries as f64 / commits as f64),
            commit_gini: gini(&origins),
            attack_log: sim.attack_log(),
            trace_digest: sim.trace().digest(),
            trace_lines: sim.trace().lines(),
            events: sim.events_processed(),
        }
    }

    /// Mean committed requests per second over whole seconds `[from, to)`.
    pub fn mean_throughput(&self, from_s: u64, to_s: u64) -> f64 {
        let rows: Vec<u64> = self
            .per_second
            .iter()
            .filter(|r| r.second >= from_s && r.second < to_s)
            .map(|r| r.committed)
            .collect();
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().sum::<u64>() as f64 / rows.len() as f64
        }
    }

    /// Times at which any replica started an election.
    pub fn elections(&self) -> Vec<SimTime> {
        let mut v: Vec<SimTime> = self
            .replicas
            .iter()
            .flat_map(|r| r.elections.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }

    /// Times at which a replica became leader, start of run excluded.
    pub fn leader_changes(&self) -> Vec<SimTime> {
        let mut v: Vec<SimTime> = self
            .replicas
            .iter()
            .flat_map(|r| r.leaderships.iter().copied())
            .filter(|t| *t > 0)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn conflicts(&self) -> u64 {
        self.replicas.iter().map(|r| r.conflicts).sum()
    }
}

/// Runs a scenario to its horizon with an in-memory trace digest.
pub fn simulate(scenario: &Scenario) -> Result<(AnySim, RunReport)> {
    let mut sim = AnySim::build(scenario)?;
    sim.run();
    let report = RunReport::from_sim(scenario, &sim);
    Ok((sim, report))
}
