use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{AnySim, RunReport};
use crate::error::{Error, Result};
use crate::export::ExportedRun;
use crate::scenario::Scenario;
use crate::simnet::{line_time, ReplicaStats, SimTime, Trace};

/// Files written by [`run_to_dir`], in order.
pub const ARTIFACTS: [&str; 5] = [
    "manifest.json",
    "metrics.csv",
    "replicas.csv",
    "decided.jsonl",
    "trace.log",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub scenario_digest: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    pub scenario: Scenario,
    pub trace_digest: String,
    pub trace_lines: u64,
    /// Hash of every replica's final state dump and counters.
    pub final_state_digest: String,
    pub report: RunReport,
    /// The only field that differs between identical invocations.
    pub wall_clock_ms: u64,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(ARTIFACTS[0]);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Decided logs plus per-client submission counts.
pub fn export_run(sim: &AnySim) -> ExportedRun {
    let mut submitted: BTreeMap<u32, u64> = BTreeMap::new();
    for r in sim.records() {
        let n = submitted.entry(r.id.client).or_default();
        *n = (*n).max(r.id.seq + 1);
    }
    ExportedRun::from_logs(sim.logs(), &sim.alive(), submitted)
}

pub fn state_digest(dumps: &[String], stats: &[ReplicaStats]) -> String {
    let mut h = Sha256::new();
    for d in dumps {
        h.update(d.as_bytes());
    }
    h.update(serde_json::to_vec(stats).expect("stats serialize"));
    hex::encode(h.finalize())
}

fn ms(us: Option<SimTime>) -> String {
    us.map_or(String::new(), |v| format!("{:.3}", v as f64 / 1e3))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.4}"))
}

fn write_metrics(path: &Path, report: &RunReport) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "time_s,protocol,committed,median_ms,p99_ms")?;
    for row in &report.per_second {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.second,
            report.protocol.name(),
            row.committed,
            ms(row.median_us),
            ms(row.p99_us)
        )?;
    }
    w.flush()
}

fn write_replicas(path: &Path, report: &RunReport) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "replica,alive,ingress_kbps,egress_kbps,proposals,retries,own_commits,\
         retries_per_commit,fast_path,conflicts,decided,applied,decided_origin,elections"
    )?;
    for r in &report.replicas {
        writeln!(
            w,
            "{},{},{:.3},{:.3},{},{},{},{},{},{},{},{},{},{}",
            r.replica.0,
            r.alive,
            r.ingress_kbps,
            r.egress_kbps,
            r.proposals,
            r.retries,
            r.own_commits,
            opt(r.retries_per_commit),
            r.fast_path,
            r.conflicts,
            r.decided,
            r.applied,
            r.decided_origin,
            r.elections.len()
        )?;
    }
    w.flush()
}

/// Runs `scenario` and writes the five artifacts into `dir`.
pub fn run_to_dir(scenario: &Scenario, dir: &Path) -> Result<(RunManifest, AnySim)> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trace_path = dir.join(ARTIFACTS[4]);
    let trace_file = File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?;

    let mut sim = AnySim::build(scenario)?;
    sim.set_trace(Trace::new().with_sink(Box::new(BufWriter::new(trace_file))));
    sim.run();
    sim.trace_mut()
        .flush()
        .map_err(|e| Error::io(&trace_path, e))?;
    let report = RunReport::from_sim(scenario, &sim);

    let path = dir.join(ARTIFACTS[1]);
    write_metrics(&path, &report).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(ARTIFACTS[2]);
    write_replicas(&path, &report).map_err(|e| Error::io(&path, e))?;
    export_run(&sim).write(&dir.join(ARTIFACTS[3]))?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_digest: scenario.digest(),
        seeds: vec![scenario.seed()],
        artifacts: ARTIFACTS.iter().map(|s| s.to_string()).collect(),
        scenario: scenario.clone(),
        trace_digest: report.trace_digest.clone(),
        trace_lines: report.trace_lines,
        final_state_digest: state_digest(&sim.dumps(), &sim.stats()),
        report,
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    let path = dir.join(ARTIFACTS[0]);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok((manifest, sim))
}

/// Replica states after re-dispatching a recorded run up to a cut point.
#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub until_us: SimTime,
    pub lines_matched: u64,
    pub dumps: Vec<String>,
    pub stats: Vec<ReplicaStats>,
    /// Set when the replay reached the end of the run.
    pub final_state_matches: Option<bool>,
}

/// Compares produced trace lines against the recorded file as they appear.
struct Checker {
    recorded: Box<dyn BufRead + Send>,
    partial: Vec<u8>,
    matched: u64,
    mismatch: Option<String>,
}

impl Checker {
    fn line(&mut self, produced: &str) {
        if self.mismatch.is_some() {
            return;
        }
        let mut want = String::new();
        match self.recorded.read_line(&mut want) {
            Ok(0) => {
                self.mismatch = Some(format!(
                    "replay produced line {} `{produced}` beyond the recorded trace",
                    self.matched + 1
                ))
            }
            Ok(_) if want.trim_end_matches('\n') == produced => self.matched += 1,
            Ok(_) => {
                self.mismatch = Some(format!(
                    "line {} differs: recorded `{}`, replayed `{produced}`",
                    self.matched + 1,
                    want.trim_end()
                ))
            }
            Err(e) => self.mismatch = Some(format!("reading trace: {e}")),
        }
    }
}

struct CheckSink(Arc<Mutex<Checker>>);

impl Write for CheckSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let mut c = self.0.lock().expect("checker lock");
        for &b in buf {
            if b == b'\n' {
                let line = String::from_utf8_lossy(&c.partial).into_owned();
                c.partial.clear();
                c.line(&line);
            } else {
                c.partial.push(b);
            }
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Re-runs the recorded scenario up to `until_us`, checking each trace line
/// against the recording. `path` is a run directory or its `trace.log`.
pub fn replay(path: &Path, until_us: SimTime) -> Result<ReplayReport> {
    let (dir, trace_path): (PathBuf, PathBuf) = if path.is_dir() {
        (path.to_path_buf(), path.join(ARTIFACTS[4]))
    } else {
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        (dir, path.to_path_buf())
    };
    let manifest = RunManifest::read(&dir)?;
    let scenario = manifest.scenario.clone();
    scenario.validate()?;
    if scenario.digest() != manifest.scenario_digest {
        return Err(Error::Replay(format!(
            "scenario digest {} does not match the manifest's {}",
            scenario.digest(),
            manifest.scenario_digest
        )));
    }
    let file = File::open(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    let checker = Arc::new(Mutex::new(Checker {
        recorded: Box::new(BufReader::new(file)),
        partial: Vec::new(),
        matched: 0,
        mismatch: None,
    }));

    let mut sim = AnySim::build(&scenario)?;
    let until = until_us.min(scenario.horizon_us());
    if until > 0 {
        sim.set_trace(Trace::new().with_sink(Box::new(CheckSink(checker.clone()))));
        sim.run_until(until);
    }

    let mut c = checker.lock().expect("checker lock");
    if let Some(m) = c.mismatch.take() {
        return Err(Error::Replay(m));
    }
    if until > 0 {
        let mut next = String::new();
        let read = c
            .recorded
            .read_line(&mut next)
            .map_err(|e| Error::io(&trace_path, e))?;
        if read > 0 && line_time(next.trim_end()).is_some_and(|t| t <= until) {
            return Err(Error::Replay(format!(
                "recorded line {} `{}` was not reproduced",
                c.matched + 1,
                next.trim_end()
            )));
        }
    }
    let dumps = sim.dumps();
    let stats = sim.stats();
    let final_state_matches = (until >= scenario.horizon_us())
        .then(|| state_digest(&dumps, &stats) == manifest.final_state_digest);
    Ok(ReplayReport {
        until_us: until,
        lines_matched: c.matched,
        dumps,
        stats,
        final_state_matches,
    })
}
