//! Decided-log export: one JSON object per line.
//!
//! ```text
//! {"type":"replica","replica":0,"alive":true}
//! {"type":"entry","replica":0,"choice":0,"digest":"…","origin":3,"requests":[[0,0,41]],"skipped":[]}
//! {"type":"submitted","client":0,"count":1500}
//! ```
//!
//! Request ids are written as inclusive `[client, first_seq, last_seq]` runs.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multichoice::{DecidedLog, RequestId};
use crate::protocol::ReplicaId;

/// Inclusive run of sequence numbers from one client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRange(pub u32, pub u64, pub u64);

impl RequestRange {
    pub fn iter(&self) -> impl Iterator<Item = RequestId> {
        let c = self.0;
        (self.1..=self.2).map(move |s| RequestId::new(c, s))
    }

    pub fn len(&self) -> u64 {
        self.2 - self.1 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Collapses ids into runs, keeping their order.
pub fn compress(ids: impl IntoIterator<Item = RequestId>) -> Vec<RequestRange> {
    let mut out: Vec<RequestRange> = Vec::new();
    for id in ids {
        match out.last_mut() {
            Some(r) if r.0 == id.client && r.2 + 1 == id.seq => r.2 = id.seq,
            _ => out.push(RequestRange(id.client, id.seq, id.seq)),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryExport {
    pub choice: u64,
    pub digest: String,
    pub origin: ReplicaId,
    pub requests: Vec<RequestRange>,
    pub skipped: Vec<RequestRange>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaExport {
    pub replica: ReplicaId,
    pub alive: bool,
    pub entries: Vec<EntryExport>,
}

/// Everything the safety verifier needs from one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedRun {
    pub replicas: Vec<ReplicaExport>,
    /// Requests issued per client; sequence numbers are `0..count`.
    pub submitted: BTreeMap<u32, u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum Line {
    Replica {
        replica: ReplicaId,
        alive: bool,
    },
    Entry {
        replica: ReplicaId,
        #[serde(flatten)]
        entry: EntryExport,
    },
    Submitted {
        client: u32,
        count: u64,
    },
}

impl ExportedRun {
    pub fn from_logs<'a>(
        logs: impl IntoIterator<Item = &'a DecidedLog>,
        alive: &[bool],
        submitted: BTreeMap<u32, u64>,
    ) -> Self {
        let replicas = logs
            .into_iter()
            .enumerate()
            .map(|(i, log)| ReplicaExport {
                replica: ReplicaId::from(i),
                alive: alive.get(i).copied().unwrap_or(true),
                entries: log
                    .entries()
                    .iter()
                    .map(|e| EntryExport {
                        choice: e.choice,
                        digest: e.value.digest().to_hex(),
                        origin: e.value.origin(),
                        requests: compress(e.value.commands().iter().map(|c| c.id)),
                        skipped: compress(e.skipped.iter().copied()),
                    })
                    .collect(),
            })
            .collect();
        ExportedRun {
            replicas,
            submitted,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.replicas {
            serde_json::to_writer(
                &mut w,
                &Line::Replica {
                    replica: r.replica,
                    alive: r.alive,
                },
            )?;
            w.write_all(b"\n")?;
            for e in &r.entries {
                serde_json::to_writer(
                    &mut w,
                    &Line::Entry {
                        replica: r.replica,
                        entry: e.clone(),
                    },
                )?;
                w.write_all(b"\n")?;
            }
        }
        for (client, count) in &self.submitted {
            serde_json::to_writer(
                &mut w,
                &Line::Submitted {
                    client: *client,
                    count: *count,
                },
            )?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut run = ExportedRun::default();
        let mut index: BTreeMap<ReplicaId, usize> = BTreeMap::new();
        for (no, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                what: "decided log".into(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                what: "decided log".into(),
                message: format!("line {}: {e}", no + 1),
            })?;
            match parsed {
                Line::Replica { replica, alive } => {
                    index.insert(replica, run.replicas.len());
                    run.replicas.push(ReplicaExport {
                        replica,
                        alive,
                        entries: Vec::new(),
                    });
                }
                Line::Entry { replica, entry } => {
                    let i = *index.entry(replica).or_insert_with(|| {
                        run.replicas.push(ReplicaExport {
                            replica,
                            alive: true,
                            entries: Vec::new(),
                        });
                        run.replicas.len() - 1
                    });
                    run.replicas[i].entries.push(entry);
                }
                Line::Submitted { client, count } => {
                    run.submitted.insert(client, count);
                }
            }
        }
        Ok(run)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_compress_runs() {
        let ids =
            [(0, 1), (0, 2), (0, 3), (1, 0), (0, 4), (0, 6)].map(|(c, s)| RequestId::new(c, s));
        assert_eq!(
            compress(ids),
            vec![
                RequestRange(0, 1, 3),
                RequestRange(1, 0, 0),
                RequestRange(0, 4, 4),
                RequestRange(0, 6, 6)
            ]
        );
        assert_eq!(RequestRange(2, 5, 7).iter().count(), 3);
    }
}
