//! Offline safety checks over an exported run.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::export::ExportedRun;
use crate::multichoice::RequestId;
use crate::protocol::ReplicaId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "property", rename_all = "kebab-case")]
pub enum Violation {
    /// Two replicas decided different values at one position.
    Agreement {
        choice: u64,
        replicas: (ReplicaId, ReplicaId),
        digests: (String, String),
    },
    /// A decided request was never submitted.
    Validity {
        choice: u64,
        replica: ReplicaId,
        client: u32,
        seq: u64,
    },
    /// A replica holds the same position twice.
    Integrity {
        choice: u64,
        replica: ReplicaId,
        digests: (String, String),
    },
    /// A request took effect more than once, or was skipped without having
    /// taken effect before.
    ExactlyOnce {
        choice: u64,
        replica: ReplicaId,
        client: u32,
        seq: u64,
    },
    /// Applied positions are not `0, 1, 2, ...`.
    Prefix {
        replica: ReplicaId,
        expected: u64,
        found: u64,
    },
}

impl Violation {
    pub fn property(&self) -> &'static str {
        match self {
            Violation::Agreement { .. } => "agreement",
            Violation::Validity { .. } => "validity",
            Violation::Integrity { .. } => "integrity",
            Violation::ExactlyOnce { .. } => "exactly-once",
            Violation::Prefix { .. } => "prefix",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Agreement {
                choice,
                replicas,
                digests,
            } => write!(
                f,
                "agreement: choice {choice} is {} at {} but {} at {}",
                digests.0, replicas.0, digests.1, replicas.1
            ),
            Violation::Validity {
                choice,
                replica,
                client,
                seq,
            } => write!(
                f,
                "validity: {replica} decided unsubmitted request c{client}#{seq} at choice {choice}"
            ),
            Violation::Integrity {
                choice,
                replica,
                digests,
            } => write!(
                f,
                "integrity: {replica} holds choice {choice} twice ({} and {})",
                digests.0, digests.1
            ),
            Violation::ExactlyOnce {
                choice,
                replica,
                client,
                seq,
            } => write!(
                f,
                "exactly-once: {replica} mishandles c{client}#{seq} at choice {choice}"
            ),
            Violation::Prefix {
                replica,
                expected,
                found,
            } => write!(
                f,
                "prefix: {replica} applied choice {found} where {expected} was due"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub replicas: usize,
    pub entries: u64,
    pub requests: u64,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Runs every check; keeps the first counterexample per property and
/// replica pair so the report stays short on badly broken input.
pub fn verify(run: &ExportedRun) -> VerifyReport {
    let mut report = VerifyReport {
        replicas: run.replicas.len(),
        ..Default::default()
    };
    let mut seen: HashSet<(&'static str, Option<ReplicaId>)> = HashSet::new();
    let mut push = |v: Violation, who: Option<ReplicaId>, out: &mut Vec<Violation>| {
        if seen.insert((v.property(), who)) {
            out.push(v);
        }
    };

    // choice -> (first replica holding it, digest)
    let mut chosen: BTreeMap<u64, (ReplicaId, &str)> = BTreeMap::new();

    for r in &run.replicas {
        let mut positions: BTreeMap<u64, &str> = BTreeMap::new();
        let mut applied: HashSet<RequestId> = HashSet::new();
        let mut expected = 0u64;
        for e in &r.entries {
            report.entries += 1;
            if let Some(prev) = positions.insert(e.choice, &e.digest) {
                if prev != e.digest {
                    push(
                        Violation::Integrity {
                            choice: e.choice,
                            replica: r.replica,
                            digests: (prev.to_string(), e.digest.clone()),
                        },
                        Some(r.replica),
                        &mut report.violations,
                    );
                }
            }
            if e.choice != expected {
                push(
                    Violation::Prefix {
                        replica: r.replica,
                        expected,
                        found: e.choice,
                    },
                    Some(r.replica),
                    &mut report.violations,
                );
            }
            expected = e.choice + 1;

            match chosen.get(&e.choice) {
                Some((other, digest)) if *digest != e.digest => push(
                    Violation::Agreement {
                        choice: e.choice,
                        replicas: (*other, r.replica),
                        digests: (digest.to_string(), e.digest.clone()),
                    },
                    Some(r.replica),
                    &mut report.violations,
                ),
                Some(_) => {}
                None => {
                    chosen.insert(e.choice, (r.replica, &e.digest));
                }
            }

            let skipped: HashSet<RequestId> = e.skipped.iter().flat_map(|s| s.iter()).collect();
            for id in e.requests.iter().flat_map(|s| s.iter()) {
                report.requests += 1;
                let issued = run.submitted.get(&id.client).copied().unwrap_or(0);
                if id.seq >= issued {
                    push(
                        Violation::Validity {
                            choice: e.choice,
                            replica: r.replica,
                            client: id.client,
                            seq: id.seq,
                        },
                        Some(r.replica),
                        &mut report.violations,
                    );
                }
                let fine = if skipped.contains(&id) {
                    applied.contains(&id)
                } else {
                    applied.insert(id)
                };
                if !fine {
                    push(
                        Violation::ExactlyOnce {
                            choice: e.choice,
                            replica: r.replica,
                            client: id.client,
                            seq: id.seq,
                        },
                        Some(r.replica),
                        &mut report.violations,
                    );
                }
            }
        }
    }
    report
}
