use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimTime;
use crate::multichoice::{Command, DecidedLog};
use crate::protocol::ReplicaId;

/// Serialized size accounting for anything that crosses a link.
pub trait Wire {
    fn wire_bytes(&self) -> u64;
    fn kind(&self) -> &'static str;
}

/// Answer to a group of requests from one client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reply {
    pub client: u32,
    pub seqs: Vec<u64>,
    pub bytes: u64,
}

/// Side effects a replica hands back to the simulator from one handler call.
#[derive(Debug)]
pub struct Ctx<M> {
    now: SimTime,
    pub(crate) sends: Vec<(ReplicaId, M)>,
    pub(crate) timers: Vec<(SimTime, u32, u64)>,
    pub(crate) replies: Vec<Reply>,
    pub(crate) notes: Vec<String>,
}

impl<M> Ctx<M> {
    pub fn new(now: SimTime) -> Self {
        Ctx {
            now,
            sends: Vec::new(),
            timers: Vec::new(),
            replies: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn send(&mut self, to: ReplicaId, msg: M) {
        self.sends.push((to, msg));
    }

    /// Fires `on_timer(tag, token)` after `after` microseconds.
    pub fn set_timer(&mut self, after: SimTime, tag: u32, token: u64) {
        self.timers.push((after, tag, token));
    }

    pub fn reply(&mut self, reply: Reply) {
        self.replies.push(reply);
    }

    /// Adds a line to the run trace.
    pub fn note(&mut self, event: &str, detail: impl fmt::Display) {
        self.notes.push(format!("{event} {detail}"));
    }

    pub fn sends(&self) -> &[(ReplicaId, M)] {
        &self.sends
    }

    pub fn timers(&self) -> &[(SimTime, u32, u64)] {
        &self.timers
    }

    pub fn replies(&self) -> &[Reply] {
        &self.replies
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn clear(&mut self) {
        self.sends.clear();
        self.timers.clear();
        self.replies.clear();
        self.notes.clear();
    }

    pub(crate) fn reset(&mut self, now: SimTime) {
        self.clear();
        self.now = now;
    }
}

/// Counters every replica exposes for the metric pipelines.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaStats {
    /// Proposer sessions (Baxos) or instances (Multi-Paxos) started.
    pub proposals: u64,
    /// Phase timeouts, each followed by a backoff.
    pub retries: u64,
    /// Sessions whose own command was decided.
    pub own_commits: u64,
    /// Sessions that skipped phase one thanks to a piggybacked Prepare.
    pub fast_path: u64,
    /// Conflicting decisions observed; must stay zero.
    pub conflicts: u64,
    /// Times at which this replica started a leader election.
    pub elections: Vec<SimTime>,
    /// Times at which this replica became the stable leader.
    pub leaderships: Vec<SimTime>,
}

/// A protocol replica driven by the simulator.
pub trait Replica {
    type Msg: Wire + Clone + fmt::Display;

    fn id(&self) -> ReplicaId;
    fn on_start(&mut self, ctx: &mut Ctx<Self::Msg>);
    fn on_message(&mut self, from: ReplicaId, msg: Self::Msg, ctx: &mut Ctx<Self::Msg>);
    fn on_timer(&mut self, tag: u32, token: u64, ctx: &mut Ctx<Self::Msg>);
    /// Client requests that reached this replica.
    fn on_requests(&mut self, commands: Vec<Command>, ctx: &mut Ctx<Self::Msg>);
    fn decided(&self) -> &DecidedLog;
    fn stats(&self) -> ReplicaStats;
    /// `(view, leader)` when this replica believes in a stable leader.
    fn stable_leader(&self) -> Option<(u64, ReplicaId)> {
        None
    }
    /// Human-readable protocol state for the replay tool.
    fn dump_state(&self) -> String;
}
