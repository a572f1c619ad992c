//! Leader-based Multi-Paxos used as the comparator.
//!
//! The leader of view `v` is replica `v mod n`. View 0 starts stable with
//! replica 0 as leader, since no instance can have been accepted before it.
//! Followers forward client requests to the leader, which proposes one
//! instance per batching window and announces decisions on its next Propose.
//! A follower that hears nothing from the leader for one view timeout
//! campaigns for the next view it owns.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multichoice::{Command, DecidedLog, RequestId};
use crate::protocol::{ClusterConfig, Digest, LearnOutcome, ReplicaId, Value};
use crate::simnet::{Ctx, Replica, ReplicaStats, Reply, SimTime, Wire, HEADER_BYTES};

pub const TAG_BATCH: u32 = 0;
pub const TAG_FORWARD: u32 = 1;
pub const TAG_HEARTBEAT: u32 = 2;
pub const TAG_VIEW: u32 = 3;

const SLOT_BYTES: u64 = 8;
const VIEW_BYTES: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewStatus {
    Electing,
    Stable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub number: u64,
    pub status: ViewStatus,
}

impl View {
    pub fn leader(&self, n: usize) -> ReplicaId {
        leader_of(self.number, n)
    }
}

pub fn leader_of(view: u64, n: usize) -> ReplicaId {
    ReplicaId((view % n as u64) as u16)
}

/// Smallest view above `after` that `me` leads.
pub fn next_owned_view(after: u64, me: ReplicaId, n: usize) -> u64 {
    let n = n as u64;
    let base = after + 1;
    let offset = (me.0 as u64 + n - base % n) % n;
    base + offset
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeoutMode {
    #[default]
    Fixed,
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewTimeoutPolicy {
    pub mode: TimeoutMode,
    pub base_us: SimTime,
    /// Upper bound of the uniform jitter added in exponential mode.
    pub jitter_us: SimTime,
}

impl Default for ViewTimeoutPolicy {
    fn default() -> Self {
        ViewTimeoutPolicy {
            mode: TimeoutMode::Fixed,
            base_us: 5_000_000,
            jitter_us: 500_000,
        }
    }
}

impl ViewTimeoutPolicy {
    pub fn fixed(base_us: SimTime) -> Self {
        ViewTimeoutPolicy {
            mode: TimeoutMode::Fixed,
            base_us,
            jitter_us: 0,
        }
    }

    pub fn exponential(base_us: SimTime, jitter_us: SimTime) -> Self {
        ViewTimeoutPolicy {
            mode: TimeoutMode::Exponential,
            base_us,
            jitter_us,
        }
    }

    /// Timeout before jitter after `failed` consecutive failed elections.
    pub fn ceiling(&self, failed: u32) -> SimTime {
        match self.mode {
            TimeoutMode::Fixed => self.base_us,
            TimeoutMode::Exponential => self.base_us.saturating_mul(1 << failed.min(20)),
        }
    }

    pub fn draw<R: Rng>(&self, failed: u32, rng: &mut R) -> SimTime {
        let jitter = match self.mode {
            TimeoutMode::Fixed => 0,
            TimeoutMode::Exponential if self.jitter_us > 0 => rng.random_range(0..=self.jitter_us),
            TimeoutMode::Exponential => 0,
        };
        self.ceiling(failed) + jitter
    }
}

impl std::str::FromStr for ViewTimeoutPolicy {
    type Err = Error;

    /// `5000` or `fixed:5000` (milliseconds), `exp:1000` or `exp:1000:250`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            what: "view timeout".into(),
            message: format!("expected `MS`, `fixed:MS` or `exp:MS[:JITTER_MS]`, got `{s}`"),
        };
        let ms = |v: &str| v.trim().parse::<u64>().map(|x| x * 1000).map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [v] => Ok(Self::fixed(ms(v)?)),
            ["fixed", v] => Ok(Self::fixed(ms(v)?)),
            ["exp", v] => {
                let base = ms(v)?;
                Ok(Self::exponential(base, base / 10))
            }
            ["exp", v, j] => Ok(Self::exponential(ms(v)?, ms(j)?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpOptions {
    pub view_timeout: ViewTimeoutPolicy,
    pub batch_us: SimTime,
    pub batch_cap: usize,
    /// Defaults to a quarter of the view timeout.
    pub heartbeat_us: Option<SimTime>,
    pub response_bytes: u32,
}

impl Default for MpOptions {
    fn default() -> Self {
        MpOptions {
            view_timeout: ViewTimeoutPolicy::default(),
            batch_us: 5_000,
            batch_cap: 10_000,
            heartbeat_us: None,
            response_bytes: 8,
        }
    }
}

impl MpOptions {
    pub fn heartbeat(&self) -> SimTime {
        self.heartbeat_us
            .unwrap_or(self.view_timeout.base_us / 4)
            .max(1_000)
    }
}

/// A slot value reported in a Promise. Decided slots are reported with
/// `view = u64::MAX` so the candidate keeps them unconditionally.
pub type Reported = (u64, u64, Value);

#[derive(Clone, Debug, PartialEq)]
pub enum MpMessage {
    Prepare {
        view: u64,
        from_slot: u64,
    },
    Promise {
        view: u64,
        accepted: Vec<Reported>,
    },
    Propose {
        view: u64,
        slot: Option<(u64, Value)>,
        decided: Vec<(u64, Digest)>,
    },
    Accept {
        view: u64,
        slot: u64,
    },
    Forward {
        commands: Vec<Command>,
    },
    LearnRequest {
        slots: Vec<u64>,
    },
    Learn {
        entries: Vec<(u64, Value)>,
    },
}

impl Wire for MpMessage {
    fn wire_bytes(&self) -> u64 {
        HEADER_BYTES
            + match self {
                MpMessage::Prepare { .. } => VIEW_BYTES + SLOT_BYTES,
                MpMessage::Promise { accepted, .. } => {
                    VIEW_BYTES
                        + accepted
                            .iter()
                            .map(|(_, _, v)| SLOT_BYTES + VIEW_BYTES + v.wire_bytes())
                            .sum::<u64>()
                }
                MpMessage::Propose { slot, decided, .. } => {
                    VIEW_BYTES
                        + slot
                            .as_ref()
                            .map_or(0, |(_, v)| SLOT_BYTES + v.wire_bytes())
                        + decided.len() as u64 * (SLOT_BYTES + 16)
                }
                MpMessage::Accept { .. } => VIEW_BYTES + SLOT_BYTES,
                MpMessage::Forward { commands } => {
                    commands.iter().map(Command::wire_size).sum::<u64>()
                }
                MpMessage::LearnRequest { slots } => slots.len() as u64 * SLOT_BYTES,
                MpMessage::Learn { entries } => entries
                    .iter()
                    .map(|(_, v)| SLOT_BYTES + v.wire_bytes())
                    .sum::<u64>(),
            }
    }

    fn kind(&self) -> &'static str {
        match self {
            MpMessage::Prepare { .. } => "prepare",
            MpMessage::Promise { .. } => "promise",
            MpMessage::Propose { slot: None, .. } => "heartbeat",
            MpMessage::Propose { .. } => "propose",
            MpMessage::Accept { .. } => "accept",
            MpMessage::Forward { .. } => "forward",
            MpMessage::LearnRequest { .. } => "learn-request",
            MpMessage::Learn { .. } => "learn",
        }
    }
}

impl fmt::Display for MpMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MpMessage::Prepare { view, from_slot } => {
                write!(f, "prepare v={view} from={from_slot}")
            }
            MpMessage::Promise { view, accepted } => {
                write!(f, "promise v={view} slots={}", accepted.len())
            }
            MpMessage::Propose {
                view,
                slot,
                decided,
            } => {
                match slot {
                    Some((s, v)) => write!(f, "propose v={view} s={s} d={}", v.digest())?,
                    None => write!(f, "heartbeat v={view}")?,
                }
                write!(f, " decided={}", decided.len())
            }
            MpMessage::Accept { view, slot } => write!(f, "accept v={view} s={slot}"),
            MpMessage::Forward { commands } => write!(f, "forward n={}", commands.len()),
            MpMessage::LearnRequest { slots } => write!(f, "learn-request n={}", slots.len()),
            MpMessage::Learn { entries } => write!(f, "learn n={}", entries.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Follower,
    Candidate,
    Leader,
}

#[derive(Clone, Debug)]
struct InFlight {
    value: Value,
    acks: BTreeSet<ReplicaId>,
}

#[derive(Clone, Debug)]
pub struct MpReplica {
    id: ReplicaId,
    cfg: ClusterConfig,
    opts: MpOptions,
    rng: ChaCha8Rng,
    view: u64,
    role: Role,
    stable: bool,
    promised: u64,
    accepted: BTreeMap<u64, (u64, Value)>,
    log: DecidedLog,
    next_slot: u64,
    inflight: BTreeMap<u64, InFlight>,
    unannounced: Vec<(u64, Digest)>,
    staged: Vec<Command>,
    votes: BTreeMap<ReplicaId, Vec<Reported>>,
    from_slot: u64,
    outstanding: BTreeMap<RequestId, Command>,
    forward_buf: Vec<Command>,
    forwarded_view: Option<u64>,
    requested: BTreeSet<u64>,
    failed_elections: u32,
    tokens: [u64; 4],
    armed: [bool; 4],
    nonce: u64,
    local: VecDeque<(ReplicaId, MpMessage)>,
    stats: ReplicaStats,
}

impl MpReplica {
    pub fn new(id: ReplicaId, cfg: ClusterConfig, opts: MpOptions, seed: u64) -> Self {
        let leader = id == leader_of(0, cfg.n());
        MpReplica {
            id,
            cfg,
            opts,
            rng: ChaCha8Rng::seed_from_u64(seed),
            view: 0,
            role: if leader { Role::Leader } else { Role::Follower },
            stable: true,
            promised: 0,
            accepted: BTreeMap::new(),
            log: DecidedLog::new(),
            next_slot: 0,
            inflight: BTreeMap::new(),
            unannounced: Vec::new(),
            staged: Vec::new(),
            votes: BTreeMap::new(),
            from_slot: 0,
            outstanding: BTreeMap::new(),
            forward_buf: Vec::new(),
            forwarded_view: Some(0),
            requested: BTreeSet::new(),
            failed_elections: 0,
            tokens: [0; 4],
            armed: [false; 4],
            nonce: 0,
            local: VecDeque::new(),
            stats: ReplicaStats::default(),
        }
    }

    pub fn view(&self) -> View {
        View {
            number: self.view,
            status: if self.stable {
                ViewStatus::Stable
            } else {
                ViewStatus::Electing
            },
        }
    }

    pub fn is_leader(&self) -> bool {
        self.role == Role::Leader
    }

    pub fn leader(&self) -> ReplicaId {
        leader_of(self.view, self.cfg.n())
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }

    fn arm(&mut self, tag: u32, after: SimTime, ctx: &mut Ctx<MpMessage>) {
        let i = tag as usize;
        self.tokens[i] += 1;
        self.armed[i] = true;
        ctx.set_timer(after, tag, self.tokens[i]);
    }

    fn arm_once(&mut self, tag: u32, after: SimTime, ctx: &mut Ctx<MpMessage>) {
        if !self.armed[tag as usize] {
            self.arm(tag, after, ctx);
        }
    }

    fn reset_view_timer(&mut self, ctx: &mut Ctx<MpMessage>) {
        let after = self
            .opts
            .view_timeout
            .draw(self.failed_elections, &mut self.rng);
        self.arm(TAG_VIEW, after, ctx);
    }

    fn broadcast(&mut self, msg: MpMessage, ctx: &mut Ctx<MpMessage>) {
        for r in self.cfg.replicas() {
            if r != self.id {
                ctx.send(r, msg.clone());
            }
        }
        self.local.push_back((self.id, msg));
    }

    fn send_to(&mut self, to: ReplicaId, msg: MpMessage, ctx: &mut Ctx<MpMessage>) {
        if to == self.id {
            self.local.push_back((to, msg));
        } else {
            ctx.send(to, msg);
        }
    }

    fn pump(&mut self, ctx: &mut Ctx<MpMessage>) {
        while let Some((from, msg)) = self.local.pop_front() {
            self.handle(from, msg, ctx);
        }
    }

    fn handle(&mut self, from: ReplicaId, msg: MpMessage, ctx: &mut Ctx<MpMessage>) {
        match msg {
            MpMessage::Prepare { view, from_slot } => self.on_prepare(from, view, from_slot, ctx),
            MpMessage::Promise { view, accepted } => self.on_promise(from, view, accepted, ctx),
            MpMessage::Propose {
                view,
                slot,
                decided,
            } => self.on_propose(from, view, slot, decided, ctx),
            MpMessage::Accept { view, slot } => self.on_accept(from, view, slot, ctx),
            MpMessage::Forward { commands } => {
                if self.role == Role::Leader && self.stable {
                    self.stage(commands, ctx);
                } else {
                    ctx.note("drop-forward", format_args!("n={}", commands.len()));
                }
            }
            MpMessage::LearnRequest { slots } => {
                let entries: Vec<(u64, Value)> = slots
                    .into_iter()
                    .filter_map(|s| self.log.decision(s).map(|v| (s, v.clone())))
                    .collect();
                if !entries.is_empty() {
                    self.send_to(from, MpMessage::Learn { entries }, ctx);
                }
            }
            MpMessage::Learn { entries } => {
                for (s, v) in entries {
                    self.learn(s, &v, ctx);
                }
                self.apply(ctx);
            }
        }
    }

    fn stage(&mut self, commands: Vec<Command>, ctx: &mut Ctx<MpMessage>) {
        let log = &self.log;
        self.staged
            .extend(commands.into_iter().filter(|c| !log.is_applied(c.id)));
        if !self.staged.is_empty() {
            self.arm_once(TAG_BATCH, self.opts.batch_us, ctx);
        }
    }

    /// Moves to `view` as a follower of its leader.
    fn adopt_view(&mut self, view: u64, stable: bool, ctx: &mut Ctx<MpMessage>) {
        if self.role == Role::Leader && view > self.view {
            ctx.note("deposed", format_args!("v={} by={view}", self.view));
            self.inflight.clear();
            self.staged.clear();
            self.unannounced.clear();
        }
        let changed = view != self.view || self.stable != stable;
        self.view = view;
        self.promised = self.promised.max(view);
        self.role = Role::Follower;
        self.stable = stable;
        self.votes.clear();
        if changed && stable {
            self.failed_elections = 0;
            self.requested.clear();
        }
    }

    fn on_prepare(&mut self, from: ReplicaId, view: u64, from_slot: u64, ctx: &mut Ctx<MpMessage>) {
        if view < self.promised || (view == self.promised && from != self.id && view <= self.view) {
            return;
        }
        if view > self.view {
            self.adopt_view(view, false, ctx);
        }
        self.promised = view;
        let mut accepted: Vec<Reported> = self
            .accepted
            .range(from_slot..)
            .filter(|(s, _)| !self.log.is_decided(**s))
            .map(|(s, (v, val))| (*s, *v, val.clone()))
            .collect();
        if let Some(top) = self.log.highest_known() {
            for s in from_slot..=top {
                if let Some(d) = self.log.decision(s) {
                    accepted.push((s, u64::MAX, d.clone()));
                }
            }
        }
        if from != self.id {
            self.reset_view_timer(ctx);
        }
        self.send_to(from, MpMessage::Promise { view, accepted }, ctx);
    }

    fn on_promise(
        &mut self,
        from: ReplicaId,
        view: u64,
        accepted: Vec<Reported>,
        ctx: &mut Ctx<MpMessage>,
    ) {
        if self.role != Role::Candidate || view != self.view {
            return;
        }
        self.votes.insert(from, accepted);
        if self.votes.len() < self.cfg.quorum() {
            return;
        }
        let mut merged: BTreeMap<u64, (u64, Value)> = BTreeMap::new();
        for (slot, v, val) in std::mem::take(&mut self.votes).into_values().flatten() {
            match merged.get(&slot) {
                Some((best, _)) if *best >= v => {}
                _ => {
                    merged.insert(slot, (v, val));
                }
            }
        }
        let top = merged
            .keys()
            .next_back()
            .copied()
            .into_iter()
            .chain(self.log.highest_known())
            .max();
        self.role = Role::Leader;
        self.stable = true;
        self.failed_elections = 0;
        self.requested.clear();
        self.stats.leaderships.push(ctx.now());
        self.next_slot = top.map_or(self.from_slot, |t| (t + 1).max(self.from_slot));
        ctx.note(
            "leader",
            format_args!(
                "v={} recovered={} next={}",
                self.view,
                merged.len(),
                self.next_slot
            ),
        );
        for slot in self.from_slot..self.next_slot {
            let value = match (self.log.decision(slot), merged.remove(&slot)) {
                (Some(d), _) => d.clone(),
                (None, Some((_, v))) => v,
                (None, None) => {
                    self.nonce += 1;
                    Value::from_commands(self.id, self.nonce, Vec::new())
                }
            };
            self.propose(slot, value, ctx);
        }
        let mine: Vec<Command> = self.outstanding.values().copied().collect();
        self.forward_buf.clear();
        self.forwarded_view = Some(self.view);
        self.stage(mine, ctx);
        self.armed[TAG_VIEW as usize] = false;
        self.tokens[TAG_VIEW as usize] += 1;
        self.arm(TAG_HEARTBEAT, self.opts.heartbeat(), ctx);
    }

    fn propose(&mut self, slot: u64, value: Value, ctx: &mut Ctx<MpMessage>) {
        self.stats.proposals += 1;
        self.inflight.insert(
            slot,
            InFlight {
                value: value.clone(),
                acks: BTreeSet::new(),
            },
        );
        let decided = std::mem::take(&mut self.unannounced);
        let msg = MpMessage::Propose {
            view: self.view,
            slot: Some((slot, value)),
            decided,
        };
        self.broadcast(msg, ctx);
    }

    fn on_propose(
        &mut self,
        from: ReplicaId,
        view: u64,
        slot: Option<(u64, Value)>,
        decided: Vec<(u64, Digest)>,
        ctx: &mut Ctx<MpMessage>,
    ) {
        if view < self.promised {
            return;
        }
        if from != self.id {
            if view > self.view || !self.stable || self.role != Role::Follower {
                self.adopt_view(view, true, ctx);
            }
            self.promised = view;
            self.reset_view_timer(ctx);
            if self.forwarded_view != Some(view) {
                self.forwarded_view = Some(view);
                self.forward_buf = self.outstanding.values().copied().collect();
                if !self.forward_buf.is_empty() {
                    self.arm_once(TAG_FORWARD, self.opts.batch_us, ctx);
                }
            }
        }
        if let Some((s, value)) = slot {
            if !self.log.is_decided(s) {
                self.accepted.insert(s, (view, value));
            }
            self.send_to(from, MpMessage::Accept { view, slot: s }, ctx);
        }
        if from == self.id {
            return;
        }
        let mut missing = Vec::new();
        for (s, d) in decided {
            match self.accepted.get(&s) {
                Some((_, v)) if v.digest() == d => {
                    let v = v.clone();
                    self.learn(s, &v, ctx);
                }
                _ if self.log.is_decided(s) => {}
                _ => missing.push(s),
            }
        }
        if let Some(top) = self.log.highest_known() {
            for s in self.log.next_index()..top {
                if !self.log.is_decided(s) && !missing.contains(&s) {
                    missing.push(s);
                }
            }
        }
        missing.retain(|s| self.requested.insert(*s));
        if !missing.is_empty() {
            missing.sort_unstable();
            self.send_to(from, MpMessage::LearnRequest { slots: missing }, ctx);
        }
        self.apply(ctx);
    }

    fn on_accept(&mut self, from: ReplicaId, view: u64, slot: u64, ctx: &mut Ctx<MpMessage>) {
        if self.role != Role::Leader || view != self.view {
            return;
        }
        let Some(f) = self.inflight.get_mut(&slot) else {
            return;
        };
        f.acks.insert(from);
        if f.acks.len() < self.cfg.quorum() {
            return;
        }
        let value = self.inflight.remove(&slot).expect("present").value;
        if self.learn(slot, &value, ctx) {
            self.unannounced.push((slot, value.digest()));
            self.arm_once(TAG_BATCH, self.opts.batch_us, ctx);
        }
        self.apply(ctx);
    }

    fn learn(&mut self, slot: u64, value: &Value, ctx: &mut Ctx<MpMessage>) -> bool {
        match self.log.record(slot, value) {
            LearnOutcome::Decided => {
                ctx.note("decide", format_args!("s={slot} v={}", value.digest()));
                self.accepted.remove(&slot);
                true
            }
            LearnOutcome::AlreadyDecided => false,
            LearnOutcome::Conflict => {
                self.stats.conflicts += 1;
                ctx.note("conflict", format_args!("s={slot}"));
                false
            }
        }
    }

    fn apply(&mut self, ctx: &mut Ctx<MpMessage>) {
        let me = self.id;
        let mut replies: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        let outstanding = &mut self.outstanding;
        let own = &mut self.stats.own_commits;
        self.log.apply_ready(|cmd, _| {
            if cmd.ingress == me {
                outstanding.remove(&cmd.id);
                replies.entry(cmd.id.client).or_default().push(cmd.id.seq);
                *own += 1;
            }
        });
        let q = self.opts.response_bytes as u64;
        for (client, seqs) in replies {
            let bytes = HEADER_BYTES + q * seqs.len() as u64;
            ctx.reply(Reply {
                client,
                seqs,
                bytes,
            });
        }
    }

    fn on_batch(&mut self, ctx: &mut Ctx<MpMessage>) {
        if self.role != Role::Leader || !self.stable {
            return;
        }
        if !self.staged.is_empty() {
            let take = self.staged.len().min(self.opts.batch_cap);
            let cmds: Vec<Command> = self.staged.drain(..take).collect();
            self.nonce += 1;
            let value = Value::from_commands(self.id, self.nonce, cmds);
            let slot = self.next_slot;
            self.next_slot += 1;
            self.propose(slot, value, ctx);
            if !self.staged.is_empty() {
                self.arm(TAG_BATCH, self.opts.batch_us, ctx);
            }
        } else if !self.unannounced.is_empty() {
            self.heartbeat(ctx);
        } else {
            return;
        }
        self.arm(TAG_HEARTBEAT, self.opts.heartbeat(), ctx);
    }

    fn heartbeat(&mut self, ctx: &mut Ctx<MpMessage>) {
        let decided = std::mem::take(&mut self.unannounced);
        let msg = MpMessage::Propose {
            view: self.view,
            slot: None,
            decided,
        };
        self.broadcast(msg, ctx);
    }

    fn on_view_timeout(&mut self, ctx: &mut Ctx<MpMessage>) {
        if self.role == Role::Leader {
            return;
        }
        if self.role == Role::Candidate {
            self.failed_elections += 1;
        }
        let view = next_owned_view(self.view.max(self.promised), self.id, self.cfg.n());
        ctx.note(
            "campaign",
            format_args!("v={view} failed={}", self.failed_elections),
        );
        self.stats.elections.push(ctx.now());
        self.view = view;
        self.role = Role::Candidate;
        self.stable = false;
        self.votes.clear();
        self.from_slot = self.log.next_index();
        self.reset_view_timer(ctx);
        let from_slot = self.from_slot;
        self.broadcast(MpMessage::Prepare { view, from_slot }, ctx);
    }
}

impl Replica for MpReplica {
    type Msg = MpMessage;

    fn id(&self) -> ReplicaId {
        self.id
    }

    fn on_start(&mut self, ctx: &mut Ctx<MpMessage>) {
        if self.role == Role::Leader {
            self.stats.leaderships.push(ctx.now());
            self.arm(TAG_HEARTBEAT, self.opts.heartbeat(), ctx);
            self.heartbeat(ctx);
        } else {
            self.reset_view_timer(ctx);
        }
        self.pump(ctx);
    }

    fn on_message(&mut self, from: ReplicaId, msg: MpMessage, ctx: &mut Ctx<MpMessage>) {
        self.handle(from, msg, ctx);
        self.pump(ctx);
    }

    fn on_timer(&mut self, tag: u32, token: u64, ctx: &mut Ctx<MpMessage>) {
        if self.tokens.get(tag as usize) != Some(&token) {
            return;
        }
        self.armed[tag as usize] = false;
        match tag {
            TAG_BATCH => self.on_batch(ctx),
            TAG_FORWARD => {
                let log = &self.log;
                let cmds: Vec<Command> = std::mem::take(&mut self.forward_buf)
                    .into_iter()
                    .filter(|c| !log.is_applied(c.id))
                    .collect();
                if !cmds.is_empty() {
                    if self.stable && self.role == Role::Follower {
                        let leader = self.leader();
                        self.send_to(leader, MpMessage::Forward { commands: cmds }, ctx);
                    } else if self.role == Role::Leader {
                        self.stage(cmds, ctx);
                    }
                }
            }
            TAG_HEARTBEAT => {
                if self.role == Role::Leader {
                    self.heartbeat(ctx);
                    self.arm(TAG_HEARTBEAT, self.opts.heartbeat(), ctx);
                }
            }
            TAG_VIEW => self.on_view_timeout(ctx),
            _ => {}
        }
        self.pump(ctx);
    }

    fn on_requests(&mut self, commands: Vec<Command>, ctx: &mut Ctx<MpMessage>) {
        for c in &commands {
            self.outstanding.insert(c.id, *c);
        }
        match self.role {
            Role::Leader if self.stable => self.stage(commands, ctx),
            Role::Follower if self.stable => {
                self.forward_buf.extend(commands);
                self.arm_once(TAG_FORWARD, self.opts.batch_us, ctx);
            }
            _ => {}
        }
    }

    fn decided(&self) -> &DecidedLog {
        &self.log
    }

    fn stats(&self) -> ReplicaStats {
        self.stats.clone()
    }

    fn stable_leader(&self) -> Option<(u64, ReplicaId)> {
        (self.stable).then(|| (self.view, self.leader()))
    }

    fn dump_state(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "replica {} role={:?} view={} stable={} promised={} next_index={} inflight={} \
             outstanding={} elections={}",
            self.id,
            self.role,
            self.view,
            self.stable,
            self.promised,
            self.log.next_index(),
            self.inflight.len(),
            self.outstanding.len(),
            self.stats.elections.len(),
        );
        for (s, (v, val)) in self.accepted.iter().take(16) {
            let _ = writeln!(out, "  accepted s={s} v={v} d={}", val.digest());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leader_rotation_and_owned_views() {
        assert_eq!(leader_of(7, 5), ReplicaId(2));
        assert_eq!(next_owned_view(0, ReplicaId(3), 5), 3);
        assert_eq!(next_owned_view(3, ReplicaId(3), 5), 8);
        assert_eq!(next_owned_view(4, ReplicaId(0), 5), 5);
        for after in 0..20 {
            for me in 0..5u16 {
                let v = next_owned_view(after, ReplicaId(me), 5);
                assert!(v > after && v <= after + 5);
                assert_eq!(leader_of(v, 5), ReplicaId(me));
            }
        }
    }

    #[test]
    fn higher_candidate_view_wins_the_tie() {
        let a = next_owned_view(0, ReplicaId(1), 5);
        let b = next_owned_view(0, ReplicaId(4), 5);
        assert!(b > a);
    }

    #[test]
    fn exponential_policy_doubles() {
        let p = ViewTimeoutPolicy::exponential(1_000_000, 0);
        assert_eq!(p.ceiling(3), 8 * p.ceiling(0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.draw(3, &mut rng), 8_000_000);
        let f = ViewTimeoutPolicy::fixed(5_000_000);
        assert_eq!(f.ceiling(7), 5_000_000);
    }

    #[test]
    fn policy_parses() {
        assert_eq!(
            "5000".parse::<ViewTimeoutPolicy>().unwrap(),
            ViewTimeoutPolicy::fixed(5_000_000)
        );
        assert_eq!(
            "exp:1000:100".parse::<ViewTimeoutPolicy>().unwrap(),
            ViewTimeoutPolicy::exponential(1_000_000, 100_000)
        );
        assert!("soon".parse::<ViewTimeoutPolicy>().is_err());
    }
}
