use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::command::{Batch, Command};
use super::log::{DecidedLog, ReplicatedLog};
use crate::backoff::{BackoffState, RttEstimate, Scheme};
use crate::error::Result;
use crate::protocol::{
    Accept, ClusterConfig, DecisionOutcome, Learn, LearnOutcome, Phase, Prepare, Promise, Propose,
    ProposerSession, ProtocolMessage, ReplicaId, ShowTry, TryNumber, Value,
};
use crate::simnet::{Ctx, Replica, ReplicaStats, Reply, SimTime, HEADER_BYTES};

pub const TAG_BATCH: u32 = 0;
pub const TAG_PHASE: u32 = 1;
pub const TAG_BACKOFF: u32 = 2;
pub const TAG_CATCHUP: u32 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaxosOptions {
    pub piggyback: bool,
    /// Carry a decision on the winner's next Propose instead of a separate Learn.
    pub piggyback_learn: bool,
    pub scheme: Scheme,
    pub batch_us: SimTime,
    pub batch_cap: usize,
    pub rtt_prior_us: SimTime,
    pub min_phase_timeout_us: SimTime,
    pub response_bytes: u32,
}

impl Default for BaxosOptions {
    fn default() -> Self {
        BaxosOptions {
            piggyback: true,
            piggyback_learn: false,
            scheme: Scheme::Baxos,
            batch_us: 5_000,
            batch_cap: 10_000,
            rtt_prior_us: 250_000,
            min_phase_timeout_us: 10_000,
            response_bytes: 8,
        }
    }
}

type PromiseSet = BTreeMap<ReplicaId, Option<(TryNumber, Value)>>;

#[derive(Clone, Debug)]
struct Active {
    session: ProposerSession,
    phase_start: SimTime,
    /// Whether the in-flight Propose carried a piggybacked Prepare.
    piggybacked: bool,
}

/// Promises gathered for the next choice through piggybacked Prepares.
#[derive(Clone, Debug)]
struct Armed {
    choice: u64,
    try_: TryNumber,
    promises: PromiseSet,
    valid: bool,
}

/// A Baxos replica: acceptor, learner, and a proposer that serializes its
/// client batches through one session at a time.
#[derive(Clone, Debug)]
pub struct BaxosReplica {
    id: ReplicaId,
    cfg: ClusterConfig,
    opts: BaxosOptions,
    log: ReplicatedLog,
    backoff: BackoffState,
    rtt: RttEstimate,
    staged: Vec<Command>,
    staged_timer: bool,
    queue: VecDeque<Batch>,
    carry: Vec<Command>,
    session: Option<Active>,
    backing_off: bool,
    armed: Option<Armed>,
    tokens: [u64; 4],
    catchup_armed: bool,
    nonce: u64,
    local: VecDeque<(ReplicaId, ProtocolMessage)>,
    /// Own decision waiting to ride on the next fast-path Propose.
    pending_learn: Option<Learn>,
    stats: ReplicaStats,
}

impl BaxosReplica {
    pub fn new(id: ReplicaId, cfg: ClusterConfig, opts: BaxosOptions, seed: u64) -> Result<Self> {
        let rtt = RttEstimate::new(id, cfg.n(), Duration::from_micros(opts.rtt_prior_us))?;
        Ok(BaxosReplica {
            id,
            cfg,
            backoff: BackoffState::new(opts.scheme, seed),
            opts,
            log: ReplicatedLog::new(),
            rtt,
            staged: Vec::new(),
            staged_timer: false,
            queue: VecDeque::new(),
            carry: Vec::new(),
            session: None,
            backing_off: false,
            armed: None,
            tokens: [0; 4],
            catchup_armed: false,
            nonce: 0,
            local: VecDeque::new(),
            pending_learn: None,
            stats: ReplicaStats::default(),
        })
    }

    pub fn log(&self) -> &ReplicatedLog {
        &self.log
    }

    pub fn backoff(&self) -> &BackoffState {
        &self.backoff
    }

    pub fn rtt(&self) -> &RttEstimate {
        &self.rtt
    }

    pub fn phase(&self) -> Phase {
        self.session
            .as_ref()
            .map_or(Phase::Idle, |a| a.session.phase)
    }

    pub fn session_choice(&self) -> Option<u64> {
        self.session.as_ref().map(|a| a.session.choice)
    }

    pub fn is_backing_off(&self) -> bool {
        self.backing_off
    }

    /// Commands waiting for a session: carried over plus queued batches.
    pub fn pending_commands(&self) -> usize {
        self.carry.len() + self.queue.iter().map(Batch::len).sum::<usize>() + self.staged.len()
    }

    fn phase_timeout(&self) -> SimTime {
        let rtt = self.rtt.current().as_micros() as SimTime;
        (2 * rtt).max(self.opts.min_phase_timeout_us)
    }

    fn arm_timer(&mut self, tag: u32, after: SimTime, ctx: &mut Ctx<ProtocolMessage>) {
        self.tokens[tag as usize] += 1;
        ctx.set_timer(after, tag, self.tokens[tag as usize]);
    }

    fn cancel_timer(&mut self, tag: u32) {
        self.tokens[tag as usize] += 1;
    }

    fn broadcast(&mut self, msg: ProtocolMessage, ctx: &mut Ctx<ProtocolMessage>) {
        for r in self.cfg.replicas() {
            if r != self.id {
                ctx.send(r, msg.clone());
            }
        }
        self.local.push_back((self.id, msg));
    }

    fn send_to(&mut self, to: ReplicaId, msg: ProtocolMessage, ctx: &mut Ctx<ProtocolMessage>) {
        if to == self.id {
            self.local.push_back((to, msg));
        } else {
            ctx.send(to, msg);
        }
    }

    fn pump(&mut self, ctx: &mut Ctx<ProtocolMessage>) {
        while let Some((from, msg)) = self.local.pop_front() {
            self.handle(from, msg, ctx);
        }
    }

    /// Builds the piggybacked Prepare for `choice` and arms its promise set.
    fn next_piggyback(&mut self, choice: u64) -> Option<Prepare> {
        if !self.opts.piggyback || self.log.decided().is_decided(choice) {
            self.armed = None;
            return None;
        }
        let st = self.log.choice_mut(choice);
        let try_ = TryNumber::next_after(st.promised_try, st.proposed_try, self.id);
        st.proposed_try = Some(try_);
        self.armed = Some(Armed {
            choice,
            try_,
            promises: BTreeMap::new(),
            valid: true,
        });
        Some(Prepare { choice, try_ })
    }

    /// Starts a session if the proposer is free and has work.
    fn try_start(&mut self, ctx: &mut Ctx<ProtocolMessage>) {
        if self.session.is_some() || self.backing_off {
            return;
        }
        let mut cmds = std::mem::take(&mut self.carry);
        while let Some(b) = self.queue.front() {
            if !cmds.is_empty() && cmds.len() + b.len() > self.opts.batch_cap {
                break;
            }
            cmds.extend(self.queue.pop_front().expect("front exists").commands);
        }
        let decided = self.log.decided();
        cmds.retain(|c| !decided.is_applied(c.id));
        if cmds.is_empty() {
            return;
        }
        let choice = self.log.next_open_choice();
        self.nonce += 1;
        let command = Value::from_commands(self.id, self.nonce, cmds);
        self.stats.proposals += 1;

        let fast = self.armed.take().filter(|a| {
            a.valid
                && a.choice == choice
                && a.promises.len() >= self.cfg.quorum()
                && self.log.choice(choice).and_then(|s| s.promised_try) == Some(a.try_)
        });
        let now = ctx.now();
        if let Some(armed) = fast {
            let piggy = self.next_piggyback(choice + 1);
            let piggybacked = piggy.is_some();
            let (session, mut propose) =
                ProposerSession::from_promises(choice, armed.try_, command, armed.promises, piggy);
            propose.learn = self.pending_learn.take();
            self.stats.fast_path += 1;
            ctx.note("session", format_args!("c={choice} t={} fast", armed.try_));
            self.session = Some(Active {
                session,
                phase_start: now,
                piggybacked,
            });
            self.broadcast(ProtocolMessage::Propose(propose), ctx);
        } else {
            let st = self.log.choice_mut(choice);
            let try_ = TryNumber::next_after(st.promised_try, st.proposed_try, self.id);
            st.proposed_try = Some(try_);
            let (session, prepare) = ProposerSession::start(choice, try_, command);
            ctx.note("session", format_args!("c={choice} t={try_}"));
            self.session = Some(Active {
                session,
                phase_start: now,
                piggybacked: false,
            });
            self.broadcast(ProtocolMessage::Prepare(prepare), ctx);
        }
        let after = self.phase_timeout();
        self.arm_timer(TAG_PHASE, after, ctx);
    }

    fn handle(&mut self, from: ReplicaId, msg: ProtocolMessage, ctx: &mut Ctx<ProtocolMessage>) {
        match msg {
            ProtocolMessage::Prepare(p) => self.on_prepare(from, p, ctx),
            ProtocolMessage::Promise(p) => self.on_promise(from, p, ctx),
            ProtocolMessage::Propose(p) => self.on_propose(from, p, ctx),
            ProtocolMessage::Accept(a) => self.on_accept(from, a, ctx),
            ProtocolMessage::Learn(l) => self.on_learn(l, ctx),
        }
    }

    /// Acceptor side of phase one for a single Prepare, shared by standalone
    /// and piggybacked Prepares.
    fn grant_prepare(&mut self, from: ReplicaId, p: &Prepare) -> Option<Promise> {
        if let Some(a) = &mut self.armed {
            if a.choice == p.choice && from != self.id && Some(p.try_) > Some(a.try_) {
                a.valid = false;
            }
        }
        self.log.choice_mut(p.choice).on_prepare(p)
    }

    fn on_prepare(&mut self, from: ReplicaId, p: Prepare, ctx: &mut Ctx<ProtocolMessage>) {
        if let Some(v) = self.log.decided().decision(p.choice).cloned() {
            if from != self.id {
                let learn = Learn {
                    choice: p.choice,
                    value: v,
                };
                self.send_to(from, ProtocolMessage::Learn(learn), ctx);
            }
            return;
        }
        if let Some(promise) = self.grant_prepare(from, &p) {
            self.send_to(from, ProtocolMessage::Promise(promise), ctx);
        }
    }

    fn sample_rtt(&mut self, from: ReplicaId, now: SimTime) {
        if from == self.id {
            return;
        }
        if let Some(a) = &self.session {
            let sample = now.saturating_sub(a.phase_start).max(1);
            let _ = self.rtt.observe(from, Duration::from_micros(sample));
        }
    }

    fn on_promise(&mut self, from: ReplicaId, p: Promise, ctx: &mut Ctx<ProtocolMessage>) {
        if let Some(a) = &mut self.armed {
            if a.choice == p.choice && a.try_ == p.try_ {
                a.promises.insert(from, p.accepted.clone());
                return;
            }
        }
        let Some(active) = &mut self.session else {
            return;
        };
        if !active.session.record_promise(from, &p) {
            return;
        }
        self.sample_rtt(from, ctx.now());
        let active = self.session.as_ref().expect("session checked above");
        if active.session.promise_count() < self.cfg.quorum() {
            return;
        }
        let choice = active.session.choice;
        let piggy = self.next_piggyback(choice + 1);
        let piggybacked = piggy.is_some();
        let active = self.session.as_mut().expect("session checked above");
        if let Some(propose) = active.session.on_promise_quorum(&self.cfg, piggy) {
            active.phase_start = ctx.now();
            active.piggybacked = piggybacked;
            self.broadcast(ProtocolMessage::Propose(propose), ctx);
            let after = self.phase_timeout();
            self.arm_timer(TAG_PHASE, after, ctx);
        }
    }

    fn on_propose(&mut self, from: ReplicaId, mut p: Propose, ctx: &mut Ctx<ProtocolMessage>) {
        let learn = p.learn.take();
        self.answer_propose(from, p, ctx);
        if let Some(l) = learn {
            self.on_learn(l, ctx);
        }
    }

    fn answer_propose(&mut self, from: ReplicaId, p: Propose, ctx: &mut Ctx<ProtocolMessage>) {
        if let Some(v) = self.log.decided().decision(p.choice).cloned() {
            if from != self.id {
                let learn = Learn {
                    choice: p.choice,
                    value: v,
                };
                self.send_to(from, ProtocolMessage::Learn(learn), ctx);
            }
            return;
        }
        let accepted = self.log.choice_mut(p.choice).on_propose(&p);
        let embedded = p.piggyback.as_ref().and_then(|pp| {
            if self.log.decided().is_decided(pp.choice) {
                None
            } else {
                self.grant_prepare(from, pp)
            }
        });
        match accepted {
            Some(mut accept) => {
                accept.piggyback = embedded;
                self.send_to(from, ProtocolMessage::Accept(accept), ctx);
            }
            None => {
                if let Some(promise) = embedded {
                    self.send_to(from, ProtocolMessage::Promise(promise), ctx);
                }
            }
        }
    }

    fn on_accept(&mut self, from: ReplicaId, a: Accept, ctx: &mut Ctx<ProtocolMessage>) {
        let Some(active) = &mut self.session else {
            return;
        };
        if active.piggybacked {
            if let Some(armed) = &mut self.armed {
                if armed.choice == a.choice + 1 && a.accepted_try == active.session.try_ {
                    match &a.piggyback {
                        Some(pm) if pm.choice == armed.choice && pm.try_ == armed.try_ => {
                            armed.promises.insert(from, pm.accepted.clone());
                        }
                        _ => armed.valid = false,
                    }
                }
            }
        }
        if !active.session.record_accept(from, &a) {
            return;
        }
        self.sample_rtt(from, ctx.now());
        let active = self.session.as_mut().expect("session checked above");
        if active.session.accept_count() < self.cfg.quorum() {
            return;
        }
        let choice = active.session.choice;
        let state = self.log.choice_mut(choice);
        let Some((outcome, learn)) = active.session.on_accept_quorum(state, &self.cfg) else {
            return;
        };
        self.log.decided_mut().record(choice, &learn.value);
        self.backoff.on_success();
        ctx.note(
            "decide",
            format_args!("c={choice} v={} via=accept", learn.value.digest()),
        );
        let session = self.session.take().expect("session checked above").session;
        self.cancel_timer(TAG_PHASE);
        self.finish(session, outcome, ctx);
        if self.opts.piggyback_learn {
            self.pending_learn = Some(learn);
        } else {
            for r in self.cfg.replicas() {
                if r != self.id {
                    ctx.send(r, ProtocolMessage::Learn(learn.clone()));
                }
            }
        }
        self.after_decision(ctx);
        if let Some(learn) = self.pending_learn.take() {
            for r in self.cfg.replicas() {
                if r != self.id {
                    ctx.send(r, ProtocolMessage::Learn(learn.clone()));
                }
            }
        }
    }

    fn finish(
        &mut self,
        session: ProposerSession,
        outcome: DecisionOutcome,
        ctx: &mut Ctx<ProtocolMessage>,
    ) {
        match outcome {
            DecisionOutcome::OwnCommandDecided { .. } => self.stats.own_commits += 1,
            DecisionOutcome::ForeignValueDecided { .. } => {
                ctx.note("lost", format_args!("c={}", session.choice));
                self.carry = session.command.commands().to_vec();
            }
        }
    }

    fn on_learn(&mut self, l: Learn, ctx: &mut Ctx<ProtocolMessage>) {
        match self.log.learn(l.choice, &l.value) {
            LearnOutcome::Conflict => {
                self.stats.conflicts += 1;
                ctx.note("conflict", format_args!("c={}", l.choice));
                return;
            }
            LearnOutcome::AlreadyDecided => return,
            LearnOutcome::Decided => {}
        }
        ctx.note(
            "decide",
            format_args!("c={} v={} via=learn", l.choice, l.value.digest()),
        );
        if let Some(active) = &self.session {
            if active.session.choice == l.choice {
                let session = self.session.take().expect("session checked above").session;
                self.cancel_timer(TAG_PHASE);
                let outcome = if l.value == session.command {
                    DecisionOutcome::OwnCommandDecided {
                        newly_decided: true,
                    }
                } else {
                    DecisionOutcome::ForeignValueDecided {
                        decided: l.value.clone(),
                        newly_decided: true,
                    }
                };
                self.finish(session, outcome, ctx);
            }
        }
        self.after_decision(ctx);
    }

    /// Applies the ready prefix, answers local clients and moves on.
    fn after_decision(&mut self, ctx: &mut Ctx<ProtocolMessage>) {
        let me = self.id;
        let mut replies: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        self.log.decided_mut().apply_ready(|cmd, _| {
            if cmd.ingress == me {
                replies.entry(cmd.id.client).or_default().push(cmd.id.seq);
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
        if self.log.decided().has_gap() && !self.catchup_armed {
            self.catchup_armed = true;
            let after = self.phase_timeout();
            self.arm_timer(TAG_CATCHUP, after, ctx);
        }
        self.try_start(ctx);
    }

    fn on_phase_timeout(&mut self, ctx: &mut Ctx<ProtocolMessage>) {
        let Some(mut active) = self.session.take() else {
            return;
        };
        let Some(req) = active.session.on_phase_timeout() else {
            return;
        };
        self.backoff.on_retry();
        self.stats.retries += 1;
        self.carry = req.command.commands().to_vec();
        let wait = self
            .backoff
            .draw(self.rtt.current())
            .map(|d| d.as_micros() as SimTime)
            .unwrap_or(self.opts.min_phase_timeout_us);
        ctx.note(
            "timeout",
            format_args!(
                "c={} l={} backoff_us={wait}",
                req.choice,
                self.backoff.retries()
            ),
        );
        self.backing_off = true;
        self.arm_timer(TAG_BACKOFF, wait, ctx);
    }

    /// Re-runs phase one on the first missing position so that acceptors
    /// which already know the decision answer with a Learn.
    fn on_catchup(&mut self, ctx: &mut Ctx<ProtocolMessage>) {
        self.catchup_armed = false;
        if !self.log.decided().has_gap() {
            return;
        }
        let gap = self.log.decided().next_index();
        let st = self.log.choice_mut(gap);
        let try_ = TryNumber::next_after(st.promised_try, st.proposed_try, self.id);
        st.proposed_try = Some(try_);
        ctx.note("catchup", format_args!("c={gap} t={try_}"));
        for r in self.cfg.replicas() {
            if r != self.id {
                ctx.send(r, ProtocolMessage::Prepare(Prepare { choice: gap, try_ }));
            }
        }
        self.catchup_armed = true;
        let after = self.phase_timeout();
        self.arm_timer(TAG_CATCHUP, after, ctx);
    }
}

impl Replica for BaxosReplica {
    type Msg = ProtocolMessage;

    fn id(&self) -> ReplicaId {
        self.id
    }

    fn on_start(&mut self, _ctx: &mut Ctx<ProtocolMessage>) {}

    fn on_message(
        &mut self,
        from: ReplicaId,
        msg: ProtocolMessage,
        ctx: &mut Ctx<ProtocolMessage>,
    ) {
        self.handle(from, msg, ctx);
        self.pump(ctx);
    }

    fn on_timer(&mut self, tag: u32, token: u64, ctx: &mut Ctx<ProtocolMessage>) {
        if self.tokens.get(tag as usize) != Some(&token) {
            return;
        }
        match tag {
            TAG_BATCH => {
                self.staged_timer = false;
                if let Some(b) = Batch::new(std::mem::take(&mut self.staged), ctx.now()) {
                    self.queue.push_back(b);
                }
                self.try_start(ctx);
            }
            TAG_PHASE => self.on_phase_timeout(ctx),
            TAG_BACKOFF => {
                self.backing_off = false;
                self.try_start(ctx);
            }
            TAG_CATCHUP => self.on_catchup(ctx),
            _ => {}
        }
        self.pump(ctx);
    }

    fn on_requests(&mut self, commands: Vec<Command>, ctx: &mut Ctx<ProtocolMessage>) {
        self.staged.extend(commands);
        if !self.staged_timer && !self.staged.is_empty() {
            self.staged_timer = true;
            self.arm_timer(TAG_BATCH, self.opts.batch_us, ctx);
        }
    }

    fn decided(&self) -> &DecidedLog {
        self.log.decided()
    }

    fn stats(&self) -> ReplicaStats {
        self.stats.clone()
    }

    fn dump_state(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "replica {} phase={:?} session_choice={} retries={} rtt_ms={:.1} backing_off={} \
             last_decided={} pending={}",
            self.id,
            self.phase(),
            self.session_choice().map_or("-".into(), |c| c.to_string()),
            self.backoff.retries(),
            self.rtt.current().as_secs_f64() * 1e3,
            self.backing_off,
            self.log
                .last_decided_choice()
                .map_or("-".into(), |c| c.to_string()),
            self.pending_commands(),
        );
        for st in self.log.choices() {
            let _ = writeln!(out, "  {st}");
        }
        if let Some(a) = &self.armed {
            let _ = writeln!(
                out,
                "  armed c={} t={} promises={} valid={}",
                a.choice,
                ShowTry(Some(a.try_)),
                a.promises.len(),
                a.valid
            );
        }
        out
    }
}
