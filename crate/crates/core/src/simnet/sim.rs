use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attack::{ActiveAttack, AttackKind, AttackSchedule, Targeting};
use super::latency::LatencyMatrix;
use super::replica::{Ctx, Replica, Reply, Wire};
use super::trace::Trace;
use super::{derive_seed, CpuModel, SimTime, SynchronyModel, HEADER_BYTES, US_PER_MS};
use crate::error::{Error, Result};
use crate::multichoice::Command;
use crate::protocol::ReplicaId;
use crate::workload::{ClientGen, ClientSpec, RequestRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceLevel {
    /// Protocol notes, timers, crashes and attack transitions.
    #[default]
    Events,
    /// Additionally every delivered protocol message.
    Messages,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub latency: LatencyMatrix,
    pub synchrony: SynchronyModel,
    pub cpu: CpuModel,
    pub attacks: Vec<AttackSchedule>,
    pub crashes: Vec<(SimTime, ReplicaId)>,
    pub clients: Vec<ClientSpec>,
    pub client_timeout_us: SimTime,
    pub horizon_us: SimTime,
    pub seed: u64,
    pub trace_level: TraceLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Replica(ReplicaId),
    Client(u32),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Replica(r) => write!(f, "{r}"),
            Endpoint::Client(c) => write!(f, "c{c}"),
        }
    }
}

/// Byte accounting over every transmission, client legs included.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub to_crashed: u64,
    pub retransmissions: u64,
    pub egress: Vec<u64>,
    pub ingress: Vec<u64>,
}

/// A resolved attack transition, for reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub time: SimTime,
    pub attack: usize,
    pub victim: Option<ReplicaId>,
    pub start: bool,
}

#[derive(Debug)]
enum Body<M> {
    Msg(M),
    Requests(Vec<Command>),
    Reply(Reply),
}

#[derive(Debug)]
enum Event<M> {
    Deliver {
        src: Endpoint,
        dst: Endpoint,
        bytes: u64,
        body: Body<M>,
    },
    Retransmit {
        src: Endpoint,
        dst: Endpoint,
        bytes: u64,
        body: Body<M>,
    },
    Process {
        dst: ReplicaId,
        src: Endpoint,
        body: Body<M>,
    },
    Timer {
        replica: ReplicaId,
        tag: u32,
        token: u64,
    },
    Arrival {
        client: usize,
    },
    AttackEdge {
        attack: usize,
        start: bool,
    },
    Crash {
        replica: ReplicaId,
    },
}

struct Scheduled<M> {
    time: SimTime,
    seq: u64,
    event: Event<M>,
}

impl<M> PartialEq for Scheduled<M> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<M> Eq for Scheduled<M> {}

impl<M> PartialOrd for Scheduled<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Scheduled<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

pub struct Simulation<R: Replica> {
    cfg: SimConfig,
    replicas: Vec<R>,
    alive: Vec<bool>,
    busy_until: Vec<SimTime>,
    queue: BinaryHeap<Scheduled<R::Msg>>,
    seq: u64,
    now: SimTime,
    started: bool,
    ctx: Ctx<R::Msg>,
    net_rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
    clients: Vec<ClientGen>,
    records: Vec<Vec<RequestRecord>>,
    attacks: Vec<ActiveAttack>,
    attack_log: Vec<AttackEvent>,
    bytes: ByteCounters,
    trace: Trace,
    processed: u64,
}

impl<R: Replica> Simulation<R> {
    pub fn new(cfg: SimConfig, replicas: Vec<R>) -> Result<Self> {
        let n = cfg.latency.n();
        if replicas.len() != n {
            return Err(Error::validation(
                "cluster.n",
                format!("{} replicas but a {n}x{n} latency matrix", replicas.len()),
            ));
        }
        for (i, r) in replicas.iter().enumerate() {
            if r.id().index() != i {
                return Err(Error::Cluster(format!("replica {i} reports id {}", r.id())));
            }
        }
        let mut clients = Vec::with_capacity(cfg.clients.len());
        for (i, spec) in cfg.clients.iter().enumerate() {
            if spec.home.index() >= n {
                return Err(Error::validation(
                    format!("clients[{i}].home"),
                    format!("no replica {}", spec.home),
                ));
            }
            if spec.id as usize != i {
                return Err(Error::validation(
                    format!("clients[{i}].id"),
                    "client ids must be 0..number of clients",
                ));
            }
            clients.push(ClientGen::new(
                spec.clone(),
                derive_seed(cfg.seed, "client", i as u64),
            )?);
        }
        Ok(Simulation {
            net_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "net", 0)),
            attack_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "attack", 0)),
            records: vec![Vec::new(); clients.len()],
            attacks: vec![
                ActiveAttack {
                    victim: None,
                    burst_start: 0,
                    active: false,
                };
                cfg.attacks.len()
            ],
            bytes: ByteCounters {
                egress: vec![0; n],
                ingress: vec![0; n],
                ..Default::default()
            },
            clients,
            alive: vec![true; n],
            busy_until: vec![0; n],
            replicas,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            started: false,
            ctx: Ctx::new(0),
            attack_log: Vec::new(),
            trace: Trace::new(),
            processed: 0,
            cfg,
        })
    }

    pub fn set_trace(&mut self, trace: Trace) {
        self.trace = trace;
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn replicas(&self) -> &[R] {
        &self.replicas
    }

    pub fn alive(&self) -> &[bool] {
        &self.alive
    }

    /// Request records per client, indexed by sequence number.
    pub fn records(&self) -> &[Vec<RequestRecord>] {
        &self.records
    }

    pub fn all_records(&self) -> impl Iterator<Item = &RequestRecord> {
        self.records.iter().flatten()
    }

    pub fn bytes(&self) -> &ByteCounters {
        &self.bytes
    }

    /// Bytes of transmissions still travelling.
    pub fn in_flight_bytes(&self) -> u64 {
        self.queue
            .iter()
            .map(|s| match &s.event {
                Event::Deliver { bytes, .. } => *bytes,
                _ => 0,
            })
            .sum()
    }

    pub fn attack_log(&self) -> &[AttackEvent] {
        &self.attack_log
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    pub fn run(&mut self) {
        self.run_until(self.cfg.horizon_us);
    }

    /// Processes every event with time <= `until` (capped at the horizon).
    pub fn run_until(&mut self, until: SimTime) {
        let until = until.min(self.cfg.horizon_us);
        if !self.started {
            self.start();
        }
        while let Some(top) = self.queue.peek() {
            if top.time > until {
                break;
            }
            let Scheduled { time, event, .. } = self.queue.pop().expect("peeked");
            self.now = time;
            self.processed += 1;
            self.dispatch(event);
        }
        self.now = self.now.max(until);
    }

    fn start(&mut self) {
        self.started = true;
        for i in 0..self.replicas.len() {
            self.ctx.reset(0);
            self.replicas[i].on_start(&mut self.ctx);
            self.flush(ReplicaId::from(i));
        }
        for c in 0..self.clients.len() {
            let start = self.clients[c].spec().start_us;
            let gap = self.clients[c].next_gap();
            self.schedule(start + gap, Event::Arrival { client: c });
        }
        for (i, a) in self.cfg.attacks.clone().iter().enumerate() {
            self.schedule(
                a.start_us,
                Event::AttackEdge {
                    attack: i,
                    start: true,
                },
            );
        }
        for (t, r) in self.cfg.crashes.clone() {
            self.schedule(t, Event::Crash { replica: r });
        }
    }

    fn schedule(&mut self, time: SimTime, event: Event<R::Msg>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Scheduled { time, seq, event });
    }

    fn site(&self, e: Endpoint) -> ReplicaId {
        match e {
            Endpoint::Replica(r) => r,
            Endpoint::Client(c) => self.cfg.clients[c as usize].home,
        }
    }

    fn egress_delay(&self, src: Endpoint) -> SimTime {
        let Endpoint::Replica(r) = src else { return 0 };
        self.cfg
            .attacks
            .iter()
            .zip(&self.attacks)
            .filter(|(_, st)| st.active && st.victim == Some(r))
            .map(|(a, st)| a.delay_at(self.now, st.burst_start))
            .sum()
    }

    fn loss_fraction(&self, src: Endpoint) -> f64 {
        let Endpoint::Replica(r) = src else {
            return 0.0;
        };
        let mut keep = 1.0;
        for (a, st) in self.cfg.attacks.iter().zip(&self.attacks) {
            if let (AttackKind::Loss { fraction }, true) =
                (a.kind, st.active && st.victim == Some(r))
            {
                keep *= 1.0 - fraction;
            }
        }
        1.0 - keep
    }

    fn transmit(&mut self, src: Endpoint, dst: Endpoint, bytes: u64, body: Body<R::Msg>) {
        self.bytes.sent += bytes;
        if let Endpoint::Replica(r) = src {
            self.bytes.egress[r.index()] += bytes;
        }
        let (a, b) = (self.site(src), self.site(dst));
        let loss = self.loss_fraction(src);
        if loss > 0.0 && self.net_rng.random::<f64>() < loss {
            self.bytes.dropped += bytes;
            let period = (4 * self.cfg.latency.base_us(a, b)).max(US_PER_MS);
            self.schedule(
                self.now + period,
                Event::Retransmit {
                    src,
                    dst,
                    bytes,
                    body,
                },
            );
            return;
        }
        let depart = match src {
            Endpoint::Replica(r) if !self.cfg.cpu.is_free() && dst != src => {
                let done = self.now.max(self.busy_until[r.index()]) + self.cfg.cpu.cost(bytes);
                self.busy_until[r.index()] = done;
                done
            }
            _ => self.now,
        };
        let mut lat = self.cfg.latency.sample(a, b, &mut self.net_rng) + self.egress_delay(src);
        let sync = self.cfg.synchrony;
        if self.now < sync.gst_us {
            if sync.pre_gst_extra_us > 0 {
                lat += self.net_rng.random_range(0..=sync.pre_gst_extra_us);
            }
        } else if let Some(delta) = sync.delta_us {
            lat = lat.min(delta);
        }
        self.schedule(
            depart + lat,
            Event::Deliver {
                src,
                dst,
                bytes,
                body,
            },
        );
    }

    fn flush(&mut self, r: ReplicaId) {
        let now = self.now;
        let src = Endpoint::Replica(r);
        for (to, msg) in std::mem::take(&mut self.ctx.sends) {
            let bytes = msg.wire_bytes();
            self.transmit(src, Endpoint::Replica(to), bytes, Body::Msg(msg));
        }
        for (after, tag, token) in std::mem::take(&mut self.ctx.timers) {
            self.schedule(
                now + after,
                Event::Timer {
                    replica: r,
                    tag,
                    token,
                },
            );
        }
        for reply in std::mem::take(&mut self.ctx.replies) {
            if reply.client as usize >= self.clients.len() {
                continue;
            }
            let bytes = reply.bytes;
            self.transmit(
                src,
                Endpoint::Client(reply.client),
                bytes,
                Body::Reply(reply),
            );
        }
        for note in std::mem::take(&mut self.ctx.notes) {
            self.trace.record(now, r, note);
        }
    }

    fn dispatch(&mut self, event: Event<R::Msg>) {
        match event {
            Event::Deliver {
                src,
                dst,
                bytes,
                body,
            } => self.on_deliver(src, dst, bytes, body),
            Event::Retransmit {
                src,
                dst,
                bytes,
                body,
            } => {
                let src_up = match src {
                    Endpoint::Replica(r) => self.alive[r.index()],
                    Endpoint::Client(_) => true,
                };
                let dst_up = match dst {
                    Endpoint::Replica(r) => self.alive[r.index()],
                    Endpoint::Client(_) => true,
                };
                if src_up && dst_up {
                    self.bytes.retransmissions += 1;
                    self.transmit(src, dst, bytes, body);
                }
            }
            Event::Process { dst, src, body } => {
                if self.alive[dst.index()] {
                    self.handle(dst, src, body);
                }
            }
            Event::Timer {
                replica,
                tag,
                token,
            } => {
                if self.alive[replica.index()] {
                    self.ctx.reset(self.now);
                    self.replicas[replica.index()].on_timer(tag, token, &mut self.ctx);
                    self.flush(replica);
                }
            }
            Event::Arrival { client } => self.on_arrival(client),
            Event::AttackEdge { attack, start } => self.on_attack_edge(attack, start),
            Event::Crash { replica } => self.crash(replica),
        }
    }

    fn on_deliver(&mut self, src: Endpoint, dst: Endpoint, bytes: u64, body: Body<R::Msg>) {
        match dst {
            Endpoint::Client(c) => {
                self.bytes.delivered += bytes;
                if let Body::Reply(reply) = body {
                    let now = self.now;
                    let recs = &mut self.records[c as usize];
                    for s in reply.seqs {
                        if let Some(rec) = recs.get_mut(s as usize) {
                            if rec.commit.is_none() {
                                rec.commit = Some(now);
                            }
                        }
                    }
                }
            }
            Endpoint::Replica(r) => {
                if !self.alive[r.index()] {
                    self.bytes.to_crashed += bytes;
                    return;
                }
                self.bytes.delivered += bytes;
                self.bytes.ingress[r.index()] += bytes;
                if self.cfg.cpu.is_free() {
                    self.handle(r, src, body);
                } else {
                    let start = self.now.max(self.busy_until[r.index()]);
                    let done = start + self.cfg.cpu.cost(bytes);
                    self.busy_until[r.index()] = done;
                    if done == self.now {
                        self.handle(r, src, body);
                    } else {
                        self.schedule(done, Event::Process { dst: r, src, body });
                    }
                }
            }
        }
    }

    fn handle(&mut self, r: ReplicaId, src: Endpoint, body: Body<R::Msg>) {
        self.ctx.reset(self.now);
        let replica = &mut self.replicas[r.index()];
        match body {
            Body::Msg(msg) => {
                let Endpoint::Replica(from) = src else { return };
                if self.cfg.trace_level == TraceLevel::Messages {
                    self.trace
                        .record(self.now, r, format_args!("recv {from} {msg}"));
                }
                replica.on_message(from, msg, &mut self.ctx);
            }
            Body::Requests(cmds) => replica.on_requests(cmds, &mut self.ctx),
            Body::Reply(_) => {}
        }
        self.flush(r);
    }

    fn on_arrival(&mut self, c: usize) {
        let now = self.now;
        let stop = self.clients[c].spec().stop_us;
        if now >= stop {
            return;
        }
        let target = self.clients[c].route(&self.alive);
        let home = self.clients[c].spec().home;
        let cmd = self.clients[c].next_command(target.unwrap_or(home));
        self.records[c].push(RequestRecord {
            id: cmd.id,
            submit: now,
            commit: None,
            routed: target,
        });
        if let Some(t) = target {
            let bytes = HEADER_BYTES + cmd.wire_size();
            self.transmit(
                Endpoint::Client(c as u32),
                Endpoint::Replica(t),
                bytes,
                Body::Requests(vec![cmd]),
            );
        }
        let gap = self.clients[c].next_gap();
        self.schedule(now + gap, Event::Arrival { client: c });
    }

    fn resolve_victim(&mut self, targeting: Targeting) -> Option<ReplicaId> {
        let live: Vec<usize> = (0..self.alive.len()).filter(|i| self.alive[*i]).collect();
        match targeting {
            Targeting::Fixed(r) => Some(r),
            Targeting::FollowLeader => {
                let leader = self
                    .replicas
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| self.alive[*i])
                    .filter_map(|(_, r)| r.stable_leader())
                    .filter(|(_, l)| self.alive[l.index()])
                    .max();
                match leader {
                    Some((_, l)) => Some(l),
                    None => self.random_live(&live),
                }
            }
            Targeting::RandomRotating => self.random_live(&live),
        }
    }

    fn random_live(&mut self, live: &[usize]) -> Option<ReplicaId> {
        if live.is_empty() {
            return None;
        }
        Some(ReplicaId::from(
            live[self.attack_rng.random_range(0..live.len())],
        ))
    }

    fn on_attack_edge(&mut self, i: usize, start: bool) {
        let sched = self.cfg.attacks[i];
        if start {
            let victim = self.resolve_victim(sched.targeting);
            self.attack_log.push(AttackEvent {
                time: self.now,
                attack: i,
                victim,
                start: true,
            });
            let shown = victim.map_or("none".to_string(), |v| v.to_string());
            self.trace
                .record(self.now, "net", format_args!("attack-start {i} {shown}"));
            if sched.kind == AttackKind::Crash {
                if let Some(v) = victim {
                    self.crash(v);
                }
                return;
            }
            self.attacks[i] = ActiveAttack {
                victim,
                burst_start: self.now,
                active: true,
            };
            let end = sched.burst_end(self.now);
            self.schedule(
                end,
                Event::AttackEdge {
                    attack: i,
                    start: false,
                },
            );
        } else {
            let victim = self.attacks[i].victim;
            self.attacks[i].active = false;
            self.attack_log.push(AttackEvent {
                time: self.now,
                attack: i,
                victim,
                start: false,
            });
            self.trace
                .record(self.now, "net", format_args!("attack-stop {i}"));
            if let Some(next) = sched.next_burst(self.now) {
                self.schedule(
                    next,
                    Event::AttackEdge {
                        attack: i,
                        start: true,
                    },
                );
            }
        }
    }

    fn crash(&mut self, r: ReplicaId) {
        if let Some(a) = self.alive.get_mut(r.index()) {
            if *a {
                *a = false;
                self.trace.record(self.now, r, "crash");
            }
        }
    }
}
