//! Exhaustive exploration of single-choice Baxos over the pure protocol
//! transitions: every delivery order of in-flight messages, spurious phase
//! timeouts at any point, and a bounded number of attempts per proposer.
//! A value counts as chosen once a quorum has accepted it at one try.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use sha2::{Digest, Sha256};

use baxos::protocol::{
    ChoiceState, ClusterConfig, LearnOutcome, Phase, ProposerSession, ProtocolMessage, ReplicaId,
    TryNumber, Value,
};

#[derive(Clone, Debug)]
struct Node {
    acceptor: ChoiceState,
    session: Option<ProposerSession>,
    command: Option<Value>,
    attempts_left: u32,
}

#[derive(Clone, Debug)]
struct World {
    nodes: Vec<Node>,
    net: Vec<(u16, u16, ProtocolMessage)>,
    /// Every (try, acceptor) acceptance that ever happened.
    accepted: BTreeSet<(TryNumber, u16)>,
    try_values: BTreeMap<TryNumber, Value>,
    sabotage: bool,
}

#[derive(Debug, Default)]
pub struct ModelReport {
    pub states: u64,
    pub transitions: u64,
    pub terminal: u64,
    pub decided_terminal: u64,
    pub violations: Vec<String>,
}

pub struct ModelConfig {
    pub n: usize,
    /// Attempts (phase-one starts) granted to each proposing replica.
    pub attempts: Vec<u32>,
    pub max_states: u64,
    /// Proposers ignore values reported in promises and always propose their
    /// own command. Used to confirm the checker catches a broken protocol.
    pub sabotage: bool,
}

impl World {
    fn key(&self) -> [u8; 16] {
        let mut net: Vec<String> = self.net.iter().map(|m| format!("{m:?}")).collect();
        net.sort();
        let mut h = Sha256::new();
        h.update(format!("{:?}|{:?}|{:?}", self.nodes, net, self.accepted).as_bytes());
        let d = h.finalize();
        let mut k = [0u8; 16];
        k.copy_from_slice(&d[..16]);
        k
    }

    /// Queues a message; a replica's messages to itself are handled at once.
    fn send(
        &mut self,
        cfg: &ClusterConfig,
        from: u16,
        to: u16,
        msg: ProtocolMessage,
    ) -> Option<String> {
        if from == to {
            deliver(self, cfg, from, to, msg)
        } else {
            self.net.push((from, to, msg));
            None
        }
    }

    fn broadcast(
        &mut self,
        cfg: &ClusterConfig,
        from: u16,
        msg: ProtocolMessage,
    ) -> Option<String> {
        let mut problem = None;
        for to in 0..self.nodes.len() as u16 {
            problem = problem.or(self.send(cfg, from, to, msg.clone()));
        }
        problem
    }

    /// Drops in-flight messages whose delivery is a no-op now and in every
    /// later state: promises only rise, and a session never revisits a phase.
    fn prune(&mut self) {
        let nodes = &self.nodes;
        self.net.retain(|(_, to, msg)| {
            let node = &nodes[*to as usize];
            let session = node.session.as_ref();
            match msg {
                ProtocolMessage::Prepare(p) => node.acceptor.promised_try < Some(p.try_),
                ProtocolMessage::Propose(p) => node.acceptor.promised_try <= Some(p.try_),
                ProtocolMessage::Promise(p) => {
                    session.is_some_and(|s| s.phase == Phase::Preparing && s.try_ == p.try_)
                }
                ProtocolMessage::Accept(a) => {
                    session.is_some_and(|s| s.phase == Phase::Proposing && s.try_ == a.accepted_try)
                }
                ProtocolMessage::Learn(l) => node.acceptor.decision.as_ref() != Some(&l.value),
            }
        });
    }

    /// Values chosen so far, by quorum acceptance.
    fn chosen(&self, quorum: usize) -> BTreeSet<String> {
        let mut per_try: BTreeMap<TryNumber, usize> = BTreeMap::new();
        for (t, _) in &self.accepted {
            *per_try.entry(*t).or_default() += 1;
        }
        per_try
            .into_iter()
            .filter(|(_, c)| *c >= quorum)
            .map(|(t, _)| format!("{:?}", self.try_values[&t]))
            .collect()
    }
}

fn successors(w: &World, cfg: &ClusterConfig, out: &mut Vec<(World, Option<String>)>) {
    out.clear();
    for p in 0..w.nodes.len() {
        let node = &w.nodes[p];
        // A phase timeout only matters to safety through the retry it allows,
        // so abandoning a session and starting the next attempt is one step.
        if node.command.is_some() && node.attempts_left > 0 && !node.acceptor.is_decided() {
            let mut next = w.clone();
            let me = ReplicaId(p as u16);
            let n = &mut next.nodes[p];
            if let Some(s) = n.session.as_mut() {
                s.on_phase_timeout();
            }
            let t = TryNumber::next_after(n.acceptor.promised_try, n.acceptor.proposed_try, me);
            n.acceptor.proposed_try = Some(t);
            n.attempts_left -= 1;
            let (session, prepare) =
                ProposerSession::start(0, t, n.command.clone().expect("checked"));
            n.session = Some(session);
            let problem = next.broadcast(cfg, p as u16, ProtocolMessage::Prepare(prepare));
            next.prune();
            out.push((next, problem));
        }
    }
    let mut seen = HashSet::new();
    for i in 0..w.net.len() {
        if !seen.insert(format!("{:?}", w.net[i])) {
            continue;
        }
        let mut next = w.clone();
        let (from, to, msg) = next.net.swap_remove(i);
        let problem = deliver(&mut next, cfg, from, to, msg);
        next.prune();
        out.push((next, problem));
    }
}

fn deliver(
    w: &mut World,
    cfg: &ClusterConfig,
    from: u16,
    to: u16,
    msg: ProtocolMessage,
) -> Option<String> {
    let node = &mut w.nodes[to as usize];
    match msg {
        ProtocolMessage::Prepare(p) => {
            if let Some(promise) = node.acceptor.on_prepare(&p) {
                return w.send(cfg, to, from, ProtocolMessage::Promise(promise));
            }
        }
        ProtocolMessage::Promise(p) => {
            let s = node.session.as_mut()?;
            if s.record_promise(ReplicaId(from), &p) {
                if let Some(mut propose) = s.on_promise_quorum(cfg, None) {
                    if w.sabotage {
                        propose.value = s.command.clone();
                        s.proposed_value = Some(propose.value.clone());
                    }
                    w.try_values.insert(propose.try_, propose.value.clone());
                    return w.broadcast(cfg, to, ProtocolMessage::Propose(propose));
                }
            }
        }
        ProtocolMessage::Propose(p) => {
            if let Some(accept) = node.acceptor.on_propose(&p) {
                w.accepted.insert((p.try_, to));
                return w.send(cfg, to, from, ProtocolMessage::Accept(accept));
            }
        }
        ProtocolMessage::Accept(a) => {
            let s = node.session.as_mut()?;
            if s.record_accept(ReplicaId(from), &a) {
                let proposed = s.proposed_value.clone();
                if let Some((_, learn)) = s.on_accept_quorum(&mut node.acceptor, cfg) {
                    if proposed.as_ref() != Some(&learn.value) {
                        return Some(format!(
                            "proposer r{to} reached an accept quorum for {proposed:?} \
                             but had already decided {:?}",
                            learn.value
                        ));
                    }
                    for other in 0..w.nodes.len() as u16 {
                        if other != to {
                            w.net
                                .push((to, other, ProtocolMessage::Learn(learn.clone())));
                        }
                    }
                }
            }
        }
        ProtocolMessage::Learn(l) => {
            if node.acceptor.on_learn(&l) == LearnOutcome::Conflict {
                return Some(format!(
                    "r{to} learned {:?} after deciding {:?}",
                    l.value, node.acceptor.decision
                ));
            }
        }
    }
    None
}

fn check(w: &World, before: Option<&World>, quorum: usize, commands: &[Value]) -> Vec<String> {
    let mut v = Vec::new();
    let chosen = w.chosen(quorum);
    if chosen.len() > 1 {
        v.push(format!("agreement: quorums accepted {chosen:?}"));
    }
    let mut decided = BTreeSet::new();
    for (i, n) in w.nodes.iter().enumerate() {
        if n.acceptor.accepted_try() > n.acceptor.promised_try {
            v.push(format!("r{i} accepted above its promise"));
        }
        if let Some(d) = &n.acceptor.decision {
            decided.insert(format!("{d:?}"));
            if !commands.contains(d) {
                v.push(format!("validity: r{i} decided unproposed {d:?}"));
            }
            if !chosen.contains(&format!("{d:?}")) {
                v.push(format!("r{i} decided {d:?}, which no quorum accepted"));
            }
        }
        if let Some(b) = before {
            if b.nodes[i].acceptor.decision.is_some()
                && b.nodes[i].acceptor.decision != n.acceptor.decision
            {
                v.push(format!("integrity: r{i} changed its decision"));
            }
        }
    }
    if decided.len() > 1 {
        v.push(format!("agreement: replicas decided {decided:?}"));
    }
    v
}

pub fn explore(mc: &ModelConfig) -> ModelReport {
    let cfg = ClusterConfig::new(mc.n).expect("odd n >= 3");
    let commands: Vec<Value> = mc
        .attempts
        .iter()
        .enumerate()
        .map(|(i, _)| Value::opaque(ReplicaId(i as u16), format!("cmd-{i}").as_bytes()))
        .collect();
    let start = World {
        nodes: (0..mc.n)
            .map(|i| Node {
                acceptor: ChoiceState::new(0),
                session: None,
                command: commands.get(i).cloned(),
                attempts_left: mc.attempts.get(i).copied().unwrap_or(0),
            })
            .collect(),
        net: Vec::new(),
        accepted: BTreeSet::new(),
        try_values: BTreeMap::new(),
        sabotage: mc.sabotage,
    };
    let mut report = ModelReport::default();
    let mut visited: HashSet<[u8; 16]> = HashSet::new();
    visited.insert(start.key());
    let mut stack = vec![start];
    let mut succ = Vec::new();
    while let Some(w) = stack.pop() {
        report.states += 1;
        if report.states > mc.max_states {
            report
                .violations
                .push(format!("state budget {} exhausted", mc.max_states));
            break;
        }
        successors(&w, &cfg, &mut succ);
        if succ.is_empty() {
            report.terminal += 1;
            if w.nodes.iter().any(|n| n.acceptor.is_decided()) {
                report.decided_terminal += 1;
            }
        }
        for (next, problem) in succ.drain(..) {
            report.transitions += 1;
            if let Some(p) = problem {
                report.violations.push(p);
            }
            for p in check(&next, Some(&w), cfg.quorum(), &commands) {
                report.violations.push(p);
            }
            if !report.violations.is_empty() {
                return report;
            }
            if visited.insert(next.key()) {
                stack.push(next);
            }
        }
    }
    report
}
