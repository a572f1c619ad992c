use std::collections::BTreeMap;

use super::command::{Command, Kind, Payload, RequestId};
use crate::protocol::{ChoiceState, Digest, LearnOutcome, Value};

/// In-process key-value store standing in for the application.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvStateMachine {
    data: BTreeMap<u64, Payload>,
    applied: u64,
}

impl KvStateMachine {
    /// Applies one command. Reads return the current value of the key.
    pub fn apply(&mut self, cmd: &Command) -> Option<Payload> {
        self.applied += 1;
        match cmd.kind {
            Kind::Read => self.data.get(&cmd.key).copied(),
            Kind::Write => {
                self.data.insert(cmd.key, cmd.payload);
                Some(cmd.payload)
            }
        }
    }

    pub fn get(&self, key: u64) -> Option<Payload> {
        self.data.get(&key).copied()
    }

    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Digest of the full key-value content.
    pub fn digest(&self) -> Digest {
        let mut enc = Vec::with_capacity(self.data.len() * 20);
        for (k, p) in &self.data {
            enc.extend_from_slice(&k.to_le_bytes());
            enc.extend_from_slice(&p.len.to_le_bytes());
            enc.extend_from_slice(&p.token.to_le_bytes());
        }
        Digest::of(&enc)
    }
}

/// Per-client bitmap of applied sequence numbers.
#[derive(Clone, Debug, Default)]
pub struct AppliedSet {
    clients: Vec<Vec<u64>>,
    count: u64,
}

impl AppliedSet {
    pub fn contains(&self, id: RequestId) -> bool {
        let (word, bit) = ((id.seq / 64) as usize, id.seq % 64);
        self.clients
            .get(id.client as usize)
            .and_then(|bits| bits.get(word))
            .is_some_and(|w| w & (1 << bit) != 0)
    }

    /// Returns false if `id` was already present.
    pub fn insert(&mut self, id: RequestId) -> bool {
        let c = id.client as usize;
        if self.clients.len() <= c {
            self.clients.resize_with(c + 1, Vec::new);
        }
        let bits = &mut self.clients[c];
        let (word, bit) = ((id.seq / 64) as usize, id.seq % 64);
        if bits.len() <= word {
            bits.resize(word + 1, 0);
        }
        let fresh = bits[word] & (1 << bit) == 0;
        bits[word] |= 1 << bit;
        self.count += fresh as u64;
        fresh
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// One applied log position.
#[derive(Clone, Debug)]
pub struct DecidedEntry {
    pub choice: u64,
    pub value: Value,
    /// Commands of this entry that were already applied at an earlier
    /// position and therefore skipped.
    pub skipped: Vec<RequestId>,
}

/// What a replica has decided and applied, shared by both protocols.
///
/// Decisions may arrive in any order; application only ever extends the
/// contiguous prefix, so a missing position stalls everything after it.
#[derive(Clone, Debug, Default)]
pub struct DecidedLog {
    entries: Vec<DecidedEntry>,
    pending: BTreeMap<u64, Value>,
    applied: AppliedSet,
    sm: KvStateMachine,
    conflicts: u64,
}

impl DecidedLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of the first position not yet applied.
    pub fn next_index(&self) -> u64 {
        self.entries.len() as u64
    }

    /// Highest index up to which every position is decided and applied.
    pub fn last_decided(&self) -> Option<u64> {
        self.next_index().checked_sub(1)
    }

    pub fn highest_known(&self) -> Option<u64> {
        self.pending
            .keys()
            .next_back()
            .copied()
            .or(self.last_decided())
    }

    pub fn has_gap(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn is_decided(&self, choice: u64) -> bool {
        choice < self.next_index() || self.pending.contains_key(&choice)
    }

    pub fn decision(&self, choice: u64) -> Option<&Value> {
        self.entries
            .get(choice as usize)
            .map(|e| &e.value)
            .or_else(|| self.pending.get(&choice))
    }

    /// Records a decision. A second, different value for the same position
    /// is counted as a conflict and ignored.
    pub fn record(&mut self, choice: u64, value: &Value) -> LearnOutcome {
        match self.decision(choice) {
            Some(v) if v == value => LearnOutcome::AlreadyDecided,
            Some(_) => {
                self.conflicts += 1;
                LearnOutcome::Conflict
            }
            None => {
                self.pending.insert(choice, value.clone());
                LearnOutcome::Decided
            }
        }
    }

    /// Applies every decision that extends the contiguous prefix, calling
    /// `on_apply` for each command that mutates the state machine.
    pub fn apply_ready<F>(&mut self, mut on_apply: F) -> usize
    where
        F: FnMut(&Command, Option<Payload>),
    {
        let mut applied = 0;
        while let Some(value) = self.pending.remove(&self.next_index()) {
            let mut skipped = Vec::new();
            for cmd in value.commands() {
                if self.applied.insert(cmd.id) {
                    let out = self.sm.apply(cmd);
                    on_apply(cmd, out);
                } else {
                    skipped.push(cmd.id);
                }
            }
            self.entries.push(DecidedEntry {
                choice: self.next_index(),
                value,
                skipped,
            });
            applied += 1;
        }
        applied
    }

    pub fn entries(&self) -> &[DecidedEntry] {
        &self.entries
    }

    pub fn is_applied(&self, id: RequestId) -> bool {
        self.applied.contains(id)
    }

    pub fn applied_requests(&self) -> u64 {
        self.applied.len()
    }

    pub fn state_machine(&self) -> &KvStateMachine {
        &self.sm
    }

    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }
}

/// Baxos replicated log: one choice record per index plus the applied log.
#[derive(Clone, Debug, Default)]
pub struct ReplicatedLog {
    choices: BTreeMap<u64, ChoiceState>,
    decided: DecidedLog,
}

impl ReplicatedLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn choice(&self, choice: u64) -> Option<&ChoiceState> {
        self.choices.get(&choice)
    }

    pub fn choice_mut(&mut self, choice: u64) -> &mut ChoiceState {
        self.choices
            .entry(choice)
            .or_insert_with(|| ChoiceState::new(choice))
    }

    pub fn choices(&self) -> impl Iterator<Item = &ChoiceState> {
        self.choices.values()
    }

    pub fn last_decided_choice(&self) -> Option<u64> {
        self.decided.last_decided()
    }

    /// Lowest undecided index above the applied prefix: where the next
    /// proposal goes.
    pub fn next_open_choice(&self) -> u64 {
        let mut c = self.decided.next_index();
        while self.decided.is_decided(c) {
            c += 1;
        }
        c
    }

    pub fn decided(&self) -> &DecidedLog {
        &self.decided
    }

    pub fn decided_mut(&mut self) -> &mut DecidedLog {
        &mut self.decided
    }

    /// Marks `choice` decided in both the choice record and the applied log.
    pub fn learn(&mut self, choice: u64, value: &Value) -> LearnOutcome {
        let outcome = self.choice_mut(choice).decide(value);
        let logged = self.decided.record(choice, value);
        match (outcome, logged) {
            (LearnOutcome::Conflict, _) | (_, LearnOutcome::Conflict) => LearnOutcome::Conflict,
            (LearnOutcome::Decided, _) | (_, LearnOutcome::Decided) => LearnOutcome::Decided,
            _ => LearnOutcome::AlreadyDecided,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ReplicaId;

    fn cmd(client: u32, seq: u64, kind: Kind, key: u64, token: u64) -> Command {
        Command {
            id: RequestId::new(client, seq),
            kind,
            key,
            payload: Payload { len: 8, token },
            ingress: ReplicaId(0),
        }
    }

    fn batch(nonce: u64, cmds: Vec<Command>) -> Value {
        Value::from_commands(ReplicaId(0), nonce, cmds)
    }

    #[test]
    fn applies_only_the_contiguous_prefix() {
        let mut log = DecidedLog::new();
        for c in 0..5u64 {
            log.record(c, &batch(c, vec![cmd(0, c, Kind::Write, c, c)]));
        }
        log.record(6, &batch(6, vec![cmd(0, 6, Kind::Write, 6, 6)]));
        assert_eq!(log.apply_ready(|_, _| {}), 5);
        assert_eq!(log.next_index(), 5);
        assert_eq!(log.last_decided(), Some(4));
        assert!(log.has_gap());
    }

    #[test]
    fn duplicate_request_is_skipped_at_apply() {
        let mut log = DecidedLog::new();
        let c = cmd(1, 7, Kind::Write, 3, 1);
        log.record(0, &batch(0, vec![c]));
        log.record(1, &batch(1, vec![c, cmd(1, 8, Kind::Write, 3, 2)]));
        let mut seen = Vec::new();
        log.apply_ready(|cmd, _| seen.push(cmd.id));
        assert_eq!(seen, vec![RequestId::new(1, 7), RequestId::new(1, 8)]);
        assert_eq!(log.entries()[1].skipped, vec![RequestId::new(1, 7)]);
        assert_eq!(log.state_machine().applied(), 2);
    }

    #[test]
    fn read_sees_earlier_write() {
        let mut log = DecidedLog::new();
        log.record(0, &batch(0, vec![cmd(0, 0, Kind::Write, 9, 42)]));
        log.record(1, &batch(1, vec![cmd(0, 1, Kind::Read, 9, 0)]));
        let mut outs = Vec::new();
        log.apply_ready(|c, out| outs.push((c.kind, out.map(|p| p.token))));
        assert_eq!(outs[1], (Kind::Read, Some(42)));
    }

    #[test]
    fn conflicting_decision_is_counted() {
        let mut log = DecidedLog::new();
        assert_eq!(log.record(0, &batch(0, vec![])), LearnOutcome::Decided);
        assert_eq!(
            log.record(0, &batch(0, vec![])),
            LearnOutcome::AlreadyDecided
        );
        assert_eq!(log.record(0, &batch(1, vec![])), LearnOutcome::Conflict);
        assert_eq!(log.conflicts(), 1);
    }

    #[test]
    fn next_open_choice_skips_decided_positions() {
        let mut log = ReplicatedLog::new();
        for c in 0..8 {
            log.learn(c, &batch(c, vec![]));
        }
        log.decided_mut().apply_ready(|_, _| {});
        assert_eq!(log.last_decided_choice(), Some(7));
        assert_eq!(log.next_open_choice(), 8);
        log.learn(8, &batch(100, vec![]));
        assert_eq!(log.next_open_choice(), 9);
    }

    #[test]
    fn applied_set_tracks_membership() {
        let mut s = AppliedSet::default();
        assert!(s.insert(RequestId::new(3, 1000)));
        assert!(!s.insert(RequestId::new(3, 1000)));
        assert!(s.contains(RequestId::new(3, 1000)));
        assert!(!s.contains(RequestId::new(3, 999)));
        assert!(!s.contains(RequestId::new(4, 1000)));
        assert_eq!(s.len(), 1);
    }
}
