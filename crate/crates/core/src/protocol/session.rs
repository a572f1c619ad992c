use std::collections::BTreeMap;

use super::choice::{ChoiceState, LearnOutcome};
use super::message::{Accept, Learn, Prepare, Promise, Propose};
use super::types::{ClusterConfig, ReplicaId, TryNumber, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Preparing,
    Proposing,
}

/// What an Accept quorum meant for the proposer's own command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecisionOutcome {
    /// The session's command is now the decision for its choice.
    OwnCommandDecided { newly_decided: bool },
    /// Some other value won the choice; the command must be re-proposed.
    ForeignValueDecided { decided: Value, newly_decided: bool },
}

impl DecisionOutcome {
    pub fn newly_decided(&self) -> bool {
        match self {
            DecisionOutcome::OwnCommandDecided { newly_decided }
            | DecisionOutcome::ForeignValueDecided { newly_decided, .. } => *newly_decided,
        }
    }
}

/// Emitted when a phase timer expires: the proposer must back off and then
/// retry `command`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackoffRequest {
    pub choice: u64,
    pub command: Value,
}

/// Picks the value to propose from a quorum of promises: the value paired
/// with the highest accepted try, or `command` when nothing was accepted.
pub fn select_value<'a, I>(promises: I, command: &Value) -> Value
where
    I: IntoIterator<Item = &'a Option<(TryNumber, Value)>>,
{
    promises
        .into_iter()
        .flatten()
        .max_by_key(|(t, _)| *t)
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| command.clone())
}

/// A proposer's in-flight attempt to get `command` decided at `choice`.
#[derive(Clone, Debug)]
pub struct ProposerSession {
    pub choice: u64,
    pub try_: TryNumber,
    pub command: Value,
    pub proposed_value: Option<Value>,
    pub phase: Phase,
    promises: BTreeMap<ReplicaId, Option<(TryNumber, Value)>>,
    accepts: BTreeMap<ReplicaId, TryNumber>,
}

impl ProposerSession {
    /// Starts phase one. The caller has already bumped the choice's
    /// `proposed_try` to `try_`.
    pub fn start(choice: u64, try_: TryNumber, command: Value) -> (Self, Prepare) {
        let session = ProposerSession {
            choice,
            try_,
            command,
            proposed_value: None,
            phase: Phase::Preparing,
            promises: BTreeMap::new(),
            accepts: BTreeMap::new(),
        };
        (session, Prepare { choice, try_ })
    }

    /// Starts directly in phase two using promises gathered ahead of time by
    /// a piggybacked Prepare.
    pub fn from_promises(
        choice: u64,
        try_: TryNumber,
        command: Value,
        promises: BTreeMap<ReplicaId, Option<(TryNumber, Value)>>,
        piggyback: Option<Prepare>,
    ) -> (Self, Propose) {
        let value = select_value(promises.values(), &command);
        let session = ProposerSession {
            choice,
            try_,
            command,
            proposed_value: Some(value.clone()),
            phase: Phase::Proposing,
            promises: BTreeMap::new(),
            accepts: BTreeMap::new(),
        };
        let propose = Propose {
            choice,
            try_,
            value,
            piggyback,
            learn: None,
        };
        (session, propose)
    }

    pub fn promise_count(&self) -> usize {
        self.promises.len()
    }

    pub fn accept_count(&self) -> usize {
        self.accepts.len()
    }

    /// Records a Promise addressed to this session. Returns false for
    /// promises from another choice or try, or outside phase one.
    pub fn record_promise(&mut self, from: ReplicaId, promise: &Promise) -> bool {
        if self.phase != Phase::Preparing
            || promise.choice != self.choice
            || promise.try_ != self.try_
        {
            return false;
        }
        self.promises.insert(from, promise.accepted.clone());
        true
    }

    /// On a promise quorum, chooses the value and emits the Propose. The
    /// caller broadcasts it and restarts the phase timer.
    pub fn on_promise_quorum(
        &mut self,
        cfg: &ClusterConfig,
        piggyback: Option<Prepare>,
    ) -> Option<Propose> {
        if self.phase != Phase::Preparing || self.promises.len() < cfg.quorum() {
            return None;
        }
        let value = select_value(self.promises.values(), &self.command);
        self.promises.clear();
        self.proposed_value = Some(value.clone());
        self.phase = Phase::Proposing;
        Some(Propose {
            choice: self.choice,
            try_: self.try_,
            value,
            piggyback,
            learn: None,
        })
    }

    pub fn record_accept(&mut self, from: ReplicaId, accept: &Accept) -> bool {
        if self.phase != Phase::Proposing
            || accept.choice != self.choice
            || accept.accepted_try != self.try_
        {
            return false;
        }
        self.accepts.insert(from, accept.accepted_try);
        true
    }

    /// On an accept quorum, decides the proposed value in `state` (unless a
    /// Learn got there first) and emits the Learn to broadcast.
    pub fn on_accept_quorum(
        &mut self,
        state: &mut ChoiceState,
        cfg: &ClusterConfig,
    ) -> Option<(DecisionOutcome, Learn)> {
        if self.phase != Phase::Proposing || self.accepts.len() < cfg.quorum() {
            return None;
        }
        let value = self.proposed_value.clone()?;
        let newly_decided = state.decide(&value) == LearnOutcome::Decided;
        let decided = state.decision.clone().unwrap_or_else(|| value.clone());
        self.accepts.clear();
        self.phase = Phase::Idle;
        let outcome = if decided == self.command {
            DecisionOutcome::OwnCommandDecided { newly_decided }
        } else {
            DecisionOutcome::ForeignValueDecided {
                decided: decided.clone(),
                newly_decided,
            }
        };
        Some((
            outcome,
            Learn {
                choice: self.choice,
                value: decided,
            },
        ))
    }

    /// Timer expiry in either phase: drop collected responses and ask for a
    /// backoff. Returns None when the session was not waiting on a phase.
    pub fn on_phase_timeout(&mut self) -> Option<BackoffRequest> {
        if self.phase == Phase::Idle {
            return None;
        }
        self.promises.clear();
        self.accepts.clear();
        self.phase = Phase::Idle;
        Some(BackoffRequest {
            choice: self.choice,
            command: self.command.clone(),
        })
    }
}
