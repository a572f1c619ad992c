use std::fmt;

use super::message::{Accept, Learn, Prepare, Promise, Propose};
use super::types::{ShowTry, TryNumber, Value};

/// Per-instance record kept by every replica. Acceptor fields are
/// `promised_try` and `accepted`; `proposed_try` is this replica's own last
/// try for the instance; `decision` is the learner's view.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChoiceState {
    pub id: u64,
    pub proposed_try: Option<TryNumber>,
    pub promised_try: Option<TryNumber>,
    pub accepted: Option<(TryNumber, Value)>,
    pub decision: Option<Value>,
}

/// Result of applying a Learn to a choice record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnOutcome {
    Decided,
    AlreadyDecided,
    /// A different value was already decided. Unreachable in a correct
    /// protocol; the caller counts it as a safety violation.
    Conflict,
}

impl ChoiceState {
    pub fn new(id: u64) -> Self {
        ChoiceState {
            id,
            ..Default::default()
        }
    }

    pub fn accepted_try(&self) -> Option<TryNumber> {
        self.accepted.as_ref().map(|(t, _)| *t)
    }

    pub fn is_decided(&self) -> bool {
        self.decision.is_some()
    }

    /// Acceptor rule for phase one: promise strictly higher tries only.
    pub fn on_prepare(&mut self, msg: &Prepare) -> Option<Promise> {
        if self.promised_try >= Some(msg.try_) {
            return None;
        }
        self.promised_try = Some(msg.try_);
        Some(Promise {
            choice: msg.choice,
            accepted: self.accepted.clone(),
            try_: msg.try_,
        })
    }

    /// Acceptor rule for phase two: accept any try at least as high as the
    /// promise, raising the promise to keep `accepted_try <= promised_try`.
    pub fn on_propose(&mut self, msg: &Propose) -> Option<Accept> {
        if self.promised_try > Some(msg.try_) {
            return None;
        }
        self.promised_try = Some(msg.try_);
        self.accepted = Some((msg.try_, msg.value.clone()));
        Some(Accept {
            choice: msg.choice,
            accepted_try: msg.try_,
            accepted_value: msg.value.clone(),
            piggyback: None,
        })
    }

    pub fn on_learn(&mut self, msg: &Learn) -> LearnOutcome {
        self.decide(&msg.value)
    }

    /// Records a decision. The flag flips at most once and is never
    /// overwritten.
    pub fn decide(&mut self, value: &Value) -> LearnOutcome {
        match &self.decision {
            None => {
                self.decision = Some(value.clone());
                LearnOutcome::Decided
            }
            Some(v) if v == value => LearnOutcome::AlreadyDecided,
            Some(_) => LearnOutcome::Conflict,
        }
    }
}

impl fmt::Display for ChoiceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "choice {} proposed={} promised={} accepted={}",
            self.id,
            ShowTry(self.proposed_try),
            ShowTry(self.promised_try),
            ShowTry(self.accepted_try()),
        )?;
        match &self.decision {
            Some(v) => write!(f, " decided={:?}", v),
            None => f.write_str(" undecided"),
        }
    }
}
