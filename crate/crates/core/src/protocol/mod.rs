//! Single-choice Baxos: tries, the choice record, the five protocol messages
//! and the pure acceptor and proposer transitions.
//!
//! Acceptors only ever move `promised_try` and `accepted_try` upwards, and a
//! decision, once recorded, is never replaced. Everything time- or
//! network-related lives in the callers.

mod choice;
mod message;
mod session;
mod types;

pub use choice::{ChoiceState, LearnOutcome};
pub use message::{
    Accept, Learn, Prepare, Promise, Propose, ProtocolMessage, DIGEST_BYTES, EMBEDDED_BYTES,
};
pub use session::{select_value, BackoffRequest, DecisionOutcome, Phase, ProposerSession};
pub use types::{ClusterConfig, Digest, ReplicaId, ShowTry, TryNumber, Value};
