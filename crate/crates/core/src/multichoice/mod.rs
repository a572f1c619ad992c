//! The replicated log on top of single-choice Baxos.
//!
//! Every replica proposes at `last_decided_choice + 1`. A proposer that times
//! out backs off and retries at whatever index is open by then; one that
//! loses its index to a foreign value re-proposes its commands at the next
//! index without touching its retry counter. Commands that reach the log
//! twice are applied only once.

mod command;
mod log;
mod replica;

pub use command::{Batch, Command, Kind, Payload, RequestId, COMMAND_OVERHEAD_BYTES};
pub use log::{AppliedSet, DecidedEntry, DecidedLog, KvStateMachine, ReplicatedLog};
pub use replica::{BaxosOptions, BaxosReplica, TAG_BACKOFF, TAG_BATCH, TAG_CATCHUP, TAG_PHASE};
