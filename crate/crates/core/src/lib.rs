//! Deterministic discrete-event simulation of Baxos, a leaderless consensus
//! protocol that resolves contention with random exponential backoff instead of
//! electing a leader.
//!
//! The crate is organised bottom-up:
//!
//! - [`protocol`]: the single-choice state machine (tries, choice records,
//!   the five-message vocabulary and the pure acceptor/proposer transitions).
//! - [`backoff`]: the backoff schemes, retry bookkeeping, RTT estimation and
//!   the analytic termination probability with its Monte Carlo counterpart.
//! - [`multichoice`]: the replicated log built from single-choice instances,
//!   with batching, the piggybacked next-choice Prepare, duplicate
//!   suppression and a key-value state machine.
//! - [`multipaxos`]: a leader-based Multi-Paxos comparator with view changes.
//! - [`simnet`]: the event loop, wide-area latency model, partial synchrony
//!   and the delay / packet-loss / crash attack injectors.
//! - [`workload`]: open-loop Poisson clients, request routing and the metric
//!   pipelines.
//! - [`scenario`], [`export`], [`verify`], [`runner`]: the operational surface
//!   used by the `baxos` binary and the FFI crate.

pub mod backoff;
pub mod error;
pub mod export;
pub mod multichoice;
pub mod multipaxos;
pub mod protocol;
pub mod runner;
pub mod scenario;
pub mod simnet;
pub mod verify;
pub mod workload;

pub use error::{Error, Result};
