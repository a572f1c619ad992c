use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::ReplicaId;
use crate::simnet::SimTime;

/// Fixed per-command overhead inside a batch: request id, kind, key and
/// payload length.
pub const COMMAND_OVERHEAD_BYTES: u64 = 24;

/// `(client, sequence number)`; unique per logical request.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct RequestId {
    pub client: u32,
    pub seq: u64,
}

impl RequestId {
    pub fn new(client: u32, seq: u64) -> Self {
        RequestId { client, seq }
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.client, self.seq)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Read,
    Write,
}

/// A payload of declared size. Only the length and a token standing in for
/// the content are stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Payload {
    pub len: u32,
    pub token: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Command {
    pub id: RequestId,
    pub kind: Kind,
    pub key: u64,
    pub payload: Payload,
    /// Replica that received the request from its client and answers it.
    pub ingress: ReplicaId,
}

impl Command {
    pub fn wire_size(&self) -> u64 {
        COMMAND_OVERHEAD_BYTES + self.payload.len as u64
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.id.client.to_le_bytes());
        out.extend_from_slice(&self.id.seq.to_le_bytes());
        out.push(match self.kind {
            Kind::Read => 0,
            Kind::Write => 1,
        });
        out.extend_from_slice(&self.key.to_le_bytes());
        out.extend_from_slice(&self.payload.len.to_le_bytes());
        out.extend_from_slice(&self.payload.token.to_le_bytes());
        out.extend_from_slice(&self.ingress.0.to_le_bytes());
    }
}

/// Commands collected by one replica during one batching window.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub commands: Vec<Command>,
    pub created: SimTime,
    pub bytes: u64,
}

impl Batch {
    /// Returns None for an empty command list.
    pub fn new(commands: Vec<Command>, created: SimTime) -> Option<Self> {
        if commands.is_empty() {
            return None;
        }
        let bytes = commands.iter().map(Command::wire_size).sum();
        Some(Batch {
            commands,
            created,
            bytes,
        })
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}
