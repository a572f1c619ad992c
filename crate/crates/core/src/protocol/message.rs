use std::fmt;

use super::types::{ShowTry, TryNumber, Value};
use crate::simnet::{Wire, HEADER_BYTES};

/// Bytes charged for a value that is echoed back by digest only.
pub const DIGEST_BYTES: u64 = 16;
/// Extra fields carried by a piggybacked Prepare or Promise.
pub const EMBEDDED_BYTES: u64 = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prepare {
    pub choice: u64,
    pub try_: TryNumber,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Promise {
    pub choice: u64,
    pub accepted: Option<(TryNumber, Value)>,
    /// The try of the Prepare this Promise answers.
    pub try_: TryNumber,
}

impl Promise {
    pub fn accepted_try(&self) -> Option<TryNumber> {
        self.accepted.as_ref().map(|(t, _)| *t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Propose {
    pub choice: u64,
    pub try_: TryNumber,
    pub value: Value,
    /// Prepare for `choice + 1`, riding along so a proposer that keeps winning
    /// can skip phase one next time.
    pub piggyback: Option<Prepare>,
    /// Decision of the previous choice, handled after the Propose itself.
    pub learn: Option<Learn>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accept {
    pub choice: u64,
    pub accepted_try: TryNumber,
    pub accepted_value: Value,
    /// Answer to the Propose's piggybacked Prepare, when it was granted.
    pub piggyback: Option<Promise>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Learn {
    pub choice: u64,
    pub value: Value,
}

/// The Baxos message vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolMessage {
    Prepare(Prepare),
    Promise(Promise),
    Propose(Propose),
    Accept(Accept),
    Learn(Learn),
}

impl ProtocolMessage {
    pub fn choice(&self) -> u64 {
        match self {
            ProtocolMessage::Prepare(m) => m.choice,
            ProtocolMessage::Promise(m) => m.choice,
            ProtocolMessage::Propose(m) => m.choice,
            ProtocolMessage::Accept(m) => m.choice,
            ProtocolMessage::Learn(m) => m.choice,
        }
    }
}

impl Wire for ProtocolMessage {
    fn wire_bytes(&self) -> u64 {
        HEADER_BYTES
            + match self {
                ProtocolMessage::Prepare(_) => 0,
                ProtocolMessage::Promise(p) => {
                    p.accepted.as_ref().map_or(0, |(_, v)| v.wire_bytes())
                }
                ProtocolMessage::Propose(p) => {
                    p.value.wire_bytes()
                        + p.piggyback.as_ref().map_or(0, |_| EMBEDDED_BYTES)
                        + p.learn
                            .as_ref()
                            .map_or(0, |l| EMBEDDED_BYTES + l.value.wire_bytes())
                }
                ProtocolMessage::Accept(a) => {
                    DIGEST_BYTES
                        + a.piggyback.as_ref().map_or(0, |p| {
                            EMBEDDED_BYTES + p.accepted.as_ref().map_or(0, |(_, v)| v.wire_bytes())
                        })
                }
                ProtocolMessage::Learn(l) => l.value.wire_bytes(),
            }
    }

    fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::Prepare(_) => "prepare",
            ProtocolMessage::Promise(_) => "promise",
            ProtocolMessage::Propose(_) => "propose",
            ProtocolMessage::Accept(_) => "accept",
            ProtocolMessage::Learn(_) => "learn",
        }
    }
}

impl fmt::Display for ProtocolMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolMessage::Prepare(m) => write!(f, "prepare c={} t={}", m.choice, m.try_),
            ProtocolMessage::Promise(m) => write!(
                f,
                "promise c={} t={} acc={}",
                m.choice,
                m.try_,
                ShowTry(m.accepted_try())
            ),
            ProtocolMessage::Propose(m) => {
                write!(
                    f,
                    "propose c={} t={} v={}",
                    m.choice,
                    m.try_,
                    m.value.digest()
                )?;
                if let Some(p) = &m.piggyback {
                    write!(f, " +prepare c={} t={}", p.choice, p.try_)?;
                }
                if let Some(l) = &m.learn {
                    write!(f, " +learn c={} v={}", l.choice, l.value.digest())?;
                }
                Ok(())
            }
            ProtocolMessage::Accept(m) => {
                write!(f, "accept c={} t={}", m.choice, m.accepted_try)?;
                if let Some(p) = &m.piggyback {
                    write!(f, " +promise c={} t={}", p.choice, p.try_)?;
                }
                Ok(())
            }
            ProtocolMessage::Learn(m) => write!(f, "learn c={} v={}", m.choice, m.value.digest()),
        }
    }
}
