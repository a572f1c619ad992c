use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::multichoice::Command;

/// Dense replica identifier in `0..n`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ReplicaId(pub u16);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ReplicaId {
    fn from(i: usize) -> Self {
        ReplicaId(i as u16)
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Cluster geometry: `n = 2f + 1` replicas tolerating `f` crashes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    n: usize,
    f: usize,
}

impl ClusterConfig {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::Cluster(format!(
                "replica count must be odd and at least 3, got {n}"
            )));
        }
        if n > u16::MAX as usize {
            return Err(Error::Cluster(format!("replica count {n} is too large")));
        }
        Ok(ClusterConfig { n, f: (n - 1) / 2 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    /// Majority quorum, `f + 1`. Any two quorums intersect because `2(f+1) > n`.
    pub fn quorum(&self) -> usize {
        self.f + 1
    }

    pub fn replicas(&self) -> impl Iterator<Item = ReplicaId> + Clone {
        (0..self.n).map(ReplicaId::from)
    }
}

/// A try (ballot) number. Ordered by round first, then by proposer id, so two
/// proposers can never issue the same try.
///
/// The "no try yet" sentinel is `Option::<TryNumber>::None`, which `Option`'s
/// ordering already places below every real try.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TryNumber {
    pub round: u64,
    pub proposer: ReplicaId,
}

impl TryNumber {
    pub fn new(round: u64, proposer: ReplicaId) -> Self {
        TryNumber { round, proposer }
    }

    /// `max(promised, proposed) + 1`, owned by `proposer`. A missing proposed
    /// try counts as round 0 and a missing promise as below it, so the first
    /// try a fresh replica issues has round 1.
    pub fn next_after(
        promised: Option<TryNumber>,
        proposed: Option<TryNumber>,
        proposer: ReplicaId,
    ) -> TryNumber {
        let base = promised
            .map(|t| t.round)
            .max(proposed.map(|t| t.round))
            .unwrap_or(0);
        TryNumber::new(base + 1, proposer)
    }
}

impl fmt::Display for TryNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.round, self.proposer.0)
    }
}

/// Renders an optional try, using `-` for the sentinel.
pub struct ShowTry(pub Option<TryNumber>);

impl fmt::Display for ShowTry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(t) => t.fmt(f),
            None => f.write_str("-"),
        }
    }
}

/// Truncated SHA-256 content digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 16]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        let full = Sha256::digest(bytes);
        let mut out = [0u8; 16];
        out.copy_from_slice(&full[..16]);
        Digest(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 16] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..8])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug)]
struct ValueBody {
    digest: Digest,
    origin: ReplicaId,
    wire_bytes: u64,
    commands: Vec<Command>,
    label: Option<Box<[u8]>>,
}

/// An immutable proposal value: a batch of commands, or an opaque byte string
/// in tests. Cloning is cheap; equality is by content digest.
#[derive(Clone)]
pub struct Value(Arc<ValueBody>);

impl Value {
    /// A batch value. `nonce` distinguishes otherwise identical batches from
    /// the same origin.
    pub fn from_commands(origin: ReplicaId, nonce: u64, commands: Vec<Command>) -> Value {
        let mut enc = Vec::with_capacity(16 + commands.len() * 32);
        enc.extend_from_slice(b"batch");
        enc.extend_from_slice(&origin.0.to_le_bytes());
        enc.extend_from_slice(&nonce.to_le_bytes());
        for c in &commands {
            c.encode_into(&mut enc);
        }
        let wire_bytes = commands.iter().map(Command::wire_size).sum();
        Value(Arc::new(ValueBody {
            digest: Digest::of(&enc),
            origin,
            wire_bytes,
            commands,
            label: None,
        }))
    }

    /// An opaque value with the given payload bytes.
    pub fn opaque(origin: ReplicaId, bytes: &[u8]) -> Value {
        let mut enc = Vec::with_capacity(8 + bytes.len());
        enc.extend_from_slice(b"opaque");
        enc.extend_from_slice(bytes);
        Value(Arc::new(ValueBody {
            digest: Digest::of(&enc),
            origin,
            wire_bytes: bytes.len() as u64,
            commands: Vec::new(),
            label: Some(bytes.into()),
        }))
    }

    pub fn digest(&self) -> Digest {
        self.0.digest
    }

    /// The proposer that created this value (diagnostics only).
    pub fn origin(&self) -> ReplicaId {
        self.0.origin
    }

    pub fn commands(&self) -> &[Command] {
        &self.0.commands
    }

    /// Bytes this value occupies inside a message.
    pub fn wire_bytes(&self) -> u64 {
        self.0.wire_bytes
    }

    pub fn is_empty(&self) -> bool {
        self.0.commands.is_empty() && self.0.label.as_ref().is_none_or(|l| l.is_empty())
    }

    /// Deterministic serialization: the digest followed by the payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.0.digest.0);
        out.extend_from_slice(&self.0.origin.0.to_le_bytes());
        match &self.0.label {
            Some(l) => out.extend_from_slice(l),
            None => {
                for c in &self.0.commands {
                    c.encode_into(&mut out);
                }
            }
        }
        out
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.0.digest == other.0.digest
    }
}

impl Eq for Value {}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.label {
            Some(l) => write!(f, "{:?}", String::from_utf8_lossy(l)),
            None => write!(
                f,
                "batch[{}x{} from {}]",
                self.0.digest,
                self.0.commands.len(),
                self.0.origin
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_requires_odd_n_at_least_three() {
        assert!(ClusterConfig::new(1).is_err());
        assert!(ClusterConfig::new(4).is_err());
        let c = ClusterConfig::new(5).unwrap();
        assert_eq!((c.n(), c.f(), c.quorum()), (5, 2, 3));
        assert_eq!(ClusterConfig::new(3).unwrap().quorum(), 2);
    }

    #[test]
    fn tries_order_by_round_then_proposer() {
        let a = TryNumber::new(1, ReplicaId(4));
        let b = TryNumber::new(2, ReplicaId(0));
        let c = TryNumber::new(2, ReplicaId(1));
        assert!(a < b && b < c);
        assert!(None < Some(TryNumber::new(0, ReplicaId(0))));
    }

    #[test]
    fn next_try_exceeds_promised_and_proposed() {
        let me = ReplicaId(1);
        assert_eq!(TryNumber::next_after(None, None, me), TryNumber::new(1, me));
        let promised = Some(TryNumber::new(7, ReplicaId(3)));
        let proposed = Some(TryNumber::new(4, me));
        let next = TryNumber::next_after(promised, proposed, me);
        assert_eq!(next, TryNumber::new(8, me));
        assert!(Some(next) > promised);
    }

    #[test]
    fn values_compare_by_content() {
        let a = Value::opaque(ReplicaId(0), b"A");
        let a2 = Value::opaque(ReplicaId(3), b"A");
        let b = Value::opaque(ReplicaId(0), b"B");
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_eq!(a.encode()[..16], a.digest().0);
        assert_eq!(Digest::from_hex(&a.digest().to_hex()), Some(a.digest()));
    }
}
