//! The dissemination record shared by both strategies, and its canonical
//! binary encoding.
//!
//! Copies are value-semantic: forwarding clones the record, so two in-flight
//! copies never share mutable state.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ClusterId, MsgId, WorkerId};

/// Sorted, duplicate-free set of IDs backed by a `Vec`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(
    from = "Vec<T>",
    bound(deserialize = "T: Ord + Copy + Deserialize<'de>")
)]
pub struct IdSet<T: Ord>(Vec<T>);

impl<T: Ord + Copy> From<Vec<T>> for IdSet<T> {
    fn from(v: Vec<T>) -> Self {
        v.into_iter().collect()
    }
}

impl<T: Ord + Copy> IdSet<T> {
    pub fn new() -> Self {
        IdSet(Vec::new())
    }

    /// Inserts `v`; returns false if it was already present.
    pub fn insert(&mut self, v: T) -> bool {
        match self.0.binary_search(&v) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, v);
                true
            }
        }
    }

    pub fn contains(&self, v: &T) -> bool {
        self.0.binary_search(v).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = T> + Clone + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    /// Elements of `self` not in `other`, ascending.
    pub fn difference(&self, other: &IdSet<T>) -> IdSet<T> {
        IdSet(
            self.0
                .iter()
                .copied()
                .filter(|v| !other.contains(v))
                .collect(),
        )
    }

    pub fn is_subset(&self, other: &IdSet<T>) -> bool {
        self.0.iter().all(|v| other.contains(v))
    }
}

impl<T: Ord + Copy> FromIterator<T> for IdSet<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut v: Vec<T> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        IdSet(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MessageError {
    #[error("command has an empty goal set")]
    EmptyGoalSet,
    #[error("truncated encoding")]
    Truncated,
    #[error("length prefix {declared} does not match body length {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("set field is not strictly ascending")]
    UnsortedSet,
    #[error("invalid forward flag byte {0}")]
    InvalidFlag(u8),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub msg_id: MsgId,
    pub goal_cluster_ids: IdSet<ClusterId>,
    /// Workers that should execute; empty means cluster-level policy
    /// (every alive worker of a goal cluster).
    pub target_worker_ids: IdSet<WorkerId>,
    pub visited_cluster_ids: IdSet<ClusterId>,
    pub executed_cluster_ids: IdSet<ClusterId>,
    pub hop_count: u32,
    pub original_source: ClusterId,
    pub last_sent_cluster_id: ClusterId,
    /// Workers are authorised to broadcast this copy.
    pub forward_flag: bool,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new_command(
        origin: ClusterId,
        seq: u32,
        goals: impl IntoIterator<Item = ClusterId>,
        targets: impl IntoIterator<Item = WorkerId>,
        payload: Vec<u8>,
    ) -> Result<Message, MessageError> {
        let goal_cluster_ids: IdSet<ClusterId> = goals.into_iter().collect();
        if goal_cluster_ids.is_empty() {
            return Err(MessageError::EmptyGoalSet);
        }
        Ok(Message {
            msg_id: MsgId::new(origin, seq),
            goal_cluster_ids,
            target_worker_ids: targets.into_iter().collect(),
            visited_cluster_ids: IdSet::new(),
            executed_cluster_ids: IdSet::new(),
            hop_count: 0,
            original_source: origin,
            last_sent_cluster_id: origin,
            forward_flag: false,
            payload,
        })
    }

    /// Goal clusters this copy has not seen executed.
    pub fn unexecuted_goals(&self) -> IdSet<ClusterId> {
        self.goal_cluster_ids.difference(&self.executed_cluster_ids)
    }

    pub fn is_goal(&self, c: ClusterId) -> bool {
        self.goal_cluster_ids.contains(&c)
    }

    /// Copy for one cluster-level forward from `from`.
    pub fn forwarded(&self, from: ClusterId, forward_flag: bool) -> Message {
        let mut copy = self.clone();
        copy.hop_count += 1;
        copy.last_sent_cluster_id = from;
        copy.forward_flag = forward_flag;
        copy
    }

    /// Checks the structural invariants of a single copy.
    pub fn check_invariants(&self) -> bool {
        self.executed_cluster_ids.is_subset(&self.goal_cluster_ids)
            && self
                .executed_cluster_ids
                .is_subset(&self.visited_cluster_ids)
            && self.original_source == self.msg_id.origin
    }

    /// Canonical encoding: a `u32` little-endian body length, then the fields in
    /// declaration order. Sets are a `u32` count followed by ascending `u32`
    /// IDs; the flag is one byte; the payload is length-prefixed.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(64 + self.payload.len());
        put_u32(&mut body, self.msg_id.origin.0);
        put_u32(&mut body, self.msg_id.seq);
        put_set(&mut body, self.goal_cluster_ids.iter().map(|c| c.0));
        put_set(&mut body, self.target_worker_ids.iter().map(|w| w.0));
        put_set(&mut body, self.visited_cluster_ids.iter().map(|c| c.0));
        put_set(&mut body, self.executed_cluster_ids.iter().map(|c| c.0));
        put_u32(&mut body, self.hop_count);
        put_u32(&mut body, self.original_source.0);
        put_u32(&mut body, self.last_sent_cluster_id.0);
        body.push(self.forward_flag as u8);
        put_u32(&mut body, self.payload.len() as u32);
        body.extend_from_slice(&self.payload);

        let mut out = Vec::with_capacity(body.len() + 4);
        put_u32(&mut out, body.len() as u32);
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, MessageError> {
        let mut r = Reader { buf: bytes };
        let declared = r.u32()? as usize;
        if declared != r.buf.len() {
            return Err(MessageError::LengthMismatch {
                declared,
                actual: r.buf.len(),
            });
        }
        let origin = ClusterId(r.u32()?);
        let seq = r.u32()?;
        let goals = r.set(ClusterId)?;
        let targets = r.set(WorkerId)?;
        let visited = r.set(ClusterId)?;
        let executed = r.set(ClusterId)?;
        let hop_count = r.u32()?;
        let original_source = ClusterId(r.u32()?);
        let last_sent = ClusterId(r.u32()?);
        let forward_flag = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(MessageError::InvalidFlag(b)),
        };
        let n = r.u32()? as usize;
        let payload = r.take(n)?.to_vec();
        if !r.buf.is_empty() {
            return Err(MessageError::LengthMismatch {
                declared,
                actual: declared + r.buf.len(),
            });
        }
        Ok(Message {
            msg_id: MsgId::new(origin, seq),
            goal_cluster_ids: goals,
            target_worker_ids: targets,
            visited_cluster_ids: visited,
            executed_cluster_ids: executed,
            hop_count,
            original_source,
            last_sent_cluster_id: last_sent,
            forward_flag,
            payload,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_set(out: &mut Vec<u8>, ids: impl ExactSizeIterator<Item = u32>) {
    put_u32(out, ids.len() as u32);
    for id in ids {
        put_u32(out, id);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MessageError> {
        if self.buf.len() < n {
            return Err(MessageError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, MessageError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, MessageError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn set<T: Ord + Copy>(&mut self, wrap: fn(u32) -> T) -> Result<IdSet<T>, MessageError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() / 4 {
            return Err(MessageError::Truncated);
        }
        let mut v = Vec::with_capacity(n);
        let mut prev: Option<u32> = None;
        for _ in 0..n {
            let id = self.u32()?;
            if prev.is_some_and(|p| p >= id) {
                return Err(MessageError::UnsortedSet);
            }
            prev = Some(id);
            v.push(wrap(id));
        }
        Ok(IdSet(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(i: u32) -> ClusterId {
        ClusterId(i)
    }

    #[test]
    fn new_command_defaults() {
        let m = Message::new_command(c(3), 7, [c(1), c(2)], [], alloc::vec![]).unwrap();
        assert_eq!(m.hop_count, 0);
        assert!(m.visited_cluster_ids.is_empty());
        assert!(m.executed_cluster_ids.is_empty());
        assert!(!m.forward_flag);
        assert_eq!(m.original_source, c(3));
        assert_eq!(m.last_sent_cluster_id, c(3));
        assert!(m.target_worker_ids.is_empty());
        let again = Message::new_command(c(3), 7, [c(9)], [WorkerId(1)], alloc::vec![1]).unwrap();
        assert_eq!(m.msg_id, again.msg_id);
    }

    #[test]
    fn empty_goals_rejected() {
        assert_eq!(
            Message::new_command(c(0), 0, [], [], alloc::vec![]),
            Err(MessageError::EmptyGoalSet)
        );
    }

    #[test]
    fn unexecuted_goal_difference() {
        let mut m = Message::new_command(c(0), 0, [c(1), c(2), c(3)], [], alloc::vec![]).unwrap();
        assert_eq!(m.unexecuted_goals(), m.goal_cluster_ids);
        m.executed_cluster_ids.insert(c(2));
        assert_eq!(m.unexecuted_goals(), [c(1), c(3)].into_iter().collect());
        for g in [c(1), c(3)] {
            m.executed_cluster_ids.insert(g);
        }
        assert!(m.unexecuted_goals().is_empty());
    }

    #[test]
    fn forwarded_copy() {
        let mut m = Message::new_command(c(0), 0, [c(1)], [], alloc::vec![]).unwrap();
        m.hop_count = 3;
        let f = m.forwarded(c(5), true);
        assert_eq!(f.hop_count, 4);
        assert_eq!(f.last_sent_cluster_id, c(5));
        assert!(f.forward_flag);
        assert_eq!(m.hop_count, 3);
    }

    #[test]
    fn encoding_layout() {
        let m = Message::new_command(c(1), 2, [c(4)], [], alloc::vec![0xAB]).unwrap();
        let bytes = m.encode();
        let expect: &[u8] = &[
            46, 0, 0, 0, // body length
            1, 0, 0, 0, 2, 0, 0, 0, // msg id
            1, 0, 0, 0, 4, 0, 0, 0, // goals
            0, 0, 0, 0, // targets
            0, 0, 0, 0, // visited
            0, 0, 0, 0, // executed
            0, 0, 0, 0, // hop count
            1, 0, 0, 0, // original source
            1, 0, 0, 0, // last sent
            0, // flag
            1, 0, 0, 0, 0xAB, // payload
        ];
        assert_eq!(bytes, expect);
    }

    #[test]
    fn decode_rejects_malformed() {
        let m = Message::new_command(c(1), 2, [c(4), c(5)], [], alloc::vec![]).unwrap();
        let bytes = m.encode();
        assert_eq!(
            Message::decode(&bytes[..bytes.len() - 1]).err().map(|_| ()),
            Some(())
        );
        let mut swapped = bytes.clone();
        // goals are at offset 12: count, 4, 5 -> make them 5, 4
        swapped[16] = 5;
        swapped[20] = 4;
        assert_eq!(Message::decode(&swapped), Err(MessageError::UnsortedSet));
    }

    fn arb_set(max: u32) -> impl Strategy<Value = Vec<u32>> {
        proptest::collection::vec(0..max, 0..8)
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(
            origin in 0u32..100, seq in any::<u32>(),
            goals in proptest::collection::vec(0u32..100, 1..8),
            targets in arb_set(1000), visited in arb_set(100), executed in arb_set(100),
            hop in any::<u32>(), last in 0u32..100, flag in any::<bool>(),
            payload in proptest::collection::vec(any::<u8>(), 0..32),
        ) {
            let mut m = Message::new_command(
                ClusterId(origin), seq, goals.into_iter().map(ClusterId),
                targets.into_iter().map(WorkerId), payload,
            ).unwrap();
            m.visited_cluster_ids = visited.into_iter().map(ClusterId).collect();
            m.executed_cluster_ids = executed.into_iter().map(ClusterId).collect();
            m.hop_count = hop;
            m.last_sent_cluster_id = ClusterId(last);
            m.forward_flag = flag;
            let bytes = m.encode();
            prop_assert_eq!(Message::decode(&bytes).unwrap(), m.clone());
            // canonical: re-encoding is byte-identical
            prop_assert_eq!(Message::decode(&bytes).unwrap().encode(), bytes);
        }
    }
}
