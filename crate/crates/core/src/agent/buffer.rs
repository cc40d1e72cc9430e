use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::codec::{Reader, Writer};
use crate::env::PartitionAction;
use crate::{CellId, Error, Result};

pub const BUFFER_MAGIC: [u8; 4] = *b"RBUF";

/// Training phase in which a transition was collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    /// Collected under the fixed default action.
    Default,
    /// Random simplex actions.
    Exploration,
    /// Noisy actor actions while training.
    Training,
    /// Noisy actor actions while fine-tuning a transferred agent.
    FineTune,
}

impl Phase {
    fn code(self) -> u8 {
        match self {
            Phase::Default => 0,
            Phase::Exploration => 1,
            Phase::Training => 2,
            Phase::FineTune => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Phase::Default,
            1 => Phase::Exploration,
            2 => Phase::Training,
            3 => Phase::FineTune,
            _ => return Err(Error::Decode(format!("unknown phase code {code}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: PartitionAction,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Agent whose environment produced the transition.
    pub origin: CellId,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    seq: u64,
    transition: Transition,
}

/// Bounded replay memory of one agent.
///
/// Transitions from other agents (instance transfer) are kept apart from the
/// owner's own experience. When full, the oldest entry is evicted, except
/// that once the owner has at least `protect_after` transitions of its own
/// the oldest foreign entry goes first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    owner: CellId,
    capacity: usize,
    protect_after: usize,
    own: VecDeque<Entry>,
    foreign: VecDeque<Entry>,
    next_seq: u64,
}

impl ReplayBuffer {
    pub fn new(owner: CellId, capacity: usize, protect_after: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs a positive capacity");
        ReplayBuffer {
            owner,
            capacity,
            protect_after,
            own: VecDeque::new(),
            foreign: VecDeque::new(),
            next_seq: 0,
        }
    }

    pub fn owner(&self) -> CellId {
        self.owner
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn protect_after(&self) -> usize {
        self.protect_after
    }

    pub fn len(&self) -> usize {
        self.own.len() + self.foreign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn own_len(&self) -> usize {
        self.own.len()
    }

    pub fn foreign_len(&self) -> usize {
        self.foreign.len()
    }

    pub fn push(&mut self, transition: Transition) {
        let entry = Entry {
            seq: self.next_seq,
            transition,
        };
        self.next_seq += 1;
        if entry.transition.origin == self.owner {
            self.own.push_back(entry);
        } else {
            self.foreign.push_back(entry);
        }
        while self.len() > self.capacity {
            self.evict();
        }
    }

    fn evict(&mut self) {
        if self.own.len() >= self.protect_after && !self.foreign.is_empty() {
            self.foreign.pop_front();
            return;
        }
        match (self.own.front(), self.foreign.front()) {
            (Some(a), Some(b)) if b.seq < a.seq => {
                self.foreign.pop_front();
            }
            (Some(_), _) => {
                self.own.pop_front();
            }
            (None, _) => {
                self.foreign.pop_front();
            }
        }
    }

    /// Transition at position `i` of the sampling index (own entries first).
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i < self.own.len() {
            Some(&self.own[i].transition)
        } else {
            self.foreign.get(i - self.own.len()).map(|e| &e.transition)
        }
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        let len = self.len();
        if len == 0 {
            return Vec::new();
        }
        (0..batch)
            .map(|_| self.get(rng.random_range(0..len)).expect("index in range"))
            .collect()
    }

    /// All transitions in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        let mut own = self.own.iter().peekable();
        let mut foreign = self.foreign.iter().peekable();
        core::iter::from_fn(move || {
            let take_own = match (own.peek(), foreign.peek()) {
                (Some(a), Some(b)) => a.seq < b.seq,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => return None,
            };
            let e = if take_own { own.next() } else { foreign.next() };
            e.map(|e| &e.transition)
        })
    }

    /// Versioned binary export with a fixed field order per transition:
    /// state, action shares, reward, next state, origin, phase.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.header(BUFFER_MAGIC);
        w.u32(self.owner);
        w.u64(self.capacity as u64);
        w.u64(self.protect_after as u64);
        w.u64(self.len() as u64);
        for t in self.iter() {
            w.len_prefixed(&t.state);
            w.len_prefixed(t.action.shares());
            w.f64(t.reward);
            w.len_prefixed(&t.next_state);
            w.u32(t.origin);
            w.u8(t.phase.code());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(BUFFER_MAGIC)?;
        let owner = r.u32()?;
        let capacity = r.usize()?;
        let protect_after = r.usize()?;
        let count = r.usize()?;
        if capacity == 0 {
            return Err(Error::Decode("zero buffer capacity".into()));
        }
        let mut buf = ReplayBuffer::new(owner, capacity, protect_after);
        for _ in 0..count {
            let state = r.len_prefixed()?;
            let action =
                PartitionAction::new(r.len_prefixed()?).map_err(|e| Error::Decode(format!("{e}")))?;
            let reward = r.f64()?;
            let next_state = r.len_prefixed()?;
            let origin = r.u32()?;
            let phase = Phase::from_code(r.u8()?)?;
            buf.push(Transition {
                state,
                action,
                reward,
                next_state,
                origin,
                phase,
            });
        }
        r.expect_end()?;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use alloc::vec;
    use rand::SeedableRng;

    fn t(origin: CellId, tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: PartitionAction::equal(2),
            reward: 0.5,
            next_state: vec![tag + 1.0],
            origin,
            phase: Phase::Training,
        }
    }

    #[test]
    fn bounded_and_oldest_first() {
        let mut b = ReplayBuffer::new(0, 3, 2);
        for i in 0..5 {
            b.push(t(0, i as f64));
        }
        assert_eq!(b.len(), 3);
        let tags: Vec<f64> = b.iter().map(|t| t.state[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn foreign_evicted_first_once_owner_has_enough() {
        let mut b = ReplayBuffer::new(7, 4, 2);
        b.push(t(1, 0.0));
        b.push(t(1, 1.0));
        b.push(t(7, 2.0));
        b.push(t(7, 3.0));
        b.push(t(7, 4.0));
        // Owner had 2 >= protect_after, so the oldest foreign entry left.
        assert_eq!(b.own_len(), 3);
        assert_eq!(b.foreign_len(), 1);
        b.push(t(7, 5.0));
        assert_eq!(b.foreign_len(), 0);
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn oldest_evicted_while_owner_is_short() {
        let mut b = ReplayBuffer::new(7, 2, 5);
        b.push(t(7, 0.0));
        b.push(t(1, 1.0));
        b.push(t(7, 2.0));
        let tags: Vec<f64> = b.iter().map(|t| t.state[0]).collect();
        assert_eq!(tags, vec![1.0, 2.0]);
    }

    #[test]
    fn sampling_is_reproducible_and_uniform() {
        let mut b = ReplayBuffer::new(0, 100, 1);
        for i in 0..10 {
            b.push(t(if i % 2 == 0 { 0 } else { 3 }, i as f64));
        }
        let mut r1 = SimRng::seed_from_u64(42);
        let mut r2 = SimRng::seed_from_u64(42);
        let a: Vec<f64> = b.sample(50, &mut r1).iter().map(|t| t.state[0]).collect();
        let c: Vec<f64> = b.sample(50, &mut r2).iter().map(|t| t.state[0]).collect();
        assert_eq!(a, c);

        let draws = 100_000;
        let mut counts = [0usize; 10];
        for tr in b.sample(draws, &mut r1) {
            counts[tr.state[0] as usize] += 1;
        }
        let p = 0.1;
        let mean = draws as f64 * p;
        let sd = libm::sqrt(draws as f64 * p * (1.0 - p));
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn export_round_trip() {
        let mut b = ReplayBuffer::new(2, 10, 3);
        b.push(t(2, 0.1));
        b.push(t(5, 0.2));
        b.push(Transition {
            phase: Phase::Default,
            ..t(2, 0.3)
        });
        let back = ReplayBuffer::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(back.iter().collect::<Vec<_>>(), b.iter().collect::<Vec<_>>());
        assert_eq!(back.to_bytes(), b.to_bytes());
        assert!(ReplayBuffer::from_bytes(&b.to_bytes()[..20]).is_err());
    }
}
