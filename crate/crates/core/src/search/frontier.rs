use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::lattice::NodeId;

/// Search priority with a tier above every finite score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Priority {
    Finite(f64),
    Infinite,
}

impl Eq for Priority {}

impl PartialOrd for Priority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Priority {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Priority::Infinite, Priority::Infinite) => Ordering::Equal,
            (Priority::Infinite, _) => Ordering::Greater,
            (_, Priority::Infinite) => Ordering::Less,
            (Priority::Finite(a), Priority::Finite(b)) => a.total_cmp(b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrontierEntry {
    pub priority: Priority,
    pub node: NodeId,
    pub seq: u64,
}

impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontierEntry {
    /// Higher priority first, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Max-priority queue with FIFO tie-breaking.
#[derive(Clone, Debug, Default)]
pub struct Frontier {
    heap: BinaryHeap<FrontierEntry>,
    next_seq: u64,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, node: NodeId, priority: Priority) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(FrontierEntry { priority, node, seq });
    }

    pub fn pop(&mut self) -> Option<FrontierEntry> {
        self.heap.pop()
    }

    pub fn peek(&self) -> Option<&FrontierEntry> {
        self.heap.peek()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
