//! Deterministic discrete-event simulation.
//!
//! Two modes: an isolated tandem of priority queues (`queueing`) and the
//! flow-level network with a provisioning policy in the loop (`network`).

pub mod compare;
pub mod linkfct;
pub mod network;
pub mod queueing;
pub mod workload;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Arrivals = 1,
    Classes = 2,
    Service = 3,
    Sizes = 4,
    Placement = 5,
    Hash = 6,
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha12Rng {
    let mut r = ChaCha12Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unstable: queue at {location} grew past {cap} entries at t={time}")]
    Unstable {
        location: String,
        cap: usize,
        time: f64,
    },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Provision(#[from] crate::groom::ProvisionError),
    #[error(transparent)]
    Topology(#[from] crate::topo::TopologyError),
}

#[derive(Debug, Clone, Copy)]
struct Key {
    time: f64,
    rank: u8,
    seq: u64,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.rank.cmp(&other.rank))
            .then(self.seq.cmp(&other.seq))
    }
}

struct Entry<E> {
    key: Key,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Time-ordered events; ties broken by kind rank, then insertion order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    seq: u64,
    now: f64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
        }
    }

    pub fn push(&mut self, time: f64, rank: u8, event: E) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.heap.push(Reverse(Entry {
            key: Key {
                time,
                rank,
                seq: self.seq,
            },
            event,
        }));
    }

    pub fn pop(&mut self) -> Option<(f64, E)> {
        let Reverse(e) = self.heap.pop()?;
        self.now = e.key.time;
        Some((e.key.time, e.event))
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Empirical quantile by nearest rank on a sorted copy.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        0.0
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    }
}
