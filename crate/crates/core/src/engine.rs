//! Deterministic discrete-event kernel.
//!
//! Events are ordered by `(fire_at, seq)`: simultaneous events fire in the
//! order they were scheduled. The engine also owns the run's only PRNG so a
//! single seed reproduces the whole simulation.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::Tick;

/// Identifies a scheduled event so it can be cancelled before firing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Scheduled<E> {
    fire_at: Tick,
    seq: u64,
    action: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

pub struct Engine<E> {
    now: Tick,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Scheduled<E>>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
    rng: ChaCha8Rng,
}

impl<E> Engine<E> {
    pub fn new(seed: u64) -> Self {
        Engine {
            now: Tick::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Number of scheduled, not yet cancelled events.
    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, delay: Tick, action: E) -> EventHandle {
        self.schedule_at(self.now + delay, action)
    }

    /// Schedules at an absolute tick. Ticks in the past are clamped to now.
    pub fn schedule_at(&mut self, at: Tick, action: E) -> EventHandle {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled {
            fire_at: at.max(self.now),
            seq,
            action,
        }));
        EventHandle(seq)
    }

    /// Cancels a pending event. Returns false if it already fired or was
    /// never scheduled by this engine.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        let pending = self.queue.iter().any(|Reverse(s)| s.seq == handle.0);
        pending && self.cancelled.insert(handle.0)
    }

    /// Pops the next live event if it fires at or before `limit`, advancing
    /// the clock to its fire time.
    pub fn pop_until(&mut self, limit: Tick) -> Option<E> {
        loop {
            let head = self.queue.peek()?;
            if head.0.fire_at > limit {
                return None;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            if !self.cancelled.is_empty() && self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.dispatched += 1;
            return Some(ev.action);
        }
    }

    /// Dispatches every event with `fire_at <= limit` in `(fire_at, seq)`
    /// order. Returns the tick of the last dispatched event, or `limit` if
    /// the queue drained.
    pub fn run_until<F>(&mut self, limit: Tick, mut dispatch: F) -> Tick
    where
        F: FnMut(&mut Self, E),
    {
        while let Some(action) = self.pop_until(limit) {
            dispatch(self, action);
        }
        if self.pending() == 0 {
            self.now = self.now.max(limit);
            limit
        } else {
            self.now
        }
    }

    /// Consumes the engine. Nothing can be scheduled afterwards.
    pub fn teardown(self) -> u64 {
        self.dispatched
    }
}
