//! Fixed-latency interconnect between the cache manager and far memory.
//!
//! The round trip is split across the two directions (`rt/2` out, the
//! remainder back) so a far access observes exactly `device latency + rt`.
//! There is no bandwidth limit and no in-flight cap; order is preserved per
//! direction because every op in a direction sees the same delay.

use crate::types::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkConfig {
    pub round_trip: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToFar,
    FromFar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// Zero-latency link: hand the op over synchronously.
    Immediate,
    At(Tick),
}

#[derive(Debug, Clone, Default)]
pub struct Link {
    cfg: LinkConfig,
    in_flight: [u64; 2],
    max_in_flight: [u64; 2],
    last_delivery: [Tick; 2],
}

impl Link {
    pub fn new(cfg: LinkConfig) -> Self {
        Link {
            cfg,
            ..Link::default()
        }
    }

    pub fn round_trip(&self) -> Tick {
        self.cfg.round_trip
    }

    pub fn one_way(&self, dir: Direction) -> Tick {
        let out = Tick(self.cfg.round_trip.0 / 2);
        match dir {
            Direction::ToFar => out,
            Direction::FromFar => self.cfg.round_trip - out,
        }
    }

    pub fn forward(&mut self, now: Tick, dir: Direction) -> Delivery {
        let delay = self.one_way(dir);
        if delay == Tick::ZERO {
            return Delivery::Immediate;
        }
        let d = dir as usize;
        let at = now + delay;
        debug_assert!(at >= self.last_delivery[d], "link reordered");
        self.last_delivery[d] = at;
        self.in_flight[d] += 1;
        self.max_in_flight[d] = self.max_in_flight[d].max(self.in_flight[d]);
        Delivery::At(at)
    }

    /// Marks one op in `dir` as delivered.
    pub fn delivered(&mut self, dir: Direction) {
        let d = dir as usize;
        debug_assert!(self.in_flight[d] > 0);
        self.in_flight[d] -= 1;
    }

    pub fn in_flight(&self, dir: Direction) -> u64 {
        self.in_flight[dir as usize]
    }

    pub fn max_in_flight(&self, dir: Direction) -> u64 {
        self.max_in_flight[dir as usize]
    }
}
