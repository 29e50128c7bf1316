//! Domain types shared by every part of the simulator: simulated time,
//! demand requests, cache geometry, line metadata and request classes.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Bytes per cache line. Every demand request covers exactly one line.
pub const LINE_BYTES: u64 = 64;

/// Simulated time in picoseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Tick(pub u64);

impl Tick {
    pub const ZERO: Tick = Tick(0);
    pub const MAX: Tick = Tick(u64::MAX);

    pub const fn from_ns(ns: u64) -> Tick {
        Tick(ns * 1000)
    }

    /// Converts a possibly fractional nanosecond value, rounding to the
    /// nearest picosecond. Values with at most three decimals are exact.
    pub fn from_ns_f64(ns: f64) -> Tick {
        Tick((ns * 1000.0).round().max(0.0) as u64)
    }

    pub fn as_ns_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, rhs: Tick) -> Tick {
        Tick(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Tick {
    type Output = Tick;
    fn add(self, rhs: Tick) -> Tick {
        Tick(self.0 + rhs.0)
    }
}

impl AddAssign for Tick {
    fn add_assign(&mut self, rhs: Tick) {
        self.0 += rhs.0;
    }
}

impl Sub for Tick {
    type Output = Tick;
    fn sub(self, rhs: Tick) -> Tick {
        Tick(self.0 - rhs.0)
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// A full-line read or write arriving from the LLC side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemandRequest {
    pub id: u64,
    pub addr: u64,
    pub is_write: bool,
    pub arrival: Tick,
}

/// Direct-mapped cache shape. `num_lines` is always a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CacheGeometry {
    pub line_bytes: u64,
    pub capacity_bytes: u64,
    pub num_lines: u64,
}

impl CacheGeometry {
    pub fn new(capacity_bytes: u64) -> Result<Self, ConfigError> {
        if capacity_bytes == 0 || !capacity_bytes.is_multiple_of(LINE_BYTES) {
            return Err(ConfigError::invalid(
                "near.capacity_bytes",
                format!("{capacity_bytes} is not a positive multiple of {LINE_BYTES}"),
            ));
        }
        let num_lines = capacity_bytes / LINE_BYTES;
        if !num_lines.is_power_of_two() {
            return Err(ConfigError::invalid(
                "near.capacity_bytes",
                format!("{num_lines} lines is not a power of two"),
            ));
        }
        Ok(CacheGeometry {
            line_bytes: LINE_BYTES,
            capacity_bytes,
            num_lines,
        })
    }

    #[inline]
    pub fn index_mask(&self) -> u64 {
        self.num_lines - 1
    }

    /// Far-memory byte address of the line holding `tag` at `index`.
    #[inline]
    pub fn far_addr(&self, index: u64, tag: u64) -> u64 {
        (tag * self.num_lines + index) * LINE_BYTES
    }

    /// Byte address of the cache location for `index` in near memory.
    #[inline]
    pub fn near_addr(&self, index: u64) -> u64 {
        index * LINE_BYTES
    }
}

/// Splits a 64-byte aligned address into its direct-mapped (index, tag).
#[inline]
pub fn map_to_cache(addr: u64, geom: &CacheGeometry) -> (u64, u64) {
    let line = addr / LINE_BYTES;
    (line & geom.index_mask(), line / geom.num_lines)
}

/// Checks the alignment and range preconditions of [`map_to_cache`].
pub fn check_address(addr: u64, far_capacity: u64) -> Result<(), ConfigError> {
    if !addr.is_multiple_of(LINE_BYTES) {
        return Err(ConfigError::invalid(
            "address",
            format!("{addr:#x} is not {LINE_BYTES}-byte aligned"),
        ));
    }
    if addr >= far_capacity {
        return Err(ConfigError::invalid(
            "address",
            format!("{addr:#x} is beyond far capacity {far_capacity:#x}"),
        ));
    }
    Ok(())
}

/// Tag-store entry for one cache line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LineMeta {
    pub valid: bool,
    pub dirty: bool,
    pub tag: u64,
}

/// Read/write x hit/miss x dirty/clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RequestClass {
    pub is_write: bool,
    pub is_hit: bool,
    pub victim_dirty: bool,
}

impl RequestClass {
    /// All eight classes in the column order RHd, RHc, RMd, RMc, WHd, WHc, WMd, WMc.
    pub const ALL: [RequestClass; 8] = [
        RequestClass::new(false, true, true),
        RequestClass::new(false, true, false),
        RequestClass::new(false, false, true),
        RequestClass::new(false, false, false),
        RequestClass::new(true, true, true),
        RequestClass::new(true, true, false),
        RequestClass::new(true, false, true),
        RequestClass::new(true, false, false),
    ];

    pub const fn new(is_write: bool, is_hit: bool, victim_dirty: bool) -> Self {
        RequestClass {
            is_write,
            is_hit,
            victim_dirty,
        }
    }

    /// Position in [`RequestClass::ALL`].
    pub const fn ordinal(self) -> usize {
        (self.is_write as usize) * 4 + (!self.is_hit as usize) * 2 + (!self.victim_dirty as usize)
    }

    /// Short lowercase label, e.g. `rmd` for read/miss/dirty.
    pub const fn label(self) -> &'static str {
        const LABELS: [&str; 8] = ["rhd", "rhc", "rmd", "rmc", "whd", "whc", "wmd", "wmc"];
        LABELS[self.ordinal()]
    }

    pub fn from_label(s: &str) -> Option<RequestClass> {
        RequestClass::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for RequestClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Resolves the class of `req` against the current tag-store entry of its index.
///
/// Invalid lines classify as clean misses. For hits `victim_dirty` carries the
/// resident line's dirty bit; it only matters for statistics.
pub fn classify(req: &DemandRequest, meta: &LineMeta, geom: &CacheGeometry) -> RequestClass {
    let (_, tag) = map_to_cache(req.addr, geom);
    let is_hit = meta.valid && meta.tag == tag;
    RequestClass {
        is_write: req.is_write,
        is_hit,
        victim_dirty: meta.valid && meta.dirty,
    }
}

/// Functional tag and metadata store, one entry per cache line.
#[derive(Debug, Clone)]
pub struct TagStore {
    lines: Vec<LineMeta>,
}

impl TagStore {
    pub fn new(geom: &CacheGeometry) -> Self {
        TagStore {
            lines: vec![LineMeta::default(); geom.num_lines as usize],
        }
    }

    #[inline]
    pub fn get(&self, index: u64) -> &LineMeta {
        &self.lines[index as usize]
    }

    #[inline]
    pub fn get_mut(&mut self, index: u64) -> &mut LineMeta {
        &mut self.lines[index as usize]
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Installs `tag` at `index` as the result of a fill or write miss.
    pub fn fill(&mut self, index: u64, tag: u64, dirty: bool) {
        self.lines[index as usize] = LineMeta {
            valid: true,
            dirty,
            tag,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom_2m() -> CacheGeometry {
        CacheGeometry::new((1 << 21) * 64).unwrap()
    }

    #[test]
    fn map_examples() {
        let g = geom_2m();
        assert_eq!(map_to_cache(0, &g), (0, 0));
        assert_eq!(map_to_cache(64, &g), (1, 0));
        assert_eq!(map_to_cache((1 << 21) * 64 + 128, &g), (2, 1));
    }

    #[test]
    fn classify_examples() {
        let g = geom_2m();
        let read = DemandRequest {
            id: 0,
            addr: 0,
            is_write: false,
            arrival: Tick::ZERO,
        };
        let resident = LineMeta {
            valid: true,
            dirty: false,
            tag: 0,
        };
        assert_eq!(
            classify(&read, &resident, &g),
            RequestClass::new(false, true, false)
        );

        let write = DemandRequest {
            addr: (1 << 21) * 64,
            is_write: true,
            ..read
        };
        let dirty_other = LineMeta {
            valid: true,
            dirty: true,
            tag: 0,
        };
        assert_eq!(
            classify(&write, &dirty_other, &g),
            RequestClass::new(true, false, true)
        );

        assert_eq!(
            classify(&read, &LineMeta::default(), &g),
            RequestClass::new(false, false, false)
        );
    }

    #[test]
    fn geometry_rejects_bad_capacities() {
        assert!(CacheGeometry::new(0).is_err());
        assert!(CacheGeometry::new(100).is_err());
        assert!(CacheGeometry::new(64 * 3).is_err());
        assert_eq!(CacheGeometry::new(128 << 20).unwrap().num_lines, 1 << 21);
    }

    #[test]
    fn address_checks() {
        assert!(check_address(0, 4096).is_ok());
        assert!(check_address(65, 4096).is_err());
        assert!(check_address(4096, 4096).is_err());
    }

    #[test]
    fn class_ordinals_and_labels() {
        for (i, c) in RequestClass::ALL.iter().enumerate() {
            assert_eq!(c.ordinal(), i);
            assert_eq!(RequestClass::from_label(c.label()), Some(*c));
        }
        let mut labels: Vec<_> = RequestClass::ALL.iter().map(|c| c.label()).collect();
        labels.dedup();
        assert_eq!(labels.len(), 8);
    }

    #[test]
    fn ns_conversion_is_exact() {
        assert_eq!(Tick::from_ns(20), Tick(20_000));
        assert_eq!(Tick::from_ns_f64(3.334), Tick(3334));
        assert_eq!(Tick::from_ns_f64(0.5), Tick(500));
    }

    proptest! {
        #[test]
        fn map_is_a_bijection(line in 0u64..(24u64 << 21)) {
            let g = geom_2m();
            let addr = line * 64;
            let (index, tag) = map_to_cache(addr, &g);
            prop_assert!(index < g.num_lines);
            prop_assert_eq!(g.far_addr(index, tag), addr);
        }

        #[test]
        fn fill_then_hit_until_conflicting_fill(index in 0u64..8, tag in 0u64..8, other in 0u64..8) {
            let g = CacheGeometry::new(8 * 64).unwrap();
            let mut ts = TagStore::new(&g);
            let addr = g.far_addr(index, tag);
            let req = DemandRequest { id: 0, addr, is_write: false, arrival: Tick::ZERO };
            ts.fill(index, tag, false);
            prop_assert!(classify(&req, ts.get(index), &g).is_hit);
            ts.fill(index, other, false);
            prop_assert_eq!(classify(&req, ts.get(index), &g).is_hit, other == tag);
        }
    }
}
