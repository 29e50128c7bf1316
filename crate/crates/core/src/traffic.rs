//! Demand sources: a synthetic generator with controlled read mix, miss
//! ratio and victim dirtiness, and a plain-text trace replayer.
//!
//! The generator keeps a mirror of the tag store as it will look once every
//! request generated so far has retired. Hits target the mirrored resident
//! tag; misses target a different tag at the same index. In stationary mode
//! the real tag store is put back to its seeded state after every
//! retirement, so the mirror never changes and the scenario stays fixed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::types::{
    map_to_cache, CacheGeometry, DemandRequest, LineMeta, TagStore, Tick, LINE_BYTES,
};

/// A Bernoulli draw that always consumes exactly one value from `rng`, so
/// the stream stays aligned whatever `p` is.
fn coin(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// Index draws tried before settling for a victim of the wrong dirtiness.
const MAX_PROBES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Linear,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticConfig {
    pub pattern: Pattern,
    pub read_pct: f64,
    pub target_miss_ratio: f64,
    pub dirty_victim_pct: f64,
    /// Zero means saturating.
    pub inter_arrival: Tick,
    pub footprint_start: u64,
    pub footprint_bytes: u64,
    pub resident_fraction: f64,
    pub dirty_fraction: f64,
    pub stationary: bool,
    pub max_demands: Option<u64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            pattern: Pattern::Random,
            read_pct: 1.0,
            target_miss_ratio: 0.0,
            dirty_victim_pct: 0.0,
            inter_arrival: Tick::ZERO,
            footprint_start: 0,
            footprint_bytes: 0,
            resident_fraction: 1.0,
            dirty_fraction: 0.5,
            stationary: true,
            max_demands: None,
        }
    }
}

fn check_fraction(field: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::invalid(
            field,
            format!("{v} is outside [0, 1]"),
        ))
    }
}

impl SyntheticConfig {
    pub fn validate(&self, geom: &CacheGeometry, far_capacity: u64) -> Result<(), ConfigError> {
        check_fraction("traffic.read_pct", self.read_pct)?;
        check_fraction("traffic.miss_ratio", self.target_miss_ratio)?;
        check_fraction("traffic.dirty_victim_pct", self.dirty_victim_pct)?;
        check_fraction("traffic.resident_fraction", self.resident_fraction)?;
        check_fraction("traffic.dirty_fraction", self.dirty_fraction)?;
        let cap = geom.capacity_bytes;
        if self.footprint_bytes == 0 {
            return Err(ConfigError::invalid(
                "traffic.footprint_bytes",
                "footprint is empty",
            ));
        }
        if !self.footprint_start.is_multiple_of(cap) || !self.footprint_bytes.is_multiple_of(cap) {
            return Err(ConfigError::invalid(
                "traffic.footprint_bytes",
                format!("footprint must start and end on a multiple of the cache capacity ({cap} bytes)"),
            ));
        }
        if self.footprint_start + self.footprint_bytes > far_capacity {
            return Err(ConfigError::invalid(
                "traffic.footprint_bytes",
                format!("footprint ends beyond far capacity {far_capacity}"),
            ));
        }
        Ok(())
    }
}

pub struct SyntheticGen {
    cfg: SyntheticConfig,
    geom: CacheGeometry,
    tag_lo: u64,
    tag_hi: u64,
    mirror: Vec<LineMeta>,
    cursor: u64,
    generated: u64,
    substitutions: u64,
}

impl SyntheticGen {
    pub fn new(cfg: SyntheticConfig, geom: CacheGeometry) -> Self {
        let tag_lo = cfg.footprint_start / geom.capacity_bytes;
        let tag_hi = (cfg.footprint_start + cfg.footprint_bytes) / geom.capacity_bytes;
        SyntheticGen {
            mirror: vec![LineMeta::default(); geom.num_lines as usize],
            cfg,
            geom,
            tag_lo,
            tag_hi,
            cursor: 0,
            generated: 0,
            substitutions: 0,
        }
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn substitutions(&self) -> u64 {
        self.substitutions
    }

    pub fn exhausted(&self) -> bool {
        self.cfg.max_demands.is_some_and(|m| self.generated >= m)
    }

    /// Pre-populates `tags` (and the mirror): each line is resident with
    /// probability `resident_fraction` and, if resident, dirty with
    /// probability `dirty_fraction`. Tags come from the footprint.
    pub fn seed_cache(&mut self, rng: &mut ChaCha8Rng, tags: &mut TagStore) {
        let (resident, dirty) = (self.cfg.resident_fraction, self.cfg.dirty_fraction);
        for index in 0..self.geom.num_lines {
            let valid = coin(rng, resident);
            let meta = if valid {
                LineMeta {
                    valid: true,
                    dirty: coin(rng, dirty),
                    tag: rng.gen_range(self.tag_lo..self.tag_hi),
                }
            } else {
                LineMeta::default()
            };
            self.mirror[index as usize] = meta;
            *tags.get_mut(index) = meta;
        }
    }

    fn next_index(&mut self, rng: &mut ChaCha8Rng) -> u64 {
        match self.cfg.pattern {
            Pattern::Linear => {
                let i = self.cursor;
                self.cursor = (self.cursor + 1) & self.geom.index_mask();
                i
            }
            Pattern::Random => rng.gen_range(0..self.geom.num_lines),
        }
    }

    /// Draws the next demand. The draw order is fixed (mix, hit/miss,
    /// victim dirtiness, index, tag) so runs that differ only in scenario
    /// see the same index sequence.
    pub fn next_request(&mut self, rng: &mut ChaCha8Rng, now: Tick) -> DemandRequest {
        let is_write = !coin(rng, self.cfg.read_pct);
        let want_miss = coin(rng, self.cfg.target_miss_ratio);
        let want_dirty = coin(rng, self.cfg.dirty_victim_pct);

        let mut index = self.next_index(rng);
        let fits = |m: &LineMeta| {
            if want_miss {
                (m.valid && m.dirty) == want_dirty
            } else {
                m.valid
            }
        };
        let mut probes = 1;
        while !fits(&self.mirror[index as usize]) && probes < MAX_PROBES {
            index = self.next_index(rng);
            probes += 1;
        }
        let meta = self.mirror[index as usize];
        let mut substituted = !fits(&meta);

        // Always drawn, so the stream stays aligned between scenarios.
        let span = self.tag_hi - self.tag_lo;
        let raw = rng.gen_range(0..span.max(2) - 1);
        let tag = if !want_miss && meta.valid {
            meta.tag
        } else if !meta.valid {
            self.tag_lo + raw % span
        } else if span < 2 {
            // no other tag exists in the footprint: the access can only hit
            substituted = true;
            meta.tag
        } else {
            let t = self.tag_lo + raw;
            if t >= meta.tag {
                t + 1
            } else {
                t
            }
        };
        if substituted {
            self.substitutions += 1;
        }

        if !self.cfg.stationary {
            let slot = &mut self.mirror[index as usize];
            let hit = slot.valid && slot.tag == tag;
            if is_write {
                *slot = LineMeta {
                    valid: true,
                    dirty: true,
                    tag,
                };
            } else if !hit {
                *slot = LineMeta {
                    valid: true,
                    dirty: false,
                    tag,
                };
            }
        }

        let id = self.generated;
        self.generated += 1;
        DemandRequest {
            id,
            addr: self.geom.far_addr(index, tag),
            is_write,
            arrival: now,
        }
    }

    /// Called after a demand retires. In stationary mode, puts the line back
    /// to its seeded state.
    pub fn on_retire(&self, req: &DemandRequest, tags: &mut TagStore) {
        if self.cfg.stationary {
            let (index, _) = map_to_cache(req.addr, &self.geom);
            *tags.get_mut(index) = self.mirror[index as usize];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: Tick,
    pub addr: u64,
    pub is_write: bool,
}

/// Parses `<tick_ns> <hex_addr> <R|W>` lines. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_trace(
    text: &str,
    path: &Path,
    far_capacity: u64,
) -> Result<Vec<TraceRecord>, SimError> {
    let err = |line: usize, reason: String| SimError::TraceParse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut out: Vec<TraceRecord> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [tick, addr, op] = fields[..] else {
            return Err(err(
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        let tick: u64 = tick
            .parse()
            .map_err(|_| err(line_no, format!("bad tick `{tick}`")))?;
        let hex = addr
            .strip_prefix("0x")
            .or_else(|| addr.strip_prefix("0X"))
            .unwrap_or(addr);
        let addr = u64::from_str_radix(hex, 16)
            .map_err(|_| err(line_no, format!("bad address `{addr}`")))?;
        let is_write = match op {
            "R" | "r" => false,
            "W" | "w" => true,
            _ => return Err(err(line_no, format!("bad op `{op}`, expected R or W"))),
        };
        if addr % LINE_BYTES != 0 {
            return Err(err(
                line_no,
                format!("address {addr:#x} is not 64-byte aligned"),
            ));
        }
        if addr >= far_capacity {
            return Err(err(
                line_no,
                format!("address {addr:#x} is beyond far capacity"),
            ));
        }
        let tick = Tick::from_ns(tick);
        if out.last().is_some_and(|p| p.tick > tick) {
            return Err(err(line_no, "records are not sorted by tick".into()));
        }
        out.push(TraceRecord {
            tick,
            addr,
            is_write,
        });
    }
    Ok(out)
}

pub fn load_trace(path: &Path, far_capacity: u64) -> Result<Vec<TraceRecord>, SimError> {
    let text = fs::read_to_string(path).map_err(|source| SimError::Io {
        path: PathBuf::from(path),
        source,
    })?;
    parse_trace(&text, path, far_capacity)
}

pub struct TraceReplay {
    records: Vec<TraceRecord>,
    next: usize,
}

impl TraceReplay {
    pub fn new(records: Vec<TraceRecord>) -> Self {
        TraceReplay { records, next: 0 }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn peek_tick(&self) -> Option<Tick> {
        self.records.get(self.next).map(|r| r.tick)
    }

    /// Next record as a request stamped `now`.
    pub fn take(&mut self, now: Tick) -> Option<DemandRequest> {
        let r = self.records.get(self.next)?;
        let req = DemandRequest {
            id: self.next as u64,
            addr: r.addr,
            is_write: r.is_write,
            arrival: now.max(r.tick),
        };
        self.next += 1;
        Some(req)
    }
}
