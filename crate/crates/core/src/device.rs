//! Bank-level timing model of one memory channel.
//!
//! Each channel has a read queue and a write queue, open-page banks and one
//! shared data bus. The scheduler is FR-FCFS: the oldest row hit wins, else
//! the op whose data could reach the bus first (oldest on ties). Writes are
//! buffered and drained when the write queue crosses the high watermark (down
//! to the low watermark) or when no reads are waiting.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, MetricError};
use crate::telemetry::BucketSeries;
use crate::types::{Tick, LINE_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// One HBM2 pseudo-channel.
    Hbm2,
    Ddr4,
    Nvm,
}

impl DeviceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Hbm2 => "hbm2",
            DeviceKind::Ddr4 => "ddr4",
            DeviceKind::Nvm => "nvm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceConfig {
    pub kind: DeviceKind,
    pub peak_gbps: f64,
    pub capacity_bytes: u64,
    pub num_banks: u32,
    pub row_bytes: u64,
    pub rows_per_bank: u64,
    pub t_burst: Tick,
    pub t_rcd: Tick,
    pub t_rp: Tick,
    pub t_cl: Tick,
    pub t_cwl: Tick,
    pub t_wr: Tick,
    /// Bus turnaround from a read burst to a write burst.
    pub t_rtw: Tick,
    /// Delay from the end of a write burst to the next read command.
    pub t_wtr: Tick,
    pub read_buffer: usize,
    pub write_buffer: usize,
    pub wr_high_watermark: f64,
    pub wr_low_watermark: f64,
    pub extra_read_lat: Tick,
    pub extra_write_lat: Tick,
}

/// Time to move one 64 B line at `peak_gbps`, rounded up to a whole
/// picosecond so the modeled bus never exceeds its peak.
pub fn burst_time(peak_gbps: f64) -> Tick {
    Tick((LINE_BYTES as f64 * 1000.0 / peak_gbps).ceil() as u64)
}

impl DeviceConfig {
    /// Default parameter set for `kind` backing `capacity_bytes`.
    pub fn preset(kind: DeviceKind, capacity_bytes: u64) -> Self {
        let ns = Tick::from_ns;
        let (peak_gbps, write_buffer, extra_read, extra_write) = match kind {
            DeviceKind::Hbm2 => (16.0, 64, Tick::ZERO, Tick::ZERO),
            DeviceKind::Ddr4 => (19.2, 64, Tick::ZERO, Tick::ZERO),
            DeviceKind::Nvm => (19.2, 16, ns(150), ns(500)),
        };
        let mut cfg = DeviceConfig {
            kind,
            peak_gbps,
            capacity_bytes,
            num_banks: 16,
            row_bytes: 2048,
            rows_per_bank: 1,
            t_burst: burst_time(peak_gbps),
            t_rcd: ns(14),
            t_rp: ns(14),
            t_cl: ns(14),
            t_cwl: ns(10),
            t_wr: ns(15),
            t_rtw: ns(2),
            t_wtr: Tick::from_ns_f64(7.5),
            read_buffer: 64,
            write_buffer,
            wr_high_watermark: 0.85,
            wr_low_watermark: 0.50,
            extra_read_lat: extra_read,
            extra_write_lat: extra_write,
        };
        cfg.rows_per_bank = cfg.default_rows_per_bank();
        cfg
    }

    pub fn default_rows_per_bank(&self) -> u64 {
        (self.capacity_bytes / (self.row_bytes * self.num_banks as u64)).max(1)
    }

    pub fn validate(&self, section: &str) -> Result<(), ConfigError> {
        let field = |k: &str| format!("{section}.{k}");
        if self.peak_gbps.is_nan() || self.peak_gbps <= 0.0 {
            return Err(ConfigError::invalid(field("peak_gbps"), "must be positive"));
        }
        if self.num_banks == 0 {
            return Err(ConfigError::invalid(field("num_banks"), "must be positive"));
        }
        if self.row_bytes < LINE_BYTES || !self.row_bytes.is_multiple_of(LINE_BYTES) {
            return Err(ConfigError::invalid(
                field("row_bytes"),
                "must be a positive multiple of 64",
            ));
        }
        if self.rows_per_bank == 0 {
            return Err(ConfigError::invalid(
                field("rows_per_bank"),
                "must be positive",
            ));
        }
        if self.t_burst == Tick::ZERO {
            return Err(ConfigError::invalid(
                field("t_burst_ns"),
                "must be positive",
            ));
        }
        if self.read_buffer == 0 {
            return Err(ConfigError::invalid(
                field("read_buffer"),
                "must be positive",
            ));
        }
        if self.write_buffer == 0 {
            return Err(ConfigError::invalid(
                field("write_buffer"),
                "must be positive",
            ));
        }
        let (lo, hi) = (self.wr_low_watermark, self.wr_high_watermark);
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return Err(ConfigError::invalid(
                field("wr_low_watermark"),
                format!("need 0 < low ({lo}) < high ({hi}) <= 1"),
            ));
        }
        let has_extra = self.extra_read_lat > Tick::ZERO && self.extra_write_lat > Tick::ZERO;
        let no_extra = self.extra_read_lat == Tick::ZERO && self.extra_write_lat == Tick::ZERO;
        match self.kind {
            DeviceKind::Nvm if !has_extra => Err(ConfigError::invalid(
                field("extra_read_ns"),
                "nvm needs positive extra read and write latencies",
            )),
            DeviceKind::Hbm2 | DeviceKind::Ddr4 if !no_extra => Err(ConfigError::invalid(
                field("extra_read_ns"),
                "dram kinds take no extra media latency",
            )),
            _ => Ok(()),
        }
    }

    fn cas(&self, is_write: bool) -> Tick {
        if is_write {
            self.t_cwl
        } else {
            self.t_cl + self.extra_read_lat
        }
    }
}

/// An operation handed to a device. `origin` lets the issuer match the
/// completion back to whatever sent it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceOp<O> {
    pub op_id: u64,
    pub addr: u64,
    pub is_write: bool,
    pub origin: O,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    Rejected,
}

/// An op the scheduler has committed to the bus. `done_at` is data return
/// for reads and the end of the write burst for posted writes.
#[derive(Debug, Clone, Copy)]
pub struct Issued<O> {
    pub op: DeviceOp<O>,
    pub data_start: Tick,
    pub done_at: Tick,
    pub row_hit: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Bank {
    open_row: Option<u64>,
    col_ready: Tick,
    pre_ready: Tick,
}

#[derive(Debug, Clone, Copy)]
struct Queued<O> {
    op: DeviceOp<O>,
    bank: usize,
    row: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DeviceStats {
    pub reads: u64,
    pub writes: u64,
    pub row_hits: u64,
    pub rejected: u64,
    pub bytes: u64,
    pub max_read_occupancy: usize,
    pub max_write_occupancy: usize,
}

pub struct Device<O> {
    cfg: DeviceConfig,
    banks: Vec<Bank>,
    read_q: Vec<Queued<O>>,
    write_q: Vec<Queued<O>>,
    reads_reserved: usize,
    writes_reserved: usize,
    bus_free: Tick,
    last_was_write: Option<bool>,
    next_decision: Tick,
    wake_pending: bool,
    draining: bool,
    lookahead: Tick,
    high_mark: f64,
    low_mark: f64,
    stats: DeviceStats,
    traffic: BucketSeries,
}

impl<O: Copy> Device<O> {
    pub fn new(cfg: DeviceConfig) -> Self {
        let lookahead = cfg.t_rp + cfg.t_rcd + cfg.cas(false).max(cfg.cas(true));
        let high_mark = cfg.wr_high_watermark * cfg.write_buffer as f64;
        let low_mark = cfg.wr_low_watermark * cfg.write_buffer as f64;
        Device {
            banks: vec![Bank::default(); cfg.num_banks as usize],
            read_q: Vec::with_capacity(cfg.read_buffer),
            write_q: Vec::with_capacity(cfg.write_buffer),
            reads_reserved: 0,
            writes_reserved: 0,
            bus_free: Tick::ZERO,
            last_was_write: None,
            next_decision: Tick::ZERO,
            wake_pending: false,
            draining: false,
            lookahead,
            high_mark,
            low_mark,
            stats: DeviceStats::default(),
            traffic: BucketSeries::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &DeviceStats {
        &self.stats
    }

    pub fn read_occupancy(&self) -> usize {
        self.read_q.len() + self.reads_reserved
    }

    pub fn write_occupancy(&self) -> usize {
        self.write_q.len() + self.writes_reserved
    }

    pub fn is_draining_writes(&self) -> bool {
        self.draining
    }

    pub fn has_room(&self, is_write: bool) -> bool {
        if is_write {
            self.write_occupancy() < self.cfg.write_buffer
        } else {
            self.read_occupancy() < self.cfg.read_buffer
        }
    }

    pub fn is_idle(&self) -> bool {
        self.read_occupancy() == 0 && self.write_occupancy() == 0
    }

    /// Claims a queue slot for an op that is still in transit to the device.
    pub fn reserve(&mut self, is_write: bool) -> Admission {
        if !self.has_room(is_write) {
            self.stats.rejected += 1;
            return Admission::Rejected;
        }
        if is_write {
            self.writes_reserved += 1;
        } else {
            self.reads_reserved += 1;
        }
        self.note_occupancy();
        Admission::Accepted
    }

    /// Delivers an op whose slot was claimed with [`Device::reserve`].
    pub fn arrive(&mut self, op: DeviceOp<O>) {
        if op.is_write {
            debug_assert!(self.writes_reserved > 0);
            self.writes_reserved -= 1;
        } else {
            debug_assert!(self.reads_reserved > 0);
            self.reads_reserved -= 1;
        }
        self.enqueue(op);
    }

    pub fn submit(&mut self, op: DeviceOp<O>) -> Admission {
        let admission = self.reserve(op.is_write);
        if admission == Admission::Accepted {
            self.arrive(op);
        }
        admission
    }

    fn enqueue(&mut self, op: DeviceOp<O>) {
        debug_assert_eq!(op.addr % LINE_BYTES, 0);
        let bank = ((op.addr / LINE_BYTES) % self.cfg.num_banks as u64) as usize;
        let row = (op.addr / self.cfg.row_bytes) % self.cfg.rows_per_bank;
        let q = Queued { op, bank, row };
        if op.is_write {
            self.write_q.push(q);
        } else {
            self.read_q.push(q);
        }
        self.note_occupancy();
    }

    fn note_occupancy(&mut self) {
        self.stats.max_read_occupancy = self.stats.max_read_occupancy.max(self.read_occupancy());
        self.stats.max_write_occupancy = self.stats.max_write_occupancy.max(self.write_occupancy());
    }

    /// Returns the tick at which the owner should call [`Device::service`],
    /// if work is queued and no wake-up is outstanding.
    pub fn poll_wake(&mut self, now: Tick) -> Option<Tick> {
        if self.wake_pending || (self.read_q.is_empty() && self.write_q.is_empty()) {
            return None;
        }
        self.wake_pending = true;
        Some(now.max(self.next_decision))
    }

    fn update_mode(&mut self) -> bool {
        let pending_writes = self.write_q.len() as f64;
        if pending_writes >= self.high_mark {
            self.draining = true;
        } else if self.draining && pending_writes <= self.low_mark {
            self.draining = false;
        }
        self.draining || (self.read_q.is_empty() && !self.write_q.is_empty())
    }

    fn data_ready(&self, q: &Queued<O>, now: Tick) -> (Tick, bool) {
        let c = &self.cfg;
        let bank = &self.banks[q.bank];
        let (col, hit) = match bank.open_row {
            Some(r) if r == q.row => (now.max(bank.col_ready), true),
            Some(_) => (now.max(bank.pre_ready) + c.t_rp + c.t_rcd, false),
            None => (now + c.t_rcd, false),
        };
        (col + c.cas(q.op.is_write), hit)
    }

    fn pick(&mut self, now: Tick) -> Option<(bool, usize)> {
        let writes = self.update_mode();
        let queue = if writes { &self.write_q } else { &self.read_q };
        if queue.is_empty() {
            return None;
        }
        if let Some(i) = queue
            .iter()
            .position(|q| self.banks[q.bank].open_row == Some(q.row))
        {
            return Some((writes, i));
        }
        let mut best = 0;
        let mut best_ready = Tick::MAX;
        for (i, q) in queue.iter().enumerate() {
            let (ready, _) = self.data_ready(q, now);
            if ready < best_ready {
                best = i;
                best_ready = ready;
            }
        }
        Some((writes, best))
    }

    /// The op the scheduler would issue next at `now`, without issuing it.
    pub fn select_next(&mut self, now: Tick) -> Option<&DeviceOp<O>> {
        let (writes, i) = self.pick(now)?;
        let q = if writes { &self.write_q } else { &self.read_q };
        Some(&q[i].op)
    }

    /// Issues as many ops as the bus lookahead allows at `now`.
    pub fn service(&mut self, now: Tick, out: &mut Vec<Issued<O>>) {
        self.wake_pending = false;
        while now >= self.next_decision {
            let Some((writes, i)) = self.pick(now) else {
                break;
            };
            let q = if writes {
                self.write_q.remove(i)
            } else {
                self.read_q.remove(i)
            };
            out.push(self.issue(q, now));
        }
    }

    fn issue(&mut self, q: Queued<O>, now: Tick) -> Issued<O> {
        let (ready, row_hit) = self.data_ready(&q, now);
        let c = &self.cfg;
        let is_write = q.op.is_write;
        // Read-to-write is a data-bus gap. Write-to-read gates the read
        // command, so its data trails the write burst by tWTR plus CAS.
        let turnaround = match self.last_was_write {
            Some(true) if !is_write => c.t_wtr + c.cas(false),
            Some(false) if is_write => c.t_rtw,
            _ => Tick::ZERO,
        };
        let data_start = ready.max(self.bus_free + turnaround);
        let data_end = data_start + c.t_burst;
        let col = data_start - c.cas(is_write);
        let bank = &mut self.banks[q.bank];
        bank.open_row = Some(q.row);
        bank.col_ready = col + c.t_burst;
        bank.pre_ready = if is_write {
            data_end + c.t_wr + c.extra_write_lat
        } else {
            bank.pre_ready.max(data_end)
        };
        self.bus_free = data_end;
        self.last_was_write = Some(is_write);
        self.next_decision = now.max(self.bus_free.saturating_sub(self.lookahead));

        if is_write {
            self.stats.writes += 1;
        } else {
            self.stats.reads += 1;
        }
        if row_hit {
            self.stats.row_hits += 1;
        }
        self.stats.bytes += LINE_BYTES;
        self.traffic
            .add_spread(data_start, data_end, LINE_BYTES as f64);
        Issued {
            op: q.op,
            data_start,
            done_at: data_end,
            row_hit,
        }
    }

    /// Bytes on the data bus during `[from, to)` relative to peak bandwidth.
    pub fn utilization(&self, from: Tick, to: Tick) -> Result<f64, MetricError> {
        if to <= from {
            return Err(MetricError::EmptyWindow);
        }
        let bytes = self.traffic.sum(from, to);
        Ok(bytes / (self.cfg.peak_gbps * (to - from).as_ns_f64()))
    }

    pub fn bytes_in(&self, from: Tick, to: Tick) -> f64 {
        self.traffic.sum(from, to)
    }
}
