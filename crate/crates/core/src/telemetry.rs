//! Run statistics, derived metrics and report serialization.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::MetricError;
use crate::policy::{plan, PolicyKind};
use crate::types::{RequestClass, Tick, LINE_BYTES};

const BUCKET_PS: u64 = 1_000_000;

/// Amounts accumulated into fixed 1 µs buckets. Interval contributions are
/// spread proportionally over the buckets they overlap; window sums prorate
/// partially covered buckets.
#[derive(Debug, Clone, Default)]
pub struct BucketSeries {
    buckets: Vec<f64>,
}

impl BucketSeries {
    fn slot(&mut self, b: usize) -> &mut f64 {
        if b >= self.buckets.len() {
            self.buckets.resize(b + 1, 0.0);
        }
        &mut self.buckets[b]
    }

    pub fn add_at(&mut self, at: Tick, amount: f64) {
        *self.slot((at.0 / BUCKET_PS) as usize) += amount;
    }

    pub fn add_spread(&mut self, start: Tick, end: Tick, amount: f64) {
        if end <= start {
            self.add_at(start, amount);
            return;
        }
        let len = (end.0 - start.0) as f64;
        let mut t = start.0;
        while t < end.0 {
            let b = t / BUCKET_PS;
            let stop = ((b + 1) * BUCKET_PS).min(end.0);
            *self.slot(b as usize) += amount * (stop - t) as f64 / len;
            t = stop;
        }
    }

    pub fn sum(&self, from: Tick, to: Tick) -> f64 {
        let mut total = 0.0;
        let mut t = from.0;
        while t < to.0 {
            let b = t / BUCKET_PS;
            if b as usize >= self.buckets.len() {
                break;
            }
            let stop = ((b + 1) * BUCKET_PS).min(to.0);
            let v = self.buckets[b as usize];
            total += v * (stop - t) as f64 / BUCKET_PS as f64;
            t = stop;
        }
        total
    }
}

/// Latency histogram with 1 ns buckets.
#[derive(Debug, Clone, Default)]
pub struct LatencyHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl LatencyHistogram {
    pub fn record(&mut self, latency: Tick) {
        let b = (latency.0 / 1000) as usize;
        if b >= self.counts.len() {
            self.counts.resize(b + 1, 0);
        }
        self.counts[b] += 1;
        self.total += 1;
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    /// Lower edge, in ns, of the bucket holding the `p` quantile.
    pub fn percentile_ns(&self, p: f64) -> Option<u64> {
        if self.total == 0 {
            return None;
        }
        let rank = ((p * self.total as f64).ceil() as u64).clamp(1, self.total);
        let mut seen = 0;
        for (ns, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= rank {
                return Some(ns as u64);
            }
        }
        unreachable!("rank within total")
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub demands_issued: u64,
    pub demands_retired: u64,
    pub per_class: [u64; 8],
    pub class_substitutions: u64,
    pub near_reads: u64,
    pub near_writes: u64,
    pub far_reads: u64,
    pub far_writes: u64,
    /// Device ops attributed to the class of the demand that caused them.
    pub ops_by_class: [u64; 8],
    pub dirty_evictions: u64,
    pub writebacks_issued: u64,
    pub bytes_demand_completed: u64,
    pub demand_bytes: BucketSeries,
    pub latency: LatencyHistogram,
    pub max_orb: usize,
    pub max_crb: usize,
    pub max_wb: usize,
    pub injection_end: Tick,
    pub drained_at: Tick,
}

impl RunStats {
    pub fn record_retire(&mut self, class: RequestClass, arrival: Tick, now: Tick) {
        self.demands_retired += 1;
        self.per_class[class.ordinal()] += 1;
        self.bytes_demand_completed += LINE_BYTES;
        self.demand_bytes.add_at(now, LINE_BYTES as f64);
        self.latency.record(now - arrival);
    }

    pub fn record_device_op(&mut self, class: RequestClass, far: bool, is_write: bool) {
        self.ops_by_class[class.ordinal()] += 1;
        match (far, is_write) {
            (false, false) => self.near_reads += 1,
            (false, true) => self.near_writes += 1,
            (true, false) => self.far_reads += 1,
            (true, true) => self.far_writes += 1,
        }
    }

    pub fn hits(&self) -> u64 {
        RequestClass::ALL
            .iter()
            .filter(|c| c.is_hit)
            .map(|c| self.per_class[c.ordinal()])
            .sum()
    }

    pub fn misses(&self) -> u64 {
        RequestClass::ALL
            .iter()
            .filter(|c| !c.is_hit)
            .map(|c| self.per_class[c.ordinal()])
            .sum()
    }

    pub fn total_device_ops(&self) -> u64 {
        self.near_reads + self.near_writes + self.far_reads + self.far_writes
    }

    pub fn count(&self, class: RequestClass) -> u64 {
        self.per_class[class.ordinal()]
    }
}

pub fn miss_ratio(stats: &RunStats) -> Result<f64, MetricError> {
    let (m, h) = (stats.misses(), stats.hits());
    if m + h == 0 {
        return Err(MetricError::NoDemands);
    }
    Ok(m as f64 / (m + h) as f64)
}

/// Device accesses (near and far, writebacks included) per retired demand.
pub fn access_amplification(stats: &RunStats) -> Result<f64, MetricError> {
    if stats.demands_retired == 0 {
        return Err(MetricError::NoDemands);
    }
    Ok(stats.ops_by_class.iter().sum::<u64>() as f64 / stats.demands_retired as f64)
}

/// Amplification predicted from the per-class counts and the policy's plans.
pub fn expected_amplification(stats: &RunStats, policy: PolicyKind) -> Result<f64, MetricError> {
    if stats.demands_retired == 0 {
        return Err(MetricError::NoDemands);
    }
    let ops: u64 = RequestClass::ALL
        .iter()
        .map(|&c| plan(policy, c).len() as u64 * stats.count(c))
        .sum();
    Ok(ops as f64 / stats.demands_retired as f64)
}

/// Demand-side goodput in GB/s: 64 B per demand retired inside `[from, to)`.
pub fn effective_bandwidth(stats: &RunStats, from: Tick, to: Tick) -> Result<f64, MetricError> {
    if to <= from {
        return Err(MetricError::EmptyWindow);
    }
    Ok(stats.demand_bytes.sum(from, to) / (to - from).as_ns_f64())
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// One result row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run_id: String,
    pub seed: u64,
    pub policy: String,
    pub far_kind: String,
    pub link_rt_ns: f64,
    pub demands: u64,
    pub miss_ratio: Option<f64>,
    pub amp: Option<f64>,
    pub eff_bw_gbps: f64,
    pub near_util: f64,
    pub far_util: f64,
    pub rhd: u64,
    pub rhc: u64,
    pub rmd: u64,
    pub rmc: u64,
    pub whd: u64,
    pub whc: u64,
    pub wmd: u64,
    pub wmc: u64,
    pub p50_lat_ns: Option<u64>,
    pub p99_lat_ns: Option<u64>,
    pub max_orb: usize,
    pub max_crb: usize,
    pub max_wb: usize,
    pub substitutions: u64,
}

pub const CSV_HEADER: &str = "run_id,seed,policy,far_kind,link_rt_ns,demands,miss_ratio,amp,\
eff_bw_gbps,near_util,far_util,rhd,rhc,rmd,rmc,whd,whc,wmd,wmc,p50_lat_ns,p99_lat_ns,\
max_orb,max_crb,max_wb,substitutions";

/// Inputs to a report row that live outside [`RunStats`].
pub struct RowContext<'a> {
    pub run_id: &'a str,
    pub seed: u64,
    pub policy: PolicyKind,
    pub far_kind: &'a str,
    pub link_rt: Tick,
    pub eff_bw_gbps: f64,
    pub near_util: f64,
    pub far_util: f64,
}

impl ReportRow {
    pub fn new(ctx: RowContext<'_>, stats: &RunStats) -> Self {
        let c = |label: &str| stats.count(RequestClass::from_label(label).expect("known label"));
        ReportRow {
            run_id: ctx.run_id.to_string(),
            seed: ctx.seed,
            policy: ctx.policy.as_str().to_string(),
            far_kind: ctx.far_kind.to_string(),
            link_rt_ns: round6(ctx.link_rt.as_ns_f64()),
            demands: stats.demands_retired,
            miss_ratio: miss_ratio(stats).ok().map(round6),
            amp: access_amplification(stats).ok().map(round6),
            eff_bw_gbps: round6(ctx.eff_bw_gbps),
            near_util: round6(ctx.near_util),
            far_util: round6(ctx.far_util),
            rhd: c("rhd"),
            rhc: c("rhc"),
            rmd: c("rmd"),
            rmc: c("rmc"),
            whd: c("whd"),
            whc: c("whc"),
            wmd: c("wmd"),
            wmc: c("wmc"),
            p50_lat_ns: stats.latency.percentile_ns(0.50),
            p99_lat_ns: stats.latency.percentile_ns(0.99),
            max_orb: stats.max_orb,
            max_crb: stats.max_crb,
            max_wb: stats.max_wb,
            substitutions: stats.class_substitutions,
        }
    }

    pub fn to_csv_line(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(|x| x.to_string()).unwrap_or_default()
        }
        let mut s = String::new();
        let id = self.run_id.replace([',', '\n', '"'], "_");
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            id,
            self.seed,
            self.policy,
            self.far_kind,
            self.link_rt_ns,
            self.demands,
            opt(&self.miss_ratio),
            opt(&self.amp),
            self.eff_bw_gbps,
            self.near_util,
            self.far_util,
            self.rhd,
            self.rhc,
            self.rmd,
            self.rmc,
            self.whd,
            self.whc,
            self.wmd,
            self.wmc,
            opt(&self.p50_lat_ns),
            opt(&self.p99_lat_ns),
            self.max_orb,
            self.max_crb,
            self.max_wb,
            self.substitutions
        )
        .expect("write to string");
        s
    }
}

/// A finished run: the result row plus the resolved configuration that
/// produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub result: ReportRow,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn emit(reports: &[Report], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in reports {
                out.push_str(&r.result.to_csv_line());
                out.push('\n');
            }
            out
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            s
        }
    }
}
