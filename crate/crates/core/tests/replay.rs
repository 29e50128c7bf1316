use dcsim::scenario::hand_trace;
use dcsim::system::{Source, System};
use dcsim::traffic::{TraceRecord, TraceReplay};
use dcsim::types::Tick;
use dcsim::RunConfig;

fn rec(ns: u64, addr: u64, is_write: bool) -> TraceRecord {
    TraceRecord {
        tick: Tick::from_ns(ns),
        addr,
        is_write,
    }
}

fn replay(
    cfg: &RunConfig,
    records: Vec<TraceRecord>,
) -> (dcsim::RunOutcome, Vec<dcsim::manager::Retired>) {
    let mut sys = System::with_source(cfg, Source::Trace(TraceReplay::new(records))).unwrap();
    sys.record_retirements(true);
    let mut out = sys.run().unwrap();
    let mut retired = std::mem::take(&mut out.retired);
    retired.sort_by_key(|r| r.req.id);
    (out, retired)
}

#[test]
fn empty_trace_finishes_with_nothing() {
    let (out, retired) = replay(&hand_trace::config(), Vec::new());
    assert_eq!(out.stats.demands_issued, 0);
    assert!(retired.is_empty());
    assert_eq!(out.eff_bw_gbps, 0.0);
}

#[test]
fn same_index_record_parks_until_first_retires() {
    // lines 0 and 8 share index 0 in the 8-line cache
    let (out, retired) = replay(
        &hand_trace::config(),
        vec![rec(0, 0x000, false), rec(1, 0x200, false)],
    );
    assert_eq!(out.stats.max_crb, 1);
    assert_eq!(out.stats.max_orb, 1);
    assert_eq!(retired[0].class.label(), "rmc");
    // the second sees the first's fill: a clean victim with a different tag
    assert_eq!(retired[1].class.label(), "rmc");
    assert!(retired[1].retired_at > retired[0].retired_at);
    let second_response = retired[1].response_at.unwrap();
    assert!(second_response > retired[0].retired_at);
}

#[test]
fn cold_reads_to_distinct_indices_are_clean_misses() {
    let records = (0..8).map(|i| rec(i, i * 64, false)).collect();
    let (out, retired) = replay(&hand_trace::config(), records);
    assert_eq!(retired.len(), 8);
    assert!(retired.iter().all(|r| r.class.label() == "rmc"));
    assert_eq!(out.stats.max_crb, 0);
}

#[test]
fn link_round_trip_adds_exactly_to_a_far_read() {
    let mut near = hand_trace::config();
    near.link.far_link_round_trip_ns = 0.0;
    let mut remote = near.clone();
    remote.link.far_link_round_trip_ns = 100.0;
    let (_, a) = replay(&near, vec![rec(0, 0x000, false)]);
    let (_, b) = replay(&remote, vec![rec(0, 0x000, false)]);
    let diff = b[0].response_at.unwrap() - a[0].response_at.unwrap();
    assert_eq!(diff, Tick::from_ns(100));
    assert_eq!(b[0].retired_at - a[0].retired_at, Tick::from_ns(100));
}

#[test]
fn hits_never_touch_far_memory() {
    let records = vec![
        rec(0, 0x040, false),
        rec(500, 0x040, false),
        rec(1000, 0x040, true),
    ];
    let (out, retired) = replay(&hand_trace::config(), records);
    let labels: Vec<_> = retired.iter().map(|r| r.class.label()).collect();
    assert_eq!(labels, ["rmc", "rhc", "whc"]);
    assert_eq!(out.stats.far_reads, 1);
    assert_eq!(out.stats.far_writes, 0);
}

#[test]
fn dirty_victim_is_written_back_once() {
    let records = vec![rec(0, 0x040, true), rec(500, 0x240, false)];
    let (out, retired) = replay(&hand_trace::config(), records);
    assert_eq!(retired[1].class.label(), "rmd");
    assert_eq!(out.stats.dirty_evictions, 1);
    assert_eq!(out.stats.far_writes, 1);
}
