//! Acceptance suite. One line per criterion; exits nonzero if any fails.
//!
//! Run with `cargo test -p dcsim --release --test acceptance`.

mod common;

use std::process::{Command, ExitCode};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};

use common::oracle;
use dcsim::config::RunConfig;
use dcsim::device::DeviceKind;
use dcsim::scenario::{hand_trace, link_study_config, policy_study_config};
use dcsim::telemetry::access_amplification;
use dcsim::traffic::Pattern;
use dcsim::validate::{
    battery_checks, plan_checks, run_battery, PLAN_TABLE, SATURATION_FLOOR_GBPS,
};
use dcsim::{run_config, PolicyKind, RequestClass, System};

struct Outcome {
    passed: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(passed: bool, summary: impl Into<String>) -> Self {
        Outcome {
            passed,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Outcome::new(false, format!("error: {e}"))
    }
}

/// Stationary traffic that produces only `class`.
fn single_class_config(policy: PolicyKind, class: RequestClass, demands: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run_id = format!("single-{policy}-{class}");
    cfg.policy = policy;
    cfg.engine.duration_ns = 1e9;
    let t = &mut cfg.traffic;
    t.pattern = Pattern::Random;
    t.read_pct = if class.is_write { 0.0 } else { 1.0 };
    t.miss_ratio = if class.is_hit { 0.0 } else { 1.0 };
    let dirty = if class.victim_dirty { 1.0 } else { 0.0 };
    t.dirty_victim_pct = dirty;
    t.dirty_fraction = dirty;
    t.resident_fraction = 1.0;
    t.stationary = true;
    t.max_demands = Some(demands);
    cfg
}

fn plan_table() -> Outcome {
    const DEMANDS: u64 = 10_000;
    let checks = plan_checks();
    let mut out = Outcome::new(true, "");
    for c in checks.iter().filter(|c| !c.passed) {
        out.details.push(format!("{}: {}", c.name, c.detail));
    }
    for (policy, lengths) in PLAN_TABLE {
        for (class, want) in RequestClass::ALL.into_iter().zip(lengths) {
            let cfg = single_class_config(policy, class, DEMANDS);
            let run = match run_config(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    out.details.push(format!("{policy}/{class}: {e}"));
                    continue;
                }
            };
            let s = &run.stats;
            let amp = access_amplification(s).unwrap_or(f64::NAN);
            let pure = s.count(class) == DEMANDS && s.demands_retired == DEMANDS;
            if !pure || (amp - want as f64).abs() > 1e-9 {
                out.details.push(format!(
                    "{policy}/{class}: {} of {} demands in class, amplification {amp}, plan {want}",
                    s.count(class),
                    s.demands_retired
                ));
            }
        }
    }
    out.passed = checks.len() == 24 && out.details.is_empty();
    out.summary = format!(
        "24 plan lengths, 24 single-class runs of {DEMANDS} demands, {} problems",
        out.details.len()
    );
    out
}

fn saturation() -> Outcome {
    let mut cfg = dcsim::scenario::battery_config(
        dcsim::scenario::Mix::ReadOnly,
        dcsim::scenario::HitScenario::Hit,
        Pattern::Random,
        1,
        10_000_000.0,
    );
    cfg.policy = PolicyKind::Baseline;
    match run_config(&cfg) {
        Ok(run) => {
            let bw = run.eff_bw_gbps;
            Outcome::new(
                (SATURATION_FLOOR_GBPS..=32.0).contains(&bw),
                format!(
                    "RO 100% hit random, 10 ms: {bw:.3} GB/s, need [{SATURATION_FLOOR_GBPS}, 32]"
                ),
            )
        }
        Err(e) => Outcome::error(e),
    }
}

fn ordering_battery() -> Outcome {
    match run_battery(1, 1_000_000.0) {
        Ok(points) => {
            let checks = battery_checks(&points);
            let ordering: Vec<_> = checks
                .iter()
                .filter(|c| c.name.starts_with("order/"))
                .collect();
            let failed: Vec<_> = ordering.iter().filter(|c| !c.passed).collect();
            let mut out = Outcome::new(
                failed.is_empty(),
                format!(
                    "{} ordering checks over 18 points, {} violations",
                    ordering.len(),
                    failed.len()
                ),
            );
            out.details = failed
                .iter()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect();
            out
        }
        Err(e) => Outcome::error(e),
    }
}

fn policy_study() -> Outcome {
    let mut bw = Vec::new();
    for policy in [
        PolicyKind::Baseline,
        PolicyKind::BearWrOpt,
        PolicyKind::Oracle,
    ] {
        match run_config(&policy_study_config(policy, 1, 5_000_000.0)) {
            Ok(run) => bw.push(run.eff_bw_gbps),
            Err(e) => return Outcome::error(e),
        }
    }
    let (base, bear, oracle) = (bw[0], bw[1], bw[2]);
    let gap = |hi: f64, lo: f64| (hi - lo) / lo;
    Outcome::new(
        gap(bear, base) >= 0.01 && gap(oracle, bear) >= 0.01,
        format!(
            "oracle {oracle:.3} > bear-wr-opt {bear:.3} > baseline {base:.3} GB/s (gaps {:.1}%, {:.1}%)",
            gap(oracle, bear) * 100.0,
            gap(bear, base) * 100.0
        ),
    )
}

fn link_study() -> Outcome {
    let rts = [100.0, 500.0, 1000.0];
    let mut drops = Vec::new();
    let mut out = Outcome::new(true, "");
    for kind in [DeviceKind::Ddr4, DeviceKind::Nvm] {
        let mut bw = Vec::new();
        for rt in rts {
            match run_config(&link_study_config(kind, rt, 1, 2_000_000.0)) {
                Ok(run) => bw.push(run.eff_bw_gbps),
                Err(e) => return Outcome::error(e),
            }
        }
        let monotone = bw.windows(2).all(|w| w[1] <= w[0]);
        if !monotone {
            out.details
                .push(format!("{}: {bw:?} not non-increasing", kind.as_str()));
        }
        drops.push((bw[0] - bw[2]) / bw[0]);
        out.details.push(format!(
            "{}: {:.3} / {:.3} / {:.3} GB/s at 100 / 500 / 1000 ns",
            kind.as_str(),
            bw[0],
            bw[1],
            bw[2]
        ));
    }
    out.passed = out
        .details
        .iter()
        .all(|d| !d.contains("not non-increasing"))
        && drops[1] < drops[0];
    out.summary = format!(
        "drop 100->1000 ns: ddr4 {:.1}%, nvm {:.1}%",
        drops[0] * 100.0,
        drops[1] * 100.0
    );
    out
}

fn random_config() -> impl Strategy<Value = RunConfig> {
    (
        (
            prop_oneof![
                Just(PolicyKind::Baseline),
                Just(PolicyKind::BearWrOpt),
                Just(PolicyKind::Oracle)
            ],
            prop_oneof![Just(Pattern::Linear), Just(Pattern::Random)],
            0.0..=1.0f64,
            0.0..=1.0f64,
            0.0..=1.0f64,
            0.1..=1.0f64,
            0.0..=1.0f64,
            any::<bool>(),
        ),
        (
            prop_oneof![Just(0.0), 1.0..20.0f64],
            prop_oneof![Just(0.0), Just(100.0), Just(500.0)],
            prop_oneof![Just(DeviceKind::Ddr4), Just(DeviceKind::Nvm)],
            prop_oneof![Just(64u64 << 10), Just(1u64 << 20), Just(128u64 << 20)],
            any::<u64>(),
            10_000.0..40_000.0f64,
        ),
    )
        .prop_map(
            |(
                (policy, pattern, read, miss, dirty_victims, resident, dirty, stationary),
                (gap, rt, far, near_cap, seed, dur),
            )| {
                let mut cfg = RunConfig::default();
                cfg.policy = policy;
                cfg.engine.seed = seed;
                cfg.engine.duration_ns = dur;
                cfg.near.capacity_bytes = near_cap;
                cfg.far.kind = far;
                cfg.link.far_link_round_trip_ns = rt;
                let t = &mut cfg.traffic;
                t.pattern = pattern;
                t.read_pct = read;
                t.miss_ratio = miss;
                t.dirty_victim_pct = dirty_victims;
                t.resident_fraction = resident;
                t.dirty_fraction = dirty;
                t.stationary = stationary;
                t.inter_arrival_ns = gap;
                cfg
            },
        )
}

fn check_one(cfg: &RunConfig) -> Result<(), TestCaseError> {
    let mut sys = System::new(cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    while sys.step() {
        sys.check_invariants().map_err(TestCaseError::fail)?;
    }
    let run = sys
        .finish()
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let s = &run.stats;
    prop_assert_eq!(s.demands_issued, s.demands_retired);
    prop_assert!(s.demands_retired > 0);
    prop_assert!(s.max_orb <= 128, "max_orb {}", s.max_orb);
    prop_assert!(s.max_crb <= 32, "max_crb {}", s.max_crb);
    prop_assert!(s.max_wb <= 64, "max_wb {}", s.max_wb);
    prop_assert_eq!(s.far_writes, s.dirty_evictions);
    prop_assert_eq!(s.writebacks_issued, s.dirty_evictions);
    Ok(())
}

fn conservation() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 100,
        failure_persistence: None,
        ..PropConfig::default()
    });
    match runner.run(&random_config(), |cfg| check_one(&cfg)) {
        Ok(()) => Outcome::new(
            true,
            "100 randomized configurations, invariants checked after every event",
        ),
        Err(e) => Outcome::new(false, format!("{e}")),
    }
}

fn hand_trace_oracle() -> Outcome {
    let want = oracle::timeline(&hand_trace::SCRIPT);
    let frozen: Vec<_> = hand_trace::EXPECTED
        .iter()
        .map(|&(c, r, t)| (c.to_string(), r, t))
        .collect();
    let got = match hand_trace::run() {
        Ok(run) => run
            .into_iter()
            .map(|r| {
                (
                    r.class.label().to_string(),
                    r.response_at.map(|t| t.0),
                    r.retired_at.0,
                )
            })
            .collect::<Vec<_>>(),
        Err(e) => return Outcome::error(e),
    };
    let mut out = Outcome::new(got == want && want == frozen, "12 requests, 8 classes");
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        if g != w {
            out.details
                .push(format!("request {}: simulator {g:?}, oracle {w:?}", i + 1));
        }
    }
    if want != frozen {
        out.details
            .push("oracle differs from the frozen table".into());
    }
    out
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_dcsim");
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::error(e),
    };
    let mut csv = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("validate-{i}.csv"));
        let status = Command::new(bin)
            .args(["validate", "--seed", "7", "--out"])
            .arg(&path)
            .stderr(std::process::Stdio::null())
            .status();
        match status {
            // exit 1 only means some check failed; the CSV is still written
            Ok(s) if s.code() == Some(0) || s.code() == Some(1) => {}
            Ok(s) => return Outcome::new(false, format!("validate exited with {s}")),
            Err(e) => return Outcome::error(e),
        }
        match std::fs::read(&path) {
            Ok(bytes) => csv.push(bytes),
            Err(e) => return Outcome::error(e),
        }
    }
    Outcome::new(
        !csv[0].is_empty() && csv[0] == csv[1],
        format!(
            "two validate runs, seed 7: {} and {} CSV bytes",
            csv[0].len(),
            csv[1].len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 plan table and amplification", plan_table),
        ("2 saturation point", saturation),
        ("3 ordering battery", ordering_battery),
        ("4 policy ordering", policy_study),
        ("5 link latency", link_study),
        ("6 conservation and occupancy", conservation),
        ("7 hand trace", hand_trace_oracle),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let out = f();
        let mark = if out.passed { "PASS" } else { "FAIL" };
        println!(
            "[{mark}] {name}: {} ({:.1}s)",
            out.summary,
            t.elapsed().as_secs_f64()
        );
        for d in &out.details {
            println!("         {d}");
        }
        if !out.passed {
            failed += 1;
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
