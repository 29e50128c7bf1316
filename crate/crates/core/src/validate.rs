//! The built-in validation suite behind `dcsim validate`.

use rayon::prelude::*;

use crate::error::SimError;
use crate::policy::{plan, PolicyKind};
use crate::scenario::{battery_config, hand_trace, pattern_label, HitScenario, Mix};
use crate::system::run_config;
use crate::telemetry::Report;
use crate::traffic::Pattern;
use crate::types::RequestClass;

/// Plan lengths per policy, columns in [`RequestClass::ALL`] order.
pub const PLAN_TABLE: [(PolicyKind, [usize; 8]); 3] = [
    (PolicyKind::Baseline, [1, 1, 4, 3, 2, 2, 3, 2]),
    (PolicyKind::BearWrOpt, [1, 1, 4, 3, 1, 1, 3, 2]),
    (PolicyKind::Oracle, [1, 1, 4, 2, 1, 1, 3, 1]),
];

/// Lowest acceptable read-only all-hit bandwidth on random traffic, GB/s.
pub const SATURATION_FLOOR_GBPS: f64 = 28.5;
/// Largest relative gap allowed between miss-dirty and miss-clean.
pub const DIRTY_CLEAN_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub seed: u64,
    pub duration_ns: f64,
    /// Only checks whose name contains this substring run.
    pub filter: Option<String>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            seed: 1,
            duration_ns: 1_000_000.0,
            filter: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct ValidateOutcome {
    pub checks: Vec<Check>,
    pub reports: Vec<Report>,
}

impl ValidateOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4);
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{mark}  {:<width$}  {}\n", c.name, c.detail));
        }
        let failed = self.failures().count();
        out.push_str(&format!(
            "{} checks, {} failed\n",
            self.checks.len(),
            failed
        ));
        out
    }
}

pub fn plan_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for (policy, lengths) in PLAN_TABLE {
        for (class, want) in RequestClass::ALL.into_iter().zip(lengths) {
            let got = plan(policy, class).len();
            out.push(Check::new(
                format!("plan/{policy}/{class}"),
                got == want,
                format!("{got} accesses, expected {want}"),
            ));
        }
    }
    out
}

pub fn hand_trace_check() -> Check {
    match hand_trace::run() {
        Ok(run) => {
            let bad = hand_trace::mismatches(&run);
            let detail = if bad.is_empty() {
                "12 requests match".to_string()
            } else {
                bad.join("; ")
            };
            Check::new("hand-trace", bad.is_empty(), detail)
        }
        Err(e) => Check::new("hand-trace", false, e.to_string()),
    }
}

/// One battery point's result.
#[derive(Debug, Clone)]
pub struct BatteryPoint {
    pub mix: Mix,
    pub scenario: HitScenario,
    pub pattern: Pattern,
    pub eff_bw_gbps: f64,
    pub report: Report,
}

pub fn run_battery(seed: u64, duration_ns: f64) -> Result<Vec<BatteryPoint>, SimError> {
    let mut points = Vec::new();
    for pattern in [Pattern::Linear, Pattern::Random] {
        for mix in Mix::ALL {
            for scenario in HitScenario::ALL {
                points.push((mix, scenario, pattern));
            }
        }
    }
    points
        .into_par_iter()
        .map(|(mix, scenario, pattern)| {
            let cfg = battery_config(mix, scenario, pattern, seed, duration_ns);
            let out = run_config(&cfg)?;
            Ok(BatteryPoint {
                mix,
                scenario,
                pattern,
                eff_bw_gbps: out.eff_bw_gbps,
                report: out.report(&cfg),
            })
        })
        .collect()
}

/// Ordering checks over a full battery.
pub fn battery_checks(points: &[BatteryPoint]) -> Vec<Check> {
    let bw = |mix: Mix, scenario: HitScenario, pattern: Pattern| {
        points
            .iter()
            .find(|p| p.mix == mix && p.scenario == scenario && p.pattern == pattern)
            .map(|p| p.eff_bw_gbps)
            .expect("battery point present")
    };
    let mut out = Vec::new();
    for pattern in [Pattern::Linear, Pattern::Random] {
        let pl = pattern_label(pattern);
        let (ro, r67, wo) = (
            bw(Mix::ReadOnly, HitScenario::Hit, pattern),
            bw(Mix::Read67, HitScenario::Hit, pattern),
            bw(Mix::WriteOnly, HitScenario::Hit, pattern),
        );
        out.push(Check::new(
            format!("order/{pl}/hit/ro>=67r>=wo"),
            ro >= r67 && r67 >= wo,
            format!("{ro:.3} >= {r67:.3} >= {wo:.3}"),
        ));
        for mix in Mix::ALL {
            let ml = mix.label();
            let hit = bw(mix, HitScenario::Hit, pattern);
            let clean = bw(mix, HitScenario::MissClean, pattern);
            let dirty = bw(mix, HitScenario::MissDirty, pattern);
            out.push(Check::new(
                format!("order/{pl}/{ml}/hit>=miss-clean"),
                hit >= clean,
                format!("{hit:.3} >= {clean:.3}"),
            ));
            let gap = (dirty - clean).abs() / clean;
            out.push(Check::new(
                format!("order/{pl}/{ml}/miss-dirty~miss-clean"),
                gap <= DIRTY_CLEAN_TOLERANCE,
                format!("{dirty:.3} vs {clean:.3} ({:.1}%)", gap * 100.0),
            ));
        }
    }
    let sat = bw(Mix::ReadOnly, HitScenario::Hit, Pattern::Random);
    out.push(Check::new(
        "saturation/ro-hit-random",
        sat >= SATURATION_FLOOR_GBPS,
        format!("{sat:.3} GB/s, floor {SATURATION_FLOOR_GBPS}"),
    ));
    out
}

pub fn run_validation(opts: &ValidateOptions) -> ValidateOutcome {
    let wanted = |name: &str| opts.filter.as_deref().is_none_or(|f| name.contains(f));
    let mut outcome = ValidateOutcome::default();
    outcome
        .checks
        .extend(plan_checks().into_iter().filter(|c| wanted(&c.name)));
    if wanted("hand-trace") {
        outcome.checks.push(hand_trace_check());
    }
    let battery_wanted = opts
        .filter
        .as_deref()
        .is_none_or(|f| !(f.starts_with("plan") || f.starts_with("hand")));
    if battery_wanted {
        match run_battery(opts.seed, opts.duration_ns) {
            Ok(points) => {
                outcome.checks.extend(
                    battery_checks(&points)
                        .into_iter()
                        .filter(|c| wanted(&c.name)),
                );
                outcome.reports = points.into_iter().map(|p| p.report).collect();
            }
            Err(e) => outcome
                .checks
                .push(Check::new("battery", false, e.to_string())),
        }
    }
    outcome
}
