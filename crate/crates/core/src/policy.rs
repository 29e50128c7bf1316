//! Caching policies as declarative access plans.
//!
//! A plan lists, for one request class, every device access the cache
//! manager performs and which earlier accesses each one waits for. The
//! manager executes plans without knowing which policy produced them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::RequestClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Direct-mapped, insert-on-miss, write-back; every demand starts with a
    /// near read that returns data, tag and metadata together.
    Baseline,
    /// Baseline, but write hits skip the tag-check read.
    BearWrOpt,
    /// Zero-latency tag knowledge: write hits and all clean misses skip the
    /// tag-check read.
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::Baseline,
        PolicyKind::BearWrOpt,
        PolicyKind::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::BearWrOpt => "bear-wr-opt",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                format!("unknown policy `{s}` (expected baseline, bear-wr-opt or oracle)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Near,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    TagCheck,
    DataRead,
    Fill,
    DemandWrite,
    Writeback,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::TagCheck => "tag_check",
            Purpose::DataRead => "data_read",
            Purpose::Fill => "fill",
            Purpose::DemandWrite => "demand_write",
            Purpose::Writeback => "writeback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanStep {
    pub target: Target,
    pub is_write: bool,
    pub purpose: Purpose,
    /// Indices of strictly earlier steps that must complete first.
    pub depends_on: &'static [u8],
}

const fn step(
    target: Target,
    is_write: bool,
    purpose: Purpose,
    depends_on: &'static [u8],
) -> PlanStep {
    PlanStep {
        target,
        is_write,
        purpose,
        depends_on,
    }
}

const TAG_CHECK: PlanStep = step(Target::Near, false, Purpose::TagCheck, &[]);

const READ_HIT: &[PlanStep] = &[TAG_CHECK];
const READ_MISS_CLEAN: &[PlanStep] = &[
    TAG_CHECK,
    step(Target::Far, false, Purpose::DataRead, &[0]),
    step(Target::Near, true, Purpose::Fill, &[1]),
];
const READ_MISS_DIRTY: &[PlanStep] = &[
    TAG_CHECK,
    step(Target::Far, false, Purpose::DataRead, &[0]),
    step(Target::Near, true, Purpose::Fill, &[1]),
    step(Target::Far, true, Purpose::Writeback, &[0]),
];
// A full-line write needs no far read: allocation and demand data merge into
// one near write.
const WRITE_AFTER_CHECK: &[PlanStep] = &[
    TAG_CHECK,
    step(Target::Near, true, Purpose::DemandWrite, &[0]),
];
const WRITE_MISS_DIRTY: &[PlanStep] = &[
    TAG_CHECK,
    step(Target::Near, true, Purpose::DemandWrite, &[0]),
    step(Target::Far, true, Purpose::Writeback, &[0]),
];
const WRITE_BLIND: &[PlanStep] = &[step(Target::Near, true, Purpose::DemandWrite, &[])];
const ORACLE_READ_MISS_CLEAN: &[PlanStep] = &[
    step(Target::Far, false, Purpose::DataRead, &[]),
    step(Target::Near, true, Purpose::Fill, &[0]),
];
// The victim still has to be read out, but the far read need not wait for it.
const ORACLE_READ_MISS_DIRTY: &[PlanStep] = &[
    TAG_CHECK,
    step(Target::Far, false, Purpose::DataRead, &[]),
    step(Target::Near, true, Purpose::Fill, &[0, 1]),
    step(Target::Far, true, Purpose::Writeback, &[0]),
];

/// The ordered steps for one (policy, class) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessPlan {
    steps: &'static [PlanStep],
}

impl AccessPlan {
    pub fn steps(&self) -> &'static [PlanStep] {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The step whose completion carries read data back to the requester.
    pub fn response_step(&self) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.purpose == Purpose::DataRead)
            .or_else(|| {
                self.steps
                    .iter()
                    .position(|s| s.purpose == Purpose::TagCheck)
            })
    }

    pub fn count(&self, target: Target, is_write: bool) -> usize {
        self.steps
            .iter()
            .filter(|s| s.target == target && s.is_write == is_write)
            .count()
    }
}

pub fn plan(policy: PolicyKind, class: RequestClass) -> AccessPlan {
    use PolicyKind::*;
    let steps = match (class.is_write, class.is_hit, class.victim_dirty) {
        (false, true, _) => READ_HIT,
        (false, false, true) => match policy {
            Oracle => ORACLE_READ_MISS_DIRTY,
            Baseline | BearWrOpt => READ_MISS_DIRTY,
        },
        (false, false, false) => match policy {
            Oracle => ORACLE_READ_MISS_CLEAN,
            Baseline | BearWrOpt => READ_MISS_CLEAN,
        },
        (true, true, _) => match policy {
            Baseline => WRITE_AFTER_CHECK,
            BearWrOpt | Oracle => WRITE_BLIND,
        },
        (true, false, true) => WRITE_MISS_DIRTY,
        (true, false, false) => match policy {
            Oracle => WRITE_BLIND,
            Baseline | BearWrOpt => WRITE_AFTER_CHECK,
        },
    };
    AccessPlan { steps }
}

/// Plan lengths for all eight classes, in [`RequestClass::ALL`] order.
pub fn plan_length_table(policy: PolicyKind) -> [(RequestClass, usize); 8] {
    RequestClass::ALL.map(|c| (c, plan(policy, c).len()))
}
