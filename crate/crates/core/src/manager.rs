//! The DRAM cache manager.
//!
//! Demands enter the Outstanding Requests Buffer (ORB) unless another live
//! entry maps to the same cache index, in which case they wait in the
//! Conflicting Requests Buffer (CRB). Each ORB entry executes the access plan
//! its policy prescribes for its class. Dirty victims go to the Write Back
//! (WB) buffer, which drains to far memory when the far side has no demand
//! reads pending, or with strict priority once the buffer fills up.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::device::{Admission, DeviceOp};
use crate::policy::{plan, AccessPlan, PlanStep, PolicyKind, Purpose, Target};
use crate::telemetry::RunStats;
use crate::types::{
    classify, map_to_cache, CacheGeometry, DemandRequest, RequestClass, TagStore, Tick,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManagerConfig {
    pub orb_entries: usize,
    pub crb_entries: usize,
    pub wb_entries: usize,
    pub frontend_lat: Tick,
    pub backend_lat: Tick,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            orb_entries: 128,
            crb_entries: 32,
            wb_entries: 64,
            frontend_lat: Tick::from_ns(10),
            backend_lat: Tick::from_ns(10),
        }
    }
}

/// Where a device op came from, so its completion can be routed back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpOrigin {
    Orb { slot: u32, step: u8 },
    Writeback { class: RequestClass },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgrEvent {
    StartPlan(u32),
    Retire(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receive {
    AcceptedToOrb,
    ParkedInCrb,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryState {
    WaitTagCheck,
    WaitFarRead,
    WaitFill,
    WaitLocalWrite,
    Done,
}

impl EntryState {
    fn waiting_on(purpose: Purpose) -> EntryState {
        match purpose {
            Purpose::TagCheck => EntryState::WaitTagCheck,
            Purpose::DataRead => EntryState::WaitFarRead,
            Purpose::Fill | Purpose::Writeback => EntryState::WaitFill,
            Purpose::DemandWrite => EntryState::WaitLocalWrite,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrbEntry {
    pub req: DemandRequest,
    pub class: RequestClass,
    pub index: u64,
    pub tag: u64,
    pub plan: AccessPlan,
    pub state: EntryState,
    issued: u8,
    done: u8,
    pub admitted: Tick,
    pub response_at: Option<Tick>,
    pub state_entered: [Option<Tick>; 5],
}

impl OrbEntry {
    /// Number of plan steps handed out so far.
    pub fn plan_cursor(&self) -> usize {
        self.issued.count_ones() as usize
    }

    fn all_done(&self) -> bool {
        self.done.count_ones() as usize == self.plan.len()
    }

    fn ready(&self, i: usize) -> bool {
        let step = &self.plan.steps()[i];
        self.issued & (1 << i) == 0 && step.depends_on.iter().all(|&d| self.done & (1 << d) != 0)
    }

    fn set_state(&mut self, now: Tick) {
        let next = (0..self.plan.len())
            .find(|&i| self.done & (1 << i) == 0)
            .map(|i| EntryState::waiting_on(self.plan.steps()[i].purpose))
            .unwrap_or(EntryState::Done);
        if next != self.state || self.state_entered[next as usize].is_none() {
            self.state = next;
            self.state_entered[next as usize].get_or_insert(now);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CrbEntry {
    pub req: DemandRequest,
    pub blocking_index: u64,
    pub arrival: Tick,
}

#[derive(Debug, Clone, Copy)]
pub struct WbEntry {
    pub far_addr: u64,
    pub class: RequestClass,
    pub inserted: Tick,
}

/// What the manager needs from the rest of the system.
pub trait ManagerCtx {
    fn now(&self) -> Tick;
    fn schedule(&mut self, delay: Tick, ev: MgrEvent);
    /// Port that serves `addr` on `target`. Near ports come first; the far
    /// port is `num_ports - 1`.
    fn port_for(&self, target: Target, addr: u64) -> usize;
    fn submit(&mut self, port: usize, op: DeviceOp<OpOrigin>, purpose: Purpose) -> Admission;
    /// True while demand reads are queued at, or in transit to, far memory.
    fn far_reads_pending(&self) -> bool;
}

/// A retired demand, for per-request logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Retired {
    pub req: DemandRequest,
    pub class: RequestClass,
    pub response_at: Option<Tick>,
    pub retired_at: Tick,
}

pub struct CacheManager {
    cfg: ManagerConfig,
    policy: PolicyKind,
    geom: CacheGeometry,
    tags: TagStore,
    orb: Vec<Option<OrbEntry>>,
    free_slots: Vec<u32>,
    orb_len: usize,
    live: HashMap<u64, u32>,
    crb: VecDeque<CrbEntry>,
    wb: VecDeque<WbEntry>,
    wb_drain: bool,
    waiting: Vec<VecDeque<(u32, u8)>>,
    wb_waiting: VecDeque<(u32, u8)>,
    far_port: usize,
    next_op_id: u64,
}

impl CacheManager {
    pub fn new(
        cfg: ManagerConfig,
        policy: PolicyKind,
        geom: CacheGeometry,
        num_ports: usize,
    ) -> Self {
        assert!(num_ports >= 2, "need at least one near and one far port");
        CacheManager {
            tags: TagStore::new(&geom),
            orb: (0..cfg.orb_entries).map(|_| None).collect(),
            free_slots: (0..cfg.orb_entries as u32).rev().collect(),
            orb_len: 0,
            live: HashMap::with_capacity(cfg.orb_entries),
            crb: VecDeque::with_capacity(cfg.crb_entries),
            wb: VecDeque::with_capacity(cfg.wb_entries),
            wb_drain: false,
            waiting: vec![VecDeque::new(); num_ports],
            wb_waiting: VecDeque::new(),
            far_port: num_ports - 1,
            next_op_id: 0,
            cfg,
            policy,
            geom,
        }
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn tags(&self) -> &TagStore {
        &self.tags
    }

    pub fn tags_mut(&mut self) -> &mut TagStore {
        &mut self.tags
    }

    pub fn orb_len(&self) -> usize {
        self.orb_len
    }

    pub fn crb_len(&self) -> usize {
        self.crb.len()
    }

    pub fn wb_len(&self) -> usize {
        self.wb.len()
    }

    pub fn wb_draining(&self) -> bool {
        self.wb_drain
    }

    pub fn is_empty(&self) -> bool {
        self.orb_len == 0 && self.crb.is_empty() && self.wb.is_empty()
    }

    pub fn entry(&self, slot: u32) -> Option<&OrbEntry> {
        self.orb.get(slot as usize).and_then(|e| e.as_ref())
    }

    pub fn live_entries(&self) -> impl Iterator<Item = &OrbEntry> {
        self.orb.iter().flatten()
    }

    /// Admission of a new demand from the source.
    pub fn receive(
        &mut self,
        ctx: &mut impl ManagerCtx,
        stats: &mut RunStats,
        req: DemandRequest,
    ) -> Receive {
        let (index, _) = map_to_cache(req.addr, &self.geom);
        if self.live.contains_key(&index) {
            if self.crb.len() >= self.cfg.crb_entries {
                return Receive::Stalled;
            }
            self.crb.push_back(CrbEntry {
                req,
                blocking_index: index,
                arrival: req.arrival,
            });
            stats.demands_issued += 1;
            stats.max_crb = stats.max_crb.max(self.crb.len());
            return Receive::ParkedInCrb;
        }
        if self.orb_len >= self.cfg.orb_entries {
            return Receive::Stalled;
        }
        stats.demands_issued += 1;
        let start = ctx.now() + self.cfg.frontend_lat;
        self.admit(ctx, stats, req, start);
        Receive::AcceptedToOrb
    }

    fn admit(
        &mut self,
        ctx: &mut impl ManagerCtx,
        stats: &mut RunStats,
        req: DemandRequest,
        start: Tick,
    ) {
        let (index, tag) = map_to_cache(req.addr, &self.geom);
        let class = classify(&req, self.tags.get(index), &self.geom);
        let slot = self.free_slots.pop().expect("ORB slot available");
        let now = ctx.now();
        let mut entry = OrbEntry {
            req,
            class,
            index,
            tag,
            plan: plan(self.policy, class),
            state: EntryState::Done,
            issued: 0,
            done: 0,
            admitted: now,
            response_at: None,
            state_entered: [None; 5],
        };
        entry.set_state(now);
        self.orb[slot as usize] = Some(entry);
        self.orb_len += 1;
        let prev = self.live.insert(index, slot);
        debug_assert!(prev.is_none(), "two live ORB entries for index {index}");
        stats.max_orb = stats.max_orb.max(self.orb_len);
        ctx.schedule(start.saturating_sub(now), MgrEvent::StartPlan(slot));
    }

    pub fn start_plan(&mut self, ctx: &mut impl ManagerCtx, stats: &mut RunStats, slot: u32) {
        self.advance(ctx, stats, slot);
    }

    fn entry_mut(&mut self, slot: u32) -> &mut OrbEntry {
        self.orb[slot as usize].as_mut().expect("live ORB slot")
    }

    /// Issues every step whose dependencies are complete.
    fn advance(&mut self, ctx: &mut impl ManagerCtx, stats: &mut RunStats, slot: u32) {
        let mut progressed = true;
        while progressed {
            progressed = false;
            let len = self.entry_mut(slot).plan.len();
            for i in 0..len {
                if self.entry_mut(slot).ready(i) {
                    self.entry_mut(slot).issued |= 1 << i;
                    if self.issue_step(ctx, stats, slot, i as u8) {
                        progressed = true;
                    }
                }
            }
        }
        let now = ctx.now();
        let backend = self.cfg.backend_lat;
        let entry = self.entry_mut(slot);
        entry.set_state(now);
        if entry.all_done() {
            ctx.schedule(backend, MgrEvent::Retire(slot));
        }
    }

    /// Returns true if the step completed synchronously.
    fn issue_step(
        &mut self,
        ctx: &mut impl ManagerCtx,
        stats: &mut RunStats,
        slot: u32,
        step: u8,
    ) -> bool {
        let entry = self.orb[slot as usize].as_ref().expect("live ORB slot");
        let s = entry.plan.steps()[step as usize];
        if s.purpose == Purpose::Writeback {
            if self.wb_waiting.is_empty() && self.wb.len() < self.cfg.wb_entries {
                self.insert_writeback(ctx, stats, slot, step);
                return true;
            }
            self.wb_waiting.push_back((slot, step));
            return false;
        }
        let port = ctx.port_for(s.target, self.step_addr(entry, &s));
        let blocked =
            !self.waiting[port].is_empty() || (port == self.far_port && self.far_blocked());
        if blocked || !self.try_submit(ctx, stats, slot, step) {
            self.waiting[port].push_back((slot, step));
        }
        false
    }

    fn step_addr(&self, entry: &OrbEntry, s: &PlanStep) -> u64 {
        match s.target {
            Target::Near => self.geom.near_addr(entry.index),
            Target::Far => entry.req.addr,
        }
    }

    fn try_submit(
        &mut self,
        ctx: &mut impl ManagerCtx,
        stats: &mut RunStats,
        slot: u32,
        step: u8,
    ) -> bool {
        let entry = self.orb[slot as usize].as_ref().expect("live ORB slot");
        let s = entry.plan.steps()[step as usize];
        let addr = self.step_addr(entry, &s);
        let class = entry.class;
        let op = DeviceOp {
            op_id: self.next_op_id,
            addr,
            is_write: s.is_write,
            origin: OpOrigin::Orb { slot, step },
        };
        let port = ctx.port_for(s.target, addr);
        match ctx.submit(port, op, s.purpose) {
            Admission::Accepted => {
                self.next_op_id += 1;
                stats.record_device_op(class, s.target == Target::Far, s.is_write);
                true
            }
            Admission::Rejected => false,
        }
    }

    fn far_blocked(&self) -> bool {
        self.wb_drain && !self.wb.is_empty()
    }

    fn insert_writeback(
        &mut self,
        ctx: &mut impl ManagerCtx,
        stats: &mut RunStats,
        slot: u32,
        step: u8,
    ) {
        let now = ctx.now();
        let entry = self.entry_mut(slot);
        entry.done |= 1 << step;
        let (index, class) = (entry.index, entry.class);
        let victim = *self.tags.get(index);
        debug_assert!(victim.valid && victim.dirty);
        self.wb.push_back(WbEntry {
            far_addr: self.geom.far_addr(index, victim.tag),
            class,
            inserted: now,
        });
        stats.dirty_evictions += 1;
        stats.max_wb = stats.max_wb.max(self.wb.len());
        if self.wb.len() >= self.cfg.wb_entries {
            self.wb_drain = true;
        }
    }

    fn submit_writeback(&mut self, ctx: &mut impl ManagerCtx, stats: &mut RunStats) -> bool {
        let Some(&wb) = self.wb.front() else {
            return false;
        };
        let op = DeviceOp {
            op_id: self.next_op_id,
            addr: wb.far_addr,
            is_write: true,
            origin: OpOrigin::Writeback { class: wb.class },
        };
        if ctx.submit(self.far_port, op, Purpose::Writeback) == Admission::Rejected {
            return false;
        }
        self.next_op_id += 1;
        self.wb.pop_front();
        stats.record_device_op(wb.class, true, true);
        stats.writebacks_issued += 1;
        if self.wb_drain && self.wb.len() * 2 < self.cfg.wb_entries {
            self.wb_drain = false;
        }
        true
    }

    /// Retries everything blocked on device or WB space. Call after any
    /// event that may have freed space.
    pub fn pump(&mut self, ctx: &mut impl ManagerCtx, stats: &mut RunStats) {
        loop {
            let mut progress = false;
            for port in 0..self.far_port {
                while let Some(&(slot, step)) = self.waiting[port].front() {
                    if !self.try_submit(ctx, stats, slot, step) {
                        break;
                    }
                    self.waiting[port].pop_front();
                    progress = true;
                }
            }
            loop {
                if self.far_blocked() {
                    if self.submit_writeback(ctx, stats) {
                        progress = true;
                        continue;
                    }
                    break;
                }
                if let Some(&(slot, step)) = self.waiting[self.far_port].front() {
                    if self.try_submit(ctx, stats, slot, step) {
                        self.waiting[self.far_port].pop_front();
                        progress = true;
                        continue;
                    }
                    break;
                }
                if !self.wb.is_empty()
                    && !ctx.far_reads_pending()
                    && self.submit_writeback(ctx, stats)
                {
                    progress = true;
                    continue;
                }
                break;
            }
            while self.wb.len() < self.cfg.wb_entries {
                let Some((slot, step)) = self.wb_waiting.pop_front() else {
                    break;
                };
                self.insert_writeback(ctx, stats, slot, step);
                self.advance(ctx, stats, slot);
                progress = true;
            }
            if !progress {
                break;
            }
        }
    }

    /// A device op issued by this manager has completed (as seen here).
    pub fn on_complete(
        &mut self,
        ctx: &mut impl ManagerCtx,
        stats: &mut RunStats,
        origin: OpOrigin,
    ) {
        let OpOrigin::Orb { slot, step } = origin else {
            return;
        };
        let now = ctx.now();
        let backend = self.cfg.backend_lat;
        let entry = self.entry_mut(slot);
        entry.done |= 1 << step;
        if !entry.req.is_write && entry.plan.response_step() == Some(step as usize) {
            entry.response_at = Some(now + backend);
        }
        self.advance(ctx, stats, slot);
    }

    /// Frees a finished ORB entry, updates the tag store, and promotes the
    /// oldest CRB entry waiting on the same index. `on_update` sees the tag
    /// store after this demand's update and before any promotion.
    pub fn retire<F>(
        &mut self,
        ctx: &mut impl ManagerCtx,
        stats: &mut RunStats,
        slot: u32,
        on_update: F,
    ) -> Retired
    where
        F: FnOnce(&DemandRequest, RequestClass, &mut TagStore),
    {
        let now = ctx.now();
        let entry = self.orb[slot as usize].take().expect("live ORB slot");
        debug_assert_eq!(entry.state, EntryState::Done);
        self.orb_len -= 1;
        self.free_slots.push(slot);
        self.live.remove(&entry.index);

        let class = entry.class;
        match (class.is_write, class.is_hit) {
            (false, true) => {}
            (false, false) => self.tags.fill(entry.index, entry.tag, false),
            (true, true) => self.tags.get_mut(entry.index).dirty = true,
            (true, false) => self.tags.fill(entry.index, entry.tag, true),
        }
        on_update(&entry.req, class, &mut self.tags);
        stats.record_retire(class, entry.req.arrival, now);

        if let Some(pos) = self
            .crb
            .iter()
            .position(|c| c.blocking_index == entry.index)
        {
            let parked = self.crb.remove(pos).expect("position valid");
            let start = now.max(parked.arrival + self.cfg.frontend_lat);
            self.admit(ctx, stats, parked.req, start);
        }
        Retired {
            req: entry.req,
            class,
            response_at: entry.response_at,
            retired_at: now,
        }
    }

    /// Structural invariants: buffer bounds, index exclusivity, CRB entries
    /// blocked on live ORB entries, WB drain bookkeeping.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.orb_len > self.cfg.orb_entries {
            return Err(format!(
                "ORB holds {} > {}",
                self.orb_len, self.cfg.orb_entries
            ));
        }
        if self.crb.len() > self.cfg.crb_entries {
            return Err(format!(
                "CRB holds {} > {}",
                self.crb.len(),
                self.cfg.crb_entries
            ));
        }
        if self.wb.len() > self.cfg.wb_entries {
            return Err(format!(
                "WB holds {} > {}",
                self.wb.len(),
                self.cfg.wb_entries
            ));
        }
        let mut seen = HashSet::new();
        for e in self.live_entries() {
            if !seen.insert(e.index) {
                return Err(format!("two live ORB entries share index {}", e.index));
            }
            if e.plan_cursor() > e.plan.len() {
                return Err("plan cursor past end".into());
            }
        }
        if seen.len() != self.orb_len || self.live.len() != self.orb_len {
            return Err("ORB bookkeeping out of sync".into());
        }
        if let Some(c) = self.crb.iter().find(|c| !seen.contains(&c.blocking_index)) {
            return Err(format!(
                "CRB entry {} blocked on dead index {}",
                c.req.id, c.blocking_index
            ));
        }
        Ok(())
    }
}
