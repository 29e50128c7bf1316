//! The simulated system: source → manager → {near channels, link → far}.

use std::fmt::Write as _;

use crate::config::{RunConfig, TrafficMode};
use crate::device::{Admission, Device, DeviceOp, Issued};
use crate::engine::Engine;
use crate::error::SimError;
use crate::link::{Direction, Link};
use crate::manager::{CacheManager, ManagerCtx, MgrEvent, OpOrigin, Receive, Retired};
use crate::policy::{Purpose, Target};
use crate::telemetry::{effective_bandwidth, Report, ReportRow, RowContext, RunStats};
use crate::traffic::{load_trace, SyntheticGen, TraceReplay};
use crate::types::{CacheGeometry, DemandRequest, Tick, LINE_BYTES};

#[derive(Debug, Clone, Copy)]
pub enum Event {
    SourceWake,
    Mgr(MgrEvent),
    DeviceWake(usize),
    DeviceDone {
        port: usize,
        origin: OpOrigin,
    },
    /// A far op reaching the far device after crossing the link.
    LinkArrive(DeviceOp<OpOrigin>),
}

pub enum Source {
    Synthetic(SyntheticGen),
    Trace(TraceReplay),
}

struct Ports {
    near: Vec<Device<OpOrigin>>,
    far: Device<OpOrigin>,
    link: Link,
}

impl Ports {
    fn device(&mut self, port: usize) -> &mut Device<OpOrigin> {
        if port < self.near.len() {
            &mut self.near[port]
        } else {
            &mut self.far
        }
    }

    fn far_port(&self) -> usize {
        self.near.len()
    }

    fn poll(&mut self, engine: &mut Engine<Event>, port: usize) {
        let now = engine.now();
        if let Some(at) = self.device(port).poll_wake(now) {
            engine.schedule_at(at, Event::DeviceWake(port));
        }
    }
}

struct Ctx<'a> {
    engine: &'a mut Engine<Event>,
    ports: &'a mut Ports,
    log: Option<&'a mut String>,
}

impl ManagerCtx for Ctx<'_> {
    fn now(&self) -> Tick {
        self.engine.now()
    }

    fn schedule(&mut self, delay: Tick, ev: MgrEvent) {
        self.engine.schedule(delay, Event::Mgr(ev));
    }

    fn port_for(&self, target: Target, addr: u64) -> usize {
        match target {
            Target::Near => ((addr / LINE_BYTES) % self.ports.near.len() as u64) as usize,
            Target::Far => self.ports.far_port(),
        }
    }

    fn submit(&mut self, port: usize, mut op: DeviceOp<OpOrigin>, purpose: Purpose) -> Admission {
        let now = self.engine.now();
        let far = port == self.ports.far_port();
        if !far {
            // channels interleave by line; each sees a dense local address space
            let n = self.ports.near.len() as u64;
            op.addr = (op.addr / LINE_BYTES / n) * LINE_BYTES;
        }
        let delivery = if far {
            self.ports.link.one_way(Direction::ToFar)
        } else {
            Tick::ZERO
        };
        let admission = if delivery == Tick::ZERO {
            self.ports.device(port).submit(op)
        } else {
            let a = self.ports.far.reserve(op.is_write);
            if a == Admission::Accepted {
                self.engine.schedule(delivery, Event::LinkArrive(op));
            }
            a
        };
        if admission == Admission::Accepted {
            if let Some(log) = self.log.as_deref_mut() {
                let _ = writeln!(
                    log,
                    "{} submit port={port} op={} addr={:#x} {} {}",
                    now.0,
                    op.op_id,
                    op.addr,
                    if op.is_write { "W" } else { "R" },
                    purpose.as_str()
                );
            }
            if delivery == Tick::ZERO {
                self.ports.poll(self.engine, port);
            }
        }
        admission
    }

    fn far_reads_pending(&self) -> bool {
        self.ports.far.read_occupancy() > 0
    }
}

/// Everything a finished run produces.
pub struct RunOutcome {
    pub stats: RunStats,
    pub retired: Vec<Retired>,
    pub near_util: f64,
    pub far_util: f64,
    pub eff_bw_gbps: f64,
    pub events: u64,
    pub event_log: Option<String>,
}

pub struct System {
    engine: Engine<Event>,
    geom: CacheGeometry,
    manager: CacheManager,
    ports: Ports,
    source: Source,
    stats: RunStats,
    duration: Tick,
    pending: Option<DemandRequest>,
    source_blocked: bool,
    record_retired: bool,
    retired: Vec<Retired>,
    log: Option<String>,
    issued_buf: Vec<Issued<OpOrigin>>,
}

impl System {
    pub fn new(cfg: &RunConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let geom = cfg.geometry()?;
        let source = match cfg.traffic.mode {
            TrafficMode::Synthetic => {
                Source::Synthetic(SyntheticGen::new(cfg.synthetic_config(), geom))
            }
            TrafficMode::Trace => {
                let path = cfg.traffic.trace_path.as_ref().expect("validated");
                Source::Trace(TraceReplay::new(load_trace(path, cfg.far.capacity_bytes)?))
            }
        };
        System::with_source(cfg, source)
    }

    /// Builds the system around an explicit source; the config's traffic
    /// section is ignored.
    pub fn with_source(cfg: &RunConfig, source: Source) -> Result<Self, SimError> {
        cfg.validate_system()?;
        let geom = cfg.geometry()?;
        let near_cfg = cfg.near.resolve();
        let near = (0..cfg.near.channels)
            .map(|_| Device::new(near_cfg.clone()))
            .collect();
        let ports = Ports {
            near,
            far: Device::new(cfg.far.resolve()),
            link: Link::new(cfg.link_config()),
        };
        let num_ports = cfg.near.channels as usize + 1;
        let manager = CacheManager::new(cfg.manager_config(), cfg.policy, geom, num_ports);
        let mut engine = Engine::new(cfg.engine.seed);
        let mut sys = System {
            engine: Engine::new(0),
            geom,
            manager,
            ports,
            source,
            stats: RunStats::default(),
            duration: cfg.duration(),
            pending: None,
            source_blocked: false,
            record_retired: false,
            retired: Vec::new(),
            log: None,
            issued_buf: Vec::new(),
        };
        if let Source::Synthetic(gen) = &mut sys.source {
            gen.seed_cache(engine.rng(), sys.manager.tags_mut());
        }
        let first = match &sys.source {
            Source::Synthetic(_) => Some(Tick::ZERO),
            Source::Trace(t) => t.peek_tick(),
        };
        if let Some(at) = first {
            engine.schedule_at(at, Event::SourceWake);
        }
        sys.engine = engine;
        Ok(sys)
    }

    /// Keeps every retirement (request, class, response and retire ticks).
    pub fn record_retirements(&mut self, on: bool) {
        self.record_retired = on;
    }

    /// Keeps a text log of every dispatched event and device submission.
    pub fn record_events(&mut self, on: bool) {
        self.log = on.then(String::new);
    }

    pub fn geometry(&self) -> CacheGeometry {
        self.geom
    }

    pub fn manager_ref(&self) -> &CacheManager {
        &self.manager
    }

    /// Direct access to the tag store, for setting up scripted scenarios.
    pub fn manager_mut(&mut self) -> &mut CacheManager {
        &mut self.manager
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn now(&self) -> Tick {
        self.engine.now()
    }

    /// Dispatches one event. Returns false once the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(ev) = self.engine.pop_until(Tick::MAX) else {
            return false;
        };
        self.dispatch(ev);
        true
    }

    fn dispatch(&mut self, ev: Event) {
        if let Some(log) = self.log.as_mut() {
            let _ = writeln!(log, "{} {:?}", self.engine.now().0, ev);
        }
        let mut ctx = Ctx {
            engine: &mut self.engine,
            ports: &mut self.ports,
            log: self.log.as_mut(),
        };
        match ev {
            Event::SourceWake => {
                self.source_blocked = false;
                Self::inject(
                    &mut ctx,
                    &mut self.manager,
                    &mut self.stats,
                    &mut self.source,
                    &mut self.pending,
                    &mut self.source_blocked,
                    self.duration,
                );
            }
            Event::Mgr(MgrEvent::StartPlan(slot)) => {
                self.manager.start_plan(&mut ctx, &mut self.stats, slot)
            }
            Event::Mgr(MgrEvent::Retire(slot)) => {
                let source = &self.source;
                let r = self
                    .manager
                    .retire(&mut ctx, &mut self.stats, slot, |req, _, tags| {
                        if let Source::Synthetic(gen) = source {
                            gen.on_retire(req, tags);
                        }
                    });
                if self.record_retired {
                    self.retired.push(r);
                }
                if self.source_blocked {
                    self.source_blocked = false;
                    ctx.engine.schedule(Tick::ZERO, Event::SourceWake);
                }
            }
            Event::DeviceWake(port) => {
                let now = ctx.engine.now();
                let far = port == ctx.ports.far_port();
                self.issued_buf.clear();
                ctx.ports.device(port).service(now, &mut self.issued_buf);
                let back = if far {
                    ctx.ports.link.one_way(Direction::FromFar)
                } else {
                    Tick::ZERO
                };
                for is in &self.issued_buf {
                    ctx.engine.schedule_at(
                        is.done_at + back,
                        Event::DeviceDone {
                            port,
                            origin: is.op.origin,
                        },
                    );
                }
                ctx.ports.poll(ctx.engine, port);
            }
            Event::DeviceDone { origin, .. } => {
                self.manager.on_complete(&mut ctx, &mut self.stats, origin)
            }
            Event::LinkArrive(op) => {
                let port = ctx.ports.far_port();
                ctx.ports.far.arrive(op);
                ctx.ports.poll(ctx.engine, port);
            }
        }
        self.manager.pump(&mut ctx, &mut self.stats);
    }

    fn inject(
        ctx: &mut Ctx<'_>,
        manager: &mut CacheManager,
        stats: &mut RunStats,
        source: &mut Source,
        pending: &mut Option<DemandRequest>,
        blocked: &mut bool,
        duration: Tick,
    ) {
        loop {
            let now = ctx.engine.now();
            let req = match pending.take() {
                Some(mut r) => {
                    r.arrival = now;
                    r
                }
                None => match source {
                    Source::Synthetic(gen) => {
                        if now >= duration || gen.exhausted() {
                            stats.injection_end = now;
                            return;
                        }
                        let r = gen.next_request(ctx.engine.rng(), now);
                        stats.class_substitutions = gen.substitutions();
                        r
                    }
                    Source::Trace(t) => match t.peek_tick() {
                        Some(at) if at <= now => t.take(now).expect("peeked"),
                        Some(at) => {
                            ctx.engine.schedule_at(at, Event::SourceWake);
                            return;
                        }
                        None => {
                            stats.injection_end = now;
                            return;
                        }
                    },
                },
            };
            match manager.receive(ctx, stats, req) {
                Receive::Stalled => {
                    *pending = Some(req);
                    *blocked = true;
                    return;
                }
                Receive::AcceptedToOrb | Receive::ParkedInCrb => {}
            }
            if let Source::Synthetic(gen) = source {
                let gap = gen.config().inter_arrival;
                if gap > Tick::ZERO {
                    ctx.engine.schedule(gap, Event::SourceWake);
                    return;
                }
            }
        }
    }

    /// Structural checks on the manager and devices.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.manager.check_invariants()?;
        for (i, d) in self
            .ports
            .near
            .iter()
            .chain(std::iter::once(&self.ports.far))
            .enumerate()
        {
            let c = d.config();
            if d.read_occupancy() > c.read_buffer || d.write_occupancy() > c.write_buffer {
                return Err(format!("device {i} queue over capacity"));
            }
        }
        if self.stats.demands_retired > self.stats.demands_issued {
            return Err("more demands retired than issued".into());
        }
        Ok(())
    }

    /// Runs injection for the configured duration, then drains.
    pub fn run(mut self) -> Result<RunOutcome, SimError> {
        while self.step() {}
        self.finish()
    }

    /// Closes the run once the event queue is empty.
    pub fn finish(mut self) -> Result<RunOutcome, SimError> {
        if self.engine.pending() != 0 {
            return Err(SimError::Invariant(
                "finish called with events pending".into(),
            ));
        }
        if !self.manager.is_empty() || self.pending.is_some() {
            return Err(SimError::Invariant(format!(
                "drain left ORB={} CRB={} WB={} pending_source={}",
                self.manager.orb_len(),
                self.manager.crb_len(),
                self.manager.wb_len(),
                self.pending.is_some()
            )));
        }
        if self.stats.demands_issued != self.stats.demands_retired {
            return Err(SimError::Invariant(format!(
                "issued {} but retired {}",
                self.stats.demands_issued, self.stats.demands_retired
            )));
        }
        self.stats.drained_at = self.engine.now();
        let window_end = match self.source {
            Source::Synthetic(_) => self.duration,
            Source::Trace(_) => self.engine.now(),
        };
        let (near_util, far_util, eff_bw_gbps) = if window_end > Tick::ZERO {
            let near_bytes: f64 = self
                .ports
                .near
                .iter()
                .map(|d| d.bytes_in(Tick::ZERO, window_end))
                .sum();
            let near_peak: f64 = self.ports.near.iter().map(|d| d.config().peak_gbps).sum();
            (
                near_bytes / (near_peak * window_end.as_ns_f64()),
                self.ports.far.utilization(Tick::ZERO, window_end)?,
                effective_bandwidth(&self.stats, Tick::ZERO, window_end)?,
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        let events = self.engine.teardown();
        Ok(RunOutcome {
            stats: self.stats,
            retired: self.retired,
            near_util,
            far_util,
            eff_bw_gbps,
            events,
            event_log: self.log,
        })
    }
}

impl RunOutcome {
    pub fn report(&self, cfg: &RunConfig) -> Report {
        let row = ReportRow::new(
            RowContext {
                run_id: &cfg.run_id,
                seed: cfg.engine.seed,
                policy: cfg.policy,
                far_kind: cfg.far.kind.as_str(),
                link_rt: cfg.link_config().round_trip,
                eff_bw_gbps: self.eff_bw_gbps,
                near_util: self.near_util,
                far_util: self.far_util,
            },
            &self.stats,
        );
        Report {
            result: row,
            config: cfg.echo(),
        }
    }
}

/// Builds, runs and drains one configuration.
pub fn run_config(cfg: &RunConfig) -> Result<RunOutcome, SimError> {
    System::new(cfg)?.run()
}
