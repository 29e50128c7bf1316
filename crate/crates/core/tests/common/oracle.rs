//! Brute-force timeline for the scripted trace. Time advances one
//! nanosecond at a time; at each tick every rule is applied until nothing
//! changes. Shares no code with the simulator, only the rules.

#![allow(clippy::needless_range_loop)]

pub const LINES: u64 = 8;
const FRONTEND: u64 = 10;
const BACKEND: u64 = 10;
const LINK_ONE_WAY: u64 = 20;
const HORIZON: u64 = 20_000;

#[derive(Clone, Copy)]
struct Timing {
    banks: u64,
    row_bytes: u64,
    rows: u64,
    burst: u64,
    rcd: u64,
    cl: u64,
    rp: u64,
    cwl: u64,
    wr: u64,
    rtw: u64,
    wtr: u64,
}

const NEAR: Timing = Timing {
    banks: 2,
    row_bytes: 128,
    rows: 64,
    burst: 4,
    rcd: 10,
    cl: 10,
    rp: 10,
    cwl: 5,
    wr: 10,
    rtw: 2,
    wtr: 3,
};

const FAR: Timing = Timing {
    banks: 2,
    row_bytes: 128,
    rows: 16,
    burst: 5,
    rcd: 15,
    cl: 15,
    rp: 15,
    cwl: 8,
    wr: 12,
    rtw: 2,
    wtr: 3,
};

#[derive(Clone, Copy, PartialEq, Debug)]
enum Who {
    Step(usize, usize),
    Writeback,
}

#[derive(Clone, Copy)]
struct Queued {
    who: Who,
    write: bool,
    bank: usize,
    row: u64,
}

struct Channel {
    t: Timing,
    open: Vec<Option<u64>>,
    col_ready: Vec<u64>,
    pre_ready: Vec<u64>,
    reads: Vec<Queued>,
    writes: Vec<Queued>,
    reads_in_flight: usize,
    bus_free: u64,
    last_write: Option<bool>,
    next_decision: u64,
}

impl Channel {
    fn new(t: Timing) -> Self {
        let b = t.banks as usize;
        Channel {
            t,
            open: vec![None; b],
            col_ready: vec![0; b],
            pre_ready: vec![0; b],
            reads: Vec::new(),
            writes: Vec::new(),
            reads_in_flight: 0,
            bus_free: 0,
            last_write: None,
            next_decision: 0,
        }
    }

    fn push(&mut self, who: Who, addr: u64, write: bool) {
        let line = addr / 64;
        let q = Queued {
            who,
            write,
            bank: (line % self.t.banks) as usize,
            row: (addr / self.t.row_bytes) % self.t.rows,
        };
        if write {
            self.writes.push(q)
        } else {
            self.reads.push(q)
        }
    }

    fn cas(&self, write: bool) -> u64 {
        if write {
            self.t.cwl
        } else {
            self.t.cl
        }
    }

    fn ready(&self, q: &Queued, now: u64) -> u64 {
        let b = q.bank;
        let col = match self.open[b] {
            Some(r) if r == q.row => now.max(self.col_ready[b]),
            Some(_) => now.max(self.pre_ready[b]) + self.t.rp + self.t.rcd,
            None => now + self.t.rcd,
        };
        col + self.cas(q.write)
    }

    /// Issues one op if the scheduler may decide now; returns it with its
    /// data end tick.
    fn decide(&mut self, now: u64) -> Option<(Who, bool, u64)> {
        if now < self.next_decision || (self.reads.is_empty() && self.writes.is_empty()) {
            return None;
        }
        // no watermark is ever reached here, so writes go only when no read waits
        let writes = self.reads.is_empty();
        let q = if writes { &self.writes } else { &self.reads };
        let i = match q.iter().position(|x| self.open[x.bank] == Some(x.row)) {
            Some(i) => i,
            None => (0..q.len())
                .min_by_key(|&i| (self.ready(&q[i], now), i))
                .unwrap(),
        };
        let op = if writes {
            self.writes.remove(i)
        } else {
            self.reads.remove(i)
        };
        let gap = match self.last_write {
            Some(true) if !op.write => self.t.wtr + self.t.cl,
            Some(false) if op.write => self.t.rtw,
            _ => 0,
        };
        let start = self.ready(&op, now).max(self.bus_free + gap);
        let end = start + self.t.burst;
        let b = op.bank;
        self.open[b] = Some(op.row);
        self.col_ready[b] = start - self.cas(op.write) + self.t.burst;
        if op.write {
            self.pre_ready[b] = end + self.t.wr;
        } else {
            self.pre_ready[b] = self.pre_ready[b].max(end);
        }
        self.bus_free = end;
        self.last_write = Some(op.write);
        let lookahead = self.t.rp + self.t.rcd + self.t.cl.max(self.t.cwl);
        self.next_decision = now.max(end.saturating_sub(lookahead));
        Some((op.who, op.write, end))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Dev {
    Near,
    Far,
}

#[derive(Clone, Copy)]
struct Step {
    dev: Dev,
    write: bool,
    writeback: bool,
    deps: &'static [usize],
}

const TC: Step = Step {
    dev: Dev::Near,
    write: false,
    writeback: false,
    deps: &[],
};
const FAR_READ: Step = Step {
    dev: Dev::Far,
    write: false,
    writeback: false,
    deps: &[0],
};
const FILL: Step = Step {
    dev: Dev::Near,
    write: true,
    writeback: false,
    deps: &[1],
};
const NEAR_WRITE: Step = Step {
    dev: Dev::Near,
    write: true,
    writeback: false,
    deps: &[0],
};
const WB: Step = Step {
    dev: Dev::Far,
    write: true,
    writeback: true,
    deps: &[0],
};

fn steps(write: bool, hit: bool, dirty: bool) -> &'static [Step] {
    match (write, hit, dirty) {
        (false, true, _) => &[TC],
        (false, false, false) => &[TC, FAR_READ, FILL],
        (false, false, true) => &[TC, FAR_READ, FILL, WB],
        (true, false, true) => &[TC, NEAR_WRITE, WB],
        (true, _, _) => &[TC, NEAR_WRITE],
    }
}

struct Req {
    arrival: u64,
    addr: u64,
    write: bool,
    class: Option<String>,
    plan: &'static [Step],
    start_at: Option<u64>,
    issued: Vec<bool>,
    done: Vec<Option<u64>>,
    response: Option<u64>,
    retire_at: Option<u64>,
    retired: Option<u64>,
}

impl Req {
    fn index(&self) -> u64 {
        (self.addr / 64) % LINES
    }

    fn tag(&self) -> u64 {
        (self.addr / 64) / LINES
    }
}

/// `(class, response ps, retire ps)` per request, in script order.
pub fn timeline(script: &[(u64, u64, bool)]) -> Vec<(String, Option<u64>, u64)> {
    let mut reqs: Vec<Req> = script
        .iter()
        .map(|&(arrival, addr, write)| Req {
            arrival,
            addr,
            write,
            class: None,
            plan: &[],
            start_at: None,
            issued: Vec::new(),
            done: Vec::new(),
            response: None,
            retire_at: None,
            retired: None,
        })
        .collect();
    // (tag, dirty) per index
    let mut tags: [Option<(u64, bool)>; LINES as usize] = [None; LINES as usize];
    let mut near = [Channel::new(NEAR), Channel::new(NEAR)];
    let mut far = Channel::new(FAR);
    let mut crb: Vec<usize> = Vec::new();
    let mut wb: Vec<u64> = Vec::new();
    // far ops crossing the link: (arrive tick, who, addr, write)
    let mut to_far: Vec<(u64, Who, u64, bool)> = Vec::new();
    // completions seen by the manager: (tick, who)
    let mut completions: Vec<(u64, Who)> = Vec::new();
    let mut far_waiting: Vec<(usize, usize)> = Vec::new();

    for now in 0..=HORIZON {
        loop {
            let mut changed = false;

            for r in 0..reqs.len() {
                if reqs[r].arrival == now && reqs[r].class.is_none() && !crb.contains(&r) {
                    let busy = reqs.iter().any(|o| {
                        o.class.is_some() && o.retired.is_none() && o.index() == reqs[r].index()
                    });
                    if busy {
                        crb.push(r);
                    } else {
                        admit(&mut reqs[r], &tags, now + FRONTEND);
                    }
                    changed = true;
                }
            }

            for r in 0..reqs.len() {
                if reqs[r].retire_at == Some(now) && reqs[r].retired.is_none() {
                    let req = &mut reqs[r];
                    req.retired = Some(now);
                    let i = req.index() as usize;
                    let class = req.class.clone().unwrap();
                    match class.as_str() {
                        "rhc" | "rhd" => {}
                        "whc" | "whd" => tags[i].as_mut().unwrap().1 = true,
                        _ => tags[i] = Some((req.tag(), req.write)),
                    }
                    let idx = req.index();
                    if let Some(pos) = crb.iter().position(|&c| reqs[c].index() == idx) {
                        let c = crb.remove(pos);
                        let start = now.max(reqs[c].arrival + FRONTEND);
                        admit(&mut reqs[c], &tags, start);
                    }
                    changed = true;
                }
            }

            let mut k = 0;
            while k < completions.len() {
                if completions[k].0 == now {
                    let (_, who) = completions.remove(k);
                    if let Who::Step(r, s) = who {
                        reqs[r].done[s] = Some(now);
                        if !reqs[r].write && s == response_step(reqs[r].plan) {
                            reqs[r].response = Some(now + BACKEND);
                        }
                    }
                    changed = true;
                } else {
                    k += 1;
                }
            }

            for r in 0..reqs.len() {
                let Some(start) = reqs[r].start_at else {
                    continue;
                };
                if now < start || reqs[r].retired.is_some() {
                    continue;
                }
                for s in 0..reqs[r].plan.len() {
                    let step = reqs[r].plan[s];
                    let ready =
                        !reqs[r].issued[s] && step.deps.iter().all(|&d| reqs[r].done[d].is_some());
                    if !ready {
                        continue;
                    }
                    reqs[r].issued[s] = true;
                    changed = true;
                    if step.writeback {
                        let i = reqs[r].index();
                        let victim = tags[i as usize].unwrap().0;
                        wb.push((victim * LINES + i) * 64);
                        reqs[r].done[s] = Some(now);
                        continue;
                    }
                    match step.dev {
                        Dev::Near => {
                            let i = reqs[r].index();
                            near[(i % 2) as usize].push(Who::Step(r, s), (i / 2) * 64, step.write);
                        }
                        Dev::Far => far_waiting.push((r, s)),
                    }
                }
                if reqs[r].retire_at.is_none() && reqs[r].done.iter().all(|d| d.is_some()) {
                    reqs[r].retire_at = Some(now + BACKEND);
                    changed = true;
                }
            }

            for (r, s) in far_waiting.drain(..) {
                let step = reqs[r].plan[s];
                if !step.write {
                    far.reads_in_flight += 1;
                }
                to_far.push((
                    now + LINK_ONE_WAY,
                    Who::Step(r, s),
                    reqs[r].addr,
                    step.write,
                ));
                changed = true;
            }
            if !wb.is_empty() && far.reads_in_flight == 0 {
                let addr = wb.remove(0);
                to_far.push((now + LINK_ONE_WAY, Who::Writeback, addr, true));
                changed = true;
            }

            let mut k = 0;
            while k < to_far.len() {
                if to_far[k].0 == now {
                    let (_, who, addr, write) = to_far.remove(k);
                    far.push(who, addr, write);
                    changed = true;
                } else {
                    k += 1;
                }
            }

            for ch in near.iter_mut() {
                while let Some((who, _, end)) = ch.decide(now) {
                    completions.push((end, who));
                    changed = true;
                }
            }
            while let Some((who, write, end)) = far.decide(now) {
                if !write {
                    far.reads_in_flight -= 1;
                }
                completions.push((end + LINK_ONE_WAY, who));
                changed = true;
            }

            if !changed {
                break;
            }
        }
    }

    reqs.into_iter()
        .map(|r| {
            (
                r.class.expect("admitted"),
                r.response.map(|t| t * 1000),
                r.retired.expect("retired") * 1000,
            )
        })
        .collect()
}

fn admit(req: &mut Req, tags: &[Option<(u64, bool)>], start: u64) {
    let line = tags[req.index() as usize];
    let hit = matches!(line, Some((t, _)) if t == req.tag());
    let dirty = matches!(line, Some((_, true)));
    let class = format!(
        "{}{}{}",
        if req.write { 'w' } else { 'r' },
        if hit { 'h' } else { 'm' },
        if dirty { 'd' } else { 'c' }
    );
    req.class = Some(class);
    req.plan = steps(req.write, hit, dirty);
    req.issued = vec![false; req.plan.len()];
    req.done = vec![None; req.plan.len()];
    req.start_at = Some(start);
}

fn response_step(plan: &[Step]) -> usize {
    plan.iter()
        .position(|s| s.dev == Dev::Far && !s.write)
        .unwrap_or(0)
}
