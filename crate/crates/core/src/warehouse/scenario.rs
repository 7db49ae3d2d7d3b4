use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::blocks::Hops;
use crate::calculus::{execute_round, DeviceId, Export, RoundContext, RoundError};
use crate::geometry::Vec2;
use crate::simulator::{MetricsRow, NodeSpec, Role, Scenario, SimConfig, SimTime, MAX_SPEED};

use super::goods::{GoodsDistribution, TaskGenerator, TaskKind};
use super::layout::{Layout, SlotId};
use super::services::{
    device_program, sink_group, DeviceInput, Hint, Led, LogEvent, LogRecord, Query, RequestKey,
    ServiceParams,
};

/// Seconds a forklift searches before giving up on a request.
pub const SEARCH_TIMEOUT: f64 = 120.0;
/// Seconds spent loading, placing, picking or unloading a pallet.
pub const HANDLING_TIME: f64 = 3.0;
/// Fraction of grid slots holding a pallet at the start.
pub const FILL_RATIO: f64 = 0.75;
/// Empty pallets waiting in the loading zone at the start.
pub const EMPTY_PALLETS: usize = 6;
/// Logs younger than this at the end of a run are left out of the report.
pub const SETTLE_WINDOW: f64 = 30.0;

const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Place {
    Slot(usize),
    Zone(usize),
    Carried(u32),
}

#[derive(Debug, Clone)]
struct Pallet {
    place: Place,
    position: Vec2,
    content: Option<u8>,
    led: Led,
    /// Claimed by a forklift that is on its way or handling it.
    reserved: bool,
    handling: bool,
    seq: u16,
    outbox: Vec<LogRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "job", rename_all = "snake_case")]
enum Job {
    Idle { until: f64 },
    FetchEmpty { pallet: u32, zone: usize },
    Loading { pallet: u32, zone: usize, until: f64 },
    SearchSpace { key: RequestKey, zone: usize, since: f64 },
    ToSlot { slot: usize, zone: usize },
    Placing { slot: usize, zone: usize, until: f64 },
    SearchGood { key: RequestKey, kind: u8, zone: usize, since: f64 },
    Picking { key: RequestKey, pallet: u32, zone: usize, until: f64 },
    ToZone { zone: usize, abandoned: bool },
    Unloading { zone: usize, abandoned: bool, until: f64 },
}

#[derive(Debug, Clone)]
struct Forklift {
    position: Vec2,
    velocity: Vec2,
    goal: Option<Vec2>,
    path: VecDeque<Vec2>,
    job: Job,
    tasks: TaskGenerator,
    carried: Option<DeviceId>,
    warning: bool,
    nearest: Option<f64>,
    requests: Vec<(RequestKey, bool)>,
    hints: BTreeMap<RequestKey, Hint>,
    request_seq: u16,
    seq: u16,
    outbox: Vec<LogRecord>,
}

impl Forklift {
    fn drive_to(&mut self, layout: &Layout, target: Vec2) {
        if self.goal.is_some_and(|g| g.distance(target) < EPS) {
            return;
        }
        self.goal = Some(target);
        self.path = layout.route(self.position, target).into();
    }

    fn arrived(&self) -> bool {
        self.path.is_empty() && self.goal.is_none_or(|g| g.distance(self.position) < EPS)
    }

    fn advance(&mut self, dt: f64) {
        let start = self.position;
        let mut budget = MAX_SPEED * dt;
        while budget > EPS {
            let Some(&next) = self.path.front() else {
                break;
            };
            let d = self.position.distance(next);
            if d <= budget {
                self.position = next;
                budget -= d;
                self.path.pop_front();
            } else {
                self.position = self.position + (next - self.position).normalized() * budget;
                budget = 0.0;
            }
        }
        self.velocity = (self.position - start) * (1.0 / dt);
    }

    fn request(&mut self, requester: DeviceId, query: Query) -> RequestKey {
        self.request_seq = self.request_seq.wrapping_add(1);
        let key = RequestKey {
            requester,
            seq: self.request_seq,
            query,
        };
        self.requests.push((key, false));
        key
    }

    fn cancel(&mut self, key: RequestKey) {
        for (k, cancel) in &mut self.requests {
            if *k == key {
                *cancel = true;
            }
        }
        self.hints.remove(&key);
    }
}

#[derive(Debug, Clone, Copy)]
struct LogStatus {
    event: LogEvent,
    created: f64,
    received: [Option<f64>; 2],
}

impl LogStatus {
    fn first(&self) -> Option<f64> {
        match self.received {
            [Some(a), Some(b)] => Some(a.min(b)),
            [a, b] => a.or(b),
        }
    }
}

/// End-of-run summary of a warehouse simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarehouseReport {
    pub logs_created: usize,
    /// Logs created early enough to be collected before the end.
    pub logs_settled: usize,
    pub received_once: usize,
    pub received_twice: usize,
    /// Mean of first receipt minus creation over received logs, seconds.
    pub avg_delay_s: f64,
    pub max_delay_s: f64,
    /// Receipts earlier than one period after creation.
    pub causality_violations: usize,
    pub tasks_completed: u32,
    pub tasks_not_found: u32,
    pub tasks_abandoned: u32,
    pub warning_onsets: u32,
}

impl WarehouseReport {
    pub fn once_fraction(&self) -> f64 {
        fraction(self.received_once, self.logs_settled)
    }

    pub fn twice_fraction(&self) -> f64 {
        fraction(self.received_twice, self.logs_settled)
    }
}

fn fraction(n: usize, d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        n as f64 / d as f64
    }
}

/// Pallets in an aisle grid with a loading zone, and forklifts carrying
/// out random insert and retrieve tasks. Every device runs
/// [`device_program`].
#[derive(Debug, Clone)]
pub struct WarehouseScenario {
    layout: Layout,
    params: ServiceParams,
    period: f64,
    pallets: BTreeMap<DeviceId, Pallet>,
    forklifts: BTreeMap<DeviceId, Forklift>,
    slots: Vec<Option<DeviceId>>,
    slot_reserved: BTreeSet<usize>,
    zone: Vec<Option<DeviceId>>,
    zone_reserved: BTreeSet<usize>,
    logs: BTreeMap<(DeviceId, u16), LogStatus>,
    second_delays: Vec<f64>,
    tasks_completed: u32,
    tasks_not_found: u32,
    tasks_abandoned: u32,
    warning_onsets: u32,
}

impl WarehouseScenario {
    pub fn new(config: &SimConfig) -> Self {
        Self::with_params(config, ServiceParams::default())
    }

    pub fn with_params(config: &SimConfig, params: ServiceParams) -> Self {
        let layout = Layout::new(config.rows as usize, config.cols as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(2);
        let goods = GoodsDistribution::default();

        let mut forklifts = BTreeMap::new();
        let n = config.forklifts;
        for i in 0..n {
            let id = DeviceId(i + 1);
            let x = layout.width() * f64::from(i + 1) / f64::from(n + 1);
            forklifts.insert(
                id,
                Forklift {
                    position: Vec2::new(x, layout.corridor_y(0)),
                    velocity: Vec2::ZERO,
                    goal: None,
                    path: VecDeque::new(),
                    job: Job::Idle {
                        until: rng.random_range(0.0..5.0),
                    },
                    tasks: TaskGenerator::new(config.seed, id.0),
                    carried: None,
                    warning: false,
                    nearest: None,
                    requests: Vec::new(),
                    hints: BTreeMap::new(),
                    request_seq: 0,
                    seq: 0,
                    outbox: Vec::new(),
                },
            );
        }

        let mut next_id = n + 1;
        let mut pallets = BTreeMap::new();
        let mut slots = vec![None; layout.slots().len()];
        let mut new_pallet = |place, position, content| {
            let id = DeviceId(next_id);
            next_id += 1;
            let pallet = Pallet {
                place,
                position,
                content,
                led: Led::Off,
                reserved: false,
                handling: false,
                seq: 0,
                outbox: Vec::new(),
            };
            (id, pallet)
        };
        for s in layout.slot_ids() {
            if rng.random_bool(FILL_RATIO) {
                let content = Some(goods.sample(&mut rng));
                let (id, p) = new_pallet(Place::Slot(s.0), layout.slot(s).position, content);
                slots[s.0] = Some(id);
                pallets.insert(id, p);
            }
        }
        let mut zone = vec![None; layout.zone().len()];
        for (z, place) in zone.iter_mut().enumerate().take(EMPTY_PALLETS) {
            let (id, p) = new_pallet(Place::Zone(z), layout.zone()[z], None);
            *place = Some(id);
            pallets.insert(id, p);
        }

        WarehouseScenario {
            layout,
            params,
            period: config.period,
            pallets,
            forklifts,
            slots,
            slot_reserved: BTreeSet::new(),
            zone,
            zone_reserved: BTreeSet::new(),
            logs: BTreeMap::new(),
            second_delays: Vec::new(),
            tasks_completed: 0,
            tasks_not_found: 0,
            tasks_abandoned: 0,
            warning_onsets: 0,
        }
    }

    /// Round period the scenario was configured with, seconds.
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn pallet_count(&self) -> usize {
        self.pallets.len()
    }

    pub fn forklift_count(&self) -> usize {
        self.forklifts.len()
    }

    /// Goods currently stored in the grid, carried or waiting in the zone.
    pub fn goods_in_stock(&self) -> usize {
        self.pallets.values().filter(|p| p.content.is_some()).count()
    }

    pub fn warning(&self, id: DeviceId) -> bool {
        self.forklifts.get(&id).is_some_and(|f| f.warning)
    }

    pub fn led(&self, id: DeviceId) -> Led {
        self.pallets.get(&id).map(|p| p.led).unwrap_or_default()
    }

    /// Logs created so far as `(origin, seq, created, first receipt per group)`.
    pub fn log_receipts(&self) -> impl Iterator<Item = (DeviceId, u16, f64, [Option<f64>; 2])> + '_ {
        self.logs
            .iter()
            .map(|((o, s), st)| (*o, *s, st.created, st.received))
    }

    /// Logs created so far, per event kind.
    pub fn log_counts(&self) -> BTreeMap<LogEvent, usize> {
        let mut counts = BTreeMap::new();
        for l in self.logs.values() {
            *counts.entry(l.event).or_insert(0) += 1;
        }
        counts
    }

    pub fn report(&self, end: f64) -> WarehouseReport {
        let settled: Vec<&LogStatus> = self
            .logs
            .values()
            .filter(|l| l.created <= end - SETTLE_WINDOW)
            .collect();
        let delays: Vec<f64> = self
            .logs
            .values()
            .filter_map(|l| l.first().map(|r| r - l.created))
            .collect();
        let causality_violations = self
            .logs
            .values()
            .flat_map(|l| l.received.iter().flatten().map(move |r| r - l.created))
            .filter(|d| *d <= 0.0)
            .count();
        WarehouseReport {
            logs_created: self.logs.len(),
            logs_settled: settled.len(),
            received_once: settled.iter().filter(|l| l.first().is_some()).count(),
            received_twice: settled
                .iter()
                .filter(|l| l.received.iter().all(Option::is_some))
                .count(),
            avg_delay_s: if delays.is_empty() {
                0.0
            } else {
                delays.iter().sum::<f64>() / delays.len() as f64
            },
            max_delay_s: delays.iter().copied().fold(0.0, f64::max),
            causality_violations,
            tasks_completed: self.tasks_completed,
            tasks_not_found: self.tasks_not_found,
            tasks_abandoned: self.tasks_abandoned,
            warning_onsets: self.warning_onsets,
        }
    }

    fn log(&mut self, origin: DeviceId, event: LogEvent, now: f64) {
        let seq = match self.pallets.get_mut(&origin) {
            Some(p) => {
                p.seq = p.seq.wrapping_add(1);
                p.seq
            }
            None => {
                let f = self.forklifts.get_mut(&origin).expect("known device");
                f.seq = f.seq.wrapping_add(1);
                f.seq
            }
        };
        let record = LogRecord {
            origin,
            seq,
            event,
            created_at: (now * 1000.0).round() as u32,
        };
        match self.pallets.get_mut(&origin) {
            Some(p) => p.outbox.push(record),
            None => self.forklifts.get_mut(&origin).expect("known device").outbox.push(record),
        }
        self.logs.insert(
            (origin, seq),
            LogStatus {
                event,
                created: now,
                received: [None, None],
            },
        );
    }

    fn has_vacancy(&self, slot: usize) -> bool {
        self.layout
            .adjacent(SlotId(slot))
            .iter()
            .any(|a| self.slots[a.0].is_none() && !self.slot_reserved.contains(&a.0))
    }

    fn input(&mut self, id: DeviceId, now: f64) -> DeviceInput {
        let now_ms = (now * 1000.0).round() as u32;
        if let Some(f) = self.forklifts.get_mut(&id) {
            return DeviceInput {
                forklift: true,
                sink_group: Some(sink_group(id)),
                now_ms,
                new_logs: std::mem::take(&mut f.outbox),
                requests: f.requests.clone(),
                ..DeviceInput::default()
            };
        }
        let (place, content) = {
            let p = &self.pallets[&id];
            (p.place, p.content)
        };
        let (stored_content, next_to_vacancy) = match place {
            Place::Slot(s) => (content, self.has_vacancy(s)),
            _ => (None, false),
        };
        let p = self.pallets.get_mut(&id).expect("known device");
        DeviceInput {
            now_ms,
            new_logs: std::mem::take(&mut p.outbox),
            stored_content,
            next_to_vacancy,
            ..DeviceInput::default()
        }
    }

    /// Corridor point from which `id` is handled, if it is a placed pallet.
    fn access_of(&self, id: DeviceId) -> Option<Vec2> {
        match self.pallets.get(&id)?.place {
            Place::Slot(s) => Some(self.layout.slot(SlotId(s)).access),
            Place::Zone(z) => Some(self.layout.zone_access(z)),
            Place::Carried(_) => None,
        }
    }

    fn nearest<I: Iterator<Item = (usize, Vec2)>>(from: Vec2, candidates: I) -> Option<usize> {
        candidates
            .min_by(|a, b| from.distance(a.1).total_cmp(&from.distance(b.1)))
            .map(|(i, _)| i)
    }

    fn start_task(&mut self, id: DeviceId, f: &mut Forklift, now: f64) {
        let first = f.tasks.next_task();
        let fallback = match first {
            TaskKind::Insert => TaskKind::Retrieve(f.tasks.next_good()),
            TaskKind::Retrieve(_) => TaskKind::Insert,
        };
        for task in [first, fallback] {
            match task {
                TaskKind::Insert => {
                    let empty = self.zone.iter().enumerate().filter_map(|(z, p)| {
                        let p = (*p)?;
                        let pallet = &self.pallets[&p];
                        (pallet.content.is_none() && !pallet.reserved)
                            .then(|| (z, self.layout.zone_access(z)))
                    });
                    if let Some(z) = Self::nearest(f.position, empty) {
                        let pallet = self.zone[z].expect("occupied place");
                        self.pallets.get_mut(&pallet).expect("known pallet").reserved = true;
                        f.job = Job::FetchEmpty {
                            pallet: pallet.0,
                            zone: z,
                        };
                        f.drive_to(&self.layout, self.layout.zone_access(z));
                        return;
                    }
                }
                TaskKind::Retrieve(kind) => {
                    let free = (0..self.zone.len())
                        .filter(|z| self.zone[*z].is_none() && !self.zone_reserved.contains(z))
                        .map(|z| (z, self.layout.zone_access(z)));
                    if let Some(z) = Self::nearest(f.position, free) {
                        self.zone_reserved.insert(z);
                        let key = f.request(id, Query::Kind(kind));
                        f.job = Job::SearchGood {
                            key,
                            kind,
                            zone: z,
                            since: now,
                        };
                        return;
                    }
                }
            }
        }
        f.job = Job::Idle {
            until: now + f.tasks.idle_time(),
        };
    }

    /// Follows the route hint of `key`. Returns the matching pallet once
    /// the forklift stands at its access point.
    fn follow(&self, f: &mut Forklift, key: RequestKey) -> Option<DeviceId> {
        let hint = *f.hints.get(&key)?;
        if !hint.reachable() {
            return None;
        }
        let target = self.access_of(hint.parent)?;
        f.drive_to(&self.layout, target);
        (hint.hops == Hops(1) && f.arrived()).then_some(hint.parent)
    }

    fn finish(&mut self, f: &mut Forklift, now: f64) {
        f.job = Job::Idle {
            until: now + f.tasks.idle_time(),
        };
    }

    fn step_forklift(&mut self, id: DeviceId, f: &mut Forklift, now: f64) {
        match f.job {
            Job::Idle { until } => {
                if now >= until {
                    self.start_task(id, f, now);
                }
            }
            Job::FetchEmpty { pallet, zone } => {
                if f.arrived() {
                    self.pallets.get_mut(&DeviceId(pallet)).expect("known pallet").handling = true;
                    f.job = Job::Loading {
                        pallet,
                        zone,
                        until: now + HANDLING_TIME,
                    };
                }
            }
            Job::Loading {
                pallet,
                zone,
                until,
            } => {
                if now >= until {
                    let pid = DeviceId(pallet);
                    let good = f.tasks.next_good();
                    let p = self.pallets.get_mut(&pid).expect("known pallet");
                    p.content = Some(good);
                    p.place = Place::Carried(id.0);
                    p.handling = false;
                    self.zone[zone] = None;
                    self.zone_reserved.insert(zone);
                    self.log(pid, LogEvent::Load, now);
                    f.carried = Some(pid);
                    let key = f.request(id, Query::EmptySpace);
                    f.job = Job::SearchSpace {
                        key,
                        zone,
                        since: now,
                    };
                }
            }
            Job::SearchSpace { key, zone, since } => {
                if now - since > SEARCH_TIMEOUT {
                    f.cancel(key);
                    f.job = Job::ToZone {
                        zone,
                        abandoned: true,
                    };
                    f.drive_to(&self.layout, self.layout.zone_access(zone));
                    return;
                }
                let Some(source) = self.follow(f, key) else {
                    return;
                };
                let Place::Slot(s) = self.pallets[&source].place else {
                    return;
                };
                let vacant = self
                    .layout
                    .adjacent(SlotId(s))
                    .into_iter()
                    .filter(|a| self.slots[a.0].is_none() && !self.slot_reserved.contains(&a.0))
                    .map(|a| (a.0, self.layout.slot(a).access));
                if let Some(slot) = Self::nearest(f.position, vacant) {
                    self.slot_reserved.insert(slot);
                    f.cancel(key);
                    f.job = Job::ToSlot { slot, zone };
                    f.drive_to(&self.layout, self.layout.slot(SlotId(slot)).access);
                }
            }
            Job::ToSlot { slot, zone } => {
                if f.arrived() {
                    f.job = Job::Placing {
                        slot,
                        zone,
                        until: now + HANDLING_TIME,
                    };
                }
            }
            Job::Placing { slot, zone, until } => {
                if now >= until {
                    let pid = f.carried.take().expect("placing a carried pallet");
                    let p = self.pallets.get_mut(&pid).expect("known pallet");
                    p.place = Place::Slot(slot);
                    p.position = self.layout.slot(SlotId(slot)).position;
                    self.slots[slot] = Some(pid);
                    self.slot_reserved.remove(&slot);
                    self.zone_reserved.remove(&zone);
                    self.tasks_completed += 1;
                    self.finish(f, now);
                }
            }
            Job::SearchGood {
                key,
                kind,
                zone,
                since,
            } => {
                if now - since > SEARCH_TIMEOUT {
                    f.cancel(key);
                    self.zone_reserved.remove(&zone);
                    self.tasks_not_found += 1;
                    self.finish(f, now);
                    return;
                }
                let Some(source) = self.follow(f, key) else {
                    return;
                };
                let p = self.pallets.get_mut(&source).expect("known pallet");
                if matches!(p.place, Place::Slot(_)) && p.content == Some(kind) && !p.reserved {
                    p.reserved = true;
                    p.handling = true;
                    f.job = Job::Picking {
                        key,
                        pallet: source.0,
                        zone,
                        until: now + HANDLING_TIME,
                    };
                }
            }
            Job::Picking {
                key,
                pallet,
                zone,
                until,
            } => {
                if now >= until {
                    let pid = DeviceId(pallet);
                    let p = self.pallets.get_mut(&pid).expect("known pallet");
                    if let Place::Slot(s) = p.place {
                        self.slots[s] = None;
                    }
                    p.place = Place::Carried(id.0);
                    p.handling = false;
                    f.carried = Some(pid);
                    f.cancel(key);
                    f.job = Job::ToZone {
                        zone,
                        abandoned: false,
                    };
                    f.drive_to(&self.layout, self.layout.zone_access(zone));
                }
            }
            Job::ToZone { zone, abandoned } => {
                if f.arrived() {
                    f.job = Job::Unloading {
                        zone,
                        abandoned,
                        until: now + HANDLING_TIME,
                    };
                }
            }
            Job::Unloading {
                zone,
                abandoned,
                until,
            } => {
                if now >= until {
                    let pid = f.carried.take().expect("unloading a carried pallet");
                    let p = self.pallets.get_mut(&pid).expect("known pallet");
                    let had_content = p.content.take().is_some();
                    p.place = Place::Zone(zone);
                    p.position = self.layout.zone()[zone];
                    p.reserved = false;
                    self.zone[zone] = Some(pid);
                    self.zone_reserved.remove(&zone);
                    if had_content {
                        self.log(pid, LogEvent::Unload, now);
                    }
                    if abandoned {
                        self.tasks_abandoned += 1;
                    } else {
                        self.tasks_completed += 1;
                    }
                    self.finish(f, now);
                }
            }
        }
    }
}

impl Scenario for WarehouseScenario {
    fn nodes(&self) -> Vec<NodeSpec> {
        let forklifts = self.forklifts.keys().map(|id| NodeSpec::new(*id, Role::Forklift));
        let pallets = self.pallets.keys().map(|id| NodeSpec::new(*id, Role::Pallet));
        forklifts.chain(pallets).collect()
    }

    fn position(&self, id: DeviceId) -> Vec2 {
        if let Some(f) = self.forklifts.get(&id) {
            return f.position;
        }
        let p = &self.pallets[&id];
        match p.place {
            Place::Carried(f) => self.forklifts[&DeviceId(f)].position,
            _ => p.position,
        }
    }

    fn velocity(&self, id: DeviceId) -> Vec2 {
        if let Some(f) = self.forklifts.get(&id) {
            return f.velocity;
        }
        match self.pallets[&id].place {
            Place::Carried(f) => self.forklifts[&DeviceId(f)].velocity,
            _ => Vec2::ZERO,
        }
    }

    fn round(&mut self, time: SimTime, ctx: &RoundContext) -> Result<Export, RoundError> {
        let id = ctx.device;
        let now = time.as_secs();
        let input = self.input(id, now);
        let params = &self.params;
        let (out, export) = execute_round(ctx, |c| device_program(c, &input, params))?;

        for (g, collected) in out.collected.iter().enumerate() {
            for log in collected {
                let Some(status) = self.logs.get_mut(&log.id()) else {
                    continue;
                };
                if status.received[g].is_none() {
                    if status.first().is_none() {
                        self.second_delays.push(now - status.created);
                    }
                    status.received[g] = Some(now);
                }
            }
        }

        if let Some(f) = self.forklifts.get_mut(&id) {
            let onset = out.warning && !f.warning;
            f.warning = out.warning;
            f.nearest = out.nearest_forklift;
            f.requests.retain(|(_, cancel)| !cancel);
            f.hints = out.hints;
            if onset {
                self.warning_onsets += 1;
                self.log(id, LogEvent::CollisionWarning, now);
            }
        } else if let Some(p) = self.pallets.get_mut(&id) {
            p.led = out.led;
        }
        Ok(export)
    }

    fn moves(&self) -> bool {
        !self.forklifts.is_empty()
    }

    fn mobility(&mut self, time: SimTime, dt: f64) {
        let now = time.as_secs();
        let ids: Vec<DeviceId> = self.forklifts.keys().copied().collect();
        for id in ids {
            let mut f = self.forklifts.remove(&id).expect("known forklift");
            self.step_forklift(id, &mut f, now);
            f.advance(dt);
            self.forklifts.insert(id, f);
        }
    }

    fn observe(&mut self, _time: SimTime, row: &mut MetricsRow) {
        let created = self.logs.len();
        let once = self.logs.values().filter(|l| l.first().is_some()).count();
        let twice = self
            .logs
            .values()
            .filter(|l| l.received.iter().all(Option::is_some))
            .count();
        row.logs_created = created as u32;
        row.logs_recv_once_pct = 100.0 * fraction(once, created);
        row.logs_recv_twice_pct = 100.0 * fraction(twice, created);
        let delays = std::mem::take(&mut self.second_delays);
        row.avg_collect_delay_s =
            (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64);
        row.warnings_active = self.forklifts.values().filter(|f| f.warning).count() as u32;
    }

    fn dump(&self, id: DeviceId) -> serde_json::Value {
        if let Some(f) = self.forklifts.get(&id) {
            return json!({
                "role": "forklift",
                "position": f.position,
                "task": f.job,
                "carried": f.carried.map(|p| p.0),
                "warning": f.warning,
                "nearest_forklift": f.nearest,
                "sink_group": sink_group(id),
            });
        }
        let p = &self.pallets[&id];
        json!({
            "role": "pallet",
            "position": self.position(id),
            "place": p.place,
            "content": p.content,
            "led": p.led,
            "handling": p.handling,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::Simulator;

    fn small(duration: f64, forklifts: u32) -> SimConfig {
        SimConfig {
            duration,
            rows: 2,
            cols: 1,
            forklifts,
            ..SimConfig::default()
        }
    }

    #[test]
    fn initial_population() {
        let config = SimConfig::default();
        let s = WarehouseScenario::new(&config);
        assert_eq!(s.forklift_count(), 4);
        let stored = s.slots.iter().filter(|p| p.is_some()).count();
        assert_eq!(s.pallet_count(), stored + EMPTY_PALLETS);
        assert!((100..180).contains(&stored));
        let ids: Vec<u32> = s.nodes().iter().map(|n| n.id.0).collect();
        assert_eq!(&ids[..5], &[1, 2, 3, 4, 5]);
    }

    #[test]
    fn pallets_are_conserved_and_tasks_progress() {
        let config = small(200.0, 2);
        let scenario = WarehouseScenario::new(&config);
        let pallets = scenario.pallet_count();
        let mut sim = Simulator::new(config, scenario).unwrap();
        sim.run().unwrap();
        let s = sim.into_scenario();
        assert_eq!(s.pallet_count(), pallets);
        let placed = s.slots.iter().flatten().count()
            + s.zone.iter().flatten().count()
            + s.forklifts.values().filter(|f| f.carried.is_some()).count();
        assert_eq!(placed, pallets);
        let r = s.report(200.0);
        assert!(r.tasks_completed > 0, "{r:?}");
        assert!(r.logs_created > 0);
        // Stored goods change only through logged loads and unloads.
        let loads = s.logs.keys().filter(|k| s.pallets.contains_key(&k.0)).count();
        assert!(loads > 0);
    }

    #[test]
    fn carried_pallet_moves_with_its_forklift() {
        let config = small(120.0, 1);
        let mut sim = Simulator::new(config, WarehouseScenario::new(&small(120.0, 1))).unwrap();
        sim.run().unwrap();
        let s = sim.into_scenario();
        for (id, p) in &s.pallets {
            if let Place::Carried(f) = p.place {
                assert_eq!(s.position(*id), s.forklifts[&DeviceId(f)].position);
                assert_eq!(s.velocity(*id), s.forklifts[&DeviceId(f)].velocity);
            }
        }
    }

    #[test]
    fn forklift_speed_is_capped() {
        let layout = Layout::new(2, 1);
        let mut f = WarehouseScenario::new(&small(1.0, 1)).forklifts[&DeviceId(1)].clone();
        f.drive_to(&layout, layout.slot(SlotId(20)).access);
        let start = f.position;
        f.advance(1.0);
        assert!(f.position.distance(start) <= MAX_SPEED + EPS);
        let mut still = f.clone();
        still.path.clear();
        let at = still.position;
        still.advance(0.1);
        assert_eq!(still.position, at);
        assert_eq!(still.velocity, Vec2::ZERO);
    }

    #[test]
    fn absent_kind_times_out_as_not_found() {
        let config = small(200.0, 1);
        let mut scenario = WarehouseScenario::new(&config);
        // Empty the grid of kind 77 and ask for it.
        for p in scenario.pallets.values_mut() {
            if p.content == Some(77) {
                p.content = Some(1);
            }
        }
        let f = scenario.forklifts.get_mut(&DeviceId(1)).unwrap();
        let key = f.request(DeviceId(1), Query::Kind(77));
        f.job = Job::SearchGood {
            key,
            kind: 77,
            zone: 10,
            since: 0.0,
        };
        scenario.zone_reserved.insert(10);
        let mut sim = Simulator::new(config, scenario).unwrap();
        sim.run().unwrap();
        let s = sim.into_scenario();
        assert!(s.tasks_not_found >= 1);
    }
}
