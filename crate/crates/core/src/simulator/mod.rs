//! Deterministic discrete-event network simulator.
//!
//! Devices run rounds on their own period and phase. After each round the
//! shared part of the export is encoded, sent to every device within
//! `comm_radius` (each copy dropped independently with `drop_rate`) and
//! lands in the receivers' mailboxes a few milliseconds later. Simultaneous
//! events run in `(time, kind, target, source)` order, so a seed fully
//! determines a run.
//!
//! What the devices compute and how they move is up to a [`Scenario`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::calculus::{
    DeviceId, Export, Mailbox, RoundContext, RoundError, SensorSnapshot, DEFAULT_QUARANTINE,
    DEFAULT_STALENESS,
};
use crate::geometry::Vec2;

mod lockstep;
mod metrics;

pub use lockstep::Lockstep;
pub use metrics::{MetricsRow, MetricsSeries, CSV_HEADER};

/// Payload budget of one radio message in bytes.
pub const MESSAGE_BUDGET: usize = 222;
/// Forklift top speed, 10 km/h.
pub const MAX_SPEED: f64 = 10.0 / 3.6;
/// Transmission delay between a send and the matching deliveries.
pub const DELIVERY_LATENCY: SimTime = SimTime(5_000);
/// Interval between mobility updates.
pub const MOBILITY_STEP: SimTime = SimTime(100_000);

/// Simulated time in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub fn from_secs(secs: f64) -> Self {
        SimTime((secs * 1e6).round().max(0.0) as u64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis(self) -> u64 {
        self.0 / 1000
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.as_secs())
    }
}

/// Run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated seconds.
    pub duration: f64,
    /// Radio range in metres.
    pub comm_radius: f64,
    /// Probability that one copy of a message is lost.
    pub drop_rate: f64,
    /// Seconds between two rounds of the same device.
    pub period: f64,
    /// Own rounds a received export stays usable.
    pub staleness: u32,
    /// Rounds a terminated process key stays quarantined.
    pub quarantine: u32,
    /// Warehouse aisle rows.
    pub rows: u32,
    /// Warehouse aisle columns.
    pub cols: u32,
    pub forklifts: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            duration: 500.0,
            comm_radius: 10.0,
            drop_rate: 0.0,
            period: 1.0,
            staleness: DEFAULT_STALENESS,
            quarantine: DEFAULT_QUARANTINE,
            rows: 6,
            cols: 2,
            forklifts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, reason: &str| {
            Err(ConfigError {
                field,
                reason: reason.to_string(),
            })
        };
        if !self.duration.is_finite() || self.duration < 0.0 {
            return bad("duration", "must be a non-negative number of seconds");
        }
        if !self.comm_radius.is_finite() || self.comm_radius <= 0.0 {
            return bad("comm_radius", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return bad("drop_rate", "must lie in [0, 1]");
        }
        if !self.period.is_finite() || self.period < 0.01 {
            return bad("period", "must be at least 0.01 s");
        }
        if self.staleness == 0 {
            return bad("staleness", "must be at least 1 round");
        }
        if self.rows == 0 || self.cols == 0 {
            return bad("rows/cols", "the warehouse needs at least one aisle");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("round of device {device} at {time} failed: {source}")]
    Round {
        time: SimTime,
        device: DeviceId,
        #[source]
        source: RoundError,
    },
    #[error("state dump: {0}")]
    Dump(#[from] std::io::Error),
}

/// What a simulated device is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pallet,
    Forklift,
    Device,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: DeviceId,
    pub role: Role,
    /// Offset of the first round; drawn from `[0, period)` when `None`.
    pub phase: Option<f64>,
}

impl NodeSpec {
    pub fn new(id: DeviceId, role: Role) -> Self {
        NodeSpec {
            id,
            role,
            phase: None,
        }
    }
}

/// The devices, their program and their movement.
pub trait Scenario {
    fn nodes(&self) -> Vec<NodeSpec>;

    fn position(&self, id: DeviceId) -> Vec2;

    fn velocity(&self, _id: DeviceId) -> Vec2 {
        Vec2::ZERO
    }

    /// Runs the device's program for one round.
    fn round(&mut self, time: SimTime, ctx: &RoundContext) -> Result<Export, RoundError>;

    /// Whether [`Scenario::mobility`] needs to be called.
    fn moves(&self) -> bool {
        false
    }

    /// Advances movement by `dt` seconds.
    fn mobility(&mut self, _time: SimTime, _dt: f64) {}

    /// Fills the application columns of a metrics row.
    fn observe(&mut self, _time: SimTime, _row: &mut MetricsRow) {}

    /// Device state for the JSON-lines dump.
    fn dump(&self, _id: DeviceId) -> serde_json::Value {
        serde_json::Value::Null
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Sample,
    Mobility,
    Delivery,
    Round,
}

#[derive(Debug, Clone)]
struct Event {
    time: SimTime,
    kind: EventKind,
    target: DeviceId,
    source: DeviceId,
    payload: Option<Arc<Export>>,
}

impl Event {
    fn key(&self) -> (SimTime, EventKind, DeviceId, DeviceId) {
        (self.time, self.kind, self.target, self.source)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

/// Picks the receivers of a message sent from `from` at `origin`.
///
/// Returns the devices within `radius` that got their copy, and how many
/// were in range.
pub fn deliver(
    from: DeviceId,
    origin: Vec2,
    candidates: impl IntoIterator<Item = (DeviceId, Vec2)>,
    radius: f64,
    drop_rate: f64,
    rng: &mut impl Rng,
) -> (Vec<DeviceId>, usize) {
    let mut received = Vec::new();
    let mut in_range = 0;
    for (id, pos) in candidates {
        if id == from || pos.distance(origin) > radius {
            continue;
        }
        in_range += 1;
        if drop_rate > 0.0 && rng.random::<f64>() < drop_rate {
            continue;
        }
        received.push(id);
    }
    (received, in_range)
}

/// Size in bytes of what `export` puts on the air.
pub fn message_size(export: &Export) -> usize {
    export.message_len()
}

struct NodeRuntime {
    role: Role,
    round: u32,
    prev: Option<Arc<Export>>,
    mailbox: Mailbox,
}

#[derive(Default)]
struct Interval {
    size_sum: u64,
    size_count: u64,
    size_max: usize,
    in_range: u64,
    delivered: u64,
}

pub struct Simulator<S> {
    config: SimConfig,
    scenario: S,
    nodes: BTreeMap<DeviceId, NodeRuntime>,
    queue: BinaryHeap<Reverse<Event>>,
    rng: ChaCha8Rng,
    interval: Interval,
    series: MetricsSeries,
    dump: Option<Box<dyn Write>>,
}

impl<S: Scenario> Simulator<S> {
    pub fn new(config: SimConfig, scenario: S) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut queue = BinaryHeap::new();
        let mut nodes = BTreeMap::new();
        let period = SimTime::from_secs(config.period);
        for spec in scenario.nodes() {
            let phase = match spec.phase {
                Some(p) => SimTime::from_secs(p),
                None => SimTime(rng.random_range(0..period.0)),
            };
            queue.push(Reverse(Event {
                time: phase,
                kind: EventKind::Round,
                target: spec.id,
                source: spec.id,
                payload: None,
            }));
            nodes.insert(
                spec.id,
                NodeRuntime {
                    role: spec.role,
                    round: 0,
                    prev: None,
                    mailbox: Mailbox::new(config.staleness),
                },
            );
        }
        for t in 1..=config.duration.floor() as u64 {
            queue.push(Reverse(Event {
                time: SimTime(t * 1_000_000),
                kind: EventKind::Sample,
                target: DeviceId::NONE,
                source: DeviceId::NONE,
                payload: None,
            }));
        }
        if scenario.moves() {
            queue.push(Reverse(Event {
                time: MOBILITY_STEP,
                kind: EventKind::Mobility,
                target: DeviceId::NONE,
                source: DeviceId::NONE,
                payload: None,
            }));
        }
        Ok(Simulator {
            config,
            scenario,
            nodes,
            queue,
            rng,
            interval: Interval::default(),
            series: MetricsSeries::default(),
            dump: None,
        })
    }

    /// Writes one JSON line per device round to `out`.
    pub fn with_dump(mut self, out: Box<dyn Write>) -> Self {
        self.dump = Some(out);
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn scenario(&self) -> &S {
        &self.scenario
    }

    pub fn into_scenario(self) -> S {
        self.scenario
    }

    /// Number of devices with each role.
    pub fn role_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::new();
        for rt in self.nodes.values() {
            let name = match rt.role {
                Role::Pallet => "pallet",
                Role::Forklift => "forklift",
                Role::Device => "device",
            };
            *counts.entry(name).or_insert(0) += 1;
        }
        counts
    }

    /// Runs until the configured duration and returns the metrics.
    pub fn run(&mut self) -> Result<MetricsSeries, SimError> {
        let end = SimTime::from_secs(self.config.duration);
        while let Some(Reverse(event)) = self.queue.pop() {
            if event.time > end {
                break;
            }
            match event.kind {
                EventKind::Sample => self.sample(event.time),
                EventKind::Mobility => {
                    self.scenario
                        .mobility(event.time, MOBILITY_STEP.as_secs());
                    self.queue.push(Reverse(Event {
                        time: event.time + MOBILITY_STEP,
                        ..event
                    }));
                }
                EventKind::Delivery => {
                    let rt = self.nodes.get_mut(&event.target).expect("known device");
                    let payload = event.payload.expect("deliveries carry a message");
                    rt.mailbox.receive(payload, rt.round + 1);
                }
                EventKind::Round => self.round(event.time, event.target)?,
            }
        }
        if let Some(out) = self.dump.as_mut() {
            out.flush()?;
        }
        Ok(std::mem::take(&mut self.series))
    }

    fn round(&mut self, time: SimTime, id: DeviceId) -> Result<(), SimError> {
        let rt = self.nodes.get_mut(&id).expect("known device");
        rt.round += 1;
        let round = rt.round;
        let inbox = rt.mailbox.fresh(round);
        let position = self.scenario.position(id);
        let distances: Vec<_> = inbox
            .keys()
            .map(|n| (*n, self.scenario.position(*n).distance(position)))
            .collect();
        let ctx = RoundContext {
            device: id,
            round,
            prev_export: rt.prev.clone(),
            inbox,
            sensors: SensorSnapshot::with_distances(
                id,
                position,
                self.scenario.velocity(id),
                distances,
            ),
            quarantine: self.config.quarantine,
        };
        let export = self
            .scenario
            .round(time, &ctx)
            .map_err(|source| SimError::Round {
                time,
                device: id,
                source,
            })?;

        let bytes = export.message_bytes();
        let size = bytes.len();
        let message = Arc::new(Export::from_message_bytes(&bytes).expect("own encoding decodes"));
        self.series.messages_sent += 1;
        self.series.message_sizes.push(size);
        self.series.max_message_size = self.series.max_message_size.max(size);
        if size > MESSAGE_BUDGET {
            self.series.messages_over_budget += 1;
        }
        self.interval.size_sum += size as u64;
        self.interval.size_count += 1;
        self.interval.size_max = self.interval.size_max.max(size);

        let scenario = &self.scenario;
        let (receivers, in_range) = deliver(
            id,
            position,
            self.nodes.keys().map(|n| (*n, scenario.position(*n))),
            self.config.comm_radius,
            self.config.drop_rate,
            &mut self.rng,
        );
        self.interval.in_range += in_range as u64;
        self.interval.delivered += receivers.len() as u64;
        for to in receivers {
            self.queue.push(Reverse(Event {
                time: time + DELIVERY_LATENCY,
                kind: EventKind::Delivery,
                target: to,
                source: id,
                payload: Some(Arc::clone(&message)),
            }));
        }

        if let Some(out) = self.dump.as_mut() {
            let line = serde_json::json!({
                "time": time.as_secs(),
                "device": id.0,
                "round": round,
                "message_bytes": size,
                "state": self.scenario.dump(id),
            });
            writeln!(out, "{line}")?;
        }

        let rt = self.nodes.get_mut(&id).expect("known device");
        rt.prev = Some(Arc::new(export));
        self.queue.push(Reverse(Event {
            time: time + SimTime::from_secs(self.config.period),
            kind: EventKind::Round,
            target: id,
            source: id,
            payload: None,
        }));
        Ok(())
    }

    fn sample(&mut self, time: SimTime) {
        let iv = std::mem::take(&mut self.interval);
        let mut row = MetricsRow {
            time: (time.0 / 1_000_000) as u32,
            msg_size_avg: if iv.size_count == 0 {
                0.0
            } else {
                iv.size_sum as f64 / iv.size_count as f64
            },
            msg_size_max: iv.size_max,
            delivery_ratio: if iv.in_range == 0 {
                1.0
            } else {
                iv.delivered as f64 / iv.in_range as f64
            },
            ..MetricsRow::default()
        };
        self.scenario.observe(time, &mut row);
        self.series.rows.push(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::execute_round;

    /// Static devices that count their aligned neighbours.
    struct Counting {
        positions: Vec<Vec2>,
        counts: BTreeMap<DeviceId, Vec<usize>>,
    }

    impl Scenario for Counting {
        fn nodes(&self) -> Vec<NodeSpec> {
            (0..self.positions.len() as u32)
                .map(|i| NodeSpec {
                    phase: Some(0.1 * f64::from(i)),
                    ..NodeSpec::new(DeviceId(i), Role::Device)
                })
                .collect()
        }
        fn position(&self, id: DeviceId) -> Vec2 {
            self.positions[id.0 as usize]
        }
        fn round(&mut self, _: SimTime, ctx: &RoundContext) -> Result<Export, RoundError> {
            let (n, export) = execute_round(ctx, |c| c.nbr(0u8, 1).neighbours().count())?;
            self.counts.entry(ctx.device).or_default().push(n);
            Ok(export)
        }
        fn observe(&mut self, _: SimTime, row: &mut MetricsRow) {
            row.warnings_active = self.counts.values().map(|c| c.len() as u32).sum();
        }
    }

    fn counting(positions: Vec<Vec2>) -> Counting {
        Counting {
            positions,
            counts: BTreeMap::new(),
        }
    }

    #[test]
    fn zero_duration_gives_no_rows() {
        let config = SimConfig {
            duration: 0.0,
            ..SimConfig::default()
        };
        let mut sim = Simulator::new(config, counting(vec![Vec2::ZERO])).unwrap();
        assert!(sim.run().unwrap().rows.is_empty());
    }

    #[test]
    fn pair_in_range_sees_each_other_from_round_two() {
        let config = SimConfig {
            duration: 5.0,
            ..SimConfig::default()
        };
        let pair = counting(vec![Vec2::ZERO, Vec2::new(3.0, 0.0)]);
        let mut sim = Simulator::new(config, pair).unwrap();
        let series = sim.run().unwrap();
        assert_eq!(series.rows.len(), 5);
        let counts = &sim.scenario().counts;
        // Device 0 runs first, before device 1 has sent anything.
        assert_eq!(counts[&DeviceId(0)][..3], [0, 1, 1]);
        assert_eq!(counts[&DeviceId(1)][..3], [1, 1, 1]);
    }

    #[test]
    fn same_seed_same_series() {
        let config = SimConfig {
            duration: 20.0,
            drop_rate: 0.3,
            ..SimConfig::default()
        };
        let positions: Vec<_> = (0..6).map(|i| Vec2::new(4.0 * f64::from(i), 0.0)).collect();
        let run = |config: SimConfig| {
            let scenario = Counting {
                positions: positions.clone(),
                counts: BTreeMap::new(),
            };
            Simulator::new(config, scenario).unwrap().run().unwrap().to_csv()
        };
        assert_eq!(run(config.clone()), run(config.clone()));
        let other = SimConfig { seed: 2, ..config.clone() };
        assert_ne!(run(config), run(other));
    }

    #[test]
    fn delivery_respects_radius_and_drops() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let near = [
            (DeviceId(1), Vec2::new(1.0, 0.0)),
            (DeviceId(2), Vec2::new(0.0, 9.0)),
            (DeviceId(3), Vec2::new(-5.0, 5.0)),
            (DeviceId(4), Vec2::new(30.0, 0.0)),
        ];
        let (got, in_range) = deliver(DeviceId(0), Vec2::ZERO, near, 10.0, 0.0, &mut rng);
        assert_eq!(got, vec![DeviceId(1), DeviceId(2), DeviceId(3)]);
        assert_eq!(in_range, 3);
        let (got, in_range) = deliver(DeviceId(0), Vec2::ZERO, near, 10.0, 1.0, &mut rng);
        assert!(got.is_empty());
        assert_eq!(in_range, 3);
    }

    #[test]
    fn invalid_config_is_rejected() {
        for config in [
            SimConfig { duration: -5.0, ..SimConfig::default() },
            SimConfig { drop_rate: 1.5, ..SimConfig::default() },
            SimConfig { period: 0.0, ..SimConfig::default() },
            SimConfig { comm_radius: f64::NAN, ..SimConfig::default() },
        ] {
            assert!(Simulator::new(config, counting(vec![])).is_err());
        }
    }

    #[test]
    fn empty_export_is_header_sized() {
        let e = Export::new(DeviceId(3), 1);
        assert_eq!(message_size(&e), 9);
    }
}
