//! The warehouse app as one aggregate program run by every device:
//! collision warnings, query routing and redundant log collection.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::blocks::{abf_hops, redundant_collect, sp_collection, Hops, LOG_TTL};
use crate::calculus::{Ctx, DeviceId, Wire, WireError};
use crate::processes::Status;

/// Tunable service parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceParams {
    /// Radius of the collision bubble, metres.
    pub safety_radius: f64,
    /// Closing speed above which a warning fires, m/s.
    pub approach_threshold: f64,
    /// Pallets light up along the route up to this many hops from the requester.
    pub led_radius: u8,
    /// A target pallet blinks when the requester is this close, metres.
    pub pick_distance: f64,
    /// Rounds an undelivered log is kept by a device.
    pub log_ttl: u32,
}

impl Default for ServiceParams {
    fn default() -> Self {
        ServiceParams {
            safety_radius: 6.0,
            approach_threshold: 1.0,
            led_radius: 8,
            pick_distance: 3.0,
            log_ttl: LOG_TTL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEvent {
    Load,
    Unload,
    CollisionWarning,
}

/// A warehouse event on its way to the sinks. `(origin, seq)` is unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LogRecord {
    pub origin: DeviceId,
    pub seq: u16,
    pub event: LogEvent,
    /// Creation time, milliseconds of simulated time.
    pub created_at: u32,
}

impl LogRecord {
    pub fn id(&self) -> (DeviceId, u16) {
        (self.origin, self.seq)
    }
}

impl Wire for LogRecord {
    fn encode(&self, out: &mut Vec<u8>) {
        self.origin.encode(out);
        self.seq.encode(out);
        let tag: u8 = match self.event {
            LogEvent::Load => 0,
            LogEvent::Unload => 1,
            LogEvent::CollisionWarning => 2,
        };
        tag.encode(out);
        self.created_at.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        let origin = DeviceId::decode(input)?;
        let seq = u16::decode(input)?;
        let event = match u8::decode(input)? {
            0 => LogEvent::Load,
            1 => LogEvent::Unload,
            2 => LogEvent::CollisionWarning,
            tag => return Err(WireError::InvalidTag { what: "log event", tag }),
        };
        Ok(LogRecord {
            origin,
            seq,
            event,
            created_at: u32::decode(input)?,
        })
    }
}

/// What a routing request looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    /// A pallet next to a vacant slot.
    EmptySpace,
    /// A stored pallet holding this kind of good.
    Kind(u8),
}

/// Key of one routing process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RequestKey {
    pub requester: DeviceId,
    pub seq: u16,
    pub query: Query,
}

impl Wire for RequestKey {
    fn encode(&self, out: &mut Vec<u8>) {
        self.requester.encode(out);
        self.seq.encode(out);
        let q = match self.query {
            Query::EmptySpace => 0,
            Query::Kind(k) => k,
        };
        q.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        let requester = DeviceId::decode(input)?;
        let seq = u16::decode(input)?;
        let query = match u8::decode(input)? {
            0 => Query::EmptySpace,
            k => Query::Kind(k),
        };
        Ok(RequestKey {
            requester,
            seq,
            query,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Led {
    #[default]
    Off,
    On,
    Blink,
}

/// Route information handed to the requesting forklift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hint {
    /// Hops to the nearest matching pallet.
    pub hops: Hops,
    /// Neighbour one hop closer to it.
    pub parent: DeviceId,
}

impl Hint {
    pub fn reachable(&self) -> bool {
        self.hops.is_finite()
    }
}

/// Per-round inputs of one device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceInput {
    pub forklift: bool,
    /// Sink group (1 or 2) of a forklift.
    pub sink_group: Option<u8>,
    pub now_ms: u32,
    pub new_logs: Vec<LogRecord>,
    /// Routing requests issued by this device; `true` cancels the request.
    pub requests: Vec<(RequestKey, bool)>,
    /// Content of a stored pallet, `None` for pallets that are empty,
    /// carried or waiting in the loading zone.
    pub stored_content: Option<u8>,
    /// Stored pallet next to a vacant slot.
    pub next_to_vacancy: bool,
}

impl DeviceInput {
    fn matches(&self, query: Query) -> bool {
        match query {
            Query::EmptySpace => self.next_to_vacancy,
            Query::Kind(k) => self.stored_content == Some(k),
        }
    }
}

/// Per-round outputs of one device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceOutput {
    pub warning: bool,
    /// Distance to the nearest other forklift as seen by a forklift's own
    /// collision process, metres.
    pub nearest_forklift: Option<f64>,
    pub hints: BTreeMap<RequestKey, Hint>,
    pub led: Led,
    /// Logs reaching this device as a sink of group 1 and group 2.
    pub collected: [BTreeSet<LogRecord>; 2],
}

/// The whole app. Every device runs it every round.
pub fn device_program(c: &mut Ctx<'_>, input: &DeviceInput, params: &ServiceParams) -> DeviceOutput {
    let collision = collision_service(c, input.forklift, input.now_ms, params);
    let routing = routing_service(c, input, params);
    let collected = log_service(c, input.sink_group, &input.new_logs, params.log_ttl);
    DeviceOutput {
        warning: collision.map(|c| c.warning).unwrap_or(false),
        nearest_forklift: collision.and_then(|c| c.nearest),
        hints: routing.hints,
        led: routing.led,
        collected,
    }
}

/// Distances inside the collision bubble travel as decimetres.
const DM_INF: u16 = u16::MAX;

fn to_dm(metres: f64) -> u16 {
    (metres * 10.0).round().clamp(0.0, f64::from(DM_INF - 1)) as u16
}

/// Shortest-path metric distance to the source, in decimetres.
#[track_caller]
fn metric_distance(c: &mut Ctx<'_>, is_source: bool) -> u16 {
    c.call(|c| {
        c.share(DM_INF, |c, g| {
            if is_source {
                return 0;
            }
            let dist = c.nbr_dist();
            g.neighbours()
                .filter(|(id, d)| **d != DM_INF && dist.contains(*id))
                .map(|(id, d)| d.saturating_add(to_dm(*dist.get(id))).min(DM_INF - 1))
                .min()
                .unwrap_or(DM_INF)
        })
    })
}

/// What a forklift learns from its own collision bubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approach {
    pub warning: bool,
    pub nearest: Option<f64>,
}

/// Service 1. Every forklift spawns a process keyed by its id that spreads
/// up to the safety radius (metric distance); other forklifts just beyond
/// it join as border members so an approach is seen before it enters. The
/// nearest other forklift is collected at the origin, which warns when it
/// is within the radius and closing faster than the threshold.
#[track_caller]
pub fn collision_service(
    c: &mut Ctx<'_>,
    forklift: bool,
    now_ms: u32,
    params: &ServiceParams,
) -> Option<Approach> {
    c.call(|c| {
        let me = c.uid();
        let radius = to_dm(params.safety_radius);
        let keys = if forklift { vec![me.0] } else { vec![] };
        let mut out = c.spawn(keys, |c, key| {
            let origin = DeviceId(*key);
            let dist = metric_distance(c, me == origin);
            let value = if forklift && me != origin { (dist, me) } else { (DM_INF, DeviceId::NONE) };
            let (collected, nearest_id) =
                sp_collection(c, dist, value, (DM_INF, DeviceId::NONE), |a, b| *a.min(b));
            if me != origin {
                let status = if dist <= radius {
                    Status::INTERNAL
                } else if forklift && dist != DM_INF {
                    Status::BORDER
                } else {
                    Status::EXTERNAL
                };
                return (None, status);
            }
            // The collected distance is a round old; a direct neighbour is
            // re-ranged now.
            let ranged = c.nbr_dist();
            let nearest = if ranged.contains(nearest_id) {
                to_dm(*ranged.get(nearest_id))
            } else {
                collected
            };
            let prev = c.old(DM_INF, nearest);
            let prev_ms = c.old(now_ms, now_ms);
            let dt = f64::from(now_ms.saturating_sub(prev_ms)) / 1000.0;
            let warning = nearest <= radius
                && prev != DM_INF
                && dt > 0.0
                && (f64::from(prev) - f64::from(nearest)) / 10.0 / dt > params.approach_threshold;
            let approach = Approach {
                warning,
                nearest: (nearest != DM_INF).then(|| f64::from(nearest) / 10.0),
            };
            (Some(approach), Status::INTERNAL_OUTPUT)
        });
        out.remove(&me.0).flatten()
    })
}

/// Per-device view of one routing process, shared with neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RouteState {
    hops: Hops,
    parent: DeviceId,
    /// Hops from the requester along parent links, `u8::MAX` when off the route.
    chain: u8,
}

impl Wire for RouteState {
    fn encode(&self, out: &mut Vec<u8>) {
        self.hops.encode(out);
        self.parent.encode(out);
        self.chain.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        Ok(RouteState {
            hops: Hops::decode(input)?,
            parent: DeviceId::decode(input)?,
            chain: u8::decode(input)?,
        })
    }
}

const OFF_ROUTE: u8 = u8::MAX;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Routing {
    pub hints: BTreeMap<RequestKey, Hint>,
    pub led: Led,
}

/// Service 2. Each request is a process spreading to the whole network.
/// Inside it, a hop-count gradient grows from the matching pallets, every
/// device points to its neighbour closest to them, and the route is the
/// chain of parent links starting at the requester. Pallets on the first
/// `led_radius` hops of the route light up; the target blinks once the
/// requester is within picking distance. Cancelling terminates the process.
#[track_caller]
pub fn routing_service(c: &mut Ctx<'_>, input: &DeviceInput, params: &ServiceParams) -> Routing {
    c.call(|c| {
        let me = c.uid();
        let cancelled: BTreeSet<RequestKey> = input
            .requests
            .iter()
            .filter(|(_, cancel)| *cancel)
            .map(|(k, _)| *k)
            .collect();
        let keys = input.requests.iter().map(|(k, _)| *k);
        let views = c.spawn(keys, |c, key| {
            let source = !input.forklift && input.matches(key.query);
            let requester = key.requester;
            let state = c.share(
                RouteState {
                    hops: Hops::INF,
                    parent: DeviceId::NONE,
                    chain: OFF_ROUTE,
                },
                |_, states| {
                    let hops = if source {
                        Hops::ZERO
                    } else {
                        states
                            .neighbours()
                            .map(|(_, s)| s.hops)
                            .min()
                            .unwrap_or(Hops::INF)
                            .succ()
                    };
                    // A target ends the route even next to another target.
                    let (_, parent) = states
                        .neighbours()
                        .map(|(id, s)| (s.hops, id))
                        .filter(|_| !source)
                        .chain([(hops, me)])
                        .min()
                        .expect("self candidate");
                    let chain = if me == requester {
                        0
                    } else {
                        states
                            .neighbours()
                            .filter(|(_, s)| s.parent == me && s.chain != OFF_ROUTE)
                            .map(|(_, s)| s.chain.saturating_add(1).min(OFF_ROUTE - 1))
                            .min()
                            .unwrap_or(OFF_ROUTE)
                    };
                    RouteState {
                        hops,
                        parent,
                        chain,
                    }
                },
            );
            let mut led = Led::Off;
            if !input.forklift && state.hops.is_finite() && state.chain <= params.led_radius {
                led = Led::On;
            }
            if source {
                let dist = c.nbr_dist();
                if dist.contains(requester) && *dist.get(requester) <= params.pick_distance {
                    led = Led::Blink;
                }
            }
            let hint = Hint {
                hops: state.hops,
                parent: state.parent,
            };
            let status = if me == requester && cancelled.contains(key) {
                Status::TERMINATED
            } else {
                Status::INTERNAL_OUTPUT
            };
            ((hint, led), status)
        });
        let mut routing = Routing::default();
        for (key, (hint, led)) in views {
            routing.led = routing.led.max(led);
            if key.requester == me {
                routing.hints.insert(key, hint);
            }
        }
        routing
    })
}

/// Service 3. Logs flow twice, towards the closest sink of each group,
/// over hop-count gradients. Returns what this device collected as a sink.
#[track_caller]
pub fn log_service(
    c: &mut Ctx<'_>,
    sink_group: Option<u8>,
    new_logs: &[LogRecord],
    ttl: u32,
) -> [BTreeSet<LogRecord>; 2] {
    c.call(|c| {
        let g1 = abf_hops(c, sink_group == Some(1));
        let g2 = abf_hops(c, sink_group == Some(2));
        redundant_collect(c, [g1, g2], new_logs, ttl)
    })
}

/// Sink group of a forklift: odd ids collect for group 1, even for group 2.
pub fn sink_group(id: DeviceId) -> u8 {
    if id.0 % 2 == 1 {
        1
    } else {
        2
    }
}
