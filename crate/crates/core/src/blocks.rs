//! Self-stabilising building blocks: hop-count gradient, broadcast,
//! single-path collection, closest-sink regions and the redundant
//! multi-path log collection used by the warehouse.
//!
//! Every block is `#[track_caller]` and scopes its body under the caller's
//! location, so calling the same block twice from different places keeps
//! two independent states.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::calculus::{Ctx, DeviceId, Wire, WireError};

/// Hop count with a saturating infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hops(pub u16);

impl Hops {
    pub const ZERO: Hops = Hops(0);
    pub const INF: Hops = Hops(u16::MAX);

    pub fn is_finite(self) -> bool {
        self != Hops::INF
    }

    /// One hop farther; infinity stays infinite.
    pub fn succ(self) -> Hops {
        Hops(self.0.saturating_add(1))
    }

    pub fn finite(self) -> Option<u16> {
        self.is_finite().then_some(self.0)
    }
}

impl fmt::Display for Hops {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.finite() {
            Some(h) => f.pad(&h.to_string()),
            None => f.pad("inf"),
        }
    }
}

impl Wire for Hops {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        u16::decode(input).map(Hops)
    }
}

/// Hop distance to the nearest source (Bellman-Ford relaxation).
#[track_caller]
pub fn abf_hops(c: &mut Ctx<'_>, is_source: bool) -> Hops {
    c.call(|c| {
        c.share(Hops::INF, |_, d| {
            if is_source {
                Hops::ZERO
            } else {
                d.neighbours()
                    .map(|(_, h)| *h)
                    .min()
                    .unwrap_or(Hops::INF)
                    .succ()
            }
        })
    })
}

/// Spreads `value` outward from the sources of the gradient `distance`:
/// each device adopts the value of its neighbour closest to a source, ties
/// broken by value and then by id.
#[track_caller]
pub fn broadcast<P, T>(c: &mut Ctx<'_>, distance: P, value: T) -> T
where
    P: Wire + Copy + Ord,
    T: Wire + Clone + Ord,
{
    c.call(|c| {
        let me = c.uid();
        let (_, v) = c.share((distance, value.clone()), |_, states| {
            let (_, v, _) = states
                .neighbours()
                .map(|(id, (d, v))| (*d, v.clone(), id))
                .chain([(distance, value, me)])
                .min()
                .expect("self candidate");
            (distance, v)
        });
        v
    })
}

/// Accumulates `value` over the spanning tree induced by `distance`; the
/// device at distance 0 ends up with the accumulation of its whole
/// component. `null` must be the identity of `accumulate`.
#[track_caller]
pub fn sp_collection<P, T>(
    c: &mut Ctx<'_>,
    distance: P,
    value: T,
    null: T,
    accumulate: impl Fn(&T, &T) -> T,
) -> T
where
    P: Wire + Copy + Ord,
    T: Wire + Clone,
{
    c.call(|c| {
        let me = c.uid();
        // Distance, parent and partial result travel as one entry.
        let start = (distance, DeviceId::NONE, null.clone());
        let (_, _, x) = c.share(start, |_, states| {
            let parent = states
                .neighbours()
                .map(|(id, (d, _, _))| (*d, id))
                .chain([(distance, me)])
                .min()
                .expect("self candidate")
                .1;
            let children = states
                .neighbours()
                .filter(|(_, (_, p, _))| *p == me)
                .map(|(_, (_, _, x))| x);
            let x = children.fold(value, |acc, v| accumulate(&acc, v));
            (distance, parent, x)
        });
        x
    })
}

/// The sink region a device belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Region {
    pub hops: Hops,
    /// [`DeviceId::NONE`] when no sink is reachable.
    pub sink: DeviceId,
}

impl Region {
    pub const NONE: Region = Region {
        hops: Hops::INF,
        sink: DeviceId::NONE,
    };

    pub fn sink(self) -> Option<DeviceId> {
        (self.sink != DeviceId::NONE).then_some(self.sink)
    }
}

impl Wire for Region {
    fn encode(&self, out: &mut Vec<u8>) {
        self.hops.encode(out);
        self.sink.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        Ok(Region {
            hops: Hops::decode(input)?,
            sink: DeviceId::decode(input)?,
        })
    }
}

/// Joins the region of the closest sink, ties broken by the smaller sink id.
#[track_caller]
pub fn closest_sink(c: &mut Ctx<'_>, is_sink: bool) -> Region {
    c.call(|c| {
        let me = c.uid();
        c.share(Region::NONE, |_, regions| {
            if is_sink {
                return Region {
                    hops: Hops::ZERO,
                    sink: me,
                };
            }
            match regions.neighbours().map(|(_, r)| *r).min() {
                Some(r) if r.hops.is_finite() => Region {
                    hops: r.hops.succ(),
                    sink: r.sink,
                },
                _ => Region::NONE,
            }
        })
    })
}

/// Rounds a device keeps re-sending its own logs that have not yet been
/// seen closer to a sink.
pub const LOG_TTL: u32 = 20;

/// Multi-path collection of log items towards the sinks of two groups.
///
/// For each group, every device holds its own new items plus everything a
/// farther neighbour holds, minus anything a closer neighbour already
/// holds. Held items are kept for up to `ttl` rounds or until seen closer,
/// so an item survives even if the farther device drops it before the next
/// hop picks it up. Both groups travel in one shared entry, each item once
/// with a group mask. Returns, per group, the items arriving at this device
/// if it is a sink of that group (`distance` 0), duplicates across rounds
/// included.
#[track_caller]
pub fn redundant_collect<L: Wire + Clone + Ord>(
    c: &mut Ctx<'_>,
    distances: [Hops; 2],
    new_items: &[L],
    ttl: u32,
) -> [BTreeSet<L>; 2] {
    c.call(|c| {
        let empty = ((Hops::INF, Hops::INF), BTreeMap::<L, u8>::new());
        let (_, shared) = c.share(empty, |c, states| {
            let mut out = BTreeMap::<L, u8>::new();
            for (g, distance) in distances.into_iter().enumerate() {
                let bit = 1u8 << g;
                let mut closer = BTreeSet::new();
                let mut farther = BTreeSet::new();
                for (_, ((d1, d2), items)) in states.neighbours() {
                    let d = if g == 0 { *d1 } else { *d2 };
                    let items = items.iter().filter(|(_, m)| *m & bit != 0).map(|(l, _)| l);
                    if d < distance {
                        closer.extend(items.cloned());
                    } else if d > distance {
                        farther.extend(items.cloned());
                    }
                }
                let at_sink = distance == Hops::ZERO;
                c.iteration(g as u32, |c| {
                    c.old_by(BTreeMap::<L, u32>::new(), |mut pending| {
                        for item in new_items.iter().chain(&farther) {
                            pending.entry(item.clone()).or_insert(0);
                        }
                        pending.retain(|item, age| *age < ttl && !closer.contains(item));
                        for (item, age) in pending.iter_mut() {
                            *age += 1;
                            // Kept but not offered while no sink is reachable.
                            if distance.is_finite() {
                                *out.entry(item.clone()).or_insert(0) |= bit;
                            }
                        }
                        if at_sink {
                            pending.clear();
                        }
                        pending
                    })
                });
            }
            ((distances[0], distances[1]), out)
        });
        let mut got = [BTreeSet::new(), BTreeSet::new()];
        for (g, distance) in distances.into_iter().enumerate() {
            if distance == Hops::ZERO {
                got[g] = shared
                    .iter()
                    .filter(|(_, m)| *m & (1 << g) != 0)
                    .map(|(l, _)| l.clone())
                    .collect();
            }
        }
        got
    })
}
