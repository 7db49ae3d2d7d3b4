use std::collections::BTreeMap;
use std::sync::Arc;

use crate::calculus::{
    execute_round, Ctx, DeviceId, Export, RoundContext, RoundError, SensorSnapshot,
    DEFAULT_QUARANTINE,
};
use crate::geometry::Vec2;

/// Synchronous rounds on a static graph: every device runs round `r` on the
/// exports its neighbours produced in round `r - 1`.
///
/// Handy for unit tests and for studying convergence without phases or
/// losses. Link lengths default to 1 m.
#[derive(Debug, Clone)]
pub struct Lockstep {
    links: BTreeMap<DeviceId, BTreeMap<DeviceId, f64>>,
    exports: BTreeMap<DeviceId, Arc<Export>>,
    round: u32,
    quarantine: u32,
}

impl Lockstep {
    /// `n` isolated devices with ids `0..n`.
    pub fn new(n: usize) -> Self {
        Lockstep {
            links: (0..n as u32).map(|i| (DeviceId(i), BTreeMap::new())).collect(),
            exports: BTreeMap::new(),
            round: 0,
            quarantine: DEFAULT_QUARANTINE,
        }
    }

    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut net = Lockstep::new(n);
        for &(a, b) in edges {
            net.link(DeviceId(a), DeviceId(b), 1.0);
        }
        net
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn line(n: usize) -> Self {
        let edges: Vec<_> = (1..n as u32).map(|i| (i - 1, i)).collect();
        Lockstep::from_edges(n, &edges)
    }

    /// `w × h` 4-connected grid; device `y * w + x` sits at column `x`, row `y`.
    pub fn grid(w: usize, h: usize) -> Self {
        let mut edges = Vec::new();
        for y in 0..h as u32 {
            for x in 0..w as u32 {
                let id = y * w as u32 + x;
                if x + 1 < w as u32 {
                    edges.push((id, id + 1));
                }
                if y + 1 < h as u32 {
                    edges.push((id, id + w as u32));
                }
            }
        }
        Lockstep::from_edges(w * h, &edges)
    }

    pub fn with_quarantine(mut self, quarantine: u32) -> Self {
        self.quarantine = quarantine;
        self
    }

    /// Adds (or re-measures) a symmetric link.
    pub fn link(&mut self, a: DeviceId, b: DeviceId, distance: f64) {
        assert_ne!(a, b, "self links are not allowed");
        self.links.entry(a).or_default().insert(b, distance);
        self.links.entry(b).or_default().insert(a, distance);
    }

    pub fn unlink(&mut self, a: DeviceId, b: DeviceId) {
        if let Some(l) = self.links.get_mut(&a) {
            l.remove(&b);
        }
        if let Some(l) = self.links.get_mut(&b) {
            l.remove(&a);
        }
    }

    pub fn devices(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.links.keys().copied()
    }

    pub fn neighbours(&self, id: DeviceId) -> impl Iterator<Item = DeviceId> + '_ {
        self.links[&id].keys().copied()
    }

    /// Rounds completed so far.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn export(&self, id: DeviceId) -> Option<&Export> {
        self.exports.get(&id).map(|e| e.as_ref())
    }

    /// Runs one synchronous round of `program` on every device.
    pub fn step<T>(
        &mut self,
        mut program: impl FnMut(&mut Ctx<'_>) -> T,
    ) -> Result<BTreeMap<DeviceId, T>, RoundError> {
        self.round += 1;
        let mut results = BTreeMap::new();
        let mut next = BTreeMap::new();
        for (&id, links) in &self.links {
            let mut ctx = RoundContext::new(id, self.round);
            ctx.quarantine = self.quarantine;
            ctx.prev_export = self.exports.get(&id).cloned();
            ctx.inbox = links
                .keys()
                .filter_map(|n| {
                    self.exports
                        .get(n)
                        .map(|e| (*n, Arc::new(e.to_message())))
                })
                .collect();
            ctx.sensors = SensorSnapshot::with_distances(
                id,
                Vec2::ZERO,
                Vec2::ZERO,
                ctx.inbox.keys().map(|n| (*n, links[n])),
            );
            let (value, export) = execute_round(&ctx, &mut program)?;
            results.insert(id, value);
            next.insert(id, Arc::new(export));
        }
        self.exports = next;
        Ok(results)
    }

    /// Runs `rounds` rounds and returns the results of the last one.
    pub fn run<T>(
        &mut self,
        rounds: u32,
        mut program: impl FnMut(&mut Ctx<'_>) -> T,
    ) -> Result<BTreeMap<DeviceId, T>, RoundError> {
        assert!(rounds > 0);
        for _ in 1..rounds {
            self.step(&mut program)?;
        }
        self.step(program)
    }
}
