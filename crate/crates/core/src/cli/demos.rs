use std::collections::BTreeMap;

use serde_json::json;

use crate::blocks::{abf_hops, sp_collection, Hops};
use crate::calculus::{execute_round, DeviceId, Export, RoundContext, RoundError};
use crate::geometry::Vec2;
use crate::processes::Status;
use crate::simulator::{NodeSpec, Role, Scenario, SimConfig, SimTime};

/// Square grid of static devices, 4 m apart. Device 0 is the source of a
/// hop-count gradient along which the device count is collected back.
#[derive(Debug, Clone)]
pub struct GradientDemo {
    side: u32,
    state: BTreeMap<DeviceId, (Hops, u32)>,
}

impl GradientDemo {
    pub const SPACING: f64 = 4.0;

    pub fn new(config: &SimConfig) -> Self {
        GradientDemo {
            side: 2 * config.rows.max(config.cols),
            state: BTreeMap::new(),
        }
    }

    pub fn hops(&self, id: DeviceId) -> Option<Hops> {
        self.state.get(&id).map(|s| s.0)
    }

    /// Devices counted at the source.
    pub fn count(&self) -> u32 {
        self.state.get(&DeviceId(0)).map_or(0, |s| s.1)
    }
}

impl Scenario for GradientDemo {
    fn nodes(&self) -> Vec<NodeSpec> {
        (0..self.side * self.side)
            .map(|i| NodeSpec::new(DeviceId(i), Role::Device))
            .collect()
    }

    fn position(&self, id: DeviceId) -> Vec2 {
        let (x, y) = (id.0 % self.side, id.0 / self.side);
        Vec2::new(f64::from(x), f64::from(y)) * Self::SPACING
    }

    fn round(&mut self, _time: SimTime, ctx: &RoundContext) -> Result<Export, RoundError> {
        let source = ctx.device == DeviceId(0);
        let (out, export) = execute_round(ctx, |c| {
            let d = abf_hops(c, source);
            let n = sp_collection(c, d, 1u32, 0, |a, b| a + b);
            (d, n)
        })?;
        self.state.insert(ctx.device, out);
        Ok(export)
    }

    fn dump(&self, id: DeviceId) -> serde_json::Value {
        let (hops, count) = self.state.get(&id).copied().unwrap_or((Hops::INF, 0));
        json!({ "hops": hops.finite(), "count": count })
    }
}

/// Line of 20 static devices, 5 m apart. Every 40 s device 0 spawns a
/// fresh process that spreads along the line, and terminates it 20 s
/// later.
#[derive(Debug, Clone)]
pub struct SpawnDemo {
    running: BTreeMap<DeviceId, Vec<u32>>,
}

impl SpawnDemo {
    pub const DEVICES: u32 = 20;
    pub const SPACING: f64 = 5.0;
    pub const CYCLE: f64 = 40.0;

    pub fn new(_config: &SimConfig) -> Self {
        SpawnDemo {
            running: BTreeMap::new(),
        }
    }

    /// Process keys `id` ran in its latest round.
    pub fn running(&self, id: DeviceId) -> &[u32] {
        self.running.get(&id).map_or(&[], Vec::as_slice)
    }
}

impl Scenario for SpawnDemo {
    fn nodes(&self) -> Vec<NodeSpec> {
        (0..Self::DEVICES)
            .map(|i| NodeSpec::new(DeviceId(i), Role::Device))
            .collect()
    }

    fn position(&self, id: DeviceId) -> Vec2 {
        Vec2::new(f64::from(id.0) * Self::SPACING, 0.0)
    }

    fn round(&mut self, time: SimTime, ctx: &RoundContext) -> Result<Export, RoundError> {
        let t = time.as_secs();
        let epoch = (t / Self::CYCLE) as u32;
        let ending = t % Self::CYCLE >= Self::CYCLE / 2.0;
        let origin = ctx.device == DeviceId(0);
        let (out, export) = execute_round(ctx, |c| {
            let keys = if origin { vec![epoch] } else { vec![] };
            c.spawn(keys, |c, key| {
                let status = if origin && ending && *key == epoch {
                    Status::TERMINATED
                } else {
                    Status::INTERNAL_OUTPUT
                };
                (abf_hops(c, origin), status)
            })
        })?;
        self.running.insert(ctx.device, out.into_keys().collect());
        Ok(export)
    }

    fn dump(&self, id: DeviceId) -> serde_json::Value {
        json!({ "processes": self.running(id) })
    }
}
