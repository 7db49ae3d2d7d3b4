use crate::calculus::{execute_round, DeviceId, Export, RoundContext, RoundError};
use crate::geometry::Vec2;
use crate::simulator::{NodeSpec, Role, Scenario, SimTime};

use super::services::{device_program, sink_group, DeviceInput, ServiceParams};

/// Two forklifts driving head-on along a straight corridor, turning back
/// once they are `turn_distance` apart. Both run rounds at the same phase.
#[derive(Debug, Clone)]
pub struct ApproachScenario {
    pub start_distance: f64,
    /// Combined closing speed, and later separating speed, m/s.
    pub closing_speed: f64,
    pub turn_distance: f64,
    pub phase: f64,
    params: ServiceParams,
    clock: f64,
    trace: ApproachTrace,
}

/// One round of one forklift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachSample {
    pub time: f64,
    pub device: DeviceId,
    pub distance: f64,
    pub warning: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApproachTrace {
    pub samples: Vec<ApproachSample>,
}

impl ApproachTrace {
    pub fn of(&self, device: DeviceId) -> impl Iterator<Item = &ApproachSample> + '_ {
        self.samples.iter().filter(move |s| s.device == device)
    }

    /// Time of the first round at which `device` warned.
    pub fn first_warning(&self, device: DeviceId) -> Option<f64> {
        self.of(device).find(|s| s.warning).map(|s| s.time)
    }

    /// Time of the first round after `after` at which `device` did not warn.
    pub fn first_clear_after(&self, device: DeviceId, after: f64) -> Option<f64> {
        self.of(device)
            .find(|s| s.time > after && !s.warning)
            .map(|s| s.time)
    }
}

impl ApproachScenario {
    pub fn new(start_distance: f64, closing_speed: f64, turn_distance: f64) -> Self {
        ApproachScenario {
            start_distance,
            closing_speed,
            turn_distance,
            phase: 0.0,
            params: ServiceParams::default(),
            clock: 0.0,
            trace: ApproachTrace::default(),
        }
    }

    pub fn with_params(mut self, params: ServiceParams) -> Self {
        self.params = params;
        self
    }

    pub fn params(&self) -> &ServiceParams {
        &self.params
    }

    pub fn turn_time(&self) -> f64 {
        (self.start_distance - self.turn_distance) / self.closing_speed
    }

    /// Distance between the forklifts at time `t`.
    pub fn distance(&self, t: f64) -> f64 {
        let turn = self.turn_time();
        if t < turn {
            self.start_distance - self.closing_speed * t
        } else {
            self.turn_distance + self.closing_speed * (t - turn)
        }
    }

    /// When the distance first drops to `radius`.
    pub fn entry_time(&self, radius: f64) -> f64 {
        (self.start_distance - radius) / self.closing_speed
    }

    pub fn trace(&self) -> &ApproachTrace {
        &self.trace
    }

    fn now(&self, id: DeviceId, t: f64) -> Vec2 {
        let half = self.distance(t) / 2.0;
        let x = if id.0 == 1 { -half } else { half };
        Vec2::new(x, 0.0)
    }
}

impl Scenario for ApproachScenario {
    fn nodes(&self) -> Vec<NodeSpec> {
        [1, 2]
            .map(|i| NodeSpec {
                id: DeviceId(i),
                role: Role::Forklift,
                phase: Some(self.phase),
            })
            .to_vec()
    }

    fn position(&self, id: DeviceId) -> Vec2 {
        self.now(id, self.clock)
    }

    fn moves(&self) -> bool {
        true
    }

    fn mobility(&mut self, time: SimTime, _dt: f64) {
        self.clock = time.as_secs();
    }

    fn round(&mut self, time: SimTime, ctx: &RoundContext) -> Result<Export, RoundError> {
        let t = time.as_secs();
        let input = DeviceInput {
            forklift: true,
            sink_group: Some(sink_group(ctx.device)),
            now_ms: time.as_millis() as u32,
            ..DeviceInput::default()
        };
        let params = &self.params;
        let (out, export) = execute_round(ctx, |c| device_program(c, &input, params))?;
        self.trace.samples.push(ApproachSample {
            time: t,
            device: ctx.device,
            distance: self.distance(t),
            warning: out.warning,
        });
        Ok(export)
    }
}
