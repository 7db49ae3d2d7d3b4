//! The round model: exports, neighbouring fields, alignment and builtins.

use std::fmt;

use serde::Serialize;

mod context;
mod error;
mod export;
mod field;
mod trace;
pub mod wire;

pub use context::{
    execute_round, Ctx, Mailbox, RoundContext, SensorSnapshot, DEFAULT_QUARANTINE,
    DEFAULT_STALENESS,
};
pub use error::RoundError;
pub use export::Export;
pub use field::NbrField;
pub use trace::{Tag, TraceId, TraceKey};
pub use wire::{Wire, WireError};

/// Unique, stable identifier of a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DeviceId(pub u32);

impl DeviceId {
    /// Placeholder for "no device", ordered after every real id.
    pub const NONE: DeviceId = DeviceId(u32::MAX);
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == DeviceId::NONE {
            f.pad("none")
        } else {
            f.pad(&self.0.to_string())
        }
    }
}

impl Wire for DeviceId {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        u32::decode(input).map(DeviceId)
    }
}
