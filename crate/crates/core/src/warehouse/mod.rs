//! Smart-warehouse application: pallets and forklifts running the
//! collision, routing and log collection services.

pub mod approach;
pub mod goods;
pub mod layout;
pub mod scenario;
pub mod services;

pub use approach::{ApproachSample, ApproachScenario, ApproachTrace};
pub use goods::{GoodsDistribution, TaskGenerator, TaskKind, KINDS};
pub use layout::{Layout, Slot, SlotId};
pub use scenario::{WarehouseReport, WarehouseScenario};
pub use services::{
    device_program, sink_group, DeviceInput, DeviceOutput, Hint, Led, LogEvent, LogRecord, Query,
    RequestKey, ServiceParams,
};
