use thiserror::Error;

use super::trace::TraceId;
use super::wire::WireError;
use super::DeviceId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoundError {
    #[error("trace collision at {key}: a call site ran twice in one round (wrap loops in `iteration`)")]
    TraceCollision { key: String },
    #[error("trace digest collision between {first} and {second}")]
    DigestCollision { first: String, second: String },
    #[error("process keys {first} and {second} hash to the same digest")]
    ProcessKeyCollision { first: String, second: String },
    #[error("cannot decode value at trace {trace} from device {from}: {source}")]
    Decode {
        trace: TraceId,
        from: DeviceId,
        #[source]
        source: WireError,
    },
    #[error("inbox of device {0} contains its own export")]
    SelfInInbox(DeviceId),
}
