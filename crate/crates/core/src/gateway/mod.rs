//! Multimodal ingestion, clock synchronization, fused timeline and gait
//! segmentation.

pub mod clock;
pub mod packet;
pub mod segment;
pub mod strides;
pub mod timeline;
pub mod wire;

use thiserror::Error;

pub use clock::{synchronize, ClockModel, ClockRegistry};
pub use packet::{FnSink, Modality, PacketSink, Payload, SensorPacket};
pub use segment::{
    detect_bouts, edge_case_filter, segment_walks, Bout, FilterVerdict, GaitSegment, RejectReason, SegmentStats,
};
pub use strides::count_strides;
pub use timeline::{FusedTimeline, Gateway, TimelineRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("invalid clock model: {0}")]
    InvalidClock(String),
    #[error("unknown source '{0}'")]
    UnknownSource(String),
    #[error("packet rejected: {0}")]
    Rejected(String),
    #[error("late packet from '{source_id}' at {ts} ms (committed through {watermark} ms)")]
    Late { source_id: String, ts: i64, watermark: i64 },
    #[error("decode error: {0}")]
    Decode(String),
    #[error("io error: {0}")]
    Io(String),
}
