//! MiIO-speaking appliances: wire codec, registry, virtual servers, the
//! client, state polling and the rule-based fallback guard.

pub mod client;
pub mod guard;
pub mod miio;
pub mod poller;
pub mod registry;
pub mod state;
pub mod transport;
pub mod virtual_device;

pub use client::{ClientConfig, CommandOutcome, MiioClient};
pub use guard::{guard, DenyReason, Guard, GuardPolicy, GuardRecord, GuardVerdict};
pub use miio::{decode_packet, derive_keys, encode_packet, hello_reply, Header, Token, HELLO};
pub use poller::{PollEvent, Poller};
pub use registry::{Capabilities, DeviceDescriptor, DeviceKind, ParamSpec, Registry, ACTION_VOCABULARY};
pub use state::DeviceState;
pub use transport::{InProcessTransport, Transport, UdpTransport};
pub use virtual_device::{CommandRecord, Faults, ServerHandle, VirtualDevice};

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("token must be 16 bytes, got {0}")]
    BadToken(usize),
    #[error("codec: {0}")]
    Codec(String),
    #[error("body too large: {0} bytes")]
    Oversized(usize),
    #[error("{address} unreachable")]
    Unreachable { address: String },
    #[error("device error {code}: {message}")]
    Device { code: i64, message: String },
    #[error("unsupported action {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("registry: {0}")]
    Registry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
