//! Live session service: clients send press/release or raw samples over a
//! WebSocket, each session's engine advances on a fixed tick and streams
//! [`protocol::StateFrame`]s back. Named engine configurations are stored as
//! TOML files.

pub mod engine;
pub mod protocol;
pub mod server;

pub use engine::{replay_log, InputError, SessionEngine};
pub use protocol::{Channel, Inbound, LogLine, Outbound, StateFrame};
pub use server::{GatewayConfig, GatewayError, Server, SessionDescriptor};
