//! Live twin sessions over a local TCP socket.
//!
//! Every message is a 4-byte big-endian length followed by a UTF-8 JSON
//! object. The message schema is documented in `docs/protocol.md`.

pub mod client;
pub mod codec;
pub mod error;
pub mod host;
pub mod server;
pub mod session;
pub mod wire;

pub use client::Client;
pub use error::ApiError;
pub use host::Host;
pub use server::Server;
pub use session::{Session, SessionConfig};

/// Bumped on any incompatible schema change.
pub const PROTOCOL_VERSION: u64 = 1;
