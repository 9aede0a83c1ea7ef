//! The offsite owner/client split over TCP.
//!
//! The model owner serves three request kinds — hello, encode, head — and
//! the only payloads that ever cross the trust boundary are session
//! metadata, context representations, next-token log-probabilities,
//! predicted tokens, the LM head, and error replies. The data owner's
//! client can build a full external memory and fetch the head, which is
//! everything adapter training and interpolated decoding need.
//!
//! Framing: 4-byte big-endian length prefix, JSON payload, f32 vectors as
//! base64. Default port 7478.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{remote_build_memory, Client, RemoteEncoded, SessionInfo};
pub use server::{serve, ProtocolServer, ServerStats};
pub use wire::{Request, Response, MAX_FRAME, PROTOCOL_VERSION};

/// Default TCP port of the owner service.
pub const DEFAULT_PORT: u16 = 7478;
