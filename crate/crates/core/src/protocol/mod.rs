//! Client/server protocol: framing, scheme selection, transports and both
//! endpoints.

pub mod client;
pub mod cost;
pub mod server;
pub mod transport;
pub mod wire;

use thiserror::Error;

pub use client::{ClientConfig, ClientSession, Lookup, SchemeChoice};
pub use cost::{select_scheme, CostInputs, Scheme};
pub use server::{calibrate_c_fhe, calibrate_c_full, Server, ServerConfig, ServerSession};
pub use transport::{message_delay, InProcess, Simulated, TcpTransport, Transport};
pub use wire::{InitBundle, Message};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("connection closed")]
    Closed,
    #[error("server error {code}: {message}")]
    Server { code: u16, message: String },
    #[error("expected {expected}, got message type {found:#04x}")]
    Unexpected { expected: String, found: u8 },
    #[error("still stale after {0} retries")]
    TooStale(u32),
    #[error(transparent)]
    He(#[from] crate::he::HeError),
    #[error(transparent)]
    Index(#[from] crate::pgm::PgmError),
    #[error(transparent)]
    VarPir(#[from] crate::varpir::VarPirError),
    #[error(transparent)]
    Privacy(#[from] crate::dldp::DldpError),
}
