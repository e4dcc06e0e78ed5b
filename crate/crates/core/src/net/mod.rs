//! Wire format, TCP server and client.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{client_login, Client, ClientError, LoginReport, TcpTransport, Transport};
pub use server::{Server, ServerEngine, ServerHandle};
pub use wire::{decode_message, encode_message, ErrorCode, WireError, WireMessage};
