//! Interactive drill server: one human-controlled avatar per session,
//! streamed over a WebSocket.

pub mod protocol;
pub mod session;
pub mod ws;

pub use session::{RecordLog, SessionError, SessionManager, SessionSettings};
