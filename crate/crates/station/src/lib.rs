//! Std host for the ground control station core: configuration files,
//! envelope traces, image IO, the WebSocket console endpoint and the
//! stand-alone simulator process.

pub mod config_store;
pub mod imaging;
pub mod server;
pub mod simhost;
pub mod trace;
