//! Platform-independent core of the teleoperation ground control station.
//!
//! Everything in this crate is a deterministic function of its inputs: clocks
//! are passed in as seconds, randomness comes from seeded generators, and IO
//! is left to the host. The std companion crate (`gcs-station`) supplies the
//! network endpoint, file formats and command-line tools.
//!
//! Module map:
//!
//! - [`wire`]: message envelope, canonical text encoding, channel routing.
//! - [`telemetry`]: robot status types, diagnostics, sensor classification,
//!   camera stream statistics.
//! - [`script`]: the small sandboxed expression language used by actions.
//! - [`action`]: action registry, structure tree and execution manager.
//! - [`mission`]: task-list missions with operator controls and confirmations.
//! - [`estop`]: e-stop channel aggregation and the software e-stop.
//! - [`view`]: virtual camera presets, follow controller and projection.
//! - [`snapshot`]: four-corner homography rectification and length measurement.
//! - [`sim`]: simulated tracked robot, gamepad mapping and impaired link.
//! - [`config`]: console configuration model and validation.
//! - [`console`]: the gateway state machine that owns all of the above.
//! - [`client`]: client-side state model rebuilt from snapshots and deltas.
//! - [`harness`]: in-process console + robot + link discrete-event loop.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod action;
pub mod client;
pub mod config;
pub mod console;
pub mod estop;
pub mod harness;
pub mod mission;
pub mod script;
pub mod sim;
pub mod snapshot;
pub mod telemetry;
pub mod view;
pub mod wire;

pub mod math;

/// Structured payload tree carried by every envelope.
pub use serde_json::Value;

pub use wire::{ConnId, Envelope, Kind};
