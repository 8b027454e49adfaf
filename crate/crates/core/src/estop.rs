//! E-stop channel aggregation and the best-effort software e-stop.
//!
//! Hardware e-stops only report their state here; they act on the robot on
//! their own path. The software e-stop is latching: it stays pressed until an
//! explicit release, is sent to the robot without delivery guarantee, and a
//! missing acknowledgment within [`ACK_WINDOW`] raises a warning diagnostic.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::telemetry::{DiagnosticsItem, DiagnosticsLevel};

pub mod channels {
    pub const TRIGGER: &str = "estop/trigger";
    pub const RELEASE: &str = "estop/release";
    pub const SUMMARY: &str = "estop/summary";
    /// Robot-bound software e-stop command.
    pub const ROBOT_CMD: &str = "robot/estop_cmd";
    /// Robot acknowledgment of a software e-stop command.
    pub const ROBOT_ACK: &str = "robot/estop_ack";
    /// Robot report of a hardware e-stop state.
    pub const ROBOT_HW: &str = "robot/estop_hw";
}

/// Seconds the robot has to acknowledge a software e-stop.
pub const ACK_WINDOW: f64 = 1.0;

/// Name of the software channel driven by the operator interface.
pub const SOFTWARE_CHANNEL: &str = "ui";

/// Diagnostics item name used for the acknowledgment status.
pub const ACK_DIAGNOSTIC: &str = "estop/software";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EStopError {
    #[error("unknown e-stop channel `{0}`")]
    NotFound(String),
    #[error("e-stop channel `{0}` already exists")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Software,
    HardwareReported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EStopChannel {
    pub name: String,
    pub pressed: bool,
    pub source: Source,
    pub last_update: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    /// Nothing sent yet.
    None,
    Pending,
    Acknowledged,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EStopSummary {
    pub any_pressed: bool,
    pub channels: Vec<EStopChannel>,
    pub software_ack: AckStatus,
    /// Latest `last_update` over all channels.
    pub stamp: f64,
}

/// Robot-bound e-stop traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct EStopCommand {
    pub channel: &'static str,
    pub payload: Value,
}

#[derive(Debug, Clone)]
pub struct EStopManager {
    channels: BTreeMap<String, EStopChannel>,
    seq: u64,
    ack: AckStatus,
    ack_deadline: Option<f64>,
    outbox: Vec<EStopCommand>,
    stamp: f64,
}

impl Default for EStopManager {
    fn default() -> Self {
        Self::new()
    }
}

impl EStopManager {
    /// Manager with only the software channel.
    pub fn new() -> Self {
        let mut channels = BTreeMap::new();
        channels.insert(
            SOFTWARE_CHANNEL.to_string(),
            EStopChannel {
                name: SOFTWARE_CHANNEL.into(),
                pressed: false,
                source: Source::Software,
                last_update: 0.0,
            },
        );
        Self {
            channels,
            seq: 0,
            ack: AckStatus::None,
            ack_deadline: None,
            outbox: Vec::new(),
            stamp: 0.0,
        }
    }

    pub fn with_hardware<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self, EStopError> {
        let mut m = Self::new();
        for n in names {
            m.register(n, Source::HardwareReported)?;
        }
        Ok(m)
    }

    pub fn register(&mut self, name: &str, source: Source) -> Result<(), EStopError> {
        if self.channels.contains_key(name) {
            return Err(EStopError::Duplicate(name.into()));
        }
        self.channels.insert(
            name.into(),
            EStopChannel {
                name: name.into(),
                pressed: false,
                source,
                last_update: 0.0,
            },
        );
        Ok(())
    }

    pub fn summary(&self) -> EStopSummary {
        let channels: Vec<EStopChannel> = self.channels.values().cloned().collect();
        EStopSummary {
            any_pressed: channels.iter().any(|c| c.pressed),
            channels,
            software_ack: self.ack,
            stamp: self.stamp,
        }
    }

    pub fn any_pressed(&self) -> bool {
        self.channels.values().any(|c| c.pressed)
    }

    pub fn software_pressed(&self) -> bool {
        self.channels.get(SOFTWARE_CHANNEL).is_some_and(|c| c.pressed)
    }

    pub fn ack_status(&self) -> AckStatus {
        self.ack
    }

    pub fn drain_outbox(&mut self) -> Vec<EStopCommand> {
        core::mem::take(&mut self.outbox)
    }

    fn touch(&mut self, now: f64) {
        if now > self.stamp {
            self.stamp = now;
        }
    }

    /// Updates one channel. Returns `None` when the state did not change, so
    /// callers can skip the broadcast.
    pub fn report_state(&mut self, name: &str, pressed: bool, now: f64) -> Result<Option<EStopSummary>, EStopError> {
        let ch = self
            .channels
            .get_mut(name)
            .ok_or_else(|| EStopError::NotFound(name.into()))?;
        if ch.pressed == pressed {
            return Ok(None);
        }
        ch.pressed = pressed;
        ch.last_update = ch.last_update.max(now);
        self.touch(now);
        Ok(Some(self.summary()))
    }

    /// Latches the software channel and sends a stop command to the robot.
    pub fn trigger_software(&mut self, now: f64) -> EStopSummary {
        self.seq += 1;
        if let Some(ch) = self.channels.get_mut(SOFTWARE_CHANNEL) {
            ch.pressed = true;
            ch.last_update = ch.last_update.max(now);
        }
        self.touch(now);
        self.ack = AckStatus::Pending;
        self.ack_deadline = Some(now + ACK_WINDOW);
        self.outbox.push(EStopCommand {
            channel: channels::ROBOT_CMD,
            payload: json!({ "engage": true, "seq": self.seq }),
        });
        self.summary()
    }

    /// Explicit release of the software latch.
    pub fn release_software(&mut self, now: f64) -> EStopSummary {
        self.seq += 1;
        if let Some(ch) = self.channels.get_mut(SOFTWARE_CHANNEL) {
            ch.pressed = false;
            ch.last_update = ch.last_update.max(now);
        }
        self.touch(now);
        self.ack = AckStatus::Pending;
        self.ack_deadline = Some(now + ACK_WINDOW);
        self.outbox.push(EStopCommand {
            channel: channels::ROBOT_CMD,
            payload: json!({ "engage": false, "seq": self.seq }),
        });
        self.summary()
    }

    /// Robot acknowledged command `seq`. Stale acknowledgments are ignored.
    /// Returns the diagnostics item to publish when the status changed.
    pub fn on_ack(&mut self, seq: u64, now: f64) -> Option<DiagnosticsItem> {
        if seq != self.seq || self.ack == AckStatus::Acknowledged {
            return None;
        }
        self.ack = AckStatus::Acknowledged;
        self.ack_deadline = None;
        self.touch(now);
        Some(self.ack_diagnostic())
    }

    /// Checks the acknowledgment window. Returns a WARNING diagnostic when
    /// the window just lapsed.
    pub fn tick(&mut self, now: f64) -> Option<DiagnosticsItem> {
        match self.ack_deadline {
            Some(deadline) if self.ack == AckStatus::Pending && now >= deadline => {
                self.ack = AckStatus::Missing;
                self.ack_deadline = None;
                self.touch(now);
                Some(self.ack_diagnostic())
            }
            _ => None,
        }
    }

    pub fn ack_diagnostic(&self) -> DiagnosticsItem {
        match self.ack {
            AckStatus::Missing => DiagnosticsItem::new(
                ACK_DIAGNOSTIC,
                DiagnosticsLevel::Warning,
                "robot did not acknowledge the software e-stop command",
            ),
            AckStatus::Pending => {
                DiagnosticsItem::new(ACK_DIAGNOSTIC, DiagnosticsLevel::Ok, "waiting for robot acknowledgment")
            }
            _ => DiagnosticsItem::new(ACK_DIAGNOSTIC, DiagnosticsLevel::Ok, "acknowledged"),
        }
    }
}
