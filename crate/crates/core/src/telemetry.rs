//! Robot status and state values shown in the dashboard.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Channel names published by the robot.
pub mod channels {
    pub const MODE: &str = "robot/mode";
    pub const DIAGNOSTICS: &str = "robot/diagnostics";
    pub const BATTERY: &str = "robot/battery";
    pub const CONNECTION: &str = "robot/connection";
    pub const POSTURE: &str = "robot/posture";
    pub const POSE: &str = "robot/pose";
    pub const CONTROL_MODE: &str = "robot/control_mode";
    pub const SENSOR_PREFIX: &str = "robot/sensor/";

    pub fn sensor(name: &str) -> alloc::string::String {
        alloc::format!("{SENSOR_PREFIX}{name}")
    }

    pub fn camera_frame(id: &str) -> alloc::string::String {
        alloc::format!("camera/{id}/frame")
    }

    pub fn camera_stats(id: &str) -> alloc::string::String {
        alloc::format!("camera/{id}/stats")
    }

    /// Camera id of a `camera/<id>/frame` channel.
    pub fn camera_of(channel: &str) -> Option<&str> {
        channel
            .strip_prefix("camera/")?
            .strip_suffix("/frame")
            .filter(|id| !id.is_empty() && !id.contains('/'))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TelemetryError {
    #[error("sensor `{0}`: danger threshold must lie beyond the warning threshold")]
    ThresholdOrder(String),
    #[error("posture out of joint limits: {0}")]
    JointLimit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OperationMode {
    Autonomous,
    #[default]
    Teleoperation,
    Manipulation,
    Safe,
}

impl OperationMode {
    pub const ALL: [OperationMode; 4] = [
        OperationMode::Autonomous,
        OperationMode::Teleoperation,
        OperationMode::Manipulation,
        OperationMode::Safe,
    ];
}

/// Accent colour and label the dashboard uses for one operation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Theme {
    pub accent_color: &'static str,
    pub label: &'static str,
}

/// Colour theme per operation mode, taken from a colour-blind-safe palette.
pub fn mode_theme(mode: OperationMode) -> Theme {
    match mode {
        OperationMode::Autonomous => Theme {
            accent_color: "#0072B2",
            label: "Autonomous",
        },
        OperationMode::Teleoperation => Theme {
            accent_color: "#E69F00",
            label: "Teleoperation",
        },
        OperationMode::Manipulation => Theme {
            accent_color: "#D55E00",
            label: "Manipulation",
        },
        OperationMode::Safe => Theme {
            accent_color: "#009E73",
            label: "Safe",
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum DiagnosticsLevel {
    #[default]
    Ok,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsItem {
    pub name: String,
    pub level: DiagnosticsLevel,
    pub message: String,
}

impl DiagnosticsItem {
    pub fn new(name: &str, level: DiagnosticsLevel, message: &str) -> Self {
        Self {
            name: name.into(),
            level,
            message: message.into(),
        }
    }
}

/// Maximum severity over `items`; `Ok` when empty.
pub fn aggregate_diagnostics(items: &[DiagnosticsItem]) -> DiagnosticsLevel {
    items.iter().map(|i| i.level).max().unwrap_or(DiagnosticsLevel::Ok)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub percentage: f64,
    pub voltage: f64,
}

impl BatteryState {
    pub fn new(percentage: f64, voltage: f64) -> Self {
        Self {
            percentage: crate::math::clamp(percentage, 0.0, 1.0),
            voltage: voltage.max(0.0),
        }
    }
}

impl Default for BatteryState {
    fn default() -> Self {
        Self::new(1.0, 25.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinkQuality {
    Good,
    Degraded,
    #[default]
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ConnectionState {
    pub rtt: f64,
    pub loss_fraction: f64,
    /// Console monotonic time of the last message heard from the robot.
    pub last_heard: f64,
    pub quality: LinkQuality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadDirection {
    HighIsBad,
    LowIsBad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Safe,
    Warning,
    Danger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub name: String,
    pub value: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warn_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub danger_threshold: Option<f64>,
    pub direction: BadDirection,
}

impl SensorReading {
    /// Danger must lie strictly beyond warn in the bad direction when both
    /// are present.
    pub fn check_thresholds(&self) -> Result<(), TelemetryError> {
        if let (Some(w), Some(d)) = (self.warn_threshold, self.danger_threshold) {
            let ok = match self.direction {
                BadDirection::HighIsBad => d > w,
                BadDirection::LowIsBad => d < w,
            };
            if !ok {
                return Err(TelemetryError::ThresholdOrder(self.name.clone()));
            }
        }
        Ok(())
    }

    pub fn classify(&self) -> Result<Classification, TelemetryError> {
        self.check_thresholds()?;
        let reached = |t: Option<f64>| {
            t.is_some_and(|t| match self.direction {
                BadDirection::HighIsBad => self.value >= t,
                BadDirection::LowIsBad => self.value <= t,
            })
        };
        Ok(if reached(self.danger_threshold) {
            Classification::Danger
        } else if reached(self.warn_threshold) {
            Classification::Warning
        } else {
            Classification::Safe
        })
    }
}

/// Flipper order: front-left, front-right, rear-left, rear-right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RobotPosture {
    pub roll: f64,
    pub pitch: f64,
    pub flipper_angles: [f64; 4],
}

impl RobotPosture {
    pub fn check_limits(&self, lower: f64, upper: f64) -> Result<(), TelemetryError> {
        for (i, a) in self.flipper_angles.iter().enumerate() {
            if !(lower..=upper).contains(a) {
                return Err(TelemetryError::JointLimit(alloc::format!(
                    "flipper {i} at {a} rad outside [{lower}, {upper}]"
                )));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_STATS_WINDOW: usize = 30;

/// Per-camera frame-rate and latency over a sliding window of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamStats {
    capacity: usize,
    /// `(sender stamp, receive time)` in arrival order.
    window: VecDeque<(f64, f64)>,
    pub fps: f64,
    pub latency: f64,
    pub frames: u64,
}

impl Default for StreamStats {
    fn default() -> Self {
        Self::new(DEFAULT_STATS_WINDOW)
    }
}

impl StreamStats {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(2),
            window: VecDeque::new(),
            fps: 0.0,
            latency: 0.0,
            frames: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn window(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.window.iter().copied()
    }

    /// Receive time of the newest frame.
    pub fn last_receive(&self) -> Option<f64> {
        self.window.back().map(|w| w.1)
    }

    /// Records one frame.
    ///
    /// `clock_offset` maps the sender's stamp clock onto the receiver's
    /// monotonic clock: `receiver_time = sender_stamp + clock_offset`.
    pub fn update(&mut self, frame_stamp: f64, receive_mono: f64, clock_offset: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back((frame_stamp, receive_mono));
        self.frames += 1;

        self.fps = match (self.window.front(), self.window.back()) {
            (Some(first), Some(last)) if self.window.len() >= 2 && last.1 > first.1 => {
                (self.window.len() - 1) as f64 / (last.1 - first.1)
            }
            _ => 0.0,
        };
        self.latency = (receive_mono - (frame_stamp + clock_offset)).max(0.0);
    }

    pub fn summary(&self) -> StreamSummary {
        StreamSummary {
            fps: self.fps,
            latency: self.latency,
            frames: self.frames,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub fps: f64,
    pub latency: f64,
    pub frames: u64,
}

/// Two-way clock handshake: the console sends at `sent`, the robot stamps
/// `remote`, the reply arrives at `received`. Returns `(offset, rtt)` with
/// `local = remote + offset`, exact for symmetric one-way delays.
pub fn clock_offset(sent: f64, remote: f64, received: f64) -> (f64, f64) {
    let rtt = (received - sent).max(0.0);
    ((sent + received) / 2.0 - remote, rtt)
}

/// Diagnostics item list that replaces entries by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBoard {
    items: Vec<DiagnosticsItem>,
}

impl DiagnosticsBoard {
    pub fn set(&mut self, item: DiagnosticsItem) -> bool {
        match self.items.iter_mut().find(|i| i.name == item.name) {
            Some(existing) if *existing == item => false,
            Some(existing) => {
                *existing = item;
                true
            }
            None => {
                self.items.push(item);
                true
            }
        }
    }

    pub fn items(&self) -> &[DiagnosticsItem] {
        &self.items
    }

    pub fn level(&self) -> DiagnosticsLevel {
        aggregate_diagnostics(&self.items)
    }
}
