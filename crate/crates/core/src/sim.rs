//! Simulated tracked robot: unicycle base with four flippers, a manipulator
//! stub with "look at", gamepad mapping, synthetic cameras and the impaired
//! link model that carries envelopes between robot and console.
//!
//! [`RobotNode`] is the robot side of the wire protocol. It reacts to
//! console envelopes and emits telemetry, each output tagged with the robot
//! clock time at which it leaves the robot.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::estop::channels as estop_ch;
use crate::math::{atan2, clamp, cos, hypot, sin, wrap_angle, Vec3, PI};
use crate::snapshot::Raster;
use crate::telemetry::{
    channels as tel, BadDirection, BatteryState, DiagnosticsItem, DiagnosticsLevel, OperationMode, RobotPosture,
};
use crate::wire::{Envelope, ErrorCode, Kind};

pub const FLIPPER_MIN: f64 = -PI;
pub const FLIPPER_MAX: f64 = PI / 2.0;
pub const DEAD_ZONE: f64 = 0.1;
pub const DEFAULT_STANDOFF: f64 = 0.3;
/// Gamepad input older than this is treated as released sticks.
pub const COMMAND_TIMEOUT: f64 = 0.5;

/// Robot-side channels that are not telemetry.
pub mod channels {
    pub const GAMEPAD: &str = "robot/gamepad";
    pub const PING: &str = "robot/ping";
    pub const PONG: &str = "robot/pong";
    pub const PARAM: &str = "robot/param";
    pub const EE_POSE: &str = "robot/ee_pose";
    pub const LED_STATE: &str = "robot/led_state";
    pub const SET_MODE: &str = "robot/set_mode";
    pub const SET_CONTROL_MODE: &str = "robot/set_control_mode";
    pub const LOOK_AT: &str = "robot/look_at";
    pub const DRIVE_TO: &str = "robot/drive_to";
    pub const FLIPPERS: &str = "robot/flippers";
    pub const LED: &str = "robot/led";
    pub const WAIT: &str = "robot/wait";
    pub const ASK: &str = "robot/ask";
    /// Scenario hook: press or release a hardware e-stop.
    pub const HW_ESTOP: &str = "robot/hw_estop";
    pub const CONFIRMATION_REQUEST: &str = "robot/confirmation_request";
    /// Keep-alive for long-running service calls, `{request_id}`.
    pub const PROGRESS: &str = "robot/progress";
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("target outside the arm workspace")]
    Unreachable,
    #[error("invalid input: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub v_max: f64,
    pub omega_max: f64,
    /// Flipper angular rate at full trigger, rad/s.
    pub flipper_rate: f64,
    pub ee_linear_max: f64,
    pub ee_angular_max: f64,
    /// Gripper opening rate at full trigger, fraction per second.
    pub gripper_rate: f64,
    /// Arm workspace radius around the arm base.
    pub workspace_radius: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 1.5,
            flipper_rate: 1.0,
            ee_linear_max: 0.2,
            ee_angular_max: 0.8,
            gripper_rate: 1.0,
            workspace_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    #[default]
    Drive,
    DriveReversed,
    Manipulation,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GamepadFrame {
    pub left_stick: [f64; 2],
    pub right_stick: [f64; 2],
    pub triggers: [f64; 2],
    pub buttons: BTreeSet<String>,
}

/// Modifier button that makes the triggers lower the flippers.
pub const FLIPPER_DOWN_BUTTON: &str = "flipper_down";

impl GamepadFrame {
    pub fn validate(&self) -> Result<(), SimError> {
        let axes = self.left_stick.iter().chain(&self.right_stick);
        if axes.clone().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(SimError::Validation("stick axis outside [-1, 1]".into()));
        }
        if self.triggers.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(SimError::Validation("trigger outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Radial dead zone, rescaled so that full deflection stays full.
pub fn dead_zone(stick: [f64; 2]) -> [f64; 2] {
    let m = hypot(stick[0], stick[1]);
    if m < DEAD_ZONE {
        return [0.0, 0.0];
    }
    let k = (m.min(1.0) - DEAD_ZONE) / (1.0 - DEAD_ZONE) / m;
    [stick[0] * k, stick[1] * k]
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub v: f64,
    pub omega: f64,
    /// Front-left, front-right, rear-left, rear-right.
    pub flipper_rates: [f64; 4],
    /// End-effector twist in the arm base frame.
    pub ee_linear: Vec3,
    pub ee_yaw_rate: f64,
    pub gripper_rate: f64,
}

pub fn map_gamepad(frame: &GamepadFrame, mode: ControlMode, limits: &Limits) -> Command {
    let left = dead_zone(frame.left_stick);
    let right = dead_zone(frame.right_stick);
    let mut cmd = Command::default();
    match mode {
        ControlMode::Drive | ControlMode::DriveReversed => {
            let dir = if mode == ControlMode::DriveReversed { -1.0 } else { 1.0 };
            cmd.v = dir * left[1] * limits.v_max;
            cmd.omega = -left[0] * limits.omega_max;
            let sign = if frame.buttons.contains(FLIPPER_DOWN_BUTTON) {
                -1.0
            } else {
                1.0
            };
            let front = sign * frame.triggers[0] * limits.flipper_rate;
            let rear = sign * frame.triggers[1] * limits.flipper_rate;
            cmd.flipper_rates = [front, front, rear, rear];
        }
        ControlMode::Manipulation => {
            cmd.ee_linear = Vec3::new(left[1], -left[0], right[1]) * limits.ee_linear_max;
            cmd.ee_yaw_rate = -right[0] * limits.ee_angular_max;
            cmd.gripper_rate = (frame.triggers[1] - frame.triggers[0]) * limits.gripper_rate;
        }
    }
    cmd
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Terrain {
    #[default]
    Flat,
    /// Incline rising along +x between `start_x` and `end_x`.
    Ramp { start_x: f64, end_x: f64, angle: f64 },
}

impl Terrain {
    /// `(roll, pitch)` for a robot at `(x, y)` heading `yaw`; pitch is
    /// positive nose-up.
    pub fn attitude(&self, x: f64, _y: f64, yaw: f64) -> (f64, f64) {
        match *self {
            Terrain::Flat => (0.0, 0.0),
            Terrain::Ramp { start_x, end_x, angle } => {
                if x < start_x || x > end_x {
                    return (0.0, 0.0);
                }
                let t = libm::tan(angle);
                (libm::atan(t * sin(yaw)), libm::atan(t * cos(yaw)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EePose {
    pub position: Vec3,
    /// Optical axis.
    pub axis: Vec3,
    pub up: Vec3,
}

impl Default for EePose {
    fn default() -> Self {
        Self {
            position: Vec3::new(0.4, 0.0, 0.4),
            axis: Vec3::X,
            up: Vec3::Z,
        }
    }
}

/// Pose that looks at `point` along `direction` from `standoff` away, with
/// camera-up as close to world +z as possible (world +x when looking
/// straight up or down). Coordinates are in the arm base frame.
pub fn look_at(point: Vec3, direction: Vec3, standoff: f64, workspace_radius: f64) -> Result<EePose, SimError> {
    if !point.is_finite() || !(standoff >= 0.0) {
        return Err(SimError::Validation("bad target".into()));
    }
    if (direction.norm() - 1.0).abs() > 1e-6 {
        return Err(SimError::Validation("direction must be a unit vector".into()));
    }
    let d = direction.normalized().unwrap_or(Vec3::X);
    let position = point - d * standoff;
    if position.norm() > workspace_radius {
        return Err(SimError::Unreachable);
    }
    let up = (Vec3::Z - d * Vec3::Z.dot(d))
        .normalized()
        .filter(|_| d.cross(Vec3::Z).norm() > 1e-9)
        .or_else(|| (Vec3::X - d * Vec3::X.dot(d)).normalized())
        .unwrap_or(Vec3::X);
    Ok(EePose { position, axis: d, up })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRobot {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
    pub flipper_angles: [f64; 4],
    pub ee: EePose,
    /// 0 closed, 1 open.
    pub gripper: f64,
    pub battery: BatteryState,
    pub estop_latched: bool,
    pub mode: OperationMode,
    pub control_mode: ControlMode,
    pub terrain: Terrain,
}

/// Battery fraction drained per unit of `|v| + sum |flipper rate|` per second.
pub const DRAIN_RATE: f64 = 2e-4;

impl SimRobot {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            roll: 0.0,
            pitch: 0.0,
            flipper_angles: [0.0; 4],
            ee: EePose::default(),
            gripper: 0.0,
            battery: BatteryState::default(),
            estop_latched: false,
            mode: OperationMode::Teleoperation,
            control_mode: ControlMode::Drive,
            terrain: Terrain::Flat,
        }
    }

    pub fn posture(&self) -> RobotPosture {
        RobotPosture {
            roll: self.roll,
            pitch: self.pitch,
            flipper_angles: self.flipper_angles,
        }
    }

    /// Integrates one step. `dt` outside `(0, 0.1]` is ignored.
    pub fn step(&mut self, cmd: &Command, dt: f64, limits: &Limits) {
        if !(dt > 0.0 && dt <= 0.1 + 1e-12) {
            return;
        }
        let cmd = if self.estop_latched { Command::default() } else { *cmd };
        self.x += cmd.v * cos(self.yaw) * dt;
        self.y += cmd.v * sin(self.yaw) * dt;
        self.yaw = wrap_angle(self.yaw + cmd.omega * dt);
        let mut flipper_motion = 0.0;
        for (a, r) in self.flipper_angles.iter_mut().zip(cmd.flipper_rates) {
            let next = clamp(*a + r * dt, FLIPPER_MIN, FLIPPER_MAX);
            flipper_motion += (next - *a).abs() / dt;
            *a = next;
        }
        let (roll, pitch) = self.terrain.attitude(self.x, self.y, self.yaw);
        self.roll = roll;
        self.pitch = pitch;

        let mut p = self.ee.position + cmd.ee_linear * dt;
        let r = p.norm();
        if r > limits.workspace_radius {
            p = p * (limits.workspace_radius / r);
        }
        self.ee.position = p;
        if cmd.ee_yaw_rate != 0.0 {
            self.ee.axis = self.ee.axis.rotate_z(cmd.ee_yaw_rate * dt);
            self.ee.up = self.ee.up.rotate_z(cmd.ee_yaw_rate * dt);
        }
        self.gripper = clamp(self.gripper + cmd.gripper_rate * dt, 0.0, 1.0);

        let drain = DRAIN_RATE * (cmd.v.abs() + flipper_motion) * dt;
        let pct = (self.battery.percentage - drain).max(0.0);
        self.battery = BatteryState::new(pct, 21.0 + 4.2 * pct);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    pub base_latency: f64,
    pub jitter: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            base_latency: 0.0,
            jitter: 0.0,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.base_latency >= 0.0 && self.jitter >= 0.0 && (0.0..=1.0).contains(&self.drop_probability);
        if ok {
            Ok(())
        } else {
            Err(SimError::Validation("link parameters out of range".into()))
        }
    }
}

/// One direction of an impaired link.
#[derive(Debug, Clone)]
pub struct Link {
    pub model: LinkModel,
    rng: ChaCha8Rng,
}

impl Link {
    pub fn new(model: LinkModel) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
        }
    }

    /// Delivery time of a message sent at `now`, or `None` when dropped.
    /// Two draws per call keep traces aligned across parameter changes.
    pub fn transmit(&mut self, now: f64) -> Option<f64> {
        let drop_draw: f64 = self.rng.random();
        let jitter_draw: f64 = self.rng.random();
        if drop_draw < self.model.drop_probability {
            return None;
        }
        let offset = self.model.jitter * (2.0 * jitter_draw - 1.0);
        Some(now + (self.model.base_latency + offset).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCamera {
    pub id: String,
    pub rate_hz: f64,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
}

fn default_width() -> u32 {
    160
}

fn default_height() -> u32 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSensor {
    pub name: String,
    pub unit: String,
    pub base: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_direction")]
    pub direction: BadDirection,
}

fn default_period() -> f64 {
    20.0
}

fn default_direction() -> BadDirection {
    BadDirection::HighIsBad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioEvent {
    HardwareEstop { at: f64, name: String, pressed: bool },
    SetMode { at: f64, mode: OperationMode },
}

impl ScenarioEvent {
    pub fn at(&self) -> f64 {
        match self {
            ScenarioEvent::HardwareEstop { at, .. } | ScenarioEvent::SetMode { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    /// `(x, y, yaw)`.
    pub start: [f64; 3],
    pub terrain: Terrain,
    pub cameras: Vec<SimCamera>,
    pub hardware_estops: Vec<String>,
    pub sensors: Vec<SimSensor>,
    /// Robot clock minus console clock, seconds.
    pub clock_skew: f64,
    pub telemetry_rate: f64,
    pub limits: Limits,
    pub events: Vec<ScenarioEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            start: [0.0, 0.0, 0.0],
            terrain: Terrain::Flat,
            cameras: alloc::vec![
                SimCamera {
                    id: "front".into(),
                    rate_hz: 10.0,
                    width: 160,
                    height: 120
                },
                SimCamera {
                    id: "rear".into(),
                    rate_hz: 10.0,
                    width: 160,
                    height: 120
                },
                SimCamera {
                    id: "gripper".into(),
                    rate_hz: 5.0,
                    width: 160,
                    height: 120
                },
            ],
            hardware_estops: alloc::vec!["hw_base".into(), "hw_remote".into()],
            sensors: alloc::vec![SimSensor {
                name: "co2".into(),
                unit: "ppm".into(),
                base: 600.0,
                amplitude: 300.0,
                period: 30.0,
                direction: BadDirection::HighIsBad,
            }],
            clock_skew: 0.0,
            telemetry_rate: 10.0,
            limits: Limits::default(),
            events: Vec::new(),
        }
    }
}

/// Draws a frame whose first rows encode `index` (32 bits) and the send
/// stamp in milliseconds (40 bits) as 2-pixel black/white cells.
pub fn synthetic_frame(index: u64, stamp: f64, width: u32, height: u32) -> Raster {
    let mut r = Raster::new(width, height);
    let shift = (index % width.max(1) as u64) as u32;
    for y in 0..height {
        for x in 0..width {
            let g = ((x + shift) * 255 / width.max(1)) as u8;
            let b = (y * 255 / height.max(1)) as u8;
            r.put(x, y, [g, 96, b, 255]);
        }
    }
    let ms = libm::round(stamp * 1000.0).max(0.0) as u64;
    draw_bits(&mut r, 0, index, 32);
    draw_bits(&mut r, 4, ms, 40);
    r
}

fn draw_bits(r: &mut Raster, row: u32, value: u64, bits: u32) {
    for bit in 0..bits {
        let on = (value >> bit) & 1 == 1;
        let c = if on { 255 } else { 0 };
        for dy in 0..4 {
            for dx in 0..2 {
                r.put(bit * 2 + dx, row + dy, [c, c, c, 255]);
            }
        }
    }
}

/// Reads back `(index, stamp_ms)` from a [`synthetic_frame`].
pub fn decode_frame_marks(r: &Raster) -> Option<(u64, u64)> {
    if r.width < 80 || r.height < 8 {
        return None;
    }
    let read = |row: u32, bits: u32| -> u64 {
        (0..bits)
            .filter(|b| r.pixel(b * 2, row + 1)[0] > 127)
            .fold(0u64, |acc, b| acc | 1 << b)
    };
    Some((read(0, 32), read(4, 40)))
}

#[derive(Debug, Clone, PartialEq)]
enum Job {
    Immediate,
    Wait { until: f64 },
    Drive { x: f64, y: f64, tolerance: f64 },
    Flippers { front: f64, rear: f64 },
    LookAt { target: EePose, until: f64 },
    Ask,
}

#[derive(Debug, Clone)]
struct Pending {
    request: Envelope,
    job: Job,
}

/// The robot end of the protocol, driven by explicit clock ticks.
#[derive(Debug, Clone)]
pub struct RobotNode {
    pub robot: SimRobot,
    pub scenario: Scenario,
    gamepad: Option<(GamepadFrame, f64)>,
    software_latch: bool,
    hardware: BTreeMap<String, bool>,
    led: bool,
    params: BTreeMap<String, Value>,
    pending: Vec<Pending>,
    camera_frames: Vec<u64>,
    telemetry_count: u64,
    slow_count: u64,
    last_step: Option<f64>,
    start: Option<f64>,
    events_done: usize,
    outbox: Vec<(f64, Envelope)>,
    applied: Command,
}

/// Seconds between slow telemetry (mode, diagnostics, sensors).
pub const SLOW_PERIOD: f64 = 1.0;

impl RobotNode {
    pub fn new(mut scenario: Scenario) -> Self {
        let [x, y, yaw] = scenario.start;
        let mut robot = SimRobot::new(x, y, yaw);
        robot.terrain = scenario.terrain;
        scenario.events.sort_by(|a, b| a.at().total_cmp(&b.at()));
        let hardware = scenario.hardware_estops.iter().map(|n| (n.clone(), false)).collect();
        let camera_frames = alloc::vec![0; scenario.cameras.len()];
        Self {
            robot,
            scenario,
            gamepad: None,
            software_latch: false,
            hardware,
            led: false,
            params: BTreeMap::new(),
            pending: Vec::new(),
            camera_frames,
            telemetry_count: 0,
            slow_count: 0,
            last_step: None,
            start: None,
            events_done: 0,
            outbox: Vec::new(),
            applied: Command::default(),
        }
    }

    /// Robot clock reading at console time `now`.
    pub fn clock(&self, now: f64) -> f64 {
        now + self.scenario.clock_skew
    }

    /// Outputs with the console time at which they leave the robot.
    pub fn drain(&mut self) -> Vec<(f64, Envelope)> {
        core::mem::take(&mut self.outbox)
    }

    pub fn led(&self) -> bool {
        self.led
    }

    pub fn params(&self) -> &BTreeMap<String, Value> {
        &self.params
    }

    pub fn hardware_estops(&self) -> &BTreeMap<String, bool> {
        &self.hardware
    }

    /// Command applied during the last physics step.
    pub fn applied_command(&self) -> Command {
        self.applied
    }

    pub fn software_latched(&self) -> bool {
        self.software_latch
    }

    fn send(&mut self, at: f64, env: Envelope) {
        let t = self.clock(at);
        self.outbox.push((at, env.stamped(t, t)));
    }

    fn publish(&mut self, at: f64, channel: &str, payload: Value) {
        self.send(at, Envelope::publish(channel, payload));
    }

    fn update_latch(&mut self) {
        self.robot.estop_latched = self.software_latch || self.hardware.values().any(|p| *p);
    }

    pub fn set_hardware_estop(&mut self, name: &str, pressed: bool, now: f64) -> bool {
        let Some(slot) = self.hardware.get_mut(name) else {
            return false;
        };
        *slot = pressed;
        self.update_latch();
        self.publish(now, estop_ch::ROBOT_HW, json!({ "name": name, "pressed": pressed }));
        true
    }

    /// Handles one envelope from the console.
    pub fn receive(&mut self, env: &Envelope, now: f64) {
        match env.kind {
            Kind::Publish => self.on_publish(env, now),
            Kind::ServiceRequest => self.on_request(env, now),
            _ => {}
        }
    }

    fn on_publish(&mut self, env: &Envelope, now: f64) {
        let p = &env.payload;
        match env.channel.as_str() {
            channels::GAMEPAD => {
                if let Ok(frame) = serde_json::from_value::<GamepadFrame>(p.clone()) {
                    if frame.validate().is_ok() {
                        self.gamepad = Some((frame, now));
                    }
                }
            }
            estop_ch::ROBOT_CMD => {
                let engage = p.get("engage").and_then(Value::as_bool).unwrap_or(true);
                self.software_latch = engage;
                self.update_latch();
                if engage {
                    self.pending_fail_all(now, "e-stop engaged");
                }
                let seq = p.get("seq").cloned().unwrap_or(Value::Null);
                self.publish(now, estop_ch::ROBOT_ACK, json!({ "seq": seq }));
            }
            channels::PING => {
                let t = self.clock(now);
                let mut reply = p.clone();
                if let Value::Object(m) = &mut reply {
                    m.insert("remote".into(), Value::from(t));
                }
                self.publish(now, channels::PONG, reply);
            }
            channels::PARAM => {
                if let (Some(path), Some(v)) = (p.get("path").and_then(Value::as_str), p.get("value")) {
                    self.params.insert(path.to_string(), v.clone());
                }
            }
            crate::action::channels::ROBOT_CANCEL => {
                if let Some(id) = p.get("request_id").and_then(Value::as_str) {
                    if let Some(i) = self.pending.iter().position(|x| x.request.id.as_deref() == Some(id)) {
                        let job = self.pending.remove(i);
                        let resp = Envelope::response_to(
                            &job.request,
                            json!({ "success": false, "canceled": true, "message": "canceled" }),
                        );
                        self.send(now, resp);
                    }
                }
            }
            crate::mission::channels::CONFIRMATION_ANSWER => {
                let answer = p.get("answer").and_then(Value::as_str).unwrap_or("").to_string();
                if let Some(i) = self.pending.iter().position(|x| x.job == Job::Ask) {
                    let job = self.pending.remove(i);
                    let resp = Envelope::response_to(&job.request, json!({ "success": true, "message": answer }));
                    self.send(now, resp);
                }
            }
            _ => {}
        }
    }

    fn pending_fail_all(&mut self, now: f64, why: &str) {
        let moving: Vec<Pending> = self
            .pending
            .iter()
            .filter(|p| matches!(p.job, Job::Drive { .. } | Job::Flippers { .. } | Job::LookAt { .. }))
            .cloned()
            .collect();
        self.pending
            .retain(|p| !matches!(p.job, Job::Drive { .. } | Job::Flippers { .. } | Job::LookAt { .. }));
        for p in moving {
            let resp = Envelope::response_to(&p.request, json!({ "success": false, "message": why }));
            self.send(now, resp);
        }
    }

    fn on_request(&mut self, env: &Envelope, now: f64) {
        match self.start_job(env, now) {
            Ok(Job::Immediate) => {
                let resp = Envelope::response_to(env, json!({ "success": true, "message": "done" }));
                self.send(now, resp);
            }
            Ok(job) => self.pending.push(Pending {
                request: env.clone(),
                job,
            }),
            Err((code, msg)) => {
                let resp = if matches!(
                    code,
                    ErrorCode::Validation | ErrorCode::NotFound | ErrorCode::Unreachable
                ) {
                    Envelope::error_to(env, code, &msg)
                } else {
                    Envelope::response_to(env, json!({ "success": false, "message": msg }))
                };
                self.send(now, resp);
            }
        }
    }

    fn start_job(&mut self, env: &Envelope, now: f64) -> Result<Job, (ErrorCode, String)> {
        let p = &env.payload;
        let bad = |m: &str| (ErrorCode::Validation, m.to_string());
        let num = |k: &str| p.get(k).and_then(Value::as_f64);
        let vec3 = |k: &str| -> Option<Vec3> {
            let a = p.get(k)?.as_array()?;
            if a.len() != 3 {
                return None;
            }
            Some(Vec3::new(a[0].as_f64()?, a[1].as_f64()?, a[2].as_f64()?))
        };
        let latched = self.robot.estop_latched;
        match env.channel.as_str() {
            channels::SET_MODE => {
                let mode: OperationMode = p
                    .get("mode")
                    .and_then(|m| serde_json::from_value(m.clone()).ok())
                    .ok_or_else(|| bad("unknown mode"))?;
                self.robot.mode = mode;
                self.publish(now, tel::MODE, json!({ "mode": mode }));
                Ok(Job::Immediate)
            }
            channels::SET_CONTROL_MODE => {
                let mode: ControlMode = p
                    .get("mode")
                    .and_then(|m| serde_json::from_value(m.clone()).ok())
                    .ok_or_else(|| bad("unknown control mode"))?;
                self.robot.control_mode = mode;
                self.publish(now, tel::CONTROL_MODE, json!({ "mode": mode }));
                Ok(Job::Immediate)
            }
            channels::LED => {
                let on = p
                    .get("on")
                    .and_then(Value::as_bool)
                    .ok_or_else(|| bad("`on` must be a boolean"))?;
                self.led = on;
                self.publish(now, channels::LED_STATE, json!({ "on": on }));
                Ok(Job::Immediate)
            }
            channels::WAIT => {
                let s = num("seconds")
                    .filter(|s| *s >= 0.0)
                    .ok_or_else(|| bad("`seconds` must be >= 0"))?;
                Ok(Job::Wait { until: now + s })
            }
            channels::DRIVE_TO => {
                let (Some(x), Some(y)) = (num("x"), num("y")) else {
                    return Err(bad("`x` and `y` are required"));
                };
                if latched {
                    return Err((ErrorCode::State, "e-stop engaged".into()));
                }
                Ok(Job::Drive {
                    x,
                    y,
                    tolerance: num("tolerance").unwrap_or(0.05),
                })
            }
            channels::FLIPPERS => {
                let front = clamp(
                    num("front").unwrap_or(self.robot.flipper_angles[0]),
                    FLIPPER_MIN,
                    FLIPPER_MAX,
                );
                let rear = clamp(
                    num("rear").unwrap_or(self.robot.flipper_angles[2]),
                    FLIPPER_MIN,
                    FLIPPER_MAX,
                );
                if latched {
                    return Err((ErrorCode::State, "e-stop engaged".into()));
                }
                Ok(Job::Flippers { front, rear })
            }
            channels::LOOK_AT => {
                let point = vec3("point").ok_or_else(|| bad("`point` must be [x, y, z]"))?;
                let direction = vec3("direction").ok_or_else(|| bad("`direction` must be [x, y, z]"))?;
                let standoff = num("standoff").unwrap_or(DEFAULT_STANDOFF);
                if latched {
                    return Err((ErrorCode::State, "e-stop engaged".into()));
                }
                match look_at(point, direction, standoff, self.scenario.limits.workspace_radius) {
                    Ok(target) => Ok(Job::LookAt {
                        target,
                        until: now + 1.0,
                    }),
                    Err(SimError::Unreachable) => {
                        Err((ErrorCode::Unreachable, "target outside the arm workspace".into()))
                    }
                    Err(SimError::Validation(m)) => Err((ErrorCode::Validation, m)),
                }
            }
            channels::ASK => {
                let prompt = p
                    .get("prompt")
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("`prompt` is required"))?;
                let options = p.get("options").cloned().unwrap_or(json!(["ok"]));
                let mut req = json!({ "prompt": prompt, "options": options });
                if let Some(d) = num("deadline") {
                    req["deadline"] = Value::from(d);
                }
                self.publish(now, channels::CONFIRMATION_REQUEST, req);
                Ok(Job::Ask)
            }
            channels::HW_ESTOP => {
                let name = p
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("`name` is required"))?;
                let pressed = p.get("pressed").and_then(Value::as_bool).unwrap_or(true);
                let name = name.to_string();
                if !self.set_hardware_estop(&name, pressed, now) {
                    return Err((ErrorCode::NotFound, alloc::format!("no hardware e-stop `{name}`")));
                }
                Ok(Job::Immediate)
            }
            other => Err((ErrorCode::NotFound, alloc::format!("robot has no service `{other}`"))),
        }
    }

    /// Command from active jobs, falling back to the gamepad.
    fn command(&mut self, now: f64) -> Command {
        let limits = self.scenario.limits;
        let mut cmd = match &self.gamepad {
            Some((frame, at)) if now - at <= COMMAND_TIMEOUT => map_gamepad(frame, self.robot.control_mode, &limits),
            _ => Command::default(),
        };
        for p in &self.pending {
            match p.job {
                Job::Drive { x, y, .. } => {
                    let (dx, dy) = (x - self.robot.x, y - self.robot.y);
                    let err = wrap_angle(atan2(dy, dx) - self.robot.yaw);
                    cmd.omega = clamp(2.0 * err, -limits.omega_max, limits.omega_max);
                    cmd.v = clamp(hypot(dx, dy), 0.0, limits.v_max) * cos(err).max(0.0);
                }
                Job::Flippers { front, rear } => {
                    let a = self.robot.flipper_angles;
                    let rate =
                        |target: f64, cur: f64| clamp((target - cur) * 5.0, -limits.flipper_rate, limits.flipper_rate);
                    cmd.flipper_rates = [rate(front, a[0]), rate(front, a[1]), rate(rear, a[2]), rate(rear, a[3])];
                }
                _ => {}
            }
        }
        cmd
    }

    fn finish_jobs(&mut self, now: f64) {
        let robot = &self.robot;
        let mut done = Vec::new();
        self.pending.retain(|p| {
            let finished = match p.job {
                Job::Wait { until } => now >= until,
                Job::Drive { x, y, tolerance } => hypot(x - robot.x, y - robot.y) <= tolerance,
                Job::Flippers { front, rear } => {
                    let a = robot.flipper_angles;
                    (a[0] - front).abs() < 1e-3 && (a[2] - rear).abs() < 1e-3
                }
                Job::LookAt { until, .. } => now >= until,
                _ => false,
            };
            if finished {
                done.push(p.clone());
            }
            !finished
        });
        for p in done {
            if let Job::LookAt { target, .. } = p.job {
                self.robot.ee = target;
            }
            let resp = Envelope::response_to(&p.request, json!({ "success": true, "message": "done" }));
            self.send(now, resp);
        }
    }

    /// Advances the robot to console time `now` and emits due telemetry.
    pub fn tick(&mut self, now: f64) {
        let start = *self.start.get_or_insert(now);
        while self.events_done < self.scenario.events.len()
            && self.scenario.events[self.events_done].at() <= now - start
        {
            let ev = self.scenario.events[self.events_done].clone();
            self.events_done += 1;
            match ev {
                ScenarioEvent::HardwareEstop { name, pressed, .. } => {
                    self.set_hardware_estop(&name, pressed, now);
                }
                ScenarioEvent::SetMode { mode, .. } => {
                    self.robot.mode = mode;
                    self.publish(now, tel::MODE, json!({ "mode": mode }));
                }
            }
        }

        if let Some(last) = self.last_step {
            let mut remaining = now - last;
            let limits = self.scenario.limits;
            while remaining > 1e-12 {
                let dt = remaining.min(0.1);
                let cmd = self.command(now);
                self.robot.step(&cmd, dt, &limits);
                self.applied = if self.robot.estop_latched {
                    Command::default()
                } else {
                    cmd
                };
                remaining -= dt;
            }
        }
        self.last_step = Some(now);
        self.finish_jobs(now);

        let elapsed = now - start;
        let eps = 1e-9;
        let rate = self.scenario.telemetry_rate.max(0.1);
        while (self.telemetry_count as f64) / rate <= elapsed + eps {
            self.telemetry_count += 1;
            self.fast_telemetry(now);
        }
        while (self.slow_count as f64) * SLOW_PERIOD <= elapsed + eps {
            self.slow_count += 1;
            self.slow_telemetry(now);
        }
        for i in 0..self.scenario.cameras.len() {
            let cam = self.scenario.cameras[i].clone();
            if !(cam.rate_hz > 0.0) {
                continue;
            }
            loop {
                let k = self.camera_frames[i];
                let due = start + k as f64 / cam.rate_hz;
                if due > now + eps {
                    break;
                }
                self.camera_frames[i] += 1;
                let stamp = self.clock(due);
                let payload = json!({
                    "index": k,
                    "stamp": stamp,
                    "width": cam.width,
                    "height": cam.height,
                    "encoding": "synthetic",
                });
                self.publish(due, &tel::camera_frame(&cam.id), payload);
            }
        }
    }

    fn fast_telemetry(&mut self, now: f64) {
        let r = &self.robot;
        let pose = json!({ "x": r.x, "y": r.y, "yaw": r.yaw });
        let posture = serde_json::to_value(r.posture()).unwrap_or(Value::Null);
        let ee = json!({ "pose": r.ee, "gripper": r.gripper });
        self.publish(now, tel::POSE, pose);
        self.publish(now, tel::POSTURE, posture);
        self.publish(now, channels::EE_POSE, ee);
    }

    fn slow_telemetry(&mut self, now: f64) {
        let r = self.robot.clone();
        self.publish(now, tel::MODE, json!({ "mode": r.mode }));
        self.publish(now, tel::CONTROL_MODE, json!({ "mode": r.control_mode }));
        self.publish(
            now,
            tel::BATTERY,
            serde_json::to_value(r.battery).unwrap_or(Value::Null),
        );
        self.publish(now, channels::LED_STATE, json!({ "on": self.led }));
        let mut diag = alloc::vec![DiagnosticsItem::new("drive", DiagnosticsLevel::Ok, "nominal")];
        diag.push(if r.battery.percentage < 0.2 {
            DiagnosticsItem::new("battery", DiagnosticsLevel::Warning, "battery low")
        } else {
            DiagnosticsItem::new("battery", DiagnosticsLevel::Ok, "nominal")
        });
        if r.estop_latched {
            diag.push(DiagnosticsItem::new(
                "estop",
                DiagnosticsLevel::Error,
                "e-stop latched, motion disabled",
            ));
        } else {
            diag.push(DiagnosticsItem::new("estop", DiagnosticsLevel::Ok, "released"));
        }
        self.publish(now, tel::DIAGNOSTICS, json!({ "items": diag }));
        let t = self.clock(now);
        for s in self.scenario.sensors.clone() {
            let phase = if s.period > 0.0 { 2.0 * PI * t / s.period } else { 0.0 };
            let value = s.base + s.amplitude * sin(phase);
            self.publish(now, &tel::sensor(&s.name), json!({ "value": value, "unit": s.unit }));
        }
        let ids: Vec<Value> = self
            .pending
            .iter()
            .filter_map(|p| p.request.id.clone())
            .map(Value::from)
            .collect();
        for id in ids {
            self.publish(now, channels::PROGRESS, json!({ "request_id": id }));
        }
        let hw: Vec<(String, bool)> = self.hardware.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for (name, pressed) in hw {
            self.publish(now, estop_ch::ROBOT_HW, json!({ "name": name, "pressed": pressed }));
        }
    }
}
