//! The gateway state machine.
//!
//! [`Console`] owns the action registry, the execution manager, mission
//! control, the e-stop manager, the configuration and all telemetry derived
//! state. Hosts feed it client envelopes, robot envelopes and clock ticks in
//! one ordered stream and forward whatever it emits. It never blocks and
//! never reads a clock on its own.
//!
//! Subscribing to a state channel first delivers the current state on that
//! channel to the new subscriber (the snapshot), expressed as the same
//! messages later changes are broadcast as (the deltas).

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{
    self, ActionId, ActionRegistry, ActionSpec, ExecEnv, ExecEvent, ExecId, ExecState, Executor, Outbound,
};
use crate::config::{CameraPair, ConsoleConfig, SettingsParameter};
use crate::estop::{self, EStopManager};
use crate::mission::{self, Command, ConfirmationRequest, Mission, MissionControl, MissionState, TaskRunner};
use crate::sim::channels as robot_ch;
use crate::telemetry::{
    self, channels as tel, clock_offset, mode_theme, ConnectionState, DiagnosticsBoard, DiagnosticsItem,
    DiagnosticsLevel, LinkQuality, OperationMode, StreamStats,
};
use crate::view::{self, preset_pose, Preset, RobotPose, ViewPose, ViewState};
use crate::wire::{ChannelRegistry, ConnId, Envelope, ErrorCode, Kind};

pub mod channels {
    pub const SESSION: &str = "session/info";
    pub const LOG: &str = "console/log";
    pub const SETTINGS_LIST: &str = "settings/list";
    pub const SETTINGS_SET: &str = "settings/set";
    pub const SETTINGS_UPDATES: &str = "settings/updates";
    pub const CAMERAS_LIST: &str = "cameras/list";
    pub const CAMERAS_ADD: &str = "cameras/add";
    pub const CAMERAS_REMOVE: &str = "cameras/remove";
    pub const CAMERAS_CHANNELS: &str = "cameras/channels";
    /// Service with `op` = `list`, `save`, `select` or `delete`.
    pub const CAMERA_PAIRS: &str = "cameras/pairs";
    /// Saved pairs plus the current selection.
    pub const CAMERA_PAIRS_STATE: &str = "cameras/pairs/state";
    pub const CONFIG_SAVE: &str = "config/save";
    pub const CONFIG_RELOAD: &str = "config/reload";
    pub const VIEW_COMMAND: &str = "view/command";
    pub const VIEW_STATE: &str = "view/state";
    pub const SENSORS: &str = "robot/sensors";
    pub const ACTIONS_UNREGISTER: &str = "actions/unregister";
    pub const MISSION_LIST: &str = "mission/list";
    pub const TOOL_PREFIX: &str = "tool/";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Developer,
    EndUser,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "developer" => Some(Role::Developer),
            "enduser" | "end_user" | "mission_specialist" => Some(Role::EndUser),
            _ => None,
        }
    }
}

/// Requests an end-user session may not issue.
pub const DEVELOPER_ONLY: [&str; 8] = [
    action::channels::REGISTER,
    channels::ACTIONS_UNREGISTER,
    action::channels::TREE_EDIT,
    channels::CAMERAS_ADD,
    channels::CAMERAS_REMOVE,
    channels::CONFIG_SAVE,
    channels::CONFIG_RELOAD,
    channels::CAMERAS_CHANNELS,
];

/// Where an emitted envelope goes.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Client(ConnId, Envelope),
    Robot(Envelope),
}

/// Configuration storage behind `config/save` and `config/reload`.
pub trait Persistence: Send {
    fn save(&mut self, config: &ConsoleConfig) -> Result<(), String>;
    fn reload(&mut self) -> Result<ConsoleConfig, String>;
}

/// Keeps the last saved configuration in memory.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    pub saved: Option<ConsoleConfig>,
    pub saves: usize,
}

impl Persistence for MemoryStore {
    fn save(&mut self, config: &ConsoleConfig) -> Result<(), String> {
        self.saved = Some(config.clone());
        self.saves += 1;
        Ok(())
    }

    fn reload(&mut self) -> Result<ConsoleConfig, String> {
        self.saved.clone().ok_or_else(|| "nothing saved yet".to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsoleOptions {
    /// Robot link heartbeat period, seconds.
    pub heartbeat: f64,
    pub service_timeout: f64,
    /// Finished top-level executions kept for display.
    pub keep_executions: usize,
    /// A camera without frames for this long is stale.
    pub stale_after: f64,
    pub view_tick: f64,
    /// Added to the monotonic clock for wall stamps.
    pub wall_offset: f64,
}

impl Default for ConsoleOptions {
    fn default() -> Self {
        Self {
            heartbeat: 0.5,
            service_timeout: crate::wire::DEFAULT_SERVICE_TIMEOUT,
            keep_executions: 50,
            stale_after: 2.0,
            view_tick: 1.0 / view::DEFAULT_TICK_HZ,
            wall_offset: 0.0,
        }
    }
}

/// Pings that count towards the loss estimate.
const PING_WINDOW: usize = 20;
/// Loss fraction above which the link counts as degraded.
pub const DEGRADED_LOSS: f64 = 0.2;
/// Round-trip time above which the link counts as degraded.
pub const DEGRADED_RTT: f64 = 0.5;

#[derive(Debug, Clone)]
struct Session {
    role: Role,
    view: ViewState,
}

#[derive(Debug, Clone)]
struct Ping {
    seq: u64,
    sent: f64,
    answered: bool,
}

#[derive(Debug, Clone, Default)]
struct CameraStream {
    stats: StreamStats,
    stale: bool,
    latest: Option<Value>,
}

type Reply = Result<Value, (ErrorCode, String)>;

fn err<T>(code: ErrorCode, msg: impl Into<String>) -> Result<T, (ErrorCode, String)> {
    Err((code, msg.into()))
}

fn field<'a>(p: &'a Value, key: &str) -> Result<&'a Value, (ErrorCode, String)> {
    p.get(key)
        .ok_or_else(|| (ErrorCode::Validation, alloc::format!("missing `{key}`")))
}

fn str_field<'a>(p: &'a Value, key: &str) -> Result<&'a str, (ErrorCode, String)> {
    field(p, key)?
        .as_str()
        .ok_or_else(|| (ErrorCode::Validation, alloc::format!("`{key}` must be a string")))
}

fn path_field(p: &Value, key: &str) -> Result<Vec<usize>, (ErrorCode, String)> {
    match p.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|_| (ErrorCode::Validation, alloc::format!("`{key}` must be an index path"))),
    }
}

fn vec3(v: &Value) -> Option<crate::math::Vec3> {
    let a = v.as_array()?;
    if a.len() != 3 {
        return None;
    }
    Some(crate::math::Vec3::new(a[0].as_f64()?, a[1].as_f64()?, a[2].as_f64()?))
}

struct Runner<'a> {
    exec: &'a mut Executor,
    registry: &'a ActionRegistry,
    env: &'a ExecEnv,
    now: f64,
    answers: &'a mut Vec<Value>,
}

impl TaskRunner for Runner<'_> {
    fn run_task(&mut self, action: &ActionId, context: Value) -> Result<ExecId, String> {
        self.exec
            .execute(self.registry, action, context, self.env, self.now)
            .map_err(|e| e.to_string())
    }

    fn cancel_task(&mut self, exec: ExecId) {
        let _ = self.exec.cancel(self.registry, exec, self.env, self.now);
    }

    fn deliver_answer(&mut self, task_index: usize, request: &ConfirmationRequest, answer: &str) {
        self.answers.push(json!({
            "task_index": task_index,
            "prompt": request.prompt,
            "answer": answer,
        }));
    }
}

pub struct Console {
    opts: ConsoleOptions,
    config: ConsoleConfig,
    store: Box<dyn Persistence>,
    registry: ActionRegistry,
    executor: Executor,
    mission: MissionControl,
    estop: EStopManager,
    subs: ChannelRegistry,
    sessions: BTreeMap<ConnId, Session>,
    env: ExecEnv,
    latest: BTreeMap<String, Value>,
    mode: OperationMode,
    diagnostics: DiagnosticsBoard,
    connection: ConnectionState,
    heard_any: bool,
    sensors: BTreeMap<String, Value>,
    streams: BTreeMap<String, CameraStream>,
    image_channels: BTreeSet<String>,
    clock_offset: f64,
    pings: VecDeque<Ping>,
    next_ping: Option<f64>,
    ping_seq: u64,
    /// Relay id to `(caller, caller's id, channel, deadline)`.
    relays: BTreeMap<String, (ConnId, String, String, f64)>,
    relay_seq: u64,
    selected_pair: Option<CameraPair>,
    published_mission: Option<MissionState>,
    robot_pose: RobotPose,
    last_view_step: Option<f64>,
    answers: Vec<Value>,
    out: Vec<Outgoing>,
    now: f64,
}

impl Console {
    pub fn new(
        config: ConsoleConfig,
        store: Box<dyn Persistence>,
        opts: ConsoleOptions,
    ) -> Result<Self, crate::config::ConfigError> {
        config.validate()?;
        let mut c = Self {
            opts,
            config: ConsoleConfig::default(),
            store,
            registry: ActionRegistry::new(),
            executor: Executor::new().with_service_timeout(opts.service_timeout),
            mission: MissionControl::new(),
            estop: EStopManager::new(),
            subs: ChannelRegistry::new(),
            sessions: BTreeMap::new(),
            env: ExecEnv {
                tool: json!({}),
                settings: json!({}),
            },
            latest: BTreeMap::new(),
            mode: OperationMode::default(),
            diagnostics: DiagnosticsBoard::default(),
            connection: ConnectionState::default(),
            heard_any: false,
            sensors: BTreeMap::new(),
            streams: BTreeMap::new(),
            image_channels: BTreeSet::new(),
            clock_offset: 0.0,
            pings: VecDeque::new(),
            next_ping: None,
            ping_seq: 0,
            relays: BTreeMap::new(),
            relay_seq: 0,
            selected_pair: None,
            published_mission: None,
            robot_pose: RobotPose::default(),
            last_view_step: None,
            answers: Vec::new(),
            out: Vec::new(),
            now: 0.0,
        };
        c.apply_config(config);
        Ok(c)
    }

    fn apply_config(&mut self, config: ConsoleConfig) {
        let mut registry = ActionRegistry::new();
        // validated by the caller
        let _ = registry.register_all(config.actions.clone());
        self.registry = registry;
        let mut settings = serde_json::Map::new();
        for p in &config.settings {
            settings.insert(p.path.clone(), p.value.clone());
        }
        self.env.settings = Value::Object(settings);
        let mut estop =
            EStopManager::with_hardware(config.estop_channels.iter().map(String::as_str)).unwrap_or_default();
        // keep latched states across reloads
        for ch in self.estop.summary().channels {
            if ch.pressed {
                if ch.name == estop::SOFTWARE_CHANNEL {
                    estop.trigger_software(self.now);
                    estop.drain_outbox();
                } else {
                    let _ = estop.report_state(&ch.name, true, self.now);
                }
            }
        }
        self.estop = estop;
        for cam in &config.cameras {
            self.streams.entry(cam.id.clone()).or_default();
        }
        if self.mission.mission().is_none() {
            if let Some(m) = config.missions.first() {
                let _ = self.mission.load(m.clone(), &self.registry);
            }
        }
        self.config = config;
    }

    pub fn config(&self) -> &ConsoleConfig {
        &self.config
    }

    pub fn registry(&self) -> &ActionRegistry {
        &self.registry
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn mission_state(&self) -> &MissionState {
        self.mission.state()
    }

    pub fn estop_summary(&self) -> estop::EStopSummary {
        self.estop.summary()
    }

    pub fn connection(&self) -> ConnectionState {
        self.connection
    }

    pub fn mode(&self) -> OperationMode {
        self.mode
    }

    pub fn diagnostics(&self) -> &DiagnosticsBoard {
        &self.diagnostics
    }

    pub fn stream(&self, camera: &str) -> Option<&StreamStats> {
        self.streams.get(camera).map(|s| &s.stats)
    }

    /// Latest frame payload of a camera.
    pub fn latest_frame(&self, camera: &str) -> Option<&Value> {
        self.streams.get(camera).and_then(|s| s.latest.as_ref())
    }

    pub fn clock_offset(&self) -> f64 {
        self.clock_offset
    }

    pub fn settings_values(&self) -> &Value {
        &self.env.settings
    }

    pub fn tool_inputs(&self) -> &Value {
        &self.env.tool
    }

    pub fn selected_pair(&self) -> Option<&CameraPair> {
        self.selected_pair.as_ref()
    }

    pub fn view_state(&self, conn: ConnId) -> Option<&ViewState> {
        self.sessions.get(&conn).map(|s| &s.view)
    }

    pub fn role(&self, conn: ConnId) -> Option<Role> {
        self.sessions.get(&conn).map(|s| s.role)
    }

    pub fn drain(&mut self) -> Vec<Outgoing> {
        core::mem::take(&mut self.out)
    }

    fn stamp(&self, env: Envelope) -> Envelope {
        env.stamped(self.now + self.opts.wall_offset, self.now)
    }

    fn send_client(&mut self, conn: ConnId, env: Envelope) {
        let env = self.stamp(env);
        self.out.push(Outgoing::Client(conn, env));
    }

    fn send_robot(&mut self, env: Envelope) {
        let env = self.stamp(env);
        self.out.push(Outgoing::Robot(env));
    }

    fn publish(&mut self, channel: &str, payload: Value) {
        for conn in self.subs.subscribers(channel) {
            self.send_client(conn, Envelope::publish(channel, payload.clone()));
        }
    }

    /// Publishes a value whose content depends on the subscriber's role.
    fn publish_per_role(&mut self, channel: &str, f: impl Fn(Role) -> Value) {
        for conn in self.subs.subscribers(channel) {
            let role = self.sessions.get(&conn).map(|s| s.role).unwrap_or_default();
            self.send_client(conn, Envelope::publish(channel, f(role)));
        }
    }

    fn log(&mut self, text: String) {
        let now = self.now;
        self.publish(channels::LOG, json!({ "at": now, "text": text }));
    }

    // ---- sessions -------------------------------------------------------

    /// Registers a client connection and sends it its session info.
    pub fn connect(&mut self, conn: ConnId, role: Role, now: f64) {
        self.now = now;
        let base = self.robot_pose;
        let mut view = ViewState::default_for(base);
        let d = &self.config.view;
        if let Ok(pose) = preset_pose(d.preset, base, d.distance, d.height) {
            if let Ok(v) = ViewState::new(pose, d.kp, self.opts.view_tick) {
                view = v;
            }
        }
        if d.locked {
            view.lock(base.base());
        }
        if d.projection != view.projection {
            view.toggle_projection(base.yaw);
        }
        self.sessions.insert(conn, Session { role, view });
        let info = self.session_info(conn);
        self.send_client(conn, Envelope::publish(channels::SESSION, info));
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        self.sessions.remove(&conn);
        self.subs.drop_connection(conn);
        self.relays.retain(|_, (c, ..)| *c != conn);
    }

    fn session_info(&self, conn: ConnId) -> Value {
        let role = self.role(conn).unwrap_or_default();
        let dev = role == Role::Developer;
        json!({
            "conn": conn,
            "role": role,
            "capabilities": {
                "add_camera": dev,
                "edit_actions": dev,
                "save_config": dev,
                "show_parameter_paths": dev,
            },
            "gated": if dev { Vec::new() } else { DEVELOPER_ONLY.to_vec() },
        })
    }

    // ---- client traffic -------------------------------------------------

    pub fn handle_client(&mut self, conn: ConnId, env: Envelope, now: f64) {
        self.now = now;
        if !self.sessions.contains_key(&conn) {
            self.connect(conn, Role::Developer, now);
        }
        if let Err(e) = env.validate() {
            if env.kind == Kind::ServiceRequest && env.id.is_some() {
                self.send_client(conn, Envelope::error_to(&env, ErrorCode::Protocol, &e.to_string()));
            }
            return;
        }
        match env.kind {
            Kind::Subscribe => {
                self.subs.subscribe(conn, &env.channel);
                for payload in self.snapshot(conn, &env.channel) {
                    self.send_client(conn, Envelope::publish(&env.channel, payload));
                }
            }
            Kind::Unsubscribe => self.subs.unsubscribe(conn, &env.channel),
            Kind::Publish => self.on_client_publish(conn, env),
            Kind::ServiceRequest => self.on_client_request(conn, env),
            Kind::ServiceResponse | Kind::Error => {}
        }
        self.flush();
    }

    fn on_client_publish(&mut self, conn: ConnId, env: Envelope) {
        if let Some(tool) = env.channel.strip_prefix(channels::TOOL_PREFIX) {
            if let Value::Object(m) = &mut self.env.tool {
                m.insert(tool.into(), env.payload.clone());
            }
        } else if env.channel == robot_ch::GAMEPAD {
            self.send_robot(Envelope::publish(&env.channel, env.payload));
            return;
        }
        let route = self.subs.route(&env, conn);
        for dest in route.destinations {
            self.send_client(dest, Envelope::publish(&env.channel, env.payload.clone()));
        }
    }

    fn on_client_request(&mut self, conn: ConnId, env: Envelope) {
        let role = self.role(conn).unwrap_or_default();
        if role == Role::EndUser && DEVELOPER_ONLY.contains(&env.channel.as_str()) {
            let msg = alloc::format!("`{}` is not available in the end-user view", env.channel);
            self.send_client(conn, Envelope::error_to(&env, ErrorCode::Permission, &msg));
            return;
        }
        if env.channel.starts_with("robot/") {
            self.relay_request(conn, env);
            return;
        }
        let reply = self.dispatch(conn, role, &env);
        let out = match reply {
            Ok(v) => Envelope::response_to(&env, v),
            Err((code, msg)) => Envelope::error_to(&env, code, &msg),
        };
        self.send_client(conn, out);
    }

    fn relay_request(&mut self, conn: ConnId, env: Envelope) {
        self.relay_seq += 1;
        let id = alloc::format!("relay-{}", self.relay_seq);
        let deadline = self.now + self.opts.service_timeout;
        self.relays.insert(
            id.clone(),
            (conn, env.id.clone().unwrap_or_default(), env.channel.clone(), deadline),
        );
        self.send_robot(Envelope::request(&env.channel, id, env.payload));
    }

    fn dispatch(&mut self, conn: ConnId, role: Role, env: &Envelope) -> Reply {
        use action::channels as act;
        use channels as ch;
        use mission::channels as mis;
        let p = &env.payload;
        let now = self.now;
        match env.channel.as_str() {
            ch::SESSION => Ok(self.session_info(conn)),
            act::LIST => Ok(self.actions_value()),
            act::TREE => Ok(json!({ "tree": self.config.action_tree })),
            act::REGISTER => self.register_action(p),
            ch::ACTIONS_UNREGISTER => self.unregister_action(p),
            act::TREE_EDIT => self.edit_tree(p),
            act::EXECUTE => {
                let id = ActionId::new(str_field(p, "action_id")?);
                let context = p.get("context").cloned().unwrap_or(Value::Null);
                let exec = self
                    .executor
                    .execute(&self.registry, &id, context, &self.env, now)
                    .map_err(|e| (e.code(), e.to_string()))?;
                Ok(json!({ "exec_id": exec }))
            }
            act::CANCEL => {
                let exec: ExecId = serde_json::from_value(field(p, "exec_id")?.clone())
                    .map_err(|_| (ErrorCode::Validation, "`exec_id` must be an integer".to_string()))?;
                let changed = self
                    .executor
                    .cancel(&self.registry, exec, &self.env, now)
                    .map_err(|e| (e.code(), e.to_string()))?;
                Ok(json!({ "canceled": changed }))
            }
            mis::LOAD => {
                let m: Mission = match (p.get("mission"), p.get("name")) {
                    (Some(m), _) => {
                        serde_json::from_value(m.clone()).map_err(|e| (ErrorCode::Validation, e.to_string()))?
                    }
                    (None, Some(Value::String(name))) => self
                        .config
                        .missions
                        .iter()
                        .find(|m| &m.name == name)
                        .cloned()
                        .ok_or_else(|| (ErrorCode::NotFound, alloc::format!("mission `{name}`")))?,
                    _ => return err(ErrorCode::Validation, "give `mission` or `name`"),
                };
                let s = self
                    .mission
                    .load(m, &self.registry)
                    .map_err(|e| (e.code(), e.to_string()))?;
                Ok(serde_json::to_value(s).unwrap_or(Value::Null))
            }
            ch::MISSION_LIST => {
                let names: Vec<&str> = self.config.missions.iter().map(|m| m.name.as_str()).collect();
                Ok(json!({ "missions": names }))
            }
            mis::START => {
                let mut runner = Runner {
                    exec: &mut self.executor,
                    registry: &self.registry,
                    env: &self.env,
                    now,
                    answers: &mut self.answers,
                };
                let s = self.mission.start(&mut runner).map_err(|e| (e.code(), e.to_string()))?;
                Ok(serde_json::to_value(s).unwrap_or(Value::Null))
            }
            mis::CONTROL => {
                let cmd: Command = serde_json::from_value(field(p, "command")?.clone())
                    .map_err(|_| (ErrorCode::Validation, "unknown mission command".to_string()))?;
                let mut runner = Runner {
                    exec: &mut self.executor,
                    registry: &self.registry,
                    env: &self.env,
                    now,
                    answers: &mut self.answers,
                };
                let s = self
                    .mission
                    .control(cmd, &mut runner)
                    .map_err(|e| (e.code(), e.to_string()))?;
                Ok(serde_json::to_value(s).unwrap_or(Value::Null))
            }
            mis::CONFIRM => {
                let option = str_field(p, "option")?.to_string();
                let mut runner = Runner {
                    exec: &mut self.executor,
                    registry: &self.registry,
                    env: &self.env,
                    now,
                    answers: &mut self.answers,
                };
                let s = self
                    .mission
                    .confirm(&option, &mut runner, now)
                    .map_err(|e| (e.code(), e.to_string()))?;
                Ok(serde_json::to_value(s).unwrap_or(Value::Null))
            }
            estop::channels::TRIGGER => {
                let s = self.estop.trigger_software(now);
                let item = self.estop.ack_diagnostic();
                self.set_diagnostic(item);
                let v = serde_json::to_value(&s).unwrap_or(Value::Null);
                self.publish(estop::channels::SUMMARY, v.clone());
                Ok(v)
            }
            estop::channels::RELEASE => {
                let s = self.estop.release_software(now);
                let item = self.estop.ack_diagnostic();
                self.set_diagnostic(item);
                let v = serde_json::to_value(&s).unwrap_or(Value::Null);
                self.publish(estop::channels::SUMMARY, v.clone());
                Ok(v)
            }
            estop::channels::SUMMARY => Ok(serde_json::to_value(self.estop.summary()).unwrap_or(Value::Null)),
            ch::SETTINGS_LIST => {
                let params: Vec<Value> = self.config.settings.iter().map(|s| param_view(s, role)).collect();
                Ok(json!({ "parameters": params }))
            }
            ch::SETTINGS_SET => self.set_parameter(role, p),
            ch::CAMERAS_LIST => Ok(json!({ "cameras": self.config.cameras })),
            ch::CAMERAS_ADD => {
                let cam = self
                    .config
                    .add_camera(str_field(p, "name")?, str_field(p, "channel")?)
                    .map_err(|e| (e.code(), e.to_string()))?
                    .clone();
                self.streams.entry(cam.id.clone()).or_default();
                let v = json!({ "cameras": self.config.cameras });
                self.publish(ch::CAMERAS_LIST, v);
                Ok(serde_json::to_value(cam).unwrap_or(Value::Null))
            }
            ch::CAMERAS_REMOVE => {
                let cam = self
                    .config
                    .remove_camera(str_field(p, "id")?)
                    .map_err(|e| (e.code(), e.to_string()))?;
                let v = json!({ "cameras": self.config.cameras });
                self.publish(ch::CAMERAS_LIST, v);
                Ok(serde_json::to_value(cam).unwrap_or(Value::Null))
            }
            ch::CAMERAS_CHANNELS => {
                let mut all: BTreeSet<String> = self.image_channels.clone();
                all.extend(self.config.cameras.iter().map(|c| c.channel.clone()));
                Ok(json!({ "channels": all }))
            }
            ch::CAMERA_PAIRS => self.camera_pairs(p),
            ch::CONFIG_SAVE => {
                self.store.save(&self.config).map_err(|e| (ErrorCode::Io, e))?;
                Ok(json!({ "saved": true }))
            }
            ch::CONFIG_RELOAD => self.reload_config(),
            ch::VIEW_COMMAND => self.view_command(conn, p),
            other => err(ErrorCode::NotFound, alloc::format!("no service `{other}`")),
        }
    }

    fn actions_value(&self) -> Value {
        json!({ "actions": self.registry.sorted() })
    }

    fn register_action(&mut self, p: &Value) -> Reply {
        let spec: ActionSpec =
            serde_json::from_value(field(p, "spec")?.clone()).map_err(|e| (ErrorCode::Validation, e.to_string()))?;
        let id = self
            .registry
            .register(spec.clone())
            .map_err(|e| (e.code(), e.to_string()))?;
        self.config.actions.push(spec);
        let v = self.actions_value();
        self.publish(action::channels::LIST, v);
        Ok(json!({ "action_id": id }))
    }

    fn unregister_action(&mut self, p: &Value) -> Reply {
        let id = ActionId::new(str_field(p, "action_id")?);
        if self.config.action_tree.references().contains(&&id) {
            return err(
                ErrorCode::Validation,
                alloc::format!("`{id}` is still placed in the structure view"),
            );
        }
        if self
            .config
            .missions
            .iter()
            .any(|m| m.tasks.iter().any(|t| t.action_id == id))
        {
            return err(
                ErrorCode::Validation,
                alloc::format!("`{id}` is used by a saved mission"),
            );
        }
        if self.executor.is_running(&id) {
            return err(ErrorCode::Busy, alloc::format!("`{id}` is running"));
        }
        self.registry.unregister(&id).map_err(|e| (e.code(), e.to_string()))?;
        self.config.actions.retain(|a| a.id != id);
        let v = self.actions_value();
        self.publish(action::channels::LIST, v);
        Ok(json!({ "action_id": id }))
    }

    fn edit_tree(&mut self, p: &Value) -> Reply {
        let mut tree = self.config.action_tree.clone();
        let position = p.get("position").and_then(Value::as_u64).unwrap_or(u64::MAX) as usize;
        let path = match str_field(p, "op")? {
            "move" => tree.move_node(&path_field(p, "node")?, &path_field(p, "dest")?, position),
            "insert" => tree.insert_action(
                &self.registry,
                &path_field(p, "folder")?,
                position,
                ActionId::new(str_field(p, "action_id")?),
            ),
            "add_folder" => tree.add_folder(&path_field(p, "parent")?, position, str_field(p, "name")?),
            "remove" => {
                let node = path_field(p, "node")?;
                tree.remove_node(&node).map(|_| node)
            }
            other => return err(ErrorCode::Validation, alloc::format!("unknown tree edit `{other}`")),
        }
        .map_err(|e| (e.code(), e.to_string()))?;
        self.config.action_tree = tree;
        let v = json!({ "tree": self.config.action_tree });
        self.publish(action::channels::TREE, v.clone());
        Ok(json!({ "tree": self.config.action_tree, "path": path }))
    }

    /// Sets a parameter by path (developer) or display alias (any role).
    pub fn set_parameter_value(&mut self, role: Role, key: &str, value: Value) -> Reply {
        let idx = self
            .config
            .settings
            .iter()
            .position(|s| s.alias == key || (role == Role::Developer && s.path == key))
            .ok_or_else(|| (ErrorCode::NotFound, alloc::format!("no parameter `{key}`")))?;
        self.config.settings[idx]
            .check(&value)
            .map_err(|e| (ErrorCode::Validation, e))?;
        self.config.settings[idx].value = value.clone();
        let param = self.config.settings[idx].clone();
        if let Value::Object(m) = &mut self.env.settings {
            m.insert(param.path.clone(), value.clone());
        }
        self.publish_per_role(channels::SETTINGS_UPDATES, |r| param_view(&param, r));
        self.send_robot(Envelope::publish(
            robot_ch::PARAM,
            json!({ "path": param.path, "value": value }),
        ));
        let mut reply = param_view(&param, role);
        if self.mission.state().phase != mission::Phase::Idle && self.mission.state().phase != mission::Phase::Finished
        {
            let text = alloc::format!("`{}` changed while a mission is active", param.alias);
            reply["warning"] = Value::from(text.clone());
            self.log(text);
        }
        Ok(reply)
    }

    fn set_parameter(&mut self, role: Role, p: &Value) -> Reply {
        let key = p
            .get("alias")
            .or_else(|| p.get("path"))
            .and_then(Value::as_str)
            .ok_or_else(|| (ErrorCode::Validation, "give `alias` or `path`".to_string()))?
            .to_string();
        let value = field(p, "value")?.clone();
        self.set_parameter_value(role, &key, value)
    }

    fn pairs_value(&self) -> Value {
        json!({ "pairs": self.config.camera_pairs, "selected": self.selected_pair })
    }

    fn camera_pairs(&mut self, p: &Value) -> Reply {
        match p.get("op").and_then(Value::as_str).unwrap_or("list") {
            "list" => Ok(self.pairs_value()),
            "save" => {
                let name = str_field(p, "name")?;
                let exists = self.config.camera_pairs.iter().any(|x| x.name == name);
                let confirmed = p.get("overwrite").and_then(Value::as_bool).unwrap_or(false);
                if exists && !confirmed {
                    return Ok(json!({ "saved": false, "needs_confirmation": true }));
                }
                let overwrote = self
                    .config
                    .save_camera_pair(name, str_field(p, "left")?, str_field(p, "right")?)
                    .map_err(|e| (e.code(), e.to_string()))?;
                let persisted = self.store.save(&self.config).is_ok();
                let v = self.pairs_value();
                self.publish(channels::CAMERA_PAIRS_STATE, v);
                Ok(json!({ "saved": true, "overwrote": overwrote, "persisted": persisted }))
            }
            "select" => {
                let name = str_field(p, "name")?;
                match self.config.select_camera_pair(name) {
                    Ok(pair) => {
                        self.selected_pair = Some(pair.clone());
                        let v = self.pairs_value();
                        self.publish(channels::CAMERA_PAIRS_STATE, v);
                        Ok(serde_json::to_value(pair).unwrap_or(Value::Null))
                    }
                    Err(e) => {
                        let v = self.pairs_value();
                        self.publish(channels::CAMERA_PAIRS_STATE, v);
                        err(e.code(), e.to_string())
                    }
                }
            }
            "delete" => {
                let name = str_field(p, "name")?;
                let before = self.config.camera_pairs.len();
                self.config.camera_pairs.retain(|x| x.name != name);
                if before == self.config.camera_pairs.len() {
                    return err(ErrorCode::NotFound, alloc::format!("camera pair `{name}`"));
                }
                if self.selected_pair.as_ref().is_some_and(|s| s.name == name) {
                    self.selected_pair = None;
                }
                let _ = self.store.save(&self.config);
                let v = self.pairs_value();
                self.publish(channels::CAMERA_PAIRS_STATE, v);
                Ok(json!({ "deleted": name }))
            }
            other => err(ErrorCode::Validation, alloc::format!("unknown op `{other}`")),
        }
    }

    fn reload_config(&mut self) -> Reply {
        if self.executor.running().next().is_some() {
            return err(ErrorCode::Busy, "actions are running");
        }
        let phase = self.mission.state().phase;
        if !matches!(phase, mission::Phase::Idle | mission::Phase::Finished) {
            return err(ErrorCode::Busy, "a mission is active");
        }
        let cfg = self.store.reload().map_err(|e| (ErrorCode::Io, e))?;
        cfg.validate().map_err(|e| (ErrorCode::Config, e.to_string()))?;
        self.apply_config(cfg);
        let actions = self.actions_value();
        self.publish(action::channels::LIST, actions);
        let tree = json!({ "tree": self.config.action_tree });
        self.publish(action::channels::TREE, tree);
        let cams = json!({ "cameras": self.config.cameras });
        self.publish(channels::CAMERAS_LIST, cams);
        let pairs = self.pairs_value();
        self.publish(channels::CAMERA_PAIRS_STATE, pairs);
        let summary = serde_json::to_value(self.estop.summary()).unwrap_or(Value::Null);
        self.publish(estop::channels::SUMMARY, summary);
        for param in self.config.settings.clone() {
            self.publish_per_role(channels::SETTINGS_UPDATES, |r| param_view(&param, r));
        }
        Ok(json!({ "reloaded": true }))
    }

    fn view_command(&mut self, conn: ConnId, p: &Value) -> Reply {
        let robot = self.robot_pose;
        let d = self.config.view.clone();
        let session = self
            .sessions
            .get_mut(&conn)
            .ok_or_else(|| (ErrorCode::State, "no session".to_string()))?;
        let view = &mut session.view;
        match str_field(p, "op")? {
            "preset" => {
                let preset: Preset = serde_json::from_value(field(p, "preset")?.clone())
                    .map_err(|_| (ErrorCode::Validation, "unknown preset".to_string()))?;
                let pose = preset_pose(preset, robot, d.distance, d.height)
                    .map_err(|e| (ErrorCode::Validation, e.to_string()))?;
                let locked = view.locked;
                view.unlock();
                view.pose = pose;
                if locked {
                    view.lock(robot.base());
                }
            }
            "lock" => view.lock(robot.base()),
            "unlock" => view.unlock(),
            "projection" => view.toggle_projection(robot.yaw),
            "move" => {
                let (Some(eye), Some(focus)) = (p.get("eye").and_then(vec3), p.get("focus").and_then(vec3)) else {
                    return err(ErrorCode::Validation, "`eye` and `focus` must be [x, y, z]");
                };
                let up = p.get("up").and_then(vec3).unwrap_or(view.pose.up);
                let pose = ViewPose::new(eye, focus, up).map_err(|e| (ErrorCode::Validation, e.to_string()))?;
                view.manual_move(pose);
            }
            other => return err(ErrorCode::Validation, alloc::format!("unknown view op `{other}`")),
        }
        let v = serde_json::to_value(*view).unwrap_or(Value::Null);
        if self.subs.is_subscribed(conn, channels::VIEW_STATE) {
            self.send_client(conn, Envelope::publish(channels::VIEW_STATE, v.clone()));
        }
        Ok(v)
    }

    // ---- snapshots ------------------------------------------------------

    fn snapshot(&self, conn: ConnId, channel: &str) -> Vec<Value> {
        use action::channels as act;
        let role = self.role(conn).unwrap_or_default();
        let one = |v: Value| alloc::vec![v];
        match channel {
            tel::MODE => one(self.mode_value()),
            tel::DIAGNOSTICS => one(self.diagnostics_value()),
            tel::CONNECTION => one(serde_json::to_value(self.connection).unwrap_or(Value::Null)),
            channels::SENSORS => one(json!({ "sensors": self.sensors.values().collect::<Vec<_>>() })),
            mission::channels::STATE => one(serde_json::to_value(self.mission.state()).unwrap_or(Value::Null)),
            estop::channels::SUMMARY => one(serde_json::to_value(self.estop.summary()).unwrap_or(Value::Null)),
            act::TOGGLES => self
                .toggle_ids()
                .into_iter()
                .map(|id| {
                    let index = self.executor.toggle_index(&id);
                    json!({ "action_id": id, "current_index": index })
                })
                .collect(),
            act::EXECUTIONS => self
                .executor
                .records()
                .map(|r| serde_json::to_value(r).unwrap_or(Value::Null))
                .collect(),
            act::LIST => one(self.actions_value()),
            act::TREE => one(json!({ "tree": self.config.action_tree })),
            channels::SETTINGS_UPDATES => self.config.settings.iter().map(|s| param_view(s, role)).collect(),
            channels::CAMERAS_LIST => one(json!({ "cameras": self.config.cameras })),
            channels::CAMERA_PAIRS_STATE => one(self.pairs_value()),
            channels::SESSION => one(self.session_info(conn)),
            channels::VIEW_STATE => self
                .sessions
                .get(&conn)
                .map(|s| alloc::vec![serde_json::to_value(s.view).unwrap_or(Value::Null)])
                .unwrap_or_default(),
            other => {
                if let Some(cam) = other.strip_prefix("camera/").and_then(|r| r.strip_suffix("/stats")) {
                    return self
                        .streams
                        .get(cam)
                        .map(|s| alloc::vec![stats_value(s)])
                        .unwrap_or_default();
                }
                if let Some(cam) = telemetry::channels::camera_of(other) {
                    return self
                        .streams
                        .get(cam)
                        .and_then(|s| s.latest.clone())
                        .map(|v| alloc::vec![v])
                        .unwrap_or_default();
                }
                if let Some(tool) = other.strip_prefix(channels::TOOL_PREFIX) {
                    return self
                        .env
                        .tool
                        .get(tool)
                        .cloned()
                        .map(|v| alloc::vec![v])
                        .unwrap_or_default();
                }
                self.latest
                    .get(other)
                    .cloned()
                    .map(|v| alloc::vec![v])
                    .unwrap_or_default()
            }
        }
    }

    fn toggle_ids(&self) -> Vec<ActionId> {
        self.registry
            .specs()
            .filter(|s| matches!(s.kind, action::ActionKind::Toggle { .. }))
            .map(|s| s.id.clone())
            .collect()
    }

    fn mode_value(&self) -> Value {
        json!({ "mode": self.mode, "theme": mode_theme(self.mode) })
    }

    fn diagnostics_value(&self) -> Value {
        json!({ "items": self.diagnostics.items(), "level": self.diagnostics.level() })
    }

    fn set_diagnostic(&mut self, item: DiagnosticsItem) {
        if self.diagnostics.set(item) {
            let v = self.diagnostics_value();
            self.publish(tel::DIAGNOSTICS, v);
        }
    }

    // ---- robot traffic --------------------------------------------------

    pub fn handle_robot(&mut self, env: Envelope, now: f64) {
        self.now = now;
        self.heard_any = true;
        self.connection.last_heard = now;
        match env.kind {
            Kind::Publish => self.on_robot_publish(env),
            Kind::ServiceResponse | Kind::Error => self.on_robot_response(env),
            _ => {}
        }
        self.update_connection();
        self.flush();
    }

    fn on_robot_response(&mut self, env: Envelope) {
        let Some(id) = env.id.clone() else { return };
        if let Some((conn, original, ..)) = self.relays.remove(&id) {
            let mut back = env;
            back.id = Some(original);
            self.send_client(conn, back);
            return;
        }
        let is_error = env.kind == Kind::Error;
        let payload = if is_error {
            let (code, message) = env.error_info().unwrap_or_default();
            json!({ "message": alloc::format!("{code}: {message}") })
        } else {
            env.payload
        };
        let now = self.now;
        self.executor
            .on_response(&self.registry, &id, &payload, is_error, &self.env, now);
    }

    fn on_robot_publish(&mut self, env: Envelope) {
        let now = self.now;
        let p = env.payload.clone();
        let channel = env.channel.clone();
        for toggle in self.registry.toggles_on(&channel) {
            if let Err(e) = self.executor.on_toggle_feedback(&self.registry, &toggle, &p) {
                self.set_diagnostic(DiagnosticsItem::new(
                    &alloc::format!("toggle/{toggle}"),
                    DiagnosticsLevel::Warning,
                    &e.to_string(),
                ));
            }
        }
        match channel.as_str() {
            robot_ch::PONG => {
                let seq = p.get("seq").and_then(Value::as_u64);
                let (Some(t), Some(remote)) = (
                    p.get("t").and_then(Value::as_f64),
                    p.get("remote").and_then(Value::as_f64),
                ) else {
                    return;
                };
                if let Some(ping) = self.pings.iter_mut().find(|x| Some(x.seq) == seq) {
                    ping.answered = true;
                }
                let (offset, rtt) = clock_offset(t, remote, now);
                self.clock_offset = offset;
                self.connection.rtt = rtt;
            }
            robot_ch::PROGRESS => {
                if let Some(id) = p.get("request_id").and_then(Value::as_str) {
                    self.executor.on_progress(id, now);
                }
            }
            estop::channels::ROBOT_HW => {
                let (Some(name), Some(pressed)) = (
                    p.get("name").and_then(Value::as_str),
                    p.get("pressed").and_then(Value::as_bool),
                ) else {
                    return;
                };
                if let Ok(Some(s)) = self.estop.report_state(name, pressed, now) {
                    self.publish(estop::channels::SUMMARY, serde_json::to_value(s).unwrap_or(Value::Null));
                }
            }
            estop::channels::ROBOT_ACK => {
                if let Some(seq) = p.get("seq").and_then(Value::as_u64) {
                    if let Some(item) = self.estop.on_ack(seq, now) {
                        self.set_diagnostic(item);
                        let s = serde_json::to_value(self.estop.summary()).unwrap_or(Value::Null);
                        self.publish(estop::channels::SUMMARY, s);
                    }
                }
            }
            robot_ch::CONFIRMATION_REQUEST => {
                let Ok(req) = serde_json::from_value::<ConfirmationRequest>(p) else {
                    return;
                };
                if self.mission.request_confirmation(req.clone(), now).is_err() {
                    let answer = req.options.first().cloned().unwrap_or_default();
                    self.log(alloc::format!(
                        "confirmation `{}` outside a mission answered with `{answer}`",
                        req.prompt
                    ));
                    self.answers
                        .push(json!({ "task_index": Value::Null, "prompt": req.prompt, "answer": answer }));
                }
            }
            tel::MODE => {
                if let Some(mode) = p.get("mode").and_then(|m| serde_json::from_value(m.clone()).ok()) {
                    if mode != self.mode {
                        self.mode = mode;
                        let v = self.mode_value();
                        self.publish(tel::MODE, v);
                    }
                }
            }
            tel::DIAGNOSTICS => {
                let items: Vec<DiagnosticsItem> = p
                    .get("items")
                    .and_then(|i| serde_json::from_value(i.clone()).ok())
                    .unwrap_or_default();
                let mut changed = false;
                for item in items {
                    changed |= self.diagnostics.set(item);
                }
                if changed {
                    let v = self.diagnostics_value();
                    self.publish(tel::DIAGNOSTICS, v);
                }
            }
            tel::POSE => {
                if let (Some(x), Some(y), Some(yaw)) = (
                    p.get("x").and_then(Value::as_f64),
                    p.get("y").and_then(Value::as_f64),
                    p.get("yaw").and_then(Value::as_f64),
                ) {
                    self.robot_pose = RobotPose { x, y, z: 0.0, yaw };
                }
                self.store_latest(&channel, p);
            }
            _ => {
                if let Some(name) = channel.strip_prefix(tel::SENSOR_PREFIX) {
                    self.on_sensor(name, &p);
                    self.store_latest(&channel, p);
                } else if let Some(cam) = telemetry::channels::camera_of(&channel) {
                    let cam = cam.to_string();
                    self.on_frame(&cam, &channel, &env);
                } else if self.latest.get(&channel) != Some(&p) {
                    self.store_latest(&channel, p);
                }
            }
        }
    }

    fn store_latest(&mut self, channel: &str, p: Value) {
        self.latest.insert(channel.into(), p.clone());
        self.publish(channel, p);
    }

    fn on_sensor(&mut self, name: &str, p: &Value) {
        let Some(value) = p.get("value").and_then(Value::as_f64) else {
            return;
        };
        let cfg = self.config.sensors.iter().find(|s| s.name == name);
        let (reading, class) = match cfg {
            Some(c) => {
                let r = c.reading(value);
                let class = r.classify().ok();
                (r, class)
            }
            None => {
                let unit = p.get("unit").and_then(Value::as_str).unwrap_or("");
                let r = telemetry::SensorReading {
                    name: name.into(),
                    value,
                    unit: unit.into(),
                    warn_threshold: None,
                    danger_threshold: None,
                    direction: telemetry::BadDirection::HighIsBad,
                };
                (r, Some(telemetry::Classification::Safe))
            }
        };
        let mut v = serde_json::to_value(&reading).unwrap_or(Value::Null);
        v["classification"] = serde_json::to_value(class).unwrap_or(Value::Null);
        self.sensors.insert(name.into(), v);
        let all = json!({ "sensors": self.sensors.values().collect::<Vec<_>>() });
        self.publish(channels::SENSORS, all);
    }

    fn on_frame(&mut self, cam: &str, channel: &str, env: &Envelope) {
        let now = self.now;
        let stamp = env
            .payload
            .get("stamp")
            .and_then(Value::as_f64)
            .unwrap_or(env.stamp_mono);
        self.image_channels.insert(channel.into());
        let offset = self.clock_offset;
        let s = self.streams.entry(cam.into()).or_default();
        s.stats.update(stamp, now, offset);
        s.stale = false;
        s.latest = Some(env.payload.clone());
        let stats = stats_value(s);
        self.publish(channel, env.payload.clone());
        self.publish(&tel::camera_stats(cam), stats);
    }

    // ---- clock ----------------------------------------------------------

    /// Advances timers: heartbeat, acknowledgment window, service timeouts,
    /// confirmation deadlines, view follow and stale cameras.
    pub fn tick(&mut self, now: f64) {
        self.now = now;
        let hb = self.opts.heartbeat;
        let mut next = *self.next_ping.get_or_insert(now);
        while now + 1e-9 >= next {
            self.ping_seq += 1;
            let seq = self.ping_seq;
            self.pings.push_back(Ping {
                seq,
                sent: next,
                answered: false,
            });
            while self.pings.len() > PING_WINDOW {
                self.pings.pop_front();
            }
            self.send_robot(Envelope::publish(robot_ch::PING, json!({ "seq": seq, "t": next })));
            next += hb;
            self.update_connection();
            let v = serde_json::to_value(self.connection).unwrap_or(Value::Null);
            self.publish(tel::CONNECTION, v);
        }
        self.next_ping = Some(next);
        self.update_connection();

        let expired: Vec<String> = self
            .relays
            .iter()
            .filter(|(_, (.., deadline))| now >= *deadline)
            .map(|(id, _)| id.clone())
            .collect();
        for id in expired {
            if let Some((conn, original, channel, _)) = self.relays.remove(&id) {
                let req = Envelope::request(&channel, original, Value::Null);
                self.send_client(
                    conn,
                    Envelope::error_to(&req, ErrorCode::Timeout, "no answer from the robot"),
                );
            }
        }

        if let Some(item) = self.estop.tick(now) {
            self.set_diagnostic(item);
            let s = serde_json::to_value(self.estop.summary()).unwrap_or(Value::Null);
            self.publish(estop::channels::SUMMARY, s);
        }
        self.executor.tick(&self.registry, &self.env, now);
        let mut runner = Runner {
            exec: &mut self.executor,
            registry: &self.registry,
            env: &self.env,
            now,
            answers: &mut self.answers,
        };
        self.mission.tick(&mut runner, now);

        self.step_views(now);

        let stale_after = self.opts.stale_after;
        let mut newly_stale = Vec::new();
        for (cam, s) in &mut self.streams {
            if let Some(last) = s.stats.last_receive() {
                if !s.stale && now - last > stale_after {
                    s.stale = true;
                    newly_stale.push((cam.clone(), stats_value(s)));
                }
            }
        }
        for (cam, v) in newly_stale {
            self.publish(&tel::camera_stats(&cam), v);
        }
        self.flush();
    }

    fn update_connection(&mut self) {
        let now = self.now;
        let hb = self.opts.heartbeat;
        let settled: Vec<&Ping> = self.pings.iter().filter(|p| p.sent <= now - 2.0 * hb).collect();
        let loss = if settled.is_empty() {
            0.0
        } else {
            settled.iter().filter(|p| !p.answered).count() as f64 / settled.len() as f64
        };
        self.connection.loss_fraction = loss;
        let quality = if !self.heard_any || now - self.connection.last_heard > 2.0 * hb {
            LinkQuality::Lost
        } else if loss > DEGRADED_LOSS || self.connection.rtt > DEGRADED_RTT {
            LinkQuality::Degraded
        } else {
            LinkQuality::Good
        };
        if quality != self.connection.quality {
            self.connection.quality = quality;
            let v = serde_json::to_value(self.connection).unwrap_or(Value::Null);
            self.publish(tel::CONNECTION, v);
        }
    }

    fn step_views(&mut self, now: f64) {
        let dt = self.opts.view_tick;
        let mut last = *self.last_view_step.get_or_insert(now);
        let base = self.robot_pose.base();
        let mut moved = BTreeSet::new();
        let mut steps = 0;
        while last + dt <= now + 1e-9 && steps < 600 {
            for (conn, s) in &mut self.sessions {
                if s.view.locked && s.view.follow_error(base) > 1e-9 {
                    s.view.step_follow(base, dt);
                    moved.insert(*conn);
                }
            }
            last += dt;
            steps += 1;
        }
        if steps == 600 {
            last = now;
        }
        self.last_view_step = Some(last);
        for conn in moved {
            if self.subs.is_subscribed(conn, channels::VIEW_STATE) {
                let v = serde_json::to_value(self.sessions[&conn].view).unwrap_or(Value::Null);
                self.send_client(conn, Envelope::publish(channels::VIEW_STATE, v));
            }
        }
    }

    /// Forwards executor traffic and lets mission control react to task
    /// outcomes until nothing changes.
    fn flush(&mut self) {
        let now = self.now;
        loop {
            let events = self.executor.drain_events();
            let outbox = self.executor.drain_outbox();
            let answers = core::mem::take(&mut self.answers);
            if events.is_empty() && outbox.is_empty() && answers.is_empty() {
                break;
            }
            for o in outbox {
                match o {
                    Outbound::Publish { channel, payload } => self.send_robot(Envelope::publish(&channel, payload)),
                    Outbound::Request { channel, id, payload } => {
                        self.send_robot(Envelope::request(&channel, id, payload))
                    }
                }
            }
            for a in answers {
                self.send_robot(Envelope::publish(mission::channels::CONFIRMATION_ANSWER, a));
            }
            let mut finished = Vec::new();
            for e in events {
                match e {
                    ExecEvent::Record(r) => {
                        if r.parent.is_none() && r.state.is_terminal() {
                            finished.push((r.exec_id, r.state, r.status_text.clone()));
                        }
                        self.publish(
                            action::channels::EXECUTIONS,
                            serde_json::to_value(&r).unwrap_or(Value::Null),
                        );
                    }
                    ExecEvent::Toggle(t) => {
                        self.publish(
                            action::channels::TOGGLES,
                            serde_json::to_value(&t).unwrap_or(Value::Null),
                        );
                    }
                }
            }
            for (exec, state, text) in finished {
                let mut runner = Runner {
                    exec: &mut self.executor,
                    registry: &self.registry,
                    env: &self.env,
                    now,
                    answers: &mut self.answers,
                };
                self.mission.on_task_result(exec, state, &text, &mut runner);
            }
        }
        if self.published_mission.as_ref() != Some(self.mission.state()) {
            let s = self.mission.state().clone();
            self.publish(
                mission::channels::STATE,
                serde_json::to_value(&s).unwrap_or(Value::Null),
            );
            self.published_mission = Some(s);
        }
        for line in self.mission.drain_log() {
            self.log(line.text);
        }
        for cmd in self.estop.drain_outbox() {
            self.send_robot(Envelope::publish(cmd.channel, cmd.payload));
        }
        self.prune();
    }

    fn prune(&mut self) {
        let keep = self.opts.keep_executions;
        if self
            .executor
            .records()
            .filter(|r| r.parent.is_none() && r.state.is_terminal())
            .count()
            <= keep
        {
            return;
        }
        let before: BTreeSet<ExecId> = self.executor.records().map(|r| r.exec_id).collect();
        self.executor.prune(keep);
        let after: BTreeSet<ExecId> = self.executor.records().map(|r| r.exec_id).collect();
        let removed: Vec<ExecId> = before.difference(&after).copied().collect();
        if !removed.is_empty() {
            self.publish(action::channels::EXECUTIONS, json!({ "removed": removed }));
        }
    }

    /// True while any top-level execution is running.
    pub fn busy(&self) -> bool {
        self.executor.running().next().is_some()
    }

    /// Execution state of a record, if still kept.
    pub fn exec_state(&self, id: ExecId) -> Option<ExecState> {
        self.executor.record(id).map(|r| r.state)
    }
}

fn stats_value(s: &CameraStream) -> Value {
    json!({
        "fps": s.stats.fps,
        "latency": s.stats.latency,
        "frames": s.stats.frames,
        "stale": s.stale,
    })
}

/// Parameter as shown to a role: end users see the alias only.
pub fn param_view(p: &SettingsParameter, role: Role) -> Value {
    let mut v = serde_json::to_value(p).unwrap_or(Value::Null);
    if role == Role::EndUser {
        if let Value::Object(m) = &mut v {
            m.remove("path");
        }
    }
    v
}
