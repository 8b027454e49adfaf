//! Console configuration: cameras, saved camera pairs, actions and their
//! structure tree, settings parameters, sensor panels, view defaults and
//! e-stop channels.
//!
//! Keys this version does not know are kept in `extra` maps at the top level
//! and on camera, pair, settings, sensor and view entries, so files written
//! by newer consoles survive a load/save cycle.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::{ActionRegistry, ActionSpec, ActionTree};
use crate::mission::Mission;
use crate::telemetry::{channels::camera_of, BadDirection, SensorReading};
use crate::view::{Preset, Projection};
use crate::wire::validate_channel;

pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("not found: {0}")]
    NotFound(String),
}

impl ConfigError {
    pub fn code(&self) -> crate::wire::ErrorCode {
        use crate::wire::ErrorCode;
        match self {
            ConfigError::Validation(_) => ErrorCode::Validation,
            ConfigError::Duplicate(_) => ErrorCode::Duplicate,
            ConfigError::NotFound(_) => ErrorCode::NotFound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub id: String,
    pub name: String,
    pub channel: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPair {
    pub name: String,
    pub left: String,
    pub right: String,
    /// Set when a selection found a camera of this pair missing.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub stale: bool,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamKind {
    Bool,
    Int { min: i64, max: i64 },
    Float { min: f64, max: f64 },
    Enum { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawParameter")]
pub struct SettingsParameter {
    pub path: String,
    pub alias: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    pub value: Value,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Deserialize)]
struct RawParameter {
    path: String,
    alias: String,
    #[serde(flatten)]
    kind: ParamKind,
    value: Value,
    #[serde(default)]
    description: String,
    #[serde(flatten)]
    extra: Extra,
}

// Both flattened fields see every unknown key; drop the ones the kind used.
impl From<RawParameter> for SettingsParameter {
    fn from(r: RawParameter) -> Self {
        let mut extra = r.extra;
        let used: &[&str] = match r.kind {
            ParamKind::Bool => &["type"],
            ParamKind::Int { .. } | ParamKind::Float { .. } => &["type", "min", "max"],
            ParamKind::Enum { .. } => &["type", "choices"],
        };
        for k in used {
            extra.remove(*k);
        }
        Self {
            path: r.path,
            alias: r.alias,
            kind: r.kind,
            value: r.value,
            description: r.description,
            extra,
        }
    }
}

impl SettingsParameter {
    /// Checks `value` against the range or choices; integers are accepted
    /// for float parameters.
    pub fn check(&self, value: &Value) -> Result<(), String> {
        let fail = |m: String| Err(alloc::format!("`{}`: {m}", self.alias));
        match &self.kind {
            ParamKind::Bool => match value {
                Value::Bool(_) => Ok(()),
                _ => fail("expected a boolean".into()),
            },
            ParamKind::Int { min, max } => match value.as_i64() {
                Some(v) if (*min..=*max).contains(&v) => Ok(()),
                Some(v) => fail(alloc::format!("{v} outside [{min}, {max}]")),
                None => fail("expected an integer".into()),
            },
            ParamKind::Float { min, max } => match value.as_f64() {
                Some(v) if v >= *min && v <= *max => Ok(()),
                Some(v) => fail(alloc::format!("{v} outside [{min}, {max}]")),
                None => fail("expected a number".into()),
            },
            ParamKind::Enum { choices } => match value.as_str() {
                Some(s) if choices.iter().any(|c| c == s) => Ok(()),
                _ => fail(alloc::format!("expected one of {}", choices.join(", "))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warn_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub danger_threshold: Option<f64>,
    pub direction: BadDirection,
    #[serde(flatten)]
    pub extra: Extra,
}

impl SensorConfig {
    pub fn reading(&self, value: f64) -> SensorReading {
        SensorReading {
            name: self.name.clone(),
            value,
            unit: self.unit.clone(),
            warn_threshold: self.warn_threshold,
            danger_threshold: self.danger_threshold,
            direction: self.direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDefaults {
    pub kp: f64,
    pub distance: f64,
    pub height: f64,
    pub projection: Projection,
    pub preset: Preset,
    pub locked: bool,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Default for ViewDefaults {
    fn default() -> Self {
        Self {
            kp: crate::view::DEFAULT_KP,
            distance: crate::view::DEFAULT_DISTANCE,
            height: crate::view::DEFAULT_HEIGHT,
            projection: Projection::Perspective,
            preset: Preset::Back,
            locked: true,
            extra: Extra::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsoleConfig {
    pub cameras: Vec<CameraConfig>,
    pub camera_pairs: Vec<CameraPair>,
    pub actions: Vec<ActionSpec>,
    pub action_tree: ActionTree,
    pub settings: Vec<SettingsParameter>,
    pub sensors: Vec<SensorConfig>,
    pub view: ViewDefaults,
    /// Hardware e-stop channels reported by the robot.
    pub estop_channels: Vec<String>,
    pub missions: Vec<Mission>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ConsoleConfig {
    pub fn camera(&self, id: &str) -> Option<&CameraConfig> {
        self.cameras.iter().find(|c| c.id == id)
    }

    /// Every problem found, including each dangling reference.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut ids = BTreeMap::new();
        for c in &self.cameras {
            if ids.insert(c.id.as_str(), ()).is_some() {
                out.push(alloc::format!("duplicate camera id `{}`", c.id));
            }
            if camera_of(&c.channel).is_none() || validate_channel(&c.channel).is_err() {
                out.push(alloc::format!(
                    "camera `{}`: `{}` is not an image channel",
                    c.id,
                    c.channel
                ));
            }
        }
        let mut names = BTreeMap::new();
        for c in &self.cameras {
            if names.insert(c.name.as_str(), ()).is_some() {
                out.push(alloc::format!("duplicate camera name `{}`", c.name));
            }
        }
        let mut pair_names = BTreeMap::new();
        for p in &self.camera_pairs {
            if pair_names.insert(p.name.as_str(), ()).is_some() {
                out.push(alloc::format!("duplicate camera pair `{}`", p.name));
            }
            for id in [&p.left, &p.right] {
                if !p.stale && self.camera(id).is_none() {
                    out.push(alloc::format!(
                        "camera pair `{}` references missing camera `{id}`",
                        p.name
                    ));
                }
            }
        }
        let mut registry = ActionRegistry::new();
        if let Err(e) = registry.register_all(self.actions.clone()) {
            out.push(e.to_string());
        } else if let Err(errs) = self.action_tree.validate(&registry) {
            out.extend(errs);
        }
        let mut paths = BTreeMap::new();
        for s in &self.settings {
            if paths.insert(s.path.as_str(), ()).is_some() {
                out.push(alloc::format!("duplicate settings path `{}`", s.path));
            }
            if let Err(e) = s.check(&s.value) {
                out.push(e);
            }
        }
        for s in &self.sensors {
            if let Err(e) = s.reading(0.0).check_thresholds() {
                out.push(e.to_string());
            }
        }
        if !(self.view.kp > 0.0 && self.view.kp * (1.0 / crate::view::DEFAULT_TICK_HZ) < 1.0) {
            out.push(alloc::format!("view gain {} is not stable", self.view.kp));
        }
        let mut estops = BTreeMap::new();
        for e in &self.estop_channels {
            if e == crate::estop::SOFTWARE_CHANNEL || estops.insert(e.as_str(), ()).is_some() {
                out.push(alloc::format!("duplicate e-stop channel `{e}`"));
            }
        }
        if out.is_empty() {
            for m in &self.missions {
                if let Err(e) = m.validate(&registry) {
                    out.push(e.to_string());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(p))
        }
    }

    /// Adds a camera with a fresh id derived from the name.
    pub fn add_camera(&mut self, name: &str, channel: &str) -> Result<&CameraConfig, ConfigError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(ConfigError::Validation(alloc::vec!["camera name is empty".into()]));
        }
        if self.cameras.iter().any(|c| c.name == name) {
            return Err(ConfigError::Duplicate(alloc::format!("camera name `{name}`")));
        }
        if camera_of(channel).is_none() || validate_channel(channel).is_err() {
            return Err(ConfigError::Validation(alloc::vec![alloc::format!(
                "`{channel}` is not an image channel"
            )]));
        }
        let base: String = name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() {
                    c.to_ascii_lowercase()
                } else {
                    '_'
                }
            })
            .collect();
        let base = if base.is_empty() { "camera".to_string() } else { base };
        let mut id = base.clone();
        let mut n = 2;
        while self.camera(&id).is_some() {
            id = alloc::format!("{base}_{n}");
            n += 1;
        }
        self.cameras.push(CameraConfig {
            id,
            name: name.into(),
            channel: channel.into(),
            extra: Extra::new(),
        });
        Ok(self.cameras.last().unwrap())
    }

    /// Inserts or replaces a named pair. Returns whether an existing pair was
    /// overwritten.
    pub fn save_camera_pair(&mut self, name: &str, left: &str, right: &str) -> Result<bool, ConfigError> {
        for id in [left, right] {
            if self.camera(id).is_none() {
                return Err(ConfigError::NotFound(alloc::format!("camera `{id}`")));
            }
        }
        let pair = CameraPair {
            name: name.into(),
            left: left.into(),
            right: right.into(),
            stale: false,
            extra: Extra::new(),
        };
        match self.camera_pairs.iter_mut().find(|p| p.name == name) {
            Some(existing) => {
                let extra = core::mem::take(&mut existing.extra);
                *existing = CameraPair { extra, ..pair };
                Ok(true)
            }
            None => {
                self.camera_pairs.push(pair);
                Ok(false)
            }
        }
    }

    /// Looks up a pair for selection; a pair whose cameras no longer exist is
    /// flagged stale and reported as not found.
    pub fn select_camera_pair(&mut self, name: &str) -> Result<CameraPair, ConfigError> {
        let missing = {
            let pair = self
                .camera_pairs
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| ConfigError::NotFound(alloc::format!("camera pair `{name}`")))?;
            [&pair.left, &pair.right]
                .into_iter()
                .find(|id| self.camera(id).is_none())
                .cloned()
        };
        let pair = self.camera_pairs.iter_mut().find(|p| p.name == name).unwrap();
        if let Some(id) = missing {
            pair.stale = true;
            return Err(ConfigError::NotFound(alloc::format!("camera `{id}` of pair `{name}`")));
        }
        pair.stale = false;
        Ok(pair.clone())
    }

    pub fn remove_camera(&mut self, id: &str) -> Result<CameraConfig, ConfigError> {
        let i = self
            .cameras
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| ConfigError::NotFound(alloc::format!("camera `{id}`")))?;
        Ok(self.cameras.remove(i))
    }
}

/// Configuration used by `config init` and the embedded demo.
pub fn demo_config() -> ConsoleConfig {
    use crate::action::{ActionKind, CallStyle, CompositeMode, Folder, Payload, TreeNode};
    use serde_json::json;

    let camera = |id: &str, name: &str| CameraConfig {
        id: id.into(),
        name: name.into(),
        channel: crate::telemetry::channels::camera_frame(id),
        extra: Extra::new(),
    };
    let service = |id: &str, name: &str, channel: &str, payload: Payload| {
        ActionSpec::new(
            id,
            name,
            ActionKind::Message {
                channel: channel.into(),
                call_style: CallStyle::Service,
                payload,
            },
        )
    };
    let actions = alloc::vec![
        service("led_on", "LED on", "robot/led", Payload::Static(json!({ "on": true }))),
        service(
            "led_off",
            "LED off",
            "robot/led",
            Payload::Static(json!({ "on": false }))
        ),
        ActionSpec::new(
            "led_toggle",
            "LED",
            ActionKind::Toggle {
                children: alloc::vec!["led_off".into(), "led_on".into()],
                feedback_channel: Some("robot/led_state".into()),
                state_extractor: Some("message.on ? 1 : 0".into()),
            },
        ),
        service(
            "unfold_arm",
            "Unfold Arm",
            "robot/look_at",
            Payload::Static(json!({ "point": [0.8, 0.0, 0.3], "direction": [1.0, 0.0, 0.0] })),
        ),
        service(
            "look_at",
            "Look at",
            "robot/look_at",
            Payload::Script("{ point: tool.look_at.point, direction: tool.look_at.direction, standoff: 0.3 }".into()),
        ),
        service(
            "drive_to_waypoint",
            "Drive to waypoint",
            "robot/drive_to",
            Payload::Script("{ x: tool.waypoint.point[0], y: tool.waypoint.point[1] }".into()),
        ),
        service(
            "flippers_up",
            "Flippers up",
            "robot/flippers",
            Payload::Static(json!({ "front": 1.2, "rear": 1.2 }))
        ),
        service(
            "flippers_flat",
            "Flippers flat",
            "robot/flippers",
            Payload::Static(json!({ "front": 0.0, "rear": 0.0 }))
        ),
        ActionSpec::new(
            "stair_posture",
            "Stair posture",
            ActionKind::Composite {
                children: alloc::vec!["flippers_up".into(), "led_on".into()],
                mode: CompositeMode::Sequence,
            },
        ),
        service(
            "inspect_confirm",
            "Confirm inspection",
            "robot/ask",
            Payload::Static(
                json!({ "prompt": "Inspection point reached. Continue?", "options": ["continue", "retry"], "deadline": 30.0 })
            ),
        ),
        service(
            "mode_manipulation",
            "Manipulation mode",
            "robot/set_mode",
            Payload::Static(json!({ "mode": "manipulation" })),
        ),
        service(
            "mode_teleoperation",
            "Teleoperation mode",
            "robot/set_mode",
            Payload::Static(json!({ "mode": "teleoperation" })),
        ),
    ];
    let folder = |name: &str, ids: &[&str]| {
        let mut f = Folder::new(name);
        f.children = ids.iter().map(|i| TreeNode::Action((*i).into())).collect();
        TreeNode::Folder(f)
    };
    let mut tree = ActionTree::new();
    tree.root.children = alloc::vec![
        folder(
            "Driving",
            &["drive_to_waypoint", "flippers_up", "flippers_flat", "stair_posture"]
        ),
        folder(
            "Manipulation",
            &["unfold_arm", "look_at", "mode_manipulation", "mode_teleoperation"]
        ),
        TreeNode::Action("led_toggle".into()),
    ];
    let param = |path: &str, alias: &str, kind: ParamKind, value: Value, description: &str| SettingsParameter {
        path: path.into(),
        alias: alias.into(),
        kind,
        value,
        description: description.into(),
        extra: Extra::new(),
    };
    ConsoleConfig {
        cameras: alloc::vec![
            camera("front", "Front"),
            camera("rear", "Rear"),
            camera("gripper", "Gripper")
        ],
        camera_pairs: alloc::vec![
            CameraPair {
                name: "Driving".into(),
                left: "front".into(),
                right: "rear".into(),
                stale: false,
                extra: Extra::new()
            },
            CameraPair {
                name: "Manipulation".into(),
                left: "gripper".into(),
                right: "front".into(),
                stale: false,
                extra: Extra::new()
            },
        ],
        actions,
        action_tree: tree,
        settings: alloc::vec![
            param(
                "planner/max_vel_x",
                "Driving speed",
                ParamKind::Float { min: 0.0, max: 1.0 },
                json!(0.5),
                "Top speed of autonomous driving, m/s"
            ),
            param(
                "planner/obstacle_margin",
                "Obstacle margin",
                ParamKind::Float { min: 0.05, max: 1.0 },
                json!(0.3),
                "Clearance kept to obstacles, m"
            ),
            param(
                "arm/collision_check",
                "Arm collision check",
                ParamKind::Bool,
                json!(true),
                "Reject arm motions in collision"
            ),
            param(
                "lights/level",
                "Light level",
                ParamKind::Enum {
                    choices: alloc::vec!["off".into(), "dim".into(), "bright".into()]
                },
                json!("dim"),
                ""
            ),
        ],
        sensors: alloc::vec![SensorConfig {
            name: "co2".into(),
            unit: "ppm".into(),
            warn_threshold: Some(1000.0),
            danger_threshold: Some(5000.0),
            direction: BadDirection::HighIsBad,
            extra: Extra::new(),
        }],
        view: ViewDefaults::default(),
        estop_channels: alloc::vec!["hw_base".into(), "hw_remote".into()],
        missions: alloc::vec![Mission {
            name: "Inspection round".into(),
            tasks: alloc::vec![
                crate::mission::Task {
                    label: "Unfold arm".into(),
                    action_id: "unfold_arm".into(),
                    context: Value::Null
                },
                crate::mission::Task {
                    label: "Confirm".into(),
                    action_id: "inspect_confirm".into(),
                    context: Value::Null
                },
                crate::mission::Task {
                    label: "Flippers flat".into(),
                    action_id: "flippers_flat".into(),
                    context: Value::Null
                },
            ],
        }],
        extra: Extra::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn demo_is_valid() {
        assert_eq!(demo_config().problems(), Vec::<String>::new());
    }

    #[test]
    fn default_is_valid() {
        ConsoleConfig::default().validate().unwrap();
    }

    #[test]
    fn add_camera_examples() {
        let mut c = ConsoleConfig::default();
        let cam = c.add_camera("Gripper", "camera/gripper/frame").unwrap().clone();
        assert_eq!(cam.id, "gripper");
        assert!(matches!(
            c.add_camera("Gripper", "camera/x/frame"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            c.add_camera("Other", "robot/battery"),
            Err(ConfigError::Validation(_))
        ));
        c.validate().unwrap();
    }

    #[test]
    fn dangling_pair_is_named() {
        let mut c = demo_config();
        c.camera_pairs[0].right = "thermal".into();
        let Err(ConfigError::Validation(p)) = c.validate() else {
            panic!()
        };
        assert!(p.iter().any(|m| m.contains("thermal")), "{p:?}");
    }

    #[test]
    fn unknown_keys_survive_serde() {
        let mut v = serde_json::to_value(demo_config()).unwrap();
        v["future_feature"] = json!(1);
        v["cameras"][0]["fov"] = json!({ "h": 90 });
        let c: ConsoleConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(c.extra["future_feature"], json!(1));
        assert_eq!(serde_json::to_value(&c).unwrap(), v);
    }

    #[test]
    fn pair_upsert_and_stale() {
        let mut c = demo_config();
        assert!(!c.save_camera_pair("Rear view", "rear", "front").unwrap());
        assert!(c.save_camera_pair("Rear view", "rear", "gripper").unwrap());
        assert!(matches!(
            c.save_camera_pair("x", "nope", "front"),
            Err(ConfigError::NotFound(_))
        ));
        c.remove_camera("gripper").unwrap();
        assert!(matches!(
            c.select_camera_pair("Rear view"),
            Err(ConfigError::NotFound(_))
        ));
        assert!(c.camera_pairs.iter().find(|p| p.name == "Rear view").unwrap().stale);
        assert_eq!(c.select_camera_pair("Driving").unwrap().left, "front");
    }

    #[test]
    fn settings_ranges() {
        let c = demo_config();
        let speed = &c.settings[0];
        assert!(speed.check(&json!(0.5)).is_ok());
        assert!(speed.check(&json!(1)).is_ok());
        assert!(speed.check(&json!(1.5)).is_err());
        assert!(c.settings[3].check(&json!("bright")).is_ok());
        assert!(c.settings[3].check(&json!("max")).is_err());
    }
}
