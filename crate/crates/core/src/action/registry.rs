use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ActionError;
use crate::script::Script;
use crate::wire::validate_channel;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub String);

impl ActionId {
    pub fn new(s: &str) -> Self {
        Self(s.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActionId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStyle {
    Publish,
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeMode {
    Sequence,
    Parallel,
}

/// Message payload: a fixed value tree or a script evaluated per execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Static(Value),
    Script(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionKind {
    Message {
        channel: String,
        call_style: CallStyle,
        payload: Payload,
    },
    Script {
        script: String,
    },
    Composite {
        children: Vec<ActionId>,
        mode: CompositeMode,
    },
    Toggle {
        children: Vec<ActionId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feedback_channel: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state_extractor: Option<String>,
    },
}

impl ActionKind {
    pub fn children(&self) -> &[ActionId] {
        match self {
            ActionKind::Composite { children, .. } | ActionKind::Toggle { children, .. } => children,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: ActionId,
    pub display_name: String,
    #[serde(flatten)]
    pub kind: ActionKind,
}

impl ActionSpec {
    pub fn new(id: &str, display_name: &str, kind: ActionKind) -> Self {
        Self {
            id: ActionId::new(id),
            display_name: display_name.into(),
            kind,
        }
    }

    /// Checks everything that does not depend on other actions.
    fn check_local(&self) -> Result<(), ActionError> {
        let invalid = |m: String| Err(ActionError::Validation(m));
        if self.id.0.is_empty() {
            return invalid("empty action id".into());
        }
        if self.display_name.trim().is_empty() {
            return invalid(alloc::format!("action `{}` has an empty display name", self.id));
        }
        let parse = |src: &str| {
            Script::parse(src).map_err(|e| ActionError::Validation(alloc::format!("action `{}`: {e}", self.id)))
        };
        match &self.kind {
            ActionKind::Message { channel, payload, .. } => {
                validate_channel(channel)
                    .map_err(|e| ActionError::Validation(alloc::format!("action `{}`: {e}", self.id)))?;
                if let Payload::Script(src) = payload {
                    parse(src)?;
                }
            }
            ActionKind::Script { script } => {
                parse(script)?;
            }
            ActionKind::Composite { children, .. } => {
                if children.is_empty() {
                    return invalid(alloc::format!("composite `{}` has no children", self.id));
                }
            }
            ActionKind::Toggle {
                children,
                feedback_channel,
                state_extractor,
            } => {
                if children.is_empty() {
                    return invalid(alloc::format!("toggle `{}` has no children", self.id));
                }
                if let Some(ch) = feedback_channel {
                    validate_channel(ch)
                        .map_err(|e| ActionError::Validation(alloc::format!("action `{}`: {e}", self.id)))?;
                }
                if let Some(src) = state_extractor {
                    parse(src)?;
                }
                if feedback_channel.is_some() != state_extractor.is_some() {
                    return invalid(alloc::format!(
                        "toggle `{}` needs both a feedback channel and a state extractor, or neither",
                        self.id
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The set of available actions.
#[derive(Debug, Clone, Default)]
pub struct ActionRegistry {
    actions: BTreeMap<ActionId, ActionSpec>,
}

impl ActionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, id: &ActionId) -> Option<&ActionSpec> {
        self.actions.get(id)
    }

    pub fn contains(&self, id: &ActionId) -> bool {
        self.actions.contains_key(id)
    }

    /// Adds one action. Its children must already be registered, which also
    /// rules out reference cycles.
    pub fn register(&mut self, spec: ActionSpec) -> Result<ActionId, ActionError> {
        spec.check_local()?;
        self.check_unique(&spec)?;
        for child in spec.kind.children() {
            if !self.actions.contains_key(child) {
                return Err(ActionError::Validation(alloc::format!(
                    "action `{}` references unknown action `{child}`",
                    spec.id
                )));
            }
        }
        let id = spec.id.clone();
        self.actions.insert(id.clone(), spec);
        Ok(id)
    }

    /// Adds a batch of actions that may reference each other in any order.
    /// Either all are registered or none.
    pub fn register_all(&mut self, specs: Vec<ActionSpec>) -> Result<(), ActionError> {
        let mut staged = self.clone();
        for spec in &specs {
            spec.check_local()?;
            staged.check_unique(spec)?;
            staged.actions.insert(spec.id.clone(), spec.clone());
        }
        for spec in &specs {
            for child in spec.kind.children() {
                if !staged.actions.contains_key(child) {
                    return Err(ActionError::Validation(alloc::format!(
                        "action `{}` references unknown action `{child}`",
                        spec.id
                    )));
                }
            }
        }
        staged.check_acyclic()?;
        *self = staged;
        Ok(())
    }

    fn check_unique(&self, spec: &ActionSpec) -> Result<(), ActionError> {
        if self.actions.contains_key(&spec.id) {
            return Err(ActionError::Duplicate(spec.id.0.clone()));
        }
        if self.actions.values().any(|a| a.display_name == spec.display_name) {
            return Err(ActionError::Duplicate(spec.display_name.clone()));
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), ActionError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark: BTreeMap<&ActionId, u8> = BTreeMap::new();
        for root in self.actions.keys() {
            if mark.get(root).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut stack: Vec<(&ActionId, usize)> = alloc::vec![(root, 0)];
            mark.insert(root, 1);
            while let Some((node, next)) = stack.pop() {
                let children = self.actions[node].kind.children();
                if next < children.len() {
                    stack.push((node, next + 1));
                    let child = &children[next];
                    match mark.get(child).copied().unwrap_or(0) {
                        0 => {
                            mark.insert(child, 1);
                            stack.push((child, 0));
                        }
                        1 => {
                            return Err(ActionError::Validation(alloc::format!(
                                "reference cycle through `{child}`"
                            )))
                        }
                        _ => {}
                    }
                } else {
                    mark.insert(node, 2);
                }
            }
        }
        Ok(())
    }

    /// Removes an action no other action references.
    pub fn unregister(&mut self, id: &ActionId) -> Result<ActionSpec, ActionError> {
        if let Some(user) = self.actions.values().find(|a| a.kind.children().contains(id)) {
            return Err(ActionError::Validation(alloc::format!(
                "`{id}` is used by `{}`",
                user.id
            )));
        }
        self.actions
            .remove(id)
            .ok_or_else(|| ActionError::NotFound(id.0.clone()))
    }

    /// All actions ordered alphabetically by display name.
    pub fn sorted(&self) -> Vec<&ActionSpec> {
        let mut all: Vec<&ActionSpec> = self.actions.values().collect();
        all.sort_by(|a, b| {
            a.display_name
                .to_lowercase()
                .cmp(&b.display_name.to_lowercase())
                .then_with(|| a.display_name.cmp(&b.display_name))
        });
        all
    }

    pub fn specs(&self) -> impl Iterator<Item = &ActionSpec> {
        self.actions.values()
    }

    /// Toggle actions listening on `channel` for state feedback.
    pub fn toggles_on(&self, channel: &str) -> Vec<ActionId> {
        self.actions
            .values()
            .filter(|a| matches!(&a.kind, ActionKind::Toggle { feedback_channel: Some(c), .. } if c == channel))
            .map(|a| a.id.clone())
            .collect()
    }

    /// Every channel some toggle listens on.
    pub fn feedback_channels(&self) -> BTreeSet<String> {
        self.actions
            .values()
            .filter_map(|a| match &a.kind {
                ActionKind::Toggle {
                    feedback_channel: Some(c),
                    ..
                } => Some(c.clone()),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn svc(id: &str, name: &str) -> ActionSpec {
        ActionSpec::new(
            id,
            name,
            ActionKind::Message {
                channel: "robot/arm/unfold".into(),
                call_style: CallStyle::Service,
                payload: Payload::Static(json!({})),
            },
        )
    }

    #[test]
    fn sorted_alphabetically() {
        let mut r = ActionRegistry::new();
        r.register(svc("led", "Toggle LED")).unwrap();
        r.register(svc("stop", "Stop")).unwrap();
        r.register(svc("arm", "Unfold Arm")).unwrap();
        r.register(svc("look", "look at")).unwrap();
        let names: Vec<_> = r.sorted().iter().map(|a| a.display_name.as_str()).collect();
        assert_eq!(names, ["look at", "Stop", "Toggle LED", "Unfold Arm"]);
    }

    #[test]
    fn empty_composite_rejected() {
        let mut r = ActionRegistry::new();
        let err = r
            .register(ActionSpec::new(
                "c",
                "Combo",
                ActionKind::Composite {
                    children: vec![],
                    mode: CompositeMode::Sequence,
                },
            ))
            .unwrap_err();
        assert!(matches!(err, ActionError::Validation(_)));
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut r = ActionRegistry::new();
        r.register(svc("a", "Stop")).unwrap();
        assert_eq!(r.register(svc("b", "Stop")), Err(ActionError::Duplicate("Stop".into())));
    }

    #[test]
    fn dangling_child_rejected() {
        let mut r = ActionRegistry::new();
        let err = r
            .register(ActionSpec::new(
                "c",
                "Combo",
                ActionKind::Composite {
                    children: vec!["ghost".into()],
                    mode: CompositeMode::Parallel,
                },
            ))
            .unwrap_err();
        assert!(matches!(err, ActionError::Validation(_)));
    }

    #[test]
    fn bad_script_rejected_at_registration() {
        let mut r = ActionRegistry::new();
        let err = r
            .register(ActionSpec::new("s", "S", ActionKind::Script { script: "1 +".into() }))
            .unwrap_err();
        assert!(matches!(err, ActionError::Validation(_)));
    }

    #[test]
    fn batch_detects_cycles_and_accepts_any_order() {
        let combo = |id: &str, name: &str, kids: &[&str]| {
            ActionSpec::new(
                id,
                name,
                ActionKind::Composite {
                    children: kids.iter().map(|k| ActionId::new(k)).collect(),
                    mode: CompositeMode::Sequence,
                },
            )
        };
        let mut r = ActionRegistry::new();
        r.register_all(vec![combo("top", "Top", &["leaf"]), svc("leaf", "Leaf")])
            .unwrap();
        assert_eq!(r.len(), 2);

        let mut r = ActionRegistry::new();
        let err = r
            .register_all(vec![combo("a", "A", &["b"]), combo("b", "B", &["a"])])
            .unwrap_err();
        assert!(matches!(err, ActionError::Validation(_)));
        assert!(r.is_empty(), "failed batch leaves registry untouched");
    }

    #[test]
    fn spec_json_shape() {
        let spec = svc("arm", "Unfold Arm");
        let v = serde_json::to_value(&spec).unwrap();
        assert_eq!(
            v,
            json!({"id": "arm", "display_name": "Unfold Arm", "type": "message",
                   "channel": "robot/arm/unfold", "call_style": "service",
                   "payload": {"static": {}}})
        );
        let back: ActionSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unregister_guards_references() {
        let mut r = ActionRegistry::new();
        r.register(svc("leaf", "Leaf")).unwrap();
        r.register(ActionSpec::new(
            "t",
            "T",
            ActionKind::Toggle {
                children: vec!["leaf".into()],
                feedback_channel: None,
                state_extractor: None,
            },
        ))
        .unwrap();
        assert!(r.unregister(&"leaf".into()).is_err());
        r.unregister(&"t".into()).unwrap();
        r.unregister(&"leaf".into()).unwrap();
        assert!(matches!(r.unregister(&"leaf".into()), Err(ActionError::NotFound(_))));
    }
}
