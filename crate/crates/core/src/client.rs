//! Client-side state model.
//!
//! A [`ClientModel`] folds the envelopes a client receives into the state a
//! user interface would display. Snapshots and deltas use the same messages,
//! so a late subscriber and an early one end up with the same model.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

use crate::action::channels as act;
use crate::console::channels as con;
use crate::estop::channels as es;
use crate::mission::channels as mis;
use crate::wire::{Envelope, Kind};

/// Channels a full operator client subscribes to.
pub const STATE_CHANNELS: [&str; 10] = [
    mis::STATE,
    es::SUMMARY,
    act::TOGGLES,
    act::EXECUTIONS,
    act::LIST,
    act::TREE,
    crate::telemetry::channels::MODE,
    crate::telemetry::channels::DIAGNOSTICS,
    crate::telemetry::channels::CONNECTION,
    con::SETTINGS_UPDATES,
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientModel {
    pub session: Option<Value>,
    pub mission: Option<Value>,
    pub estop: Option<Value>,
    pub toggles: BTreeMap<String, Value>,
    pub executions: BTreeMap<u64, Value>,
    /// Settings keyed by alias.
    pub settings: BTreeMap<String, Value>,
    /// Latest payload of every other channel.
    pub latest: BTreeMap<String, Value>,
    /// Replies keyed by request id.
    pub replies: BTreeMap<String, Envelope>,
    pub received: usize,
}

impl ClientModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, env: &Envelope) {
        self.received += 1;
        match env.kind {
            Kind::ServiceResponse | Kind::Error => {
                if let Some(id) = &env.id {
                    self.replies.insert(id.clone(), env.clone());
                }
                return;
            }
            Kind::Publish => {}
            _ => return,
        }
        let p = &env.payload;
        match env.channel.as_str() {
            con::SESSION => self.session = Some(p.clone()),
            mis::STATE => self.mission = Some(p.clone()),
            es::SUMMARY => self.estop = Some(p.clone()),
            act::TOGGLES => {
                if let Some(id) = p.get("action_id").and_then(Value::as_str) {
                    self.toggles.insert(id.to_string(), p.clone());
                }
            }
            act::EXECUTIONS => {
                if let Some(removed) = p.get("removed").and_then(Value::as_array) {
                    for id in removed.iter().filter_map(Value::as_u64) {
                        self.executions.remove(&id);
                    }
                } else if let Some(id) = p.get("exec_id").and_then(Value::as_u64) {
                    self.executions.insert(id, p.clone());
                }
            }
            con::SETTINGS_UPDATES => {
                if let Some(alias) = p.get("alias").and_then(Value::as_str) {
                    self.settings.insert(alias.to_string(), p.clone());
                }
            }
            other => {
                self.latest.insert(other.to_string(), p.clone());
            }
        }
    }

    /// Current index of a toggle action, if known.
    pub fn toggle_index(&self, id: &str) -> Option<u64> {
        self.toggles.get(id)?.get("current_index")?.as_u64()
    }

    /// Toggle indices of every known toggle.
    pub fn toggle_indices(&self) -> BTreeMap<String, Option<u64>> {
        self.toggles
            .iter()
            .map(|(k, v)| (k.clone(), v.get("current_index").and_then(Value::as_u64)))
            .collect()
    }

    pub fn mission_phase(&self) -> Option<&str> {
        self.mission.as_ref()?.get("phase")?.as_str()
    }

    pub fn estop_engaged(&self) -> Option<bool> {
        self.estop.as_ref()?.get("any_pressed")?.as_bool()
    }

    pub fn reply(&self, id: &str) -> Option<&Envelope> {
        self.replies.get(id)
    }

    /// Envelopes that subscribe to `channels`.
    pub fn subscriptions(channels: &[&str]) -> Vec<Envelope> {
        channels.iter().map(|c| Envelope::subscribe(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn toggles_and_removals() {
        let mut m = ClientModel::new();
        m.apply(&Envelope::publish(
            act::TOGGLES,
            json!({ "action_id": "led", "current_index": 1 }),
        ));
        assert_eq!(m.toggle_index("led"), Some(1));
        m.apply(&Envelope::publish(
            act::EXECUTIONS,
            json!({ "exec_id": 4, "state": "running" }),
        ));
        m.apply(&Envelope::publish(act::EXECUTIONS, json!({ "removed": [4] })));
        assert!(m.executions.is_empty());
    }

    #[test]
    fn replies_are_kept_by_id() {
        let mut m = ClientModel::new();
        let r = Envelope::request("a/b", "x1", Value::Null);
        m.apply(&Envelope::response_to(&r, json!({ "ok": true })));
        assert_eq!(m.reply("x1").unwrap().payload["ok"], true);
    }
}
