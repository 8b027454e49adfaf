//! Execution manager: tracks every execution record and drives composites.
//!
//! Executions are event driven. Message actions emit [`Outbound`] traffic
//! and, for service calls, wait for the matching response (or the service
//! timeout). Composite and toggle executions own child records and reach a
//! terminal state from their children's outcomes:
//!
//! - Sequence runs children one after another and stops at the first child
//!   that does not succeed, taking over its state.
//! - Parallel starts every child and ends once all children ended: Failed if
//!   any failed, else Canceled if any was canceled, else Succeeded.
//! - Toggle runs child `(index + 1) mod n`, advances the index immediately
//!   and ends with the child's state.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ActionError, ActionId, ActionKind, ActionRegistry, CallStyle, CompositeMode, Payload};
use crate::script::{Bindings, Script};
use crate::wire::DEFAULT_SERVICE_TIMEOUT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExecId(pub u64);

impl core::fmt::Display for ExecId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "exec-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecState {
    Running,
    Succeeded,
    Failed,
    Canceled,
}

impl ExecState {
    pub const ALL: [ExecState; 4] = [
        ExecState::Running,
        ExecState::Succeeded,
        ExecState::Failed,
        ExecState::Canceled,
    ];

    pub fn is_terminal(self) -> bool {
        self != ExecState::Running
    }

    /// Running may end in any terminal state; terminal states are absorbing.
    pub fn can_transition(self, to: ExecState) -> bool {
        self == ExecState::Running && to.is_terminal()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub exec_id: ExecId,
    pub action_id: ActionId,
    pub state: ExecState,
    pub status_text: String,
    /// Progress is indeterminate while running.
    pub progress_indeterminate: bool,
    pub started: f64,
    pub ended: Option<f64>,
    pub child_records: Vec<ExecId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<ExecId>,
}

/// Current state of one toggle action; `current_index` is in `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleState {
    pub action_id: ActionId,
    pub current_index: usize,
}

/// Outbound traffic requested by an execution.
#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    Publish {
        channel: String,
        payload: Value,
    },
    Request {
        channel: String,
        id: String,
        payload: Value,
    },
}

/// Change notifications for broadcast.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecEvent {
    Record(ExecutionRecord),
    Toggle(ToggleState),
}

/// Values scripts may read besides the execution context.
#[derive(Debug, Clone, Default)]
pub struct ExecEnv {
    /// Latest tool input per tool, e.g. `{"waypoint": {...}}`.
    pub tool: Value,
    /// Current settings values by alias-free parameter path.
    pub settings: Value,
}

#[derive(Debug, Clone)]
struct InFlight {
    exec: ExecId,
    deadline: f64,
}

#[derive(Debug, Clone)]
pub struct Executor {
    records: BTreeMap<ExecId, ExecutionRecord>,
    contexts: BTreeMap<ExecId, Value>,
    toggles: BTreeMap<ActionId, usize>,
    in_flight: BTreeMap<String, InFlight>,
    next_exec: u64,
    next_request: u64,
    service_timeout: f64,
    outbox: Vec<Outbound>,
    events: Vec<ExecEvent>,
    /// Records that became terminal and whose parent still has to react.
    finished: VecDeque<ExecId>,
}

impl Default for Executor {
    fn default() -> Self {
        Self::new()
    }
}

impl Executor {
    pub fn new() -> Self {
        Self {
            records: BTreeMap::new(),
            contexts: BTreeMap::new(),
            toggles: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            next_exec: 1,
            next_request: 1,
            service_timeout: DEFAULT_SERVICE_TIMEOUT,
            outbox: Vec::new(),
            events: Vec::new(),
            finished: VecDeque::new(),
        }
    }

    pub fn with_service_timeout(mut self, seconds: f64) -> Self {
        self.service_timeout = seconds;
        self
    }

    pub fn record(&self, id: ExecId) -> Option<&ExecutionRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &ExecutionRecord> {
        self.records.values()
    }

    /// Top-level records that are still running.
    pub fn running(&self) -> impl Iterator<Item = &ExecutionRecord> {
        self.records
            .values()
            .filter(|r| r.parent.is_none() && r.state == ExecState::Running)
    }

    pub fn is_running(&self, action: &ActionId) -> bool {
        self.records
            .values()
            .any(|r| r.state == ExecState::Running && &r.action_id == action)
    }

    pub fn toggle_index(&self, action: &ActionId) -> usize {
        self.toggles.get(action).copied().unwrap_or(0)
    }

    pub fn toggle_indices(&self) -> &BTreeMap<ActionId, usize> {
        &self.toggles
    }

    pub fn drain_outbox(&mut self) -> Vec<Outbound> {
        core::mem::take(&mut self.outbox)
    }

    pub fn drain_events(&mut self) -> Vec<ExecEvent> {
        core::mem::take(&mut self.events)
    }

    /// Starts a top-level execution.
    pub fn execute(
        &mut self,
        registry: &ActionRegistry,
        action: &ActionId,
        context: Value,
        env: &ExecEnv,
        now: f64,
    ) -> Result<ExecId, ActionError> {
        if !registry.contains(action) {
            return Err(ActionError::NotFound(action.0.clone()));
        }
        if self.is_running(action) {
            return Err(ActionError::Busy(action.0.clone()));
        }
        let id = self.spawn(registry, action, None, context, env, now);
        self.settle(registry, env, now);
        Ok(id)
    }

    fn spawn(
        &mut self,
        registry: &ActionRegistry,
        action: &ActionId,
        parent: Option<ExecId>,
        context: Value,
        env: &ExecEnv,
        now: f64,
    ) -> ExecId {
        let id = ExecId(self.next_exec);
        self.next_exec += 1;
        let spec = registry.get(action);
        let name = spec.map(|s| s.display_name.as_str()).unwrap_or(action.as_str());
        let record = ExecutionRecord {
            exec_id: id,
            action_id: action.clone(),
            state: ExecState::Running,
            status_text: alloc::format!("{name} running"),
            progress_indeterminate: true,
            started: now,
            ended: None,
            child_records: Vec::new(),
            parent,
        };
        self.records.insert(id, record);
        if let Some(p) = parent {
            if let Some(pr) = self.records.get_mut(&p) {
                pr.child_records.push(id);
            }
        }
        self.contexts.insert(id, context);
        self.emit(id);

        let Some(spec) = spec else {
            self.finish(id, ExecState::Failed, alloc::format!("unknown action `{action}`"), now);
            return id;
        };
        match spec.kind.clone() {
            ActionKind::Message {
                channel,
                call_style,
                payload,
            } => {
                let payload = match payload {
                    Payload::Static(v) => Ok(v),
                    Payload::Script(src) => self.eval_script(&src, id, env, now),
                };
                match (payload, call_style) {
                    (Err(e), _) => {
                        self.finish(id, ExecState::Failed, e, now);
                    }
                    (Ok(payload), CallStyle::Publish) => {
                        self.outbox.push(Outbound::Publish { channel, payload });
                        self.finish(id, ExecState::Succeeded, "sent".into(), now);
                    }
                    (Ok(payload), CallStyle::Service) => {
                        let req = alloc::format!("act-{}", self.next_request);
                        self.next_request += 1;
                        self.in_flight.insert(
                            req.clone(),
                            InFlight {
                                exec: id,
                                deadline: now + self.service_timeout,
                            },
                        );
                        self.outbox.push(Outbound::Request {
                            channel,
                            id: req,
                            payload,
                        });
                    }
                }
            }
            ActionKind::Script { script } => match self.eval_script(&script, id, env, now) {
                Err(e) => {
                    self.finish(id, ExecState::Failed, e, now);
                }
                Ok(Value::Bool(false)) => {
                    self.finish(id, ExecState::Failed, "script returned false".into(), now);
                }
                Ok(v) => {
                    let text = match v {
                        Value::String(s) => s,
                        Value::Null | Value::Bool(true) => "done".to_string(),
                        other => other.to_string(),
                    };
                    self.finish(id, ExecState::Succeeded, text, now);
                }
            },
            ActionKind::Composite { children, mode } => {
                let ctx = self.contexts.get(&id).cloned().unwrap_or(Value::Null);
                match mode {
                    CompositeMode::Sequence => {
                        self.spawn(registry, &children[0], Some(id), ctx, env, now);
                    }
                    CompositeMode::Parallel => {
                        for child in &children {
                            if self.state(id) != Some(ExecState::Running) {
                                break;
                            }
                            self.spawn(registry, child, Some(id), ctx.clone(), env, now);
                        }
                    }
                }
            }
            ActionKind::Toggle { children, .. } => {
                let n = children.len();
                let next = (self.toggle_index(action) + 1) % n;
                self.set_toggle(action, next);
                let ctx = self.contexts.get(&id).cloned().unwrap_or(Value::Null);
                self.spawn(registry, &children[next], Some(id), ctx, env, now);
            }
        }
        id
    }

    fn eval_script(&self, src: &str, id: ExecId, env: &ExecEnv, now: f64) -> Result<Value, String> {
        let script = Script::parse(src).map_err(|e| e.to_string())?;
        let context = self.contexts.get(&id).cloned().unwrap_or(Value::Null);
        let now = Value::from(now);
        let bindings = Bindings::new()
            .with("context", &context)
            .with("tool", &env.tool)
            .with("settings", &env.settings)
            .with("now", &now);
        script.eval(&bindings).map_err(|e| e.to_string())
    }

    fn state(&self, id: ExecId) -> Option<ExecState> {
        self.records.get(&id).map(|r| r.state)
    }

    fn set_toggle(&mut self, action: &ActionId, index: usize) {
        self.toggles.insert(action.clone(), index);
        self.events.push(ExecEvent::Toggle(ToggleState {
            action_id: action.clone(),
            current_index: index,
        }));
    }

    fn emit(&mut self, id: ExecId) {
        if let Some(r) = self.records.get(&id) {
            self.events.push(ExecEvent::Record(r.clone()));
        }
    }

    /// Moves a running record to a terminal state. Returns false if it was
    /// already terminal.
    fn finish(&mut self, id: ExecId, state: ExecState, text: String, now: f64) -> bool {
        let Some(r) = self.records.get_mut(&id) else {
            return false;
        };
        if !r.state.can_transition(state) {
            return false;
        }
        r.state = state;
        r.status_text = text;
        r.progress_indeterminate = false;
        r.ended = Some(now);
        self.contexts.remove(&id);
        self.emit(id);
        self.finished.push_back(id);
        true
    }

    /// Lets parents react to children that ended.
    fn settle(&mut self, registry: &ActionRegistry, env: &ExecEnv, now: f64) {
        while let Some(child) = self.finished.pop_front() {
            let Some(parent) = self.records.get(&child).and_then(|r| r.parent) else {
                continue;
            };
            if self.state(parent) != Some(ExecState::Running) {
                continue;
            }
            let parent_rec = &self.records[&parent];
            let Some(spec) = registry.get(&parent_rec.action_id) else {
                continue;
            };
            let child_state = self.records[&child].state;
            let child_text = self.records[&child].status_text.clone();
            match &spec.kind {
                ActionKind::Composite {
                    children,
                    mode: CompositeMode::Sequence,
                } => {
                    let done = parent_rec.child_records.len();
                    if child_state != ExecState::Succeeded {
                        self.finish(parent, child_state, child_text, now);
                    } else if done < children.len() {
                        let next = children[done].clone();
                        let ctx = self.contexts.get(&parent).cloned().unwrap_or(Value::Null);
                        self.spawn(registry, &next, Some(parent), ctx, env, now);
                    } else {
                        self.finish(parent, ExecState::Succeeded, "done".into(), now);
                    }
                }
                ActionKind::Composite {
                    mode: CompositeMode::Parallel,
                    ..
                } => {
                    let states: Vec<ExecState> =
                        parent_rec.child_records.iter().map(|c| self.records[c].state).collect();
                    if states.iter().all(|s| s.is_terminal()) {
                        let (state, text) = parallel_outcome(&states);
                        self.finish(parent, state, text.into(), now);
                    }
                }
                ActionKind::Toggle { .. } => {
                    self.finish(parent, child_state, child_text, now);
                }
                _ => {}
            }
        }
    }

    /// Cancels a record and every running descendant. Terminal records are
    /// left untouched. Returns whether anything changed.
    pub fn cancel(
        &mut self,
        registry: &ActionRegistry,
        id: ExecId,
        env: &ExecEnv,
        now: f64,
    ) -> Result<bool, ActionError> {
        let Some(rec) = self.records.get(&id) else {
            return Err(ActionError::NotFound(id.to_string()));
        };
        if rec.state.is_terminal() {
            return Ok(false);
        }
        // Parent first, so that children ending do not drive it further.
        let mut stack = alloc::vec![id];
        while let Some(cur) = stack.pop() {
            if self.finish(cur, ExecState::Canceled, "canceled".into(), now) {
                let abandoned: Vec<String> = self
                    .in_flight
                    .iter()
                    .filter(|(_, f)| f.exec == cur)
                    .map(|(k, _)| k.clone())
                    .collect();
                for req in abandoned {
                    self.in_flight.remove(&req);
                    self.outbox.push(Outbound::Publish {
                        channel: super::channels::ROBOT_CANCEL.into(),
                        payload: serde_json::json!({ "request_id": req }),
                    });
                }
                stack.extend(self.records[&cur].child_records.iter().rev().copied());
            }
        }
        self.settle(registry, env, now);
        Ok(true)
    }

    /// Request ids still awaiting a response.
    pub fn pending_requests(&self) -> impl Iterator<Item = &str> {
        self.in_flight.keys().map(String::as_str)
    }

    /// Handles the response (or error) to an outbound service request.
    ///
    /// A response payload ends the call as Canceled when it carries
    /// `"canceled": true`, as Succeeded when it carries `"success": true`
    /// and as Failed otherwise. Returns false for unknown request ids.
    pub fn on_response(
        &mut self,
        registry: &ActionRegistry,
        request_id: &str,
        payload: &Value,
        is_error: bool,
        env: &ExecEnv,
        now: f64,
    ) -> bool {
        let Some(flight) = self.in_flight.remove(request_id) else {
            return false;
        };
        let message = payload.get("message").and_then(Value::as_str).unwrap_or("").to_string();
        let (state, text) = if is_error {
            (ExecState::Failed, message)
        } else if payload.get("canceled") == Some(&Value::Bool(true)) {
            (ExecState::Canceled, non_empty(message, "canceled by robot"))
        } else if payload.get("success") == Some(&Value::Bool(true)) {
            (ExecState::Succeeded, non_empty(message, "done"))
        } else {
            (ExecState::Failed, non_empty(message, "failed"))
        };
        self.finish(flight.exec, state, text, now);
        self.settle(registry, env, now);
        true
    }

    /// Progress from a long-running service call restarts its timeout.
    pub fn on_progress(&mut self, request_id: &str, now: f64) -> bool {
        match self.in_flight.get_mut(request_id) {
            Some(f) => {
                f.deadline = now + self.service_timeout;
                true
            }
            None => false,
        }
    }

    /// Fails service calls whose deadline passed.
    pub fn tick(&mut self, registry: &ActionRegistry, env: &ExecEnv, now: f64) {
        let expired: Vec<(String, ExecId)> = self
            .in_flight
            .iter()
            .filter(|(_, f)| f.deadline <= now)
            .map(|(k, f)| (k.clone(), f.exec))
            .collect();
        for (req, exec) in expired {
            self.in_flight.remove(&req);
            self.finish(exec, ExecState::Failed, "service call timed out".into(), now);
        }
        self.settle(registry, env, now);
    }

    /// Applies toggle state feedback: the extractor maps `message` to the
    /// current child index. Out-of-range or non-integer results are rejected
    /// and leave the index unchanged.
    pub fn on_toggle_feedback(
        &mut self,
        registry: &ActionRegistry,
        action: &ActionId,
        message: &Value,
    ) -> Result<usize, ActionError> {
        let spec = registry
            .get(action)
            .ok_or_else(|| ActionError::NotFound(action.0.clone()))?;
        let ActionKind::Toggle {
            children,
            state_extractor: Some(src),
            ..
        } = &spec.kind
        else {
            return Err(ActionError::Validation(alloc::format!(
                "`{action}` is not a toggle with a state extractor"
            )));
        };
        let script = Script::parse(src).map_err(|e| ActionError::Feedback(e.to_string()))?;
        let bindings = Bindings::new().with("message", message);
        let v = script
            .eval(&bindings)
            .map_err(|e| ActionError::Feedback(e.to_string()))?;
        let index = match v.as_i64() {
            Some(i) => i,
            None => match v.as_f64() {
                Some(f) if libm::trunc(f) == f && f.abs() < 1e15 => f as i64,
                _ => {
                    return Err(ActionError::Feedback(alloc::format!(
                        "extractor returned non-integer {v}"
                    )))
                }
            },
        };
        if index < 0 || index as usize >= children.len() {
            return Err(ActionError::Feedback(alloc::format!(
                "extractor returned {index}, toggle has {} states",
                children.len()
            )));
        }
        let index = index as usize;
        if self.toggle_index(action) != index || !self.toggles.contains_key(action) {
            self.set_toggle(action, index);
        }
        Ok(index)
    }

    /// Restores toggle indices, e.g. from a snapshot.
    pub fn set_toggle_index(&mut self, action: &ActionId, index: usize) {
        self.set_toggle(action, index);
    }

    /// Drops terminal top-level records (and their descendants) beyond the
    /// `keep` most recent ones.
    pub fn prune(&mut self, keep: usize) {
        let done: Vec<ExecId> = self
            .records
            .values()
            .filter(|r| r.parent.is_none() && r.state.is_terminal())
            .map(|r| r.exec_id)
            .collect();
        if done.len() <= keep {
            return;
        }
        for root in &done[..done.len() - keep] {
            let mut stack = alloc::vec![*root];
            while let Some(cur) = stack.pop() {
                if let Some(r) = self.records.remove(&cur) {
                    stack.extend(r.child_records);
                }
            }
        }
    }

    /// Nested view of a record and its descendants.
    pub fn tree_view(&self, id: ExecId) -> Option<Value> {
        let r = self.records.get(&id)?;
        let mut v = serde_json::to_value(r).ok()?;
        let children: Vec<Value> = r.child_records.iter().filter_map(|c| self.tree_view(*c)).collect();
        v["child_records"] = Value::Array(children);
        Some(v)
    }
}

fn non_empty(s: String, fallback: &str) -> String {
    if s.is_empty() {
        fallback.to_string()
    } else {
        s
    }
}

fn parallel_outcome(states: &[ExecState]) -> (ExecState, &'static str) {
    if states.contains(&ExecState::Failed) {
        (ExecState::Failed, "a parallel branch failed")
    } else if states.contains(&ExecState::Canceled) {
        (ExecState::Canceled, "a parallel branch was canceled")
    } else {
        (ExecState::Succeeded, "done")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionSpec;
    use alloc::vec;
    use serde_json::json;

    fn script(id: &str, src: &str) -> ActionSpec {
        ActionSpec::new(id, id, ActionKind::Script { script: src.into() })
    }

    fn service(id: &str) -> ActionSpec {
        ActionSpec::new(
            id,
            id,
            ActionKind::Message {
                channel: alloc::format!("robot/{id}"),
                call_style: CallStyle::Service,
                payload: Payload::Static(json!({})),
            },
        )
    }

    fn composite(id: &str, mode: CompositeMode, kids: &[&str]) -> ActionSpec {
        ActionSpec::new(
            id,
            id,
            ActionKind::Composite {
                children: kids.iter().map(|k| ActionId::new(k)).collect(),
                mode,
            },
        )
    }

    fn led() -> ActionRegistry {
        let mut r = ActionRegistry::new();
        for (id, level) in [("led0", 0.0), ("led50", 0.5), ("led100", 1.0)] {
            r.register(ActionSpec::new(
                id,
                &alloc::format!("LED {}%", (level * 100.0) as u32),
                ActionKind::Message {
                    channel: "robot/led".into(),
                    call_style: CallStyle::Publish,
                    payload: Payload::Static(json!({ "brightness": level })),
                },
            ))
            .unwrap();
        }
        r.register(ActionSpec::new(
            "led",
            "Toggle LED",
            ActionKind::Toggle {
                children: vec!["led0".into(), "led50".into(), "led100".into()],
                feedback_channel: Some("robot/led_state".into()),
                state_extractor: Some("nearest_index([0, 0.5, 1], message.brightness)".into()),
            },
        ))
        .unwrap();
        r
    }

    fn env() -> ExecEnv {
        ExecEnv::default()
    }

    #[test]
    fn state_machine_transitions() {
        for from in ExecState::ALL {
            for to in ExecState::ALL {
                let expected = from == ExecState::Running && to != ExecState::Running;
                assert_eq!(from.can_transition(to), expected, "{from:?} -> {to:?}");
            }
        }
    }

    #[test]
    fn sequence_of_successes() {
        let mut r = ActionRegistry::new();
        r.register(script("ok", "true")).unwrap();
        r.register(script("ok2", "'fine'")).unwrap();
        r.register(composite("seq", CompositeMode::Sequence, &["ok", "ok2"]))
            .unwrap();
        let mut ex = Executor::new();
        let id = ex.execute(&r, &"seq".into(), Value::Null, &env(), 0.0).unwrap();
        let rec = ex.record(id).unwrap();
        assert_eq!(rec.state, ExecState::Succeeded);
        assert_eq!(rec.child_records.len(), 2);
        for c in &rec.child_records {
            assert_eq!(ex.record(*c).unwrap().state, ExecState::Succeeded);
        }
    }

    #[test]
    fn sequence_stops_at_failure() {
        let mut r = ActionRegistry::new();
        r.register(script("ok", "true")).unwrap();
        r.register(script("bad", "false")).unwrap();
        r.register(script("ok3", "true")).unwrap();
        r.register(composite("seq", CompositeMode::Sequence, &["ok", "bad", "ok3"]))
            .unwrap();
        let mut ex = Executor::new();
        let id = ex.execute(&r, &"seq".into(), Value::Null, &env(), 0.0).unwrap();
        let rec = ex.record(id).unwrap();
        assert_eq!(rec.state, ExecState::Failed);
        assert_eq!(rec.child_records.len(), 2, "third child never started");
        assert!(!ex.records().any(|r| r.action_id.as_str() == "ok3"));
    }

    #[test]
    fn toggle_runs_next_child_and_advances() {
        let r = led();
        let mut ex = Executor::new();
        assert_eq!(ex.toggle_index(&"led".into()), 0);
        let id = ex.execute(&r, &"led".into(), Value::Null, &env(), 0.0).unwrap();
        let rec = ex.record(id).unwrap().clone();
        assert_eq!(rec.state, ExecState::Succeeded);
        assert_eq!(ex.record(rec.child_records[0]).unwrap().action_id.as_str(), "led50");
        assert_eq!(ex.toggle_index(&"led".into()), 1);
        assert_eq!(
            ex.drain_outbox(),
            vec![Outbound::Publish {
                channel: "robot/led".into(),
                payload: json!({"brightness": 0.5})
            }]
        );
    }

    #[test]
    fn toggle_feedback() {
        let r = led();
        let mut ex = Executor::new();
        assert_eq!(
            ex.on_toggle_feedback(&r, &"led".into(), &json!({"brightness": 0.5})),
            Ok(1)
        );
        assert_eq!(ex.toggle_index(&"led".into()), 1);
        // an extractor that returns 7 on a three-state toggle
        let mut r2 = ActionRegistry::new();
        r2.register(script("a", "1")).unwrap();
        r2.register(ActionSpec::new(
            "t",
            "T",
            ActionKind::Toggle {
                children: vec!["a".into(), "a".into(), "a".into()],
                feedback_channel: Some("robot/t".into()),
                state_extractor: Some("message.v".into()),
            },
        ))
        .unwrap();
        ex.on_toggle_feedback(&r2, &"t".into(), &json!({"v": 2})).unwrap();
        assert!(matches!(
            ex.on_toggle_feedback(&r2, &"t".into(), &json!({"v": 7})),
            Err(ActionError::Feedback(_))
        ));
        assert!(matches!(
            ex.on_toggle_feedback(&r2, &"t".into(), &json!({"v": 1.5})),
            Err(ActionError::Feedback(_))
        ));
        assert_eq!(ex.toggle_index(&"t".into()), 2);
        assert_eq!(ex.on_toggle_feedback(&r2, &"t".into(), &json!({"v": 0.0})), Ok(0));
    }

    #[test]
    fn cancel_sequence_mid_child() {
        let mut r = ActionRegistry::new();
        r.register(script("first", "true")).unwrap();
        r.register(service("second")).unwrap();
        r.register(service("third")).unwrap();
        r.register(composite("seq", CompositeMode::Sequence, &["first", "second", "third"]))
            .unwrap();
        let mut ex = Executor::new();
        let id = ex.execute(&r, &"seq".into(), Value::Null, &env(), 0.0).unwrap();
        let kids = ex.record(id).unwrap().child_records.clone();
        assert_eq!(kids.len(), 2);
        assert_eq!(ex.record(kids[1]).unwrap().state, ExecState::Running);
        ex.drain_outbox();

        assert!(ex.cancel(&r, id, &env(), 1.0).unwrap());
        assert_eq!(ex.record(id).unwrap().state, ExecState::Canceled);
        assert_eq!(ex.record(kids[0]).unwrap().state, ExecState::Succeeded);
        assert_eq!(ex.record(kids[1]).unwrap().state, ExecState::Canceled);
        assert_eq!(ex.record(id).unwrap().child_records.len(), 2);
        assert_eq!(ex.pending_requests().count(), 0);
        assert!(matches!(&ex.drain_outbox()[..], [Outbound::Publish { channel, .. }] if channel == "robot/cancel"));

        // late response is ignored
        assert!(!ex.on_response(&r, "act-1", &json!({"success": true}), false, &env(), 2.0));
    }

    #[test]
    fn cancel_terminal_is_noop_and_unknown_is_not_found() {
        let mut r = ActionRegistry::new();
        r.register(script("ok", "true")).unwrap();
        let mut ex = Executor::new();
        let id = ex.execute(&r, &"ok".into(), Value::Null, &env(), 0.0).unwrap();
        assert_eq!(ex.cancel(&r, id, &env(), 1.0), Ok(false));
        assert_eq!(ex.record(id).unwrap().state, ExecState::Succeeded);
        assert!(matches!(
            ex.cancel(&r, ExecId(999), &env(), 1.0),
            Err(ActionError::NotFound(_))
        ));
    }

    #[test]
    fn busy_rejection() {
        let mut r = ActionRegistry::new();
        r.register(service("arm")).unwrap();
        r.register(service("other")).unwrap();
        let mut ex = Executor::new();
        ex.execute(&r, &"arm".into(), Value::Null, &env(), 0.0).unwrap();
        assert_eq!(
            ex.execute(&r, &"arm".into(), Value::Null, &env(), 0.1),
            Err(ActionError::Busy("arm".into()))
        );
        ex.execute(&r, &"other".into(), Value::Null, &env(), 0.1).unwrap();
    }

    #[test]
    fn service_response_and_timeout() {
        let mut r = ActionRegistry::new();
        r.register(service("arm")).unwrap();
        let mut ex = Executor::new().with_service_timeout(5.0);
        let a = ex.execute(&r, &"arm".into(), Value::Null, &env(), 0.0).unwrap();
        let req = match &ex.drain_outbox()[..] {
            [Outbound::Request { id, .. }] => id.clone(),
            other => panic!("{other:?}"),
        };
        assert!(ex.on_response(
            &r,
            &req,
            &json!({"success": true, "message": "unfolded"}),
            false,
            &env(),
            1.0
        ));
        let rec = ex.record(a).unwrap();
        assert_eq!(
            (rec.state, rec.status_text.as_str(), rec.ended),
            (ExecState::Succeeded, "unfolded", Some(1.0))
        );

        let b = ex.execute(&r, &"arm".into(), Value::Null, &env(), 2.0).unwrap();
        ex.tick(&r, &env(), 6.9);
        assert_eq!(ex.record(b).unwrap().state, ExecState::Running);
        ex.tick(&r, &env(), 7.0);
        assert_eq!(ex.record(b).unwrap().state, ExecState::Failed);
    }

    #[test]
    fn script_failure_ends_failed_with_error_text() {
        let mut r = ActionRegistry::new();
        r.register(ActionSpec::new(
            "m",
            "M",
            ActionKind::Message {
                channel: "robot/drive_to".into(),
                call_style: CallStyle::Publish,
                payload: Payload::Script("{target: tool.waypoint.position}".into()),
            },
        ))
        .unwrap();
        let mut ex = Executor::new();
        let id = ex.execute(&r, &"m".into(), Value::Null, &env(), 0.0).unwrap();
        let rec = ex.record(id).unwrap();
        assert_eq!(rec.state, ExecState::Failed);
        assert!(rec.status_text.contains("evaluation error"), "{}", rec.status_text);

        let env = ExecEnv {
            tool: json!({"waypoint": {"position": [1, 2, 0]}}),
            settings: json!({}),
        };
        let id = ex.execute(&r, &"m".into(), Value::Null, &env, 1.0).unwrap();
        assert_eq!(ex.record(id).unwrap().state, ExecState::Succeeded);
        assert_eq!(
            ex.drain_outbox().pop(),
            Some(Outbound::Publish {
                channel: "robot/drive_to".into(),
                payload: json!({"target": [1, 2, 0]})
            })
        );
    }

    #[test]
    fn parallel_waits_for_all_and_failure_dominates() {
        let mut r = ActionRegistry::new();
        r.register(service("a")).unwrap();
        r.register(service("b")).unwrap();
        r.register(service("c")).unwrap();
        r.register(composite("par", CompositeMode::Parallel, &["a", "b", "c"]))
            .unwrap();
        let mut ex = Executor::new();
        let id = ex.execute(&r, &"par".into(), Value::Null, &env(), 0.0).unwrap();
        let reqs: Vec<String> = ex
            .drain_outbox()
            .into_iter()
            .map(|o| match o {
                Outbound::Request { id, .. } => id,
                _ => panic!(),
            })
            .collect();
        assert_eq!(reqs.len(), 3);
        ex.on_response(&r, &reqs[1], &json!({"canceled": true}), false, &env(), 1.0);
        ex.on_response(&r, &reqs[0], &json!({"success": false}), false, &env(), 1.0);
        assert_eq!(ex.record(id).unwrap().state, ExecState::Running);
        ex.on_response(&r, &reqs[2], &json!({"success": true}), false, &env(), 2.0);
        assert_eq!(ex.record(id).unwrap().state, ExecState::Failed);
    }

    #[test]
    fn prune_keeps_recent() {
        let mut r = ActionRegistry::new();
        r.register(script("ok", "true")).unwrap();
        let mut ex = Executor::new();
        for i in 0..10 {
            ex.execute(&r, &"ok".into(), Value::Null, &env(), i as f64).unwrap();
        }
        ex.prune(3);
        assert_eq!(ex.records().count(), 3);
    }

    #[test]
    fn nested_view() {
        let mut r = ActionRegistry::new();
        r.register(script("ok", "true")).unwrap();
        r.register(composite("seq", CompositeMode::Sequence, &["ok", "ok"]))
            .unwrap();
        let mut ex = Executor::new();
        let id = ex.execute(&r, &"seq".into(), Value::Null, &env(), 0.0).unwrap();
        let v = ex.tree_view(id).unwrap();
        assert_eq!(v["child_records"].as_array().unwrap().len(), 2);
        assert_eq!(v["child_records"][0]["state"], "succeeded");
    }
}
