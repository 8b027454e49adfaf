//! Missions: an ordered task list executed through the action system, with
//! the operator controls Back, Pause/Resume, Stop and Skip, and operator
//! confirmation prompts raised by running tasks.
//!
//! Transition table (`-` = StateError, state unchanged):
//!
//! | phase         | start   | Back          | PauseResume    | Stop | Skip         | confirm  |
//! |---------------|---------|---------------|----------------|------|--------------|----------|
//! | Idle          | Running | -             | -              | Idle | -            | -        |
//! | Running       | Busy    | restart i-1   | Paused         | Idle | next/Finished| -        |
//! | Paused        | Busy    | i-1, Paused   | Running (rerun)| Idle | i+1, Paused  | -        |
//! | Awaiting      | Busy    | restart i-1   | Paused         | Idle | next/Finished| Running  |
//! | Finished      | Running | -             | -              | Idle | -            | -        |
//!
//! Task results only apply to the in-flight execution: Succeeded advances,
//! Failed or Canceled pauses at the same index.

use alloc::collections::VecDeque;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::{ActionId, ActionRegistry, ExecId, ExecState};

pub mod channels {
    pub const LOAD: &str = "mission/load";
    pub const START: &str = "mission/start";
    pub const CONTROL: &str = "mission/control";
    pub const CONFIRM: &str = "mission/confirm";
    pub const STATE: &str = "mission/state";
    /// Robot-side request for operator confirmation (publish).
    pub const CONFIRMATION_REQUEST: &str = "mission/confirmation_request";
    /// Robot-bound answer to a confirmation request.
    pub const CONFIRMATION_ANSWER: &str = "robot/confirmation";
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MissionError {
    #[error("a mission is active")]
    Busy,
    #[error("invalid mission: {0}")]
    Validation(String),
    #[error("{command} not allowed while {phase:?}")]
    State { command: String, phase: Phase },
}

impl MissionError {
    pub fn code(&self) -> crate::wire::ErrorCode {
        use crate::wire::ErrorCode;
        match self {
            MissionError::Busy => ErrorCode::Busy,
            MissionError::Validation(_) => ErrorCode::Validation,
            MissionError::State { .. } => ErrorCode::State,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub label: String,
    pub action_id: ActionId,
    #[serde(default)]
    pub context: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub name: String,
    pub tasks: Vec<Task>,
}

impl Mission {
    pub fn validate(&self, registry: &ActionRegistry) -> Result<(), MissionError> {
        if self.tasks.is_empty() {
            return Err(MissionError::Validation(alloc::format!(
                "mission `{}` has no tasks",
                self.name
            )));
        }
        for t in &self.tasks {
            if !registry.contains(&t.action_id) {
                return Err(MissionError::Validation(alloc::format!(
                    "task `{}` references unknown action `{}`",
                    t.label,
                    t.action_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Running,
    Paused,
    AwaitingConfirmation,
    Finished,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Idle,
        Phase::Running,
        Phase::Paused,
        Phase::AwaitingConfirmation,
        Phase::Finished,
    ];

    fn active(self) -> bool {
        matches!(self, Phase::Running | Phase::Paused | Phase::AwaitingConfirmation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Back,
    PauseResume,
    Stop,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskResult {
    Succeeded,
    Failed,
    Canceled,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationRequest {
    pub prompt: String,
    pub options: Vec<String>,
    /// Seconds the operator has to answer; absent means no deadline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingPrompt {
    pub request: ConfirmationRequest,
    /// Absolute expiry on the console clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionState {
    pub mission: Option<String>,
    pub phase: Phase,
    pub current_index: usize,
    pub results: Vec<Option<TaskResult>>,
    /// Execution of the current task, if one is in flight.
    pub in_flight: Option<ExecId>,
    /// Prompt shown to the operator while awaiting confirmation.
    pub prompt: Option<PendingPrompt>,
    pub queued_prompts: usize,
    /// Last failure surfaced to the operator.
    pub notice: Option<String>,
}

/// Something that can run mission tasks; the console wires this to the
/// execution manager.
pub trait TaskRunner {
    fn run_task(&mut self, action: &ActionId, context: Value) -> Result<ExecId, String>;
    fn cancel_task(&mut self, exec: ExecId);
    fn deliver_answer(&mut self, task_index: usize, request: &ConfirmationRequest, answer: &str);
}

/// Log lines worth surfacing, e.g. confirmations answered by timeout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub at: f64,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct MissionControl {
    mission: Option<Mission>,
    state: MissionState,
    queue: VecDeque<ConfirmationRequest>,
    log: Vec<MissionLog>,
}

impl Default for MissionControl {
    fn default() -> Self {
        Self::new()
    }
}

impl MissionControl {
    pub fn new() -> Self {
        Self {
            mission: None,
            state: MissionState {
                mission: None,
                phase: Phase::Idle,
                current_index: 0,
                results: Vec::new(),
                in_flight: None,
                prompt: None,
                queued_prompts: 0,
                notice: None,
            },
            queue: VecDeque::new(),
            log: Vec::new(),
        }
    }

    pub fn state(&self) -> &MissionState {
        &self.state
    }

    pub fn mission(&self) -> Option<&Mission> {
        self.mission.as_ref()
    }

    pub fn drain_log(&mut self) -> Vec<MissionLog> {
        core::mem::take(&mut self.log)
    }

    /// State right after loading `mission`, which is also what Stop returns to.
    fn reset(&mut self) {
        self.state = MissionState {
            mission: self.mission.as_ref().map(|m| m.name.clone()),
            phase: Phase::Idle,
            current_index: 0,
            results: alloc::vec![None; self.mission.as_ref().map_or(0, |m| m.tasks.len())],
            in_flight: None,
            prompt: None,
            queued_prompts: 0,
            notice: None,
        };
        self.queue.clear();
    }

    pub fn load(&mut self, mission: Mission, registry: &ActionRegistry) -> Result<&MissionState, MissionError> {
        if self.state.phase.active() {
            return Err(MissionError::Busy);
        }
        mission.validate(registry)?;
        self.mission = Some(mission);
        self.reset();
        Ok(&self.state)
    }

    fn len(&self) -> usize {
        self.mission.as_ref().map_or(0, |m| m.tasks.len())
    }

    fn illegal(&self, command: &str) -> MissionError {
        MissionError::State {
            command: command.to_string(),
            phase: self.state.phase,
        }
    }

    pub fn start(&mut self, runner: &mut dyn TaskRunner) -> Result<&MissionState, MissionError> {
        if self.state.phase.active() {
            return Err(MissionError::Busy);
        }
        if self.mission.is_none() {
            return Err(MissionError::Validation("no mission loaded".into()));
        }
        self.reset();
        self.state.phase = Phase::Running;
        self.run_current(runner);
        Ok(&self.state)
    }

    fn run_current(&mut self, runner: &mut dyn TaskRunner) {
        let Some(task) = self
            .mission
            .as_ref()
            .and_then(|m| m.tasks.get(self.state.current_index))
            .cloned()
        else {
            return;
        };
        self.state.results[self.state.current_index] = None;
        match runner.run_task(&task.action_id, task.context.clone()) {
            Ok(exec) => self.state.in_flight = Some(exec),
            Err(e) => {
                self.state.in_flight = None;
                self.state.results[self.state.current_index] = Some(TaskResult::Failed);
                self.state.phase = Phase::Paused;
                self.state.notice = Some(alloc::format!("task `{}` could not start: {e}", task.label));
            }
        }
    }

    fn cancel_in_flight(&mut self, runner: &mut dyn TaskRunner) {
        if let Some(exec) = self.state.in_flight.take() {
            runner.cancel_task(exec);
        }
    }

    fn drop_prompts(&mut self) {
        self.queue.clear();
        self.state.prompt = None;
        self.state.queued_prompts = 0;
    }

    /// Moves past the current task; past the last one the mission finishes.
    fn advance(&mut self, runner: &mut dyn TaskRunner, run_next: bool) {
        if self.state.current_index + 1 >= self.len() {
            self.state.phase = Phase::Finished;
            self.state.in_flight = None;
        } else {
            self.state.current_index += 1;
            if run_next {
                self.run_current(runner);
            }
        }
    }

    pub fn control(&mut self, cmd: Command, runner: &mut dyn TaskRunner) -> Result<&MissionState, MissionError> {
        use Phase::*;
        let phase = self.state.phase;
        match (cmd, phase) {
            (Command::Stop, _) => {
                self.cancel_in_flight(runner);
                self.reset();
            }
            (_, Idle | Finished) => {
                return Err(self.illegal(match cmd {
                    Command::Back => "Back",
                    Command::PauseResume => "PauseResume",
                    Command::Skip => "Skip",
                    Command::Stop => "Stop",
                }))
            }
            (Command::Back, Running | AwaitingConfirmation) => {
                self.cancel_in_flight(runner);
                self.drop_prompts();
                self.state.phase = Running;
                self.state.current_index = self.state.current_index.saturating_sub(1);
                self.run_current(runner);
            }
            (Command::Back, Paused) => {
                self.state.current_index = self.state.current_index.saturating_sub(1);
            }
            (Command::PauseResume, Running | AwaitingConfirmation) => {
                self.cancel_in_flight(runner);
                self.drop_prompts();
                self.state.phase = Paused;
            }
            (Command::PauseResume, Paused) => {
                self.state.phase = Running;
                self.state.notice = None;
                self.run_current(runner);
            }
            (Command::Skip, Running | AwaitingConfirmation) => {
                self.cancel_in_flight(runner);
                self.drop_prompts();
                self.state.results[self.state.current_index] = Some(TaskResult::Skipped);
                self.state.phase = Running;
                self.advance(runner, true);
            }
            (Command::Skip, Paused) => {
                self.state.results[self.state.current_index] = Some(TaskResult::Skipped);
                self.advance(runner, false);
            }
        }
        Ok(&self.state)
    }

    /// Reacts to the terminal state of an execution. Results of executions
    /// other than the in-flight task are ignored; returns whether it applied.
    pub fn on_task_result(
        &mut self,
        exec: ExecId,
        state: ExecState,
        message: &str,
        runner: &mut dyn TaskRunner,
    ) -> bool {
        if self.state.in_flight != Some(exec) || !state.is_terminal() {
            return false;
        }
        self.state.in_flight = None;
        self.drop_prompts();
        let i = self.state.current_index;
        match state {
            ExecState::Succeeded => {
                self.state.results[i] = Some(TaskResult::Succeeded);
                self.state.phase = Phase::Running;
                self.advance(runner, true);
            }
            ExecState::Failed | ExecState::Canceled => {
                self.state.results[i] = Some(if state == ExecState::Failed {
                    TaskResult::Failed
                } else {
                    TaskResult::Canceled
                });
                self.state.phase = Phase::Paused;
                let label = self
                    .mission
                    .as_ref()
                    .map(|m| m.tasks[i].label.clone())
                    .unwrap_or_default();
                self.state.notice = Some(alloc::format!(
                    "task `{label}` {}: {message}",
                    if state == ExecState::Failed {
                        "failed"
                    } else {
                        "was canceled"
                    }
                ));
            }
            ExecState::Running => unreachable!(),
        }
        true
    }

    /// A running task asks the operator to choose. Requests arriving while a
    /// prompt is open are queued in order.
    pub fn request_confirmation(&mut self, req: ConfirmationRequest, now: f64) -> Result<&MissionState, MissionError> {
        if req.options.is_empty() {
            return Err(MissionError::Validation(
                "confirmation needs at least one option".into(),
            ));
        }
        match self.state.phase {
            Phase::Running => {
                self.state.phase = Phase::AwaitingConfirmation;
                self.open_prompt(req, now);
            }
            Phase::AwaitingConfirmation => {
                self.queue.push_back(req);
                self.state.queued_prompts = self.queue.len();
            }
            _ => return Err(self.illegal("request_confirmation")),
        }
        Ok(&self.state)
    }

    fn open_prompt(&mut self, req: ConfirmationRequest, now: f64) {
        let expires_at = req.deadline.map(|d| now + d);
        self.state.prompt = Some(PendingPrompt {
            request: req,
            expires_at,
        });
    }

    fn answer(&mut self, answer: &str, runner: &mut dyn TaskRunner, now: f64) {
        let Some(prompt) = self.state.prompt.take() else {
            return;
        };
        runner.deliver_answer(self.state.current_index, &prompt.request, answer);
        match self.queue.pop_front() {
            Some(next) => {
                self.state.queued_prompts = self.queue.len();
                self.open_prompt(next, now);
            }
            None => self.state.phase = Phase::Running,
        }
    }

    /// Operator answer to the open prompt.
    pub fn confirm(
        &mut self,
        option: &str,
        runner: &mut dyn TaskRunner,
        now: f64,
    ) -> Result<&MissionState, MissionError> {
        if self.state.phase != Phase::AwaitingConfirmation {
            return Err(self.illegal("confirm"));
        }
        let valid = self
            .state
            .prompt
            .as_ref()
            .is_some_and(|p| p.request.options.iter().any(|o| o == option));
        if !valid {
            return Err(MissionError::Validation(alloc::format!(
                "`{option}` is not an offered option"
            )));
        }
        self.answer(option, runner, now);
        Ok(&self.state)
    }

    /// Answers an expired prompt with its first option.
    pub fn tick(&mut self, runner: &mut dyn TaskRunner, now: f64) -> bool {
        let expired = self
            .state
            .prompt
            .as_ref()
            .and_then(|p| p.expires_at)
            .is_some_and(|t| now >= t);
        if self.state.phase != Phase::AwaitingConfirmation || !expired {
            return false;
        }
        let Some(prompt) = self.state.prompt.as_ref() else {
            return false;
        };
        let default = prompt.request.options[0].clone();
        self.log.push(MissionLog {
            at: now,
            text: alloc::format!(
                "confirmation `{}` timed out, selected `{default}`",
                prompt.request.prompt
            ),
        });
        self.answer(&default, runner, now);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{ActionKind, ActionSpec};
    use alloc::vec;
    use serde_json::json;

    #[derive(Default)]
    struct Recorder {
        next: u64,
        started: Vec<(ActionId, ExecId)>,
        canceled: Vec<ExecId>,
        answers: Vec<(usize, String)>,
        refuse: bool,
    }

    impl TaskRunner for Recorder {
        fn run_task(&mut self, action: &ActionId, _context: Value) -> Result<ExecId, String> {
            if self.refuse {
                return Err("busy".into());
            }
            self.next += 1;
            let id = ExecId(self.next);
            self.started.push((action.clone(), id));
            Ok(id)
        }
        fn cancel_task(&mut self, exec: ExecId) {
            self.canceled.push(exec);
        }
        fn deliver_answer(&mut self, task_index: usize, _r: &ConfirmationRequest, answer: &str) {
            self.answers.push((task_index, answer.into()));
        }
    }

    fn registry() -> ActionRegistry {
        let mut r = ActionRegistry::new();
        for id in ["a", "b", "c"] {
            r.register(ActionSpec::new(id, id, ActionKind::Script { script: "true".into() }))
                .unwrap();
        }
        r
    }

    fn mission(n: usize) -> Mission {
        Mission {
            name: "m".into(),
            tasks: ["a", "b", "c"][..n]
                .iter()
                .map(|a| Task {
                    label: a.to_uppercase(),
                    action_id: ActionId::new(a),
                    context: json!({}),
                })
                .collect(),
        }
    }

    fn loaded(n: usize) -> (MissionControl, Recorder) {
        let mut mc = MissionControl::new();
        mc.load(mission(n), &registry()).unwrap();
        (mc, Recorder::default())
    }

    fn current_exec(mc: &MissionControl) -> ExecId {
        mc.state().in_flight.unwrap()
    }

    #[test]
    fn start_three_task_mission() {
        let (mut mc, mut rec) = loaded(3);
        let s = mc.start(&mut rec).unwrap();
        assert_eq!((s.phase, s.current_index), (Phase::Running, 0));
        assert_eq!(rec.started[0].0.as_str(), "a");
        assert_eq!(mc.start(&mut rec).unwrap_err(), MissionError::Busy);
    }

    #[test]
    fn empty_mission_rejected() {
        let mut mc = MissionControl::new();
        let m = Mission {
            name: "e".into(),
            tasks: vec![],
        };
        assert!(matches!(mc.load(m, &registry()), Err(MissionError::Validation(_))));
        let m = Mission {
            name: "x".into(),
            tasks: vec![Task {
                label: "t".into(),
                action_id: "ghost".into(),
                context: Value::Null,
            }],
        };
        assert!(matches!(mc.load(m, &registry()), Err(MissionError::Validation(_))));
    }

    #[test]
    fn results_advance_and_finish() {
        let (mut mc, mut rec) = loaded(3);
        mc.start(&mut rec).unwrap();
        mc.on_task_result(current_exec(&mc), ExecState::Succeeded, "", &mut rec);
        mc.on_task_result(current_exec(&mc), ExecState::Succeeded, "", &mut rec);
        assert_eq!(mc.state().current_index, 2);
        assert_eq!(rec.started.last().unwrap().0.as_str(), "c");
        mc.on_task_result(current_exec(&mc), ExecState::Succeeded, "", &mut rec);
        assert_eq!(mc.state().phase, Phase::Finished);
        assert_eq!(mc.state().in_flight, None);
    }

    #[test]
    fn failure_pauses_at_same_index() {
        let (mut mc, mut rec) = loaded(3);
        mc.start(&mut rec).unwrap();
        mc.on_task_result(current_exec(&mc), ExecState::Succeeded, "", &mut rec);
        mc.on_task_result(current_exec(&mc), ExecState::Failed, "stuck", &mut rec);
        let s = mc.state();
        assert_eq!((s.phase, s.current_index), (Phase::Paused, 1));
        assert!(s.notice.as_deref().unwrap().contains("stuck"));
        // resume re-executes the same task
        mc.control(Command::PauseResume, &mut rec).unwrap();
        assert_eq!(rec.started.last().unwrap().0.as_str(), "b");
        assert_eq!(mc.state().phase, Phase::Running);
    }

    #[test]
    fn stale_results_are_ignored() {
        let (mut mc, mut rec) = loaded(2);
        mc.start(&mut rec).unwrap();
        let first = current_exec(&mc);
        mc.control(Command::Skip, &mut rec).unwrap();
        assert!(!mc.on_task_result(first, ExecState::Canceled, "", &mut rec));
        assert_eq!(mc.state().current_index, 1);
    }

    #[test]
    fn skip_on_last_task_finishes() {
        let (mut mc, mut rec) = loaded(2);
        mc.start(&mut rec).unwrap();
        mc.control(Command::Skip, &mut rec).unwrap();
        let s = mc.control(Command::Skip, &mut rec).unwrap();
        assert_eq!(s.phase, Phase::Finished);
        assert_eq!(s.results, vec![Some(TaskResult::Skipped), Some(TaskResult::Skipped)]);
        assert_eq!(rec.canceled.len(), 2);
    }

    #[test]
    fn back_at_first_task_restarts_it() {
        let (mut mc, mut rec) = loaded(3);
        mc.start(&mut rec).unwrap();
        let first = current_exec(&mc);
        let s = mc.control(Command::Back, &mut rec).unwrap();
        assert_eq!((s.phase, s.current_index), (Phase::Running, 0));
        assert_eq!(rec.canceled, vec![first]);
        assert_eq!(rec.started.len(), 2);
        assert_ne!(current_exec(&mc), first);
    }

    #[test]
    fn stop_from_paused_resets() {
        let (mut mc, mut rec) = loaded(3);
        let fresh = mc.state().clone();
        mc.start(&mut rec).unwrap();
        mc.control(Command::Skip, &mut rec).unwrap();
        mc.control(Command::PauseResume, &mut rec).unwrap();
        assert_eq!(mc.state().phase, Phase::Paused);
        mc.control(Command::Stop, &mut rec).unwrap();
        assert_eq!(mc.state(), &fresh);
    }

    #[test]
    fn idle_rejects_back_and_skip() {
        let (mut mc, mut rec) = loaded(3);
        assert!(matches!(
            mc.control(Command::Back, &mut rec),
            Err(MissionError::State { .. })
        ));
        assert!(matches!(
            mc.control(Command::Skip, &mut rec),
            Err(MissionError::State { .. })
        ));
    }

    #[test]
    fn failed_start_pauses() {
        let (mut mc, mut rec) = loaded(3);
        rec.refuse = true;
        let s = mc.start(&mut rec).unwrap();
        assert_eq!(s.phase, Phase::Paused);
        assert_eq!(s.results[0], Some(TaskResult::Failed));
    }

    fn victim(deadline: Option<f64>) -> ConfirmationRequest {
        ConfirmationRequest {
            prompt: "Victim detected?".into(),
            options: vec!["Confirm".into(), "Reject".into()],
            deadline,
        }
    }

    #[test]
    fn confirmation_answered() {
        let (mut mc, mut rec) = loaded(2);
        mc.start(&mut rec).unwrap();
        mc.request_confirmation(victim(None), 1.0).unwrap();
        assert_eq!(mc.state().phase, Phase::AwaitingConfirmation);
        assert!(mc.confirm("Maybe", &mut rec, 2.0).is_err());
        mc.confirm("Confirm", &mut rec, 2.0).unwrap();
        assert_eq!(mc.state().phase, Phase::Running);
        assert_eq!(rec.answers, vec![(0, "Confirm".into())]);
    }

    #[test]
    fn confirmation_deadline_picks_first_option() {
        let (mut mc, mut rec) = loaded(2);
        mc.start(&mut rec).unwrap();
        mc.request_confirmation(victim(Some(10.0)), 5.0).unwrap();
        assert!(!mc.tick(&mut rec, 14.9));
        assert!(mc.tick(&mut rec, 15.0));
        assert_eq!(rec.answers, vec![(0, "Confirm".into())]);
        assert_eq!(mc.state().phase, Phase::Running);
        assert_eq!(mc.drain_log().len(), 1);
    }

    #[test]
    fn confirmations_queue_fifo() {
        let (mut mc, mut rec) = loaded(2);
        mc.start(&mut rec).unwrap();
        mc.request_confirmation(victim(None), 0.0).unwrap();
        let mut second = victim(None);
        second.prompt = "Second?".into();
        mc.request_confirmation(second, 0.5).unwrap();
        assert_eq!(mc.state().queued_prompts, 1);
        mc.confirm("Reject", &mut rec, 1.0).unwrap();
        assert_eq!(mc.state().phase, Phase::AwaitingConfirmation);
        assert_eq!(mc.state().prompt.as_ref().unwrap().request.prompt, "Second?");
        mc.confirm("Confirm", &mut rec, 2.0).unwrap();
        assert_eq!(mc.state().phase, Phase::Running);
        assert_eq!(rec.answers.len(), 2);
    }

    #[test]
    fn confirmation_while_paused_is_state_error() {
        let (mut mc, mut rec) = loaded(2);
        mc.start(&mut rec).unwrap();
        mc.control(Command::PauseResume, &mut rec).unwrap();
        assert!(matches!(
            mc.request_confirmation(victim(None), 0.0),
            Err(MissionError::State { .. })
        ));
    }
}
