//! Declarative robot actions, their folder structure and their execution.
//!
//! The [`ActionRegistry`] and the [`Executor`] are the two authorities of the
//! console: one owns the set of available actions, the other every execution
//! record. Both are single-writer state machines driven by the console's
//! command queue.

mod exec;
mod registry;
mod tree;

pub use exec::{ExecEnv, ExecEvent, ExecId, ExecState, ExecutionRecord, Executor, Outbound, ToggleState};
pub use registry::{ActionId, ActionKind, ActionRegistry, ActionSpec, CallStyle, CompositeMode, Payload};
pub use tree::{ActionTree, Folder, NodePath, TreeNode};

use alloc::string::String;

/// Service channels handled by the action system.
pub mod channels {
    pub const REGISTER: &str = "actions/register";
    pub const EXECUTE: &str = "actions/execute";
    pub const CANCEL: &str = "actions/cancel";
    pub const LIST: &str = "actions/list";
    pub const TREE: &str = "actions/tree";
    pub const TREE_EDIT: &str = "actions/tree/edit";
    pub const EXECUTIONS: &str = "actions/executions";
    pub const TOGGLES: &str = "actions/toggles";
    /// Robot-bound notice that an in-flight service call was abandoned.
    pub const ROBOT_CANCEL: &str = "robot/cancel";
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionError {
    #[error("an action named `{0}` already exists")]
    Duplicate(String),
    #[error("invalid action: {0}")]
    Validation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("action `{0}` is already running")]
    Busy(String),
    #[error("cannot move a folder into itself or its descendant")]
    Cycle,
    #[error("feedback rejected: {0}")]
    Feedback(String),
}

impl ActionError {
    pub fn code(&self) -> crate::wire::ErrorCode {
        use crate::wire::ErrorCode;
        match self {
            ActionError::Duplicate(_) => ErrorCode::Duplicate,
            ActionError::Validation(_) => ErrorCode::Validation,
            ActionError::NotFound(_) => ErrorCode::NotFound,
            ActionError::Busy(_) => ErrorCode::Busy,
            ActionError::Cycle => ErrorCode::Cycle,
            ActionError::Feedback(_) => ErrorCode::Feedback,
        }
    }
}
