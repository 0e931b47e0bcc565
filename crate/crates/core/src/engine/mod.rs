//! Control files, planning and sequential execution of build steps.

mod control;
mod plan;
mod run;
mod vars;

use std::path::PathBuf;

use thiserror::Error;

pub use control::{
    parse_control, valid_task_name, BindSpec, ControlFile, Expectation, GenerateStep, Pattern,
    PushStep, RelPath, RunStep, Step, TagStep, WrapStep, STEP_KINDS,
};
pub use plan::{plan, PlannedStep};
pub use run::{
    check_expectation, execute, execute_with_timeout, ExecuteFailure, ExecutionReport,
    ExpectationOutcome, FailureRecord, Status, StepRecord,
};
pub use vars::{escape_vars, substitute_vars, VarError, VarMap};

use crate::executors::ExecError;
use crate::imagestore::StoreError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}{message}", location(task, step))]
    Schema {
        task: Option<String>,
        step: Option<usize>,
        message: String,
    },
    #[error("task {0:?} is defined twice")]
    DuplicateTask(String),
    #[error("invalid task name {0:?}: expected [a-z0-9:_.-]+")]
    InvalidTaskName(String),
    #[error("task {task:?}, step {step}: unknown step kind {kind:?}")]
    UnknownStepKind {
        task: String,
        step: usize,
        kind: String,
    },
    #[error(transparent)]
    Var(#[from] VarError),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("task cycle: {}", .0.join(" -> "))]
    TaskCycle(Vec<String>),
    #[error("command exited with status {exit_code}")]
    StepFailed { exit_code: i32 },
    #[error("expectation failed: {0}")]
    ExpectationFailed(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location(task: &Option<String>, step: &Option<usize>) -> String {
    match (task, step) {
        (Some(t), Some(s)) => format!("task {t:?}, step {s}: "),
        (Some(t), None) => format!("task {t:?}: "),
        _ => String::new(),
    }
}

impl EngineError {
    /// True when the failure comes from stored bytes failing verification.
    pub fn is_corruption(&self) -> bool {
        match self {
            EngineError::Store(e) | EngineError::Exec(ExecError::Store(e)) => e.is_corruption(),
            _ => false,
        }
    }
}
