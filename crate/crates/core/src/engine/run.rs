use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::control::{GenerateStep, RunStep};
use super::{parse_control, ControlFile, EngineError, Expectation, Step, VarMap};
use crate::executors::{read_directory, Bind, ExecRequest, ExecResult, Executor, DEFAULT_TIMEOUT};
use crate::imagestore::{self, Digest, Store};

/// Result of comparing a command's outcome with an [`Expectation`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpectationOutcome {
    Pass,
    Fail(String),
}

/// Passes iff the exit code matches and, when a pattern is given, it
/// matches somewhere in stdout.
pub fn check_expectation(result: &ExecResult, e: &Expectation) -> ExpectationOutcome {
    if result.exit_code != e.exit_code {
        return ExpectationOutcome::Fail(format!(
            "exit code {} (expected {})",
            result.exit_code, e.exit_code
        ));
    }
    if let Some(pattern) = &e.stdout_matches {
        if !pattern.is_match(&String::from_utf8_lossy(&result.stdout)) {
            return ExpectationOutcome::Fail(format!(
                "stdout does not match /{}/",
                pattern.as_str()
            ));
        }
    }
    ExpectationOutcome::Pass
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub task: String,
    pub step_index: usize,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<Digest>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailureRecord {
    pub task: String,
    pub step_index: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Succeeded,
    Failed,
}

/// What ran, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionReport {
    pub status: Status,
    pub steps: Vec<StepRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
}

impl ExecutionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// A failed execution: the error, where it happened, and the report up to
/// and including the failing step.
#[derive(Debug)]
pub struct ExecuteFailure {
    pub report: ExecutionReport,
    pub error: EngineError,
    /// Task, step index and step kind of the failing step, when the failure
    /// happened inside one.
    pub location: Option<(String, usize, &'static str)>,
}

impl std::fmt::Display for ExecuteFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.location {
            Some((task, index, kind)) => write!(f, "task {task}, step {index} ({kind}): {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for ExecuteFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct Runner<'a, E> {
    control: ControlFile,
    executor: &'a E,
    store: &'a Store,
    workdir: PathBuf,
    vars: &'a VarMap,
    timeout: Duration,
}

struct StepOutput {
    exec: Option<ExecResult>,
    digest: Option<Digest>,
}

impl StepOutput {
    fn digest(d: Digest) -> Self {
        StepOutput {
            exec: None,
            digest: Some(d),
        }
    }
}

/// Error plus whatever the step produced before failing.
type StepError = Box<(EngineError, Option<ExecResult>)>;

/// Runs the requested tasks strictly in sequence and stops at the first
/// failure.
///
/// Task references are expanded while running, so tasks added by a
/// `generate` step can be referenced by steps that run after it.
pub fn execute<E: Executor>(
    control: &ControlFile,
    requested: &[&str],
    executor: &E,
    store: &Store,
    workdir: &Path,
    vars: &VarMap,
) -> Result<ExecutionReport, Box<ExecuteFailure>> {
    execute_with_timeout(control, requested, executor, store, workdir, vars, DEFAULT_TIMEOUT)
}

pub fn execute_with_timeout<E: Executor>(
    control: &ControlFile,
    requested: &[&str],
    executor: &E,
    store: &Store,
    workdir: &Path,
    vars: &VarMap,
    timeout: Duration,
) -> Result<ExecutionReport, Box<ExecuteFailure>> {
    let mut report = ExecutionReport {
        status: Status::Succeeded,
        steps: Vec::new(),
        failure: None,
    };
    let fail_early = |report: ExecutionReport, error: EngineError| {
        Box::new(ExecuteFailure {
            report: ExecutionReport {
                status: Status::Failed,
                ..report
            },
            error,
            location: None,
        })
    };
    let workdir = match fs::canonicalize(workdir) {
        Ok(w) if w.is_dir() => w,
        Ok(w) => {
            return Err(fail_early(
                report,
                EngineError::Io {
                    path: w,
                    source: std::io::Error::other("not a directory"),
                },
            ))
        }
        Err(source) => {
            return Err(fail_early(
                report,
                EngineError::Io {
                    path: workdir.to_owned(),
                    source,
                },
            ))
        }
    };
    if let Some(missing) = requested.iter().find(|t| !control.contains(t)) {
        return Err(fail_early(report, EngineError::UnknownTask(missing.to_string())));
    }

    let mut runner = Runner {
        control: control.clone(),
        executor,
        store,
        workdir,
        vars,
        timeout,
    };

    for name in requested {
        let mut stack: Vec<(String, usize)> = vec![(name.to_string(), 0)];
        while let Some((task, next)) = stack.last_mut() {
            let Some(step) = runner.control.get(task).and_then(|s| s.get(*next)).cloned() else {
                stack.pop();
                continue;
            };
            let task = task.clone();
            let index = *next;
            *next += 1;

            if let Step::Task(sub) = &step {
                let error = if !runner.control.contains(sub) {
                    Some(EngineError::UnknownTask(sub.clone()))
                } else if let Some(pos) = stack.iter().position(|(t, _)| t == sub) {
                    let mut cycle: Vec<String> = stack[pos..].iter().map(|(t, _)| t.clone()).collect();
                    cycle.push(sub.clone());
                    Some(EngineError::TaskCycle(cycle))
                } else {
                    None
                };
                if let Some(error) = error {
                    return Err(runner.fail(report, &task, index, &step, error, None, Duration::ZERO));
                }
                stack.push((sub.clone(), 0));
                continue;
            }

            let start = Instant::now();
            match runner.run_step(&step) {
                Ok(out) => report.steps.push(record(&task, index, &step, out.exec.as_ref(), out.digest, start.elapsed())),
                Err(failed) => {
                    let (error, exec) = *failed;
                    return Err(runner.fail(report, &task, index, &step, error, exec, start.elapsed()));
                }
            }
        }
    }
    Ok(report)
}

fn record(
    task: &str,
    index: usize,
    step: &Step,
    exec: Option<&ExecResult>,
    digest: Option<Digest>,
    elapsed: Duration,
) -> StepRecord {
    StepRecord {
        task: task.to_owned(),
        step_index: index,
        kind: step.kind().to_owned(),
        exit_code: exec.map(|r| r.exit_code),
        stdout: exec.map(|r| String::from_utf8_lossy(&r.stdout).into_owned()).unwrap_or_default(),
        stderr: exec.map(|r| String::from_utf8_lossy(&r.stderr).into_owned()).unwrap_or_default(),
        digest,
        wall_time_secs: elapsed.as_secs_f64(),
    }
}

impl<E: Executor> Runner<'_, E> {
    #[allow(clippy::too_many_arguments)]
    fn fail(
        &self,
        mut report: ExecutionReport,
        task: &str,
        index: usize,
        step: &Step,
        error: EngineError,
        exec: Option<ExecResult>,
        elapsed: Duration,
    ) -> Box<ExecuteFailure> {
        report.steps.push(record(task, index, step, exec.as_ref(), None, elapsed));
        report.status = Status::Failed;
        report.failure = Some(FailureRecord {
            task: task.to_owned(),
            step_index: index,
            kind: step.kind().to_owned(),
            message: error.to_string(),
        });
        Box::new(ExecuteFailure {
            report,
            error,
            location: Some((task.to_owned(), index, step.kind())),
        })
    }

    fn host_path(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.workdir.join(p)
        }
    }

    fn run_step(&mut self, step: &Step) -> Result<StepOutput, StepError> {
        let no_exec = |e: EngineError| Box::new((e, None));
        match step {
            Step::Run(run) => {
                let result = self.run_command(run)?;
                Ok(StepOutput {
                    exec: Some(result),
                    digest: None,
                })
            }
            Step::Wrap(w) => {
                let dir = read_directory(&self.host_path(w.directory.as_str()))
                    .map_err(|e| no_exec(e.into()))?;
                let base = match &w.base {
                    Some(r) => Some(self.store.resolve(r).map_err(|e| no_exec(e.into()))?.1),
                    None => None,
                };
                let digest = imagestore::wrap(self.store, base.as_ref(), &dir, &w.at, &w.config, &w.as_ref)
                    .map_err(|e| no_exec(e.into()))?;
                Ok(StepOutput::digest(digest))
            }
            Step::Tag(t) => {
                let digest = self.store.lookup_tag(&t.source).map_err(|e| no_exec(e.into()))?;
                self.store.tag(&t.as_ref, &digest).map_err(|e| no_exec(e.into()))?;
                Ok(StepOutput::digest(digest))
            }
            Step::Push(p) => {
                let digest = self.store.lookup_tag(&p.image).map_err(|e| no_exec(e.into()))?;
                imagestore::export_image(self.store, &p.image, &self.host_path(&p.target))
                    .map_err(|e| no_exec(e.into()))?;
                Ok(StepOutput::digest(digest))
            }
            Step::Generate(GenerateStep { run, tasks_file }) => {
                let result = self.run_command(run)?;
                let path = self.host_path(tasks_file.as_str());
                let generated = fs::read(&path)
                    .map_err(|source| EngineError::Io { path: path.clone(), source })
                    .and_then(|bytes| parse_control(&bytes, self.vars))
                    .and_then(|tasks| self.control.merge(tasks));
                match generated {
                    Ok(()) => Ok(StepOutput {
                        exec: Some(result),
                        digest: None,
                    }),
                    Err(e) => Err(Box::new((e, Some(result)))),
                }
            }
            Step::Task(_) => unreachable!("task steps are expanded by the caller"),
        }
    }

    fn run_command(&self, run: &RunStep) -> Result<ExecResult, StepError> {
        let mut binds = Vec::with_capacity(run.binds.len());
        for b in &run.binds {
            let host = self.workdir.join(b.host.as_str());
            fs::create_dir_all(&host).map_err(|source| {
                Box::new((EngineError::Io { path: host.clone(), source }, None))
            })?;
            binds.push(Bind {
                host,
                guest: b.guest.clone(),
            });
        }
        let req = ExecRequest {
            image: Some(run.image.clone()),
            entrypoint: run.entrypoint.clone(),
            command: run.command.clone(),
            env: run.env.clone(),
            workdir: run.workdir.clone(),
            binds,
            timeout: self.timeout,
        };
        let result = self.executor.execute(&req).map_err(|e| Box::new((e.into(), None)))?;
        let expectation = run.expect.clone().unwrap_or_default();
        match check_expectation(&result, &expectation) {
            ExpectationOutcome::Pass => Ok(result),
            ExpectationOutcome::Fail(reason) => {
                let error = if run.expect.is_some() {
                    EngineError::ExpectationFailed(reason)
                } else {
                    EngineError::StepFailed {
                        exit_code: result.exit_code,
                    }
                };
                Err(Box::new((error, Some(result))))
            }
        }
    }
}
