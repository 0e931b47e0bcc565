use std::io;
use std::path::PathBuf;
use std::process::Command;

use super::process::{self, Outcome};
use super::{ExecError, ExecRequest, ExecResult, Executor};

/// Exit status docker-compatible CLIs use when the runtime itself failed
/// (image missing, pull error, bad flags) before the command started.
const RUNTIME_FAILURE: i32 = 125;

/// Delegates to an external container runtime CLI (`docker`, `podman`, or
/// anything accepting the same `run` flags). Each call is a fresh `--rm`
/// container.
#[derive(Debug, Clone)]
pub struct RuntimeBridge {
    binary: PathBuf,
}

impl RuntimeBridge {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        RuntimeBridge {
            binary: binary.into(),
        }
    }

    pub fn binary(&self) -> &std::path::Path {
        &self.binary
    }

    /// Arguments passed to the runtime binary:
    /// `run --rm [-v host:guest]... -w workdir [-e K=V]... [--entrypoint e0]
    /// image [e1...] command...`
    pub fn argv(&self, req: &ExecRequest) -> Result<Vec<String>, ExecError> {
        let image = req.image.as_ref().ok_or(ExecError::MissingImage)?;
        let mut args = vec!["run".to_owned(), "--rm".to_owned()];
        for b in &req.binds {
            args.push("-v".to_owned());
            args.push(format!("{}:{}", b.host.display(), b.guest));
        }
        args.push("-w".to_owned());
        args.push(req.workdir.to_string());
        for e in &req.env {
            args.push("-e".to_owned());
            args.push(e.clone());
        }
        let mut rest_of_entrypoint: &[String] = &[];
        if let Some([first, rest @ ..]) = req.entrypoint.as_deref() {
            args.push("--entrypoint".to_owned());
            args.push(first.clone());
            rest_of_entrypoint = rest;
        }
        args.push(image.to_string());
        args.extend(rest_of_entrypoint.iter().cloned());
        args.extend(req.command.iter().cloned());
        Ok(args)
    }
}

impl Executor for RuntimeBridge {
    fn execute(&self, req: &ExecRequest) -> Result<ExecResult, ExecError> {
        req.validate()?;
        let args = self.argv(req)?;
        let mut cmd = Command::new(&self.binary);
        cmd.args(&args);
        match process::run(cmd, req.timeout) {
            Ok(Outcome::Finished(r)) if r.exit_code == RUNTIME_FAILURE => {
                Err(ExecError::ImagePullFailed {
                    image: req.image.clone().expect("checked by argv"),
                    stderr: String::from_utf8_lossy(&r.stderr).trim().to_owned(),
                })
            }
            Ok(Outcome::Finished(r)) => Ok(r),
            Ok(Outcome::TimedOut) => Err(ExecError::Timeout(req.timeout)),
            Err(e) if matches!(e.kind(), io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied) => {
                Err(ExecError::RuntimeUnavailable(self.binary.clone()))
            }
            Err(e) => Err(ExecError::SpawnFailure(e)),
        }
    }
}
