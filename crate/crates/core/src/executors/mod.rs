//! Running builder commands.
//!
//! An [`Executor`] takes an [`ExecRequest`] (image, argv, environment,
//! working directory, bind mounts) and returns an [`ExecResult`]. Two
//! implementations exist: [`HostExecutor`] runs the command as a plain host
//! process and [`RuntimeBridge`] hands it to an external container runtime
//! CLI.

mod bridge;
mod host;
mod process;
pub mod rootfs;

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub use bridge::RuntimeBridge;
pub use host::HostExecutor;
pub use rootfs::{materialize_rootfs, read_directory, write_directory};

use crate::imagestore::{ImageRef, StoreError};
use crate::layerfs::{DirPath, FsError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3600);

/// A host directory made visible at `guest` inside the builder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bind {
    pub host: PathBuf,
    pub guest: DirPath,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecRequest {
    pub image: Option<ImageRef>,
    pub entrypoint: Option<Vec<String>>,
    pub command: Vec<String>,
    pub env: Vec<String>,
    pub workdir: DirPath,
    pub binds: Vec<Bind>,
    pub timeout: Duration,
}

impl ExecRequest {
    pub fn new(command: Vec<String>) -> Self {
        ExecRequest {
            image: None,
            entrypoint: None,
            command,
            env: Vec::new(),
            workdir: DirPath::root(),
            binds: Vec::new(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Entrypoint words followed by command words.
    pub fn argv(&self) -> Vec<String> {
        self.entrypoint
            .iter()
            .flatten()
            .chain(&self.command)
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        let invalid = |m: String| Err(ExecError::InvalidRequest(m));
        if self.argv().is_empty() {
            return invalid("empty command and no entrypoint".into());
        }
        for (i, b) in self.binds.iter().enumerate() {
            if !b.host.is_absolute() {
                return invalid(format!("bind host path {} is not absolute", b.host.display()));
            }
            if self.binds[..i].iter().any(|o| o.guest == b.guest) {
                return invalid(format!("guest path {} bound twice", b.guest));
            }
        }
        for e in &self.env {
            match e.split_once('=') {
                Some((k, _)) if !k.is_empty() => {}
                _ => return invalid(format!("environment entry {e:?} is not KEY=VALUE")),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    /// Process exit status; 128 + signal number when killed by a signal.
    pub exit_code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub wall_time: Duration,
}

pub trait Executor {
    fn execute(&self, req: &ExecRequest) -> Result<ExecResult, ExecError>;
}

impl<E: Executor + ?Sized> Executor for &E {
    fn execute(&self, req: &ExecRequest) -> Result<ExecResult, ExecError> {
        (**self).execute(req)
    }
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn execute(&self, req: &ExecRequest) -> Result<ExecResult, ExecError> {
        (**self).execute(req)
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("invalid exec request: {0}")]
    InvalidRequest(String),
    #[error("command not found: {0}")]
    CommandNotFound(String),
    #[error("command timed out after {0:?}")]
    Timeout(Duration),
    #[error("failed to start process: {0}")]
    SpawnFailure(#[source] std::io::Error),
    #[error("container runtime {0} is not available")]
    RuntimeUnavailable(PathBuf),
    #[error("runtime could not start image {image}: {stderr}")]
    ImagePullFailed { image: ImageRef, stderr: String },
    #[error("the runtime bridge needs an image")]
    MissingImage,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("{0} is not valid UTF-8")]
    NonUtf8Path(PathBuf),
    #[error("{path}: {reason}")]
    BadPath { path: PathBuf, reason: String },
    #[error("{0}: only regular files, directories and symlinks are supported")]
    UnsupportedFileType(PathBuf),
    #[error("{0} is not empty")]
    DestinationNotEmpty(PathBuf),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Fs(#[from] FsError),
}
