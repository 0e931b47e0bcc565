use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::process::{self, Outcome};
use super::rootfs::{host_path, materialize_rootfs};
use super::{Bind, ExecError, ExecRequest, ExecResult, Executor};
use crate::imagestore::{Store, StoreError};
use crate::layerfs::{DirPath, PathName};

const FALLBACK_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

/// Runs builder commands as ordinary host processes.
///
/// **This provides no isolation.** The command sees the host's binaries and
/// can touch anything the calling user can. It exists so builds and tests
/// run without container infrastructure, and should only be used for
/// trusted control files.
///
/// Each run gets a fresh scratch directory that stands in for the
/// container's root. When the request names an image present in the
/// configured store, its union view is materialized there first; unknown
/// images are ignored. Guest paths are translated for the working
/// directory and for argv words that are absolute paths: a path below a
/// bind maps to the bound host directory, a path that exists in the scratch
/// root maps there, anything else (say `/bin/sh`) is left for the host.
/// Paths embedded inside larger words, such as a `sh -c` script, are not
/// translated.
#[derive(Debug, Clone, Default)]
pub struct HostExecutor {
    store: Option<Store>,
}

impl HostExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Materializes request images found in `store`.
    pub fn with_store(store: Store) -> Self {
        HostExecutor { store: Some(store) }
    }
}

struct Translation<'a> {
    root: PathBuf,
    binds: Vec<&'a Bind>,
}

impl<'a> Translation<'a> {
    fn new(root: PathBuf, binds: &'a [Bind]) -> Self {
        let mut binds: Vec<&Bind> = binds.iter().collect();
        // Longest guest prefix wins.
        binds.sort_by_key(|b| std::cmp::Reverse(b.guest.as_str().len()));
        Translation { root, binds }
    }

    fn bound(&self, dir: &DirPath) -> Option<PathBuf> {
        self.binds.iter().find(|b| b.guest.contains_dir(dir)).map(|b| {
            let rest = &dir.as_str()[b.guest.as_str().len()..];
            join_rel(&b.host, rest)
        })
    }

    fn dir(&self, dir: &DirPath) -> PathBuf {
        self.bound(dir)
            .unwrap_or_else(|| join_rel(&self.root, dir.relative()))
    }

    fn word(&self, word: &str) -> Option<PathBuf> {
        if !word.starts_with('/') {
            return None;
        }
        let name = PathName::parse(word).ok()?;
        if let Some(p) = self.bound(&name.as_dir()) {
            return Some(p);
        }
        let in_root = host_path(&self.root, &name);
        in_root.symlink_metadata().ok().map(|_| in_root)
    }
}

fn join_rel(base: &Path, rel: &str) -> PathBuf {
    let mut p = base.to_owned();
    for seg in rel.split('/').filter(|s| !s.is_empty()) {
        p.push(seg);
    }
    p
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ExecError + '_ {
    move |source| ExecError::Io {
        path: path.to_owned(),
        source,
    }
}

impl Executor for HostExecutor {
    fn execute(&self, req: &ExecRequest) -> Result<ExecResult, ExecError> {
        req.validate()?;
        let scratch = tempfile::Builder::new()
            .prefix("donning-run-")
            .tempdir()
            .map_err(|e| ExecError::Io {
                path: std::env::temp_dir(),
                source: e,
            })?;
        let root = scratch.path().join("root");
        let home = scratch.path().join("home");
        let tmp = scratch.path().join("tmp");
        for d in [&home, &tmp] {
            fs::create_dir(d).map_err(io_at(d))?;
        }

        let image = match (&self.store, &req.image) {
            (Some(store), Some(r)) => match store.resolve(r) {
                Ok((_, config)) => Some(config),
                Err(StoreError::UnknownTag(_)) => None,
                Err(e) => return Err(e.into()),
            },
            _ => None,
        };
        match image {
            Some(config) => materialize_rootfs(self.store.as_ref().unwrap(), &config, &root)?,
            None => fs::create_dir(&root).map_err(io_at(&root))?,
        }

        let tr = Translation::new(root, &req.binds);
        let cwd = tr.dir(&req.workdir);
        fs::create_dir_all(&cwd).map_err(io_at(&cwd))?;

        let argv: Vec<String> = req
            .argv()
            .into_iter()
            .map(|w| match tr.word(&w) {
                Some(p) => p.to_string_lossy().into_owned(),
                None => w,
            })
            .collect();

        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(&cwd)
            .env_clear()
            .env(
                "PATH",
                std::env::var_os("PATH").unwrap_or_else(|| FALLBACK_PATH.into()),
            )
            .env("HOME", &home)
            .env("TMPDIR", &tmp);
        for e in &req.env {
            let (k, v) = e.split_once('=').expect("validated");
            cmd.env(k, v);
        }

        match process::run(cmd, req.timeout) {
            Ok(Outcome::Finished(r)) => Ok(r),
            Ok(Outcome::TimedOut) => Err(ExecError::Timeout(req.timeout)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(ExecError::CommandNotFound(req.argv()[0].clone()))
            }
            Err(e) => Err(ExecError::SpawnFailure(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn req(argv: &[&str]) -> ExecRequest {
        ExecRequest::new(argv.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn echo_and_false() {
        let ex = HostExecutor::new();
        let r = ex.execute(&req(&["echo", "hi"])).unwrap();
        assert_eq!(r.exit_code, 0);
        assert_eq!(r.stdout, b"hi\n");
        assert_eq!(ex.execute(&req(&["false"])).unwrap().exit_code, 1);
    }

    #[test]
    fn missing_command() {
        let ex = HostExecutor::new();
        assert!(matches!(
            ex.execute(&req(&["definitely-not-a-command-xyz"])),
            Err(ExecError::CommandNotFound(_))
        ));
    }

    #[test]
    fn signal_maps_to_128_plus() {
        let r = HostExecutor::new()
            .execute(&req(&["/bin/sh", "-c", "kill -TERM $$"]))
            .unwrap();
        assert_eq!(r.exit_code, 128 + libc::SIGTERM);
    }

    #[test]
    fn timeout_kills_group() {
        let mut rq = req(&["/bin/sh", "-c", "sleep 30 & sleep 30"]);
        rq.timeout = Duration::from_millis(200);
        let start = std::time::Instant::now();
        assert!(matches!(HostExecutor::new().execute(&rq), Err(ExecError::Timeout(_))));
        assert!(start.elapsed() < Duration::from_secs(10));
    }

    #[test]
    fn binds_and_workdir() {
        let host = tempfile::tempdir().unwrap();
        let mut rq = req(&["/bin/sh", "-c", "echo built > out.txt; pwd"]);
        rq.binds = vec![Bind {
            host: host.path().to_owned(),
            guest: DirPath::parse("/source").unwrap(),
        }];
        rq.workdir = DirPath::parse("/source").unwrap();
        let r = HostExecutor::new().execute(&rq).unwrap();
        assert_eq!(r.exit_code, 0);
        assert_eq!(fs::read_to_string(host.path().join("out.txt")).unwrap(), "built\n");

        // Absolute guest paths in argv reach the bound directory.
        let mut rq2 = req(&["cp", "/source/out.txt", "/source/sub/copy.txt"]);
        rq2.binds = rq.binds.clone();
        fs::create_dir(host.path().join("sub")).unwrap();
        assert_eq!(HostExecutor::new().execute(&rq2).unwrap().exit_code, 0);
        assert!(host.path().join("sub/copy.txt").is_file());
    }

    #[test]
    fn env_is_clean() {
        let mut rq = req(&["/bin/sh", "-c", "echo \"$GREETING:${CARGO:-unset}\""]);
        rq.env = vec!["GREETING=hello".into()];
        let r = HostExecutor::new().execute(&rq).unwrap();
        assert_eq!(r.stdout, b"hello:unset\n");
        rq.env = vec!["NOEQUALS".into()];
        assert!(matches!(HostExecutor::new().execute(&rq), Err(ExecError::InvalidRequest(_))));
    }

    #[test]
    fn rejects_bad_requests() {
        let ex = HostExecutor::new();
        assert!(matches!(ex.execute(&req(&[])), Err(ExecError::InvalidRequest(_))));
        let mut rq = req(&["true"]);
        let b = Bind {
            host: "/tmp".into(),
            guest: DirPath::parse("/x").unwrap(),
        };
        rq.binds = vec![b.clone(), b];
        assert!(matches!(ex.execute(&rq), Err(ExecError::InvalidRequest(_))));
    }
}
