//! The `donning` command: build images from control files and manage the
//! local image store.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use donning_core::autobuild::{self, AutobuildError, PlanError, AGGREGATE_TASK};
use donning_core::engine::{self, ControlFile, EngineError, ExecutionReport, Status, VarMap};
use donning_core::executors::{read_directory, Executor, HostExecutor, RuntimeBridge};
use donning_core::imagestore::{self, ImageRef, Store, StoreError};
use donning_core::layerfs::{diff, Change};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CORRUPTION: i32 = 3;

pub const DEFAULT_CONTROL_FILE: &str = "donning.tasks";

#[derive(Debug, Parser)]
#[command(name = "donning", version, about = "Build container images by donning one layer onto a base")]
pub struct Invocation {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, PartialEq, Eq)]
pub struct StoreArgs {
    /// Image store directory [default: ~/.donning/store]
    #[arg(long, env = "DONNING_STORE", value_name = "DIR")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, PartialEq, Eq)]
pub struct ExecArgs {
    /// Working directory: source tree, bind root and base for relative paths
    #[arg(short = 'C', value_name = "WORKDIR", default_value = ".")]
    pub workdir: PathBuf,
    /// Run steps through a container runtime CLI instead of on the host
    #[arg(long, env = "DONNING_RUNTIME", value_name = "BIN")]
    pub runtime: Option<PathBuf>,
    /// Write the execution report as JSON
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Clone, PartialEq, Eq)]
pub enum Command {
    /// Run tasks from a control file
    Build {
        /// Control file, relative to WORKDIR
        #[arg(short = 'f', value_name = "FILE", default_value = DEFAULT_CONTROL_FILE)]
        file: PathBuf,
        /// Set a variable for ${NAME} substitution
        #[arg(short = 's', value_name = "NAME=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        exec: ExecArgs,
        #[command(flatten)]
        store: StoreArgs,
        #[arg(required = true, value_name = "TASK")]
        tasks: Vec<String>,
    },
    /// List tagged images
    Images {
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Show an image's config digest, layers and runtime config
    Inspect {
        #[arg(value_name = "REF")]
        image: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Flatten an image into a single layer
    Squash {
        #[arg(value_name = "REF")]
        image: String,
        #[arg(long = "as", value_name = "REF")]
        as_ref: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Write an image and its blobs to a directory
    Export {
        #[arg(value_name = "REF")]
        image: String,
        #[arg(short = 'o', value_name = "DIR")]
        output: PathBuf,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Verify and load an exported directory
    Import {
        #[arg(value_name = "DIR")]
        dir: PathBuf,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Show the layer that turns DIR_A into DIR_B
    Diff {
        #[arg(value_name = "DIR_A")]
        a: PathBuf,
        #[arg(value_name = "DIR_B")]
        b: PathBuf,
    },
    /// Build and test every package in a table that the store lacks
    Autobuild {
        #[arg(long = "spec", value_name = "FILE")]
        spec: PathBuf,
        #[arg(long, value_name = "FILE")]
        adapters: PathBuf,
        #[arg(long, value_name = "NS")]
        namespace: String,
        /// Print the generated tasks instead of running them
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        exec: ExecArgs,
        #[command(flatten)]
        store: StoreArgs,
    },
}

/// Parses a full argv (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<Invocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Invocation::try_parse_from(argv)
}

/// Collects `-s` assignments.
pub fn var_map(assignments: &[String]) -> Result<VarMap, engine::VarError> {
    let mut vars = VarMap::new();
    for a in assignments {
        vars.assign(a)?;
    }
    Ok(vars)
}

/// Parses and dispatches, writing to the process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    match parse_args(argv) {
        Ok(inv) => dispatch(inv, &mut stdout.lock(), &mut stderr.lock()),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn failed(message: impl Display) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: message.to_string(),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure {
            code: if e.is_corruption() { EXIT_CORRUPTION } else { EXIT_FAILURE },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::failed(e)
    }
}

/// Runs one command. Output goes to `out`, diagnostics to `err`; the
/// return value is the process exit code.
pub fn dispatch(inv: Invocation, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch_inner(inv, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn default_store() -> PathBuf {
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".donning").join("store")
}

fn open_store(args: &StoreArgs) -> Result<Store, Failure> {
    Ok(Store::open(args.store.clone().unwrap_or_else(default_store))?)
}

fn image_ref(s: &str) -> Result<ImageRef, Failure> {
    ImageRef::parse(s).map_err(Failure::usage)
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn dispatch_inner(inv: Invocation, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match inv.command {
        Command::Build {
            file,
            set,
            exec,
            store,
            tasks,
        } => {
            let vars = var_map(&set).map_err(Failure::usage)?;
            let store = open_store(&store)?;
            let control = engine::parse_control(&read_file(&exec.workdir.join(&file))?, &vars)
                .map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
            let requested: Vec<&str> = tasks.iter().map(String::as_str).collect();
            run_tasks(&control, &requested, &exec, &store, &vars, out, err)
        }
        Command::Images { store } => {
            let store = open_store(&store)?;
            for (r, d) in store.tags()? {
                let layers = store.get_config(&d)?.layers.len();
                writeln!(out, "{r}\t{d}\t{layers} layer{}", if layers == 1 { "" } else { "s" })?;
            }
            Ok(())
        }
        Command::Inspect { image, store } => {
            let store = open_store(&store)?;
            let (digest, config) = store.resolve(&image_ref(&image)?)?;
            writeln!(out, "digest: {digest}")?;
            writeln!(out, "layers: {}", config.layers.len())?;
            for l in &config.layers {
                writeln!(out, "  {l}")?;
            }
            if let Some(e) = &config.entrypoint {
                writeln!(out, "entrypoint: {}", json_list(e))?;
            }
            if let Some(c) = &config.cmd {
                writeln!(out, "cmd: {}", json_list(c))?;
            }
            for e in &config.env {
                writeln!(out, "env: {e}")?;
            }
            if let Some(w) = &config.workingdir {
                writeln!(out, "workdir: {}", w.display_name())?;
            }
            if let Some(u) = &config.user {
                writeln!(out, "user: {u}")?;
            }
            for p in &config.exposed_ports {
                writeln!(out, "port: {p}")?;
            }
            Ok(())
        }
        Command::Squash { image, as_ref, store } => {
            let (source, target) = (image_ref(&image)?, image_ref(&as_ref)?);
            let store = open_store(&store)?;
            let (_, config) = store.resolve(&source)?;
            let squashed = imagestore::squash(&store, &config)?;
            let digest = store.put_config(&squashed)?;
            store.tag(&target, &digest)?;
            writeln!(out, "{target}\t{digest}")?;
            Ok(())
        }
        Command::Export { image, output, store } => {
            let r = image_ref(&image)?;
            let store = open_store(&store)?;
            imagestore::export_image(&store, &r, &output)?;
            writeln!(out, "exported {r} to {}", output.display())?;
            Ok(())
        }
        Command::Import { dir, store } => {
            let store = open_store(&store)?;
            for r in imagestore::import_image(&store, &dir)? {
                writeln!(out, "imported {r}")?;
            }
            Ok(())
        }
        Command::Diff { a, b } => {
            let read = |p: &Path| read_directory(p).map_err(|e| Failure::failed(format!("{}: {e}", p.display())));
            let layer = diff(&read(&a)?, &read(&b)?);
            let (mut puts, mut deletes) = (0, 0);
            for (path, change) in layer.iter() {
                match change {
                    Change::Put(_) => {
                        puts += 1;
                        writeln!(out, "put\t{path}")?;
                    }
                    Change::Delete => {
                        deletes += 1;
                        writeln!(out, "delete\t{path}")?;
                    }
                }
            }
            writeln!(out, "{puts} put, {deletes} delete")?;
            Ok(())
        }
        Command::Autobuild {
            spec,
            adapters,
            namespace,
            dry_run,
            exec,
            store,
        } => {
            let specs = autobuild::parse_packages_tsv(&read_file(&spec)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", spec.display())))?;
            let adapters = autobuild::parse_adapters(&read_file(&adapters)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", adapters.display())))?;
            let store = open_store(&store)?;
            let plan = autobuild::plan_autobuild(&store, &specs, &adapters, &namespace).map_err(|e| match e {
                PlanError::Store(e) => Failure::from(e),
                PlanError::Autobuild(e @ AutobuildError::UnknownPackager { .. }) => Failure::usage(e),
                PlanError::Autobuild(e) => Failure::failed(e),
            })?;
            writeln!(
                err,
                "{} desired, {} present, {} to build",
                plan.desired.len(),
                plan.desired.len() - plan.targets.len(),
                plan.targets.len()
            )?;
            if dry_run {
                write!(out, "{}", plan.tasks.to_json())?;
                return Ok(());
            }
            if plan.tasks.is_empty() {
                writeln!(out, "nothing to build")?;
                return Ok(());
            }
            run_tasks(&plan.tasks, &[AGGREGATE_TASK], &exec, &store, &VarMap::new(), out, err)
        }
    }
}

fn json_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("{s:?}")).collect();
    format!("[{}]", quoted.join(", "))
}

fn run_tasks(
    control: &ControlFile,
    requested: &[&str],
    exec: &ExecArgs,
    store: &Store,
    vars: &VarMap,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    let executor: Box<dyn Executor> = match &exec.runtime {
        Some(bin) => Box::new(RuntimeBridge::new(bin)),
        None => Box::new(HostExecutor::with_store(store.clone())),
    };
    let result = engine::execute(control, requested, &executor, store, &exec.workdir, vars);
    let report = match &result {
        Ok(r) => r,
        Err(f) => &f.report,
    };
    print_report(report, out)?;
    if let Some(path) = &exec.report {
        fs::write(path, report.to_json()).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?;
    }
    match result {
        Ok(_) => Ok(()),
        Err(failure) => {
            if let Some(last) = failure.report.steps.last() {
                if !last.stderr.is_empty() {
                    let _ = write!(err, "{}", last.stderr);
                }
            }
            let code = match &failure.error {
                e if e.is_corruption() => EXIT_CORRUPTION,
                EngineError::UnknownTask(_) if failure.location.is_none() => EXIT_USAGE,
                _ => EXIT_FAILURE,
            };
            Err(Failure {
                code,
                message: failure.to_string(),
            })
        }
    }
}

fn print_report(report: &ExecutionReport, out: &mut dyn Write) -> io::Result<()> {
    for (i, s) in report.steps.iter().enumerate() {
        let failed = report.status == Status::Failed && i + 1 == report.steps.len();
        write!(
            out,
            "[{}] {} step {} ({})",
            if failed { "FAIL" } else { " ok " },
            s.task,
            s.step_index,
            s.kind
        )?;
        if let Some(code) = s.exit_code {
            write!(out, " exit={code}")?;
        }
        if let Some(d) = &s.digest {
            write!(out, " {d}")?;
        }
        writeln!(out, " {:.3}s", s.wall_time_secs)?;
        for line in s.stdout.lines() {
            writeln!(out, "    | {line}")?;
        }
    }
    Ok(())
}
