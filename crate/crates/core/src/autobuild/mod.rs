//! Unattended image production from a package table: decide which
//! (package, revision) pairs are missing from the store and generate the
//! tasks that build, test and tag them.

mod adapters;
mod table;

use std::collections::BTreeSet;

use thiserror::Error;

pub use adapters::{parse_adapters, AdapterTemplate, Adapters, PLACEHOLDERS};
pub use table::{parse_packages_tsv, PackageSpec};

use crate::engine::{BindSpec, ControlFile, EngineError, RelPath, RunStep, Step, WrapStep};
use crate::imagestore::{ImageRef, Store, StoreError};
use crate::layerfs::DirPath;

/// Name of the task that builds and tests every target.
pub const AGGREGATE_TASK: &str = "autobuild";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutobuildError {
    #[error("package table is not UTF-8 (at byte {offset})")]
    BadUtf8 { offset: usize },
    #[error("line {line}: expected 4 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: field {column} is empty")]
    EmptyField { line: usize, column: usize },
    #[error("line {line}: {package} {revision} is listed twice")]
    DuplicatePackageRevision {
        line: usize,
        package: String,
        revision: String,
    },
    #[error("adapters: {0}")]
    Adapters(String),
    #[error("adapter {adapter:?}: unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder { adapter: String, placeholder: String },
    #[error("no adapter for packager {packager:?} (package {package})")]
    UnknownPackager { packager: String, package: String },
    #[error("{package} {revision}: {reason}")]
    InvalidTarget {
        package: String,
        revision: String,
        reason: String,
    },
    #[error("generated task {0:?} collides with an existing task")]
    TaskCollision(String),
}

/// A set of (package, revision) pairs.
pub type TargetSet = BTreeSet<(String, String)>;

/// Pairs listed in the table.
pub fn desired_targets(specs: &[PackageSpec]) -> TargetSet {
    specs
        .iter()
        .map(|s| (s.package.clone(), s.revision.clone()))
        .collect()
}

/// Pairs already present in the store as tags `<namespace>/<package>:<revision>`.
pub fn actual_targets(store: &Store, namespace: &str) -> Result<TargetSet, StoreError> {
    let prefix = format!("{namespace}/");
    Ok(store
        .tags()?
        .into_iter()
        .filter_map(|(r, _)| {
            let package = r.repository().strip_prefix(&prefix)?;
            (!package.contains('/')).then(|| (package.to_owned(), r.version().to_owned()))
        })
        .collect())
}

/// Pairs that need building: desired minus actual. Pairs present but no
/// longer desired are left alone.
pub fn determine_targets(desired: &TargetSet, actual: &TargetSet) -> TargetSet {
    desired.difference(actual).cloned().collect()
}

pub fn image_ref(namespace: &str, package: &str, revision: &str) -> Result<ImageRef, AutobuildError> {
    ImageRef::new(&format!("{namespace}/{package}"), revision).map_err(|e| AutobuildError::InvalidTarget {
        package: package.to_owned(),
        revision: revision.to_owned(),
        reason: e.to_string(),
    })
}

pub fn build_task(package: &str, revision: &str) -> String {
    format!("build:{package}:{revision}")
}

pub fn test_task(package: &str, revision: &str) -> String {
    format!("test:{package}:{revision}")
}

/// Builds the task fragment for `targets`, in table order.
///
/// Each target gets `build:<pkg>:<rev>` (adapter command, then wrap of the
/// output directory tagged `<namespace>/<pkg>:<rev>`) and `test:<pkg>:<rev>`
/// (the test command via `/bin/sh -c` inside the new image). The aggregate
/// task runs them all. No targets gives an empty fragment.
pub fn synthesize_tasks(
    targets: &TargetSet,
    specs: &[PackageSpec],
    adapters: &Adapters,
    namespace: &str,
) -> Result<ControlFile, AutobuildError> {
    let mut control = ControlFile::new();
    let mut aggregate = Vec::new();
    for spec in specs {
        if !targets.contains(&(spec.package.clone(), spec.revision.clone())) {
            continue;
        }
        let (package, revision) = (spec.package.as_str(), spec.revision.as_str());
        let invalid = |reason: String| AutobuildError::InvalidTarget {
            package: package.to_owned(),
            revision: revision.to_owned(),
            reason,
        };
        let adapter = adapters
            .get(&spec.packager)
            .ok_or_else(|| AutobuildError::UnknownPackager {
                packager: spec.packager.clone(),
                package: package.to_owned(),
            })?;
        let product = image_ref(namespace, package, revision)?;
        let fill = |s: &str| adapters::fill(s, package, revision);

        let mut build = RunStep::new(adapter.image.clone(), adapter.build_command.iter().map(|s| fill(s)).collect());
        build.env = adapter.env.clone();
        let wrap = WrapStep {
            directory: RelPath::parse(&fill(&adapter.output_dir)).map_err(invalid)?,
            base: adapter.base.clone(),
            at: adapter.at.clone(),
            as_ref: product.clone(),
            config: Default::default(),
        };

        let mut test = RunStep::new(product, vec!["/bin/sh".into(), "-c".into(), spec.test.clone()]);
        test.workdir = DirPath::root();
        test.binds = Vec::<BindSpec>::new();

        let (b, t) = (build_task(package, revision), test_task(package, revision));
        insert(&mut control, &b, vec![Step::Run(build), Step::Wrap(wrap)])?;
        insert(&mut control, &t, vec![Step::Run(test)])?;
        aggregate.push(Step::Task(b));
        aggregate.push(Step::Task(t));
    }
    if !aggregate.is_empty() {
        insert(&mut control, AGGREGATE_TASK, aggregate)?;
    }
    Ok(control)
}

fn insert(control: &mut ControlFile, name: &str, steps: Vec<Step>) -> Result<(), AutobuildError> {
    control.insert(name, steps).map_err(|e| match e {
        EngineError::DuplicateTask(t) => AutobuildError::TaskCollision(t),
        other => AutobuildError::InvalidTarget {
            package: String::new(),
            revision: String::new(),
            reason: format!("task {name}: {other}"),
        },
    })
}

/// Adds a generated fragment to existing tasks, refusing name collisions.
pub fn merge_fragment(control: &mut ControlFile, fragment: ControlFile) -> Result<(), AutobuildError> {
    control.merge(fragment).map_err(|e| match e {
        EngineError::DuplicateTask(t) => AutobuildError::TaskCollision(t),
        other => AutobuildError::Adapters(other.to_string()),
    })
}

/// Everything one autobuild pass computes before running anything.
#[derive(Debug)]
pub struct AutobuildPlan {
    pub desired: TargetSet,
    pub actual: TargetSet,
    pub targets: TargetSet,
    pub tasks: ControlFile,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Autobuild(#[from] AutobuildError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Compares the table against the store and synthesizes the tasks for what
/// is missing.
pub fn plan_autobuild(
    store: &Store,
    specs: &[PackageSpec],
    adapters: &Adapters,
    namespace: &str,
) -> Result<AutobuildPlan, PlanError> {
    let desired = desired_targets(specs);
    let actual = actual_targets(store, namespace)?;
    let targets = determine_targets(&desired, &actual);
    let tasks = synthesize_tasks(&targets, specs, adapters, namespace)?;
    Ok(AutobuildPlan {
        desired,
        actual,
        targets,
        tasks,
    })
}
