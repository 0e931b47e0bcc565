//! Control files: named tasks made of steps.
//!
//! The on-disk form is JSON (schema in `schema/control.schema.json`):
//!
//! ```json
//! {"tasks": {
//!   "build": [{"run": {"image": "gcc:latest", "command": ["make"]}}],
//!   "package": [{"wrap": {"directory": "dist", "at": "/usr/local/bin",
//!                         "as": "demo/toolset:v1"}}],
//!   "all": [{"task": "build"}, {"task": "package"}]
//! }}
//! ```
//!
//! Every string value may use `${NAME}`; `$$` is a literal `$`.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::vars::{escape_vars, substitute_vars, VarMap};
use super::EngineError;
use crate::imagestore::{ConfigOverrides, ImageRef};
use crate::layerfs::DirPath;

pub const STEP_KINDS: [&str; 6] = ["run", "wrap", "task", "tag", "push", "generate"];

/// Task names: `[a-z0-9:_.-]+`.
pub fn valid_task_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b':' | b'_' | b'.' | b'-'))
}

/// A path relative to the engine's working directory. Never absolute and
/// never containing `..`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RelPath(String);

impl RelPath {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        if s.starts_with('/') {
            return Err(format!("{s:?} must be relative to the working directory"));
        }
        if s.split('/').any(|seg| seg == "..") {
            return Err(format!("{s:?} must not contain '..'"));
        }
        Ok(RelPath(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RelPath {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        RelPath::parse(&s)
    }
}

impl From<RelPath> for String {
    fn from(p: RelPath) -> String {
        p.0
    }
}

/// An unanchored regular expression (Rust `regex` syntax) searched for in
/// the command's standard output.
#[derive(Debug, Clone)]
pub struct Pattern(Regex);

impl Pattern {
    pub fn new(re: &str) -> Result<Self, regex::Error> {
        Regex::new(re).map(Pattern)
    }

    pub fn is_match(&self, haystack: &str) -> bool {
        self.0.is_match(haystack)
    }

    pub fn as_str(&self) -> &str {
        self.0.as_str()
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.as_str() == other.as_str()
    }
}

impl Eq for Pattern {}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Pattern::new(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdout_matches: Option<Pattern>,
    #[serde(default)]
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindSpec {
    pub host: RelPath,
    pub guest: DirPath,
}

fn default_workdir() -> DirPath {
    DirPath::parse("/source").expect("valid")
}

fn default_binds() -> Vec<BindSpec> {
    vec![BindSpec {
        host: RelPath(".".into()),
        guest: default_workdir(),
    }]
}

/// Run a command in a throwaway environment built from `image`. By default
/// the working directory is mounted at `/source` and used as the command's
/// working directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunStep {
    pub image: ImageRef,
    pub command: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entrypoint: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub env: Vec<String>,
    #[serde(default = "default_workdir")]
    pub workdir: DirPath,
    #[serde(default = "default_binds")]
    pub binds: Vec<BindSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

impl RunStep {
    pub fn new(image: ImageRef, command: Vec<String>) -> Self {
        RunStep {
            image,
            command,
            entrypoint: None,
            env: Vec::new(),
            workdir: default_workdir(),
            binds: default_binds(),
            expect: None,
        }
    }
}

/// Don `directory` as one new layer on `base` (or on nothing) at `at`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrapStep {
    pub directory: RelPath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<ImageRef>,
    #[serde(default = "DirPath::root")]
    pub at: DirPath,
    #[serde(rename = "as")]
    pub as_ref: ImageRef,
    #[serde(default, skip_serializing_if = "ConfigOverrides::is_empty")]
    pub config: ConfigOverrides,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagStep {
    pub source: ImageRef,
    #[serde(rename = "as")]
    pub as_ref: ImageRef,
}

/// Export an image to a directory (relative paths resolve against the
/// working directory).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushStep {
    pub image: ImageRef,
    pub target: String,
}

/// Run a command that writes a tasks file, then add those tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateStep {
    pub run: RunStep,
    pub tasks_file: RelPath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Run(RunStep),
    Wrap(WrapStep),
    Task(String),
    Tag(TagStep),
    Push(PushStep),
    Generate(GenerateStep),
}

impl Step {
    pub fn kind(&self) -> &'static str {
        match self {
            Step::Run(_) => "run",
            Step::Wrap(_) => "wrap",
            Step::Task(_) => "task",
            Step::Tag(_) => "tag",
            Step::Push(_) => "push",
            Step::Generate(_) => "generate",
        }
    }

    fn validate(&self) -> Result<(), String> {
        let check_run = |r: &RunStep| {
            if r.command.is_empty() {
                return Err("run command must not be empty".to_owned());
            }
            for (i, b) in r.binds.iter().enumerate() {
                if r.binds[..i].iter().any(|o| o.guest == b.guest) {
                    return Err(format!("guest path {} bound twice", b.guest));
                }
            }
            Ok(())
        };
        match self {
            Step::Run(r) => check_run(r),
            Step::Generate(g) => check_run(&g.run),
            Step::Task(t) if !valid_task_name(t) => Err(format!("invalid task name {t:?}")),
            _ => Ok(()),
        }
    }
}

/// Tasks by name. Task order in the file carries no meaning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlFile {
    tasks: BTreeMap<String, Vec<Step>>,
}

impl ControlFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, task: &str) -> Option<&[Step]> {
        self.tasks.get(task).map(Vec::as_slice)
    }

    /// The stored name alongside the steps.
    pub fn entry(&self, task: &str) -> Option<(&str, &[Step])> {
        self.tasks
            .get_key_value(task)
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn contains(&self, task: &str) -> bool {
        self.tasks.contains_key(task)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task_names(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(String::as_str)
    }

    pub fn tasks(&self) -> impl Iterator<Item = (&str, &[Step])> {
        self.tasks.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Adds a task; the name must be new.
    pub fn insert(&mut self, name: &str, steps: Vec<Step>) -> Result<(), EngineError> {
        if !valid_task_name(name) {
            return Err(EngineError::InvalidTaskName(name.to_owned()));
        }
        if self.tasks.contains_key(name) {
            return Err(EngineError::DuplicateTask(name.to_owned()));
        }
        for (i, s) in steps.iter().enumerate() {
            s.validate().map_err(|message| EngineError::Schema {
                task: Some(name.to_owned()),
                step: Some(i),
                message,
            })?;
        }
        self.tasks.insert(name.to_owned(), steps);
        Ok(())
    }

    /// Adds every task of `other`. Fails without changes if any name is
    /// already taken.
    pub fn merge(&mut self, other: ControlFile) -> Result<(), EngineError> {
        if let Some(dup) = other.tasks.keys().find(|k| self.tasks.contains_key(*k)) {
            return Err(EngineError::DuplicateTask(dup.clone()));
        }
        self.tasks.extend(other.tasks);
        Ok(())
    }

    /// The control-file JSON for these tasks. Literal `$` is escaped so the
    /// output parses back to the same tasks.
    pub fn to_json(&self) -> String {
        let mut tasks = serde_json::Map::new();
        for (name, steps) in &self.tasks {
            let steps = steps
                .iter()
                .map(|s| map_strings(serde_json::to_value(s).expect("step serializes"), &mut |s| Ok::<_, ()>(escape_vars(s))).unwrap())
                .collect();
            tasks.insert(name.clone(), Value::Array(steps));
        }
        let mut doc = serde_json::Map::new();
        doc.insert("tasks".into(), Value::Object(tasks));
        serde_json::to_string_pretty(&Value::Object(doc)).expect("json serializes") + "\n"
    }
}

fn map_strings<E>(v: Value, f: &mut impl FnMut(&str) -> Result<String, E>) -> Result<Value, E> {
    Ok(match v {
        Value::String(s) => Value::String(f(&s)?),
        Value::Array(items) => Value::Array(
            items
                .into_iter()
                .map(|i| map_strings(i, f))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| Ok((k, map_strings(v, f)?)))
                .collect::<Result<_, E>>()?,
        ),
        other => other,
    })
}

/// Task entries in document order, duplicates kept so they can be reported.
struct TaskEntries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for TaskEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = TaskEntries;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from task name to a list of steps")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<TaskEntries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(TaskEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    tasks: TaskEntries,
}

/// Parses a control file (or a generated tasks file, same format),
/// substituting `vars` into every string value before steps are checked.
pub fn parse_control(bytes: &[u8], vars: &VarMap) -> Result<ControlFile, EngineError> {
    let doc: Document = serde_json::from_slice(bytes).map_err(|e| EngineError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut control = ControlFile::new();
    for (name, steps) in doc.tasks.0 {
        if !valid_task_name(&name) {
            return Err(EngineError::InvalidTaskName(name));
        }
        if control.contains(&name) {
            return Err(EngineError::DuplicateTask(name));
        }
        let Value::Array(raw_steps) = steps else {
            return Err(EngineError::Schema {
                task: Some(name),
                step: None,
                message: "a task must be a list of steps".into(),
            });
        };
        let mut parsed = Vec::with_capacity(raw_steps.len());
        for (i, raw) in raw_steps.into_iter().enumerate() {
            let schema = |message: String| EngineError::Schema {
                task: Some(name.clone()),
                step: Some(i),
                message,
            };
            let raw = map_strings(raw, &mut |s| substitute_vars(s, vars))?;
            let kind = match &raw {
                Value::Object(m) if m.len() == 1 => m.keys().next().unwrap().clone(),
                _ => return Err(schema("a step must be an object with exactly one key".into())),
            };
            if !STEP_KINDS.contains(&kind.as_str()) {
                return Err(EngineError::UnknownStepKind {
                    task: name.clone(),
                    step: i,
                    kind,
                });
            }
            let step: Step = serde_json::from_value(raw).map_err(|e| schema(format!("{kind}: {e}")))?;
            step.validate().map_err(schema)?;
            parsed.push(step);
        }
        control.tasks.insert(name, parsed);
    }
    Ok(control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::VarError;

    fn parse(s: &str) -> Result<ControlFile, EngineError> {
        parse_control(s.as_bytes(), &VarMap::new())
    }

    #[test]
    fn hello_world_wrap() {
        let c = parse(
            r#"{"tasks": {"wrap": [{"wrap": {
                "directory": ".", "at": "/",
                "config": {"cmd": ["/bin/sh", "/hello-world.sh"]},
                "base": "busybox:latest", "as": "test/hello_world"}}]}}"#,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        let steps = c.get("wrap").unwrap();
        assert_eq!(steps.len(), 1);
        let Step::Wrap(w) = &steps[0] else { panic!() };
        assert_eq!(w.as_ref.to_string(), "test/hello_world:latest");
        assert_eq!(w.config.cmd.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn run_defaults() {
        let c = parse(r#"{"tasks": {"prep": [{"run": {"image": "busybox", "command": ["mkdir", "-p", "dist"]}}]}}"#)
            .unwrap();
        let Step::Run(r) = &c.get("prep").unwrap()[0] else { panic!() };
        assert_eq!(r.workdir.as_str(), "/source/");
        assert_eq!(r.binds, default_binds());
        assert_eq!(r.expect, None);
    }

    #[test]
    fn errors() {
        let dup = r#"{"tasks": {"build": [], "build": []}}"#;
        assert!(matches!(parse(dup), Err(EngineError::DuplicateTask(n)) if n == "build"));
        let unknown = r#"{"tasks": {"x": [{"frobnicate": {}}]}}"#;
        assert!(matches!(parse(unknown), Err(EngineError::UnknownStepKind { kind, .. }) if kind == "frobnicate"));
        assert!(matches!(parse("{\"tasks\": {\n  \"x\": [,]}}"), Err(EngineError::Syntax { line: 2, .. })));
        assert!(matches!(parse(r#"{"tasks": {"X": []}}"#), Err(EngineError::InvalidTaskName(_))));
        assert!(matches!(parse(r#"{"tasks": {}, "extra": 1}"#), Err(EngineError::Syntax { .. })));
        let empty_cmd = r#"{"tasks": {"x": [{"run": {"image": "a", "command": []}}]}}"#;
        assert!(matches!(parse(empty_cmd), Err(EngineError::Schema { step: Some(0), .. })));
        let two_keys = r#"{"tasks": {"x": [{"task": "a", "run": {}}]}}"#;
        assert!(matches!(parse(two_keys), Err(EngineError::Schema { .. })));
        let bad_regex = r#"{"tasks": {"x": [{"run": {"image": "a", "command": ["a"], "expect": {"stdout_matches": "("}}}]}}"#;
        assert!(matches!(parse(bad_regex), Err(EngineError::Schema { .. })));
        let abs = r#"{"tasks": {"x": [{"wrap": {"directory": "/etc", "as": "a"}}]}}"#;
        assert!(matches!(parse(abs), Err(EngineError::Schema { .. })));
        let unknown_var = r#"{"tasks": {"x": [{"tag": {"source": "a", "as": "${TAG}"}}]}}"#;
        assert!(matches!(
            parse(unknown_var),
            Err(EngineError::Var(VarError::UnknownVariable(v))) if v == "TAG"
        ));
    }

    #[test]
    fn substitution_applies_to_all_strings() {
        let mut vars = VarMap::new();
        vars.insert("TAG", "demo/blog:v1").unwrap();
        vars.insert("PKG", "github.com/thriqon/blog").unwrap();
        let c = parse_control(
            br#"{"tasks": {"package": [
                {"run": {"image": "golang:1.6", "command": ["go", "build"],
                         "workdir": "/go/src/${PKG}",
                         "binds": [{"host": "backend", "guest": "/go/src/${PKG}"}]}},
                {"tag": {"source": "x", "as": "${TAG}"}}]}}"#,
            &vars,
        )
        .unwrap();
        let steps = c.get("package").unwrap();
        let Step::Run(r) = &steps[0] else { panic!() };
        assert_eq!(r.workdir.to_string(), "/go/src/github.com/thriqon/blog");
        let Step::Tag(t) = &steps[1] else { panic!() };
        assert_eq!(t.as_ref.to_string(), "demo/blog:v1");
    }

    #[test]
    fn json_round_trip() {
        let src = r#"{"tasks": {
            "all": [{"task": "build"}, {"task": "package"}],
            "build": [{"run": {"image": "gcc", "command": ["sh", "-c", "echo $$HOME"],
                      "expect": {"stdout_matches": "^/", "exit_code": 0}}}],
            "package": [{"wrap": {"directory": "dist", "at": "/usr/local/bin", "as": "demo/toolset:v1",
                        "config": {"cmd": ["/usr/local/bin/a"]}}},
                        {"push": {"image": "demo/toolset:v1", "target": "out"}}],
            "gen": [{"generate": {"run": {"image": "busybox", "command": ["./gen.sh"]}, "tasks_file": ".tasks"}}]
        }}"#;
        let c = parse(src).unwrap();
        let again = parse(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn merge_rejects_redefinition() {
        let mut a = parse(r#"{"tasks": {"x": []}}"#).unwrap();
        let b = parse(r#"{"tasks": {"x": [], "y": []}}"#).unwrap();
        assert!(matches!(a.merge(b), Err(EngineError::DuplicateTask(_))));
        assert!(!a.contains("y"));
    }
}
