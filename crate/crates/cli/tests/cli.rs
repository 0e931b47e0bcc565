mod common;

use std::fs;
use std::path::Path;

use common::{donning, stdout};

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn project(root: &Path, tasks: &str) -> std::path::PathBuf {
    let work = root.join("work");
    fs::create_dir_all(work.join("site")).unwrap();
    fs::write(work.join("site/index.html"), "<h1>hi</h1>\n").unwrap();
    fs::write(work.join("donning.tasks"), tasks).unwrap();
    work
}

const BLOG: &str = r#"{"tasks": {
    "package": [{"wrap": {"directory": "site", "at": "/usr/share/nginx/html", "as": "${TAG}",
                 "config": {"cmd": ["nginx", "-g", "daemon off;"], "env": ["MODE=prod"], "workingdir": "/usr/share/nginx/html"}}}],
    "broken": [{"run": {"image": "busybox", "command": ["/bin/sh", "-c", "echo oops >&2; exit 1"]}}],
    "picky": [{"run": {"image": "busybox", "command": ["echo", "nope"], "expect": {"stdout_matches": "^yes"}}}]}}"#;

#[test]
fn build_inspect_images() {
    let tmp = tempfile::tempdir().unwrap();
    let work = project(tmp.path(), BLOG);
    let store = tmp.path().join("store");
    let out = donning(&["build", "-C", work.to_str().unwrap(), "-s", "TAG=demo/blog:v1", "package"], &store);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("package step 0 (wrap)"));

    let inspect = stdout(&donning(&["inspect", "demo/blog:v1"], &store));
    let lines: Vec<&str> = inspect.lines().collect();
    assert!(lines[0].starts_with("digest: sha256:"));
    assert_eq!(lines[1], "layers: 1");
    assert!(lines[2].starts_with("  sha256:"));
    assert!(inspect.contains(r#"cmd: ["nginx", "-g", "daemon off;"]"#));
    assert!(inspect.contains("env: MODE=prod\n"));
    assert!(inspect.contains("workdir: /usr/share/nginx/html\n"));

    let images = stdout(&donning(&["images"], &store));
    assert!(images.starts_with("demo/blog:v1\tsha256:"));
    assert!(images.trim_end().ends_with("1 layer"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let work = project(tmp.path(), BLOG);
    let store = tmp.path().join("store");
    let w = work.to_str().unwrap();

    let out = donning(&["build", "-C", w, "-s", "TAG=t/x:v1", "broken"], &store);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("task broken, step 0 (run)"));
    assert!(stderr(&out).contains("oops"));

    let out = donning(&["build", "-C", w, "-s", "TAG=t/x:v1", "picky"], &store);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("task picky, step 0 (run): expectation failed"));

    // Unknown variable, unknown task, missing file, bad flag, missing ref.
    assert_eq!(donning(&["build", "-C", w, "package"], &store).status.code(), Some(2));
    assert_eq!(donning(&["build", "-C", w, "-s", "TAG=t/x:v1", "nope"], &store).status.code(), Some(2));
    assert_eq!(donning(&["build", "-C", w, "-f", "missing", "x"], &store).status.code(), Some(2));
    assert_eq!(donning(&["build", "--frobnicate", "x"], &store).status.code(), Some(2));
    assert_eq!(donning(&["inspect"], &store).status.code(), Some(2));
    assert_eq!(donning(&["inspect", "Bad_Ref"], &store).status.code(), Some(2));
    assert_eq!(donning(&["inspect", "never/tagged"], &store).status.code(), Some(1));
}

#[test]
fn report_file() {
    let tmp = tempfile::tempdir().unwrap();
    let work = project(tmp.path(), BLOG);
    let store = tmp.path().join("store");
    let report = tmp.path().join("report.json");
    let w = work.to_str().unwrap();
    let r = report.to_str().unwrap();

    donning(&["build", "-C", w, "-s", "TAG=demo/blog:v1", "--report", r, "package"], &store);
    let ok: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(ok["status"], "succeeded");
    assert_eq!(ok["steps"][0]["kind"], "wrap");
    assert!(ok["steps"][0]["digest"].as_str().unwrap().starts_with("sha256:"));
    assert!(ok.get("failure").is_none());

    donning(&["build", "-C", w, "-s", "TAG=t/x:v1", "--report", r, "broken"], &store);
    let failed: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(failed["status"], "failed");
    assert_eq!(failed["failure"]["task"], "broken");
    assert_eq!(failed["failure"]["step_index"], 0);
    assert_eq!(failed["failure"]["kind"], "run");
    assert_eq!(failed["steps"][0]["exit_code"], 1);
    assert_eq!(failed["steps"][0]["stderr"], "oops\n");
    let keys: Vec<&String> = failed["steps"][0].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["exit_code", "kind", "stderr", "stdout", "step_index", "task", "wall_time_secs"]);
}

#[test]
fn squash_export_import() {
    let tmp = tempfile::tempdir().unwrap();
    let work = project(
        tmp.path(),
        r#"{"tasks": {"all": [
            {"wrap": {"directory": "site", "at": "/a", "as": "t/one:v1"}},
            {"wrap": {"directory": "site", "base": "t/one:v1", "at": "/b", "as": "t/two:v1"}}]}}"#,
    );
    let store = tmp.path().join("store");
    assert!(donning(&["build", "-C", work.to_str().unwrap(), "all"], &store).status.success());
    assert!(stdout(&donning(&["inspect", "t/two:v1"], &store)).contains("layers: 2\n"));

    let out = donning(&["squash", "t/two:v1", "--as", "t/flat:v1"], &store);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&donning(&["inspect", "t/flat:v1"], &store)).contains("layers: 1\n"));

    let export = tmp.path().join("export");
    assert!(donning(&["export", "t/flat:v1", "-o", export.to_str().unwrap()], &store).status.success());
    let other = tmp.path().join("other");
    let out = donning(&["import", export.to_str().unwrap()], &other);
    assert_eq!(stdout(&out), "imported t/flat:v1\n");
    assert_eq!(
        stdout(&donning(&["inspect", "t/flat:v1"], &other)),
        stdout(&donning(&["inspect", "t/flat:v1"], &store))
    );
    // Exporting onto a non-empty directory is refused.
    assert_eq!(donning(&["export", "t/flat:v1", "-o", export.to_str().unwrap()], &store).status.code(), Some(1));
}

#[test]
fn diff_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        fs::create_dir_all(d.join("etc")).unwrap();
        fs::write(d.join("etc/same"), "s").unwrap();
    }
    fs::write(a.join("gone"), "x").unwrap();
    fs::write(a.join("etc/changed"), "1").unwrap();
    fs::write(b.join("etc/changed"), "2").unwrap();
    fs::write(b.join("new"), "n").unwrap();
    let out = donning(&["diff", a.to_str().unwrap(), b.to_str().unwrap()], &tmp.path().join("store"));
    assert_eq!(stdout(&out), "put\t/etc/changed\ndelete\t/gone\nput\t/new\n2 put, 1 delete\n");
}

#[test]
fn runtime_bridge_is_selected() {
    let tmp = tempfile::tempdir().unwrap();
    let work = project(tmp.path(), r#"{"tasks": {"t": [{"run": {"image": "busybox", "command": ["echo", "hi"]}}]}}"#);
    let fake = tmp.path().join("fake-runtime");
    let log = tmp.path().join("argv.log");
    fs::write(&fake, format!("#!/bin/sh\nprintf '%s\\n' \"$@\" > {}\necho from-runtime\n", log.display())).unwrap();
    use std::os::unix::fs::PermissionsExt;
    fs::set_permissions(&fake, fs::Permissions::from_mode(0o755)).unwrap();

    let out = donning(
        &["build", "-C", work.to_str().unwrap(), "--runtime", fake.to_str().unwrap(), "t"],
        &tmp.path().join("store"),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("| from-runtime"));
    let argv = fs::read_to_string(&log).unwrap();
    let argv: Vec<&str> = argv.lines().collect();
    assert_eq!(argv[..2], ["run", "--rm"]);
    assert!(argv.ends_with(&["busybox:latest", "echo", "hi"]));
}

#[test]
fn autobuild_reports_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("p.tsv"), "conda\ttmux\t2.1--1\n").unwrap();
    fs::write(tmp.path().join("a.json"), r#"{"adapters": {}}"#).unwrap();
    let out = donning(
        &[
            "autobuild",
            "--spec",
            tmp.path().join("p.tsv").to_str().unwrap(),
            "--adapters",
            tmp.path().join("a.json").to_str().unwrap(),
            "--namespace",
            "pkgs",
            "--dry-run",
        ],
        &tmp.path().join("store"),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1: expected 4 tab-separated fields, found 3"));
}
