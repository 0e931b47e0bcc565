#![allow(dead_code)]

use donning_core::layerfs::{Change, DirPath, Directory, FileNode, Layer, PathName};
use proptest::prelude::*;

/// Directory segments start with `d`, file names with `f`, so generated
/// names never collide with each other's prefixes. Depth at most four.
pub fn path() -> impl Strategy<Value = PathName> {
    (prop::collection::vec(0..3u8, 0..4), 0..6u8).prop_map(|(dirs, f)| {
        let mut s: String = dirs.iter().map(|d| format!("/d{d}")).collect();
        s.push_str(&format!("/f{f}"));
        PathName::parse(&s).unwrap()
    })
}

pub fn dir_path() -> impl Strategy<Value = DirPath> {
    prop::collection::vec(0..3u8, 0..3).prop_map(|dirs| {
        let s: String = dirs.iter().map(|d| format!("d{d}/")).collect();
        DirPath::parse(&format!("/{s}")).unwrap()
    })
}

pub fn node() -> impl Strategy<Value = FileNode> {
    prop_oneof![
        4 => (0..3u8, 0..3usize).prop_map(|(c, n)| FileNode::regular(vec![b'a' + c; n])),
        1 => (0..3usize).prop_map(|n| FileNode::executable(vec![b'x'; n])),
        1 => (0..2u8).prop_map(|t| FileNode::symlink(format!("../t{t}")).unwrap()),
    ]
}

pub fn change() -> impl Strategy<Value = Change> {
    prop_oneof![3 => node().prop_map(Change::Put), 1 => Just(Change::Delete)]
}

pub fn directory(max: usize) -> impl Strategy<Value = Directory> {
    prop::collection::vec((path(), node()), 0..=max).prop_map(|e| Directory::from_entries(e).unwrap())
}

pub fn layer(max: usize) -> impl Strategy<Value = Layer> {
    prop::collection::vec((path(), change()), 0..=max).prop_map(|c| Layer::from_changes(c).unwrap())
}
