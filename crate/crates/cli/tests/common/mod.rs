#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use donning_core::layerfs::{Change, DirPath, Directory, FileNode, Layer, PathName};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn path(s: &str) -> PathName {
    PathName::parse(s).unwrap()
}

/// Names from a fixed pool: directories start with `d`, files with `f`, so
/// no generated file name is ever a prefix directory of another.
pub fn random_path(rng: &mut ChaCha8Rng) -> PathName {
    let depth = rng.gen_range(0..3);
    let mut s = String::new();
    for _ in 0..depth {
        s.push_str(&format!("/d{}", rng.gen_range(0..3)));
    }
    s.push_str(&format!("/f{}", rng.gen_range(0..6)));
    path(&s)
}

pub fn random_dir_path(rng: &mut ChaCha8Rng) -> DirPath {
    let depth = rng.gen_range(0..3);
    let mut s = String::from("/");
    for _ in 0..depth {
        s.push_str(&format!("d{}/", rng.gen_range(0..3)));
    }
    DirPath::parse(&s).unwrap()
}

/// Small content alphabet so equal nodes occur often.
pub fn random_node(rng: &mut ChaCha8Rng) -> FileNode {
    match rng.gen_range(0..6) {
        0 => FileNode::symlink(format!("../t{}", rng.gen_range(0..2))).unwrap(),
        1 => FileNode::executable(vec![b'x'; rng.gen_range(0..3)]),
        _ => FileNode::regular(vec![b'a' + rng.gen_range(0..3u8); rng.gen_range(0..3)]),
    }
}

pub fn random_directory(rng: &mut ChaCha8Rng, max: usize) -> Directory {
    let n = rng.gen_range(0..=max);
    Directory::from_entries((0..n).map(|_| (random_path(rng), random_node(rng)))).unwrap()
}

pub fn random_layer(rng: &mut ChaCha8Rng, max: usize) -> Layer {
    let n = rng.gen_range(0..=max);
    Layer::from_changes((0..n).map(|_| {
        let c = if rng.gen_bool(0.3) { Change::Delete } else { Change::Put(random_node(rng)) };
        (random_path(rng), c)
    }))
    .unwrap()
}

pub fn shuffled<T: Clone>(rng: &mut ChaCha8Rng, items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

pub fn donning(args: &[&str], store: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_donning"))
        .args(args)
        .env("DONNING_STORE", store)
        .env_remove("DONNING_RUNTIME")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}
