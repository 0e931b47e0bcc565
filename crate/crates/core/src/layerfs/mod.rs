//! In-memory model of directories, layers, mounting and diffing.
//!
//! A [`Directory`] is a partial map from file name to [`FileNode`]; a
//! [`Layer`] is a partial map from file name to [`Change`]. Directories are
//! implicit: `/a/b` exists because some file lies below it, and a name can
//! never be both a file and the parent of another file.
//!
//! Everything here is pure. Values are immutable once built and the
//! operations return fresh values.

mod path;

use std::collections::BTreeMap;
use std::ops::Bound;

use thiserror::Error;

pub use path::{contained_in, DirPath, PathError, PathName, MAX_PATH_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsError {
    #[error("{file} cannot coexist with file {ancestor}: a file is not a directory")]
    PrefixCollision { file: PathName, ancestor: PathName },
    #[error("symlink target must be 1..={MAX_PATH_LEN} bytes, got {0}")]
    BadLinkTarget(usize),
}

/// Stored target of a symbolic link. Non-empty and at most
/// [`MAX_PATH_LEN`] bytes; not normalized and never traversed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkTarget(String);

impl LinkTarget {
    pub fn new(target: impl Into<String>) -> Result<Self, FsError> {
        let target = target.into();
        if target.is_empty() || target.len() > MAX_PATH_LEN {
            return Err(FsError::BadLinkTarget(target.len()));
        }
        Ok(LinkTarget(target))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// A file. Equality is structural: kind, bytes, executable flag, target.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FileNode {
    Regular { content: Vec<u8>, executable: bool },
    Symlink(LinkTarget),
}

impl FileNode {
    pub fn regular(content: impl Into<Vec<u8>>) -> Self {
        FileNode::Regular {
            content: content.into(),
            executable: false,
        }
    }

    pub fn executable(content: impl Into<Vec<u8>>) -> Self {
        FileNode::Regular {
            content: content.into(),
            executable: true,
        }
    }

    pub fn symlink(target: impl Into<String>) -> Result<Self, FsError> {
        LinkTarget::new(target).map(FileNode::Symlink)
    }
}

/// A change recorded in a layer: a file creation or a deletion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Change {
    Put(FileNode),
    Delete,
}

impl Change {
    pub fn as_put(&self) -> Option<&FileNode> {
        match self {
            Change::Put(n) => Some(n),
            Change::Delete => None,
        }
    }
}

/// First key in `map` that lies strictly below `key` and satisfies `pred`.
fn first_descendant<'a, V>(
    map: &'a BTreeMap<PathName, V>,
    key: &str,
    pred: impl Fn(&V) -> bool,
) -> Option<&'a PathName> {
    let prefix = format!("{key}/");
    map.range::<str, _>((Bound::Included(prefix.as_str()), Bound::Unbounded))
        .take_while(|(k, _)| k.as_str().starts_with(&prefix))
        .find(|(_, v)| pred(v))
        .map(|(k, _)| k)
}

/// Checks that `key` could live next to the entries of `map` that satisfy
/// `pred` (ignoring an existing entry for `key` itself).
fn check_slot<V>(
    map: &BTreeMap<PathName, V>,
    key: &PathName,
    pred: impl Fn(&V) -> bool,
) -> Result<(), FsError> {
    for anc in key.ancestors() {
        if let Some((k, v)) = map.get_key_value(anc) {
            if pred(v) {
                return Err(FsError::PrefixCollision {
                    file: key.clone(),
                    ancestor: k.clone(),
                });
            }
        }
    }
    if let Some(desc) = first_descendant(map, key.as_str(), &pred) {
        return Err(FsError::PrefixCollision {
            file: desc.clone(),
            ancestor: key.clone(),
        });
    }
    Ok(())
}

/// Whole-map check: no selected key is a directory prefix of another.
fn check_all<V>(map: &BTreeMap<PathName, V>, pred: impl Fn(&V) -> bool) -> Result<(), FsError> {
    for (k, v) in map {
        if !pred(v) {
            continue;
        }
        if let Some(desc) = first_descendant(map, k.as_str(), &pred) {
            return Err(FsError::PrefixCollision {
                file: desc.clone(),
                ancestor: k.clone(),
            });
        }
    }
    Ok(())
}

/// A partial map from file name to file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Directory {
    entries: BTreeMap<PathName, FileNode>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (PathName, FileNode)>,
    ) -> Result<Self, FsError> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        check_all(&entries, |_| true)?;
        Ok(Directory { entries })
    }

    /// Inserts or replaces a file.
    pub fn insert(&mut self, path: PathName, node: FileNode) -> Result<Option<FileNode>, FsError> {
        check_slot(&self.entries, &path, |_| true)?;
        Ok(self.entries.insert(path, node))
    }

    pub fn get(&self, path: &PathName) -> Option<&FileNode> {
        self.entries.get(path)
    }

    pub fn contains(&self, path: &PathName) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending path order.
    pub fn iter(&self) -> impl Iterator<Item = (&PathName, &FileNode)> {
        self.entries.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathName> {
        self.entries.keys()
    }
}

impl IntoIterator for Directory {
    type Item = (PathName, FileNode);
    type IntoIter = std::collections::btree_map::IntoIter<PathName, FileNode>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.into_iter()
    }
}

/// A partial map from file name to [`Change`].
///
/// The puts of a layer obey the same rule as a [`Directory`]; deletes are
/// unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layer {
    changes: BTreeMap<PathName, Change>,
}

fn is_put(c: &Change) -> bool {
    matches!(c, Change::Put(_))
}

impl Layer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_changes(
        changes: impl IntoIterator<Item = (PathName, Change)>,
    ) -> Result<Self, FsError> {
        let changes: BTreeMap<_, _> = changes.into_iter().collect();
        check_all(&changes, is_put)?;
        Ok(Layer { changes })
    }

    /// Records a change, replacing any earlier change to the same path.
    pub fn insert(&mut self, path: PathName, change: Change) -> Result<Option<Change>, FsError> {
        if is_put(&change) {
            check_slot(&self.changes, &path, is_put)?;
        }
        Ok(self.changes.insert(path, change))
    }

    pub fn get(&self, path: &PathName) -> Option<&Change> {
        self.changes.get(path)
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    /// Changes in ascending path order.
    pub fn iter(&self) -> impl Iterator<Item = (&PathName, &Change)> {
        self.changes.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathName> {
        self.changes.keys()
    }

    pub fn puts(&self) -> impl Iterator<Item = (&PathName, &FileNode)> {
        self.changes
            .iter()
            .filter_map(|(p, c)| c.as_put().map(|n| (p, n)))
    }

    pub fn deletes(&self) -> impl Iterator<Item = &PathName> {
        self.changes
            .iter()
            .filter(|(_, c)| matches!(c, Change::Delete))
            .map(|(p, _)| p)
    }
}

impl IntoIterator for Layer {
    type Item = (PathName, Change);
    type IntoIter = std::collections::btree_map::IntoIter<PathName, Change>;

    fn into_iter(self) -> Self::IntoIter {
        self.changes.into_iter()
    }
}

/// Mounts `inner` at `at` inside `outer`.
///
/// Every name below `at` is answered by `inner` (absent if `inner` lacks
/// it); every other name is answered by `outer`.
pub fn mount(outer: &Directory, inner: &Directory, at: &DirPath) -> Result<Directory, FsError> {
    let kept = outer
        .iter()
        .filter(|(f, _)| !f.is_under(at))
        .map(|(f, n)| (f.clone(), n.clone()));
    let mounted = inner.iter().map(|(f, n)| (at.join(f), n.clone()));
    Directory::from_entries(kept.chain(mounted))
}

/// The changes that turn `a` into `b`. Unchanged paths are absent.
pub fn diff(a: &Directory, b: &Directory) -> Layer {
    let mut changes = BTreeMap::new();
    for (x, nb) in b.iter() {
        if a.get(x) != Some(nb) {
            changes.insert(x.clone(), Change::Put(nb.clone()));
        }
    }
    for x in a.paths() {
        if !b.contains(x) {
            changes.insert(x.clone(), Change::Delete);
        }
    }
    // The puts are a subset of `b`, which is already valid.
    Layer { changes }
}

/// Applies `layer` on top of `dir`. Deletes remove exactly their path and
/// are no-ops for absent paths.
pub fn apply(dir: &Directory, layer: &Layer) -> Result<Directory, FsError> {
    let mut entries = dir.entries.clone();
    for (path, change) in layer.iter() {
        match change {
            Change::Put(n) => {
                entries.insert(path.clone(), n.clone());
            }
            Change::Delete => {
                entries.remove(path);
            }
        }
    }
    check_all(&entries, |_| true)?;
    Ok(Directory { entries })
}

/// Folds a base-first stack of layers into one: for each path the topmost
/// layer mentioning it wins. Deletes survive, even over nothing.
///
/// Fails only when a later put lands below a file put earlier that was
/// never deleted, a stack that no directory could be built from.
pub fn merge_layers<'a>(layers: impl IntoIterator<Item = &'a Layer>) -> Result<Layer, FsError> {
    let mut changes = BTreeMap::new();
    for layer in layers {
        for (p, c) in layer.iter() {
            changes.insert(p.clone(), c.clone());
        }
    }
    check_all(&changes, is_put)?;
    Ok(Layer { changes })
}
