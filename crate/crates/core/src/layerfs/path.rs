//! Normalized absolute paths.
//!
//! Two flavours exist: [`PathName`] names a file and can never be the root,
//! while [`DirPath`] names a directory prefix (mount points, working
//! directories, bind targets) and may be `/`.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest path accepted, in bytes. Layer blobs store path lengths as `u16`.
pub const MAX_PATH_LEN: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path {0:?} is not absolute")]
    NotAbsolute(String),
    #[error("path {0:?} contains a '..' segment")]
    DotDotRejected(String),
    #[error("path {0:?} does not name a file")]
    EmptyPath(String),
    #[error("path {0:?} contains a NUL byte")]
    Nul(String),
    #[error("path is {0} bytes long, the limit is {MAX_PATH_LEN}")]
    TooLong(usize),
}

fn normalized_segments(raw: &str) -> Result<Vec<&str>, PathError> {
    if !raw.starts_with('/') {
        return Err(PathError::NotAbsolute(raw.to_owned()));
    }
    if raw.contains('\0') {
        return Err(PathError::Nul(raw.to_owned()));
    }
    let mut segments = Vec::new();
    for seg in raw.split('/') {
        match seg {
            "" | "." => {}
            ".." => return Err(PathError::DotDotRejected(raw.to_owned())),
            s => segments.push(s),
        }
    }
    Ok(segments)
}

/// A normalized absolute file name such as `/tmp/data/test.txt`.
///
/// Always starts with `/`, never ends with `/`, and has no empty, `.` or
/// `..` segments. Ordering is byte-wise on the string form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PathName(String);

impl PathName {
    /// Normalizes `raw`: duplicate slashes collapse, `.` segments and a
    /// trailing slash are dropped. `..` is rejected rather than resolved.
    pub fn parse(raw: &str) -> Result<Self, PathError> {
        let segments = normalized_segments(raw)?;
        if segments.is_empty() {
            return Err(PathError::EmptyPath(raw.to_owned()));
        }
        let mut out = String::with_capacity(raw.len());
        for seg in segments {
            out.push('/');
            out.push_str(seg);
        }
        if out.len() > MAX_PATH_LEN {
            return Err(PathError::TooLong(out.len()));
        }
        Ok(PathName(out))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True iff this file lies inside the directory prefix `dir`.
    pub fn is_under(&self, dir: &DirPath) -> bool {
        self.0.starts_with(dir.as_str())
    }

    /// The directory prefix formed by appending `/`, i.e. the prefix that
    /// every descendant of this name would start with.
    pub fn as_dir(&self) -> DirPath {
        DirPath(format!("{}/", self.0))
    }

    /// Strips the directory prefix `dir`, giving the name relative to it
    /// (still absolute, rooted at `dir`).
    pub fn strip_dir(&self, dir: &DirPath) -> Option<PathName> {
        let rest = self.0.strip_prefix(dir.as_str())?;
        if rest.is_empty() {
            return None;
        }
        Some(PathName(format!("/{rest}")))
    }

    /// Proper ancestors as file names, nearest last: `/a/b/c` gives
    /// `/a`, `/a/b`.
    pub fn ancestors(&self) -> impl Iterator<Item = &str> {
        self.0
            .match_indices('/')
            .skip(1)
            .map(move |(i, _)| &self.0[..i])
    }

    /// Segments without the leading slash.
    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0[1..].split('/')
    }
}

/// String form of Def. "contained in": `f` lies in the directory named by
/// `prefix`, which must end in `/`. A prefix without the trailing slash is
/// never a container.
pub fn contained_in(f: &PathName, prefix: &str) -> bool {
    prefix.ends_with('/') && f.as_str().starts_with(prefix)
}

impl fmt::Display for PathName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PathName {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PathName::parse(s)
    }
}

impl TryFrom<String> for PathName {
    type Error = PathError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        PathName::parse(&s)
    }
}

impl From<PathName> for String {
    fn from(p: PathName) -> String {
        p.0
    }
}

impl AsRef<str> for PathName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for PathName {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A normalized directory prefix: `/` or `/seg/.../seg/` (always ends with a
/// slash). Parsing accepts the usual spellings, `/data` and `/data/` both
/// become `/data/`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DirPath(String);

impl DirPath {
    pub fn root() -> Self {
        DirPath("/".to_owned())
    }

    pub fn parse(raw: &str) -> Result<Self, PathError> {
        let segments = normalized_segments(raw)?;
        let mut out = String::from("/");
        for seg in segments {
            out.push_str(seg);
            out.push('/');
        }
        if out.len() > MAX_PATH_LEN {
            return Err(PathError::TooLong(out.len()));
        }
        Ok(DirPath(out))
    }

    /// The prefix string, ending in `/`.
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == "/"
    }

    /// `(p)(f')`: the name `f'` relocated below this prefix.
    pub fn join(&self, rel: &PathName) -> PathName {
        PathName(format!("{}{}", &self.0[..self.0.len() - 1], rel.as_str()))
    }

    /// Path relative to the root without the leading slash, e.g. `data/x`
    /// for `/data/x/`. Empty for the root.
    pub fn relative(&self) -> &str {
        self.0.trim_matches('/')
    }

    /// True iff `other` equals this prefix or lies below it.
    pub fn contains_dir(&self, other: &DirPath) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Display form without the trailing slash (except for `/`).
    pub fn display_name(&self) -> &str {
        if self.is_root() {
            "/"
        } else {
            &self.0[..self.0.len() - 1]
        }
    }
}

impl fmt::Display for DirPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for DirPath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DirPath::parse(s)
    }
}

impl TryFrom<String> for DirPath {
    type Error = PathError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        DirPath::parse(&s)
    }
}

impl From<DirPath> for String {
    fn from(p: DirPath) -> String {
        p.display_name().to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes() {
        assert_eq!(PathName::parse("/a//b/./c").unwrap().as_str(), "/a/b/c");
        assert_eq!(PathName::parse("/a/b/").unwrap().as_str(), "/a/b");
        assert_eq!(PathName::parse("///x").unwrap().as_str(), "/x");
    }

    #[test]
    fn rejects() {
        assert_eq!(
            PathName::parse("a/b"),
            Err(PathError::NotAbsolute("a/b".into()))
        );
        assert_eq!(PathName::parse(""), Err(PathError::NotAbsolute("".into())));
        assert_eq!(
            PathName::parse("/a/../b"),
            Err(PathError::DotDotRejected("/a/../b".into()))
        );
        assert_eq!(PathName::parse("/"), Err(PathError::EmptyPath("/".into())));
        assert_eq!(PathName::parse("/./"), Err(PathError::EmptyPath("/./".into())));
        assert!(matches!(PathName::parse("/a\0"), Err(PathError::Nul(_))));
        let long = format!("/{}", "x".repeat(MAX_PATH_LEN));
        assert!(matches!(PathName::parse(&long), Err(PathError::TooLong(_))));
    }

    #[test]
    fn containment() {
        let f = PathName::parse("/tmp/data/test.txt").unwrap();
        assert!(contained_in(&f, "/tmp/"));
        assert!(contained_in(&f, "/tmp/data/"));
        assert!(contained_in(&f, "/"));
        assert!(!contained_in(&PathName::parse("/tmpx/f").unwrap(), "/tmp/"));
        assert!(!contained_in(&f, "/tmp"));
        assert!(!contained_in(&f, "/tmp/data/test.txt/"));
    }

    #[test]
    fn dir_paths() {
        assert_eq!(DirPath::parse("/").unwrap().as_str(), "/");
        assert_eq!(DirPath::parse("/data").unwrap().as_str(), "/data/");
        assert_eq!(DirPath::parse("/data//x/").unwrap().as_str(), "/data/x/");
        assert_eq!(DirPath::parse("/data/x").unwrap().relative(), "data/x");
        assert_eq!(DirPath::root().relative(), "");
        assert!(DirPath::parse("data").is_err());

        let rel = PathName::parse("/test/a.txt").unwrap();
        assert_eq!(
            DirPath::parse("/data").unwrap().join(&rel).as_str(),
            "/data/test/a.txt"
        );
        assert_eq!(DirPath::root().join(&rel), rel);
        let full = PathName::parse("/data/test/a.txt").unwrap();
        assert_eq!(full.strip_dir(&DirPath::parse("/data").unwrap()), Some(rel));
    }

    #[test]
    fn ancestors() {
        let f = PathName::parse("/a/b/c").unwrap();
        assert_eq!(f.ancestors().collect::<Vec<_>>(), vec!["/a", "/a/b"]);
        assert_eq!(PathName::parse("/a").unwrap().ancestors().count(), 0);
        assert_eq!(f.segments().collect::<Vec<_>>(), vec!["a", "b", "c"]);
    }
}
