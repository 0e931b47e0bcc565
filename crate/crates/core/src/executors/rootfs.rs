//! Moving directories between the in-memory model and the host filesystem.

use std::fs;
use std::io;
use std::os::unix::fs::{symlink, PermissionsExt};
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::ExecError;
use crate::imagestore::{self, ImageConfig, Store};
use crate::layerfs::{Directory, FileNode, LinkTarget, PathName};

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ExecError + '_ {
    move |source| ExecError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Reads the tree under `root` into a [`Directory`] rooted at `/`.
///
/// Regular files keep their bytes and whether the owner may execute them;
/// symlinks keep their target unresolved. Directories are implicit, so
/// empty ones vanish. Other file types are rejected.
pub fn read_directory(root: &Path) -> Result<Directory, ExecError> {
    let meta = fs::metadata(root).map_err(io_at(root))?;
    if !meta.is_dir() {
        return Err(ExecError::NotADirectory(root.to_owned()));
    }
    let mut dir = Directory::new();
    for entry in WalkDir::new(root).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| ExecError::Io {
            path: e.path().map(Path::to_owned).unwrap_or_else(|| root.to_owned()),
            source: e.into(),
        })?;
        let path = entry.path();
        let ft = entry.file_type();
        if ft.is_dir() {
            continue;
        }
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let rel = rel
            .to_str()
            .ok_or_else(|| ExecError::NonUtf8Path(path.to_owned()))?;
        let name = PathName::parse(&format!("/{rel}")).map_err(|e| ExecError::BadPath {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        let node = if ft.is_symlink() {
            let target = fs::read_link(path).map_err(io_at(path))?;
            let target = target
                .into_os_string()
                .into_string()
                .map_err(|_| ExecError::NonUtf8Path(path.to_owned()))?;
            FileNode::Symlink(LinkTarget::new(target).map_err(|e| ExecError::BadPath {
                path: path.to_owned(),
                reason: e.to_string(),
            })?)
        } else if ft.is_file() {
            let mode = entry.metadata().map_err(|e| ExecError::Io {
                path: path.to_owned(),
                source: e.into(),
            })?;
            FileNode::Regular {
                content: fs::read(path).map_err(io_at(path))?,
                executable: mode.permissions().mode() & 0o100 != 0,
            }
        } else {
            return Err(ExecError::UnsupportedFileType(path.to_owned()));
        };
        dir.insert(name, node).map_err(|e| ExecError::BadPath {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
    }
    Ok(dir)
}

/// Host location of `name` below `dest`.
pub fn host_path(dest: &Path, name: &PathName) -> PathBuf {
    let mut p = dest.to_owned();
    for seg in name.segments() {
        p.push(seg);
    }
    p
}

/// Writes `dir` below `dest`, creating intermediate directories. Regular
/// files get mode 0755 or 0644.
pub fn write_directory(dir: &Directory, dest: &Path) -> Result<(), ExecError> {
    for (name, node) in dir.iter() {
        let path = host_path(dest, name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_at(parent))?;
        }
        match node {
            FileNode::Regular {
                content,
                executable,
            } => {
                fs::write(&path, content).map_err(io_at(&path))?;
                let mode = if *executable { 0o755 } else { 0o644 };
                fs::set_permissions(&path, fs::Permissions::from_mode(mode))
                    .map_err(io_at(&path))?;
            }
            FileNode::Symlink(target) => symlink(target.as_str(), &path).map_err(io_at(&path))?,
        }
    }
    Ok(())
}

/// Writes the union view of `config` into `dest`, which must be empty or
/// not yet exist.
pub fn materialize_rootfs(store: &Store, config: &ImageConfig, dest: &Path) -> Result<(), ExecError> {
    match fs::read_dir(dest) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(ExecError::DestinationNotEmpty(dest.to_owned()));
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            fs::create_dir_all(dest).map_err(io_at(dest))?;
        }
        Err(e) => return Err(io_at(dest)(e)),
    }
    let dir = imagestore::enumerate(store, config)?;
    write_directory(&dir, dest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagestore::ConfigOverrides;
    use crate::layerfs::{diff, Change, DirPath, Layer};

    fn p(s: &str) -> PathName {
        PathName::parse(s).unwrap()
    }

    #[test]
    fn materialize_and_read_back() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path().join("store")).unwrap();
        let base = Layer::from_changes([
            (p("/a"), Change::Put(FileNode::regular("gone soon"))),
            (p("/etc/motd"), Change::Put(FileNode::regular("hi"))),
        ])
        .unwrap();
        let top = Layer::from_changes([
            (p("/a"), Change::Delete),
            (p("/bin/run"), Change::Put(FileNode::executable("#!/bin/sh\n"))),
            (p("/bin/alias"), Change::Put(FileNode::symlink("run").unwrap())),
        ])
        .unwrap();
        let config = ImageConfig {
            layers: vec![store.put_layer(&base).unwrap(), store.put_layer(&top).unwrap()],
            ..Default::default()
        };
        let dest = tmp.path().join("rootfs");
        materialize_rootfs(&store, &config, &dest).unwrap();

        assert!(!dest.join("a").exists());
        let mode = fs::metadata(dest.join("bin/run")).unwrap().permissions().mode();
        assert_eq!(mode & 0o111, 0o111);
        assert_eq!(fs::read_link(dest.join("bin/alias")).unwrap(), Path::new("run"));

        let back = read_directory(&dest).unwrap();
        let expect = imagestore::enumerate(&store, &config).unwrap();
        assert!(diff(&expect, &back).is_empty());

        assert!(matches!(
            materialize_rootfs(&store, &config, &dest),
            Err(ExecError::DestinationNotEmpty(_))
        ));
    }

    #[test]
    fn wrap_of_host_tree_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let src = tmp.path().join("src");
        fs::create_dir_all(src.join("sub/empty")).unwrap();
        fs::write(src.join("sub/f"), "x").unwrap();
        fs::write(src.join("g"), "y").unwrap();
        let d1 = read_directory(&src).unwrap();
        assert_eq!(d1.len(), 2);
        let store = Store::open(tmp.path().join("store")).unwrap();
        let r = crate::imagestore::ImageRef::parse("t").unwrap();
        let a = imagestore::wrap(&store, None, &d1, &DirPath::root(), &ConfigOverrides::default(), &r).unwrap();
        let b = imagestore::wrap(&store, None, &read_directory(&src).unwrap(), &DirPath::root(), &ConfigOverrides::default(), &r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn read_rejects_missing_root() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(read_directory(&tmp.path().join("nope")).is_err());
        fs::write(tmp.path().join("file"), "").unwrap();
        assert!(matches!(
            read_directory(&tmp.path().join("file")),
            Err(ExecError::NotADirectory(_))
        ));
    }
}
