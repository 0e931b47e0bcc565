use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;
use walkdir::WalkDir;

use super::{decode_layer, encode_layer, Digest, ImageConfig, ImageRef, StoreError};
use crate::layerfs::Layer;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// A content-addressed blob store with a tag table, rooted at a directory:
///
/// ```text
/// <root>/blobs/sha256/<hex>
/// <root>/tags/<repository>/<version>   config digest hex + "\n"
/// <root>/lock
/// ```
///
/// Blob writes go through a temp file and a rename, so readers never see a
/// partial blob. Tag mutations hold an exclusive lock on `<root>/lock`.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens the store at `root`, creating the layout if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = Store { root: root.into() };
        for dir in [store.blob_dir(), store.tag_dir()] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_dir(&self) -> PathBuf {
        self.root.join("blobs").join("sha256")
    }

    fn tag_dir(&self) -> PathBuf {
        self.root.join("tags")
    }

    pub fn blob_path(&self, digest: &Digest) -> PathBuf {
        self.blob_dir().join(digest.hex())
    }

    fn tag_path(&self, r: &ImageRef) -> PathBuf {
        let mut p = self.tag_dir();
        for seg in r.repository().split('/') {
            p.push(seg);
        }
        p.push(r.version());
        p
    }

    pub fn has_blob(&self, digest: &Digest) -> bool {
        self.blob_path(digest).is_file()
    }

    /// Stores `bytes` under their digest. Existing blobs are left alone.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<Digest, StoreError> {
        let digest = Digest::of(bytes);
        let path = self.blob_path(&digest);
        if path.is_file() {
            return Ok(digest);
        }
        let dir = self.blob_dir();
        let mut tmp = NamedTempFile::with_prefix_in(".tmp-", &dir).map_err(io_err(&dir))?;
        tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
        tmp.as_file().sync_all().map_err(io_err(tmp.path()))?;
        tmp.persist(&path).map_err(|e| StoreError::Io {
            path: path.clone(),
            source: e.error,
        })?;
        Ok(digest)
    }

    /// Reads a blob and checks it against its digest.
    pub fn get_blob(&self, digest: &Digest) -> Result<Vec<u8>, StoreError> {
        let path = self.blob_path(digest);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownDigest(digest.clone()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        verify(digest, &bytes, &path)?;
        Ok(bytes)
    }

    pub fn put_layer(&self, layer: &Layer) -> Result<Digest, StoreError> {
        self.put_blob(&encode_layer(layer))
    }

    pub fn get_layer(&self, digest: &Digest) -> Result<Layer, StoreError> {
        let bytes = self.get_blob(digest)?;
        decode_layer(&bytes).map_err(|source| StoreError::BadLayer {
            digest: digest.clone(),
            source,
        })
    }

    pub fn put_config(&self, config: &ImageConfig) -> Result<Digest, StoreError> {
        self.put_blob(&config.encode())
    }

    pub fn get_config(&self, digest: &Digest) -> Result<ImageConfig, StoreError> {
        let bytes = self.get_blob(digest)?;
        ImageConfig::decode(&bytes).map_err(|source| StoreError::BadConfig {
            digest: digest.clone(),
            source,
        })
    }

    /// Loads every layer of `config`, base-first.
    pub fn load_layers(&self, config: &ImageConfig) -> Result<Vec<Layer>, StoreError> {
        config.layers.iter().map(|d| self.get_layer(d)).collect()
    }

    /// Binds `r` to the config `digest`, replacing any earlier binding.
    ///
    /// The config and every layer it lists must already be stored intact.
    pub fn tag(&self, r: &ImageRef, digest: &Digest) -> Result<(), StoreError> {
        let config = self.get_config(digest)?;
        let mut missing = Vec::new();
        for layer in &config.layers {
            match self.get_layer(layer) {
                Ok(_) => {}
                Err(StoreError::UnknownDigest(d)) => missing.push(d),
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            return Err(StoreError::DanglingLayers {
                config: digest.clone(),
                missing,
            });
        }

        let _lock = self.lock()?;
        let path = self.tag_path(r);
        let conflict = || StoreError::TagConflict {
            reference: r.clone(),
            path: path.clone(),
        };
        let parent = path.parent().expect("tag path has a parent");
        if let Err(e) = fs::create_dir_all(parent) {
            return Err(match e.kind() {
                io::ErrorKind::AlreadyExists | io::ErrorKind::NotADirectory => conflict(),
                _ => io_err(parent)(e),
            });
        }
        if !parent.is_dir() || path.is_dir() {
            return Err(conflict());
        }
        let tag_dir = self.tag_dir();
        let mut tmp = NamedTempFile::with_prefix_in(".tmp-", &tag_dir).map_err(io_err(&tag_dir))?;
        writeln!(tmp, "{}", digest.hex()).map_err(io_err(tmp.path()))?;
        tmp.persist(&path).map_err(|e| StoreError::Io {
            path: path.clone(),
            source: e.error,
        })?;
        Ok(())
    }

    pub fn lookup_tag(&self, r: &ImageRef) -> Result<Digest, StoreError> {
        let path = self.tag_path(r);
        match fs::read_to_string(&path) {
            Ok(text) => parse_tag_file(&text, &path),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::NotFound
                        | io::ErrorKind::NotADirectory
                        | io::ErrorKind::IsADirectory
                ) =>
            {
                Err(StoreError::UnknownTag(r.clone()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Tag lookup followed by config load.
    pub fn resolve(&self, r: &ImageRef) -> Result<(Digest, ImageConfig), StoreError> {
        let digest = self.lookup_tag(r)?;
        let config = self.get_config(&digest)?;
        Ok((digest, config))
    }

    /// All tags, sorted by reference.
    pub fn tags(&self) -> Result<Vec<(ImageRef, Digest)>, StoreError> {
        let root = self.tag_dir();
        let mut out = Vec::new();
        for entry in WalkDir::new(&root).min_depth(2).sort_by_file_name() {
            let entry = entry.map_err(|e| StoreError::Io {
                path: e.path().map(Path::to_owned).unwrap_or_else(|| root.clone()),
                source: e.into(),
            })?;
            if !entry.file_type().is_file() || entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            let rel = entry.path().strip_prefix(&root).expect("walk stays under root");
            let version = entry.file_name().to_string_lossy();
            let repo = rel
                .parent()
                .map(|p| p.to_string_lossy().replace(std::path::MAIN_SEPARATOR, "/"))
                .unwrap_or_default();
            let r = ImageRef::new(&repo, &version).map_err(|_| StoreError::BadTagEntry(entry.path().to_owned()))?;
            let text = fs::read_to_string(entry.path()).map_err(io_err(entry.path()))?;
            out.push((r, parse_tag_file(&text, entry.path())?));
        }
        out.sort();
        Ok(out)
    }

    fn lock(&self) -> Result<File, StoreError> {
        let path = self.root.join("lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.lock().map_err(io_err(&path))?;
        Ok(file)
    }
}

fn parse_tag_file(text: &str, path: &Path) -> Result<Digest, StoreError> {
    text.strip_suffix('\n')
        .and_then(|hex| Digest::from_hex(hex).ok())
        .ok_or_else(|| StoreError::BadTagEntry(path.to_owned()))
}

pub(crate) fn verify(expected: &Digest, bytes: &[u8], path: &Path) -> Result<(), StoreError> {
    let actual = Digest::of(bytes);
    if actual != *expected {
        return Err(StoreError::DigestMismatch {
            expected: expected.clone(),
            actual,
            path: path.to_owned(),
        });
    }
    Ok(())
}
