//! The `LDL1` layer blob format.
//!
//! ```text
//! "LDL1"  u32 BE entry count
//! entry*: u16 BE path len, path bytes, kind byte
//!         kind 0  delete
//!         kind 1  regular          u64 BE len, content
//!         kind 2  regular + exec   u64 BE len, content
//!         kind 3  symlink          u16 BE len, target
//! ```
//!
//! Entries are sorted by path bytes and each path appears once, so a layer
//! has exactly one encoding.

use thiserror::Error;

use crate::layerfs::{Change, FileNode, FsError, Layer, LinkTarget, PathName};

pub const MAGIC: &[u8; 4] = b"LDL1";

const KIND_DELETE: u8 = 0;
const KIND_REGULAR: u8 = 1;
const KIND_EXECUTABLE: u8 = 2;
const KIND_SYMLINK: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlobError {
    #[error("not a layer blob (bad magic)")]
    BadMagic,
    #[error("layer blob truncated at byte {0}")]
    TruncatedBlob(usize),
    #[error("layer blob entries out of order at {0:?}")]
    UnsortedEntries(String),
    #[error("layer blob repeats path {0:?}")]
    DuplicatePath(String),
    #[error("layer blob path {0:?} is not a normalized absolute path")]
    NonCanonicalPath(String),
    #[error("layer blob contains invalid UTF-8 at byte {0}")]
    BadUtf8(usize),
    #[error("unknown entry kind {0}")]
    UnknownKind(u8),
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error(transparent)]
    Fs(#[from] FsError),
}

/// Canonical bytes of `layer`.
pub fn encode_layer(layer: &Layer) -> Vec<u8> {
    let mut out = Vec::with_capacity(8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(layer.len() as u32).to_be_bytes());
    // Layer iterates in PathName order, which is byte order of the path.
    for (path, change) in layer.iter() {
        let p = path.as_str().as_bytes();
        out.extend_from_slice(&(p.len() as u16).to_be_bytes());
        out.extend_from_slice(p);
        match change {
            Change::Delete => out.push(KIND_DELETE),
            Change::Put(FileNode::Regular {
                content,
                executable,
            }) => {
                out.push(if *executable {
                    KIND_EXECUTABLE
                } else {
                    KIND_REGULAR
                });
                out.extend_from_slice(&(content.len() as u64).to_be_bytes());
                out.extend_from_slice(content);
            }
            Change::Put(FileNode::Symlink(target)) => {
                let t = target.as_str().as_bytes();
                out.push(KIND_SYMLINK);
                out.extend_from_slice(&(t.len() as u16).to_be_bytes());
                out.extend_from_slice(t);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BlobError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(BlobError::TruncatedBlob(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, BlobError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<usize, BlobError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]) as usize)
    }

    fn u32(&mut self) -> Result<u32, BlobError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, BlobError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn str(&mut self, n: usize) -> Result<&'a str, BlobError> {
        let at = self.pos;
        std::str::from_utf8(self.take(n)?).map_err(|_| BlobError::BadUtf8(at))
    }
}

/// Parses a blob, rejecting anything that is not the canonical encoding of
/// some layer.
pub fn decode_layer(bytes: &[u8]) -> Result<Layer, BlobError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(BlobError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let count = r.u32()?;
    let mut changes = Vec::new();
    let mut prev: Option<&str> = None;
    for _ in 0..count {
        let len = r.u16()?;
        let raw = r.str(len)?;
        match prev {
            Some(p) if p == raw => return Err(BlobError::DuplicatePath(raw.to_owned())),
            Some(p) if p.as_bytes() > raw.as_bytes() => {
                return Err(BlobError::UnsortedEntries(raw.to_owned()))
            }
            _ => {}
        }
        let path = match PathName::parse(raw) {
            Ok(p) if p.as_str() == raw => p,
            _ => return Err(BlobError::NonCanonicalPath(raw.to_owned())),
        };
        prev = Some(raw);
        let change = match r.u8()? {
            KIND_DELETE => Change::Delete,
            kind @ (KIND_REGULAR | KIND_EXECUTABLE) => {
                let len = r.u64()?;
                let len = usize::try_from(len).map_err(|_| BlobError::TruncatedBlob(bytes.len()))?;
                Change::Put(FileNode::Regular {
                    content: r.take(len)?.to_vec(),
                    executable: kind == KIND_EXECUTABLE,
                })
            }
            KIND_SYMLINK => {
                let len = r.u16()?;
                let target = r.str(len)?;
                Change::Put(FileNode::Symlink(LinkTarget::new(target)?))
            }
            other => return Err(BlobError::UnknownKind(other)),
        };
        changes.push((path, change));
    }
    if r.pos != bytes.len() {
        return Err(BlobError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(Layer::from_changes(changes)?)
}
