//! Content-addressed storage of layers and image configs.
//!
//! Images are configs listing layer digests base-first. Layers are stored as
//! canonical `LDL1` blobs and configs as canonical JSON, both addressed by
//! their SHA-256 digest and verified on every read.

mod blob;
mod config;
mod digest;
mod resolve;
mod store;
mod transfer;
mod v1;

use std::path::PathBuf;

use thiserror::Error;

pub use blob::{decode_layer, encode_layer, BlobError, MAGIC};
pub use config::{ConfigError, ConfigOverrides, ImageConfig, ImageRef, RefError, EPOCH_ZERO};
pub use digest::{digest, Digest, DigestParseError};
pub use resolve::{
    enumerate, enumerate_stack, resolve_file, resolve_in, squash, wrap, ImageView,
};
pub use store::Store;
pub use transfer::{export_image, format_index, import_image, parse_index};
pub use v1::{linearize_v1, ImageId, V1Image};

use crate::layerfs::FsError;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no blob with digest {0}")]
    UnknownDigest(Digest),
    #[error("blob {path} does not match its digest {expected} (hashes to {actual})")]
    DigestMismatch {
        expected: Digest,
        actual: Digest,
        path: PathBuf,
    },
    #[error("blob {digest} is not a valid layer: {source}")]
    BadLayer {
        digest: Digest,
        #[source]
        source: BlobError,
    },
    #[error("blob {digest} is not a valid image config: {source}")]
    BadConfig {
        digest: Digest,
        #[source]
        source: ConfigError,
    },
    #[error("no image tagged {0}")]
    UnknownTag(ImageRef),
    #[error("config {config} lists layers missing from the store: {missing:?}")]
    DanglingLayers { config: Digest, missing: Vec<Digest> },
    #[error("cannot tag {reference}: {path} clashes with another repository or version")]
    TagConflict { reference: ImageRef, path: PathBuf },
    #[error("corrupt tag entry {0}")]
    BadTagEntry(PathBuf),
    #[error("export is missing blob {0}")]
    MissingBlob(Digest),
    #[error("malformed export index, line {line}: {reason}")]
    MalformedIndex { line: usize, reason: String },
    #[error("export destination {0} is not empty")]
    DestinationNotEmpty(PathBuf),
    #[error("invalid image id {0:?}")]
    BadImageId(String),
    #[error("image id {0} appears twice")]
    DuplicateImageId(ImageId),
    #[error("parent image {0} is unknown")]
    MissingParent(ImageId),
    #[error("parent chain loops back to {0}")]
    CycleDetected(ImageId),
    #[error("metadata key {key:?}: {reason}")]
    InvalidMeta { key: String, reason: String },
    #[error(transparent)]
    Fs(#[from] FsError),
}

impl StoreError {
    /// True when stored or transferred bytes failed verification.
    pub fn is_corruption(&self) -> bool {
        matches!(self, StoreError::DigestMismatch { .. })
    }
}
