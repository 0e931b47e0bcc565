//! Export and import of tagged images as a plain directory:
//!
//! ```text
//! <dir>/index                 "<repository>:<version> <config hex>" per line
//! <dir>/blobs/sha256/<hex>
//! ```
//!
//! Import trusts the digests named by the index and nothing else: every
//! blob is hashed before it is admitted.

use std::fs;
use std::io;
use std::path::Path;

use super::store::{io_err, verify};
use super::{decode_layer, Digest, ImageConfig, ImageRef, Store, StoreError};

/// Parses an export index.
pub fn parse_index(text: &str) -> Result<Vec<(ImageRef, Digest)>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let bad = |reason: &str| StoreError::MalformedIndex {
            line: lineno,
            reason: reason.to_owned(),
        };
        if line.is_empty() {
            continue;
        }
        let (r, hex) = line
            .split_once(' ')
            .ok_or_else(|| bad("expected '<reference> <digest>'"))?;
        let r = ImageRef::parse(r).map_err(|e| bad(&e.to_string()))?;
        let d = Digest::from_hex(hex).map_err(|e| bad(&e.to_string()))?;
        out.push((r, d));
    }
    if out.is_empty() {
        return Err(StoreError::MalformedIndex {
            line: 0,
            reason: "index lists no images".to_owned(),
        });
    }
    Ok(out)
}

pub fn format_index(entries: &[(ImageRef, Digest)]) -> String {
    entries
        .iter()
        .map(|(r, d)| format!("{r} {}\n", d.hex()))
        .collect()
}

/// Writes the image tagged `r` and exactly the blobs it reaches to `dest`,
/// which must be absent or empty.
pub fn export_image(store: &Store, r: &ImageRef, dest: &Path) -> Result<(), StoreError> {
    let config_digest = store.lookup_tag(r)?;
    let config_bytes = store.get_blob(&config_digest)?;
    let config = ImageConfig::decode(&config_bytes).map_err(|source| StoreError::BadConfig {
        digest: config_digest.clone(),
        source,
    })?;

    match fs::read_dir(dest) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(StoreError::DestinationNotEmpty(dest.to_owned()));
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(dest)(e)),
    }
    let blob_dir = dest.join("blobs").join("sha256");
    fs::create_dir_all(&blob_dir).map_err(io_err(&blob_dir))?;

    let write = |d: &Digest, bytes: &[u8]| {
        let path = blob_dir.join(d.hex());
        fs::write(&path, bytes).map_err(io_err(&path))
    };
    write(&config_digest, &config_bytes)?;
    for layer in &config.layers {
        write(layer, &store.get_blob(layer)?)?;
    }
    let index = dest.join("index");
    fs::write(&index, format_index(&[(r.clone(), config_digest)])).map_err(io_err(&index))?;
    Ok(())
}

fn read_verified(src: &Path, d: &Digest) -> Result<Vec<u8>, StoreError> {
    let path = src.join("blobs").join("sha256").join(d.hex());
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(StoreError::MissingBlob(d.clone()))
        }
        Err(e) => return Err(io_err(&path)(e)),
    };
    verify(d, &bytes, &path)?;
    Ok(bytes)
}

/// Imports every image listed in `src/index`. Nothing is written to the
/// store until every blob has been verified and decoded.
pub fn import_image(store: &Store, src: &Path) -> Result<Vec<ImageRef>, StoreError> {
    let index_path = src.join("index");
    let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let entries = parse_index(&text)?;

    let mut blobs = Vec::new();
    for (_, config_digest) in &entries {
        let bytes = read_verified(src, config_digest)?;
        let config = ImageConfig::decode(&bytes).map_err(|source| StoreError::BadConfig {
            digest: config_digest.clone(),
            source,
        })?;
        blobs.push(bytes);
        for layer in &config.layers {
            let bytes = read_verified(src, layer)?;
            decode_layer(&bytes).map_err(|source| StoreError::BadLayer {
                digest: layer.clone(),
                source,
            })?;
            blobs.push(bytes);
        }
    }

    for bytes in &blobs {
        store.put_blob(bytes)?;
    }
    let mut refs = Vec::new();
    for (r, d) in entries {
        store.tag(&r, &d)?;
        refs.push(r);
    }
    Ok(refs)
}
