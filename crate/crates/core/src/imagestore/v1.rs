//! Legacy parent-linked images and their linearization into a
//! content-addressed layer sequence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde_json::Value;

use super::{ImageConfig, Store, StoreError};
use crate::layerfs::{DirPath, Layer};

/// A 256-bit image id in lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId(String);

impl ImageId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for ImageId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(ImageId(s.to_owned()))
        } else {
            Err(StoreError::BadImageId(s.to_owned()))
        }
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An image in the parent-linked model: one layer, an optional parent, and
/// free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct V1Image {
    pub id: ImageId,
    pub parent: Option<ImageId>,
    pub layer: Layer,
    pub meta: BTreeMap<String, Value>,
}

/// Follows parent links from `top` to the root, stores each layer, and
/// returns a config whose layers run root-first.
///
/// Metadata is merged root-first with child keys overriding parent keys.
/// The keys `cmd`, `entrypoint`, `env`, `workingdir`, `user` and
/// `exposed_ports` become the runtime config; other keys are ignored.
pub fn linearize_v1(
    store: &Store,
    images: &[V1Image],
    top: &ImageId,
) -> Result<ImageConfig, StoreError> {
    let mut by_id: HashMap<&ImageId, &V1Image> = HashMap::new();
    for img in images {
        if by_id.insert(&img.id, img).is_some() {
            return Err(StoreError::DuplicateImageId(img.id.clone()));
        }
    }

    let mut chain = Vec::new();
    let mut seen = BTreeSet::new();
    let mut next = Some(top);
    while let Some(id) = next {
        if !seen.insert(id) {
            return Err(StoreError::CycleDetected(id.clone()));
        }
        let img = by_id
            .get(id)
            .ok_or_else(|| StoreError::MissingParent(id.clone()))?;
        chain.push(*img);
        next = img.parent.as_ref();
    }
    chain.reverse();

    let mut meta = BTreeMap::new();
    let mut config = ImageConfig::default();
    for img in &chain {
        config.layers.push(store.put_layer(&img.layer)?);
        for (k, v) in &img.meta {
            meta.insert(k.as_str(), v);
        }
    }

    fn field<T: DeserializeOwned>(
        meta: &BTreeMap<&str, &Value>,
        key: &str,
    ) -> Result<Option<T>, StoreError> {
        meta.get(key)
            .filter(|v| !v.is_null())
            .map(|v| {
                serde_json::from_value((*v).clone()).map_err(|e| StoreError::InvalidMeta {
                    key: key.to_owned(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    config.cmd = field(&meta, "cmd")?;
    config.entrypoint = field(&meta, "entrypoint")?;
    config.env = field(&meta, "env")?.unwrap_or_default();
    config.workingdir = field::<DirPath>(&meta, "workingdir")?;
    config.user = field(&meta, "user")?;
    let mut ports: Vec<u16> = field(&meta, "exposed_ports")?.unwrap_or_default();
    ports.sort_unstable();
    ports.dedup();
    config.exposed_ports = ports;
    Ok(config)
}
