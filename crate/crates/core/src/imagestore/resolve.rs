//! Union resolution over layer stacks, squash and wrap.

use super::{ConfigOverrides, Digest, ImageConfig, ImageRef, Store, StoreError};
use crate::layerfs::{self, Change, DirPath, Directory, FileNode, FsError, Layer, PathName};

/// Resolves `f` against a base-first stack: the topmost layer that mentions
/// `f` decides, a delete or silence from every layer means absent.
pub fn resolve_in<'a>(layers: &'a [Layer], f: &PathName) -> Option<&'a FileNode> {
    layers
        .iter()
        .rev()
        .find_map(|l| l.get(f))
        .and_then(Change::as_put)
}

/// The directory seen through a base-first stack.
pub fn enumerate_stack(layers: &[Layer]) -> Result<Directory, FsError> {
    let merged = layerfs::merge_layers(layers)?;
    Directory::from_entries(
        merged
            .into_iter()
            .filter_map(|(p, c)| match c {
                Change::Put(n) => Some((p, n)),
                Change::Delete => None,
            }),
    )
}

/// An image's layers loaded once, for repeated lookups.
#[derive(Debug, Clone)]
pub struct ImageView {
    layers: Vec<Layer>,
}

impl ImageView {
    pub fn load(store: &Store, config: &ImageConfig) -> Result<Self, StoreError> {
        Ok(ImageView {
            layers: store.load_layers(config)?,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn resolve(&self, f: &PathName) -> Option<&FileNode> {
        resolve_in(&self.layers, f)
    }

    pub fn enumerate(&self) -> Result<Directory, FsError> {
        enumerate_stack(&self.layers)
    }
}

pub fn resolve_file(
    store: &Store,
    config: &ImageConfig,
    f: &PathName,
) -> Result<Option<FileNode>, StoreError> {
    // Walk top-down and stop at the first layer that mentions `f`.
    for digest in config.layers.iter().rev() {
        if let Some(change) = store.get_layer(digest)?.get(f) {
            return Ok(change.as_put().cloned());
        }
    }
    Ok(None)
}

pub fn enumerate(store: &Store, config: &ImageConfig) -> Result<Directory, StoreError> {
    Ok(ImageView::load(store, config)?.enumerate()?)
}

/// Flattens the image into one layer of puts. Matched additions and
/// deletions cancel; the runtime configuration is kept.
pub fn squash(store: &Store, config: &ImageConfig) -> Result<ImageConfig, StoreError> {
    let dir = enumerate(store, config)?;
    let layer = Layer::from_changes(dir.into_iter().map(|(p, n)| (p, Change::Put(n))))?;
    let digest = store.put_layer(&layer)?;
    Ok(ImageConfig {
        layers: vec![digest],
        ..config.clone()
    })
}

/// Dons `dir`, relocated under `at`, as one new layer on top of `base` (or
/// on nothing), applies `overrides`, stores the config and tags it `as_ref`.
pub fn wrap(
    store: &Store,
    base: Option<&ImageConfig>,
    dir: &Directory,
    at: &DirPath,
    overrides: &ConfigOverrides,
    as_ref: &ImageRef,
) -> Result<Digest, StoreError> {
    let placed = layerfs::mount(&Directory::new(), dir, at)?;
    let layer = Layer::from_changes(placed.into_iter().map(|(p, n)| (p, Change::Put(n))))?;
    let layer_digest = store.put_layer(&layer)?;

    let mut config = base.cloned().unwrap_or_default();
    config.apply(overrides);
    config.layers.push(layer_digest);
    let digest = store.put_config(&config)?;
    store.tag(as_ref, &digest)?;
    Ok(digest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PathName {
        PathName::parse(s).unwrap()
    }

    fn put(path: &str, body: &str) -> Layer {
        Layer::from_changes([(p(path), Change::Put(FileNode::regular(body)))]).unwrap()
    }

    fn del(path: &str) -> Layer {
        Layer::from_changes([(p(path), Change::Delete)]).unwrap()
    }

    fn stack(store: &Store, layers: &[Layer]) -> ImageConfig {
        ImageConfig {
            layers: layers.iter().map(|l| store.put_layer(l).unwrap()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn topmost_layer_decides() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let c = stack(&store, &[put("/x", "m"), put("/x", "n")]);
        assert_eq!(resolve_file(&store, &c, &p("/x")).unwrap(), Some(FileNode::regular("n")));
        let c = stack(&store, &[put("/x", "m"), del("/x")]);
        assert_eq!(resolve_file(&store, &c, &p("/x")).unwrap(), None);
        assert_eq!(resolve_file(&store, &c, &p("/never")).unwrap(), None);
        assert!(enumerate(&store, &c).unwrap().is_empty());
    }

    #[test]
    fn squash_cancels_and_keeps_config() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut c = stack(
            &store,
            &[put("/bin/sh", "sh"), put("/tmp/cache", "junk"), del("/tmp/cache")],
        );
        c.cmd = Some(vec!["/bin/sh".into()]);
        let s = squash(&store, &c).unwrap();
        assert_eq!(s.layers.len(), 1);
        assert_eq!(s.cmd, c.cmd);
        let only = store.get_layer(&s.layers[0]).unwrap();
        assert!(only.get(&p("/tmp/cache")).is_none());
        assert_eq!(only.len(), 1);
    }

    #[test]
    fn wrap_appends_one_layer() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let base = stack(&store, &[put("/bin/sh", "sh"), put("/etc/os", "alpine")]);
        let out = Directory::from_entries([(p("/factorizer"), FileNode::executable("elf"))]).unwrap();
        let r = ImageRef::parse("test/factorization").unwrap();
        let overrides = ConfigOverrides {
            cmd: Some(vec!["/factorizer".into()]),
            ..Default::default()
        };
        let d = wrap(&store, Some(&base), &out, &DirPath::root(), &overrides, &r).unwrap();
        assert_eq!(store.lookup_tag(&r).unwrap(), d);
        let c = store.get_config(&d).unwrap();
        assert_eq!(c.layers.len(), 3);
        assert_eq!(c.layers[..2], base.layers[..]);
        assert_eq!(c.cmd, Some(vec!["/factorizer".to_string()]));
        assert_eq!(
            resolve_file(&store, &c, &p("/factorizer")).unwrap(),
            Some(FileNode::executable("elf"))
        );

        let d = wrap(&store, None, &out, &DirPath::parse("/usr/local/bin").unwrap(), &Default::default(), &r).unwrap();
        let c = store.get_config(&d).unwrap();
        assert_eq!(c.layers.len(), 1);
        assert!(resolve_file(&store, &c, &p("/usr/local/bin/factorizer")).unwrap().is_some());
        assert_eq!(c.cmd, None);
    }
}
