use std::collections::BTreeMap;

use serde::Deserialize;

use super::AutobuildError;
use crate::engine::RelPath;
use crate::imagestore::ImageRef;
use crate::layerfs::DirPath;

pub const PLACEHOLDERS: [&str; 2] = ["package", "revision"];

/// How one packager builds a package: the builder image, the command run in
/// it, and the directory whose contents become the new layer.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterTemplate {
    pub image: ImageRef,
    pub build_command: Vec<String>,
    pub output_dir: String,
    #[serde(default)]
    pub env: Vec<String>,
    #[serde(default)]
    pub base: Option<ImageRef>,
    #[serde(default = "DirPath::root")]
    pub at: DirPath,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    adapters: BTreeMap<String, AdapterTemplate>,
}

pub type Adapters = BTreeMap<String, AdapterTemplate>;

/// Parses `{"adapters": {packager: template}}` and checks that every
/// `{placeholder}` is one of [`PLACEHOLDERS`].
pub fn parse_adapters(bytes: &[u8]) -> Result<Adapters, AutobuildError> {
    let doc: Document =
        serde_json::from_slice(bytes).map_err(|e| AutobuildError::Adapters(e.to_string()))?;
    for (name, adapter) in &doc.adapters {
        if adapter.build_command.is_empty() {
            return Err(AutobuildError::Adapters(format!("{name}: empty build_command")));
        }
        for s in adapter.build_command.iter().chain(std::iter::once(&adapter.output_dir)) {
            placeholders(s).try_for_each(|p| {
                if PLACEHOLDERS.contains(&p) {
                    Ok(())
                } else {
                    Err(AutobuildError::UnknownPlaceholder {
                        adapter: name.clone(),
                        placeholder: p.to_owned(),
                    })
                }
            })?;
        }
        let probe = fill(&adapter.output_dir, "p", "r");
        RelPath::parse(&probe)
            .map_err(|e| AutobuildError::Adapters(format!("{name}: output_dir: {e}")))?;
    }
    Ok(doc.adapters)
}

/// `{word}` occurrences where word is lowercase letters and underscores.
fn placeholders(s: &str) -> impl Iterator<Item = &str> {
    s.match_indices('{').filter_map(move |(i, _)| {
        let rest = &s[i + 1..];
        let end = rest.find('}')?;
        let word = &rest[..end];
        (!word.is_empty() && word.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')).then_some(word)
    })
}

pub(crate) fn fill(template: &str, package: &str, revision: &str) -> String {
    template
        .replace("{package}", package)
        .replace("{revision}", revision)
}
