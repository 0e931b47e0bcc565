//! Image configuration objects and image references.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::Digest;
use crate::layerfs::DirPath;

/// Every config carries this creation time so equal inputs hash equally.
pub const EPOCH_ZERO: &str = "1970-01-01T00:00:00Z";

pub const DEFAULT_VERSION: &str = "latest";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefError {
    #[error("invalid repository name {0:?}")]
    BadRepository(String),
    #[error("invalid version {0:?}")]
    BadVersion(String),
}

/// `repository[:version]`, version defaulting to `latest`.
///
/// Repositories match `[a-z0-9]([a-z0-9._/-]*[a-z0-9])?` with the extra
/// rule that no `/`-separated segment is empty, `.` or `..` (repositories
/// become directories in the store). Versions match
/// `[A-Za-z0-9_][A-Za-z0-9_.-]{0,127}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ImageRef {
    repository: String,
    version: String,
}

fn valid_repository(s: &str) -> bool {
    let bytes = s.as_bytes();
    let edge = |b: u8| b.is_ascii_lowercase() || b.is_ascii_digit();
    let inner = |b: u8| edge(b) || matches!(b, b'.' | b'_' | b'/' | b'-');
    !s.is_empty()
        && edge(bytes[0])
        && edge(bytes[bytes.len() - 1])
        && bytes.iter().all(|&b| inner(b))
        && s.split('/').all(|seg| !matches!(seg, "" | "." | ".."))
}

fn valid_version(s: &str) -> bool {
    let bytes = s.as_bytes();
    let word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    !s.is_empty()
        && s.len() <= 128
        && word(bytes[0])
        && bytes.iter().all(|&b| word(b) || matches!(b, b'.' | b'-'))
}

impl ImageRef {
    pub fn new(repository: &str, version: &str) -> Result<Self, RefError> {
        if !valid_repository(repository) {
            return Err(RefError::BadRepository(repository.to_owned()));
        }
        if !valid_version(version) {
            return Err(RefError::BadVersion(version.to_owned()));
        }
        Ok(ImageRef {
            repository: repository.to_owned(),
            version: version.to_owned(),
        })
    }

    pub fn parse(s: &str) -> Result<Self, RefError> {
        match s.split_once(':') {
            Some((repo, version)) => ImageRef::new(repo, version),
            None => ImageRef::new(s, DEFAULT_VERSION),
        }
    }

    pub fn repository(&self) -> &str {
        &self.repository
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.repository, self.version)
    }
}

impl FromStr for ImageRef {
    type Err = RefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImageRef::parse(s)
    }
}

impl TryFrom<String> for ImageRef {
    type Error = RefError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        ImageRef::parse(&s)
    }
}

impl From<ImageRef> for String {
    fn from(r: ImageRef) -> String {
        r.to_string()
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed image config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image config created time must be {EPOCH_ZERO}, got {0:?}")]
    NonZeroCreated(String),
    #[error("image config exposed ports are not sorted and unique")]
    UnsortedPorts,
}

/// Layer stack plus runtime configuration.
///
/// `layers` is base-first: the most recently donned layer is last and is
/// consulted first during resolution.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ImageConfig {
    pub layers: Vec<Digest>,
    pub cmd: Option<Vec<String>>,
    pub entrypoint: Option<Vec<String>>,
    pub env: Vec<String>,
    pub workingdir: Option<DirPath>,
    pub user: Option<String>,
    pub exposed_ports: Vec<u16>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    layers: Vec<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cmd: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entrypoint: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    env: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workingdir: Option<DirPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    exposed_ports: Vec<u16>,
    created: String,
}

impl ImageConfig {
    /// Canonical bytes: JSON with sorted keys, no whitespace, absent and
    /// empty optional fields omitted.
    pub fn encode(&self) -> Vec<u8> {
        let mut ports = self.exposed_ports.clone();
        ports.sort_unstable();
        ports.dedup();
        let doc = ConfigDoc {
            layers: self.layers.clone(),
            cmd: self.cmd.clone(),
            entrypoint: self.entrypoint.clone(),
            env: self.env.clone(),
            workingdir: self.workingdir.clone(),
            user: self.user.clone(),
            exposed_ports: ports,
            created: EPOCH_ZERO.to_owned(),
        };
        let value = serde_json::to_value(&doc).expect("config serializes");
        let mut out = Vec::new();
        write_canonical(&value, &mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ConfigError> {
        let doc: ConfigDoc = serde_json::from_slice(bytes)?;
        if doc.created != EPOCH_ZERO {
            return Err(ConfigError::NonZeroCreated(doc.created));
        }
        if doc.exposed_ports.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::UnsortedPorts);
        }
        Ok(ImageConfig {
            layers: doc.layers,
            cmd: doc.cmd,
            entrypoint: doc.entrypoint,
            env: doc.env,
            workingdir: doc.workingdir,
            user: doc.user,
            exposed_ports: doc.exposed_ports,
        })
    }

    /// Replaces each field that `overrides` sets.
    pub fn apply(&mut self, overrides: &ConfigOverrides) {
        if let Some(cmd) = &overrides.cmd {
            self.cmd = Some(cmd.clone());
        }
        if let Some(ep) = &overrides.entrypoint {
            self.entrypoint = Some(ep.clone());
        }
        if let Some(env) = &overrides.env {
            self.env = env.clone();
        }
        if let Some(wd) = &overrides.workingdir {
            self.workingdir = Some(wd.clone());
        }
        if let Some(user) = &overrides.user {
            self.user = Some(user.clone());
        }
        if let Some(ports) = &overrides.exposed_ports {
            let mut ports = ports.clone();
            ports.sort_unstable();
            ports.dedup();
            self.exposed_ports = ports;
        }
    }
}

/// A partial runtime configuration; set fields replace the base image's.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmd: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entrypoint: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workingdir: Option<DirPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposed_ports: Option<Vec<u16>>,
}

impl ConfigOverrides {
    pub fn is_empty(&self) -> bool {
        *self == ConfigOverrides::default()
    }
}

/// Writes `value` as compact JSON with object keys in byte order,
/// independent of how the map type orders them.
pub(crate) fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                serde_json::to_writer(&mut *out, k).expect("string serializes");
                out.push(b':');
                write_canonical(&map[k], out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(v, out);
            }
            out.push(b']');
        }
        scalar => serde_json::to_writer(&mut *out, scalar).expect("scalar serializes"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_refs() {
        let r = ImageRef::parse("demo/blog:v1").unwrap();
        assert_eq!((r.repository(), r.version()), ("demo/blog", "v1"));
        assert_eq!(ImageRef::parse("busybox").unwrap().version(), "latest");
        assert_eq!(ImageRef::parse("pkgs/tmux:2.1--1").unwrap().version(), "2.1--1");
        for bad in [
            "", ":v", "Upper", "a/", "/a", "a//b", "a/../b", "a/./b", "a:", "a:b:c", "a:.x",
            "a:x/y", "-a",
        ] {
            assert!(ImageRef::parse(bad).is_err(), "{bad:?} accepted");
        }
        assert_eq!(r.to_string(), "demo/blog:v1");
    }

    #[test]
    fn empty_config_bytes() {
        let c = ImageConfig::default();
        assert_eq!(
            String::from_utf8(c.encode()).unwrap(),
            r#"{"created":"1970-01-01T00:00:00Z","layers":[]}"#
        );
    }

    #[test]
    fn full_config_is_sorted_and_round_trips() {
        let c = ImageConfig {
            layers: vec![Digest::of(b"a"), Digest::of(b"b")],
            cmd: Some(vec!["/factorizer".into()]),
            entrypoint: Some(vec![]),
            env: vec!["CGO_ENABLED=0".into()],
            workingdir: Some(DirPath::parse("/go/src").unwrap()),
            user: Some("nobody".into()),
            exposed_ports: vec![80, 443],
        };
        let text = String::from_utf8(c.encode()).unwrap();
        let keys = [
            "\"cmd\"",
            "\"created\"",
            "\"entrypoint\"",
            "\"env\"",
            "\"exposed_ports\"",
            "\"layers\"",
            "\"user\"",
            "\"workingdir\"",
        ];
        let positions: Vec<_> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert!(!text.contains(' '));
        assert_eq!(ImageConfig::decode(&c.encode()).unwrap(), c);
    }

    #[test]
    fn decode_rejects() {
        assert!(matches!(
            ImageConfig::decode(br#"{"created":"2016-01-01T00:00:00Z","layers":[]}"#),
            Err(ConfigError::NonZeroCreated(_))
        ));
        assert!(matches!(
            ImageConfig::decode(br#"{"created":"1970-01-01T00:00:00Z","layers":[],"exposed_ports":[2,1]}"#),
            Err(ConfigError::UnsortedPorts)
        ));
        assert!(ImageConfig::decode(br#"{"created":"1970-01-01T00:00:00Z","layers":[],"x":1}"#).is_err());
        assert!(ImageConfig::decode(br#"{"created":"1970-01-01T00:00:00Z","layers":["abc"]}"#).is_err());
    }

    #[test]
    fn overrides_replace_fields() {
        let mut c = ImageConfig {
            env: vec!["A=1".into()],
            cmd: Some(vec!["sh".into()]),
            ..Default::default()
        };
        c.apply(&ConfigOverrides {
            cmd: Some(vec!["/factorizer".into()]),
            exposed_ports: Some(vec![8080, 80, 8080]),
            ..Default::default()
        });
        assert_eq!(c.cmd, Some(vec!["/factorizer".to_string()]));
        assert_eq!(c.env, vec!["A=1".to_string()]);
        assert_eq!(c.exposed_ports, vec![80, 8080]);
    }
}
