use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VarError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("invalid variable name {0:?}: expected [A-Z][A-Z0-9_]*")]
    BadName(String),
    #[error("unterminated ${{...}} in {0:?}")]
    Unterminated(String),
    #[error("expected NAME=VALUE, got {0:?}")]
    BadAssignment(String),
}

fn valid_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    matches!(bytes.next(), Some(b'A'..=b'Z'))
        && bytes.all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
}

/// Values for `${NAME}` placeholders.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarMap(BTreeMap<String, String>);

impl VarMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: impl Into<String>) -> Result<(), VarError> {
        if !valid_name(name) {
            return Err(VarError::BadName(name.to_owned()));
        }
        self.0.insert(name.to_owned(), value.into());
        Ok(())
    }

    /// Adds a `NAME=VALUE` assignment as given on the command line.
    pub fn assign(&mut self, assignment: &str) -> Result<(), VarError> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| VarError::BadAssignment(assignment.to_owned()))?;
        self.insert(name, value)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Replaces `${NAME}` with its value and `$$` with `$`. Substituted text is
/// not expanded again, and a `$` followed by anything else is kept as is.
pub fn substitute_vars(s: &str, vars: &VarMap) -> Result<String, VarError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        if let Some(tail) = after.strip_prefix('$') {
            out.push('$');
            rest = tail;
        } else if let Some(tail) = after.strip_prefix('{') {
            let end = tail
                .find('}')
                .ok_or_else(|| VarError::Unterminated(s.to_owned()))?;
            let name = &tail[..end];
            if !valid_name(name) {
                return Err(VarError::BadName(name.to_owned()));
            }
            let value = vars
                .get(name)
                .ok_or_else(|| VarError::UnknownVariable(name.to_owned()))?;
            out.push_str(value);
            rest = &tail[end + 1..];
        } else {
            out.push('$');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Inverse of substitution for literal text: doubles every `$`.
pub fn escape_vars(s: &str) -> String {
    s.replace('$', "$$")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vars(pairs: &[(&str, &str)]) -> VarMap {
        let mut v = VarMap::new();
        for (k, val) in pairs {
            v.insert(k, *val).unwrap();
        }
        v
    }

    #[test]
    fn substitution() {
        let v = vars(&[("TAG", "demo/blog:v1")]);
        assert_eq!(substitute_vars("${TAG}", &v).unwrap(), "demo/blog:v1");
        assert_eq!(substitute_vars("no vars here", &v).unwrap(), "no vars here");
        assert_eq!(
            substitute_vars("${MISSING}", &VarMap::new()),
            Err(VarError::UnknownVariable("MISSING".into()))
        );
        assert_eq!(substitute_vars("$$HOME and $PATH", &v).unwrap(), "$HOME and $PATH");
        assert_eq!(substitute_vars("$${TAG}", &v).unwrap(), "${TAG}");
        assert_eq!(substitute_vars("a${TAG}b${TAG}", &v).unwrap(), "ademo/blog:v1bdemo/blog:v1");
        assert!(matches!(substitute_vars("${TAG", &v), Err(VarError::Unterminated(_))));
        assert!(matches!(substitute_vars("${tag}", &v), Err(VarError::BadName(_))));
        assert_eq!(substitute_vars("trailing $", &v).unwrap(), "trailing $");
    }

    #[test]
    fn no_recursive_expansion() {
        let v = vars(&[("A", "${B}"), ("B", "x")]);
        assert_eq!(substitute_vars("${A}", &v).unwrap(), "${B}");
    }

    #[test]
    fn assignments() {
        let mut v = VarMap::new();
        v.assign("TAG=demo/blog:v1").unwrap();
        v.assign("EMPTY=").unwrap();
        assert_eq!(v.get("TAG"), Some("demo/blog:v1"));
        assert_eq!(v.get("EMPTY"), Some(""));
        assert!(v.assign("novalue").is_err());
        assert!(v.assign("lower=x").is_err());
        assert!(v.assign("9X=x").is_err());
    }

    proptest! {
        #[test]
        fn escape_round_trips(s in ".*") {
            prop_assert_eq!(substitute_vars(&escape_vars(&s), &VarMap::new()).unwrap(), s);
        }
    }
}
