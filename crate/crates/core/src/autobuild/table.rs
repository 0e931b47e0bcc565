use std::collections::BTreeSet;

use super::AutobuildError;

/// One row of the package table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageSpec {
    pub packager: String,
    pub package: String,
    pub revision: String,
    /// Shell command run inside the built image; success is exit 0.
    pub test: String,
}

/// Parses a tab-separated package table with columns packager, package,
/// revision and test. Blank lines and lines starting with `#` are skipped.
pub fn parse_packages_tsv(bytes: &[u8]) -> Result<Vec<PackageSpec>, AutobuildError> {
    let text = std::str::from_utf8(bytes).map_err(|e| AutobuildError::BadUtf8 {
        offset: e.valid_up_to(),
    })?;
    let mut specs = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(AutobuildError::FieldCount {
                line: line_no,
                found: fields.len(),
            });
        }
        if let Some(pos) = fields.iter().position(|f| f.trim().is_empty()) {
            return Err(AutobuildError::EmptyField {
                line: line_no,
                column: pos + 1,
            });
        }
        let spec = PackageSpec {
            packager: fields[0].trim().to_owned(),
            package: fields[1].trim().to_owned(),
            revision: fields[2].trim().to_owned(),
            test: fields[3].to_owned(),
        };
        if !seen.insert((spec.package.clone(), spec.revision.clone())) {
            return Err(AutobuildError::DuplicatePackageRevision {
                line: line_no,
                package: spec.package,
                revision: spec.revision,
            });
        }
        specs.push(spec);
    }
    Ok(specs)
}
