//! Canonical JSON text, content hashes and resource loading.
//!
//! Canonical text is two-space indented JSON with object keys sorted and a
//! trailing newline. Saving a loaded resource file therefore reproduces it
//! byte for byte whenever the file was already canonical.

use std::fs;
use std::path::{Path, PathBuf};

use latticegen_core::multilingual::merge;
use latticegen_core::network::ValidationReport;
use latticegen_core::resources::validate_resources;
use latticegen_core::ResourceSet;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Error;

/// Sorted-key, two-space JSON with a trailing newline.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    // `serde_json::Map` is ordered by key unless `preserve_order` is enabled,
    // so a round trip through `Value` sorts every object.
    let value = serde_json::to_value(value).expect("domain types serialize to JSON");
    let mut text = serde_json::to_string_pretty(&value).expect("a JSON value always prints");
    text.push('\n');
    text
}

/// Hex SHA-256 of the canonical text.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

pub fn short_hash<T: Serialize + ?Sized>(value: &T) -> String {
    content_hash(value)[..12].to_owned()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Error> {
    fs::write(path, canonical_json(value)).map_err(|source| Error::Io { path: path.to_owned(), source })
}

pub fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// Resources read from disk, in canonical form, with the hash naming them.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub resources: ResourceSet,
    pub hash: String,
    pub paths: Vec<PathBuf>,
}

/// Reads, merges and validates resource files. Several files are combined
/// as a multilingual merge, so a file may hold a single language or a
/// fragment of one.
pub fn load_resources<P: AsRef<Path>>(paths: &[P]) -> Result<Loaded, Error> {
    let mut parts = Vec::with_capacity(paths.len());
    for p in paths {
        parts.push(read_json::<ResourceSet>(p.as_ref())?);
    }
    let resources = match parts.len() {
        0 => ResourceSet::default(),
        1 => parts[0].canonicalize(),
        _ => merge(&parts).map_err(|e| Error::Resource { code: e.code(), message: e.to_string() })?,
    };
    check(&resources)?;
    Ok(Loaded {
        hash: content_hash(&resources),
        resources,
        paths: paths.iter().map(|p| p.as_ref().to_owned()).collect(),
    })
}

/// VALIDATION-FAILED unless the report is free of errors. An empty document
/// has no root to start from.
pub fn check(res: &ResourceSet) -> Result<ValidationReport, Error> {
    let mut report = validate_resources(res);
    if res.systems.is_empty() && !report.has_code("MISSING-ROOT") {
        report.error("MISSING-ROOT", "", "the resources define no systems".into());
    }
    if report.is_ok() {
        Ok(report)
    } else {
        Err(Error::ValidationFailed(report))
    }
}
