//! Suite, index and trace files, plus generation from text input.

use std::path::{Path, PathBuf};

use latticegen_core::spl::parse_spl;
use latticegen_core::suite::{FeatureIndex, Suite};
use latticegen_core::{generate, GenerationResult, ResourceSet};

use crate::io;
use crate::Error;

/// Parses SPL text and generates it in `lang`, stamping `version`.
pub fn generate_spl(res: &ResourceSet, lang: &str, spl: &str, version: &str) -> Result<GenerationResult, Error> {
    let view = res.view(lang)?;
    let graph = parse_spl(spl)?;
    let mut result = generate(&view, &graph);
    result.resource_version = version.to_owned();
    Ok(result)
}

/// `x.suite.json` sits next to `x.index.json`.
pub fn index_path(suite: &Path) -> PathBuf {
    let name = suite.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let stem = name.strip_suffix(".suite.json").unwrap_or(name.trim_end_matches(".json"));
    suite.with_file_name(format!("{stem}.index.json"))
}

pub fn read_suite(path: &Path) -> Result<Suite, Error> {
    io::read_json(path)
}

/// Writes the suite and its feature index.
pub fn write_suite(path: &Path, suite: &Suite) -> Result<(), Error> {
    io::write_json(path, suite)?;
    io::write_json(&index_path(path), suite.index())
}

pub fn read_index(path: &Path) -> Result<FeatureIndex, Error> {
    io::read_json(&index_path(path))
}

pub fn read_trace(path: &Path) -> Result<GenerationResult, Error> {
    io::read_json(path)
}

pub fn write_trace(path: &Path, result: &GenerationResult) -> Result<(), Error> {
    io::write_json(path, result)
}
