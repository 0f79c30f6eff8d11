//! Regression suites of recorded examples, indexed by the grammatical
//! features their generation selected.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::generator::{generate, GenerationResult};
use crate::resources::ResourceSet;
use crate::semantics::{Action, ChooserNode};
use crate::spl::parse_spl;
use crate::trace::{diff_records, TraceDiff, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SuiteError {
    PartialResult { name: String, reason: String },
    DuplicateName(String),
    UnknownFeature(String),
    UnknownSystem(String),
    NoChooser(String),
}

impl SuiteError {
    pub fn code(&self) -> &'static str {
        match self {
            SuiteError::PartialResult { .. } => "PARTIAL-RESULT",
            SuiteError::DuplicateName(_) => "DUPLICATE-NAME",
            SuiteError::UnknownFeature(_) => "UNKNOWN-FEATURE",
            SuiteError::UnknownSystem(_) => "UNKNOWN-SYSTEM",
            SuiteError::NoChooser(_) => "NO-CHOOSER",
        }
    }
}

impl fmt::Display for SuiteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = self.code();
        match self {
            SuiteError::PartialResult { name, reason } => {
                write!(f, "{code}: `{name}` did not generate completely ({reason})")
            }
            SuiteError::DuplicateName(n) => write!(f, "{code}: the suite already has an example `{n}`"),
            SuiteError::UnknownFeature(x) => write!(f, "{code}: no feature `{x}` in the resources"),
            SuiteError::UnknownSystem(x) => write!(f, "{code}: no system `{x}` in the resources"),
            SuiteError::NoChooser(x) => write!(f, "{code}: system `{x}` has no chooser to alter"),
        }
    }
}

impl core::error::Error for SuiteError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Example {
    pub name: String,
    pub language: String,
    pub spl: String,
    pub expected: String,
    #[serde(flatten)]
    pub trace: TraceRecord,
}

impl Example {
    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.trace.selections.values().flatten().map(String::as_str)
    }
}

/// Feature name to the names of the examples whose generation selected it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureIndex(pub BTreeMap<String, BTreeSet<String>>);

impl FeatureIndex {
    pub fn add(&mut self, example: &Example) {
        for f in example.features() {
            self.0.entry(f.to_owned()).or_default().insert(example.name.clone());
        }
    }

    pub fn build<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        let mut index = FeatureIndex::default();
        for e in examples {
            index.add(e);
        }
        index
    }
}

/// Examples in recording order plus their feature index. Serializes as the
/// bare example array; the index is rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Example>", into = "Vec<Example>")]
pub struct Suite {
    examples: Vec<Example>,
    index: FeatureIndex,
}

impl From<Vec<Example>> for Suite {
    fn from(examples: Vec<Example>) -> Self {
        Suite { index: FeatureIndex::build(&examples), examples }
    }
}

impl From<Suite> for Vec<Example> {
    fn from(s: Suite) -> Self {
        s.examples
    }
}

impl Suite {
    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn index(&self) -> &FeatureIndex {
        &self.index
    }

    pub fn get(&self, name: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.name == name)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Stores a complete generation as a new example.
pub fn record_example<'s>(
    suite: &'s mut Suite,
    name: &str,
    spl: &str,
    result: &GenerationResult,
) -> Result<&'s Example, SuiteError> {
    if !result.status.is_complete() {
        let reason = result.issues.first().map(|i| i.code.clone()).unwrap_or_default();
        return Err(SuiteError::PartialResult { name: name.to_owned(), reason });
    }
    if suite.get(name).is_some() {
        return Err(SuiteError::DuplicateName(name.to_owned()));
    }
    let example = Example {
        name: name.to_owned(),
        language: result.language.clone(),
        spl: spl.to_owned(),
        expected: result.string.clone(),
        trace: result.into(),
    };
    suite.index.add(&example);
    suite.examples.push(example);
    Ok(suite.examples.last().expect("just pushed"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub name: String,
    pub verdict: Verdict,
    pub expected: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
    /// Where the new generation first departs from the recorded one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<TraceDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    /// Features no recorded example selects.
    pub uncovered: Vec<String>,
}

impl SuiteReport {
    pub fn count(&self, verdict: Verdict) -> usize {
        self.rows.iter().filter(|r| r.verdict == verdict).count()
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict == Verdict::Pass)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            write!(f, "{} {}", r.verdict, r.name)?;
            match r.verdict {
                Verdict::Pass => {}
                Verdict::Fail => {
                    write!(f, "\n  expected: {}\n  actual:   {}", r.expected, r.actual.as_deref().unwrap_or(""))?;
                    if let Some(d) = &r.diff {
                        write!(f, "\n  {d}")?;
                    }
                }
                Verdict::Error => write!(f, "\n  {}", r.error.as_deref().unwrap_or(""))?,
            }
            writeln!(f)?;
        }
        writeln!(
            f,
            "{} passed, {} failed, {} errors",
            self.count(Verdict::Pass),
            self.count(Verdict::Fail),
            self.count(Verdict::Error)
        )?;
        if !self.uncovered.is_empty() {
            writeln!(f, "features without examples: {}", self.uncovered.join(" "))?;
        }
        Ok(())
    }
}

fn all_features(res: &ResourceSet) -> BTreeSet<String> {
    let mut out: BTreeSet<String> =
        res.systems.iter().flat_map(|s| s.outputs.iter().map(|o| o.feature.clone())).collect();
    out.insert(res.root_feature.clone());
    out
}

fn run_example(res: &ResourceSet, example: &Example, version: &str) -> SuiteRow {
    let mut row = SuiteRow {
        name: example.name.clone(),
        verdict: Verdict::Error,
        expected: example.expected.clone(),
        actual: None,
        diff: None,
        error: None,
    };
    let view = match res.view(&example.language) {
        Ok(v) => v,
        Err(e) => {
            row.error = Some(format!("{e}"));
            return row;
        }
    };
    let graph = match parse_spl(&example.spl) {
        Ok(g) => g,
        Err(e) => {
            row.error = Some(format!("{e}"));
            return row;
        }
    };
    let mut result = generate(&view, &graph);
    result.resource_version = version.to_owned();
    if result.string == example.expected {
        row.verdict = Verdict::Pass;
    } else {
        row.verdict = Verdict::Fail;
        row.diff = Some(diff_records(&(&result).into(), &example.trace));
    }
    row.actual = Some(result.string);
    row
}

/// Regenerates every example against `res` and compares the strings byte
/// for byte. `version` is stamped on the new traces so the diff can tell
/// when the recording came from a different resource lineage.
pub fn run_suite(res: &ResourceSet, suite: &Suite, version: &str) -> SuiteReport {
    let covered = &suite.index.0;
    let uncovered = if suite.is_empty() {
        Vec::new()
    } else {
        all_features(res).into_iter().filter(|f| !covered.contains_key(f)).collect()
    };
    SuiteReport { rows: suite.examples.iter().map(|e| run_example(res, e, version)).collect(), uncovered }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleLookup {
    pub feature: String,
    pub examples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn examples_for(res: &ResourceSet, suite: &Suite, feature: &str) -> Result<ExampleLookup, SuiteError> {
    if !all_features(res).contains(feature) {
        return Err(SuiteError::UnknownFeature(feature.to_owned()));
    }
    let examples: Vec<String> = suite.index.0.get(feature).into_iter().flatten().cloned().collect();
    let warning = examples.is_empty().then(|| format!("no example in the suite selects `{feature}`"));
    Ok(ExampleLookup { feature: feature.to_owned(), examples, warning })
}

fn remap(node: &mut ChooserNode, from: &str, to: &str) {
    match node {
        ChooserNode::Leaf { actions } => {
            for a in actions {
                if let Action::Choose { choose } = a {
                    if choose == from {
                        *choose = to.to_owned();
                    }
                }
            }
        }
        ChooserNode::Ask { branches, .. } => {
            for b in branches.values_mut() {
                remap(b, from, to);
            }
        }
    }
}

/// A copy of `res` in which the chooser of `system` picks `to` wherever it
/// used to pick `from`. Identifications on the altered leaves are kept.
/// Used to check that suite failures point at the altered system.
pub fn remap_choice(res: &ResourceSet, system: &str, from: &str, to: &str) -> Result<ResourceSet, SuiteError> {
    let targets: Vec<&str> =
        res.systems.iter().filter(|s| s.name == system).filter_map(|s| s.chooser.as_deref()).collect();
    if targets.is_empty() {
        return Err(if res.systems.iter().any(|s| s.name == system) {
            SuiteError::NoChooser(system.to_owned())
        } else {
            SuiteError::UnknownSystem(system.to_owned())
        });
    }
    for f in [from, to] {
        if !res.systems.iter().any(|s| s.name == system && s.has_output(f)) {
            return Err(SuiteError::UnknownFeature(f.to_owned()));
        }
    }
    let mut out = res.clone();
    for c in out.choosers.iter_mut().filter(|c| targets.contains(&c.name.as_str())) {
        remap(&mut c.tree, from, to);
    }
    Ok(out)
}
