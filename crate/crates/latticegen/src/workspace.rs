//! Editing resources: single edits accumulate into patches, patches are
//! accepted into a new base version.
//!
//! Every object edit is anchored by the content hash of the object it
//! replaces. A patch recorded against one state can only be applied to a
//! state holding exactly those objects, otherwise it is stale.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use latticegen_core::suite::{run_suite, Suite, Verdict};
use latticegen_core::ResourceSet;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{self, check, content_hash, short_hash};
use crate::Error;

pub const MANIFEST: &str = "versions.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    System,
    Lexeme,
    Chooser,
    Inquiry,
    Region,
}

impl ObjectKind {
    fn field(self) -> &'static str {
        match self {
            ObjectKind::System => "systems",
            ObjectKind::Lexeme => "lexemes",
            ObjectKind::Chooser => "choosers",
            ObjectKind::Inquiry => "inquiries",
            ObjectKind::Region => "regions",
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectKind::System => "system",
            ObjectKind::Lexeme => "lexeme",
            ObjectKind::Chooser => "chooser",
            ObjectKind::Inquiry => "inquiry",
            ObjectKind::Region => "region",
        })
    }
}

/// A requested change: the new content of an object, or `None` to delete it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub kind: ObjectKind,
    pub name: String,
    #[serde(default)]
    pub after: Option<Value>,
}

/// A recorded change, anchored to the content it replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: ObjectKind,
    pub name: String,
    /// Hash of the replaced object; `None` when the edit creates it.
    pub before: Option<String>,
    pub after: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub id: String,
    /// Version the edits were recorded against.
    pub parent: String,
    #[serde(default)]
    pub note: String,
    pub timestamp: u64,
    pub edits: Vec<Edit>,
}

impl Patch {
    pub fn file_name(&self) -> String {
        format!("{}.patch.json", self.id)
    }

    /// The edit list that undoes this patch, in reverse order.
    pub fn inverse(&self, before: &ResourceSet) -> Result<Vec<Change>, Error> {
        let mut state = before.clone();
        let mut undo = Vec::new();
        for e in &self.edits {
            undo.push(Change { kind: e.kind, name: e.name.clone(), after: object(&state, e.kind, &e.name)? });
            state = apply(&state, e)?;
        }
        undo.reverse();
        Ok(undo)
    }
}

/// A resource version: the hash of the loaded base and the accepted patches.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub base: String,
    pub patches: Vec<String>,
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base[..self.base.len().min(12)])?;
        for p in &self.patches {
            write!(f, "+{p}")?;
        }
        Ok(())
    }
}

/// One entry of `versions.json`, which maps resource file names to entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub version: Version,
    /// Hash of the file contents this entry describes.
    pub current: String,
}

/// The JSON content of one object, `None` when it does not exist.
pub fn object(res: &ResourceSet, kind: ObjectKind, name: &str) -> Result<Option<Value>, Error> {
    let doc = serde_json::to_value(res).expect("resources serialize");
    let mut hits = doc[kind.field()].as_array().into_iter().flatten().filter(|o| o["name"] == name);
    let first = hits.next().cloned();
    if hits.next().is_some() {
        return Err(Error::AmbiguousObject { kind: kind.to_string(), name: name.to_owned() });
    }
    Ok(first)
}

fn malformed(kind: ObjectKind, name: &str, why: impl fmt::Display) -> Error {
    Error::Resource { code: "MALFORMED-OBJECT", message: format!("MALFORMED-OBJECT: {kind} `{name}`: {why}") }
}

/// Replaces, creates or deletes one object. The result is canonical but not
/// validated.
fn replace(res: &ResourceSet, kind: ObjectKind, name: &str, after: Option<&Value>) -> Result<ResourceSet, Error> {
    if let Some(v) = after {
        if v.get("name").and_then(Value::as_str) != Some(name) {
            return Err(malformed(kind, name, "the content must carry the same name"));
        }
    }
    let mut doc = serde_json::to_value(res).expect("resources serialize");
    let list = doc[kind.field()].as_array_mut().expect("resource lists are arrays");
    match (list.iter().position(|o| o["name"] == name), after) {
        (Some(i), Some(v)) => list[i] = v.clone(),
        (Some(i), None) => {
            list.remove(i);
        }
        (None, Some(v)) => list.push(v.clone()),
        (None, None) => return Err(Error::UnknownObject { kind: kind.to_string(), name: name.to_owned() }),
    }
    let res: ResourceSet = serde_json::from_value(doc).map_err(|e| malformed(kind, name, e))?;
    Ok(res.canonicalize())
}

fn anchor(res: &ResourceSet, change: &Change) -> Result<Edit, Error> {
    Ok(Edit {
        kind: change.kind,
        name: change.name.clone(),
        before: object(res, change.kind, &change.name)?.map(|v| content_hash(&v)),
        after: change.after.clone(),
    })
}

/// Applies an edit if its anchor matches.
fn apply(res: &ResourceSet, edit: &Edit) -> Result<ResourceSet, Error> {
    let current = object(res, edit.kind, &edit.name)?.map(|v| content_hash(&v));
    if current != edit.before {
        return Err(Error::StalePatch { patch: String::new(), kind: edit.kind.to_string(), name: edit.name.clone() });
    }
    replace(res, edit.kind, &edit.name, edit.after.as_ref())
}

fn apply_patch(res: &ResourceSet, patch: &Patch) -> Result<ResourceSet, Error> {
    let mut state = res.clone();
    for e in &patch.edits {
        state = apply(&state, e).map_err(|err| match err {
            Error::StalePatch { kind, name, .. } => Error::StalePatch { patch: patch.id.clone(), kind, name },
            other => other,
        })?;
    }
    Ok(state)
}

/// Regions all of whose systems the patch rewrites or removes.
pub fn replaced_regions(before: &ResourceSet, patch: &Patch) -> BTreeSet<String> {
    let touched: BTreeSet<&str> =
        patch.edits.iter().filter(|e| e.kind == ObjectKind::System).map(|e| e.name.as_str()).collect();
    let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in &before.systems {
        members.entry(s.region.as_str()).or_default().push(&s.name);
    }
    members
        .into_iter()
        .filter(|(region, names)| !region.is_empty() && names.iter().all(|n| touched.contains(n)))
        .map(|(region, _)| region.to_owned())
        .collect()
}

/// What acceptance needs when a patch replaces a whole region.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gate<'a> {
    pub suite: Option<&'a Suite>,
    /// Accept without a passing suite run.
    pub force: bool,
}

/// Base resources plus the edits layered on top of them.
///
/// Readers see [`Workspace::current`], which includes pending and frozen
/// edits. Mutating methods either succeed completely or leave the
/// workspace untouched.
#[derive(Debug, Clone)]
pub struct Workspace {
    file: Option<PathBuf>,
    base: ResourceSet,
    version: Version,
    /// Patches created or loaded but not yet accepted.
    frozen: Vec<Patch>,
    pending: Vec<Edit>,
    shadow: ResourceSet,
}

impl Workspace {
    /// An in-memory workspace. Fails when the resources do not validate.
    pub fn new(resources: ResourceSet) -> Result<Self, Error> {
        let base = resources.canonicalize();
        check(&base)?;
        Ok(Workspace {
            file: None,
            version: Version { base: content_hash(&base), patches: Vec::new() },
            shadow: base.clone(),
            base,
            frozen: Vec::new(),
            pending: Vec::new(),
        })
    }

    /// Opens one resource file. Its version history is read from the
    /// manifest next to it when the manifest describes the file as it is.
    pub fn open(path: &Path) -> Result<Self, Error> {
        let loaded = io::load_resources(&[path])?;
        let mut ws = Workspace::new(loaded.resources)?;
        let manifest = manifest_path(path);
        if manifest.exists() {
            let entries: BTreeMap<String, ManifestEntry> = io::read_json(&manifest)?;
            if let Some(entry) = entries.get(&file_key(path)) {
                if entry.current == ws.version.base {
                    ws.version = entry.version.clone();
                }
            }
        }
        ws.file = Some(path.to_owned());
        Ok(ws)
    }

    pub fn base(&self) -> &ResourceSet {
        &self.base
    }

    /// The resources generation should use: base plus every unaccepted edit.
    pub fn current(&self) -> &ResourceSet {
        &self.shadow
    }

    pub fn version(&self) -> &Version {
        &self.version
    }

    /// Version label of [`Workspace::current`]. Unaccepted work shows as a
    /// `+pending` suffix so traces record that they came from a shadow.
    pub fn current_label(&self) -> String {
        if self.frozen.is_empty() && self.pending.is_empty() {
            self.version.to_string()
        } else {
            format!("{}+pending-{}", self.version, short_hash(&self.shadow))
        }
    }

    pub fn pending(&self) -> &[Edit] {
        &self.pending
    }

    pub fn frozen(&self) -> &[Patch] {
        &self.frozen
    }

    pub fn file(&self) -> Option<&Path> {
        self.file.as_deref()
    }

    /// Applies one change to the shadow. A change that makes the resources
    /// invalid is rolled back and reported.
    pub fn record_edit(&mut self, change: Change) -> Result<&Edit, Error> {
        let edit = anchor(&self.shadow, &change)?;
        let next = apply(&self.shadow, &edit)?;
        check(&next)?;
        self.shadow = next;
        self.pending.push(edit);
        Ok(self.pending.last().expect("just pushed"))
    }

    /// Freezes the pending edits into a patch. The shadow stays active.
    pub fn create_patch(&mut self, note: &str) -> Result<Patch, Error> {
        if self.pending.is_empty() {
            return Err(Error::EmptyPatch);
        }
        let parent = match self.frozen.last() {
            Some(p) => format!("{}+{}", self.version, p.id),
            None => self.version.to_string(),
        };
        let id = format!("p{}", short_hash(&(&parent, &self.pending)));
        let patch = Patch {
            id,
            parent,
            note: note.to_owned(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            edits: std::mem::take(&mut self.pending),
        };
        self.frozen.push(patch.clone());
        Ok(patch)
    }

    /// Layers a patch read from disk on top of the current state.
    pub fn queue_patch(&mut self, patch: Patch) -> Result<(), Error> {
        let already = self.version.patches.contains(&patch.id) || self.frozen.iter().any(|p| p.id == patch.id);
        if already {
            let first = patch.edits.first();
            return Err(Error::StalePatch {
                patch: patch.id.clone(),
                kind: first.map(|e| e.kind.to_string()).unwrap_or_default(),
                name: first.map(|e| e.name.clone()).unwrap_or_default(),
            });
        }
        if patch.edits.is_empty() {
            return Err(Error::EmptyPatch);
        }
        let next = apply_patch(&self.shadow, &patch)?;
        check(&next)?;
        // Pending edits were recorded on top of the old shadow; keep them on top.
        let mut with_pending = next.clone();
        for e in &self.pending {
            with_pending = apply(&with_pending, e)?;
        }
        check(&with_pending)?;
        self.frozen.push(patch);
        self.shadow = with_pending;
        Ok(())
    }

    /// Makes every frozen patch (and any pending edits, frozen first) part of
    /// the base. Patches replacing a whole region need a suite in which every
    /// example still passes, unless the gate is forced. When the workspace
    /// was opened from a file, the file and the manifest are rewritten.
    pub fn accept_patches(&mut self, gate: Gate<'_>) -> Result<&Version, Error> {
        let mut ws = self.clone();
        if !ws.pending.is_empty() {
            ws.create_patch("")?;
        }
        if ws.frozen.is_empty() {
            return Err(Error::EmptyPatch);
        }
        let mut state = ws.base.clone();
        let mut replaced = Vec::new();
        for p in &ws.frozen {
            replaced.extend(replaced_regions(&state, p).into_iter().map(|r| (p.id.clone(), r)));
            state = apply_patch(&state, p)?;
        }
        check(&state)?;
        let mut version = ws.version.clone();
        version.patches.extend(ws.frozen.iter().map(|p| p.id.clone()));
        if let (Some((patch, region)), false) = (replaced.first(), gate.force) {
            let Some(suite) = gate.suite else {
                return Err(Error::SuiteRequired { patch: patch.clone(), region: region.clone() });
            };
            let report = run_suite(&state, suite, &version.to_string());
            if !report.rows.iter().all(|r| r.verdict == Verdict::Pass) {
                return Err(Error::SuiteRegression(report));
            }
        }
        ws.base = state.clone();
        ws.shadow = state;
        ws.version = version;
        ws.frozen.clear();
        if ws.file.is_some() {
            ws.save()?;
        }
        *self = ws;
        Ok(&self.version)
    }

    /// Writes the base resources in canonical form and updates the manifest.
    pub fn save(&self) -> Result<(), Error> {
        let Some(path) = &self.file else { return Ok(()) };
        io::write_json(path, &self.base)?;
        let manifest = manifest_path(path);
        let mut entries: BTreeMap<String, ManifestEntry> =
            if manifest.exists() { io::read_json(&manifest)? } else { BTreeMap::new() };
        entries
            .insert(file_key(path), ManifestEntry { version: self.version.clone(), current: content_hash(&self.base) });
        io::write_json(&manifest, &entries)
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(MANIFEST)
}

fn file_key(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

pub fn read_patch(path: &Path) -> Result<Patch, Error> {
    io::read_json(path)
}

/// Writes `<id>.patch.json` into `dir` and returns its path.
pub fn write_patch(dir: &Path, patch: &Patch) -> Result<PathBuf, Error> {
    let path = dir.join(patch.file_name());
    io::write_json(&path, patch)?;
    Ok(path)
}
