//! Combining single-language resources into one conditionalized resource
//! and taking them apart again.
//!
//! Objects (systems, lexemes, choosers, inquiries, regions and rules) unify
//! when their name and their per-language content are equal. Objects that
//! share a name but differ become variants, each tagged with the languages
//! it serves.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{EntryCondition, Operator, System};
use crate::resources::{assemble, explode, regroup, Languages, ResourceSet, Scoped};
use crate::semantics::{ChooserNode, Inquiry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MultilingualError {
    IncompatibleSchema { kind: &'static str, name: String, language: String },
    UnknownLanguage(String),
    EmptyLanguageSet,
    UnknownRegion(String),
    UnknownSystem(String),
    DanglingClosure { system: String, feature: String },
}

impl MultilingualError {
    pub fn code(&self) -> &'static str {
        match self {
            MultilingualError::IncompatibleSchema { .. } => "INCOMPATIBLE-SCHEMA",
            MultilingualError::UnknownLanguage(_) => "UNKNOWN-LANGUAGE",
            MultilingualError::EmptyLanguageSet => "EMPTY-LANGUAGE-SET",
            MultilingualError::UnknownRegion(_) => "UNKNOWN-REGION",
            MultilingualError::UnknownSystem(_) => "UNKNOWN-SYSTEM",
            MultilingualError::DanglingClosure { .. } => "DANGLING-CLOSURE",
        }
    }
}

impl fmt::Display for MultilingualError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = self.code();
        match self {
            MultilingualError::IncompatibleSchema { kind, name, language } => {
                write!(f, "{code}: {kind} `{name}` has two different definitions for language `{language}`")
            }
            MultilingualError::UnknownLanguage(l) => write!(f, "{code}: `{l}` is not declared by the resource"),
            MultilingualError::EmptyLanguageSet => write!(f, "{code}: at least one language is required"),
            MultilingualError::UnknownRegion(r) => write!(f, "{code}: no region `{r}`"),
            MultilingualError::UnknownSystem(s) => write!(f, "{code}: no system `{s}`"),
            MultilingualError::DanglingClosure { system, feature } => write!(
                f,
                "{code}: `{system}` is entered through `{feature}`, which neither the segment nor the target provides"
            ),
        }
    }
}

impl core::error::Error for MultilingualError {}

fn join<T: Scoped>(
    kind: &'static str,
    parts: &[(&[T], &BTreeSet<String>)],
    all: &BTreeSet<String>,
) -> Result<Vec<T>, MultilingualError> {
    let mut pairs = Vec::new();
    for (items, scope) in parts {
        pairs.extend(explode(items, scope));
    }
    let groups = regroup(pairs);
    let mut claimed: BTreeMap<(String, &str), usize> = BTreeMap::new();
    for (i, (item, codes)) in groups.iter().enumerate() {
        for code in codes {
            if claimed.insert((item.key(), code.as_str()), i).is_some() {
                return Err(MultilingualError::IncompatibleSchema { kind, name: item.key(), language: code.clone() });
            }
        }
    }
    Ok(assemble(groups, all))
}

/// Unifies any number of resources into one. A single input comes back in
/// canonical form.
pub fn merge(resources: &[ResourceSet]) -> Result<ResourceSet, MultilingualError> {
    let Some(first) = resources.first() else {
        return Ok(ResourceSet::default());
    };
    let mut all = BTreeSet::new();
    for r in resources {
        if r.root_feature != first.root_feature {
            return Err(MultilingualError::IncompatibleSchema {
                kind: "root feature",
                name: r.root_feature.clone(),
                language: r.language_codes.iter().cloned().collect::<Vec<_>>().join(","),
            });
        }
        all.extend(r.language_codes.iter().cloned());
    }
    macro_rules! field {
        ($f:ident, $kind:literal) => {
            join($kind, &resources.iter().map(|r| (r.$f.as_slice(), &r.language_codes)).collect::<Vec<_>>(), &all)?
        };
    }
    Ok(ResourceSet {
        root_feature: first.root_feature.clone(),
        systems: field!(systems, "system"),
        lexemes: field!(lexemes, "lexeme"),
        choosers: field!(choosers, "chooser"),
        inquiries: field!(inquiries, "inquiry"),
        regions: field!(regions, "region"),
        morphology: field!(morphology, "morphology rule"),
        punctuation: field!(punctuation, "punctuation rule"),
        language_codes: all,
    })
}

fn check_languages(res: &ResourceSet, langs: &BTreeSet<String>) -> Result<(), MultilingualError> {
    if langs.is_empty() {
        return Err(MultilingualError::EmptyLanguageSet);
    }
    match langs.iter().find(|l| !res.language_codes.contains(*l)) {
        Some(l) => Err(MultilingualError::UnknownLanguage(l.clone())),
        None => Ok(()),
    }
}

/// The part of `res` that applies to `langs`, as a resource declaring
/// exactly those languages.
pub fn extract(res: &ResourceSet, langs: &BTreeSet<String>) -> Result<ResourceSet, MultilingualError> {
    check_languages(res, langs)?;
    fn keep<T: Scoped>(items: &[T], scope: &BTreeSet<String>, langs: &BTreeSet<String>) -> Vec<T> {
        let pairs = explode(items, scope).into_iter().filter(|(_, c)| langs.contains(c)).collect();
        assemble(regroup(pairs), langs)
    }
    let all = &res.language_codes;
    Ok(ResourceSet {
        language_codes: langs.clone(),
        root_feature: res.root_feature.clone(),
        systems: keep(&res.systems, all, langs),
        lexemes: keep(&res.lexemes, all, langs),
        choosers: keep(&res.choosers, all, langs),
        inquiries: keep(&res.inquiries, all, langs),
        regions: keep(&res.regions, all, langs),
        morphology: keep(&res.morphology, all, langs),
        punctuation: keep(&res.punctuation, all, langs),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    Region(String),
    Systems(BTreeSet<String>),
}

fn asked_inquiries(node: &ChooserNode, out: &mut BTreeSet<String>) {
    if let ChooserNode::Ask { ask, branches, .. } = node {
        out.insert(ask.clone());
        for b in branches.values() {
            asked_inquiries(b, out);
        }
    }
}

/// Copies the systems picked by `selector` from the `src_lang` view of `src`
/// into `dst` as `dst_lang` objects, together with their choosers, the
/// inquiries those choosers ask, the lexemes they lexify and their regions.
pub fn import_segment(
    src: &ResourceSet,
    selector: &Selector,
    src_lang: &str,
    dst: &ResourceSet,
    dst_lang: &str,
) -> Result<ResourceSet, MultilingualError> {
    let source = extract(src, &BTreeSet::from([src_lang.to_owned()]))?;
    if !dst.language_codes.contains(dst_lang) {
        return Err(MultilingualError::UnknownLanguage(dst_lang.to_owned()));
    }
    let systems: Vec<System> = match selector {
        Selector::Region(r) => {
            if source.region(r).is_none() {
                return Err(MultilingualError::UnknownRegion(r.clone()));
            }
            source.systems.iter().filter(|s| s.region == *r).cloned().collect()
        }
        Selector::Systems(names) => {
            if let Some(n) = names.iter().find(|n| !source.systems.iter().any(|s| s.name == **n)) {
                return Err(MultilingualError::UnknownSystem(n.clone()));
            }
            source.systems.iter().filter(|s| names.contains(&s.name)).cloned().collect()
        }
    };
    if systems.is_empty() {
        return Ok(dst.clone());
    }

    let mut provided: BTreeSet<&str> =
        systems.iter().flat_map(|s| s.outputs.iter().map(|o| o.feature.as_str())).collect();
    provided.insert(&dst.root_feature);
    for s in dst.systems.iter().filter(|s| s.languages.applies_to(dst_lang)) {
        provided.extend(s.outputs.iter().map(|o| o.feature.as_str()));
    }
    for s in &systems {
        if let Some(feature) = s.entry.leaves().into_iter().find(|f| !provided.contains(f)) {
            return Err(MultilingualError::DanglingClosure { system: s.name.clone(), feature: feature.to_owned() });
        }
    }

    let choosers: Vec<_> = source
        .choosers
        .iter()
        .filter(|c| systems.iter().any(|s| s.chooser.as_deref() == Some(&c.name)))
        .cloned()
        .collect();
    let mut asked = BTreeSet::new();
    for c in &choosers {
        asked_inquiries(&c.tree, &mut asked);
    }
    let inquiries: Vec<Inquiry> = source.inquiries.iter().filter(|i| asked.contains(&i.name)).cloned().collect();
    let lexified: BTreeSet<&str> = systems
        .iter()
        .flat_map(|s| s.outputs.iter().flat_map(|o| o.realizations.iter()))
        .filter_map(|r| match &r.op {
            Operator::Lexify { lexeme, .. } => Some(lexeme.as_str()),
            _ => None,
        })
        .collect();
    let regions: BTreeSet<&str> = systems.iter().map(|s| s.region.as_str()).collect();

    let segment = ResourceSet {
        language_codes: BTreeSet::from([dst_lang.to_owned()]),
        root_feature: dst.root_feature.clone(),
        lexemes: source.lexemes.iter().filter(|l| lexified.contains(l.name.as_str())).cloned().collect(),
        regions: source.regions.iter().filter(|r| regions.contains(r.name.as_str())).cloned().collect(),
        systems,
        choosers,
        inquiries,
        morphology: Vec::new(),
        punctuation: Vec::new(),
    };
    merge(&[dst.clone(), segment])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalCount {
    pub languages: BTreeSet<String>,
    pub objects: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSharing {
    pub region: String,
    pub merged_systems: usize,
    pub original_systems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingReport {
    pub merged_object_count: usize,
    pub originals: Vec<OriginalCount>,
    /// Merged objects over the sum of the originals' objects.
    pub ratio: f64,
    pub regions: Vec<RegionSharing>,
}

impl fmt::Display for SharingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total: usize = self.originals.iter().map(|o| o.objects).sum();
        writeln!(f, "merged objects: {}", self.merged_object_count)?;
        for o in &self.originals {
            let codes: Vec<&str> = o.languages.iter().map(String::as_str).collect();
            writeln!(f, "  {}: {}", codes.join(","), o.objects)?;
        }
        writeln!(f, "separate total: {total}")?;
        writeln!(f, "ratio: {:.2}", self.ratio)?;
        for r in &self.regions {
            writeln!(f, "  region {}: {} of {} systems", r.region, r.merged_systems, r.original_systems)?;
        }
        Ok(())
    }
}

/// Counts systems, choosers, inquiries and lexemes alike.
pub fn sharing_stats(merged: &ResourceSet, originals: &[ResourceSet]) -> SharingReport {
    let total: usize = originals.iter().map(ResourceSet::object_count).sum();
    let mut regions: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in &merged.systems {
        regions.entry(&s.region).or_default().0 += 1;
    }
    for s in originals.iter().flat_map(|o| o.systems.iter()) {
        regions.entry(&s.region).or_default().1 += 1;
    }
    let merged_object_count = merged.object_count();
    SharingReport {
        merged_object_count,
        originals: originals
            .iter()
            .map(|o| OriginalCount { languages: o.language_codes.clone(), objects: o.object_count() })
            .collect(),
        ratio: if total == 0 { 1.0 } else { merged_object_count as f64 / total as f64 },
        regions: regions
            .into_iter()
            .map(|(r, (m, o))| RegionSharing { region: r.to_owned(), merged_systems: m, original_systems: o })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", content = "languages", rename_all = "kebab-case")]
pub enum Label {
    Shared,
    RestrictedTo(BTreeSet<String>),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Shared => f.write_str("SHARED"),
            Label::RestrictedTo(codes) => {
                let codes: Vec<&str> = codes.iter().map(String::as_str).collect();
                write!(f, "{}-only", codes.join("+"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastFeature {
    pub feature: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastSystem {
    pub system: String,
    pub entry: EntryCondition,
    pub label: Label,
    pub features: Vec<ContrastFeature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveView {
    pub region: String,
    pub languages: BTreeSet<String>,
    pub systems: Vec<ContrastSystem>,
}

/// Labels each system variant of a region, and each of its features, with
/// the languages among `langs` that use it. With a single language in view
/// nothing counts as shared.
pub fn contrastive_view(
    res: &ResourceSet,
    langs: &BTreeSet<String>,
    region: &str,
) -> Result<ContrastiveView, MultilingualError> {
    let sub = extract(res, langs)?;
    if !res.regions.iter().any(|r| r.name == region) {
        return Err(MultilingualError::UnknownRegion(region.to_owned()));
    }
    let label = |codes: &Languages| {
        let codes = codes.resolve(langs);
        if codes == *langs && langs.len() > 1 {
            Label::Shared
        } else {
            Label::RestrictedTo(codes)
        }
    };
    let mut feature_langs: BTreeMap<(&str, &str), BTreeSet<String>> = BTreeMap::new();
    for s in sub.systems.iter().filter(|s| s.region == region) {
        for o in &s.outputs {
            feature_langs.entry((&s.name, &o.feature)).or_default().extend(s.languages.resolve(langs));
        }
    }
    let systems = sub
        .systems
        .iter()
        .filter(|s| s.region == region)
        .map(|s| ContrastSystem {
            system: s.name.clone(),
            entry: s.entry.clone(),
            label: label(&s.languages),
            features: s
                .outputs
                .iter()
                .map(|o| ContrastFeature {
                    feature: o.feature.clone(),
                    label: label(&Languages(feature_langs[&(s.name.as_str(), o.feature.as_str())].clone())),
                })
                .collect(),
        })
        .collect();
    Ok(ContrastiveView { region: region.to_owned(), languages: langs.clone(), systems })
}
