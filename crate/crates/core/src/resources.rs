//! Resource documents and single-language views of them.
//!
//! Every object carries a language set. An empty set means "every language
//! the document declares", which keeps monolingual files free of tags and
//! lets canonicalization drop tags that add no information.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{validate_network, Lexeme, OutputFeature, System, SystemNetwork, ValidationReport};
use crate::semantics::{validate_chooser, validate_inquiry, Chooser, Inquiry};

pub const DEFAULT_ROOT_FEATURE: &str = "start";
pub const DEFAULT_MARK: &str = ".";

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Languages(pub BTreeSet<String>);

impl Languages {
    pub fn of<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Languages(codes.into_iter().map(Into::into).collect())
    }

    /// True when the set defers to the enclosing scope.
    pub fn is_inherited(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains_all(&self, other: &Languages) -> bool {
        other.0.is_subset(&self.0)
    }

    /// Whether an object tagged with `self` applies to `code`.
    pub fn applies_to(&self, code: &str) -> bool {
        self.0.is_empty() || self.0.contains(code)
    }

    /// The explicit set, resolving "inherited" against `scope`.
    pub fn resolve(&self, scope: &BTreeSet<String>) -> BTreeSet<String> {
        if self.0.is_empty() {
            scope.clone()
        } else {
            self.0.clone()
        }
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl fmt::Display for Languages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("*");
        }
        let codes: Vec<&str> = self.codes().collect();
        f.write_str(&codes.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

/// Adds morphological features to the bundle holding `function` whenever
/// `feature` is in the unit's selection expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphRule {
    pub feature: String,
    pub function: String,
    pub morph: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

/// Terminal mark used when `feature` is selected in the top unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PunctuationRule {
    pub feature: String,
    pub mark: String,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

fn default_root() -> String {
    DEFAULT_ROOT_FEATURE.to_owned()
}

fn is_default_root(root: &str) -> bool {
    root == DEFAULT_ROOT_FEATURE
}

/// One resource document: the lattice plus everything needed to generate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ResourceSet {
    #[serde(default)]
    pub language_codes: BTreeSet<String>,
    #[serde(default = "default_root", skip_serializing_if = "is_default_root")]
    pub root_feature: String,
    #[serde(default)]
    pub systems: Vec<System>,
    #[serde(default)]
    pub lexemes: Vec<Lexeme>,
    #[serde(default)]
    pub choosers: Vec<Chooser>,
    #[serde(default)]
    pub inquiries: Vec<Inquiry>,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub morphology: Vec<MorphRule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub punctuation: Vec<PunctuationRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResourceError {
    UnknownLanguage(String),
}

impl ResourceError {
    pub fn code(&self) -> &'static str {
        match self {
            ResourceError::UnknownLanguage(_) => "UNKNOWN-LANGUAGE",
        }
    }
}

impl fmt::Display for ResourceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceError::UnknownLanguage(code) => {
                write!(f, "{}: language `{code}` is not declared", self.code())
            }
        }
    }
}

impl core::error::Error for ResourceError {}

/// Filters nested feature and statement tags down to one language.
fn system_for(system: &System, code: &str) -> System {
    let outputs = system
        .outputs
        .iter()
        .filter(|o| o.languages.applies_to(code))
        .map(|o| OutputFeature {
            feature: o.feature.clone(),
            realizations: o.realizations.iter().filter(|r| r.languages.applies_to(code)).cloned().collect(),
            languages: Languages::default(),
        })
        .collect();
    System { outputs, languages: Languages::default(), ..system.clone() }
}

impl ResourceSet {
    pub fn object_count(&self) -> usize {
        self.systems.len() + self.choosers.len() + self.inquiries.len() + self.lexemes.len()
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Everything that applies to one declared language.
    pub fn view(&self, code: &str) -> Result<LanguageView, ResourceError> {
        if !self.language_codes.contains(code) {
            return Err(ResourceError::UnknownLanguage(code.to_owned()));
        }
        let systems =
            self.systems.iter().filter(|s| s.languages.applies_to(code)).map(|s| system_for(s, code)).collect();
        fn keyed<T: Clone>(
            items: &[T],
            code: &str,
            langs: impl Fn(&T) -> &Languages,
            name: impl Fn(&T) -> &str,
        ) -> BTreeMap<String, T> {
            let mut out = BTreeMap::new();
            for item in items.iter().filter(|i| langs(i).applies_to(code)) {
                out.entry(name(item).to_owned()).or_insert_with(|| item.clone());
            }
            out
        }
        let lexicon: Vec<Lexeme> = self.lexemes.iter().filter(|l| l.languages.applies_to(code)).cloned().collect();
        Ok(LanguageView {
            language: code.to_owned(),
            network: SystemNetwork::new(&self.root_feature, systems),
            lexemes: keyed(&lexicon, code, |l| &l.languages, |l| &l.name),
            lexicon,
            choosers: keyed(&self.choosers, code, |c| &c.languages, |c| &c.name),
            chooser_list: self.choosers.iter().filter(|c| c.languages.applies_to(code)).cloned().collect(),
            inquiries: keyed(&self.inquiries, code, |i| &i.languages, |i| &i.name),
            inquiry_list: self.inquiries.iter().filter(|i| i.languages.applies_to(code)).cloned().collect(),
            regions: self.regions.iter().filter(|r| r.languages.applies_to(code)).map(|r| r.name.clone()).collect(),
            morphology: self.morphology.iter().filter(|m| m.languages.applies_to(code)).cloned().collect(),
            punctuation: self.punctuation.iter().filter(|p| p.languages.applies_to(code)).cloned().collect(),
        })
    }

    /// Canonical form. Every top-level object is split into its per-language
    /// contents, identical contents are rejoined under one language set, and
    /// the set is dropped when it covers every declared language. Nested
    /// language tags therefore never survive canonicalization: an object
    /// whose statements differ by language becomes one variant per distinct
    /// content. Tags naming undeclared languages are discarded.
    pub fn canonicalize(&self) -> ResourceSet {
        let all = &self.language_codes;
        ResourceSet {
            language_codes: all.clone(),
            root_feature: self.root_feature.clone(),
            systems: assemble(regroup(explode(&self.systems, all)), all),
            lexemes: assemble(regroup(explode(&self.lexemes, all)), all),
            choosers: assemble(regroup(explode(&self.choosers, all)), all),
            inquiries: assemble(regroup(explode(&self.inquiries, all)), all),
            regions: assemble(regroup(explode(&self.regions, all)), all),
            morphology: assemble(regroup(explode(&self.morphology, all)), all),
            punctuation: assemble(regroup(explode(&self.punctuation, all)), all),
        }
    }
}

/// A top-level resource object: something with an identity, a language set
/// and a single-language projection.
pub(crate) trait Scoped: Clone + PartialEq {
    /// Objects with the same key and a shared language must agree.
    fn key(&self) -> String;
    fn languages(&self) -> &Languages;
    fn set_languages(&mut self, languages: Languages);

    /// The object as one language sees it, with every tag cleared.
    fn project(&self, _code: &str) -> Self {
        let mut out = self.clone();
        out.set_languages(Languages::default());
        out
    }
}

macro_rules! scoped_by_name {
    ($($t:ty),*) => {$(
        impl Scoped for $t {
            fn key(&self) -> String {
                self.name.clone()
            }
            fn languages(&self) -> &Languages {
                &self.languages
            }
            fn set_languages(&mut self, languages: Languages) {
                self.languages = languages;
            }
        }
    )*};
}

scoped_by_name!(Lexeme, Chooser, Inquiry, Region);

impl Scoped for System {
    fn key(&self) -> String {
        self.name.clone()
    }
    fn languages(&self) -> &Languages {
        &self.languages
    }
    fn set_languages(&mut self, languages: Languages) {
        self.languages = languages;
    }
    fn project(&self, code: &str) -> Self {
        system_for(self, code)
    }
}

// Rules are identified by their whole content, so two languages never
// disagree about one; they simply carry different rules.
impl Scoped for MorphRule {
    fn key(&self) -> String {
        let morph: Vec<&str> = self.morph.iter().map(String::as_str).collect();
        format!("{}\u{0}{}\u{0}{}", self.feature, self.function, morph.join(" "))
    }
    fn languages(&self) -> &Languages {
        &self.languages
    }
    fn set_languages(&mut self, languages: Languages) {
        self.languages = languages;
    }
}

impl Scoped for PunctuationRule {
    fn key(&self) -> String {
        format!("{}\u{0}{}", self.feature, self.mark)
    }
    fn languages(&self) -> &Languages {
        &self.languages
    }
    fn set_languages(&mut self, languages: Languages) {
        self.languages = languages;
    }
}

/// One projection per (object, language), restricted to `scope`.
pub(crate) fn explode<T: Scoped>(items: &[T], scope: &BTreeSet<String>) -> Vec<(T, String)> {
    let mut out = Vec::new();
    for item in items {
        for code in item.languages().resolve(scope).intersection(scope) {
            out.push((item.project(code), code.clone()));
        }
    }
    out
}

/// Joins identical projections, keeping first-appearance order.
pub(crate) fn regroup<T: Scoped>(pairs: Vec<(T, String)>) -> Vec<(T, BTreeSet<String>)> {
    let mut groups: Vec<(T, BTreeSet<String>)> = Vec::new();
    for (item, code) in pairs {
        match groups.iter_mut().find(|(g, _)| *g == item) {
            Some((_, codes)) => {
                codes.insert(code);
            }
            None => groups.push((item, BTreeSet::from([code]))),
        }
    }
    groups
}

/// Finished objects in canonical order, language sets covering `all` elided.
pub(crate) fn assemble<T: Scoped>(groups: Vec<(T, BTreeSet<String>)>, all: &BTreeSet<String>) -> Vec<T> {
    let mut out: Vec<T> = groups
        .into_iter()
        .map(|(mut item, codes)| {
            item.set_languages(if codes == *all { Languages::default() } else { Languages(codes) });
            item
        })
        .collect();
    out.sort_by(|a, b| (a.key(), a.languages()).cmp(&(b.key(), b.languages())));
    out
}

/// The resources as seen by one language, indexed for generation.
#[derive(Debug, Clone)]
pub struct LanguageView {
    pub language: String,
    pub network: SystemNetwork,
    pub lexicon: Vec<Lexeme>,
    pub lexemes: BTreeMap<String, Lexeme>,
    pub choosers: BTreeMap<String, Chooser>,
    pub inquiries: BTreeMap<String, Inquiry>,
    pub regions: BTreeSet<String>,
    pub morphology: Vec<MorphRule>,
    pub punctuation: Vec<PunctuationRule>,
    chooser_list: Vec<Chooser>,
    inquiry_list: Vec<Inquiry>,
}

impl LanguageView {
    /// Checks one language view: the network, every chooser against its
    /// system, inquiries, and the cross references between them.
    pub fn validate(&self) -> ValidationReport {
        let mut report = validate_network(&self.network, &self.lexicon);
        let mut names = BTreeSet::new();
        for l in &self.lexicon {
            if !names.insert(l.name.as_str()) {
                report.error("DUPLICATE-LEXEME", &l.name, format!("lexeme `{}` is defined twice", l.name));
            }
        }
        let mut names = BTreeSet::new();
        for c in &self.chooser_list {
            if !names.insert(c.name.as_str()) {
                report.error("DUPLICATE-CHOOSER", &c.name, format!("chooser `{}` is defined twice", c.name));
            }
        }
        let mut names = BTreeSet::new();
        for i in &self.inquiry_list {
            if !names.insert(i.name.as_str()) {
                report.error("DUPLICATE-INQUIRY", &i.name, format!("inquiry `{}` is defined twice", i.name));
            }
            validate_inquiry(i, &mut report);
        }
        for s in self.network.systems() {
            if let Some(name) = &s.chooser {
                match self.choosers.get(name) {
                    Some(c) => validate_chooser(c, s, &self.inquiries, &mut report),
                    None => report.error(
                        "DANGLING-REF",
                        &s.name,
                        format!("system `{}` names unknown chooser `{name}`", s.name),
                    ),
                }
            }
            if !s.region.is_empty() && !self.regions.contains(&s.region) {
                report.error(
                    "DANGLING-REF",
                    &s.name,
                    format!("system `{}` belongs to undeclared region `{}`", s.name, s.region),
                );
            }
        }
        for m in &self.morphology {
            if !self.network.has_feature(&m.feature) {
                report.error(
                    "DANGLING-REF",
                    &m.feature,
                    format!("morphology rule names unknown feature `{}`", m.feature),
                );
            }
        }
        for p in &self.punctuation {
            if !self.network.has_feature(&p.feature) {
                report.error(
                    "DANGLING-REF",
                    &p.feature,
                    format!("punctuation rule names unknown feature `{}`", p.feature),
                );
            }
        }
        report
    }

    pub fn chooser_for(&self, system: &System) -> Chooser {
        system
            .chooser
            .as_ref()
            .and_then(|name| self.choosers.get(name))
            .cloned()
            .unwrap_or_else(|| Chooser::default_for(system))
    }
}

/// Validates every declared language view. Diagnostics found in several
/// views are reported once; multilingual documents prefix the object with
/// the language it was found in.
pub fn validate_resources(res: &ResourceSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    if res.language_codes.is_empty() {
        report.error("NO-LANGUAGES", "", "the resource declares no language codes".into());
        return report;
    }
    let multi = res.language_codes.len() > 1;
    let mut seen_errors = BTreeSet::new();
    let mut seen_warnings = BTreeSet::new();
    for code in &res.language_codes {
        let view = res.view(code).expect("declared language");
        let sub = view.validate();
        for mut d in sub.errors {
            if seen_errors.insert((d.code.clone(), d.object.clone(), d.message.clone())) {
                if multi {
                    d.message = format!("[{code}] {}", d.message);
                }
                report.errors.push(d);
            }
        }
        for mut d in sub.warnings {
            if seen_warnings.insert((d.code.clone(), d.object.clone(), d.message.clone())) {
                if multi {
                    d.message = format!("[{code}] {}", d.message);
                }
                report.warnings.push(d);
            }
        }
    }
    let declared = &res.language_codes;
    let mut check = |object: &str, l: &Languages| {
        if let Some(bad) = l.codes().find(|c| !declared.contains(*c)) {
            report.error("UNKNOWN-LANGUAGE", object, format!("`{object}` is tagged with undeclared language `{bad}`"));
        }
    };
    for s in &res.systems {
        check(&s.name, &s.languages);
        for o in &s.outputs {
            check(&o.feature, &o.languages);
            for r in &o.realizations {
                check(&r.id, &r.languages);
            }
        }
    }
    for l in &res.lexemes {
        check(&l.name, &l.languages);
    }
    for c in &res.choosers {
        check(&c.name, &c.languages);
    }
    for i in &res.inquiries {
        check(&i.name, &i.languages);
    }
    for r in &res.regions {
        check(&r.name, &r.languages);
    }
    for m in &res.morphology {
        check(&m.feature, &m.languages);
    }
    for p in &res.punctuation {
        check(&p.feature, &p.languages);
    }
    report
}
