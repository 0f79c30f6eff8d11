//! Queries over a finished generation: selection-expression views, the
//! origin of any token, function, ordering or lexical class, recorded chooser
//! paths, contrast between two cycles, and watch-filtered event streams.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::generator::{generate_observed, AppliedConstraint, DecisionEvent, GenerationResult, Observer, UnitRecord};
use crate::network::{EntryCondition, Fragment, SystemNetwork};
use crate::resources::LanguageView;
use crate::semantics::{ChooserOutcome, PathStep, SemanticGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceError {
    UnknownUnit(String),
    UnknownAspect(String),
    SystemNotFired { unit: String, system: String },
    UnknownWatchId(String),
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::UnknownUnit(_) => "UNKNOWN-UNIT",
            TraceError::UnknownAspect(_) => "UNKNOWN-ASPECT",
            TraceError::SystemNotFired { .. } => "SYSTEM-NOT-FIRED",
            TraceError::UnknownWatchId(_) => "UNKNOWN-WATCH-ID",
        }
    }
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::UnknownUnit(u) => write!(f, "{}: no unit `{u}` in this result", self.code()),
            TraceError::UnknownAspect(a) => write!(f, "{}: `{a}` does not resolve on this unit", self.code()),
            TraceError::SystemNotFired { unit, system } => {
                write!(f, "{}: `{system}` did not fire in unit `{unit}`", self.code())
            }
            TraceError::UnknownWatchId(w) => {
                write!(f, "{}: `{w}` is not a system, inquiry or statement id", self.code())
            }
        }
    }
}

impl core::error::Error for TraceError {}

/// Accepts a unit id (`u3`) or a unit path (`root/Subject`).
pub fn find_unit<'a>(result: &'a GenerationResult, unit: &str) -> Result<&'a UnitRecord, TraceError> {
    result.unit(unit).or_else(|| result.unit_by_path(unit)).ok_or_else(|| TraceError::UnknownUnit(unit.to_owned()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewKind {
    List,
    Subgraph,
    Replay,
}

impl FromStr for ViewKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "list" => Ok(ViewKind::List),
            "subgraph" => Ok(ViewKind::Subgraph),
            "replay" => Ok(ViewKind::Replay),
            other => Err(format!("unknown view `{other}`; expected list, subgraph or replay")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListItem {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "kebab-case")]
pub enum SelectionView {
    List {
        items: Vec<ListItem>,
    },
    /// The fired systems with the selected features marked.
    Subgraph {
        fragment: Fragment,
        marked: Vec<String>,
    },
    Replay {
        events: Vec<DecisionEvent>,
    },
}

pub fn selection_expression(
    result: &GenerationResult,
    net: &SystemNetwork,
    unit: &str,
    kind: ViewKind,
) -> Result<SelectionView, TraceError> {
    let u = find_unit(result, unit)?;
    Ok(match kind {
        ViewKind::List => SelectionView::List {
            items: u
                .selection
                .iter()
                .map(|e| ListItem { feature: e.feature.clone(), system: e.system.clone() })
                .collect(),
        },
        ViewKind::Subgraph => {
            let members = u.fired().filter_map(|(s, _)| net.index_of(s)).collect();
            SelectionView::Subgraph {
                fragment: net.fragment(members),
                marked: u.features().map(str::to_owned).collect(),
            }
        }
        ViewKind::Replay => {
            SelectionView::Replay { events: result.events.iter().filter(|e| e.unit == u.id).cloned().collect() }
        }
    })
}

/// Something about a unit whose origin can be asked for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Aspect {
    /// A surface token by its index in the result.
    Token(usize),
    Function(String),
    Ordering(String, String),
    /// The lexical constraints on the bundle holding a function.
    LexicalClass(String),
}

impl FromStr for Aspect {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TraceError::UnknownAspect(s.to_owned());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "token" => arg.parse().map(Aspect::Token).map_err(|_| bad()),
            "function" if !arg.is_empty() => Ok(Aspect::Function(arg.to_owned())),
            "lexical-class" if !arg.is_empty() => Ok(Aspect::LexicalClass(arg.to_owned())),
            "ordering" => {
                let (a, b) = arg.split_once('<').ok_or_else(bad)?;
                Ok(Aspect::Ordering(a.to_owned(), b.to_owned()))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aspect::Token(i) => write!(f, "token:{i}"),
            Aspect::Function(x) => write!(f, "function:{x}"),
            Aspect::Ordering(a, b) => write!(f, "ordering:{a}<{b}"),
            Aspect::LexicalClass(x) => write!(f, "lexical-class:{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusEntry {
    pub unit: String,
    pub statement: String,
    pub constraint: String,
    pub system: String,
    pub feature: String,
    /// The source system's entry condition, normalized.
    pub context: EntryCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusReport {
    pub unit: String,
    pub aspect: String,
    pub entries: Vec<FocusEntry>,
}

fn entry(net: &SystemNetwork, unit: &UnitRecord, c: &AppliedConstraint) -> FocusEntry {
    FocusEntry {
        unit: unit.id.clone(),
        statement: c.statement.clone(),
        constraint: format!("{}", c.op),
        system: c.system.clone(),
        feature: c.feature.clone(),
        context: net.paradigmatic_context(&c.system).unwrap_or(EntryCondition::True),
    }
}

/// Statements on every precedence path from bundle `a` to bundle `b`.
pub fn ordering_statements(unit: &UnitRecord, a: usize, b: usize) -> Vec<&str> {
    let n = unit.bundles.len();
    let mut succ = alloc::vec![Vec::new(); n];
    let mut pred = alloc::vec![Vec::new(); n];
    for p in &unit.precedence {
        succ[p.before].push(p.after);
        pred[p.after].push(p.before);
    }
    let closure = |edges: &[Vec<usize>], start: usize| {
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![start];
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(edges[v].iter().copied());
            }
        }
        seen
    };
    let (from_a, to_b) = (closure(&succ, a), closure(&pred, b));
    let mut out: Vec<&str> = Vec::new();
    for p in &unit.precedence {
        if from_a.contains(&p.before) && to_b.contains(&p.after) && !out.contains(&p.statement.as_str()) {
            out.push(&p.statement);
        }
    }
    out
}

/// Every constraint behind one aspect of a unit, with where in the lattice
/// it was introduced.
pub fn where_introduced(
    result: &GenerationResult,
    net: &SystemNetwork,
    unit: &str,
    aspect: &Aspect,
) -> Result<FocusReport, TraceError> {
    let u = find_unit(result, unit)?;
    let mut report = FocusReport { unit: u.id.clone(), aspect: format!("{aspect}"), entries: Vec::new() };
    if u.constraints.is_empty() {
        return Ok(report);
    }
    let unknown = || TraceError::UnknownAspect(format!("{aspect}"));
    let bundle = |f: &str| u.bundle_of(f).ok_or_else(unknown);
    match aspect {
        Aspect::Token(i) => {
            if *i >= result.tokens.len() {
                return Err(unknown());
            }
            let here = result.unit_index(&u.id).expect("unit from this result");
            let chain = result.token_chain(*i);
            let start = chain.iter().position(|r| r.unit == here).ok_or_else(unknown)?;
            for r in &chain[start..] {
                let unit = &result.units[r.unit];
                for s in unit.bundles[r.bundle].statements() {
                    if let Some(c) = unit.constraint(s) {
                        report.entries.push(entry(net, unit, c));
                    }
                }
            }
        }
        Aspect::Function(f) => {
            let hits: Vec<&AppliedConstraint> =
                u.constraints.iter().filter(|c| c.op.functions().contains(&f.as_str())).collect();
            if hits.is_empty() {
                return Err(unknown());
            }
            report.entries = hits.into_iter().map(|c| entry(net, u, c)).collect();
        }
        Aspect::Ordering(a, b) => {
            let (a, b) = (bundle(a)?, bundle(b)?);
            for s in ordering_statements(u, a, b) {
                if let Some(c) = u.constraint(s) {
                    report.entries.push(entry(net, u, c));
                }
            }
        }
        Aspect::LexicalClass(f) => {
            let b = bundle(f)?;
            for s in &u.bundles[b].lexical {
                if let Some(c) = u.constraint(s) {
                    report.entries.push(entry(net, u, c));
                }
            }
        }
    }
    Ok(report)
}

pub fn decision_path(result: &GenerationResult, unit: &str, system: &str) -> Result<ChooserOutcome, TraceError> {
    let u = find_unit(result, unit)?;
    u.fired()
        .find(|(s, _)| *s == system)
        .and_then(|(_, e)| e.outcome.clone())
        .ok_or_else(|| TraceError::SystemNotFired { unit: u.id.clone(), system: system.to_owned() })
}

/// The part of a result that cross-cycle comparison needs. Suites store
/// these instead of whole results.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(default)]
    pub resource_version: String,
    /// Unit path to the features of its selection expression, in order.
    pub selections: BTreeMap<String, Vec<String>>,
    pub events: Vec<DecisionEvent>,
}

impl From<&GenerationResult> for TraceRecord {
    fn from(r: &GenerationResult) -> Self {
        TraceRecord {
            resource_version: r.resource_version.clone(),
            selections: r.units.iter().map(|u| (u.path.clone(), u.features().map(str::to_owned).collect())).collect(),
            events: r.events.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub unit_path: String,
    pub system: String,
    pub feature_a: Option<String>,
    pub feature_b: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitDiff {
    pub unit_path: String,
    pub only_a: Vec<String>,
    pub only_b: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDiff {
    pub first_divergence: Option<Divergence>,
    pub units: Vec<UnitDiff>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TraceDiff {
    pub fn is_empty(&self) -> bool {
        self.first_divergence.is_none() && self.units.is_empty()
    }
}

impl fmt::Display for TraceDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.first_divergence {
            None => f.write_str("no divergence")?,
            Some(d) => write!(
                f,
                "first divergence at {} in {}: {} vs {}",
                d.system,
                d.unit_path,
                d.feature_a.as_deref().unwrap_or("(not fired)"),
                d.feature_b.as_deref().unwrap_or("(not fired)")
            )?,
        }
        for u in &self.units {
            write!(f, "\n  {}: -[{}] +[{}]", u.unit_path, u.only_a.join(" "), u.only_b.join(" "))?;
        }
        for w in &self.warnings {
            write!(f, "\n  warning: {w}")?;
        }
        Ok(())
    }
}

fn base_version(v: &str) -> &str {
    v.split('+').next().unwrap_or(v)
}

pub fn diff_records(a: &TraceRecord, b: &TraceRecord) -> TraceDiff {
    let mut diff = TraceDiff::default();
    if base_version(&a.resource_version) != base_version(&b.resource_version) {
        diff.warnings.push(format!(
            "results come from different resource lineages ({} and {})",
            a.resource_version, b.resource_version
        ));
    }
    let key = |e: &DecisionEvent| (e.unit_path.clone(), e.system.clone());
    let b_events: BTreeMap<(String, String), &DecisionEvent> = b.events.iter().map(|e| (key(e), e)).collect();
    let a_events: BTreeMap<(String, String), &DecisionEvent> = a.events.iter().map(|e| (key(e), e)).collect();
    let from_a = a.events.iter().find_map(|e| match b_events.get(&key(e)) {
        Some(other) if other.feature == e.feature => None,
        other => Some(Divergence {
            unit_path: e.unit_path.clone(),
            system: e.system.clone(),
            feature_a: Some(e.feature.clone()),
            feature_b: other.map(|o| o.feature.clone()),
        }),
    });
    diff.first_divergence = from_a.or_else(|| {
        b.events.iter().find(|e| !a_events.contains_key(&key(e))).map(|e| Divergence {
            unit_path: e.unit_path.clone(),
            system: e.system.clone(),
            feature_a: None,
            feature_b: Some(e.feature.clone()),
        })
    });

    let paths: BTreeSet<&String> = a.selections.keys().chain(b.selections.keys()).collect();
    let empty = Vec::new();
    for path in paths {
        let sa = a.selections.get(path).unwrap_or(&empty);
        let sb = b.selections.get(path).unwrap_or(&empty);
        let only_a: Vec<String> = sa.iter().filter(|f| !sb.contains(f)).cloned().collect();
        let only_b: Vec<String> = sb.iter().filter(|f| !sa.contains(f)).cloned().collect();
        if !only_a.is_empty() || !only_b.is_empty() || sa != sb {
            diff.units.push(UnitDiff { unit_path: path.clone(), only_a, only_b });
        }
    }
    if diff.first_divergence.is_none() {
        if let Some(u) = diff.units.first() {
            // Same decisions, different initial features.
            diff.first_divergence = Some(Divergence {
                unit_path: u.unit_path.clone(),
                system: String::new(),
                feature_a: u.only_a.first().cloned(),
                feature_b: u.only_b.first().cloned(),
            });
        }
    }
    diff
}

/// Aligns units by function path and reports the first decision, in
/// generation order, where the two cycles differ.
pub fn diff_traces(a: &GenerationResult, b: &GenerationResult) -> TraceDiff {
    diff_records(&a.into(), &b.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum WatchEvent {
    SystemFired { seq: usize, unit: String, system: String, feature: String },
    InquiryEvaluated { unit: String, system: String, inquiry: String, answer: String },
    StatementApplied { unit: String, statement: String, system: String, feature: String },
}

struct Watcher<'a> {
    watch: &'a BTreeSet<String>,
    events: Vec<WatchEvent>,
}

impl Observer for Watcher<'_> {
    fn system_fired(&mut self, e: &DecisionEvent) {
        if self.watch.contains(&e.system) {
            self.events.push(WatchEvent::SystemFired {
                seq: e.seq,
                unit: e.unit.clone(),
                system: e.system.clone(),
                feature: e.feature.clone(),
            });
        }
    }

    fn inquiry_evaluated(&mut self, unit: &str, system: &str, step: &PathStep) {
        if self.watch.contains(&step.inquiry) {
            self.events.push(WatchEvent::InquiryEvaluated {
                unit: unit.to_owned(),
                system: system.to_owned(),
                inquiry: step.inquiry.clone(),
                answer: step.answer.clone(),
            });
        }
    }

    fn statement_applied(&mut self, unit: &str, c: &AppliedConstraint) {
        if self.watch.contains(&c.statement) {
            self.events.push(WatchEvent::StatementApplied {
                unit: unit.to_owned(),
                statement: c.statement.clone(),
                system: c.system.clone(),
                feature: c.feature.clone(),
            });
        }
    }
}

/// Runs a normal generation and reports only the moments when a watched
/// system fires, a watched inquiry is evaluated or a watched statement is
/// applied.
pub fn conditional_trace(
    view: &LanguageView,
    graph: &SemanticGraph,
    watch: &[String],
) -> Result<(GenerationResult, Vec<WatchEvent>), TraceError> {
    let statements: BTreeSet<&str> = view
        .network
        .systems()
        .iter()
        .flat_map(|s| s.outputs.iter().flat_map(|o| o.realizations.iter().map(|r| r.id.as_str())))
        .collect();
    for w in watch {
        let known =
            view.network.system(w).is_some() || view.inquiries.contains_key(w) || statements.contains(w.as_str());
        if !known {
            return Err(TraceError::UnknownWatchId(w.clone()));
        }
    }
    let watch: BTreeSet<String> = watch.iter().cloned().collect();
    let mut watcher = Watcher { watch: &watch, events: Vec::new() };
    let result = generate_observed(view, graph, &mut watcher);
    Ok((result, watcher.events))
}
