//! One generation cycle: per-unit traversal, structure building, lexical
//! selection, morphology and linearization.
//!
//! Units are traversed depth-first. A unit's traversal fires one system at a
//! time, always the first entered system in traversal order, so the decision
//! log is a total order that replays identically.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::cmp::Reverse;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{Lexeme, Operator, Realization, System};
use crate::resources::{LanguageView, DEFAULT_MARK};
use crate::semantics::{
    run_chooser, ChooserEnv, ChooserOutcome, DecisionSource, Identification, PathStep, SemanticGraph, SemanticsError,
};

/// Sub-units nested deeper than this are not expanded.
pub const MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub feature: String,
    /// The system that selected the feature; absent for initial features
    /// (the root feature and preselections no system resolved).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ChooserOutcome>,
}

/// A realization statement instance together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedConstraint {
    pub statement: String,
    #[serde(flatten)]
    pub op: Operator,
    pub system: String,
    pub feature: String,
}

impl AppliedConstraint {
    fn new(r: &Realization, system: &str, feature: &str) -> Self {
        AppliedConstraint {
            statement: r.id.clone(),
            op: r.op.clone(),
            system: system.to_owned(),
            feature: feature.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Filler {
    /// Realized by a sub-unit.
    Unit {
        unit: String,
    },
    Lexical {
        lexeme: String,
        morph: BTreeSet<String>,
        form: String,
    },
    /// No Preselect and no lexical constraint: realized by nothing.
    Covert,
    /// Lexical selection or expansion failed; a placeholder token stands in.
    Missing {
        reason: String,
    },
}

/// A set of conflated functions and every constraint attached to them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub functions: Vec<String>,
    pub entity: String,
    /// Insert and Conflate statements that built the bundle.
    pub built_by: Vec<String>,
    pub preselections: Vec<String>,
    pub preselected_by: Vec<String>,
    /// Classify, OutClassify and Lexify statements.
    pub lexical: Vec<String>,
    pub filler: Filler,
}

impl Bundle {
    /// The first inserted function; used for paths and placeholders.
    pub fn label(&self) -> &str {
        &self.functions[0]
    }

    pub fn has_function(&self, f: &str) -> bool {
        self.functions.iter().any(|x| x == f)
    }

    /// Every statement attached to the bundle, in attachment order groups.
    pub fn statements(&self) -> impl Iterator<Item = &str> {
        self.built_by.iter().chain(&self.preselected_by).chain(&self.lexical).map(String::as_str)
    }
}

/// `before` precedes `after`; both are bundle indices in the same unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precedence {
    pub before: usize,
    pub after: usize,
    pub statement: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRef {
    pub unit: usize,
    pub bundle: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: String,
    /// Function path from the top unit, e.g. `root/Subject`.
    pub path: String,
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<BundleRef>,
    pub selection: Vec<SelectionEntry>,
    pub constraints: Vec<AppliedConstraint>,
    pub bundles: Vec<Bundle>,
    pub precedence: Vec<Precedence>,
    /// Bundle indices in surface order.
    pub order: Vec<usize>,
}

impl UnitRecord {
    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.selection.iter().map(|e| e.feature.as_str())
    }

    pub fn has_feature(&self, f: &str) -> bool {
        self.selection.iter().any(|e| e.feature == f)
    }

    pub fn fired(&self) -> impl Iterator<Item = (&str, &SelectionEntry)> {
        self.selection.iter().filter_map(|e| e.system.as_deref().map(|s| (s, e)))
    }

    pub fn constraint(&self, statement: &str) -> Option<&AppliedConstraint> {
        self.constraints.iter().find(|c| c.statement == statement)
    }

    pub fn bundle_of(&self, function: &str) -> Option<usize> {
        self.bundles.iter().position(|b| b.has_function(function))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub unit: usize,
    pub bundle: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexeme: Option<String>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub placeholder: bool,
}

/// Why two neighbouring tokens appear in that order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    pub left: usize,
    pub right: usize,
    /// Unit in which the two tokens' constituents are siblings.
    pub unit: usize,
    pub before: usize,
    pub after: usize,
    /// Ordering statements on some precedence path from `before` to `after`.
    /// When empty the order came from insertion order and `inserted_by`
    /// names the Insert statements of both bundles.
    pub ordered_by: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inserted_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum Status {
    Complete,
    Partial { reason: String, detail: String },
}

impl Status {
    pub fn is_complete(&self) -> bool {
        matches!(self, Status::Complete)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: String,
    pub unit: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub seq: usize,
    pub unit: String,
    pub unit_path: String,
    pub system: String,
    pub feature: String,
    pub path: Vec<PathStep>,
    pub constraints: Vec<String>,
    pub source: DecisionSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub chooser_invocations: usize,
    pub fired_systems: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub string: String,
    pub language: String,
    #[serde(default)]
    pub resource_version: String,
    pub tokens: Vec<Token>,
    pub adjacencies: Vec<Adjacency>,
    pub units: Vec<UnitRecord>,
    pub status: Status,
    /// Problems that made the result partial.
    pub issues: Vec<Issue>,
    pub warnings: Vec<Issue>,
    pub events: Vec<DecisionEvent>,
    pub stats: Stats,
}

impl GenerationResult {
    pub fn unit(&self, id: &str) -> Option<&UnitRecord> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.units.iter().position(|u| u.id == id)
    }

    pub fn unit_by_path(&self, path: &str) -> Option<&UnitRecord> {
        self.units.iter().find(|u| u.path == path)
    }

    /// (unit, bundle) pairs from the top unit down to the token's bundle.
    pub fn token_chain(&self, token: usize) -> Vec<BundleRef> {
        let t = &self.tokens[token];
        let mut chain = vec![BundleRef { unit: t.unit, bundle: t.bundle }];
        let mut unit = t.unit;
        while let Some(parent) = self.units[unit].parent {
            chain.push(parent);
            unit = parent.unit;
        }
        chain.reverse();
        chain
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GenerationError {
    ContradictoryPreselection { system: String, features: Vec<String> },
    Chooser { system: String, error: SemanticsError },
}

impl GenerationError {
    pub fn code(&self) -> &'static str {
        match self {
            GenerationError::ContradictoryPreselection { .. } => "CONTRADICTORY-PRESELECTION",
            GenerationError::Chooser { error, .. } => error.code(),
        }
    }
}

impl fmt::Display for GenerationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenerationError::ContradictoryPreselection { system, features } => {
                write!(f, "{}: {} are all outputs of `{system}`", self.code(), features.join(", "))
            }
            GenerationError::Chooser { system, error } => write!(f, "in `{system}`: {error}"),
        }
    }
}

impl core::error::Error for GenerationError {}

/// Hooks called while a cycle runs. All methods default to doing nothing.
pub trait Observer {
    fn system_fired(&mut self, _event: &DecisionEvent) {}
    fn inquiry_evaluated(&mut self, _unit: &str, _system: &str, _step: &PathStep) {}
    fn statement_applied(&mut self, _unit: &str, _constraint: &AppliedConstraint) {}
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// What a traversal produced, also when it stopped early.
#[derive(Debug, Clone, Default)]
pub struct Traversal {
    pub selection: Vec<SelectionEntry>,
    pub constraints: Vec<AppliedConstraint>,
    pub identifications: Vec<Identification>,
    pub chooser_invocations: usize,
    pub error: Option<GenerationError>,
}

/// Fires systems until none is entered. `on_decision` sees each decision
/// with the statements it contributed; `on_inquiry` sees each evaluation.
fn traverse(
    view: &LanguageView,
    init: &[String],
    entity: &str,
    graph: &SemanticGraph,
    on_inquiry: &mut dyn FnMut(&str, &PathStep),
    on_decision: &mut dyn FnMut(&System, &ChooserOutcome, &[AppliedConstraint]),
) -> Traversal {
    let net = &view.network;
    let mut out = Traversal::default();
    let mut selected: BTreeSet<String> = init.iter().cloned().collect();
    let preselected: BTreeSet<&str> = init.iter().map(String::as_str).collect();

    let mut by_owner: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for f in init {
        if let Some(s) = net.owner(f) {
            let v = by_owner.entry(s.name.as_str()).or_default();
            if !v.contains(f) {
                v.push(f.clone());
            }
        }
    }
    if let Some((system, features)) = by_owner.iter().find(|(_, v)| v.len() > 1) {
        out.error = Some(GenerationError::ContradictoryPreselection {
            system: (*system).to_owned(),
            features: features.clone(),
        });
        out.selection =
            init.iter().map(|f| SelectionEntry { feature: f.clone(), system: None, outcome: None }).collect();
        return out;
    }

    let env = ChooserEnv { entity, graph, inquiries: &view.inquiries };
    let mut fired = BTreeSet::new();
    let mut decisions = Vec::new();
    loop {
        let entered = net.entered_systems(&selected, &fired);
        let Some(&system) = entered.first() else { break };
        out.chooser_invocations += 1;
        let outcome = match system.outputs.iter().find(|o| preselected.contains(o.feature.as_str())) {
            Some(o) => ChooserOutcome {
                feature: o.feature.clone(),
                identifications: Vec::new(),
                path: Vec::new(),
                source: DecisionSource::Preselected,
                warnings: Vec::new(),
            },
            None => {
                let chooser = view.chooser_for(system);
                let name = system.name.as_str();
                match run_chooser(&chooser, system, &env, &mut |step| on_inquiry(name, step)) {
                    Ok(o) => o,
                    Err(error) => {
                        out.error = Some(GenerationError::Chooser { system: system.name.clone(), error });
                        break;
                    }
                }
            }
        };
        let output = system.output(&outcome.feature).expect("chosen feature is an output");
        let applied: Vec<AppliedConstraint> =
            output.realizations.iter().map(|r| AppliedConstraint::new(r, &system.name, &outcome.feature)).collect();
        on_decision(system, &outcome, &applied);
        out.constraints.extend(applied);
        out.identifications.extend(outcome.identifications.iter().cloned());
        selected.insert(outcome.feature.clone());
        fired.insert(system.name.clone());
        decisions.push(SelectionEntry {
            feature: outcome.feature.clone(),
            system: Some(system.name.clone()),
            outcome: Some(outcome),
        });
    }
    let resolved: BTreeSet<&str> = decisions.iter().map(|d| d.feature.as_str()).collect();
    let mut initial: Vec<SelectionEntry> = Vec::new();
    for f in init {
        if !resolved.contains(f.as_str()) && !initial.iter().any(|e| e.feature == *f) {
            initial.push(SelectionEntry { feature: f.clone(), system: None, outcome: None });
        }
    }
    initial.extend(decisions);
    out.selection = initial;
    out
}

/// Traverses one unit from `init` (the root feature plus any preselections).
pub fn traverse_unit(
    view: &LanguageView,
    init: &[String],
    entity: &str,
    graph: &SemanticGraph,
) -> Result<Traversal, GenerationError> {
    let mut t = traverse(view, init, entity, graph, &mut |_, _| {}, &mut |_, _, _| {});
    match t.error.take() {
        Some(e) => Err(e),
        None => Ok(t),
    }
}

/// Bundles and precedence facts built from a unit's constraints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Structure {
    pub bundles: Vec<Bundle>,
    pub precedence: Vec<Precedence>,
    /// (code, message) pairs that make the result partial.
    pub errors: Vec<(String, String)>,
    pub warnings: Vec<(String, String)>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Builds function bundles in three passes: Inserts, then Conflates, then
/// everything that attaches to an existing function.
pub fn apply_realizations(constraints: &[AppliedConstraint]) -> Structure {
    let mut out = Structure::default();
    let mut functions: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut built_by: Vec<Vec<String>> = Vec::new();
    for c in constraints {
        if let Operator::Insert { function } = &c.op {
            match index.get(function) {
                Some(&i) => built_by[i].push(c.statement.clone()),
                None => {
                    index.insert(function.clone(), functions.len());
                    functions.push(function.clone());
                    built_by.push(vec![c.statement.clone()]);
                }
            }
        }
    }
    let n = functions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut conflated_by: Vec<(usize, String)> = Vec::new();
    for c in constraints {
        if let Operator::Conflate { function, with } = &c.op {
            let (Some(&a), Some(&b)) = (index.get(function), index.get(with)) else {
                let missing = if index.contains_key(function) { with } else { function };
                out.errors.push((
                    "CONFLATE-UNKNOWN-FUNCTION".into(),
                    format!("statement `{}` conflates `{missing}`, which was never inserted", c.statement),
                ));
                continue;
            };
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
            conflated_by.push((a, c.statement.clone()));
        }
    }
    // Bundles are numbered by their earliest inserted function.
    let mut bundle_of = vec![0; n];
    let mut roots: Vec<usize> = Vec::new();
    for f in 0..n {
        let r = find(&mut parent, f);
        let slot = match roots.iter().position(|&x| x == r) {
            Some(p) => p,
            None => {
                roots.push(r);
                out.bundles.push(Bundle {
                    functions: Vec::new(),
                    entity: String::new(),
                    built_by: Vec::new(),
                    preselections: Vec::new(),
                    preselected_by: Vec::new(),
                    lexical: Vec::new(),
                    filler: Filler::Covert,
                });
                roots.len() - 1
            }
        };
        bundle_of[f] = slot;
        out.bundles[slot].functions.push(functions[f].clone());
        out.bundles[slot].built_by.extend(built_by[f].iter().cloned());
    }
    for (f, statement) in conflated_by {
        out.bundles[bundle_of[f]].built_by.push(statement);
    }
    let locate = |f: &str| index.get(f).map(|&i| bundle_of[i]);

    for c in constraints {
        let unknown = |f: &str| {
            (
                "UNKNOWN-FUNCTION".to_string(),
                format!("statement `{}` refers to `{f}`, which was never inserted", c.statement),
            )
        };
        match &c.op {
            Operator::Insert { .. } | Operator::Conflate { .. } => {}
            Operator::Order { before, after } => match (locate(before), locate(after)) {
                (Some(a), Some(b)) => {
                    out.precedence.push(Precedence { before: a, after: b, statement: c.statement.clone() })
                }
                (None, _) => out.warnings.push(unknown(before)),
                (_, None) => out.warnings.push(unknown(after)),
            },
            Operator::OrderAtFront { function } | Operator::OrderAtEnd { function } => {
                let Some(a) = locate(function) else {
                    out.warnings.push(unknown(function));
                    continue;
                };
                let front = matches!(c.op, Operator::OrderAtFront { .. });
                for b in (0..out.bundles.len()).filter(|&b| b != a) {
                    let (before, after) = if front { (a, b) } else { (b, a) };
                    out.precedence.push(Precedence { before, after, statement: c.statement.clone() });
                }
            }
            Operator::Preselect { function, features } => {
                let Some(a) = locate(function) else {
                    out.warnings.push(unknown(function));
                    continue;
                };
                let b = &mut out.bundles[a];
                for f in features {
                    if !b.preselections.contains(f) {
                        b.preselections.push(f.clone());
                    }
                }
                b.preselected_by.push(c.statement.clone());
            }
            Operator::Classify { function, .. }
            | Operator::OutClassify { function, .. }
            | Operator::Lexify { function, .. } => {
                let Some(a) = locate(function) else {
                    out.warnings.push(unknown(function));
                    continue;
                };
                out.bundles[a].lexical.push(c.statement.clone());
            }
        }
    }
    out
}

/// Rebuilds a unit's bundles and order from its selection expression alone,
/// without consulting any chooser.
pub fn structure_from_selection(view: &LanguageView, selection: &[SelectionEntry]) -> (Structure, Vec<usize>) {
    let mut constraints = Vec::new();
    for e in selection {
        let Some(system) = e.system.as_deref().and_then(|s| view.network.system(s)) else {
            continue;
        };
        if let Some(o) = system.output(&e.feature) {
            constraints.extend(o.realizations.iter().map(|r| AppliedConstraint::new(r, &system.name, &e.feature)));
        }
    }
    let s = apply_realizations(&constraints);
    let order = linearize(s.bundles.len(), &s.precedence).unwrap_or_else(|c| c.fallback);
    (s, order)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderCycle {
    /// Bundle indices of a shortest cycle, starting at its smallest member.
    pub cycle: Vec<usize>,
    /// Insertion order, used when the result is returned partially.
    pub fallback: Vec<usize>,
}

/// Topological sort of precedence facts; ties go to the earlier bundle.
pub fn linearize(n: usize, precedence: &[Precedence]) -> Result<Vec<usize>, OrderCycle> {
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for p in precedence {
        succ[p.before].push(p.after);
        indeg[p.after] += 1;
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    let stuck: BTreeSet<usize> = (0..n).filter(|i| !order.contains(i)).collect();
    let mut best: Option<Vec<usize>> = None;
    for &start in &stuck {
        // Shortest path from each successor of `start` back to `start`.
        let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        queue.push_back(start);
        let mut found = false;
        while let Some(v) = queue.pop_front() {
            for &w in &succ[v] {
                if w == start {
                    prev.insert(start, v);
                    found = true;
                    break;
                }
                if stuck.contains(&w) && !prev.contains_key(&w) && w != start {
                    prev.insert(w, v);
                    queue.push_back(w);
                }
            }
            if found {
                break;
            }
        }
        if !found {
            continue;
        }
        let mut cycle = vec![start];
        let mut v = prev[&start];
        while v != start {
            cycle.push(v);
            v = prev[&v];
        }
        cycle[1..].reverse();
        if best.as_ref().is_none_or(|b| cycle.len() < b.len()) {
            best = Some(cycle);
        }
    }
    Err(OrderCycle { cycle: best.unwrap_or_default(), fallback: (0..n).collect() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoCandidate;

/// Lexify wins outright. Otherwise candidates carry every Classify class and
/// no OutClassify class, the entity type must name the lexeme, and the
/// lexicographically first name wins.
pub fn select_lexeme<'a>(
    lexemes: &'a BTreeMap<String, Lexeme>,
    constraints: &[&Operator],
    entity_type: Option<&str>,
) -> Result<&'a Lexeme, NoCandidate> {
    for op in constraints {
        if let Operator::Lexify { lexeme, .. } = op {
            return lexemes.get(lexeme).ok_or(NoCandidate);
        }
    }
    let mut required = BTreeSet::new();
    let mut excluded = BTreeSet::new();
    for op in constraints {
        match op {
            Operator::Classify { class, .. } => {
                required.insert(class.as_str());
            }
            Operator::OutClassify { class, .. } => {
                excluded.insert(class.as_str());
            }
            _ => {}
        }
    }
    if required.is_empty() {
        return Err(NoCandidate);
    }
    lexemes
        .values()
        .filter(|l| required.iter().all(|c| l.classes.contains(*c)))
        .filter(|l| !excluded.iter().any(|c| l.classes.contains(*c)))
        .find(|l| entity_type.is_none_or(|t| l.name == t))
        .ok_or(NoCandidate)
}

/// The form keyed by the largest subset of `morph`; the base form otherwise.
pub fn inflect(lexeme: &Lexeme, morph: &BTreeSet<String>) -> String {
    let mut best: Option<&crate::network::Form> = None;
    for f in &lexeme.forms {
        if f.features.is_subset(morph) && best.is_none_or(|b| f.features.len() > b.features.len()) {
            best = Some(f);
        }
    }
    best.map_or_else(|| lexeme.spelling.clone(), |f| f.form.clone())
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

struct Cycle<'a> {
    view: &'a LanguageView,
    graph: &'a SemanticGraph,
    observer: &'a mut dyn Observer,
    units: Vec<UnitRecord>,
    tokens: Vec<Token>,
    events: Vec<DecisionEvent>,
    issues: Vec<Issue>,
    warnings: Vec<Issue>,
    stats: Stats,
}

impl Cycle<'_> {
    fn unit(&mut self, path: String, init: Vec<String>, entity: String, parent: Option<BundleRef>, depth: usize) {
        let idx = self.units.len();
        let id = format!("u{idx}");
        let mut fired = 0;
        let t = {
            let events = &mut self.events;
            let observer = &mut *self.observer;
            let (uid, upath) = (id.clone(), path.clone());
            let inquiries: RefCell<Vec<(String, PathStep)>> = RefCell::new(Vec::new());
            let t = traverse(
                self.view,
                &init,
                &entity,
                self.graph,
                &mut |system, step| inquiries.borrow_mut().push((system.to_owned(), step.clone())),
                &mut |system, outcome, applied| {
                    fired += 1;
                    for (s, step) in inquiries.borrow_mut().drain(..) {
                        observer.inquiry_evaluated(&uid, &s, &step);
                    }
                    let event = DecisionEvent {
                        seq: events.len(),
                        unit: uid.clone(),
                        unit_path: upath.clone(),
                        system: system.name.clone(),
                        feature: outcome.feature.clone(),
                        path: outcome.path.clone(),
                        constraints: applied.iter().map(|c| c.statement.clone()).collect(),
                        source: outcome.source,
                    };
                    observer.system_fired(&event);
                    for c in applied {
                        observer.statement_applied(&uid, c);
                    }
                    events.push(event);
                },
            );
            for (s, step) in inquiries.into_inner() {
                observer.inquiry_evaluated(&uid, &s, &step);
            }
            t
        };
        self.stats.chooser_invocations += t.chooser_invocations;
        self.stats.fired_systems += fired;
        if let Some(e) = &t.error {
            self.issues.push(Issue { code: e.code().into(), unit: id.clone(), message: e.to_string() });
        }
        for e in &t.selection {
            for w in e.outcome.iter().flat_map(|o| &o.warnings) {
                self.warnings.push(Issue { code: "IDENTIFY-FALLBACK".into(), unit: id.clone(), message: w.clone() });
            }
        }

        let mut s = apply_realizations(&t.constraints);
        for (code, message) in s.errors.drain(..) {
            self.issues.push(Issue { code, unit: id.clone(), message });
        }
        for (code, message) in s.warnings.drain(..) {
            self.warnings.push(Issue { code, unit: id.clone(), message });
        }
        for b in &mut s.bundles {
            b.entity = t
                .identifications
                .iter()
                .find(|i| b.has_function(&i.function))
                .map_or_else(|| entity.clone(), |i| i.entity.clone());
        }
        let order = match linearize(s.bundles.len(), &s.precedence) {
            Ok(o) => o,
            Err(c) => {
                let names: Vec<&str> = c.cycle.iter().map(|&b| s.bundles[b].label()).collect();
                self.issues.push(Issue {
                    code: "ORDER-CYCLE".into(),
                    unit: id.clone(),
                    message: format!("ordering constraints form a cycle: {}", names.join(" < ")),
                });
                c.fallback
            }
        };
        self.units.push(UnitRecord {
            id: id.clone(),
            path: path.clone(),
            entity,
            parent,
            selection: t.selection,
            constraints: t.constraints,
            bundles: s.bundles,
            precedence: s.precedence,
            order: order.clone(),
        });

        for b in order {
            let bundle = &self.units[idx].bundles[b];
            let here = BundleRef { unit: idx, bundle: b };
            if !bundle.preselections.is_empty() {
                if depth + 1 >= MAX_DEPTH {
                    self.issues.push(Issue {
                        code: "DEPTH-LIMIT".into(),
                        unit: id.clone(),
                        message: format!("`{}` would nest deeper than {MAX_DEPTH} units", bundle.label()),
                    });
                    self.missing(here, "DEPTH-LIMIT");
                    continue;
                }
                let mut init = vec![self.view.network.root_feature.clone()];
                for f in &bundle.preselections {
                    if !init.contains(f) {
                        init.push(f.clone());
                    }
                }
                let child_path = format!("{path}/{}", bundle.label());
                let child_entity = bundle.entity.clone();
                let child_id = format!("u{}", self.units.len());
                self.units[idx].bundles[b].filler = Filler::Unit { unit: child_id };
                self.unit(child_path, init, child_entity, Some(here), depth + 1);
            } else if !bundle.lexical.is_empty() {
                self.lexical(here);
            }
        }
    }

    fn missing(&mut self, at: BundleRef, reason: &str) {
        let b = &mut self.units[at.unit].bundles[at.bundle];
        b.filler = Filler::Missing { reason: reason.to_owned() };
        self.tokens.push(Token {
            text: format!("⟨{}⟩", b.label()),
            unit: at.unit,
            bundle: at.bundle,
            lexeme: None,
            placeholder: true,
        });
    }

    fn lexical(&mut self, at: BundleRef) {
        let unit = &self.units[at.unit];
        let bundle = &unit.bundles[at.bundle];
        let ops: Vec<&Operator> = bundle.lexical.iter().filter_map(|id| unit.constraint(id).map(|c| &c.op)).collect();
        let entity_type = self.graph.entity(&bundle.entity).map(|e| e.kind.as_str());
        let chosen = select_lexeme(&self.view.lexemes, &ops, entity_type);
        let Ok(lexeme) = chosen else {
            let message = format!(
                "no lexeme satisfies the constraints on `{}` (entity `{}`)",
                bundle.functions.join("/"),
                bundle.entity
            );
            self.issues.push(Issue { code: "NO-CANDIDATE".into(), unit: unit.id.clone(), message });
            self.missing(at, "NO-CANDIDATE");
            return;
        };
        let mut morph = BTreeSet::new();
        for rule in &self.view.morphology {
            if unit.has_feature(&rule.feature) && bundle.has_function(&rule.function) {
                morph.extend(rule.morph.iter().cloned());
            }
        }
        let form = inflect(lexeme, &morph);
        let name = lexeme.name.clone();
        self.units[at.unit].bundles[at.bundle].filler =
            Filler::Lexical { lexeme: name.clone(), morph, form: form.clone() };
        self.tokens.push(Token {
            text: form,
            unit: at.unit,
            bundle: at.bundle,
            lexeme: Some(name),
            placeholder: false,
        });
    }
}

fn adjacencies(result: &GenerationResult) -> Vec<Adjacency> {
    let mut out = Vec::new();
    for left in 0..result.tokens.len().saturating_sub(1) {
        let right = left + 1;
        let (a, b) = (result.token_chain(left), result.token_chain(right));
        let Some(level) = a.iter().zip(&b).position(|(x, y)| x != y) else {
            continue;
        };
        let (x, y) = (a[level], b[level]);
        let unit = &result.units[x.unit];
        let n = unit.bundles.len();
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for p in &unit.precedence {
            succ[p.before].push(p.after);
            pred[p.after].push(p.before);
        }
        let from_x = reachable(&succ, x.bundle);
        let to_y = reachable(&pred, y.bundle);
        let mut ordered_by: Vec<String> = Vec::new();
        for p in &unit.precedence {
            if from_x.contains(&p.before) && to_y.contains(&p.after) && !ordered_by.contains(&p.statement) {
                ordered_by.push(p.statement.clone());
            }
        }
        let inserted_by = if ordered_by.is_empty() {
            unit.bundles[x.bundle].built_by.iter().chain(&unit.bundles[y.bundle].built_by).cloned().collect()
        } else {
            Vec::new()
        };
        out.push(Adjacency { left, right, unit: x.unit, before: x.bundle, after: y.bundle, ordered_by, inserted_by });
    }
    out
}

fn reachable(edges: &[Vec<usize>], start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if seen.insert(v) {
            stack.extend(edges[v].iter().copied());
        }
    }
    seen
}

/// Generates from the root entity of `graph`. Resource gaps never abort:
/// they produce a partial result carrying everything built so far.
pub fn generate(view: &LanguageView, graph: &SemanticGraph) -> GenerationResult {
    generate_observed(view, graph, &mut NoObserver)
}

pub fn generate_observed(view: &LanguageView, graph: &SemanticGraph, observer: &mut dyn Observer) -> GenerationResult {
    let mut cycle = Cycle {
        view,
        graph,
        observer,
        units: Vec::new(),
        tokens: Vec::new(),
        events: Vec::new(),
        issues: Vec::new(),
        warnings: Vec::new(),
        stats: Stats::default(),
    };
    cycle.unit("root".into(), vec![view.network.root_feature.clone()], graph.root.clone(), None, 0);
    debug_assert!(cycle.stats.chooser_invocations >= cycle.stats.fired_systems);

    let mark = view
        .punctuation
        .iter()
        .find(|p| cycle.units[0].has_feature(&p.feature))
        .map_or(DEFAULT_MARK, |p| p.mark.as_str())
        .to_owned();
    if let Some(first) = cycle.tokens.first_mut() {
        first.text = capitalize(&first.text);
    }
    let words: Vec<&str> = cycle.tokens.iter().map(|t| t.text.as_str()).collect();
    let string = format!("{}{mark}", words.join(" "));
    let status = match cycle.issues.first() {
        None => Status::Complete,
        Some(i) => Status::Partial { reason: i.code.clone(), detail: i.message.clone() },
    };
    let mut result = GenerationResult {
        string,
        language: view.language.clone(),
        resource_version: String::new(),
        tokens: core::mem::take(&mut cycle.tokens),
        adjacencies: Vec::new(),
        units: core::mem::take(&mut cycle.units),
        status,
        issues: core::mem::take(&mut cycle.issues),
        warnings: core::mem::take(&mut cycle.warnings),
        events: core::mem::take(&mut cycle.events),
        stats: cycle.stats,
    };
    result.adjacencies = adjacencies(&result);
    result
}
