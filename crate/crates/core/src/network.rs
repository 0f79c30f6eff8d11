//! The type lattice: systems, features, entry conditions, realization
//! statements and lexemes, plus static validation and subgraph queries.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::resources::Languages;

/// Boolean expression over feature names. There is no negation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntryCondition {
    True,
    Feature(String),
    And(Vec<EntryCondition>),
    Or(Vec<EntryCondition>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ConditionRepr {
    Const(bool),
    Leaf(String),
    And { and: Vec<ConditionRepr> },
    Or { or: Vec<ConditionRepr> },
}

impl From<&EntryCondition> for ConditionRepr {
    fn from(c: &EntryCondition) -> Self {
        match c {
            EntryCondition::True => ConditionRepr::Const(true),
            EntryCondition::Feature(f) => ConditionRepr::Leaf(f.clone()),
            EntryCondition::And(xs) => ConditionRepr::And { and: xs.iter().map(Into::into).collect() },
            EntryCondition::Or(xs) => ConditionRepr::Or { or: xs.iter().map(Into::into).collect() },
        }
    }
}

impl TryFrom<ConditionRepr> for EntryCondition {
    type Error = &'static str;

    fn try_from(r: ConditionRepr) -> Result<Self, Self::Error> {
        Ok(match r {
            ConditionRepr::Const(true) => EntryCondition::True,
            ConditionRepr::Const(false) => return Err("entry condition `false` can never be satisfied"),
            ConditionRepr::Leaf(f) => EntryCondition::Feature(f),
            ConditionRepr::And { and } => {
                EntryCondition::And(and.into_iter().map(TryInto::try_into).collect::<Result<_, _>>()?)
            }
            ConditionRepr::Or { or } => {
                EntryCondition::Or(or.into_iter().map(TryInto::try_into).collect::<Result<_, _>>()?)
            }
        })
    }
}

impl Serialize for EntryCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ConditionRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for EntryCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ConditionRepr::deserialize(d)?;
        EntryCondition::try_from(repr).map_err(serde::de::Error::custom)
    }
}

impl EntryCondition {
    pub fn feature(name: &str) -> Self {
        EntryCondition::Feature(name.to_owned())
    }

    pub fn and<I: IntoIterator<Item = EntryCondition>>(xs: I) -> Self {
        EntryCondition::And(xs.into_iter().collect())
    }

    pub fn or<I: IntoIterator<Item = EntryCondition>>(xs: I) -> Self {
        EntryCondition::Or(xs.into_iter().collect())
    }

    /// Standard AND/OR evaluation; a leaf holds iff the feature is selected.
    pub fn eval(&self, selected: &BTreeSet<String>) -> bool {
        match self {
            EntryCondition::True => true,
            EntryCondition::Feature(f) => selected.contains(f),
            EntryCondition::And(xs) => xs.iter().all(|x| x.eval(selected)),
            EntryCondition::Or(xs) => xs.iter().any(|x| x.eval(selected)),
        }
    }

    /// Every leaf occurrence, left to right. Repeated leaves are repeated.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            EntryCondition::True => {}
            EntryCondition::Feature(f) => out.push(f),
            EntryCondition::And(xs) | EntryCondition::Or(xs) => {
                for x in xs {
                    x.collect_leaves(out);
                }
            }
        }
    }

    /// Disjunctive normal form: sorted, deduplicated conjunctions.
    /// `None` stands for the constant TRUE.
    fn dnf(&self) -> Option<BTreeSet<BTreeSet<String>>> {
        match self {
            EntryCondition::True => None,
            EntryCondition::Feature(f) => {
                let mut conj = BTreeSet::new();
                conj.insert(f.clone());
                let mut d = BTreeSet::new();
                d.insert(conj);
                Some(d)
            }
            EntryCondition::Or(xs) => {
                let mut d = BTreeSet::new();
                for x in xs {
                    {
                        let sub = x.dnf()?;
                        d.extend(sub)
                    }
                }
                Some(d)
            }
            EntryCondition::And(xs) => {
                // The empty conjunction is TRUE.
                let mut acc: Option<BTreeSet<BTreeSet<String>>> = None;
                for x in xs {
                    let Some(sub) = x.dnf() else { continue };
                    acc = Some(match acc {
                        None => sub,
                        Some(prev) => {
                            let mut next = BTreeSet::new();
                            for a in &prev {
                                for b in &sub {
                                    next.insert(a.union(b).cloned().collect());
                                }
                            }
                            next
                        }
                    });
                }
                acc
            }
        }
    }

    /// Canonical form: a disjunction of conjunctions with sorted operands.
    pub fn normalized(&self) -> EntryCondition {
        let Some(dnf) = self.dnf() else {
            return EntryCondition::True;
        };
        let mut disjuncts: Vec<EntryCondition> = dnf
            .into_iter()
            .map(|conj| {
                let mut leaves: Vec<EntryCondition> = conj.into_iter().map(EntryCondition::Feature).collect();
                if leaves.len() == 1 {
                    leaves.pop().unwrap()
                } else {
                    EntryCondition::And(leaves)
                }
            })
            .collect();
        if disjuncts.len() == 1 {
            disjuncts.pop().unwrap()
        } else {
            EntryCondition::Or(disjuncts)
        }
    }
}

impl fmt::Display for EntryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, xs: &[EntryCondition], op: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{x}")?;
            }
            f.write_str(")")
        }
        match self {
            EntryCondition::True => f.write_str("TRUE"),
            EntryCondition::Feature(x) => f.write_str(x),
            EntryCondition::And(xs) => join(f, xs, "&"),
            EntryCondition::Or(xs) => join(f, xs, "|"),
        }
    }
}

/// The nine structural operators a feature can carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Operator {
    Insert { function: String },
    Conflate { function: String, with: String },
    Order { before: String, after: String },
    OrderAtFront { function: String },
    OrderAtEnd { function: String },
    Preselect { function: String, features: Vec<String> },
    Classify { function: String, class: String },
    OutClassify { function: String, class: String },
    Lexify { function: String, lexeme: String },
}

impl Operator {
    /// Grammatical functions the statement mentions, in argument order.
    pub fn functions(&self) -> Vec<&str> {
        match self {
            Operator::Insert { function }
            | Operator::OrderAtFront { function }
            | Operator::OrderAtEnd { function }
            | Operator::Preselect { function, .. }
            | Operator::Classify { function, .. }
            | Operator::OutClassify { function, .. }
            | Operator::Lexify { function, .. } => vec![function.as_str()],
            Operator::Conflate { function, with } => vec![function.as_str(), with.as_str()],
            Operator::Order { before, after } => vec![before.as_str(), after.as_str()],
        }
    }

    pub fn is_lexical(&self) -> bool {
        matches!(self, Operator::Classify { .. } | Operator::OutClassify { .. } | Operator::Lexify { .. })
    }

    pub fn is_ordering(&self) -> bool {
        matches!(self, Operator::Order { .. } | Operator::OrderAtFront { .. } | Operator::OrderAtEnd { .. })
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Insert { function } => write!(f, "+{function}"),
            Operator::Conflate { function, with } => write!(f, "{function}/{with}"),
            Operator::Order { before, after } => write!(f, "{before}^{after}"),
            Operator::OrderAtFront { function } => write!(f, "#^{function}"),
            Operator::OrderAtEnd { function } => write!(f, "{function}^#"),
            Operator::Preselect { function, features } => {
                write!(f, "{function}:{}", features.join(","))
            }
            Operator::Classify { function, class } => write!(f, "{function}:{class}"),
            Operator::OutClassify { function, class } => write!(f, "{function}:!{class}"),
            Operator::Lexify { function, lexeme } => write!(f, "{function}!{lexeme}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realization {
    pub id: String,
    #[serde(flatten)]
    pub op: Operator,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

impl Realization {
    pub fn new(id: &str, op: Operator) -> Self {
        Realization { id: id.to_owned(), op, languages: Languages::default() }
    }
}

/// One alternative of a system with the statements it contributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFeature {
    pub feature: String,
    #[serde(default)]
    pub realizations: Vec<Realization>,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

impl OutputFeature {
    pub fn new(feature: &str, realizations: Vec<Realization>) -> Self {
        OutputFeature { feature: feature.to_owned(), realizations, languages: Languages::default() }
    }
}

/// A disjunction of the lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct System {
    pub name: String,
    pub entry: EntryCondition,
    pub outputs: Vec<OutputFeature>,
    #[serde(default)]
    pub region: String,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chooser: Option<String>,
}

impl System {
    pub fn output(&self, feature: &str) -> Option<&OutputFeature> {
        self.outputs.iter().find(|o| o.feature == feature)
    }

    pub fn has_output(&self, feature: &str) -> bool {
        self.output(feature).is_some()
    }

    /// Features referenced by Preselect statements anywhere in the system.
    pub fn preselect_targets(&self) -> impl Iterator<Item = &str> {
        self.outputs.iter().flat_map(|o| {
            o.realizations.iter().flat_map(|r| match &r.op {
                Operator::Preselect { features, .. } => features.iter().map(String::as_str).collect(),
                _ => Vec::new(),
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Form {
    #[serde(default)]
    pub features: BTreeSet<String>,
    pub form: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexeme {
    pub name: String,
    pub spelling: String,
    #[serde(default)]
    pub classes: BTreeSet<String>,
    #[serde(default)]
    pub forms: Vec<Form>,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

impl Lexeme {
    pub fn base_form(&self) -> Option<&str> {
        self.forms.iter().find(|f| f.features.is_empty()).map(|f| f.form.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub object: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&mut self, code: &str, object: &str, message: String) {
        self.errors.push(Diagnostic { code: code.to_owned(), object: object.to_owned(), message });
    }

    pub fn warn(&mut self, code: &str, object: &str, message: String) {
        self.warnings.push(Diagnostic { code: code.to_owned(), object: object.to_owned(), message });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.errors.iter().any(|d| d.code == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetworkError {
    UnknownSystem(String),
    UnknownFocus(String),
}

impl NetworkError {
    pub fn code(&self) -> &'static str {
        match self {
            NetworkError::UnknownSystem(_) => "UNKNOWN-SYSTEM",
            NetworkError::UnknownFocus(_) => "UNKNOWN-FOCUS",
        }
    }
}

impl fmt::Display for NetworkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkError::UnknownSystem(s) => write!(f, "{}: no system named `{s}`", self.code()),
            NetworkError::UnknownFocus(s) => {
                write!(f, "{}: `{s}` is neither a system nor a feature", self.code())
            }
        }
    }
}

impl core::error::Error for NetworkError {}

/// A single-language view of the lattice with derived indexes.
///
/// Construction never fails; problems are reported by [`validate_network`].
#[derive(Debug, Clone)]
pub struct SystemNetwork {
    pub root_feature: String,
    systems: Vec<System>,
    by_name: BTreeMap<String, usize>,
    owner: BTreeMap<String, usize>,
    /// Position of each system in the traversal order.
    rank: Vec<usize>,
    /// Systems whose entry condition mentions a feature of the indexed system.
    dependents: Vec<BTreeSet<usize>>,
    /// Systems owning features mentioned by the indexed system's entry condition.
    dependencies: Vec<BTreeSet<usize>>,
}

impl SystemNetwork {
    pub fn new(root_feature: &str, systems: Vec<System>) -> Self {
        let mut by_name = BTreeMap::new();
        let mut owner = BTreeMap::new();
        for (i, s) in systems.iter().enumerate() {
            by_name.entry(s.name.clone()).or_insert(i);
            for o in &s.outputs {
                owner.entry(o.feature.clone()).or_insert(i);
            }
        }
        let n = systems.len();
        let mut dependents = vec![BTreeSet::new(); n];
        let mut dependencies = vec![BTreeSet::new(); n];
        for (i, s) in systems.iter().enumerate() {
            for leaf in s.entry.leaves() {
                if let Some(&j) = owner.get(leaf) {
                    dependencies[i].insert(j);
                    dependents[j].insert(i);
                }
            }
        }
        let mut net = SystemNetwork {
            root_feature: root_feature.to_owned(),
            systems,
            by_name,
            owner,
            rank: Vec::new(),
            dependents,
            dependencies,
        };
        let order = net.topological_order().unwrap_or_else(|partial| partial);
        let mut rank = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos;
        }
        net.rank = rank;
        net
    }

    pub fn systems(&self) -> &[System] {
        &self.systems
    }

    pub fn system(&self, name: &str) -> Option<&System> {
        self.by_name.get(name).map(|&i| &self.systems[i])
    }

    /// The system owning a feature.
    pub fn owner(&self, feature: &str) -> Option<&System> {
        self.owner.get(feature).map(|&i| &self.systems[i])
    }

    pub fn has_feature(&self, feature: &str) -> bool {
        feature == self.root_feature || self.owner.contains_key(feature)
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.systems.iter().flat_map(|s| s.outputs.iter().map(|o| o.feature.as_str()))
    }

    /// Kahn's algorithm over the system dependency graph, smallest name first
    /// among ready systems. On a cycle, `Err` carries the acyclic prefix
    /// followed by the remaining systems in name order.
    pub fn topological_order(&self) -> Result<Vec<usize>, Vec<usize>> {
        let n = self.systems.len();
        let mut indeg: Vec<usize> = self.dependencies.iter().map(BTreeSet::len).collect();
        let mut heap = BinaryHeap::new();
        for (i, &d) in indeg.iter().enumerate() {
            if d == 0 {
                heap.push(Reverse((self.systems[i].name.as_str(), i)));
            }
        }
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse((_, i))) = heap.pop() {
            order.push(i);
            for &j in &self.dependents[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    heap.push(Reverse((self.systems[j].name.as_str(), j)));
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            let placed: BTreeSet<usize> = order.iter().copied().collect();
            let mut rest: Vec<usize> = (0..n).filter(|i| !placed.contains(i)).collect();
            rest.sort_by(|&a, &b| self.systems[a].name.cmp(&self.systems[b].name));
            order.extend(rest);
            Err(order)
        }
    }

    /// Systems whose entry condition holds over `selected` and that have not
    /// fired yet, in traversal order. Nothing is entered before the root
    /// feature has been selected.
    pub fn entered_systems(&self, selected: &BTreeSet<String>, fired: &BTreeSet<String>) -> Vec<&System> {
        if !selected.contains(&self.root_feature) {
            return Vec::new();
        }
        let mut hits: Vec<usize> = self
            .systems
            .iter()
            .enumerate()
            .filter(|(_, s)| !fired.contains(&s.name) && s.entry.eval(selected))
            .map(|(i, _)| i)
            .collect();
        hits.sort_by_key(|&i| self.rank[i]);
        hits.into_iter().map(|i| &self.systems[i]).collect()
    }

    /// The entry condition of a system in canonical normal form.
    pub fn paradigmatic_context(&self, system: &str) -> Result<EntryCondition, NetworkError> {
        self.system(system).map(|s| s.entry.normalized()).ok_or_else(|| NetworkError::UnknownSystem(system.to_owned()))
    }

    /// Systems within `radius` dependency hops of a system or feature.
    /// `usize::MAX` yields the whole connected component.
    pub fn lattice_subgraph(&self, focus: &str, radius: usize) -> Result<Fragment, NetworkError> {
        let mut dist: BTreeMap<usize, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        if let Some(&i) = self.by_name.get(focus) {
            dist.insert(i, 0);
            queue.push_back(i);
        } else if let Some(&i) = self.owner.get(focus) {
            // A feature's immediate neighbourhood is its own system, the
            // systems that mention it, and the systems its system depends on.
            dist.insert(i, 0);
            if radius > 0 {
                let mut first: BTreeSet<usize> = self.dependencies[i].clone();
                for (j, s) in self.systems.iter().enumerate() {
                    if s.entry.leaves().contains(&focus) {
                        first.insert(j);
                    }
                }
                for j in first {
                    if let alloc::collections::btree_map::Entry::Vacant(e) = dist.entry(j) {
                        e.insert(1);
                        queue.push_back(j);
                    }
                }
            }
        } else {
            return Err(NetworkError::UnknownFocus(focus.to_owned()));
        }
        while let Some(i) = queue.pop_front() {
            let d = dist[&i];
            if d >= radius {
                continue;
            }
            for &j in self.dependencies[i].iter().chain(self.dependents[i].iter()) {
                if let alloc::collections::btree_map::Entry::Vacant(e) = dist.entry(j) {
                    e.insert(d + 1);
                    queue.push_back(j);
                }
            }
        }
        let mut members: Vec<usize> = dist.keys().copied().collect();
        members.sort_by_key(|&i| self.rank[i]);
        Ok(self.fragment(members))
    }

    /// Builds a fragment from system indices, annotating every referenced
    /// feature that lives outside it.
    pub fn fragment(&self, members: Vec<usize>) -> Fragment {
        let inside: BTreeSet<usize> = members.iter().copied().collect();
        let mut external = BTreeMap::new();
        for &i in &members {
            let s = &self.systems[i];
            let refs = s
                .entry
                .leaves()
                .into_iter()
                .map(|f| (f, PointerKind::Entry))
                .chain(s.preselect_targets().map(|f| (f, PointerKind::Preselect)));
            for (f, kind) in refs {
                if let Some(&j) = self.owner.get(f) {
                    if !inside.contains(&j) {
                        external.entry((f.to_owned(), kind)).or_insert_with(|| ExternalPointer {
                            feature: f.to_owned(),
                            system: self.systems[j].name.clone(),
                            region: self.systems[j].region.clone(),
                            kind,
                        });
                    }
                }
            }
        }
        Fragment {
            systems: members.iter().map(|&i| self.systems[i].clone()).collect(),
            external: external.into_values().collect(),
        }
    }

    fn satisfiable_within(&self, cond: &EntryCondition, reach: &BTreeSet<String>) -> bool {
        let Some(dnf) = cond.dnf() else { return true };
        dnf.iter().any(|conj| {
            let mut owners = BTreeSet::new();
            conj.iter().all(|f| reach.contains(f) && self.owner.get(f).is_none_or(|&o| owners.insert(o)))
        })
    }

    pub(crate) fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointerKind {
    Entry,
    Preselect,
}

/// A reference from inside a fragment to a feature owned outside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalPointer {
    pub feature: String,
    pub system: String,
    pub region: String,
    pub kind: PointerKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub systems: Vec<System>,
    pub external: Vec<ExternalPointer>,
}

impl Fragment {
    pub fn system_names(&self) -> BTreeSet<&str> {
        self.systems.iter().map(|s| s.name.as_str()).collect()
    }
}

/// Checks every network invariant.
///
/// Checks run in three stages: structure and references, then cycles, then
/// root and reachability. A stage only runs when the previous one found no
/// errors, so a single defect yields a single error instead of a cascade.
pub fn validate_network(net: &SystemNetwork, lexicon: &[Lexeme]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let lexemes: BTreeSet<&str> = lexicon.iter().map(|l| l.name.as_str()).collect();

    let mut seen_systems = BTreeSet::new();
    let mut seen_features: BTreeMap<&str, &str> = BTreeMap::new();
    let mut seen_statements: BTreeMap<&str, &str> = BTreeMap::new();
    for s in net.systems() {
        if !seen_systems.insert(s.name.as_str()) {
            report.error("DUPLICATE-SYSTEM", &s.name, format!("system `{}` is defined twice", s.name));
        }
        if s.outputs.is_empty() {
            report.error("EMPTY-OUTPUTS", &s.name, format!("system `{}` has no output features", s.name));
        }
        for o in &s.outputs {
            if o.feature == net.root_feature {
                report.error(
                    "DUPLICATE-FEATURE",
                    &o.feature,
                    format!("root feature `{}` cannot be an output of `{}`", o.feature, s.name),
                );
            }
            if let Some(prev) = seen_features.insert(o.feature.as_str(), s.name.as_str()) {
                report.error(
                    "DUPLICATE-FEATURE",
                    &o.feature,
                    format!("feature `{}` is an output of both `{prev}` and `{}`", o.feature, s.name),
                );
            }
            if !o.languages.is_inherited() && !s.languages.is_inherited() && !s.languages.contains_all(&o.languages) {
                report.error(
                    "LANGUAGE-SUPERSET",
                    &o.feature,
                    format!("feature `{}` claims languages outside its system `{}`", o.feature, s.name),
                );
            }
            for r in &o.realizations {
                if let Some(prev) = seen_statements.insert(r.id.as_str(), o.feature.as_str()) {
                    report.error(
                        "DUPLICATE-STATEMENT-ID",
                        &r.id,
                        format!("statement id `{}` used by `{prev}` and `{}`", r.id, o.feature),
                    );
                }
            }
        }
    }
    for s in net.systems() {
        for leaf in s.entry.leaves() {
            if !net.has_feature(leaf) {
                report.error(
                    "DANGLING-REF",
                    &s.name,
                    format!("entry condition of `{}` mentions unknown feature `{leaf}`", s.name),
                );
            }
        }
        for o in &s.outputs {
            for r in &o.realizations {
                match &r.op {
                    Operator::Preselect { features, .. } => {
                        for f in features {
                            if !net.has_feature(f) {
                                report.error(
                                    "DANGLING-REF",
                                    &r.id,
                                    format!("statement `{}` preselects unknown feature `{f}`", r.id),
                                );
                            }
                        }
                    }
                    Operator::Lexify { lexeme, .. } if !lexemes.contains(lexeme.as_str()) => {
                        report.error(
                            "DANGLING-REF",
                            &r.id,
                            format!("statement `{}` lexifies unknown lexeme `{lexeme}`", r.id),
                        );
                    }
                    _ => {}
                }
            }
        }
    }
    for l in lexicon {
        if l.base_form().is_none() {
            report.error("MISSING-BASE-FORM", &l.name, format!("lexeme `{}` has no base form", l.name));
        }
    }
    if !report.is_ok() {
        return report;
    }

    if net.topological_order().is_err() {
        for cycle in dependency_cycles(net) {
            let names: Vec<&str> = cycle.iter().map(|&i| net.systems[i].name.as_str()).collect();
            report.error("CYCLE", names[0], format!("entry conditions form a cycle: {}", names.join(" -> ")));
        }
        return report;
    }

    let roots: Vec<&System> = net.systems().iter().filter(|s| s.entry == EntryCondition::True).collect();
    if net.root_feature.is_empty() || roots.is_empty() {
        report.error("MISSING-ROOT", "", "no system is entered unconditionally".into());
        return report;
    }

    // Fixpoint over features that some traversal can select. A system can be
    // entered when one conjunction of its entry condition is reachable and
    // does not need two alternatives of the same system.
    let mut reach: BTreeSet<String> = BTreeSet::new();
    reach.insert(net.root_feature.clone());
    let mut enterable = vec![false; net.systems.len()];
    loop {
        let mut changed = false;
        for (i, s) in net.systems().iter().enumerate() {
            if enterable[i] || !net.satisfiable_within(&s.entry, &reach) {
                continue;
            }
            enterable[i] = true;
            changed = true;
            for o in &s.outputs {
                reach.insert(o.feature.clone());
                for r in &o.realizations {
                    if let Operator::Preselect { features, .. } = &r.op {
                        reach.extend(features.iter().cloned());
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    for (i, s) in net.systems().iter().enumerate() {
        if !enterable[i] {
            report.error("UNREACHABLE", &s.name, format!("system `{}` can never be entered", s.name));
        }
    }
    report
}

/// Strongly connected components with more than one member, plus self-loops.
fn dependency_cycles(net: &SystemNetwork) -> Vec<Vec<usize>> {
    let n = net.systems.len();
    // Tarjan, iterative enough for grammar sizes; recursion depth is bounded
    // by the number of systems.
    struct Tarjan<'a> {
        net: &'a SystemNetwork,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for &w in &self.net.dependencies[v] {
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    _ => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                if comp.len() > 1 || self.net.dependencies[v].contains(&v) {
                    comp.sort_by(|&a, &b| self.net.systems[a].name.cmp(&self.net.systems[b].name));
                    self.out.push(comp);
                }
            }
        }
    }
    let mut t = Tarjan {
        net,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out.sort();
    t.out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(name: &str, entry: EntryCondition, outs: &[&str]) -> System {
        System {
            name: name.into(),
            entry,
            outputs: outs.iter().map(|f| OutputFeature::new(f, Vec::new())).collect(),
            region: "R".into(),
            languages: Languages::default(),
            chooser: None,
        }
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|x| (*x).into()).collect()
    }

    #[test]
    fn eval_examples() {
        let c = EntryCondition::and([EntryCondition::feature("indicative"), EntryCondition::feature("declarative")]);
        assert!(c.eval(&set(&["clause", "indicative", "declarative"])));
        let c = EntryCondition::or([EntryCondition::feature("imperative"), EntryCondition::feature("interrogative")]);
        assert!(!c.eval(&set(&["indicative"])));
        assert!(EntryCondition::True.eval(&set(&[])));
    }

    #[test]
    fn normalization_sorts_operands() {
        let c = EntryCondition::or([
            EntryCondition::and([EntryCondition::feature("b"), EntryCondition::feature("a")]),
            EntryCondition::feature("c"),
        ]);
        let expected = EntryCondition::or([
            EntryCondition::and([EntryCondition::feature("a"), EntryCondition::feature("b")]),
            EntryCondition::feature("c"),
        ]);
        assert_eq!(c.normalized(), expected);
        assert_eq!(c.normalized().normalized(), expected);
        assert_eq!(EntryCondition::True.normalized(), EntryCondition::True);
    }

    #[test]
    fn condition_json_shape() {
        let c = EntryCondition::and([
            EntryCondition::feature("a"),
            EntryCondition::or([EntryCondition::feature("b"), EntryCondition::True]),
        ]);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(text, r#"{"and":["a",{"or":["b",true]}]}"#);
        let back: EntryCondition = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<EntryCondition>("false").is_err());
    }

    #[test]
    fn self_loop_is_one_cycle_error() {
        let net = SystemNetwork::new("start", vec![sys("S", EntryCondition::feature("f"), &["f", "g"])]);
        let report = validate_network(&net, &[]);
        assert_eq!(report.errors.len(), 1, "{report:?}");
        assert_eq!(report.errors[0].code, "CYCLE");
    }

    #[test]
    fn dangling_preselect() {
        let mut root = sys("ROOT", EntryCondition::True, &["a", "b"]);
        root.outputs[0]
            .realizations
            .push(Realization::new("r1", Operator::Preselect { function: "X".into(), features: vec!["xyz".into()] }));
        let net = SystemNetwork::new("start", vec![root]);
        let report = validate_network(&net, &[]);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, "DANGLING-REF");
    }

    #[test]
    fn missing_root_cycle_and_unreachable() {
        let net = SystemNetwork::new("start", vec![]);
        assert!(validate_network(&net, &[]).has_code("MISSING-ROOT"));

        let net = SystemNetwork::new(
            "start",
            vec![
                sys("ROOT", EntryCondition::True, &["a", "b"]),
                sys("NEVER", EntryCondition::and([EntryCondition::feature("a"), EntryCondition::feature("c")]), &["x"]),
                sys("C", EntryCondition::feature("x"), &["c"]),
            ],
        );
        // NEVER needs c, which needs x, which needs NEVER.
        assert!(validate_network(&net, &[]).has_code("CYCLE"));

        let net = SystemNetwork::new(
            "start",
            vec![
                sys("ROOT", EntryCondition::True, &["a", "b"]),
                sys("BOTH", EntryCondition::and([EntryCondition::feature("a"), EntryCondition::feature("b")]), &["x"]),
            ],
        );
        let report = validate_network(&net, &[]);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, "UNREACHABLE");
    }

    #[test]
    fn entered_systems_orders_by_rank_then_name() {
        let net = SystemNetwork::new(
            "start",
            vec![
                sys("Z", EntryCondition::feature("a"), &["z1", "z2"]),
                sys("ROOT", EntryCondition::True, &["a", "b"]),
                sys("M", EntryCondition::feature("a"), &["m1", "m2"]),
                sys("N", EntryCondition::feature("m1"), &["n1", "n2"]),
            ],
        );
        assert!(validate_network(&net, &[]).is_ok());
        let names = |v: Vec<&System>| v.into_iter().map(|s| s.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(net.entered_systems(&set(&["start"]), &set(&[]))), ["ROOT"]);
        assert_eq!(names(net.entered_systems(&set(&["start", "a", "m1"]), &set(&["ROOT"]))), ["M", "N", "Z"]);
        assert!(net.entered_systems(&set(&[]), &set(&[])).is_empty());
    }

    #[test]
    fn unknown_system_context() {
        let net = SystemNetwork::new("start", vec![sys("ROOT", EntryCondition::True, &["a"])]);
        assert_eq!(net.paradigmatic_context("ROOT").unwrap(), EntryCondition::True);
        assert_eq!(net.paradigmatic_context("NOPE").unwrap_err().code(), "UNKNOWN-SYSTEM");
        assert_eq!(net.lattice_subgraph("nope", 1).unwrap_err().code(), "UNKNOWN-FOCUS");
    }
}
