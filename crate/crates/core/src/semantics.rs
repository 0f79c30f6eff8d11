//! Semantic input, inquiries and choosers.
//!
//! A chooser is a decision tree attached to one system. Its internal nodes
//! ask inquiries about the semantic input; its leaves choose exactly one of
//! the system's features and may bind grammatical functions to entities.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{System, ValidationReport};
use crate::resources::Languages;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Value {
    Atom(String),
    Ref(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    /// Role name (without the leading colon) to value; keys are unique.
    pub attributes: Vec<(String, Value)>,
}

impl Entity {
    pub fn get(&self, role: &str) -> Option<&Value> {
        self.attributes.iter().find(|(r, _)| r == role).map(|(_, v)| v)
    }
}

/// A typed term graph. References may form cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticGraph {
    pub root: String,
    pub entities: BTreeMap<String, Entity>,
}

impl SemanticGraph {
    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn root_entity(&self) -> &Entity {
        &self.entities[&self.root]
    }

    /// Follows a role path from an entity. Atom-valued roles do not resolve.
    pub fn resolve(&self, from: &str, path: &SemPath) -> Option<&Entity> {
        let mut cur = self.entity(from)?;
        for role in &path.0 {
            match cur.get(role)? {
                Value::Ref(id) => cur = self.entity(id)?,
                Value::Atom(_) => return None,
            }
        }
        Some(cur)
    }
}

/// A role path such as `:actor:quality`; the empty path is `self`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct SemPath(pub Vec<String>);

impl SemPath {
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if text == "self" || text.is_empty() {
            return Ok(SemPath(Vec::new()));
        }
        let Some(rest) = text.strip_prefix(':') else {
            return Err(format!("semantic path `{text}` must be `self` or start with `:`"));
        };
        let roles: Vec<String> = rest.split(':').map(str::to_owned).collect();
        if roles.iter().any(String::is_empty) {
            return Err(format!("semantic path `{text}` has an empty role"));
        }
        Ok(SemPath(roles))
    }
}

impl fmt::Display for SemPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("self");
        }
        for r in &self.0 {
            write!(f, ":{r}")?;
        }
        Ok(())
    }
}

impl Serialize for SemPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SemPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        SemPath::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Test over the bound entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Condition {
    Equals {
        attr: String,
        equals: String,
    },
    Has {
        has: String,
    },
    TypeIn {
        #[serde(rename = "type-in")]
        type_in: Vec<String>,
    },
}

impl Condition {
    fn holds(&self, entity: &Entity, graph: &SemanticGraph) -> bool {
        match self {
            Condition::Has { has } => entity.get(has).is_some(),
            Condition::Equals { attr, equals } => match entity.get(attr) {
                Some(Value::Atom(a)) => a == equals,
                // An entity-valued role compares by the entity's type.
                Some(Value::Ref(id)) => graph.entity(id).is_some_and(|e| &e.kind == equals),
                None => false,
            },
            Condition::TypeIn { type_in } => type_in.contains(&entity.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InquiryRule {
    /// Parameter the condition looks at; the first parameter when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    pub when: Condition,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inquiry {
    pub name: String,
    pub parameters: Vec<String>,
    pub answers: Vec<String>,
    #[serde(default)]
    pub rules: Vec<InquiryRule>,
    pub default: String,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Choose { choose: String },
    Identify { identify: Identify },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identify {
    pub function: String,
    pub path: SemPath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChooserNode {
    Ask {
        ask: String,
        #[serde(default)]
        bindings: BTreeMap<String, SemPath>,
        branches: BTreeMap<String, ChooserNode>,
    },
    Leaf {
        actions: Vec<Action>,
    },
}

impl ChooserNode {
    pub fn choose(feature: &str) -> Self {
        ChooserNode::Leaf { actions: vec![Action::Choose { choose: feature.to_owned() }] }
    }

    fn depth(&self) -> usize {
        match self {
            ChooserNode::Leaf { .. } => 0,
            ChooserNode::Ask { branches, .. } => 1 + branches.values().map(ChooserNode::depth).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chooser {
    pub name: String,
    pub tree: ChooserNode,
    #[serde(default, skip_serializing_if = "Languages::is_inherited")]
    pub languages: Languages,
}

impl Chooser {
    /// The fallback for systems without a chooser: their first output.
    pub fn default_for(system: &System) -> Chooser {
        Chooser {
            name: format!("default:{}", system.name),
            tree: ChooserNode::choose(system.outputs.first().map_or("", |o| o.feature.as_str())),
            languages: Languages::default(),
        }
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    pub fn is_default(&self) -> bool {
        self.name.starts_with("default:")
    }
}

/// One inquiry evaluation along a chooser path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub inquiry: String,
    /// Parameter to entity id.
    pub bindings: BTreeMap<String, String>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identification {
    pub function: String,
    pub entity: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionSource {
    Chooser,
    Default,
    Preselected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChooserOutcome {
    pub feature: String,
    pub identifications: Vec<Identification>,
    pub path: Vec<PathStep>,
    pub source: DecisionSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    UnboundParameter { inquiry: String, parameter: String },
    UnknownInquiry(String),
    MissingBranch { inquiry: String, answer: String },
    NoChoice(String),
    ForeignFeature { chooser: String, feature: String },
}

impl SemanticsError {
    pub fn code(&self) -> &'static str {
        match self {
            SemanticsError::UnboundParameter { .. } => "UNBOUND-PARAMETER",
            SemanticsError::UnknownInquiry(_) => "UNKNOWN-INQUIRY",
            SemanticsError::MissingBranch { .. } => "MISSING-BRANCH",
            SemanticsError::NoChoice(_) => "NO-CHOICE",
            SemanticsError::ForeignFeature { .. } => "FOREIGN-FEATURE",
        }
    }
}

impl fmt::Display for SemanticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticsError::UnboundParameter { inquiry, parameter } => {
                write!(f, "{}: parameter `{parameter}` of inquiry `{inquiry}` is not bound to an entity", self.code())
            }
            SemanticsError::UnknownInquiry(i) => write!(f, "{}: no inquiry `{i}`", self.code()),
            SemanticsError::MissingBranch { inquiry, answer } => {
                write!(f, "{}: no branch for answer `{answer}` of `{inquiry}`", self.code())
            }
            SemanticsError::NoChoice(c) => write!(f, "{}: leaf of `{c}` chooses nothing", self.code()),
            SemanticsError::ForeignFeature { chooser, feature } => {
                write!(f, "{}: `{chooser}` chose `{feature}`, which its system does not offer", self.code())
            }
        }
    }
}

impl core::error::Error for SemanticsError {}

/// First matching rule wins, otherwise the default answer.
pub fn evaluate_inquiry(
    inquiry: &Inquiry,
    bindings: &BTreeMap<String, String>,
    graph: &SemanticGraph,
) -> Result<String, SemanticsError> {
    let mut bound = BTreeMap::new();
    for p in &inquiry.parameters {
        let entity = bindings
            .get(p)
            .and_then(|id| graph.entity(id))
            .ok_or_else(|| SemanticsError::UnboundParameter { inquiry: inquiry.name.clone(), parameter: p.clone() })?;
        bound.insert(p.as_str(), entity);
    }
    for rule in &inquiry.rules {
        let param = rule.param.as_deref().or(inquiry.parameters.first().map(String::as_str));
        let Some(entity) = param.and_then(|p| bound.get(p)) else {
            continue;
        };
        if rule.when.holds(entity, graph) {
            return Ok(rule.answer.clone());
        }
    }
    Ok(inquiry.default.clone())
}

/// What a chooser needs to run: the unit's entity, the input and the
/// inquiry definitions of the active language.
pub struct ChooserEnv<'a> {
    pub entity: &'a str,
    pub graph: &'a SemanticGraph,
    pub inquiries: &'a BTreeMap<String, Inquiry>,
}

/// Walks the tree, evaluating inquiries, and returns the chosen feature with
/// the full path taken. `on_inquiry` sees every evaluation as it happens.
pub fn run_chooser(
    chooser: &Chooser,
    system: &System,
    env: &ChooserEnv<'_>,
    on_inquiry: &mut dyn FnMut(&PathStep),
) -> Result<ChooserOutcome, SemanticsError> {
    let mut path = Vec::new();
    let mut node = &chooser.tree;
    // Tree depth bounds the walk.
    let actions = loop {
        match node {
            ChooserNode::Leaf { actions } => break actions,
            ChooserNode::Ask { ask, bindings, branches } => {
                let inquiry = env.inquiries.get(ask).ok_or_else(|| SemanticsError::UnknownInquiry(ask.clone()))?;
                let mut bound = BTreeMap::new();
                for p in &inquiry.parameters {
                    let sem = bindings.get(p).cloned().unwrap_or_default();
                    if let Some(e) = env.graph.resolve(env.entity, &sem) {
                        bound.insert(p.clone(), e.id.clone());
                    }
                }
                let answer = evaluate_inquiry(inquiry, &bound, env.graph)?;
                let step = PathStep { inquiry: ask.clone(), bindings: bound, answer: answer.clone() };
                on_inquiry(&step);
                path.push(step);
                node = branches
                    .get(&answer)
                    .ok_or_else(|| SemanticsError::MissingBranch { inquiry: ask.clone(), answer })?;
            }
        }
    };
    let mut feature = None;
    let mut identifications = Vec::new();
    let mut warnings = Vec::new();
    for a in actions {
        match a {
            Action::Choose { choose } => {
                feature.get_or_insert_with(|| choose.clone());
            }
            Action::Identify { identify } => {
                let entity = match env.graph.resolve(env.entity, &identify.path) {
                    Some(e) => e.id.clone(),
                    None => {
                        warnings.push(format!(
                            "{} {} does not resolve from `{}`; using the unit's entity",
                            identify.function, identify.path, env.entity
                        ));
                        env.entity.to_owned()
                    }
                };
                identifications.push(Identification { function: identify.function.clone(), entity });
            }
        }
    }
    let feature = feature.ok_or_else(|| SemanticsError::NoChoice(chooser.name.clone()))?;
    if !system.has_output(&feature) {
        return Err(SemanticsError::ForeignFeature { chooser: chooser.name.clone(), feature });
    }
    let source = if chooser.is_default() { DecisionSource::Default } else { DecisionSource::Chooser };
    Ok(ChooserOutcome { feature, identifications, path, source, warnings })
}

pub fn validate_inquiry(inquiry: &Inquiry, report: &mut ValidationReport) {
    let id = &inquiry.name;
    if inquiry.answers.len() < 2 {
        report.error("FEW-ANSWERS", id, format!("inquiry `{id}` needs at least two answers"));
    }
    if inquiry.parameters.is_empty() {
        report.error("NO-PARAMETERS", id, format!("inquiry `{id}` takes no parameters"));
    }
    let answers: BTreeSet<&str> = inquiry.answers.iter().map(String::as_str).collect();
    if !answers.contains(inquiry.default.as_str()) {
        report.error(
            "UNKNOWN-ANSWER",
            id,
            format!("default `{}` of `{id}` is not one of its answers", inquiry.default),
        );
    }
    for rule in &inquiry.rules {
        if !answers.contains(rule.answer.as_str()) {
            report.error(
                "UNKNOWN-ANSWER",
                id,
                format!("rule answer `{}` of `{id}` is not one of its answers", rule.answer),
            );
        }
        if let Some(p) = &rule.param {
            if !inquiry.parameters.contains(p) {
                report.error("UNKNOWN-PARAMETER", id, format!("rule of `{id}` names unknown parameter `{p}`"));
            }
        }
    }
}

/// Total branching, exactly one Choose per leaf, chosen features are outputs
/// of `system`, inquiries exist and every parameter is bound.
pub fn validate_chooser(
    chooser: &Chooser,
    system: &System,
    inquiries: &BTreeMap<String, Inquiry>,
    report: &mut ValidationReport,
) {
    fn walk(
        node: &ChooserNode,
        chooser: &Chooser,
        system: &System,
        inquiries: &BTreeMap<String, Inquiry>,
        report: &mut ValidationReport,
    ) {
        let id = &chooser.name;
        match node {
            ChooserNode::Leaf { actions } => {
                let chosen: Vec<&str> = actions
                    .iter()
                    .filter_map(|a| match a {
                        Action::Choose { choose } => Some(choose.as_str()),
                        _ => None,
                    })
                    .collect();
                if chosen.len() != 1 {
                    report.error(
                        "LEAF-CHOICE",
                        id,
                        format!("a leaf of `{id}` has {} Choose actions, expected 1", chosen.len()),
                    );
                }
                for f in chosen {
                    if !system.has_output(f) {
                        report.error(
                            "FOREIGN-FEATURE",
                            id,
                            format!("`{id}` chooses `{f}`, which is not an output of `{}`", system.name),
                        );
                    }
                }
            }
            ChooserNode::Ask { ask, bindings, branches } => {
                let Some(inquiry) = inquiries.get(ask) else {
                    report.error("DANGLING-REF", id, format!("`{id}` asks unknown inquiry `{ask}`"));
                    return;
                };
                for p in &inquiry.parameters {
                    if !bindings.contains_key(p) && inquiry.parameters.len() > 1 {
                        report.error(
                            "UNBOUND-PARAMETER",
                            id,
                            format!("`{id}` does not bind parameter `{p}` of `{ask}`"),
                        );
                    }
                }
                for a in &inquiry.answers {
                    if !branches.contains_key(a) {
                        report.error("MISSING-BRANCH", id, format!("`{id}` has no branch for answer `{a}` of `{ask}`"));
                    }
                }
                for (a, sub) in branches {
                    if !inquiry.answers.contains(a) {
                        report.error(
                            "UNKNOWN-ANSWER",
                            id,
                            format!("`{id}` branches on `{a}`, which `{ask}` never answers"),
                        );
                    }
                    walk(sub, chooser, system, inquiries, report);
                }
            }
        }
    }
    walk(&chooser.tree, chooser, system, inquiries, report);
}

impl fmt::Display for ChooserOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let steps: Vec<String> = self.path.iter().map(|s| format!("{} -> {}", s.inquiry, s.answer)).collect();
        write!(f, "{} [{}]", self.feature, steps.join("; "))?;
        if self.path.is_empty() {
            f.write_str(&match self.source {
                DecisionSource::Preselected => " (preselected)".to_string(),
                DecisionSource::Default => " (default)".to_string(),
                DecisionSource::Chooser => String::new(),
            })?;
        }
        Ok(())
    }
}
