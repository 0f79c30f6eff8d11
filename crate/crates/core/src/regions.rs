//! Functional regions: which part of the grammar depends on which, and
//! region-scoped slices of the lattice.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::network::{Fragment, SystemNetwork};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionError {
    MissingRegionTag(String),
    UnknownRegion(String),
}

impl RegionError {
    pub fn code(&self) -> &'static str {
        match self {
            RegionError::MissingRegionTag(_) => "MISSING-REGION-TAG",
            RegionError::UnknownRegion(_) => "UNKNOWN-REGION",
        }
    }
}

impl fmt::Display for RegionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionError::MissingRegionTag(s) => write!(f, "{}: system `{s}` has no region", self.code()),
            RegionError::UnknownRegion(r) => write!(f, "{}: no system belongs to region `{r}`", self.code()),
        }
    }
}

impl core::error::Error for RegionError {}

/// `from -> to` means systems of `to` consult features owned by `from`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionEdge {
    pub from: String,
    pub to: String,
    pub weight: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<RegionEdge>,
}

/// Every (consuming system, referenced feature) pair: entry-condition
/// leaves and preselected features, in network order.
fn references(net: &SystemNetwork) -> impl Iterator<Item = (&str, &str)> {
    net.systems()
        .iter()
        .flat_map(|s| s.entry.leaves().into_iter().chain(s.preselect_targets()).map(move |f| (s.name.as_str(), f)))
}

fn check_tags(net: &SystemNetwork) -> Result<(), RegionError> {
    match net.systems().iter().find(|s| s.region.is_empty()) {
        Some(s) => Err(RegionError::MissingRegionTag(s.name.clone())),
        None => Ok(()),
    }
}

pub fn region_graph(net: &SystemNetwork) -> Result<RegionGraph, RegionError> {
    check_tags(net)?;
    let mut weights: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (consumer, feature) in references(net) {
        let Some(owner) = net.owner(feature) else { continue };
        let to = net.system(consumer).map(|s| s.region.as_str()).unwrap_or_default();
        if owner.region != to {
            *weights.entry((owner.region.as_str(), to)).or_default() += 1;
        }
    }
    let nodes: BTreeSet<&str> = net.systems().iter().map(|s| s.region.as_str()).collect();
    Ok(RegionGraph {
        nodes: nodes.into_iter().map(str::to_owned).collect(),
        edges: weights
            .into_iter()
            .map(|((from, to), weight)| RegionEdge { from: from.to_owned(), to: to.to_owned(), weight })
            .collect(),
    })
}

/// The systems of one region with pointer stubs for everything they
/// reference outside it.
pub fn region_view(net: &SystemNetwork, region: &str) -> Result<Fragment, RegionError> {
    let members: Vec<usize> =
        net.systems().iter().enumerate().filter(|(_, s)| s.region == region).map(|(i, _)| i).collect();
    if members.is_empty() {
        return Err(RegionError::UnknownRegion(region.to_owned()));
    }
    Ok(net.fragment(members))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohesion {
    pub region: String,
    /// References from the region's systems to features it owns.
    pub internal: usize,
    /// References from the region's systems to features owned elsewhere.
    pub external: usize,
}

impl Cohesion {
    pub fn is_cohesive(&self) -> bool {
        self.internal > self.external
    }
}

/// Internal against external reference counts per region. A lint, not a
/// validity condition.
pub fn cohesion(net: &SystemNetwork) -> Result<Vec<Cohesion>, RegionError> {
    check_tags(net)?;
    let mut counts: BTreeMap<&str, (usize, usize)> =
        net.systems().iter().map(|s| (s.region.as_str(), (0, 0))).collect();
    for (consumer, feature) in references(net) {
        let Some(owner) = net.owner(feature) else { continue };
        let region = net.system(consumer).map(|s| s.region.as_str()).unwrap_or_default();
        let slot = counts.entry(region).or_default();
        if owner.region == region {
            slot.0 += 1;
        } else {
            slot.1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(r, (internal, external))| Cohesion { region: r.to_owned(), internal, external })
        .collect())
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl RegionGraph {
    /// Graphviz text with sorted nodes and edges.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph regions {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  {};", quote(n));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"{}\", weight={}];",
                quote(&e.from),
                quote(&e.to),
                e.weight,
                e.weight
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Graphviz text for a lattice fragment: systems as boxes, features as
/// ellipses, external features as dashed stubs.
pub fn fragment_to_dot(fragment: &Fragment) -> String {
    let mut out = String::from("digraph fragment {\n");
    for s in &fragment.systems {
        let _ = writeln!(out, "  {} [shape=box];", quote(&s.name));
        for f in s.entry.leaves() {
            let _ = writeln!(out, "  {} -> {};", quote(f), quote(&s.name));
        }
        for o in &s.outputs {
            let _ = writeln!(out, "  {} -> {};", quote(&s.name), quote(&o.feature));
        }
    }
    let mut stubs: BTreeSet<(&str, &str)> = BTreeSet::new();
    for p in &fragment.external {
        stubs.insert((&p.feature, &p.region));
    }
    for (feature, region) in stubs {
        let _ = writeln!(out, "  {} [style=dashed, tooltip={}];", quote(feature), quote(&format!("region {region}")));
    }
    out.push_str("}\n");
    out
}
