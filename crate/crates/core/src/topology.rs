//! Capacitated directed network and its edge-list file format.
//!
//! ```text
//! # comment
//! undirected
//! s1 s2 1.0
//! s2 t  1.0 0.5
//! ```
//!
//! The header is `directed` or `undirected`; each following line is
//! `src dst [capacity [weight]]`. Capacity defaults to 1 and weight to
//! `1 / capacity`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArcId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ArcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity: f64,
    pub weight: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: self-loop at {node}")]
    SelfLoop { line: usize, node: String },
    #[error("line {line}: duplicate arc {src} -> {dst}")]
    DuplicateArc { line: usize, src: String, dst: String },
    #[error("line {line}: {what} must be positive and finite, got {value}")]
    NonPositive { line: usize, what: &'static str, value: f64 },
    #[error("missing `directed` or `undirected` header")]
    MissingHeader,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

/// A network `G = (V, E)` with per-arc capacity and routing weight.
///
/// Node ids are dense and assigned in order of first appearance; everything
/// that must not depend on ingestion order compares labels instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    labels: Vec<String>,
    arcs: Vec<Arc>,
    directed: bool,
    by_label: HashMap<String, NodeId>,
    by_ends: HashMap<(NodeId, NodeId), ArcId>,
    out: Vec<Vec<ArcId>>,
    inc: Vec<Vec<ArcId>>,
}

impl Topology {
    pub fn new(directed: bool) -> Self {
        Topology {
            labels: Vec::new(),
            arcs: Vec::new(),
            directed,
            by_label: HashMap::new(),
            by_ends: HashMap::new(),
            out: Vec::new(),
            inc: Vec::new(),
        }
    }

    /// Returns the id for `label`, creating the node on first use.
    pub fn add_node(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.by_label.get(label) {
            return id;
        }
        let id = NodeId(self.labels.len());
        self.labels.push(label.to_string());
        self.by_label.insert(label.to_string(), id);
        self.out.push(Vec::new());
        self.inc.push(Vec::new());
        id
    }

    /// Adds a single arc. Line number 0 is used for errors raised outside
    /// of parsing.
    pub fn add_arc(&mut self, src: &str, dst: &str, capacity: f64, weight: f64) -> Result<ArcId, TopologyError> {
        self.add_arc_at(0, src, dst, capacity, weight)
    }

    /// Adds the arc pair `src -> dst` and `dst -> src`.
    pub fn add_link(&mut self, a: &str, b: &str, capacity: f64, weight: f64) -> Result<(ArcId, ArcId), TopologyError> {
        Ok((self.add_arc(a, b, capacity, weight)?, self.add_arc(b, a, capacity, weight)?))
    }

    fn add_arc_at(&mut self, line: usize, src: &str, dst: &str, capacity: f64, weight: f64) -> Result<ArcId, TopologyError> {
        if src == dst {
            return Err(TopologyError::SelfLoop { line, node: src.to_string() });
        }
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(TopologyError::NonPositive { line, what: "capacity", value: capacity });
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(TopologyError::NonPositive { line, what: "weight", value: weight });
        }
        let s = self.add_node(src);
        let d = self.add_node(dst);
        if self.by_ends.contains_key(&(s, d)) {
            return Err(TopologyError::DuplicateArc {
                line,
                src: src.to_string(),
                dst: dst.to_string(),
            });
        }
        let id = ArcId(self.arcs.len());
        self.arcs.push(Arc { src: s, dst: d, capacity, weight });
        self.by_ends.insert((s, d), id);
        self.out[s.0].push(id);
        self.inc[d.0].push(id);
        Ok(id)
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.labels.len()).map(NodeId)
    }

    pub fn arc_ids(&self) -> impl Iterator<Item = ArcId> {
        (0..self.arcs.len()).map(ArcId)
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, a: ArcId) -> &Arc {
        &self.arcs[a.0]
    }

    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v.0]
    }

    pub fn node(&self, label: &str) -> Result<NodeId, TopologyError> {
        self.by_label
            .get(label)
            .copied()
            .ok_or_else(|| TopologyError::UnknownNode(label.to_string()))
    }

    pub fn find_arc(&self, src: NodeId, dst: NodeId) -> Option<ArcId> {
        self.by_ends.get(&(src, dst)).copied()
    }

    pub fn out_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.out[v.0]
    }

    pub fn in_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.inc[v.0]
    }

    pub fn capacity(&self, a: ArcId) -> f64 {
        self.arcs[a.0].capacity
    }

    pub fn weights(&self) -> Vec<f64> {
        self.arcs.iter().map(|a| a.weight).collect()
    }

    /// Human-readable `src->dst`.
    pub fn arc_name(&self, a: ArcId) -> String {
        let arc = &self.arcs[a.0];
        format!("{}->{}", self.label(arc.src), self.label(arc.dst))
    }

    /// Node ids sorted by label.
    pub fn nodes_by_label(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.nodes().collect();
        v.sort_by(|a, b| self.label(*a).cmp(self.label(*b)));
        v
    }

    /// Copy with the given per-arc weights.
    ///
    /// # Panics
    /// If `weights` has the wrong length or a non-positive entry.
    pub fn with_weights(&self, weights: &[f64]) -> Topology {
        assert_eq!(weights.len(), self.arcs.len());
        let mut t = self.clone();
        for (arc, &w) in t.arcs.iter_mut().zip(weights) {
            assert!(w > 0.0 && w.is_finite(), "weight {w}");
            arc.weight = w;
        }
        t
    }

    pub fn parse(text: &str) -> Result<Topology, TopologyError> {
        let mut topo: Option<Topology> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some(t) = topo.as_mut() else {
                topo = Some(match content {
                    "directed" => Topology::new(true),
                    "undirected" => Topology::new(false),
                    _ => return Err(TopologyError::MissingHeader),
                });
                continue;
            };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() < 2 || fields.len() > 4 {
                return Err(TopologyError::Malformed {
                    line,
                    msg: format!("expected `src dst [capacity [weight]]`, got {} fields", fields.len()),
                });
            }
            let number = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|_| TopologyError::Malformed {
                    line,
                    msg: format!("bad {what} `{s}`"),
                })
            };
            let capacity = match fields.get(2) {
                Some(s) => number(s, "capacity")?,
                None => 1.0,
            };
            let weight = match fields.get(3) {
                Some(s) => number(s, "weight")?,
                None => 1.0 / capacity,
            };
            t.add_arc_at(line, fields[0], fields[1], capacity, weight)?;
            if !t.directed {
                t.add_arc_at(line, fields[1], fields[0], capacity, weight)?;
            }
        }
        topo.ok_or(TopologyError::MissingHeader)
    }

    /// Writes the edge-list format, one line per arc (per arc pair when
    /// undirected), sorted by `(src, dst)` label.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<(&str, &str, &Arc)> = self
            .arcs
            .iter()
            .filter(|a| self.directed || self.label(a.src) < self.label(a.dst))
            .map(|a| (self.label(a.src), self.label(a.dst), a))
            .collect();
        lines.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out = String::from(if self.directed { "directed\n" } else { "undirected\n" });
        for (s, d, a) in lines {
            let _ = writeln!(out, "{s} {d} {} {}", a.capacity, a.weight);
        }
        out
    }
}

/// Copy of `topo` with every weight set to `1 / capacity`.
pub fn inverse_capacity_weights(topo: &Topology) -> Topology {
    let w: Vec<f64> = topo.arcs().iter().map(|a| 1.0 / a.capacity).collect();
    topo.with_weights(&w)
}
