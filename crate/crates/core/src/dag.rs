//! Per-destination forwarding DAGs: shortest-path DAGs, augmentation with
//! non-shortest links, and acyclicity checks.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{ArcId, NodeId, Topology, TopologyError};

/// Relative tolerance for equal-cost next-hop detection.
pub const EQUAL_COST_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DagError {
    #[error("arcs for destination {dest} contain a cycle: {cycle}")]
    Cycle { dest: String, cycle: String },
    #[error("destination {0} has an outgoing arc in its own DAG")]
    RootHasOutArc(String),
    #[error("node {node} is entered by a DAG arc but has no path to {dest}")]
    DeadEnd { node: String, dest: String },
    #[error("weight vector has {0} entries, topology has {1} arcs")]
    WeightCount(usize, usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("DAG file: {0}")]
    Format(String),
}

/// Result of [`validate_acyclic`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acyclicity {
    /// Every node of the topology, sources before sinks.
    Order(Vec<NodeId>),
    /// Arcs of one directed cycle, in traversal order.
    Cycle(Vec<ArcId>),
}

/// Topological sort of the subgraph formed by `arcs` (Kahn's algorithm with
/// ties broken by label), or a cycle witness.
pub fn validate_acyclic(topo: &Topology, arcs: &[ArcId]) -> Acyclicity {
    let n = topo.num_nodes();
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<ArcId>> = vec![Vec::new(); n];
    let mut inc: Vec<Vec<ArcId>> = vec![Vec::new(); n];
    for &a in arcs {
        let arc = topo.arc(a);
        indeg[arc.dst.0] += 1;
        out[arc.src.0].push(a);
        inc[arc.dst.0].push(a);
    }
    // Max-heap on reversed label comparison pops the smallest label first.
    #[derive(PartialEq, Eq)]
    struct ByLabel<'a>(&'a str, NodeId);
    impl Ord for ByLabel<'_> {
        fn cmp(&self, other: &Self) -> Ordering {
            other.0.cmp(self.0).then(other.1.cmp(&self.1))
        }
    }
    impl PartialOrd for ByLabel<'_> {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    let mut ready: BinaryHeap<ByLabel> = topo
        .nodes()
        .filter(|v| indeg[v.0] == 0)
        .map(|v| ByLabel(topo.label(v), v))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(ByLabel(_, v)) = ready.pop() {
        order.push(v);
        for &a in &out[v.0] {
            let w = topo.arc(a).dst;
            indeg[w.0] -= 1;
            if indeg[w.0] == 0 {
                ready.push(ByLabel(topo.label(w), w));
            }
        }
    }
    if order.len() == n {
        return Acyclicity::Order(order);
    }

    // Every unprocessed node still has an unprocessed predecessor, so
    // walking backwards from any of them must revisit a node.
    let start = topo
        .nodes_by_label()
        .into_iter()
        .find(|v| indeg[v.0] > 0)
        .expect("stalled sort leaves a node with positive in-degree");
    let mut seen = vec![usize::MAX; n];
    let mut walk: Vec<ArcId> = Vec::new();
    let mut v = start;
    loop {
        seen[v.0] = walk.len();
        let a = *inc[v.0]
            .iter()
            .find(|&&a| indeg[topo.arc(a).src.0] > 0)
            .expect("remaining node has a remaining predecessor");
        walk.push(a);
        v = topo.arc(a).src;
        if seen[v.0] != usize::MAX {
            break;
        }
    }
    let mut cycle: Vec<ArcId> = walk[seen[v.0]..].to_vec();
    cycle.reverse();
    let first = (0..cycle.len())
        .min_by(|&i, &j| topo.label(topo.arc(cycle[i]).src).cmp(topo.label(topo.arc(cycle[j]).src)))
        .unwrap_or(0);
    cycle.rotate_left(first);
    Acyclicity::Cycle(cycle)
}

/// Shortest distance from every node to `t` under `weights`
/// (`f64::INFINITY` when `t` is unreachable).
pub fn distances_to(topo: &Topology, weights: &[f64], t: NodeId) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Entry(f64, NodeId);
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    let mut dist = vec![f64::INFINITY; topo.num_nodes()];
    dist[t.0] = 0.0;
    let mut heap = BinaryHeap::from([Entry(0.0, t)]);
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v.0] {
            continue;
        }
        for &a in topo.in_arcs(v) {
            let u = topo.arc(a).src;
            let nd = d + weights[a.0];
            if nd < dist[u.0] {
                dist[u.0] = nd;
                heap.push(Entry(nd, u));
            }
        }
    }
    dist
}

fn equal_cost(lhs: f64, rhs: f64) -> bool {
    (lhs - rhs).abs() <= EQUAL_COST_TOL * lhs.abs().max(1.0)
}

/// Forwarding DAG rooted at one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct DestinationDag {
    root: NodeId,
    arcs: Vec<ArcId>,
    member: Vec<bool>,
    order: Vec<NodeId>,
}

impl DestinationDag {
    /// Validates acyclicity, that the root has no outgoing arc and that the
    /// head of every arc reaches the root.
    pub fn new(topo: &Topology, root: NodeId, mut arcs: Vec<ArcId>) -> Result<Self, DagError> {
        arcs.sort_unstable();
        arcs.dedup();
        let mut member = vec![false; topo.num_arcs()];
        for &a in &arcs {
            member[a.0] = true;
        }
        let order = match validate_acyclic(topo, &arcs) {
            Acyclicity::Order(o) => o,
            Acyclicity::Cycle(c) => {
                return Err(DagError::Cycle {
                    dest: topo.label(root).to_string(),
                    cycle: c.iter().map(|&a| topo.arc_name(a)).collect::<Vec<_>>().join(", "),
                })
            }
        };
        if topo.out_arcs(root).iter().any(|a| member[a.0]) {
            return Err(DagError::RootHasOutArc(topo.label(root).to_string()));
        }
        let dag = DestinationDag { root, arcs, member, order };
        let reaches = dag.reaches_root(topo);
        if let Some(&a) = dag.arcs.iter().find(|a| !reaches[topo.arc(**a).dst.0]) {
            return Err(DagError::DeadEnd {
                node: topo.label(topo.arc(a).dst).to_string(),
                dest: topo.label(root).to_string(),
            });
        }
        Ok(dag)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Member arcs in id order.
    pub fn arcs(&self) -> &[ArcId] {
        &self.arcs
    }

    pub fn contains(&self, a: ArcId) -> bool {
        self.member.get(a.0).copied().unwrap_or(false)
    }

    /// All nodes in topological order.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn out_arcs<'a>(&'a self, topo: &'a Topology, v: NodeId) -> impl Iterator<Item = ArcId> + 'a {
        topo.out_arcs(v).iter().copied().filter(move |a| self.member[a.0])
    }

    pub fn in_arcs<'a>(&'a self, topo: &'a Topology, v: NodeId) -> impl Iterator<Item = ArcId> + 'a {
        topo.in_arcs(v).iter().copied().filter(move |a| self.member[a.0])
    }

    /// `true` for nodes with a DAG path to the root (the root included).
    pub fn reaches_root(&self, topo: &Topology) -> Vec<bool> {
        let mut r = vec![false; topo.num_nodes()];
        r[self.root.0] = true;
        for &v in self.order.iter().rev() {
            if self.out_arcs(topo, v).any(|a| r[topo.arc(a).dst.0]) {
                r[v.0] = true;
            }
        }
        r
    }

    /// Nodes reachable from `s` along DAG arcs (`s` included).
    pub fn reachable_from(&self, topo: &Topology, s: NodeId) -> Vec<bool> {
        let mut r = vec![false; topo.num_nodes()];
        r[s.0] = true;
        for &v in &self.order {
            if r[v.0] {
                for a in self.out_arcs(topo, v) {
                    r[topo.arc(a).dst.0] = true;
                }
            }
        }
        r
    }
}

/// Arcs on some shortest path to `t`: `(u, v)` qualifies when
/// `dist(u) = w(u, v) + dist(v)`.
pub fn shortest_path_dag(topo: &Topology, weights: &[f64], t: NodeId) -> Result<(DestinationDag, Vec<f64>), DagError> {
    if weights.len() != topo.num_arcs() {
        return Err(DagError::WeightCount(weights.len(), topo.num_arcs()));
    }
    let dist = distances_to(topo, weights, t);
    let arcs: Vec<ArcId> = topo
        .arc_ids()
        .filter(|&a| {
            let arc = topo.arc(a);
            arc.src != t && dist[arc.dst.0].is_finite() && equal_cost(dist[arc.src.0], weights[a.0] + dist[arc.dst.0])
        })
        .collect();
    Ok((DestinationDag::new(topo, t, arcs)?, dist))
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub dag: DestinationDag,
    pub added: Vec<ArcId>,
    /// Oriented arcs left out because they would have closed a cycle.
    pub skipped: Vec<ArcId>,
}

/// Adds one orientation of every node pair that has no arc in `dag`:
/// from the endpoint farther from the root to the closer one, and on equal
/// distance from the smaller label to the larger.
pub fn augment_dag(topo: &Topology, dag: &DestinationDag, dist: &[f64]) -> Result<Augmented, DagError> {
    let t = dag.root();
    let mut member: Vec<bool> = (0..topo.num_arcs()).map(|a| dag.contains(ArcId(a))).collect();
    let mut out: Vec<Vec<NodeId>> = vec![Vec::new(); topo.num_nodes()];
    for &a in dag.arcs() {
        let arc = topo.arc(a);
        out[arc.src.0].push(arc.dst);
    }
    let mut added = Vec::new();
    let mut skipped = Vec::new();
    for a in topo.arc_ids() {
        let arc = topo.arc(a);
        let (u, v) = (arc.src, arc.dst);
        let reverse = topo.find_arc(v, u);
        if member[a.0] || reverse.is_some_and(|r| member[r.0]) {
            continue;
        }
        // Each pair is decided once, from its lower arc id.
        if reverse.is_some_and(|r| r < a) {
            continue;
        }
        let (du, dv) = (dist[u.0], dist[v.0]);
        let forward = if du.is_infinite() && dv.is_infinite() {
            continue;
        } else if du.is_finite() && dv.is_finite() && equal_cost(du, dv) {
            topo.label(u) < topo.label(v)
        } else {
            du > dv
        };
        let (from, to, chosen) = if forward {
            (u, v, Some(a))
        } else {
            (v, u, reverse)
        };
        let Some(chosen) = chosen else { continue };
        if from == t || dist[to.0].is_infinite() {
            continue;
        }
        if path_exists(&out, to, from) {
            warn!("augmentation for {}: skipping {} (cycle)", topo.label(t), topo.arc_name(chosen));
            skipped.push(chosen);
            continue;
        }
        member[chosen.0] = true;
        out[from.0].push(to);
        added.push(chosen);
    }
    debug!("augmentation for {}: {} arcs added", topo.label(t), added.len());
    let arcs: Vec<ArcId> = topo.arc_ids().filter(|a| member[a.0]).collect();
    Ok(Augmented {
        dag: DestinationDag::new(topo, t, arcs)?,
        added,
        skipped,
    })
}

fn path_exists(out: &[Vec<NodeId>], from: NodeId, to: NodeId) -> bool {
    let mut seen = vec![false; out.len()];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v.0], true) {
            continue;
        }
        stack.extend(out[v.0].iter().copied());
    }
    false
}

/// Forwarding DAGs for a set of destinations, with the shortest-path subset
/// of each kept for ECMP.
#[derive(Debug, Clone, PartialEq)]
pub struct DagSet {
    dags: BTreeMap<NodeId, DestinationDag>,
    spf: BTreeMap<NodeId, Vec<ArcId>>,
}

impl DagSet {
    pub fn new() -> Self {
        DagSet {
            dags: BTreeMap::new(),
            spf: BTreeMap::new(),
        }
    }

    /// Inserts a DAG; `spf` must be a subset of its arcs.
    pub fn insert(&mut self, dag: DestinationDag, spf: Vec<ArcId>) {
        debug_assert!(spf.iter().all(|&a| dag.contains(a)));
        self.spf.insert(dag.root(), spf);
        self.dags.insert(dag.root(), dag);
    }

    pub fn get(&self, t: NodeId) -> Option<&DestinationDag> {
        self.dags.get(&t)
    }

    pub fn spf_arcs(&self, t: NodeId) -> &[ArcId] {
        self.spf.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.dags.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &DestinationDag)> {
        self.dags.iter().map(|(&t, d)| (t, d))
    }

    pub fn len(&self) -> usize {
        self.dags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dags.is_empty()
    }

    pub fn to_json(&self, topo: &Topology) -> serde_json::Value {
        let pairs = |arcs: &[ArcId]| -> Vec<[String; 2]> {
            arcs.iter()
                .map(|&a| {
                    let arc = topo.arc(a);
                    [topo.label(arc.src).to_string(), topo.label(arc.dst).to_string()]
                })
                .collect()
        };
        let entries: Vec<DagEntry> = self
            .dags
            .iter()
            .map(|(&t, d)| DagEntry {
                destination: topo.label(t).to_string(),
                arcs: pairs(d.arcs()),
                spf: pairs(self.spf_arcs(t)),
            })
            .collect();
        serde_json::to_value(entries).expect("plain data serializes")
    }

    pub fn from_json(topo: &Topology, value: &serde_json::Value) -> Result<DagSet, DagError> {
        let entries: Vec<DagEntry> =
            serde_json::from_value(value.clone()).map_err(|e| DagError::Format(e.to_string()))?;
        let arc = |p: &[String; 2]| -> Result<ArcId, DagError> {
            let (s, d) = (topo.node(&p[0])?, topo.node(&p[1])?);
            topo.find_arc(s, d)
                .ok_or_else(|| DagError::Format(format!("no arc {} -> {}", p[0], p[1])))
        };
        let mut set = DagSet::new();
        for e in entries {
            let t = topo.node(&e.destination)?;
            let arcs = e.arcs.iter().map(arc).collect::<Result<Vec<_>, _>>()?;
            let spf = e.spf.iter().map(arc).collect::<Result<Vec<_>, _>>()?;
            let dag = DestinationDag::new(topo, t, arcs)?;
            if let Some(a) = spf.iter().find(|&&a| !dag.contains(a)) {
                return Err(DagError::Format(format!("spf arc {} not in DAG", topo.arc_name(*a))));
            }
            set.insert(dag, spf);
        }
        Ok(set)
    }
}

impl Default for DagSet {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Serialize, Deserialize)]
struct DagEntry {
    destination: String,
    arcs: Vec<[String; 2]>,
    spf: Vec<[String; 2]>,
}

/// Shortest-path DAG plus augmentation for every destination in `dests`.
/// Returns the set and all arcs skipped during augmentation.
pub fn build_dags(topo: &Topology, weights: &[f64], dests: &[NodeId]) -> Result<(DagSet, Vec<ArcId>), DagError> {
    let mut set = DagSet::new();
    let mut skipped = Vec::new();
    for &t in dests {
        let (spf, dist) = shortest_path_dag(topo, weights, t)?;
        let aug = augment_dag(topo, &spf, &dist)?;
        skipped.extend(aug.skipped);
        set.insert(aug.dag, spf.arcs().to_vec());
    }
    Ok((set, skipped))
}

/// Shortest-path DAGs only, without augmentation.
pub fn build_spf_dags(topo: &Topology, weights: &[f64], dests: &[NodeId]) -> Result<DagSet, DagError> {
    let mut set = DagSet::new();
    for &t in dests {
        let (spf, _) = shortest_path_dag(topo, weights, t)?;
        let arcs = spf.arcs().to_vec();
        set.insert(spf, arcs);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_topology;
    use proptest::prelude::*;

    fn four_node() -> Topology {
        Topology::parse("undirected\ns1 s2\ns1 v\ns2 v\ns2 t\nv t\n").unwrap()
    }

    fn names(topo: &Topology, arcs: &[ArcId]) -> Vec<String> {
        let mut v: Vec<String> = arcs.iter().map(|&a| topo.arc_name(a)).collect();
        v.sort();
        v
    }

    fn labels(topo: &Topology, nodes: &[NodeId]) -> Vec<String> {
        nodes.iter().map(|&v| topo.label(v).to_string()).collect()
    }

    #[test]
    fn running_example_spf_excludes_middle_link() {
        let topo = four_node();
        let t = topo.node("t").unwrap();
        let (dag, dist) = shortest_path_dag(&topo, &topo.weights(), t).unwrap();
        assert_eq!(names(&topo, dag.arcs()), ["s1->s2", "s1->v", "s2->t", "v->t"]);
        assert_eq!(dist[topo.node("s1").unwrap().0], 2.0);
    }

    #[test]
    fn running_example_augments_s2_to_v() {
        let topo = four_node();
        let t = topo.node("t").unwrap();
        let (dag, dist) = shortest_path_dag(&topo, &topo.weights(), t).unwrap();
        let aug = augment_dag(&topo, &dag, &dist).unwrap();
        assert_eq!(names(&topo, &aug.added), ["s2->v"]);
        assert!(aug.skipped.is_empty());
        assert_eq!(labels(&topo, aug.dag.order()), ["s1", "s2", "v", "t"]);
    }

    #[test]
    fn single_arc_and_diamond() {
        let topo = Topology::parse("directed\nu t\n").unwrap();
        let t = topo.node("t").unwrap();
        let (dag, _) = shortest_path_dag(&topo, &topo.weights(), t).unwrap();
        assert_eq!(names(&topo, dag.arcs()), ["u->t"]);

        let topo = Topology::parse("directed\ns a 1 1\ns b 1 1\na t 1 2\nb t 1 2\n").unwrap();
        let t = topo.node("t").unwrap();
        let (dag, _) = shortest_path_dag(&topo, &topo.weights(), t).unwrap();
        assert_eq!(dag.arcs().len(), 4);
    }

    #[test]
    fn path_augmentation_is_a_no_op() {
        let topo = Topology::parse("undirected\na b\nb c\n").unwrap();
        let c = topo.node("c").unwrap();
        let (dag, dist) = shortest_path_dag(&topo, &topo.weights(), c).unwrap();
        let aug = augment_dag(&topo, &dag, &dist).unwrap();
        assert!(aug.added.is_empty());
        assert_eq!(aug.dag, dag);
    }

    #[test]
    fn acyclicity_examples() {
        let topo = Topology::parse("directed\na b\nb c\nb a\n").unwrap();
        let ab = topo.find_arc(topo.node("a").unwrap(), topo.node("b").unwrap()).unwrap();
        let bc = topo.find_arc(topo.node("b").unwrap(), topo.node("c").unwrap()).unwrap();
        let ba = topo.find_arc(topo.node("b").unwrap(), topo.node("a").unwrap()).unwrap();
        match validate_acyclic(&topo, &[ab, bc]) {
            Acyclicity::Order(o) => assert_eq!(labels(&topo, &o), ["a", "b", "c"]),
            c => panic!("{c:?}"),
        }
        assert_eq!(validate_acyclic(&topo, &[ab, ba]), Acyclicity::Cycle(vec![ab, ba]));
    }

    #[test]
    fn labels_not_ids_drive_tie_breaks() {
        let a = Topology::parse("undirected\ns1 s2\ns1 v\ns2 v\ns2 t\nv t\n").unwrap();
        let b = Topology::parse("undirected\nv t\ns2 t\ns2 v\ns1 v\ns1 s2\n").unwrap();
        for topo in [&a, &b] {
            let (set, _) = build_dags(topo, &topo.weights(), &[topo.node("t").unwrap()]).unwrap();
            let dag = set.get(topo.node("t").unwrap()).unwrap();
            assert_eq!(names(topo, dag.arcs()), ["s1->s2", "s1->v", "s2->t", "s2->v", "v->t"]);
        }
    }

    #[test]
    fn json_round_trip() {
        let topo = four_node();
        let dests: Vec<NodeId> = topo.nodes().collect();
        let (set, _) = build_dags(&topo, &topo.weights(), &dests).unwrap();
        let back = DagSet::from_json(&topo, &set.to_json(&topo)).unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn produced_dags_are_valid(seed in any::<u64>(), n in 2usize..9) {
            let topo = random_topology(seed, n);
            let w = topo.weights();
            for t in topo.nodes() {
                let (spf, dist) = shortest_path_dag(&topo, &w, t).unwrap();
                for &a in spf.arcs() {
                    let arc = topo.arc(a);
                    prop_assert!(equal_cost(dist[arc.src.0], w[a.0] + dist[arc.dst.0]));
                }
                let aug = augment_dag(&topo, &spf, &dist).unwrap();
                prop_assert!(matches!(validate_acyclic(&topo, aug.dag.arcs()), Acyclicity::Order(_)));
                prop_assert!(spf.arcs().iter().all(|&a| aug.dag.contains(a)));
                let pairs = topo.arc_ids().filter(|&a| {
                    let arc = topo.arc(a);
                    let r = topo.find_arc(arc.dst, arc.src).unwrap();
                    a < r && !spf.contains(a) && !spf.contains(r)
                }).count();
                prop_assert_eq!(aug.dag.arcs().len(), spf.arcs().len() + pairs - aug.skipped.len());
            }
        }

        #[test]
        fn text_round_trip_is_a_fixed_point(seed in any::<u64>(), n in 2usize..9) {
            let text = random_topology(seed, n).to_text();
            prop_assert_eq!(Topology::parse(&text).unwrap().to_text(), text);
        }
    }
}
