//! Linear-programming oracles: the demands-aware optimum `OPTU`, the
//! per-arc worst-case demand matrix, and dual certificates bounding the
//! oblivious performance ratio of a fixed splitting configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::debug;
use oblite_solvers::{solve_lp, LpError, LpProblem, LpStatus, Relation, RowId, Sense, VarId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::dag::{DagError, DagSet};
use crate::demand::{BoxSpec, DemandMatrix, DemandSpec, Pair};
use crate::routing::{edge_coefficients, flow_fractions, max_link_utilization, RoutingError, SplittingConfig};
use crate::topology::{ArcId, NodeId, Topology};
use crate::vertices::{routable_vertices, VERTEX_GUARD};

/// Flows below this are treated as zero after cycle removal.
pub const FLOW_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("pair {src} -> {dst} has no usable path")]
    Unroutable { src: String, dst: String },
    #[error("no DAG for destination {0}")]
    MissingDestination(String),
    #[error("LP rejected: {0}")]
    Lp(#[from] LpError),
    #[error("{what}: LP ended with status {status:?}")]
    Solver { what: String, status: LpStatus },
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("{pairs} demand pairs exceed the vertex enumeration limit of {guard}; use a discrete set or the certificate")]
    TooManyPairs { pairs: usize, guard: usize },
    #[error("the demand box contains no matrix routable within capacity")]
    EmptyRegion,
    #[error("vertex enumeration did not converge after {0} cuts")]
    NoConvergence(usize),
    #[error("certificate check failed: {0}")]
    Certificate(String),
}

/// Which routings `OPTU` may use as the yardstick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Per-destination routings inside the configured DAGs.
    #[default]
    InDag,
    /// Any per-destination routing on the whole graph.
    AnyPd,
}

impl Normalization {
    pub fn restriction<'a>(&self, dags: &'a DagSet) -> Option<&'a DagSet> {
        match self {
            Normalization::InDag => Some(dags),
            Normalization::AnyPd => None,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::InDag => "in-dag",
            Normalization::AnyPd => "any-pd",
        })
    }
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in-dag" => Ok(Normalization::InDag),
            "any-pd" => Ok(Normalization::AnyPd),
            other => Err(format!("unknown normalization {other:?} (expected in-dag or any-pd)")),
        }
    }
}

/// Arcs usable by one destination's commodity and the nodes that can reach
/// the destination through them.
pub(crate) struct Commodity {
    pub t: NodeId,
    pub arcs: Vec<ArcId>,
    pub reach: Vec<bool>,
}

pub(crate) fn commodity(topo: &Topology, restriction: Option<&DagSet>, t: NodeId) -> Result<Commodity, OracleError> {
    let candidates: Vec<ArcId> = match restriction {
        Some(dags) => dags
            .get(t)
            .ok_or_else(|| OracleError::MissingDestination(topo.label(t).to_string()))?
            .arcs()
            .to_vec(),
        None => topo.arc_ids().filter(|&a| topo.arc(a).src != t).collect(),
    };
    let mut allowed = vec![false; topo.num_arcs()];
    for &a in &candidates {
        allowed[a.0] = true;
    }
    let mut reach = vec![false; topo.num_nodes()];
    reach[t.0] = true;
    let mut stack = vec![t];
    while let Some(v) = stack.pop() {
        for &a in topo.in_arcs(v) {
            let u = topo.arc(a).src;
            if allowed[a.0] && !reach[u.0] {
                reach[u.0] = true;
                stack.push(u);
            }
        }
    }
    let arcs = candidates
        .into_iter()
        .filter(|&a| reach[topo.arc(a).src.0] && reach[topo.arc(a).dst.0])
        .collect();
    Ok(Commodity { t, arcs, reach })
}

fn unroutable(topo: &Topology, (s, t): Pair) -> OracleError {
    OracleError::Unroutable {
        src: topo.label(s).to_string(),
        dst: topo.label(t).to_string(),
    }
}

fn require_optimal(sol: &oblite_solvers::LpSolution, what: impl FnOnce() -> String) -> Result<(), OracleError> {
    if sol.is_optimal() {
        Ok(())
    } else {
        Err(OracleError::Solver {
            what: what(),
            status: sol.status,
        })
    }
}

/// Result of the demands-aware optimum.
#[derive(Debug, Clone)]
pub struct Optimum {
    /// Minimum achievable maximum link utilization.
    pub value: f64,
    /// Cycle-free aggregate flow per destination, indexed by arc.
    pub flows: BTreeMap<NodeId, Vec<f64>>,
    /// `d value / d demand(s, t)` for every routable pair passed in.
    pub marginals: BTreeMap<Pair, f64>,
}

/// `OPTU(D)`: minimum max-utilization over per-destination routings, inside
/// `restriction` when given.
pub fn optu(topo: &Topology, demand: &DemandMatrix, restriction: Option<&DagSet>) -> Result<Optimum, OracleError> {
    let entries: Vec<(Pair, f64)> = demand.iter().collect();
    optu_entries(topo, restriction, &entries)
}

pub(crate) fn optu_entries(
    topo: &Topology,
    restriction: Option<&DagSet>,
    entries: &[(Pair, f64)],
) -> Result<Optimum, OracleError> {
    let mut dests: Vec<NodeId> = entries.iter().map(|&((_, t), _)| t).collect();
    dests.sort_unstable();
    dests.dedup();

    let mut lp = LpProblem::new(Sense::Minimize);
    let alpha = lp.add_nonneg(1.0);
    let mut comms = Vec::new();
    let mut gvars: Vec<Vec<Option<VarId>>> = Vec::new();
    let mut arc_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); topo.num_arcs()];
    for &t in &dests {
        let c = commodity(topo, restriction, t)?;
        let mut vars = vec![None; topo.num_arcs()];
        for &a in &c.arcs {
            let g = lp.add_nonneg(0.0);
            vars[a.0] = Some(g);
            arc_terms[a.0].push((g, 1.0));
        }
        comms.push(c);
        gvars.push(vars);
    }

    let mut demand_at: BTreeMap<Pair, f64> = BTreeMap::new();
    for &(p, d) in entries {
        *demand_at.entry(p).or_insert(0.0) += d;
    }
    let mut rows: BTreeMap<Pair, RowId> = BTreeMap::new();
    for (c, vars) in comms.iter().zip(&gvars) {
        for v in topo.nodes() {
            if v == c.t || !c.reach[v.0] {
                continue;
            }
            let mut coeffs = Vec::new();
            for &a in topo.out_arcs(v) {
                if let Some(g) = vars[a.0] {
                    coeffs.push((g, 1.0));
                }
            }
            for &a in topo.in_arcs(v) {
                if let Some(g) = vars[a.0] {
                    coeffs.push((g, -1.0));
                }
            }
            let d = demand_at.get(&(v, c.t)).copied().unwrap_or(0.0);
            rows.insert((v, c.t), lp.add_row(&coeffs, Relation::Eq, d));
        }
    }
    for (&p, &d) in &demand_at {
        if d > 0.0 && !rows.contains_key(&p) {
            return Err(unroutable(topo, p));
        }
    }
    for a in topo.arc_ids() {
        if arc_terms[a.0].is_empty() {
            continue;
        }
        let mut coeffs = std::mem::take(&mut arc_terms[a.0]);
        coeffs.push((alpha, -topo.capacity(a)));
        lp.add_row(&coeffs, Relation::Le, 0.0);
    }

    let sol = solve_lp(&lp)?;
    require_optimal(&sol, || "demands-aware optimum".to_string())?;

    let mut flows = BTreeMap::new();
    for (c, vars) in comms.iter().zip(&gvars) {
        let mut g: Vec<f64> = vars.iter().map(|v| v.map(|v| sol.value(v).max(0.0)).unwrap_or(0.0)).collect();
        remove_cycles(topo, &mut g);
        flows.insert(c.t, g);
    }
    let marginals = entries
        .iter()
        .filter_map(|&(p, _)| rows.get(&p).map(|&r| (p, sol.dual(r))))
        .collect();
    Ok(Optimum {
        value: sol.value(alpha).max(0.0),
        flows,
        marginals,
    })
}

/// Cancels circulations in a single-commodity arc flow. Removing a cycle
/// lowers the flow on each of its arcs, so no load increases.
pub fn remove_cycles(topo: &Topology, flow: &mut [f64]) {
    for x in flow.iter_mut() {
        if *x < FLOW_FLOOR {
            *x = 0.0;
        }
    }
    while let Some(cycle) = find_cycle(topo, flow) {
        let m = cycle.iter().map(|a| flow[a.0]).fold(f64::INFINITY, f64::min);
        for a in &cycle {
            flow[a.0] -= m;
            if flow[a.0] < FLOW_FLOOR {
                flow[a.0] = 0.0;
            }
        }
    }
}

fn find_cycle(topo: &Topology, flow: &[f64]) -> Option<Vec<ArcId>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; topo.num_nodes()];
    let mut via: Vec<Option<ArcId>> = vec![None; topo.num_nodes()];
    for root in topo.nodes() {
        if state[root.0] != 0 {
            continue;
        }
        let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
        state[root.0] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            let outs = topo.out_arcs(v);
            if *next >= outs.len() {
                state[v.0] = 2;
                stack.pop();
                continue;
            }
            let a = outs[*next];
            *next += 1;
            if flow[a.0] <= 0.0 {
                continue;
            }
            let w = topo.arc(a).dst;
            match state[w.0] {
                0 => {
                    state[w.0] = 1;
                    via[w.0] = Some(a);
                    stack.push((w, 0));
                }
                1 => {
                    let mut cycle = vec![a];
                    let mut x = v;
                    while x != w {
                        let b = via[x.0].expect("stack node has a parent arc");
                        cycle.push(b);
                        x = topo.arc(b).src;
                    }
                    return Some(cycle);
                }
                _ => {}
            }
        }
    }
    None
}

/// Splitting ratios proportional to per-destination aggregate flows. Nodes
/// without outgoing flow split uniformly over their DAG arcs.
pub fn config_from_flows(topo: &Topology, dags: &DagSet, flows: &BTreeMap<NodeId, Vec<f64>>) -> SplittingConfig {
    SplittingConfig::normalized(topo, dags, flows)
}

/// Per-pair coefficients `f_st(u) phi_t(e) / c_e` for every arc.
pub(crate) struct Coefficients {
    pub by_arc: Vec<Vec<(Pair, f64)>>,
}

pub(crate) fn coefficients(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    pairs: &[Pair],
) -> Result<Coefficients, OracleError> {
    let fr = flow_fractions(topo, dags, config, pairs)?;
    let by_arc = topo
        .arc_ids()
        .map(|e| edge_coefficients(topo, dags, config, &fr, e))
        .collect();
    Ok(Coefficients { by_arc })
}

fn box_destinations(spec: &BoxSpec) -> Vec<NodeId> {
    spec.destinations()
}

fn check_routable(topo: &Topology, comms: &BTreeMap<NodeId, Commodity>, pairs: &[Pair]) -> Result<(), OracleError> {
    for &(s, t) in pairs {
        if !comms[&t].reach[s.0] {
            return Err(unroutable(topo, (s, t)));
        }
    }
    Ok(())
}

fn commodities(
    topo: &Topology,
    restriction: Option<&DagSet>,
    dests: &[NodeId],
) -> Result<BTreeMap<NodeId, Commodity>, OracleError> {
    dests.iter().map(|&t| Ok((t, commodity(topo, restriction, t)?))).collect()
}

/// Adversarial demand for one arc.
#[derive(Debug, Clone)]
pub struct WorstCase {
    pub arc: ArcId,
    /// Utilization of `arc` under `demand`, with `OPTU(demand) <= 1`.
    pub utilization: f64,
    pub demand: DemandMatrix,
    /// Box scaling factor chosen by the adversary (1 for fixed boxes).
    pub scale: f64,
}

/// Solves the per-arc adversarial LP: maximize the utilization of `e` over
/// demands in `spec` that are routable with utilization at most 1.
pub fn worst_case_dm(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    e: ArcId,
    spec: &BoxSpec,
    normalization: Normalization,
) -> Result<WorstCase, OracleError> {
    let pairs = spec.active_pairs();
    let coef = coefficients(topo, dags, config, &pairs)?;
    let comms = commodities(topo, normalization.restriction(dags), &box_destinations(spec))?;
    check_routable(topo, &comms, &pairs)?;
    slave_lp(topo, &comms, spec, &coef.by_arc[e.0], e)
}

fn slave_lp(
    topo: &Topology,
    comms: &BTreeMap<NodeId, Commodity>,
    spec: &BoxSpec,
    weights: &[(Pair, f64)],
    e: ArcId,
) -> Result<WorstCase, OracleError> {
    let w: BTreeMap<Pair, f64> = weights.iter().copied().collect();
    let mut lp = LpProblem::new(Sense::Maximize);
    let scale = if spec.scale_free {
        lp.add_nonneg(0.0)
    } else {
        lp.add_var(0.0, 1.0, 1.0)
    };
    let mut dvars: BTreeMap<Pair, VarId> = BTreeMap::new();
    for (p, lo, hi) in spec.iter() {
        if hi <= 0.0 {
            continue;
        }
        let d = lp.add_nonneg(w.get(&p).copied().unwrap_or(0.0));
        dvars.insert(p, d);
        if hi.is_finite() {
            lp.add_row(&[(d, 1.0), (scale, -hi)], Relation::Le, 0.0);
        }
        if lo > 0.0 {
            lp.add_row(&[(scale, lo), (d, -1.0)], Relation::Le, 0.0);
        }
    }
    let mut arc_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); topo.num_arcs()];
    for c in comms.values() {
        let mut vars = vec![None; topo.num_arcs()];
        for &a in &c.arcs {
            let g = lp.add_nonneg(0.0);
            vars[a.0] = Some(g);
            arc_terms[a.0].push((g, 1.0));
        }
        for v in topo.nodes() {
            if v == c.t || !c.reach[v.0] {
                continue;
            }
            let mut coeffs = Vec::new();
            for &a in topo.out_arcs(v) {
                if let Some(g) = vars[a.0] {
                    coeffs.push((g, 1.0));
                }
            }
            for &a in topo.in_arcs(v) {
                if let Some(g) = vars[a.0] {
                    coeffs.push((g, -1.0));
                }
            }
            if let Some(&d) = dvars.get(&(v, c.t)) {
                coeffs.push((d, -1.0));
            }
            lp.add_row(&coeffs, Relation::Ge, 0.0);
        }
    }
    for a in topo.arc_ids() {
        if !arc_terms[a.0].is_empty() {
            lp.add_row(&arc_terms[a.0], Relation::Le, topo.capacity(a));
        }
    }
    let sol = solve_lp(&lp)?;
    require_optimal(&sol, || format!("worst-case demand for {}", topo.arc_name(e)))?;
    let mut demand = DemandMatrix::new();
    for (&(s, t), &d) in &dvars {
        let x = sol.value(d);
        if x > 0.0 {
            demand.set(s, t, x);
        }
    }
    Ok(WorstCase {
        arc: e,
        utilization: sol.objective.max(0.0),
        demand,
        scale: sol.value(scale),
    })
}

/// Dual solution for one arc: a proof that no demand in the set drives the
/// arc's utilization above `value` times the demands-aware optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCertificate {
    pub arc: ArcId,
    pub value: f64,
    /// Length assigned to each arc, indexed by arc id.
    pub lengths: Vec<f64>,
    /// Shortest-path potential of `(node, destination)` under `lengths`.
    pub potentials: BTreeMap<Pair, f64>,
    /// Dual of the upper box bound per pair.
    pub upper_slack: BTreeMap<Pair, f64>,
    /// Dual of the lower box bound per pair.
    pub lower_slack: BTreeMap<Pair, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObliviousCertificate {
    pub ratio: f64,
    pub normalization: Normalization,
    pub scale_free: bool,
    pub edges: Vec<EdgeCertificate>,
}

/// Bounds the worst-case performance ratio of `config` over `spec` by
/// solving, per arc, the dual of the adversarial LP.
pub fn certify_oblivious_ratio(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    spec: &BoxSpec,
    normalization: Normalization,
) -> Result<ObliviousCertificate, OracleError> {
    let pairs = spec.active_pairs();
    let coef = coefficients(topo, dags, config, &pairs)?;
    let comms = commodities(topo, normalization.restriction(dags), &box_destinations(spec))?;
    check_routable(topo, &comms, &pairs)?;
    let edges: Vec<EdgeCertificate> = topo
        .arc_ids()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&e| certificate_lp(topo, &comms, spec, &coef.by_arc[e.0], e))
        .collect::<Result<_, _>>()?;
    let ratio = edges.iter().map(|c| c.value).fold(0.0, f64::max);
    debug!("certified ratio {ratio:.6} over {} arcs", edges.len());
    Ok(ObliviousCertificate {
        ratio,
        normalization,
        scale_free: spec.scale_free,
        edges,
    })
}

fn certificate_lp(
    topo: &Topology,
    comms: &BTreeMap<NodeId, Commodity>,
    spec: &BoxSpec,
    weights: &[(Pair, f64)],
    e: ArcId,
) -> Result<EdgeCertificate, OracleError> {
    let mut cert = EdgeCertificate {
        arc: e,
        value: 0.0,
        lengths: vec![0.0; topo.num_arcs()],
        potentials: BTreeMap::new(),
        upper_slack: BTreeMap::new(),
        lower_slack: BTreeMap::new(),
    };
    if weights.is_empty() {
        return Ok(cert);
    }
    let w: BTreeMap<Pair, f64> = weights.iter().copied().collect();
    let mut lp = LpProblem::new(Sense::Minimize);
    let mut used = vec![false; topo.num_arcs()];
    for c in comms.values() {
        for &a in &c.arcs {
            used[a.0] = true;
        }
    }
    let lengths: Vec<Option<VarId>> = topo
        .arc_ids()
        .map(|a| used[a.0].then(|| lp.add_nonneg(topo.capacity(a))))
        .collect();
    let mut pot: BTreeMap<Pair, VarId> = BTreeMap::new();
    for c in comms.values() {
        for v in topo.nodes() {
            if v != c.t && c.reach[v.0] {
                pot.insert((v, c.t), lp.add_nonneg(0.0));
            }
        }
        for &a in &c.arcs {
            let arc = topo.arc(a);
            let mut coeffs = vec![(lengths[a.0].expect("used arc"), 1.0), (pot[&(arc.src, c.t)], -1.0)];
            if arc.dst != c.t {
                coeffs.push((pot[&(arc.dst, c.t)], 1.0));
            }
            lp.add_row(&coeffs, Relation::Ge, 0.0);
        }
    }
    let mut upper = BTreeMap::new();
    let mut lower = BTreeMap::new();
    let mut scale_row = Vec::new();
    for (p, lo, hi) in spec.iter() {
        if hi <= 0.0 {
            continue;
        }
        let mut coeffs = vec![(pot[&p], 1.0)];
        if hi.is_finite() {
            let s = lp.add_nonneg(if spec.scale_free { 0.0 } else { hi });
            upper.insert(p, s);
            coeffs.push((s, 1.0));
            scale_row.push((s, hi));
        }
        if lo > 0.0 {
            let s = lp.add_nonneg(if spec.scale_free { 0.0 } else { -lo });
            lower.insert(p, s);
            coeffs.push((s, -1.0));
            scale_row.push((s, -lo));
        }
        lp.add_row(&coeffs, Relation::Ge, w.get(&p).copied().unwrap_or(0.0));
    }
    if spec.scale_free && !scale_row.is_empty() {
        lp.add_row(&scale_row, Relation::Le, 0.0);
    }
    let sol = solve_lp(&lp)?;
    require_optimal(&sol, || format!("certificate for {}", topo.arc_name(e)))?;
    cert.value = sol.objective.max(0.0);
    for a in topo.arc_ids() {
        if let Some(v) = lengths[a.0] {
            cert.lengths[a.0] = sol.value(v);
        }
    }
    cert.potentials = pot.iter().map(|(&p, &v)| (p, sol.value(v))).collect();
    cert.upper_slack = upper.iter().map(|(&p, &v)| (p, sol.value(v))).collect();
    cert.lower_slack = lower.iter().map(|(&p, &v)| (p, sol.value(v))).collect();
    Ok(cert)
}

impl ObliviousCertificate {
    /// Re-checks every dual constraint against `config` from scratch.
    pub fn verify(
        &self,
        topo: &Topology,
        dags: &DagSet,
        config: &SplittingConfig,
        spec: &BoxSpec,
        tol: f64,
    ) -> Result<(), OracleError> {
        let fail = |msg: String| Err(OracleError::Certificate(msg));
        let pairs = spec.active_pairs();
        let coef = coefficients(topo, dags, config, &pairs)?;
        let comms = commodities(topo, self.normalization.restriction(dags), &box_destinations(spec))?;
        if self.edges.len() != topo.num_arcs() {
            return fail(format!("{} edge blocks for {} arcs", self.edges.len(), topo.num_arcs()));
        }
        for cert in &self.edges {
            let name = topo.arc_name(cert.arc);
            let pot = |v: NodeId, t: NodeId| {
                if v == t {
                    0.0
                } else {
                    cert.potentials.get(&(v, t)).copied().unwrap_or(0.0)
                }
            };
            let mut bound: f64 = topo.arc_ids().map(|a| topo.capacity(a) * cert.lengths[a.0]).sum();
            if cert.lengths.iter().any(|&x| x < -tol) {
                return fail(format!("{name}: negative length"));
            }
            let mut scale_sum = 0.0;
            for (p, lo, hi) in spec.iter() {
                if hi <= 0.0 {
                    continue;
                }
                let up = cert.upper_slack.get(&p).copied().unwrap_or(0.0);
                let dn = cert.lower_slack.get(&p).copied().unwrap_or(0.0);
                if up < -tol || dn < -tol {
                    return fail(format!("{name}: negative box dual"));
                }
                let term = if hi.is_finite() { hi * up } else { 0.0 } - lo * dn;
                scale_sum += term;
            }
            if spec.scale_free {
                if scale_sum > tol {
                    return fail(format!("{name}: scale row violated by {scale_sum}"));
                }
            } else {
                bound += scale_sum;
            }
            if bound > self.ratio + tol {
                return fail(format!("{name}: bound {bound} exceeds ratio {}", self.ratio));
            }
            for c in comms.values() {
                for &a in &c.arcs {
                    let arc = topo.arc(a);
                    let slack = cert.lengths[a.0] + pot(arc.dst, c.t) - pot(arc.src, c.t);
                    if slack < -tol {
                        return fail(format!("{name}: potential row for {} violated by {slack}", topo.arc_name(a)));
                    }
                }
            }
            for &(p, w) in &coef.by_arc[cert.arc.0] {
                let up = cert.upper_slack.get(&p).copied().unwrap_or(0.0);
                let dn = cert.lower_slack.get(&p).copied().unwrap_or(0.0);
                if pot(p.0, p.1) + up - dn < w - tol {
                    return fail(format!("{name}: coupling for {} -> {} violated", topo.label(p.0), topo.label(p.1)));
                }
            }
        }
        Ok(())
    }

    /// The arc whose bound attains the ratio.
    pub fn binding_arc(&self) -> Option<ArcId> {
        self.edges
            .iter()
            .filter(|c| c.value > 0.0)
            .max_by(|a, b| a.value.total_cmp(&b.value).then(b.arc.cmp(&a.arc)))
            .map(|c| c.arc)
    }

    pub fn to_json(&self, topo: &Topology) -> serde_json::Value {
        let pairs = |m: &BTreeMap<Pair, f64>| {
            m.iter()
                .filter(|(_, &v)| v != 0.0)
                .map(|(&(s, t), &v)| json!({"src": topo.label(s), "dst": topo.label(t), "value": v}))
                .collect::<Vec<_>>()
        };
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|c| {
                let lengths: BTreeMap<String, f64> = topo
                    .arc_ids()
                    .filter(|a| c.lengths[a.0] != 0.0)
                    .map(|a| (topo.arc_name(a), c.lengths[a.0]))
                    .collect();
                json!({
                    "arc": topo.arc_name(c.arc),
                    "value": c.value,
                    "lengths": lengths,
                    "potentials": pairs(&c.potentials),
                    "upper_slack": pairs(&c.upper_slack),
                    "lower_slack": pairs(&c.lower_slack),
                })
            })
            .collect();
        json!({
            "ratio": self.ratio,
            "normalization": self.normalization,
            "scale_free": self.scale_free,
            "edges": edges,
        })
    }
}

/// How a box-shaped demand set is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxMethod {
    /// Vertex enumeration when the pair count is within the guard,
    /// otherwise the certificate.
    #[default]
    Auto,
    Vertices,
    Certificate,
}

#[derive(Debug, Clone, Copy)]
pub struct PerfOptions {
    pub normalization: Normalization,
    pub method: BoxMethod,
    pub vertex_guard: usize,
}

impl Default for PerfOptions {
    fn default() -> Self {
        PerfOptions {
            normalization: Normalization::InDag,
            method: BoxMethod::Auto,
            vertex_guard: VERTEX_GUARD,
        }
    }
}

/// One evaluated demand matrix, or one arc in certificate mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfRow {
    pub label: String,
    pub mxlu: f64,
    pub optu: f64,
    pub ratio: f64,
    pub arc: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerfReport {
    pub normalization: Normalization,
    pub method: String,
    pub ratio: f64,
    pub rows: Vec<PerfRow>,
    #[serde(skip)]
    pub worst: Option<DemandMatrix>,
    #[serde(skip)]
    pub certificate: Option<ObliviousCertificate>,
}

impl PerfReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "mxlu", "optu", "ratio", "arc"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                format!("{}", r.mxlu),
                format!("{}", r.optu),
                format!("{}", r.ratio),
                r.arc.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

fn matrix_row(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    d: &DemandMatrix,
    normalization: Normalization,
    label: String,
    use_optu: bool,
) -> Result<PerfRow, OracleError> {
    let util = max_link_utilization(topo, dags, config, d)?;
    let opt = optu(topo, d, normalization.restriction(dags))?.value;
    let ratio = if util.max == 0.0 && opt == 0.0 {
        1.0
    } else if use_optu {
        util.max / opt
    } else {
        util.max
    };
    Ok(PerfRow {
        label,
        mxlu: util.max,
        optu: opt,
        ratio,
        arc: util.argmax.map(|a| topo.arc_name(a)),
    })
}

/// `PERF(config, spec)`: worst ratio of the configuration's maximum link
/// utilization to the demands-aware optimum over the demand set.
pub fn perf_ratio(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    spec: &DemandSpec,
    opts: PerfOptions,
) -> Result<PerfReport, OracleError> {
    let mut rows = Vec::new();
    let mut worst = None;
    let method;
    let mut certificate = None;
    match spec {
        DemandSpec::Discrete(ms) => {
            method = "discrete";
            for (i, d) in ms.iter().enumerate() {
                rows.push(matrix_row(topo, dags, config, d, opts.normalization, format!("D{i}"), true)?);
            }
            worst = argmax(&rows).map(|i| ms[i].clone());
        }
        DemandSpec::Box(b) => {
            let pairs = b.active_pairs().len();
            let enumerate = match opts.method {
                BoxMethod::Auto => pairs <= opts.vertex_guard,
                BoxMethod::Vertices => true,
                BoxMethod::Certificate => false,
            };
            if enumerate {
                method = "vertices";
                let vs = routable_vertices(topo, b, opts.normalization.restriction(dags), opts.vertex_guard)?;
                for (i, d) in vs.iter().enumerate() {
                    rows.push(matrix_row(topo, dags, config, d, opts.normalization, format!("V{i}"), b.scale_free)?);
                }
                worst = argmax(&rows).map(|i| vs[i].clone());
            } else {
                method = "certificate";
                let cert = certify_oblivious_ratio(topo, dags, config, b, opts.normalization)?;
                for c in &cert.edges {
                    rows.push(PerfRow {
                        label: topo.arc_name(c.arc),
                        mxlu: c.value,
                        optu: 1.0,
                        ratio: c.value,
                        arc: Some(topo.arc_name(c.arc)),
                    });
                }
                certificate = Some(cert);
            }
        }
    }
    let ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(PerfReport {
        normalization: opts.normalization,
        method: method.to_string(),
        ratio,
        rows,
        worst,
        certificate,
    })
}

fn argmax(rows: &[PerfRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if best.map_or(true, |b| r.ratio > rows[b].ratio) {
            best = Some(i);
        }
    }
    best
}
