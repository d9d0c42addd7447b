//! Per-destination splitting ratios, flow fractions and link utilization for
//! a fixed demand matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::DagSet;
use crate::demand::{DemandMatrix, Pair};
use crate::topology::{ArcId, NodeId, Topology, TopologyError};

/// Tolerance on per-node ratio sums.
pub const SPLIT_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("no DAG for destination {0}")]
    MissingDestination(String),
    #[error("ratio vector for {dest} has {got} entries, expected {expected}")]
    WrongLength { dest: String, got: usize, expected: usize },
    #[error("destination {dest}: ratio {ratio} on {arc} outside [0, 1]")]
    OutOfRange { dest: String, arc: String, ratio: f64 },
    #[error("destination {dest}: arc {arc} is not in the DAG but has ratio {ratio}")]
    OffDag { dest: String, arc: String, ratio: f64 },
    #[error("destination {dest}: ratios at {node} sum to {sum}")]
    BadSum { dest: String, node: String, sum: f64 },
    #[error("destination {dest}: node {node} has no shortest-path next hop")]
    NoNextHop { dest: String, node: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Format(String),
}

/// Splitting ratios `phi_t(e)`, one dense per-arc vector per destination.
/// Arcs outside `E_t` carry zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingConfig {
    ratios: BTreeMap<NodeId, Vec<f64>>,
}

impl SplittingConfig {
    /// Validates `ratios` against `dags`: one vector per destination, zero
    /// off the DAG, values in `[0, 1]`, and unit sums at every node with
    /// outgoing DAG arcs.
    pub fn new(topo: &Topology, dags: &DagSet, ratios: BTreeMap<NodeId, Vec<f64>>) -> Result<Self, RoutingError> {
        let c = SplittingConfig { ratios };
        c.validate(topo, dags)?;
        Ok(c)
    }

    /// Builds from per-node weights, normalizing each node's outgoing DAG arcs
    /// to sum to one. Nodes whose weights are all zero split uniformly.
    pub fn normalized(topo: &Topology, dags: &DagSet, weights: &BTreeMap<NodeId, Vec<f64>>) -> Self {
        let mut ratios = BTreeMap::new();
        for (t, dag) in dags.iter() {
            let w = weights.get(&t);
            let mut r = vec![0.0; topo.num_arcs()];
            for v in topo.nodes() {
                let outs: Vec<ArcId> = dag.out_arcs(topo, v).collect();
                if outs.is_empty() {
                    continue;
                }
                let val = |a: ArcId| w.map(|w| w[a.0].max(0.0)).unwrap_or(0.0);
                let sum: f64 = outs.iter().map(|&a| val(a)).sum();
                for &a in &outs {
                    r[a.0] = if sum > 0.0 { val(a) / sum } else { 1.0 / outs.len() as f64 };
                }
            }
            ratios.insert(t, r);
        }
        SplittingConfig { ratios }
    }

    pub fn validate(&self, topo: &Topology, dags: &DagSet) -> Result<(), RoutingError> {
        for (t, dag) in dags.iter() {
            let dest = || topo.label(t).to_string();
            let r = self
                .ratios
                .get(&t)
                .ok_or_else(|| RoutingError::MissingDestination(dest()))?;
            if r.len() != topo.num_arcs() {
                return Err(RoutingError::WrongLength {
                    dest: dest(),
                    got: r.len(),
                    expected: topo.num_arcs(),
                });
            }
            for a in topo.arc_ids() {
                let ratio = r[a.0];
                if !(0.0..=1.0 + SPLIT_SUM_TOL).contains(&ratio) {
                    return Err(RoutingError::OutOfRange { dest: dest(), arc: topo.arc_name(a), ratio });
                }
                if ratio != 0.0 && !dag.contains(a) {
                    return Err(RoutingError::OffDag { dest: dest(), arc: topo.arc_name(a), ratio });
                }
            }
            for v in topo.nodes() {
                let mut outs = dag.out_arcs(topo, v).peekable();
                if outs.peek().is_none() {
                    continue;
                }
                let sum: f64 = outs.map(|a| r[a.0]).sum();
                if (sum - 1.0).abs() > SPLIT_SUM_TOL {
                    return Err(RoutingError::BadSum {
                        dest: dest(),
                        node: topo.label(v).to_string(),
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn ratio(&self, t: NodeId, a: ArcId) -> f64 {
        self.ratios.get(&t).map(|r| r[a.0]).unwrap_or(0.0)
    }

    pub fn ratios(&self, t: NodeId) -> Option<&[f64]> {
        self.ratios.get(&t).map(Vec::as_slice)
    }

    pub fn destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ratios.keys().copied()
    }

    pub fn as_map(&self) -> &BTreeMap<NodeId, Vec<f64>> {
        &self.ratios
    }

    /// `{destination: [{src, dst, ratio}]}` listing every DAG arc.
    pub fn to_json(&self, topo: &Topology, dags: &DagSet) -> serde_json::Value {
        let mut out: BTreeMap<String, Vec<RatioRow>> = BTreeMap::new();
        for (t, dag) in dags.iter() {
            let rows = dag
                .arcs()
                .iter()
                .map(|&a| {
                    let arc = topo.arc(a);
                    RatioRow {
                        src: topo.label(arc.src).to_string(),
                        dst: topo.label(arc.dst).to_string(),
                        ratio: self.ratio(t, a),
                    }
                })
                .collect();
            out.insert(topo.label(t).to_string(), rows);
        }
        serde_json::to_value(out).expect("plain data serializes")
    }

    pub fn from_json(topo: &Topology, dags: &DagSet, value: &serde_json::Value) -> Result<Self, RoutingError> {
        let rows: BTreeMap<String, Vec<RatioRow>> = serde_json::from_value(value.clone())?;
        let mut ratios = BTreeMap::new();
        for (dest, list) in rows {
            let t = topo.node(&dest)?;
            let mut r = vec![0.0; topo.num_arcs()];
            for row in list {
                let (s, d) = (topo.node(&row.src)?, topo.node(&row.dst)?);
                let a = topo
                    .find_arc(s, d)
                    .ok_or_else(|| RoutingError::Format(format!("no arc {} -> {}", row.src, row.dst)))?;
                r[a.0] = row.ratio;
            }
            ratios.insert(t, r);
        }
        SplittingConfig::new(topo, dags, ratios)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub src: String,
    pub dst: String,
    pub ratio: f64,
}

/// Equal split over each node's shortest-path next hops; arcs added by
/// augmentation get zero.
pub fn ecmp_config(topo: &Topology, dags: &DagSet) -> Result<SplittingConfig, RoutingError> {
    let mut ratios = BTreeMap::new();
    for (t, dag) in dags.iter() {
        let spf = dags.spf_arcs(t);
        let mut r = vec![0.0; topo.num_arcs()];
        for v in topo.nodes() {
            if dag.out_arcs(topo, v).next().is_none() {
                continue;
            }
            let hops: Vec<ArcId> = topo.out_arcs(v).iter().copied().filter(|a| spf.contains(a)).collect();
            if hops.is_empty() {
                return Err(RoutingError::NoNextHop {
                    dest: topo.label(t).to_string(),
                    node: topo.label(v).to_string(),
                });
            }
            for a in &hops {
                r[a.0] = 1.0 / hops.len() as f64;
            }
        }
        ratios.insert(t, r);
    }
    SplittingConfig::new(topo, dags, ratios)
}

/// `f_st(v)` for every node `v`: the fraction of the `s -> t` demand that
/// enters `v`.
pub fn propagate_fractions(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    (s, t): Pair,
) -> Result<Vec<f64>, RoutingError> {
    let dag = dags
        .get(t)
        .ok_or_else(|| RoutingError::MissingDestination(topo.label(t).to_string()))?;
    let r = config
        .ratios(t)
        .ok_or_else(|| RoutingError::MissingDestination(topo.label(t).to_string()))?;
    let mut f = vec![0.0; topo.num_nodes()];
    f[s.0] = 1.0;
    for &v in dag.order() {
        if f[v.0] == 0.0 || v == t {
            continue;
        }
        for a in dag.out_arcs(topo, v) {
            f[topo.arc(a).dst.0] += f[v.0] * r[a.0];
        }
    }
    // A source is its own starting point even if another path re-enters it,
    // which acyclicity rules out; keep the definition explicit anyway.
    f[s.0] = 1.0;
    Ok(f)
}

/// Flow fractions for a set of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFractions {
    pub fractions: BTreeMap<Pair, Vec<f64>>,
    /// Pairs whose source has no outgoing arc in the destination's DAG.
    pub unroutable: Vec<Pair>,
}

impl FlowFractions {
    pub fn get(&self, p: Pair) -> Option<&[f64]> {
        self.fractions.get(&p).map(Vec::as_slice)
    }
}

pub fn flow_fractions(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    pairs: &[Pair],
) -> Result<FlowFractions, RoutingError> {
    let mut fractions = BTreeMap::new();
    let mut unroutable = Vec::new();
    for &(s, t) in pairs {
        if s == t {
            continue;
        }
        let f = propagate_fractions(topo, dags, config, (s, t))?;
        let dag = dags.get(t).expect("checked by propagate_fractions");
        if dag.out_arcs(topo, s).next().is_none() {
            unroutable.push((s, t));
        }
        fractions.insert((s, t), f);
    }
    Ok(FlowFractions { fractions, unroutable })
}

/// Per-arc loads and utilizations under one demand matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationReport {
    pub loads: Vec<f64>,
    pub utilization: Vec<f64>,
    /// Maximum link utilization; zero for an all-zero matrix.
    pub max: f64,
    pub argmax: Option<ArcId>,
    pub unroutable: Vec<Pair>,
}

/// Loads by aggregate injection per destination:
/// `F(v) = d(v, t) + sum over DAG arcs (u, v) of F(u) phi(u, v)`.
pub fn max_link_utilization(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    demand: &DemandMatrix,
) -> Result<UtilizationReport, RoutingError> {
    let mut loads = vec![0.0; topo.num_arcs()];
    let mut unroutable = Vec::new();
    for t in demand.destinations() {
        let dag = dags
            .get(t)
            .ok_or_else(|| RoutingError::MissingDestination(topo.label(t).to_string()))?;
        let r = config
            .ratios(t)
            .ok_or_else(|| RoutingError::MissingDestination(topo.label(t).to_string()))?;
        let mut inflow = vec![0.0; topo.num_nodes()];
        for ((s, dst), d) in demand.iter() {
            if dst == t {
                inflow[s.0] += d;
                if dag.out_arcs(topo, s).next().is_none() {
                    unroutable.push((s, t));
                }
            }
        }
        for &v in dag.order() {
            if inflow[v.0] == 0.0 || v == t {
                continue;
            }
            for a in dag.out_arcs(topo, v) {
                let x = inflow[v.0] * r[a.0];
                loads[a.0] += x;
                inflow[topo.arc(a).dst.0] += x;
            }
        }
    }
    let utilization: Vec<f64> = topo.arc_ids().map(|a| loads[a.0] / topo.capacity(a)).collect();
    let mut max = 0.0;
    let mut argmax = None;
    for a in topo.arc_ids() {
        if utilization[a.0] > max {
            max = utilization[a.0];
            argmax = Some(a);
        }
    }
    Ok(UtilizationReport {
        loads,
        utilization,
        max,
        argmax,
        unroutable,
    })
}

/// Coefficient of each pair's demand in the utilization of arc `e = (u, v)`:
/// `f_st(u) phi_t(e) / c_e`. Zero coefficients are omitted.
pub fn edge_coefficients(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    fractions: &FlowFractions,
    e: ArcId,
) -> Vec<(Pair, f64)> {
    let arc = topo.arc(e);
    let mut out = Vec::new();
    for (&(s, t), f) in &fractions.fractions {
        if !dags.get(t).is_some_and(|d| d.contains(e)) {
            continue;
        }
        let w = f[arc.src.0] * config.ratio(t, e) / arc.capacity;
        if w > 0.0 {
            out.push(((s, t), w));
        }
    }
    out
}
