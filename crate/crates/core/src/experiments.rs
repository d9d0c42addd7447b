//! Protocol comparison over uncertainty margins, and path stretch.

use std::collections::{BTreeMap, VecDeque};

use log::info;
use serde::Serialize;
use thiserror::Error;

use crate::dag::{build_dags, DagError, DagSet};
use crate::demand::{margin_box, DemandError, DemandMatrix, DemandSpec, Pair};
use crate::oracle::{config_from_flows, optu, perf_ratio, Normalization, OracleError, PerfOptions};
use crate::routing::{ecmp_config, RoutingError, SplittingConfig};
use crate::splitopt::{optimize_oblivious, seed_from_ecmp, GpError, GpOptions};
use crate::topology::{NodeId, Topology};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no demand between distinct nodes")]
    NoDemand,
    #[error("{} has no hop path to {}", .0, .1)]
    Disconnected(String, String),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Optimizer(#[from] GpError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub network: String,
    pub margin: f64,
    pub ecmp: f64,
    pub base: f64,
    pub oblivious: f64,
    pub partial: f64,
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Four routings evaluated over each margin box around `base`, all against
/// the in-DAG optimum:
/// - `ecmp`: even split over shortest paths under `weights`;
/// - `base`: the optimal in-DAG routing for `base` itself, held fixed;
/// - `oblivious`: optimized for every matrix on the same pairs;
/// - `partial`: optimized for the margin box, starting from `oblivious`.
pub fn compare(
    network: &str,
    topo: &Topology,
    weights: &[f64],
    base: &DemandMatrix,
    margins: &[f64],
    opts: &GpOptions,
) -> Result<Vec<CompareRow>, ExperimentError> {
    let pairs: Vec<Pair> = base.iter().filter(|&((s, t), d)| s != t && d > 0.0).map(|(p, _)| p).collect();
    if pairs.is_empty() {
        return Err(ExperimentError::NoDemand);
    }
    let dests = base.destinations();
    let (dags, _) = build_dags(topo, weights, &dests)?;
    let opts = GpOptions {
        normalization: Normalization::InDag,
        ..opts.clone()
    };
    let perf = PerfOptions {
        normalization: Normalization::InDag,
        ..Default::default()
    };

    let ecmp = ecmp_config(topo, &dags)?;
    let base_cfg = config_from_flows(topo, &dags, &optu(topo, base, Some(&dags))?.flows);
    let DemandSpec::Box(unbounded) = DemandSpec::unbounded(&pairs) else {
        unreachable!("unbounded spec is a box")
    };
    let seed = seed_from_ecmp(topo, &dags);
    let oblivious = optimize_oblivious(topo, &dags, &unbounded, &seed, &opts)?.config;

    let mut rows = Vec::new();
    for &margin in margins {
        let spec = margin_box(base, margin, true)?;
        let DemandSpec::Box(b) = &spec else {
            unreachable!("margin box")
        };
        let partial = optimize_oblivious(topo, &dags, b, &oblivious, &opts)?.config;
        let eval = |cfg: &SplittingConfig| perf_ratio(topo, &dags, cfg, &spec, perf).map(|r| r.ratio);
        let row = CompareRow {
            network: network.to_string(),
            margin,
            ecmp: eval(&ecmp)?,
            base: eval(&base_cfg)?,
            oblivious: eval(&oblivious)?,
            partial: eval(&partial)?,
        };
        info!("margin {margin}: {row:?}");
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StretchRow {
    pub src: String,
    pub dst: String,
    /// Expected hop count under the splitting ratios.
    pub expected_hops: f64,
    /// Fewest hops from `src` to `dst` in the topology.
    pub min_hops: usize,
    pub stretch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StretchReport {
    pub rows: Vec<StretchRow>,
    pub average: f64,
}

impl StretchReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

fn hops_to(topo: &Topology, t: NodeId) -> Vec<Option<usize>> {
    let mut d = vec![None; topo.num_nodes()];
    d[t.0] = Some(0);
    let mut queue = VecDeque::from([t]);
    while let Some(v) = queue.pop_front() {
        for &a in topo.in_arcs(v) {
            let u = topo.arc(a).src;
            if d[u.0].is_none() {
                d[u.0] = Some(d[v.0].unwrap() + 1);
                queue.push_back(u);
            }
        }
    }
    d
}

/// Expected hop count of every pair's traffic relative to the fewest hops.
/// Values below 1 are possible when the weights themselves avoid the
/// fewest-hop path.
pub fn stretch(topo: &Topology, dags: &DagSet, config: &SplittingConfig, pairs: &[Pair]) -> Result<StretchReport, ExperimentError> {
    let mut rows = Vec::new();
    let mut expected: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    for &(s, t) in pairs {
        let dag = dags.get(t).ok_or(OracleError::MissingDestination(topo.label(t).to_string()))?;
        let h = expected.entry(t).or_insert_with(|| {
            let mut h = vec![0.0; topo.num_nodes()];
            for &v in dag.order().iter().rev() {
                h[v.0] = dag
                    .out_arcs(topo, v)
                    .map(|a| config.ratio(t, a) * (1.0 + h[topo.arc(a).dst.0]))
                    .sum();
            }
            h
        });
        let min = hops_to(topo, t)[s.0]
            .filter(|&m| m > 0)
            .ok_or_else(|| ExperimentError::Disconnected(topo.label(s).to_string(), topo.label(t).to_string()))?;
        rows.push(StretchRow {
            src: topo.label(s).to_string(),
            dst: topo.label(t).to_string(),
            expected_hops: h[s.0],
            min_hops: min,
            stretch: h[s.0] / min as f64,
        });
    }
    let average = if rows.is_empty() {
        1.0
    } else {
        rows.iter().map(|r| r.stretch).sum::<f64>() / rows.len() as f64
    };
    Ok(StretchReport { rows, average })
}
