//! Local search over integer link weights: repeatedly find the demand matrix
//! that hurts the current ECMP routing most, remember it, and move a single
//! weight to improve the worst case over every remembered matrix.

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::dag::{build_spf_dags, DagSet};
use crate::demand::{DemandMatrix, DemandSpec};
use crate::oracle::{optu, perf_ratio, worst_case_dm, Normalization, OracleError, PerfOptions};
use crate::routing::{ecmp_config, max_link_utilization};
use crate::topology::{ArcId, NodeId, Topology};

pub const MAX_WEIGHT: u32 = 65_536;
const INITIAL_MAX: f64 = 100.0;
const STEPS: [i64; 6] = [1, -1, 2, -2, 4, -4];

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Stop once the worst-case ECMP ratio is at most this.
    pub bound: f64,
    /// Iteration cap.
    pub budget: usize,
    /// Yardstick for the worst case. DAGs change between iterations, so the
    /// default compares against unrestricted routing.
    pub normalization: Normalization,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            bound: 1.0,
            budget: 200,
            normalization: Normalization::AnyPd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchStep {
    pub iteration: usize,
    /// Worst-case ECMP ratio of the weights at the start of the iteration.
    pub worst: f64,
    /// Max over remembered matrices before and after the move.
    pub critical_before: f64,
    pub critical: f64,
    /// `(arc, delta)` of the accepted move, if any.
    pub arc: Option<String>,
    pub delta: i64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub weights: Vec<u32>,
    pub worst: f64,
    pub critical: Vec<DemandMatrix>,
    pub trace: Vec<SearchStep>,
    /// The bound was met.
    pub converged: bool,
    /// No single-weight move improved the remembered matrices.
    pub stuck: bool,
}

/// Inverse-capacity weights scaled so the smallest is 1 and rounded; if the
/// spread exceeds 100 they are compressed to a maximum of 100 first.
pub fn integer_weights(topo: &Topology) -> Vec<u32> {
    let inv: Vec<f64> = topo.arcs().iter().map(|a| 1.0 / a.capacity).collect();
    let min = inv.iter().copied().fold(f64::INFINITY, f64::min);
    let rel: Vec<f64> = inv.iter().map(|w| w / min).collect();
    let max = rel.iter().copied().fold(1.0, f64::max);
    let factor = if max > INITIAL_MAX { INITIAL_MAX / max } else { 1.0 };
    rel.iter().map(|w| ((w * factor).round() as u32).clamp(1, MAX_WEIGHT)).collect()
}

fn as_f64(w: &[u32]) -> Vec<f64> {
    w.iter().map(|&x| f64::from(x)).collect()
}

struct Worst {
    ratio: f64,
    demand: DemandMatrix,
}

fn ecmp_dags(topo: &Topology, weights: &[u32], dests: &[NodeId]) -> Result<DagSet, OracleError> {
    Ok(build_spf_dags(topo, &as_f64(weights), dests)?)
}

fn worst_case(
    topo: &Topology,
    weights: &[u32],
    spec: &DemandSpec,
    dests: &[NodeId],
    norm: Normalization,
) -> Result<Worst, OracleError> {
    let dags = ecmp_dags(topo, weights, dests)?;
    let cfg = ecmp_config(topo, &dags)?;
    match spec {
        DemandSpec::Discrete(_) => {
            let opts = PerfOptions {
                normalization: norm,
                ..Default::default()
            };
            let r = perf_ratio(topo, &dags, &cfg, spec, opts)?;
            Ok(Worst {
                ratio: r.ratio,
                demand: r.worst.unwrap_or_default(),
            })
        }
        DemandSpec::Box(b) => {
            let arcs: Vec<ArcId> = topo.arc_ids().collect();
            let cases = arcs
                .par_iter()
                .map(|&a| worst_case_dm(topo, &dags, &cfg, a, b, norm))
                .collect::<Result<Vec<_>, _>>()?;
            let best = cases
                .into_iter()
                .reduce(|x, y| if y.utilization > x.utilization { y } else { x })
                .expect("topology has arcs");
            Ok(Worst {
                ratio: best.utilization,
                demand: best.demand,
            })
        }
    }
}

fn critical_max(
    topo: &Topology,
    weights: &[u32],
    critical: &[DemandMatrix],
    dests: &[NodeId],
) -> Result<f64, OracleError> {
    let dags = ecmp_dags(topo, weights, dests)?;
    let cfg = ecmp_config(topo, &dags)?;
    let mut worst: f64 = 0.0;
    for d in critical {
        worst = worst.max(max_link_utilization(topo, &dags, &cfg, d)?.max);
    }
    Ok(worst)
}

/// Local search from [`integer_weights`] toward weights whose ECMP routing
/// has a worst-case ratio at most `opts.bound` over `spec`.
pub fn local_search_weights(topo: &Topology, spec: &DemandSpec, opts: SearchOptions) -> Result<SearchResult, OracleError> {
    let dests = spec.destinations();
    let mut weights = integer_weights(topo);
    let mut critical: Vec<DemandMatrix> = Vec::new();
    let mut trace = Vec::new();
    let mut worst = worst_case(topo, &weights, spec, &dests, opts.normalization)?;
    let mut stuck = false;

    for iteration in 1..=opts.budget {
        if !worst.demand.is_zero() {
            let scale = optu(topo, &worst.demand, opts.normalization.restriction(&ecmp_dags(topo, &weights, &dests)?))?.value;
            if scale > 0.0 {
                critical.push(worst.demand.scaled(1.0 / scale));
            }
        }
        let current = critical_max(topo, &weights, &critical, &dests)?;
        let mut step = SearchStep {
            iteration,
            worst: worst.ratio,
            critical_before: current,
            critical: current,
            arc: None,
            delta: 0,
        };
        if worst.ratio <= opts.bound {
            trace.push(step);
            break;
        }

        let moves: Vec<(ArcId, i64)> = topo
            .arc_ids()
            .flat_map(|a| STEPS.iter().map(move |&d| (a, d)))
            .collect();
        let scored = moves
            .par_iter()
            .filter_map(|&(a, d)| {
                let w = (i64::from(weights[a.0]) + d).clamp(1, i64::from(MAX_WEIGHT)) as u32;
                if w == weights[a.0] {
                    return None;
                }
                let mut cand = weights.clone();
                cand[a.0] = w;
                Some(critical_max(topo, &cand, &critical, &dests).map(|v| (v, a, d, cand)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        // Strict improvement only; the earliest (arc, step) wins ties.
        let best = scored
            .into_iter()
            .fold(None::<(f64, ArcId, i64, Vec<u32>)>, |acc, c| match acc {
                Some(b) if b.0 <= c.0 => Some(b),
                _ => Some(c),
            })
            .filter(|b| b.0 < step.critical - 1e-12);
        let Some((value, arc, delta, cand)) = best else {
            debug!("local search: no improving move at iteration {iteration}");
            trace.push(step);
            stuck = true;
            break;
        };
        step.arc = Some(topo.arc_name(arc));
        step.delta = delta;
        step.critical = value;
        trace.push(step);
        weights = cand;
        worst = worst_case(topo, &weights, spec, &dests, opts.normalization)?;
    }
    info!(
        "local search: worst-case ECMP ratio {:.4} after {} iterations",
        worst.ratio,
        trace.len()
    );
    Ok(SearchResult {
        converged: worst.ratio <= opts.bound,
        weights,
        worst: worst.ratio,
        critical,
        trace,
        stuck,
    })
}
