//! Realizing splitting ratios with plain ECMP: every next hop is announced
//! `m` times (`m - 1` virtual links), so ECMP's equal split yields `m / sum m`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{distances_to, DagSet};
use crate::demand::DemandSpec;
use crate::oracle::{perf_ratio, OracleError, PerfOptions, PerfReport};
use crate::routing::{RoutingError, SplittingConfig};
use crate::topology::{NodeId, Topology};

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("no next hops to split over")]
    Empty,
    #[error("split targets must be positive, got {0}")]
    NonPositive(f64),
    #[error("plan refers to unknown node {0:?}")]
    UnknownNode(String),
    #[error("plan uses {0}, which is not in the DAG")]
    NotInDag(String),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

const TIE: f64 = 1e-12;

/// Integer multiplicities approximating `targets`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplicities {
    pub counts: Vec<u32>,
    /// Largest `|m_i / sum m - target_i|`.
    pub error: f64,
}

/// Multiplicities `m_i >= 1` with `sum (m_i - 1) <= budget * k` minimizing the
/// largest ratio error. Ties go to the smallest `sum m`, then to the
/// lexicographically smallest tuple.
pub fn approx_multiplicities(targets: &[f64], budget: u32) -> Result<Multiplicities, TranslateError> {
    if targets.is_empty() {
        return Err(TranslateError::Empty);
    }
    if let Some(&bad) = targets.iter().find(|&&x| !(x > 0.0)) {
        return Err(TranslateError::NonPositive(bad));
    }
    let k = targets.len();
    let sum: f64 = targets.iter().sum();
    let targets: Vec<f64> = targets.iter().map(|x| x / sum).collect();
    let extra = budget as usize * k;
    let mut best: Option<Multiplicities> = None;
    for total in k..=k + extra {
        let (error, counts) = best_for_total(&targets, total);
        if best.as_ref().map_or(true, |b| error < b.error - TIE) {
            best = Some(Multiplicities { counts, error });
        }
    }
    Ok(best.expect("at least one total"))
}

/// Ranges `[lo, hi]` of counts within `eps` of each target at this total.
fn ranges(targets: &[f64], total: usize, eps: f64) -> Vec<(u32, u32)> {
    let n = total as f64;
    targets
        .iter()
        .map(|t| {
            let lo = ((t - eps) * n - 1e-9).ceil().max(1.0);
            let hi = ((t + eps) * n + 1e-9).floor();
            (lo as u32, hi.max(0.0) as u32)
        })
        .collect()
}

fn feasible(r: &[(u32, u32)], total: usize) -> bool {
    let lo: usize = r.iter().map(|x| x.0 as usize).sum();
    let hi: usize = r.iter().map(|x| x.1 as usize).sum();
    r.iter().all(|x| x.0 <= x.1) && lo <= total && total <= hi
}

/// Smallest achievable max error at a fixed total and the lexicographically
/// smallest tuple achieving it.
fn best_for_total(targets: &[f64], total: usize) -> (f64, Vec<u32>) {
    let n = total as f64;
    // The optimum is one of the errors a single count can have.
    let mut candidates: Vec<f64> = targets
        .iter()
        .flat_map(|&t| (1..=total).map(move |m| (m as f64 / n - t).abs()))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(&ranges(targets, total, candidates[mid]), total) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let r = ranges(targets, total, candidates[lo]);
    let mut counts = Vec::with_capacity(r.len());
    let mut used = 0usize;
    for (i, &(l, h)) in r.iter().enumerate() {
        let rest: usize = r[i + 1..].iter().map(|x| x.1 as usize).sum();
        let m = (l as usize).max(total.saturating_sub(used + rest));
        debug_assert!(m <= h as usize);
        counts.push(m as u32);
        used += m;
    }
    let error = counts
        .iter()
        .zip(targets)
        .map(|(&m, t)| (m as f64 / n - t).abs())
        .fold(0.0, f64::max);
    (error, counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextHop {
    pub node: String,
    pub target: f64,
    pub multiplicity: u32,
    pub achieved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub node: String,
    pub destination: String,
    /// Next hops with a positive target, in arc order.
    pub next_hops: Vec<NextHop>,
    pub error: f64,
    pub virtual_links: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLinkPlan {
    /// Extra announcements allowed per next hop, pooled over the interface.
    pub budget: u32,
    pub entries: Vec<SplitEntry>,
}

impl VirtualLinkPlan {
    /// Quantizes every split node of `config`.
    pub fn from_config(topo: &Topology, dags: &DagSet, config: &SplittingConfig, budget: u32) -> Result<Self, TranslateError> {
        let mut entries = Vec::new();
        for (t, dag) in dags.iter() {
            for &v in dag.order() {
                if v == t {
                    continue;
                }
                let hops: Vec<_> = dag
                    .out_arcs(topo, v)
                    .map(|a| (a, config.ratio(t, a)))
                    .filter(|&(_, r)| r > 0.0)
                    .collect();
                if hops.is_empty() {
                    continue;
                }
                let targets: Vec<f64> = hops.iter().map(|h| h.1).collect();
                let m = approx_multiplicities(&targets, budget)?;
                let total: u32 = m.counts.iter().sum();
                entries.push(SplitEntry {
                    node: topo.label(v).to_string(),
                    destination: topo.label(t).to_string(),
                    next_hops: hops
                        .iter()
                        .zip(&m.counts)
                        .map(|(&(a, r), &c)| NextHop {
                            node: topo.label(topo.arc(a).dst).to_string(),
                            target: r,
                            multiplicity: c,
                            achieved: f64::from(c) / f64::from(total),
                        })
                        .collect(),
                    error: m.error,
                    virtual_links: total - m.counts.len() as u32,
                });
            }
        }
        Ok(VirtualLinkPlan { budget, entries })
    }

    /// The ratios ECMP realizes under this plan. Nodes without an entry
    /// keep an even split.
    pub fn to_config(&self, topo: &Topology, dags: &DagSet) -> Result<SplittingConfig, TranslateError> {
        let node = |l: &str| topo.node(l).map_err(|_| TranslateError::UnknownNode(l.to_string()));
        let mut weights = std::collections::BTreeMap::new();
        for t in dags.destinations() {
            weights.insert(t, vec![0.0; topo.num_arcs()]);
        }
        let mut planned = std::collections::BTreeSet::new();
        for e in &self.entries {
            let (v, t) = (node(&e.node)?, node(&e.destination)?);
            let dag = dags.get(t).ok_or_else(|| TranslateError::NotInDag(e.destination.clone()))?;
            let w = weights.get_mut(&t).expect("every destination present");
            for h in &e.next_hops {
                let a = topo
                    .find_arc(v, node(&h.node)?)
                    .filter(|&a| dag.contains(a))
                    .ok_or_else(|| TranslateError::NotInDag(format!("{}->{}", e.node, h.node)))?;
                w[a.0] = f64::from(h.multiplicity);
            }
            planned.insert((v, t));
        }
        for (t, dag) in dags.iter() {
            let w = weights.get_mut(&t).expect("every destination present");
            for &v in dag.order() {
                if v != t && !planned.contains(&(v, t)) {
                    for a in dag.out_arcs(topo, v) {
                        w[a.0] = 1.0;
                    }
                }
            }
        }
        let config = SplittingConfig::normalized(topo, dags, &weights);
        config.validate(topo, dags)?;
        Ok(config)
    }

    pub fn max_error(&self) -> f64 {
        self.entries.iter().map(|e| e.error).fold(0.0, f64::max)
    }
}

/// One fake node attached at `at` that announces the destination at
/// `advertised_cost` and forwards to `next_hop`, repeated `count` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advertisement {
    pub at: String,
    pub next_hop: String,
    pub count: u32,
    pub advertised_cost: f64,
}

/// An arc that carries traffic although it is not on a shortest path; it
/// needs an announcement making it look as short as the best route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub from: String,
    pub to: String,
    pub advertised_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationLies {
    pub destination: String,
    pub advertisements: Vec<Advertisement>,
    pub realizations: Vec<Realization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiePlan {
    pub budget: u32,
    pub destinations: Vec<DestinationLies>,
}

impl LiePlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Lies per destination: `m - 1` extra announcements per next hop and a
/// realization for every used arc outside the shortest-path DAG. Costs are
/// the node's shortest distance under `weights`, so every lie ties with the
/// real best route.
pub fn emit_lie_plan(topo: &Topology, dags: &DagSet, weights: &[f64], plan: &VirtualLinkPlan) -> Result<LiePlan, TranslateError> {
    let node = |l: &str| topo.node(l).map_err(|_| TranslateError::UnknownNode(l.to_string()));
    let mut destinations = Vec::new();
    for (t, _) in dags.iter() {
        let dist = distances_to(topo, weights, t);
        let spf = dags.spf_arcs(t);
        let mut lies = DestinationLies {
            destination: topo.label(t).to_string(),
            advertisements: Vec::new(),
            realizations: Vec::new(),
        };
        for e in plan.entries.iter().filter(|e| node(&e.destination).ok() == Some(t)) {
            let v: NodeId = node(&e.node)?;
            for h in &e.next_hops {
                let a = topo
                    .find_arc(v, node(&h.node)?)
                    .ok_or_else(|| TranslateError::NotInDag(format!("{}->{}", e.node, h.node)))?;
                if !spf.contains(&a) {
                    lies.realizations.push(Realization {
                        from: e.node.clone(),
                        to: h.node.clone(),
                        advertised_cost: dist[v.0],
                    });
                }
                if h.multiplicity > 1 {
                    lies.advertisements.push(Advertisement {
                        at: e.node.clone(),
                        next_hop: h.node.clone(),
                        count: h.multiplicity - 1,
                        advertised_cost: dist[v.0],
                    });
                }
            }
        }
        destinations.push(lies);
    }
    Ok(LiePlan {
        budget: plan.budget,
        destinations,
    })
}

/// Performance of the ratios ECMP actually realizes under `plan`.
pub fn evaluate_quantized(
    topo: &Topology,
    dags: &DagSet,
    plan: &VirtualLinkPlan,
    spec: &DemandSpec,
    opts: PerfOptions,
) -> Result<PerfReport, TranslateError> {
    let config = plan.to_config(topo, dags)?;
    Ok(perf_ratio(topo, dags, &config, spec, opts)?)
}
