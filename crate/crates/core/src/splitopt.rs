//! Splitting-ratio optimization inside fixed DAGs.
//!
//! Ratios and flow fractions are optimized in log space. Flow fractions obey
//! `log sum exp(f(u) + phi(u, v)) <= f(v)`, which is convex; the per-node
//! condition `sum phi >= 1` is not, so it is replaced at each outer iteration
//! by its monomial approximation at the current point. Every candidate is
//! evaluated exactly and only kept if it is no worse than the current one.

use std::collections::BTreeMap;

use log::{debug, info, warn};
use oblite_solvers::{
    solve_convex, Constraint, ConvexOptions, ConvexProblem, ConvexStatus, ExpTerm, VarKind,
};
use serde::Serialize;
use thiserror::Error;

use crate::dag::DagSet;
use crate::demand::{BoxSpec, DemandMatrix, DemandSpec, Pair};
use crate::oracle::{certify_oblivious_ratio, commodity, optu, Normalization, ObliviousCertificate, OracleError};
use crate::routing::{ecmp_config, max_link_utilization, RoutingError, SplittingConfig};
use crate::topology::{ArcId, NodeId, Topology};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("monomial approximation needs positive ratios, got {0}")]
    NonPositive(f64),
    #[error("monomial approximation of an empty sum")]
    Empty,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Exponents `a` and constant `k` of the monomial `k prod phi_i^a_i` that
/// touches `sum phi_i` at `phi0`.
pub fn monomial_approx(phi0: &[f64]) -> Result<(Vec<f64>, f64), GpError> {
    if phi0.is_empty() {
        return Err(GpError::Empty);
    }
    if let Some(&bad) = phi0.iter().find(|&&x| !(x > 0.0)) {
        return Err(GpError::NonPositive(bad));
    }
    let sum: f64 = phi0.iter().sum();
    let a: Vec<f64> = phi0.iter().map(|x| x / sum).collect();
    let log_prod: f64 = phi0.iter().zip(&a).map(|(x, a)| a * x.ln()).sum();
    Ok((a, sum / log_prod.exp()))
}

/// Uniform split over every DAG out-arc.
pub fn seed_from_ecmp(topo: &Topology, dags: &DagSet) -> SplittingConfig {
    SplittingConfig::normalized(topo, dags, &BTreeMap::new())
}

#[derive(Debug, Clone)]
pub struct GpOptions {
    pub max_iterations: usize,
    /// Convergence when `|delta alpha|` stays below this ...
    pub tolerance: f64,
    /// ... for this many consecutive iterations.
    pub patience: usize,
    /// Lower bound on ratios while optimizing.
    pub floor: f64,
    /// Output ratios below this become exact zeros.
    pub threshold: f64,
    /// Log-step halvings tried before giving up on an iteration.
    pub max_halvings: usize,
    pub normalization: Normalization,
    pub convex: ConvexOptions,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions {
            max_iterations: 50,
            tolerance: 1e-4,
            patience: 3,
            floor: 1e-6,
            threshold: 1e-4,
            max_halvings: 10,
            normalization: Normalization::InDag,
            convex: ConvexOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpStatus {
    Converged,
    IterationCap,
    /// No step along the last direction improved the current point.
    Stalled,
    /// The convex subproblem failed; the best point so far is returned.
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Objective of the convex subproblem; none for the starting point.
    pub surrogate: Option<f64>,
    /// Exact worst-case value of the current point.
    pub alpha: f64,
    pub accepted: bool,
    pub halvings: usize,
}

#[derive(Debug, Clone)]
pub struct GpResult {
    pub config: SplittingConfig,
    /// Exact worst-case value of `config`.
    pub alpha: f64,
    pub status: GpStatus,
    pub trace: Vec<TraceRow>,
    /// For box and unbounded sets: an independent certificate of `alpha`.
    pub certificate: Option<ObliviousCertificate>,
}

impl GpResult {
    pub fn trace_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.trace {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Variable layout shared by both modes.
struct Layout {
    pairs: Vec<Pair>,
    /// Nodes reachable from each pair's source inside the destination's DAG.
    reach: BTreeMap<Pair, Vec<bool>>,
    phi: BTreeMap<(NodeId, ArcId), usize>,
    /// Per `(t, node)`, the arcs whose ratios are variables.
    groups: Vec<(NodeId, Vec<ArcId>)>,
    frac: BTreeMap<(Pair, NodeId), usize>,
    problem: ConvexProblem,
}

impl Layout {
    fn new(topo: &Topology, dags: &DagSet, pairs: &[Pair], floor: f64) -> Result<Layout, GpError> {
        let mut problem = ConvexProblem::new();
        let mut reach = BTreeMap::new();
        let mut relevant: BTreeMap<NodeId, Vec<bool>> = BTreeMap::new();
        for &(s, t) in pairs {
            let dag = dags
                .get(t)
                .ok_or_else(|| RoutingError::MissingDestination(topo.label(t).to_string()))?;
            let r = dag.reachable_from(topo, s);
            let rel = relevant.entry(t).or_insert_with(|| vec![false; topo.num_nodes()]);
            for v in topo.nodes() {
                rel[v.0] |= r[v.0];
            }
            reach.insert((s, t), r);
        }
        let mut phi = BTreeMap::new();
        let mut groups = Vec::new();
        for (&t, rel) in &relevant {
            let dag = dags.get(t).expect("checked above");
            for &v in dag.order() {
                if v == t || !rel[v.0] {
                    continue;
                }
                let outs: Vec<ArcId> = dag.out_arcs(topo, v).collect();
                if outs.len() < 2 {
                    continue;
                }
                for &a in &outs {
                    let x = problem.add_var(VarKind::Log);
                    problem.add_bounds(x, floor.ln(), 0.5);
                    phi.insert((t, a), x);
                }
                groups.push((t, outs));
            }
        }
        let mut frac = BTreeMap::new();
        for &(s, t) in pairs {
            let r = &reach[&(s, t)];
            for &v in dags.get(t).expect("checked above").order() {
                if r[v.0] && v != s && v != t {
                    let x = problem.add_var(VarKind::Log);
                    problem.add_bounds(x, f64::NEG_INFINITY, 2.0);
                    frac.insert(((s, t), v), x);
                }
            }
        }
        Ok(Layout {
            pairs: pairs.to_vec(),
            reach,
            phi,
            groups,
            frac,
            problem,
        })
    }

    /// `log(f_st(u) phi_t(e))` as an affine term, if `e` can carry the pair.
    fn edge_term(&self, topo: &Topology, dags: &DagSet, (s, t): Pair, e: ArcId, constant: f64) -> Option<ExpTerm> {
        let u = topo.arc(e).src;
        if !dags.get(t)?.contains(e) || !self.reach[&(s, t)][u.0] || u == t {
            return None;
        }
        let mut coeffs = Vec::new();
        if let Some(&x) = self.frac.get(&((s, t), u)) {
            coeffs.push((x, 1.0));
        }
        if let Some(&x) = self.phi.get(&(t, e)) {
            coeffs.push((x, 1.0));
        }
        Some(ExpTerm::new(coeffs, constant))
    }

    fn add_flow_recursion(&mut self, topo: &Topology, dags: &DagSet) {
        let mut rows = Vec::new();
        for (&((s, t), v), &fv) in &self.frac {
            let dag = dags.get(t).expect("layout covers pair");
            let terms: Vec<ExpTerm> = dag
                .in_arcs(topo, v)
                .filter_map(|a| self.edge_term(topo, dags, (s, t), a, 0.0))
                .collect();
            rows.push(Constraint::LogSumExp {
                terms,
                rhs: vec![(fv, 1.0)],
                rhs_constant: 0.0,
            });
        }
        for c in rows {
            self.problem.add(c);
        }
    }

    /// `log k + sum a_i log phi_i >= 0` at every split node.
    fn add_split_rows(&mut self, phi0: &BTreeMap<(NodeId, ArcId), f64>) -> Result<(), GpError> {
        for (t, outs) in &self.groups {
            let vals: Vec<f64> = outs.iter().map(|a| phi0[&(*t, *a)]).collect();
            let (a, k) = monomial_approx(&vals)?;
            let coeffs = outs.iter().zip(&a).map(|(arc, a)| (self.phi[&(*t, *arc)], -a)).collect();
            self.problem.add_linear(coeffs, k.ln());
        }
        Ok(())
    }

    /// Start point: log ratios nudged up, exact log fractions nudged up by
    /// topological depth so every recursion row is strictly satisfied.
    fn start(&self, topo: &Topology, dags: &DagSet, phi0: &BTreeMap<(NodeId, ArcId), f64>) -> Vec<f64> {
        const NUDGE: f64 = 1e-3;
        let mut x = vec![0.0; self.problem.num_vars()];
        for (&key, &var) in &self.phi {
            x[var] = phi0[&key].ln() + NUDGE;
        }
        for &(s, t) in &self.pairs {
            let dag = dags.get(t).expect("layout covers pair");
            let mut f = vec![0.0f64; topo.num_nodes()];
            f[s.0] = 1.0;
            for (depth, &v) in dag.order().iter().enumerate() {
                if v == t || f[v.0] == 0.0 {
                    continue;
                }
                if let Some(&var) = self.frac.get(&((s, t), v)) {
                    x[var] = f[v.0].ln() + NUDGE * (depth + 1) as f64;
                    f[v.0] = x[var].exp();
                }
                let outs: Vec<ArcId> = dag.out_arcs(topo, v).collect();
                for &a in &outs {
                    let r = match self.phi.get(&(t, a)) {
                        Some(&var) => x[var].exp(),
                        None => 1.0,
                    };
                    f[topo.arc(a).dst.0] += f[v.0] * r;
                }
            }
        }
        x
    }

    /// Exponentiates, thresholds, and renormalizes ratios at every node
    /// with variables; other nodes keep `base`.
    fn to_config(
        &self,
        topo: &Topology,
        dags: &DagSet,
        base: &SplittingConfig,
        logs: &BTreeMap<(NodeId, ArcId), f64>,
        threshold: f64,
    ) -> Result<SplittingConfig, GpError> {
        let mut ratios = base.as_map().clone();
        for (t, outs) in &self.groups {
            let r = ratios.get_mut(t).expect("base covers destination");
            let raw: Vec<f64> = outs.iter().map(|a| logs[&(*t, *a)].exp()).collect();
            let sum: f64 = raw.iter().sum();
            let mut vals: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let top = vals.iter().copied().fold(0.0, f64::max);
            for v in vals.iter_mut() {
                if *v < threshold && *v < top {
                    *v = 0.0;
                }
            }
            let sum: f64 = vals.iter().sum();
            for (a, v) in outs.iter().zip(vals) {
                r[a.0] = v / sum;
            }
        }
        Ok(SplittingConfig::new(topo, dags, ratios)?)
    }

    fn floored(&self, config: &SplittingConfig, floor: f64) -> BTreeMap<(NodeId, ArcId), f64> {
        self.phi
            .keys()
            .map(|&(t, a)| ((t, a), config.ratio(t, a).max(floor)))
            .collect()
    }
}

/// How a configuration is scored and how the subproblem is built.
enum Mode<'a> {
    Discrete(Vec<DemandMatrix>),
    Box(&'a BoxSpec),
}

fn evaluate(
    topo: &Topology,
    dags: &DagSet,
    config: &SplittingConfig,
    mode: &Mode,
    norm: Normalization,
) -> Result<f64, GpError> {
    match mode {
        Mode::Discrete(ms) => {
            let mut worst: f64 = 0.0;
            for d in ms {
                worst = worst.max(max_link_utilization(topo, dags, config, d)?.max);
            }
            Ok(worst)
        }
        Mode::Box(b) => Ok(certify_oblivious_ratio(topo, dags, config, b, norm)?.ratio),
    }
}

/// Builds and solves one convex subproblem around `phi0`; returns the new
/// log ratios and the subproblem objective.
fn subproblem(
    topo: &Topology,
    dags: &DagSet,
    mode: &Mode,
    layout_proto: &dyn Fn() -> Result<Layout, GpError>,
    phi0: &BTreeMap<(NodeId, ArcId), f64>,
    opts: &GpOptions,
) -> Result<Option<(BTreeMap<(NodeId, ArcId), f64>, f64)>, GpError> {
    let mut l = layout_proto()?;
    l.add_flow_recursion(topo, dags);
    l.add_split_rows(phi0)?;
    let mut start = l.start(topo, dags, phi0);
    match mode {
        Mode::Discrete(ms) => {
            let alpha = l.problem.add_var(VarKind::Linear);
            start.push(0.0);
            let mut rows = Vec::new();
            for d in ms {
                for e in topo.arc_ids() {
                    let c = topo.capacity(e);
                    let terms: Vec<ExpTerm> = d
                        .iter()
                        .filter(|&(_, x)| x > 0.0)
                        .filter_map(|(p, x)| l.edge_term(topo, dags, p, e, (x / c).ln()))
                        .collect();
                    if !terms.is_empty() {
                        rows.push(Constraint::Exp {
                            terms,
                            rhs: vec![(alpha, 1.0)],
                            rhs_constant: 0.0,
                        });
                    }
                }
            }
            let mut a0: f64 = 0.0;
            for c in &rows {
                if let Constraint::Exp { terms, .. } = c {
                    let v: f64 = terms
                        .iter()
                        .map(|t| (t.constant + t.coeffs.iter().map(|&(j, w)| w * start[j]).sum::<f64>()).exp())
                        .sum();
                    a0 = a0.max(v);
                }
                l.problem.add(c.clone());
            }
            start[alpha] = a0 * 1.01 + 1e-9;
            l.problem.set_objective(vec![(alpha, 1.0)]);
            solve(l, start, alpha, opts)
        }
        Mode::Box(b) => {
            let r = dual_blocks(topo, dags, &mut l, &mut start, b, opts.normalization)?;
            l.problem.set_objective(vec![(r, 1.0)]);
            solve(l, start, r, opts)
        }
    }
}

fn solve(
    l: Layout,
    start: Vec<f64>,
    objective: usize,
    opts: &GpOptions,
) -> Result<Option<(BTreeMap<(NodeId, ArcId), f64>, f64)>, GpError> {
    let sol = match solve_convex(&l.problem, &start, &opts.convex) {
        Ok(s) => s,
        Err(e) => {
            warn!("convex subproblem failed: {e}");
            return Ok(None);
        }
    };
    if sol.status != ConvexStatus::Optimal {
        debug!(
            "convex subproblem: status {:?}, violation {:.2e}, kkt {:.2e}",
            sol.status, sol.max_violation, sol.kkt_residual
        );
        if sol.max_violation > 1e-6 {
            return Ok(None);
        }
    }
    let logs = l.phi.iter().map(|(&k, &v)| (k, sol.x[v])).collect();
    Ok(Some((logs, sol.x[objective])))
}

/// Adds, per arc, the linear dual block bounding its worst-case utilization
/// and returns the index of the shared ratio variable.
fn dual_blocks(
    topo: &Topology,
    dags: &DagSet,
    l: &mut Layout,
    start: &mut Vec<f64>,
    spec: &BoxSpec,
    norm: Normalization,
) -> Result<usize, GpError> {
    const DELTA: f64 = 1e-3;
    let restriction = norm.restriction(dags);
    let comms = spec
        .destinations()
        .into_iter()
        .map(|t| Ok((t, commodity(topo, restriction, t)?)))
        .collect::<Result<BTreeMap<_, _>, OracleError>>()?;
    let mut used = vec![false; topo.num_arcs()];
    for c in comms.values() {
        for &a in &c.arcs {
            used[a.0] = true;
        }
    }
    // Box duals only matter when some pair has a positive lower bound
    // (scale-free) or any finite bound (fixed scale).
    let with_box = if spec.scale_free {
        spec.iter().any(|(_, lo, hi)| hi > 0.0 && lo > 0.0)
    } else {
        spec.iter().any(|(_, lo, hi)| hi > 0.0 && (lo > 0.0 || hi.is_finite()))
    };

    let new_var = |l: &mut Layout, start: &mut Vec<f64>, v: f64| {
        let x = l.problem.add_var(VarKind::Linear);
        start.push(v);
        x
    };
    let r = new_var(l, start, 0.0);
    let mut r0: f64 = 0.0;

    for e in topo.arc_ids() {
        // Coupling terms for this arc, with their start values.
        let mut coupling: Vec<(Pair, Option<ExpTerm>)> = Vec::new();
        let mut any = false;
        for (p, _, hi) in spec.iter() {
            if hi <= 0.0 {
                continue;
            }
            let term = l.edge_term(topo, dags, p, e, -topo.capacity(e).ln());
            any |= term.is_some();
            coupling.push((p, term));
        }
        if !any {
            continue;
        }
        let value_at = |t: &ExpTerm, x: &[f64]| (t.constant + t.coeffs.iter().map(|&(j, w)| w * x[j]).sum::<f64>()).exp();

        // Potentials start just above what the coupling rows need.
        let mut pot_val: BTreeMap<Pair, f64> = BTreeMap::new();
        for c in comms.values() {
            for v in topo.nodes() {
                if v != c.t && c.reach[v.0] {
                    pot_val.insert((v, c.t), DELTA);
                }
            }
        }
        let mut slack: BTreeMap<Pair, (Option<(usize, f64)>, Option<(usize, f64)>)> = BTreeMap::new();
        let mut box_terms = Vec::new();
        if with_box {
            let lower_mass: f64 = spec.iter().filter(|&(_, lo, hi)| hi > 0.0 && lo > 0.0).map(|(_, lo, _)| lo).sum();
            let upper_mass: f64 = spec
                .iter()
                .filter(|&(_, _, hi)| hi > 0.0 && hi.is_finite())
                .map(|(_, _, hi)| hi * DELTA)
                .sum();
            // Upper duals start at DELTA; lower ones absorb them.
            let down = if lower_mass > 0.0 { (upper_mass + DELTA) / lower_mass } else { 0.0 };
            for (p, lo, hi) in spec.iter() {
                if hi <= 0.0 {
                    continue;
                }
                let up = hi.is_finite().then(|| (new_var(l, start, DELTA), DELTA));
                let dn = (lo > 0.0).then(|| (new_var(l, start, down), down));
                if let Some((x, _)) = up {
                    l.problem.add_bounds(x, 0.0, f64::INFINITY);
                    box_terms.push((x, hi));
                }
                if let Some((x, _)) = dn {
                    l.problem.add_bounds(x, 0.0, f64::INFINITY);
                    box_terms.push((x, -lo));
                }
                slack.insert(p, (up, dn));
            }
        }
        for (p, term) in &coupling {
            let need = term.as_ref().map(|t| value_at(t, start)).unwrap_or(0.0);
            let (up, dn) = slack.get(p).copied().unwrap_or((None, None));
            let shift = up.map(|u| u.1).unwrap_or(0.0) - dn.map(|d| d.1).unwrap_or(0.0);
            let pv = pot_val.get_mut(p).expect("pair source reaches its destination");
            *pv = (need - shift).max(0.0) + DELTA;
        }
        let pot: BTreeMap<Pair, usize> = pot_val
            .iter()
            .map(|(&k, &v)| {
                let x = new_var(l, start, v);
                l.problem.add_bounds(x, 0.0, f64::INFINITY);
                (k, x)
            })
            .collect();
        let mut len_val = vec![0.0; topo.num_arcs()];
        for c in comms.values() {
            for &a in &c.arcs {
                let arc = topo.arc(a);
                let head = if arc.dst == c.t { 0.0 } else { pot_val[&(arc.dst, c.t)] };
                len_val[a.0] = f64::max(len_val[a.0], pot_val[&(arc.src, c.t)] - head);
            }
        }
        let lengths: Vec<Option<usize>> = topo
            .arc_ids()
            .map(|a| {
                used[a.0].then(|| {
                    let x = new_var(l, start, len_val[a.0].max(0.0) + DELTA);
                    l.problem.add_bounds(x, 0.0, f64::INFINITY);
                    x
                })
            })
            .collect();
        for c in comms.values() {
            for &a in &c.arcs {
                let arc = topo.arc(a);
                let mut coeffs = vec![(pot[&(arc.src, c.t)], 1.0), (lengths[a.0].expect("used arc"), -1.0)];
                if arc.dst != c.t {
                    coeffs.push((pot[&(arc.dst, c.t)], -1.0));
                }
                l.problem.add_linear(coeffs, 0.0);
            }
        }
        for (p, term) in coupling {
            let (up, dn) = slack.get(&p).copied().unwrap_or((None, None));
            let mut rhs = vec![(pot[&p], 1.0)];
            if let Some((x, _)) = up {
                rhs.push((x, 1.0));
            }
            if let Some((x, _)) = dn {
                rhs.push((x, -1.0));
            }
            match term {
                Some(t) => l.problem.add(Constraint::Exp {
                    terms: vec![t],
                    rhs,
                    rhs_constant: 0.0,
                }),
                None => l.problem.add_linear(rhs.into_iter().map(|(x, w)| (x, -w)).collect(), 0.0),
            }
        }
        let mut bound: Vec<(usize, f64)> = topo
            .arc_ids()
            .filter_map(|a| lengths[a.0].map(|x| (x, topo.capacity(a))))
            .collect();
        if spec.scale_free {
            if !box_terms.is_empty() {
                l.problem.add_linear(box_terms, 0.0);
            }
        } else {
            bound.extend(box_terms);
        }
        let value: f64 = bound.iter().map(|&(x, w)| w * start[x]).sum();
        r0 = r0.max(value);
        bound.push((r, -1.0));
        l.problem.add_linear(bound, 0.0);
    }
    start[r] = r0 + DELTA;
    Ok(r)
}

fn run(
    topo: &Topology,
    dags: &DagSet,
    mode: Mode,
    pairs: Vec<Pair>,
    init: &SplittingConfig,
    opts: &GpOptions,
) -> Result<GpResult, GpError> {
    init.validate(topo, dags)?;
    let proto = || Layout::new(topo, dags, &pairs, opts.floor);
    let layout = proto()?;

    let mut current = init.clone();
    let mut alpha = evaluate(topo, dags, &current, &mode, opts.normalization)?;
    let mut best = (current.clone(), alpha);
    if let Ok(ecmp) = ecmp_config(topo, dags) {
        let a = evaluate(topo, dags, &ecmp, &mode, opts.normalization)?;
        if a < best.1 {
            best = (ecmp, a);
        }
    }
    let mut trace = vec![TraceRow {
        iteration: 0,
        surrogate: None,
        alpha,
        accepted: true,
        halvings: 0,
    }];
    let mut status = GpStatus::IterationCap;
    if layout.groups.is_empty() || alpha == 0.0 {
        status = GpStatus::Converged;
    }
    let mut quiet = 0;
    let mut iteration = 0;
    while status == GpStatus::IterationCap && iteration < opts.max_iterations {
        iteration += 1;
        let phi0 = layout.floored(&current, opts.floor);
        let Some((target, surrogate)) = subproblem(topo, dags, &mode, &proto, &phi0, opts)? else {
            status = GpStatus::SolverFailure;
            break;
        };
        let mut accepted = None;
        for h in 0..=opts.max_halvings {
            let step = 0.5f64.powi(h as i32);
            let logs: BTreeMap<_, _> = target
                .iter()
                .map(|(k, &x)| (*k, phi0[k].ln() + step * (x - phi0[k].ln())))
                .collect();
            let cand = layout.to_config(topo, dags, &current, &logs, opts.threshold)?;
            let a = evaluate(topo, dags, &cand, &mode, opts.normalization)?;
            if a <= alpha + 1e-12 {
                accepted = Some((cand, a, h));
                break;
            }
        }
        let Some((cand, a, h)) = accepted else {
            trace.push(TraceRow {
                iteration,
                surrogate: Some(surrogate),
                alpha,
                accepted: false,
                halvings: opts.max_halvings,
            });
            status = GpStatus::Stalled;
            break;
        };
        let delta = alpha - a;
        current = cand;
        alpha = a;
        if alpha < best.1 {
            best = (current.clone(), alpha);
        }
        trace.push(TraceRow {
            iteration,
            surrogate: Some(surrogate),
            alpha,
            accepted: true,
            halvings: h,
        });
        debug!("gp iteration {iteration}: surrogate {surrogate:.6}, exact {alpha:.6}, halvings {h}");
        quiet = if delta.abs() <= opts.tolerance { quiet + 1 } else { 0 };
        if quiet >= opts.patience {
            status = GpStatus::Converged;
        }
    }
    info!("split optimization: {status:?} after {iteration} iterations, value {:.6}", best.1);
    let certificate = match &mode {
        Mode::Box(b) => {
            let cert = certify_oblivious_ratio(topo, dags, &best.0, b, opts.normalization)?;
            cert.verify(topo, dags, &best.0, b, 1e-6)?;
            Some(cert)
        }
        Mode::Discrete(_) => None,
    };
    Ok(GpResult {
        config: best.0,
        alpha: best.1,
        status,
        trace,
        certificate,
    })
}

/// Minimizes the worst performance ratio over a finite set of matrices.
/// Each matrix is scaled to unit optimum first, so `alpha` is a ratio.
pub fn optimize_discrete(
    topo: &Topology,
    dags: &DagSet,
    matrices: &[DemandMatrix],
    init: &SplittingConfig,
    opts: &GpOptions,
) -> Result<GpResult, GpError> {
    let mut scaled = Vec::new();
    for d in matrices {
        if d.is_zero() {
            continue;
        }
        let o = optu(topo, d, opts.normalization.restriction(dags))?.value;
        scaled.push(d.scaled(1.0 / o));
    }
    let pairs = DemandSpec::Discrete(scaled.clone()).pairs();
    run(topo, dags, Mode::Discrete(scaled), pairs, init, opts)
}

/// Minimizes the certified worst-case ratio over a box or unbounded set.
pub fn optimize_oblivious(
    topo: &Topology,
    dags: &DagSet,
    spec: &BoxSpec,
    init: &SplittingConfig,
    opts: &GpOptions,
) -> Result<GpResult, GpError> {
    run(topo, dags, Mode::Box(spec), spec.active_pairs(), init, opts)
}

pub fn optimize(
    topo: &Topology,
    dags: &DagSet,
    spec: &DemandSpec,
    init: &SplittingConfig,
    opts: &GpOptions,
) -> Result<GpResult, GpError> {
    match spec {
        DemandSpec::Discrete(ms) => optimize_discrete(topo, dags, ms, init, opts),
        DemandSpec::Box(b) => optimize_oblivious(topo, dags, b, init, opts),
    }
}
