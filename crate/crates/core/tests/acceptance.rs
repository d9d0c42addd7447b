//! Acceptance suite: one line per criterion, then a single assertion.
//!
//! Run with `cargo test -p oblite --test acceptance -- --nocapture` to see
//! the report.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use oblite::dag::build_dags;
use oblite::demand::{BoxSpec, DemandMatrix, DemandSpec, Pair};
use oblite::experiments::{compare, compare_csv};
use oblite::fixtures::{
    bipartition, lemma1_routing, path_gap, random_topology, running_example, running_example_config,
    running_example_with,
};
use oblite::oracle::{certify_oblivious_ratio, perf_ratio, worst_case_dm, BoxMethod, Normalization, PerfOptions};
use oblite::routing::{ecmp_config, SplittingConfig};
use oblite::splitopt::{optimize, optimize_discrete, seed_from_ecmp, GpOptions, GpResult};
use oblite::translate::{evaluate_quantized, VirtualLinkPlan};
use oblite::{NodeId, Topology};
use oblite_solvers::convex::{Constraint, ExpTerm};
use oblite_solvers::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: f64 = 0.618_033_988_749_895;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let late = budget.is_some_and(|b| took > b);
        let pass = outcome.is_ok() && !late;
        let detail = match &outcome {
            Ok(d) => d.clone(),
            Err(e) => e.clone(),
        };
        let limit = budget.map(|b| format!(" / limit {:.0}s", b.as_secs_f64())).unwrap_or_default();
        let line = format!(
            "[{}] {:>2}. {name} ({:.2}s{limit}): {detail}{}",
            if pass { "PASS" } else { "FAIL" },
            id,
            took.as_secs_f64(),
            if late { " [over time limit]" } else { "" },
        );
        println!("{line}");
        self.lines.push((pass, line));
    }
}

/// Accepted-iterate traces collected from every optimizer run.
#[derive(Default)]
struct Traces(Vec<(String, Vec<f64>)>);

impl Traces {
    fn record(&mut self, what: &str, r: &GpResult) {
        let alphas = r.trace.iter().filter(|t| t.accepted).map(|t| t.alpha).collect();
        self.0.push((what.to_string(), alphas));
    }
}

fn arc_ratio(topo: &Topology, cfg: &SplittingConfig, t: NodeId, a: &str, b: &str) -> f64 {
    let arc = topo.find_arc(topo.node(a).unwrap(), topo.node(b).unwrap()).unwrap();
    cfg.ratio(t, arc)
}

fn golden_ratio(traces: &mut Traces) -> Outcome {
    let ex = running_example();
    let topo = &ex.topology;
    let seed = seed_from_ecmp(topo, &ex.dags);
    let r = optimize_discrete(topo, &ex.dags, &ex.vertices, &seed, &GpOptions::default()).map_err(e2s)?;
    traces.record("golden", &r);
    let (a, b) = (arc_ratio(topo, &r.config, ex.t, "s1", "s2"), arc_ratio(topo, &r.config, ex.t, "s2", "t"));
    ensure((a - GOLDEN).abs() <= 0.01, || format!("phi(s1,s2) = {a:.4}"))?;
    ensure((b - GOLDEN).abs() <= 0.01, || format!("phi(s2,t) = {b:.4}"))?;
    ensure((r.alpha - 2.0 * GOLDEN).abs() <= 0.01, || format!("alpha = {:.4}", r.alpha))?;

    // The variant with near-infinite inner links: reported, not gated.
    let wide = running_example_with(1e6);
    let seed = seed_from_ecmp(&wide.topology, &wide.dags);
    let w = optimize_discrete(&wide.topology, &wide.dags, &wide.vertices, &seed, &GpOptions::default()).map_err(e2s)?;
    traces.record("golden-wide", &w);
    ensure(w.alpha <= 2.0 * GOLDEN + 1e-6, || format!("wide variant alpha {:.4}", w.alpha))?;
    Ok(format!(
        "phi(s1,s2) = {a:.4}, phi(s2,t) = {b:.4}, alpha = {:.4}; inner capacity 1e6 gives alpha = {:.4}",
        r.alpha, w.alpha
    ))
}

fn ecmp_baseline() -> Outcome {
    let ex = running_example();
    let topo = &ex.topology;
    let spec = DemandSpec::discrete(ex.vertices.to_vec()).map_err(e2s)?;
    let ecmp = ecmp_config(topo, &ex.ecmp_dags).map_err(e2s)?;
    let e = perf_ratio(topo, &ex.ecmp_dags, &ecmp, &spec, PerfOptions::default()).map_err(e2s)?.ratio;
    let fig = running_example_config(topo, &ex.dags);
    let c = perf_ratio(topo, &ex.dags, &fig, &spec, PerfOptions::default()).map_err(e2s)?.ratio;
    ensure((e - 1.5).abs() <= 1e-6, || format!("ECMP ratio {e}"))?;
    ensure((c - 4.0 / 3.0).abs() <= 1e-6, || format!("hand-tuned ratio {c}"))?;
    Ok(format!("ECMP {e:.6}, hand-tuned split {c:.6}"))
}

/// Random instance: topology on 5..=8 nodes, two destinations, random
/// positive split weights, a box over up to three pairs.
fn random_instance(seed: u64) -> (Topology, oblite::DagSet, SplittingConfig, BoxSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.gen_range(5..=8);
    let topo = random_topology(seed, n);
    let dests: Vec<NodeId> = topo.nodes().take(2).collect();
    let (dags, _) = build_dags(&topo, &topo.weights(), &dests).unwrap();
    let weights: BTreeMap<NodeId, Vec<f64>> = dests
        .iter()
        .map(|&t| (t, (0..topo.num_arcs()).map(|_| rng.gen_range(0.1..1.0)).collect()))
        .collect();
    let cfg = SplittingConfig::normalized(&topo, &dags, &weights);
    let mut spec = BoxSpec::new(true);
    let sources: Vec<NodeId> = topo.nodes().filter(|v| !dests.contains(v)).collect();
    for i in 0..3 {
        let (s, t) = (sources[i % sources.len()], dests[i % 2]);
        let lo = if rng.gen_bool(0.5) { rng.gen_range(0.0..1.0) } else { 0.0 };
        let hi = lo + rng.gen_range(0.5..2.0);
        spec.insert(&topo, s, t, lo, hi).unwrap();
    }
    (topo, dags, cfg, spec)
}

fn duality_agreement() -> Outcome {
    let (mut worst_edge, mut worst_box, mut edges) = (0.0f64, 0.0f64, 0);
    for seed in 0..24 {
        let (topo, dags, cfg, spec) = random_instance(seed);
        let cert = certify_oblivious_ratio(&topo, &dags, &cfg, &spec, Normalization::InDag).map_err(e2s)?;
        for ec in &cert.edges {
            let primal = worst_case_dm(&topo, &dags, &cfg, ec.arc, &spec, Normalization::InDag).map_err(e2s)?;
            let gap = (primal.utilization - ec.value).abs();
            worst_edge = worst_edge.max(gap);
            edges += 1;
            ensure(gap <= 1e-5, || {
                format!("seed {seed}, arc {}: primal {} vs dual {}", topo.arc_name(ec.arc), primal.utilization, ec.value)
            })?;
        }
        let spec = DemandSpec::Box(spec);
        let by = |method| {
            let opts = PerfOptions { method, ..Default::default() };
            perf_ratio(&topo, &dags, &cfg, &spec, opts).map(|r| r.ratio)
        };
        let (v, c) = (by(BoxMethod::Vertices).map_err(e2s)?, by(BoxMethod::Certificate).map_err(e2s)?);
        worst_box = worst_box.max((v - c).abs());
        ensure((v - c).abs() <= 1e-4, || format!("seed {seed}: vertices {v} vs certificate {c}"))?;
    }
    Ok(format!(
        "24 instances, {edges} arcs: max per-arc gap {worst_edge:.2e}, max vertex/certificate gap {worst_box:.2e}"
    ))
}

fn bipartition_fixture() -> Outcome {
    let mut out = Vec::new();
    for (w, p1) in [(vec![1, 1], vec![0]), (vec![1, 2, 3], vec![2])] {
        let b = bipartition(&w).map_err(e2s)?;
        let (dags, cfg) = lemma1_routing(&b, &p1).map_err(e2s)?;
        let spec = DemandSpec::discrete(b.vertices.to_vec()).map_err(e2s)?;
        let opts = PerfOptions { normalization: Normalization::AnyPd, ..Default::default() };
        let r = perf_ratio(&b.topology, &dags, &cfg, &spec, opts).map_err(e2s)?.ratio;
        ensure((r - 4.0 / 3.0).abs() <= 1e-6, || format!("W = {w:?}: ratio {r}"))?;
        out.push(format!("W = {w:?}: {r:.6}"));
    }
    Ok(out.join(", "))
}

fn path_gap_fixture(traces: &mut Traces) -> Outcome {
    let mut out = Vec::new();
    for n in [3usize, 4] {
        let p = path_gap(n).map_err(e2s)?;
        let topo = &p.topology;
        let (dags, _) = build_dags(topo, &topo.weights(), &[p.t]).map_err(e2s)?;
        let spec = DemandSpec::discrete(p.family.clone()).map_err(e2s)?;
        let opts = GpOptions { normalization: Normalization::AnyPd, ..Default::default() };
        let perf = PerfOptions { normalization: Normalization::AnyPd, ..Default::default() };
        let ecmp = ecmp_config(topo, &dags).map_err(e2s)?;
        let optimized = optimize(topo, &dags, &spec, &seed_from_ecmp(topo, &dags), &opts).map_err(e2s)?;
        traces.record(&format!("path-gap {n}"), &optimized);
        for (label, cfg) in [("ECMP", &ecmp), ("optimized", &optimized.config)] {
            let r = perf_ratio(topo, &dags, cfg, &spec, perf).map_err(e2s)?.ratio;
            ensure(r >= n as f64 - 1e-3, || format!("n = {n}, {label}: ratio {r}"))?;
            out.push(format!("n={n} {label} {r:.4}"));
        }
    }
    Ok(out.join(", "))
}

fn no_worse_than_ecmp(traces: &mut Traces) -> Outcome {
    let mut checked = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut instances: Vec<(String, Topology, oblite::DagSet, DemandSpec, Normalization)> = Vec::new();
    let ex = running_example();
    instances.push((
        "running example, matrices".into(),
        ex.topology.clone(),
        ex.dags.clone(),
        DemandSpec::discrete(ex.vertices.to_vec()).unwrap(),
        Normalization::InDag,
    ));
    instances.push((
        "running example, all matrices".into(),
        ex.topology.clone(),
        ex.dags.clone(),
        DemandSpec::unbounded(&[(ex.s1, ex.t), (ex.s2, ex.t)]),
        Normalization::InDag,
    ));
    for seed in 0..10 {
        let (topo, dags, _, spec) = random_instance(seed);
        let pairs: Vec<Pair> = spec.active_pairs();
        instances.push((format!("random {seed}, box"), topo.clone(), dags.clone(), DemandSpec::Box(spec), Normalization::InDag));
        let ms = pairs
            .iter()
            .map(|&(s, t)| {
                let mut d = DemandMatrix::new();
                d.set(s, t, 1.0);
                d
            })
            .collect();
        instances.push((format!("random {seed}, matrices"), topo, dags, DemandSpec::discrete(ms).unwrap(), Normalization::InDag));
    }
    for (name, topo, dags, spec, norm) in instances {
        let opts = GpOptions { normalization: norm, max_iterations: 15, ..Default::default() };
        let r = optimize(&topo, &dags, &spec, &seed_from_ecmp(&topo, &dags), &opts).map_err(e2s)?;
        traces.record(&name, &r);
        let perf = PerfOptions { normalization: norm, method: BoxMethod::Certificate, ..Default::default() };
        let ecmp = ecmp_config(&topo, &dags).map_err(e2s)?;
        let e = perf_ratio(&topo, &dags, &ecmp, &spec, perf).map_err(e2s)?.ratio;
        let o = perf_ratio(&topo, &dags, &r.config, &spec, perf).map_err(e2s)?.ratio;
        worst_excess = worst_excess.max(o - e);
        ensure(o <= e + 1e-6, || format!("{name}: optimized {o} vs ECMP {e}"))?;
        checked += 1;
    }
    Ok(format!("{checked} instances, max (optimized - ECMP) = {worst_excess:.3e}"))
}

fn quantization_curve(traces: &mut Traces) -> Outcome {
    let ex = running_example();
    let topo = &ex.topology;
    let seed = seed_from_ecmp(topo, &ex.dags);
    let r = optimize_discrete(topo, &ex.dags, &ex.vertices, &seed, &GpOptions::default()).map_err(e2s)?;
    traces.record("quantization", &r);
    let spec = DemandSpec::discrete(ex.vertices.to_vec()).map_err(e2s)?;
    let ideal = perf_ratio(topo, &ex.dags, &r.config, &spec, PerfOptions::default()).map_err(e2s)?.ratio;
    let at = |l: u32| -> Result<f64, String> {
        let plan = VirtualLinkPlan::from_config(topo, &ex.dags, &r.config, l).map_err(e2s)?;
        Ok(evaluate_quantized(topo, &ex.dags, &plan, &spec, PerfOptions::default()).map_err(e2s)?.ratio)
    };
    let (l0, l3, l10) = (at(0)?, at(3)?, at(10)?);
    let gap = l0 - ideal;
    ensure(l0 - l3 >= 0.25 * gap, || format!("L=0 {l0}, L=3 {l3}, ideal {ideal}"))?;
    ensure(l10 <= ideal * 1.05, || format!("L=10 {l10} vs ideal {ideal}"))?;
    Ok(format!("L=0 {l0:.4}, L=3 {l3:.4}, L=10 {l10:.4}, unquantized {ideal:.4}"))
}

fn monotone_traces(traces: &Traces) -> Outcome {
    let mut steps = 0;
    for (name, alphas) in &traces.0 {
        for w in alphas.windows(2) {
            ensure(w[1] <= w[0] + 1e-4, || format!("{name}: {} after {}", w[1], w[0]))?;
            steps += 1;
        }
    }
    ensure(!traces.0.is_empty(), || "no optimizer runs recorded".into())?;
    Ok(format!("{} runs, {steps} accepted steps", traces.0.len()))
}

fn table_shape() -> Outcome {
    let ex = running_example();
    let mut base = DemandMatrix::new();
    base.set(ex.s1, ex.t, 1.0);
    base.set(ex.s2, ex.t, 1.0);
    let rows = compare("four-node", &ex.topology, &ex.topology.weights(), &base, &[1.0, 2.0], &GpOptions::default())
        .map_err(e2s)?;
    let csv = compare_csv(&rows);
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let header = rdr.headers().map_err(e2s)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("no column {name}"));
    let (ie, io, ip) = (col("ecmp")?, col("oblivious")?, col("partial")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(e2s)?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(e2s);
        let (e, o, p) = (f(ie)?, f(io)?, f(ip)?);
        ensure(p <= o + 1e-6 && o <= e + 1e-6, || format!("margin {}: partial {p}, oblivious {o}, ECMP {e}", &rec[1]))?;
        out.push(format!("margin {}: {p:.4} <= {o:.4} <= {e:.4}", &rec[1]));
    }
    ensure(out.len() == 2, || format!("{} rows", out.len()))?;
    Ok(out.join("; "))
}

type Row = (Vec<(usize, f64)>, Relation, f64);

/// Random feasible, bounded LP: `x0` is feasible by construction and every
/// variable has a finite upper bound.
fn random_lp(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..9);
    let m = rng.gen_range(1..9);
    let sense = if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
    let mut p = LpProblem::new(sense);
    let mut ids = Vec::new();
    for &x in &x0 {
        let lo = if rng.gen_bool(0.2) { -rng.gen_range(0.0..2.0) } else { 0.0 };
        let hi = x + rng.gen_range(0.5..4.0);
        ids.push(p.add_var(rng.gen_range(-2.0..2.0), lo, hi));
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-2.0..2.0)));
            }
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let (coeffs, rel, rhs): Row = match rng.gen_range(0..3) {
            0 => (coeffs, Relation::Le, act + rng.gen_range(0.0..1.0)),
            1 => (coeffs, Relation::Ge, act - rng.gen_range(0.0..1.0)),
            _ => (coeffs, Relation::Eq, act),
        };
        let row: Vec<_> = coeffs.iter().map(|&(j, a)| (ids[j], a)).collect();
        p.add_row(&row, rel, rhs);
    }
    p
}

fn random_lse(rng: &mut ChaCha8Rng, n: usize) -> Constraint {
    let k = rng.gen_range(1..5);
    let mut terms = Vec::new();
    for _ in 0..k {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                coeffs.push((j, rng.gen_range(-2.0..2.0)));
            }
        }
        terms.push(ExpTerm::new(coeffs, rng.gen_range(-1.0..1.0)));
    }
    let mut rhs = Vec::new();
    for j in 0..n {
        if rng.gen_bool(0.3) {
            rhs.push((j, rng.gen_range(-1.0..1.0)));
        }
    }
    Constraint::LogSumExp { terms, rhs, rhs_constant: rng.gen_range(-1.0..1.0) }
}

fn solver_suites() -> Outcome {
    let mut worst_lp = 0.0f64;
    for seed in 0..100 {
        let p = random_lp(seed);
        let s = solve_lp(&p).map_err(e2s)?;
        ensure(s.status == LpStatus::Optimal, || format!("LP {seed}: {:?}", s.status))?;
        let r = s.residuals(&p);
        let worst = r.primal.max(r.dual).max(r.complementary).max(r.gap);
        worst_lp = worst_lp.max(worst);
        ensure(worst <= 1e-6, || format!("LP {seed}: {r:?}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_grad = 0.0f64;
    for i in 0..50 {
        let n = rng.gen_range(1..7);
        let c = random_lse(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut analytic = vec![0.0; n];
        for (j, g) in c.gradient(&x) {
            analytic[j] += g;
        }
        for j in 0..n {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += 1e-6;
            xm[j] -= 1e-6;
            let fd = (c.value(&xp) - c.value(&xm)) / 2e-6;
            let rel = (fd - analytic[j]).abs() / analytic[j].abs().max(1.0);
            worst_grad = worst_grad.max(rel);
            ensure(rel <= 1e-5, || format!("problem {i}, component {j}: {fd} vs {}", analytic[j]))?;
        }
    }
    Ok(format!("100 LPs, worst residual {worst_lp:.2e}; 50 log-sum-exp gradients, worst relative error {worst_grad:.2e}"))
}

#[test]
fn acceptance() {
    let mut report = Report { lines: Vec::new() };
    let mut traces = Traces::default();
    let secs = |s| Some(Duration::from_secs(s));
    report.run(1, "golden-ratio reproduction", secs(10), || golden_ratio(&mut traces));
    report.run(2, "ECMP baseline", secs(1), ecmp_baseline);
    report.run(3, "duality agreement", secs(60), duality_agreement);
    report.run(4, "bipartition fixture", secs(5), bipartition_fixture);
    report.run(5, "path-gap fixture", secs(10), || path_gap_fixture(&mut traces));
    report.run(6, "no worse than ECMP", None, || no_worse_than_ecmp(&mut traces));
    report.run(7, "quantization curve", secs(10), || quantization_curve(&mut traces));
    report.run(9, "comparison table shape", None, table_shape);
    report.run(10, "solver property suites", None, solver_suites);
    // Last, so it sees every optimizer run above.
    report.run(8, "monotone optimizer", None, || monotone_traces(&traces));
    let failed: Vec<&String> = report.lines.iter().filter(|(p, _)| !p).map(|(_, l)| l).collect();
    println!("{} of {} criteria passed", report.lines.len() - failed.len(), report.lines.len());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n"));
}
