use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use oblite::demand::{gravity_demands, read_demand_csv, read_discrete_json, write_discrete_json, DemandMatrix, DemandSpec, Pair};
use oblite::experiments::{compare_csv, ExperimentError};
use oblite::fixtures::{bipartition, lemma1_routing, path_gap, random_topology, running_example_with};
use oblite::oracle::{perf_ratio, BoxMethod, Normalization, OracleError, PerfOptions};
use oblite::routing::SplittingConfig;
use oblite::search::{local_search_weights, SearchOptions};
use oblite::splitopt::{seed_from_ecmp, GpError, GpOptions, GpStatus};
use oblite::translate::{emit_lie_plan, evaluate_quantized, TranslateError, VirtualLinkPlan};
use oblite::{DagSet, NodeId, Topology};

use crate::manifest::{emit, with_manifest, RunManifest};
use crate::{
    BuildDagsArgs, CompareArgs, EvaluateArgs, FixtureArgs, FixtureKind, Heuristic, Lemma1Args, MethodArg, Mode,
    NormalizationArg, OptimizeArgs, StretchArgs, TranslateArgs,
};

/// The optimizer could not solve a subproblem; outputs hold the best point.
#[derive(Debug, thiserror::Error)]
#[error("numerical failure: {0}")]
struct NumericalFailure(String);

fn oracle_is_numerical(e: &OracleError) -> bool {
    matches!(
        e,
        OracleError::Lp(_) | OracleError::Solver { .. } | OracleError::NoConvergence(_) | OracleError::Certificate(_)
    )
}

/// 2 for solver trouble, 1 for everything the user can fix.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e.chain().any(|c| {
        if c.is::<NumericalFailure>() {
            return true;
        }
        if let Some(o) = c.downcast_ref::<OracleError>() {
            return oracle_is_numerical(o);
        }
        if let Some(GpError::Oracle(o)) = c.downcast_ref::<GpError>() {
            return oracle_is_numerical(o);
        }
        if let Some(TranslateError::Oracle(o)) = c.downcast_ref::<TranslateError>() {
            return oracle_is_numerical(o);
        }
        match c.downcast_ref::<ExperimentError>() {
            Some(ExperimentError::Oracle(o)) | Some(ExperimentError::Optimizer(GpError::Oracle(o))) => oracle_is_numerical(o),
            _ => false,
        }
    });
    if numerical {
        2
    } else {
        1
    }
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::InDag => Normalization::InDag,
            NormalizationArg::AnyPd => Normalization::AnyPd,
        }
    }
}

impl From<MethodArg> for BoxMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => BoxMethod::Auto,
            MethodArg::Vertices => BoxMethod::Vertices,
            MethodArg::Certificate => BoxMethod::Certificate,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightRow {
    src: String,
    dst: String,
    weight: f64,
}

fn load_topology(m: &mut RunManifest, path: &Path) -> Result<Topology> {
    let text = m.read(path)?;
    Topology::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_json(m: &mut RunManifest, path: &Path) -> Result<Value> {
    let text = m.read(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Either a bare document or one wrapped with a manifest under `key`.
fn unwrap_key(v: Value, key: &str) -> Value {
    match v {
        Value::Object(mut o) if o.contains_key(key) => o.remove(key).expect("key present"),
        other => other,
    }
}

/// DAGs plus the weights that built them, when recorded.
fn load_dags(m: &mut RunManifest, topo: &Topology, path: &Path) -> Result<(DagSet, Option<Vec<f64>>)> {
    let doc = load_json(m, path)?;
    let weights = match doc.get("weights") {
        Some(w) => {
            let rows: Vec<WeightRow> = serde_json::from_value(w.clone())?;
            let mut out = topo.weights();
            for r in rows {
                let a = topo
                    .find_arc(topo.node(&r.src)?, topo.node(&r.dst)?)
                    .ok_or_else(|| anyhow!("no arc {} -> {}", r.src, r.dst))?;
                out[a.0] = r.weight;
            }
            Some(out)
        }
        None => None,
    };
    let dags = DagSet::from_json(topo, &unwrap_key(doc, "dags")).with_context(|| format!("reading DAGs from {}", path.display()))?;
    Ok((dags, weights))
}

fn load_config(m: &mut RunManifest, topo: &Topology, dags: &DagSet, path: &Path) -> Result<SplittingConfig> {
    let doc = load_json(m, path)?;
    SplittingConfig::from_json(topo, dags, &unwrap_key(doc, "config"))
        .with_context(|| format!("reading configuration from {}", path.display()))
}

fn load_demands(m: &mut RunManifest, topo: &Topology, path: &Path, scale_free: bool) -> Result<DemandSpec> {
    let text = m.read(path)?;
    let spec = if path.extension().is_some_and(|e| e == "json") {
        let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        read_discrete_json(topo, &unwrap_key(doc, "matrices").to_string())?
    } else {
        read_demand_csv(topo, &text, scale_free)?
    };
    Ok(spec)
}

fn spec_for_mode(spec: DemandSpec, mode: Mode) -> Result<DemandSpec> {
    Ok(match (mode, spec) {
        (Mode::Discrete, s @ DemandSpec::Discrete(_)) => s,
        (Mode::Discrete, DemandSpec::Box(_)) => bail!("discrete mode needs matrices, got a box"),
        (Mode::Oblivious, s) => DemandSpec::unbounded(&s.pairs()),
        (Mode::Box, s @ DemandSpec::Box(_)) => s,
        (Mode::Box, DemandSpec::Discrete(_)) => bail!("box mode needs a CSV with dmin < dmax on some row"),
    })
}

fn inverse_capacity(topo: &Topology) -> Vec<f64> {
    topo.arcs().iter().map(|a| 1.0 / a.capacity).collect()
}

fn weight_rows(topo: &Topology, w: &[f64]) -> Value {
    let rows: Vec<WeightRow> = topo
        .arc_ids()
        .map(|a| WeightRow {
            src: topo.label(topo.arc(a).src).to_string(),
            dst: topo.label(topo.arc(a).dst).to_string(),
            weight: w[a.0],
        })
        .collect();
    serde_json::to_value(rows).expect("rows serialize")
}

fn body(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn build_dags(a: &BuildDagsArgs) -> Result<ExitCode> {
    let mut m = RunManifest::new("build-dags", a);
    let topo = load_topology(&mut m, &a.topology)?;
    let spec = a
        .demands
        .as_deref()
        .map(|p| load_demands(&mut m, &topo, p, true))
        .transpose()?;
    let dests: Vec<NodeId> = if !a.destinations.is_empty() {
        a.destinations.iter().map(|l| topo.node(l)).collect::<Result<_, _>>()?
    } else if let Some(s) = &spec {
        s.destinations()
    } else {
        topo.nodes().collect()
    };
    let mut extra = Vec::new();
    let weights = match a.heuristic {
        Heuristic::InverseCapacity => inverse_capacity(&topo),
        Heuristic::LocalSearch => {
            let Some(spec) = &spec else {
                bail!("local search needs --demands");
            };
            let opts = SearchOptions {
                bound: a.bound,
                budget: a.budget,
                ..Default::default()
            };
            m.tolerances = json!({"bound": a.bound, "budget": a.budget});
            let r = local_search_weights(&topo, spec, opts)?;
            info!("local search: worst {:.4}, converged {}, stuck {}", r.worst, r.converged, r.stuck);
            extra.push((
                "search",
                json!({"worst": r.worst, "converged": r.converged, "stuck": r.stuck, "trace": r.trace}),
            ));
            r.weights.iter().map(|&w| f64::from(w)).collect()
        }
    };
    let (dags, skipped) = oblite::dag::build_dags(&topo, &weights, &dests)?;
    if !skipped.is_empty() {
        info!("{} arcs left out of the DAGs to keep them acyclic", skipped.len());
    }
    let mut fields = vec![
        ("dags", dags.to_json(&topo)),
        ("weights", weight_rows(&topo, &weights)),
    ];
    fields.extend(extra);
    emit(a.out.as_deref(), &with_manifest(&m, body(fields)))?;
    Ok(ExitCode::SUCCESS)
}

pub fn optimize(a: &OptimizeArgs) -> Result<ExitCode> {
    let mut m = RunManifest::new("optimize", a);
    let topo = load_topology(&mut m, &a.topology)?;
    let (dags, _) = load_dags(&mut m, &topo, &a.dags)?;
    let spec = spec_for_mode(load_demands(&mut m, &topo, &a.demands, !a.fixed_scale)?, a.mode)?;
    let init = match &a.init {
        Some(p) => load_config(&mut m, &topo, &dags, p)?,
        None => seed_from_ecmp(&topo, &dags),
    };
    let opts = GpOptions {
        max_iterations: a.max_iterations,
        tolerance: a.tolerance,
        patience: a.patience,
        normalization: a.normalization.into(),
        ..Default::default()
    };
    m.tolerances = json!({
        "tolerance": opts.tolerance, "patience": opts.patience, "floor": opts.floor,
        "threshold": opts.threshold, "max_halvings": opts.max_halvings,
    });
    let r = oblite::splitopt::optimize(&topo, &dags, &spec, &init, &opts)?;
    info!("optimized value {:.6} ({:?})", r.alpha, r.status);
    let out = with_manifest(
        &m,
        body(vec![
            ("config", r.config.to_json(&topo, &dags)),
            ("alpha", json!(r.alpha)),
            ("status", json!(r.status)),
            ("iterations", json!(r.trace.len() - 1)),
        ]),
    );
    emit(a.out.as_deref(), &out)?;
    if let Some(p) = &a.trace {
        emit(Some(p), &format!("{}{}", m.comment(), r.trace_csv()))?;
    }
    if let Some(p) = &a.certificate {
        let Some(c) = &r.certificate else {
            bail!("discrete mode produces no certificate");
        };
        emit(Some(p), &with_manifest(&m, body(vec![("certificate", c.to_json(&topo))])))?;
    }
    if a.out.is_some() {
        println!("{:.6}", r.alpha);
    }
    if r.status == GpStatus::SolverFailure {
        return Err(NumericalFailure("a convex subproblem failed; wrote the best configuration found".into()).into());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<ExitCode> {
    let mut m = RunManifest::new("evaluate", a);
    let topo = load_topology(&mut m, &a.topology)?;
    let (dags, _) = load_dags(&mut m, &topo, &a.dags)?;
    let cfg = load_config(&mut m, &topo, &dags, &a.config)?;
    let mut spec = load_demands(&mut m, &topo, &a.demands, !a.fixed_scale)?;
    if let Some(mode) = a.mode {
        spec = spec_for_mode(spec, mode)?;
    }
    let opts = PerfOptions {
        normalization: a.normalization.into(),
        method: a.method.into(),
        ..Default::default()
    };
    let r = perf_ratio(&topo, &dags, &cfg, &spec, opts)?;
    emit(a.out.as_deref(), &format!("{}{}", m.comment(), r.to_csv()))?;
    if let Some(p) = &a.certificate {
        let Some(c) = &r.certificate else {
            bail!("no certificate: the set was evaluated by {}", r.method);
        };
        emit(Some(p), &with_manifest(&m, body(vec![("certificate", c.to_json(&topo))])))?;
    }
    if a.out.is_some() {
        println!("{:.6}", r.ratio);
    }
    Ok(ExitCode::SUCCESS)
}

fn single_matrix(spec: DemandSpec) -> Result<DemandMatrix> {
    match spec {
        DemandSpec::Discrete(mut ms) if ms.len() == 1 => Ok(ms.remove(0)),
        _ => bail!("expected exactly one base matrix"),
    }
}

pub fn compare(a: &CompareArgs) -> Result<ExitCode> {
    let mut m = RunManifest::new("compare", a);
    let topo = load_topology(&mut m, &a.topology)?;
    let base = single_matrix(load_demands(&mut m, &topo, &a.demands, true)?)?;
    let network = a.network.clone().unwrap_or_else(|| {
        a.topology
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let opts = GpOptions {
        max_iterations: a.max_iterations,
        ..Default::default()
    };
    let rows = oblite::experiments::compare(&network, &topo, &inverse_capacity(&topo), &base, &a.margins, &opts)?;
    emit(a.out.as_deref(), &format!("{}{}", m.comment(), compare_csv(&rows)))?;
    Ok(ExitCode::SUCCESS)
}

pub fn stretch(a: &StretchArgs) -> Result<ExitCode> {
    let mut m = RunManifest::new("stretch", a);
    let topo = load_topology(&mut m, &a.topology)?;
    let (dags, _) = load_dags(&mut m, &topo, &a.dags)?;
    let cfg = load_config(&mut m, &topo, &dags, &a.config)?;
    let pairs: Vec<Pair> = match &a.demands {
        Some(p) => load_demands(&mut m, &topo, p, true)?.pairs(),
        None => dags
            .iter()
            .flat_map(|(t, dag)| {
                let reach = dag.reaches_root(&topo);
                topo.nodes().filter(move |&s| s != t && reach[s.0]).map(move |s| (s, t))
            })
            .collect(),
    };
    let r = oblite::experiments::stretch(&topo, &dags, &cfg, &pairs)?;
    emit(a.out.as_deref(), &format!("{}{}", m.comment(), r.to_csv()))?;
    if a.out.is_some() {
        println!("{:.6}", r.average);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn translate(a: &TranslateArgs) -> Result<ExitCode> {
    let mut m = RunManifest::new("translate", a);
    let topo = load_topology(&mut m, &a.topology)?;
    let (dags, weights) = load_dags(&mut m, &topo, &a.dags)?;
    let weights = weights.unwrap_or_else(|| inverse_capacity(&topo));
    let cfg = load_config(&mut m, &topo, &dags, &a.config)?;
    let plan = VirtualLinkPlan::from_config(&topo, &dags, &cfg, a.budget)?;
    let lies = emit_lie_plan(&topo, &dags, &weights, &plan)?;
    let mut fields = vec![
        ("max_error", json!(plan.max_error())),
        ("virtual_links", serde_json::to_value(&plan)?),
        ("lies", serde_json::to_value(&lies)?),
    ];
    if let Some(p) = &a.demands {
        let spec = load_demands(&mut m, &topo, p, true)?;
        let opts = PerfOptions {
            normalization: a.normalization.into(),
            ..Default::default()
        };
        let ideal = perf_ratio(&topo, &dags, &cfg, &spec, opts)?.ratio;
        let quantized = evaluate_quantized(&topo, &dags, &plan, &spec, opts)?.ratio;
        if quantized > ideal * 1.05 {
            warn!("quantized ratio {quantized:.4} is more than 5% above {ideal:.4}; consider a larger budget");
        }
        fields.push(("evaluation", json!({"ideal": ideal, "quantized": quantized})));
    }
    emit(a.out.as_deref(), &with_manifest(&m, body(fields)))?;
    if let Some(p) = &a.quantized {
        let q = plan.to_config(&topo, &dags)?;
        emit(Some(p), &with_manifest(&m, body(vec![("config", q.to_json(&topo, &dags))])))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_instance(m: &RunManifest, dir: &Path, topo: &Topology, matrices: &[DemandMatrix]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    emit(Some(&dir.join("topology.txt")), &format!("{}{}", m.comment(), topo.to_text()))?;
    let ms: Value = serde_json::from_str(&write_discrete_json(topo, matrices))?;
    emit(Some(&dir.join("demands.json")), &with_manifest(m, body(vec![("matrices", ms)])))?;
    Ok(())
}

pub fn fixture(a: &FixtureArgs) -> Result<ExitCode> {
    let mut m = RunManifest::new("fixture", a);
    let (topo, matrices) = match &a.kind {
        FixtureKind::RunningExample => {
            let ex = running_example_with(1.0);
            (ex.topology, ex.vertices.to_vec())
        }
        FixtureKind::GoldenVariant { inner_capacity } => {
            if !(*inner_capacity > 0.0 && inner_capacity.is_finite()) {
                bail!("inner capacity must be positive and finite");
            }
            let ex = running_example_with(*inner_capacity);
            (ex.topology, ex.vertices.to_vec())
        }
        FixtureKind::Bipartition { weights } => {
            let b = bipartition(weights)?;
            (b.topology, b.vertices.to_vec())
        }
        FixtureKind::PathGap { n } => {
            let p = path_gap(*n)?;
            (p.topology, p.family)
        }
        FixtureKind::Random { nodes, seed, total } => {
            if *nodes < 2 {
                bail!("need at least 2 nodes");
            }
            m.seeds.push(*seed);
            let topo = random_topology(*seed, *nodes);
            let d = gravity_demands(&topo, *total)?;
            (topo, vec![d])
        }
    };
    write_instance(&m, &a.out_dir, &topo, &matrices)?;
    println!("{}", a.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

pub fn lemma1(a: &Lemma1Args) -> Result<ExitCode> {
    let m = RunManifest::new("lemma1", a);
    let b = bipartition(&a.weights)?;
    let p1 = a
        .p1
        .iter()
        .map(|&i| i.checked_sub(1).ok_or_else(|| anyhow!("indices are 1-based")))
        .collect::<Result<Vec<_>>>()?;
    let (dags, cfg) = lemma1_routing(&b, &p1).context("invalid bipartition")?;
    write_instance(&m, &a.out_dir, &b.topology, &b.vertices)?;
    emit(
        Some(&a.out_dir.join("dags.json")),
        &with_manifest(&m, body(vec![("dags", dags.to_json(&b.topology))])),
    )?;
    emit(
        Some(&a.out_dir.join("config.json")),
        &with_manifest(&m, body(vec![("config", cfg.to_json(&b.topology, &dags))])),
    )?;
    let spec = DemandSpec::discrete(b.vertices.to_vec())?;
    let opts = PerfOptions {
        normalization: Normalization::AnyPd,
        ..Default::default()
    };
    let r = perf_ratio(&b.topology, &dags, &cfg, &spec, opts)?;
    println!("{:.6}", r.ratio);
    Ok(ExitCode::SUCCESS)
}
