use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const GOLDEN: f64 = 0.618_033_988_749_895;

fn oblite(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oblite"))
        .current_dir(dir)
        .args(args)
        .env_remove("OBLITE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = oblite(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// CSV rows after the manifest comment, as maps.
fn csv_rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn running_example(dir: &Path) {
    ok(dir, &["fixture", "running-example", "--out-dir", "fx"]);
    ok(
        dir,
        &["build-dags", "--topology", "fx/topology.txt", "--demands", "fx/demands.json", "--out", "dags.json"],
    );
}

fn ratio(cfg: &Value, src: &str, dst: &str) -> f64 {
    cfg["config"]["t"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["src"] == src && r["dst"] == dst)
        .unwrap()["ratio"]
        .as_f64()
        .unwrap()
}

#[test]
fn golden_split_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    running_example(dir);
    let dags = json(dir.join("dags.json"));
    assert_eq!(dags["dags"][0]["arcs"].as_array().unwrap().len(), 5);
    let printed = ok(
        dir,
        &[
            "optimize", "--topology", "fx/topology.txt", "--dags", "dags.json", "--demands", "fx/demands.json",
            "--mode", "discrete", "--out", "cfg.json", "--trace", "trace.csv",
        ],
    );
    let alpha: f64 = printed.trim().parse().unwrap();
    assert!((alpha - 2.0 * GOLDEN).abs() < 1e-2);
    let cfg = json(dir.join("cfg.json"));
    assert!((ratio(&cfg, "s1", "s2") - GOLDEN).abs() < 1e-2);
    assert!((ratio(&cfg, "s2", "t") - GOLDEN).abs() < 1e-2);
    assert_eq!(cfg["manifest"]["command"], "optimize");
    assert_eq!(cfg["manifest"]["inputs"].as_array().unwrap().len(), 3);

    let trace = csv_rows(&std::fs::read_to_string(dir.join("trace.csv")).unwrap());
    let alphas: Vec<f64> = trace.iter().map(|r| r["alpha"].parse().unwrap()).collect();
    assert!(alphas.windows(2).all(|w| w[1] <= w[0] + 1e-4));
}

#[test]
fn box_mode_writes_a_certificate() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    running_example(dir);
    std::fs::write(dir.join("box.csv"), "src,dst,dmin,dmax\ns1,t,0,2\ns2,t,0,2\n").unwrap();
    let printed = ok(
        dir,
        &[
            "optimize", "--topology", "fx/topology.txt", "--dags", "dags.json", "--demands", "box.csv", "--mode",
            "box", "--out", "cfg.json", "--certificate", "cert.json",
        ],
    );
    let r: f64 = printed.trim().parse().unwrap();
    assert!(r <= 4.0 / 3.0 + 1e-2);
    let cert = json(dir.join("cert.json"));
    assert!((cert["certificate"]["ratio"].as_f64().unwrap() - r).abs() < 1e-5);

    let printed = ok(
        dir,
        &[
            "evaluate", "--topology", "fx/topology.txt", "--dags", "dags.json", "--config", "cfg.json",
            "--demands", "box.csv", "--method", "vertices", "--out", "eval.csv",
        ],
    );
    let v: f64 = printed.trim().parse().unwrap();
    assert!((v - r).abs() < 1e-4, "vertices {v} vs certificate {r}");
}

#[test]
fn trivial_graph_builds_a_single_arc_dag() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("pair.txt"), "directed\na b 1\n").unwrap();
    ok(dir, &["build-dags", "--topology", "pair.txt", "--destinations", "b", "--out", "dags.json"]);
    let dags = json(dir.join("dags.json"));
    assert_eq!(dags["dags"][0]["destination"], "b");
    assert_eq!(dags["dags"][0]["arcs"], serde_json::json!([["a", "b"]]));
}

#[test]
fn local_search_reaches_three_halves() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["fixture", "running-example", "--out-dir", "fx"]);
    ok(
        dir,
        &[
            "build-dags", "--topology", "fx/topology.txt", "--heuristic", "local-search", "--demands",
            "fx/demands.json", "--bound", "1.5", "--out", "dags.json",
        ],
    );
    let dags = json(dir.join("dags.json"));
    assert!(dags["search"]["worst"].as_f64().unwrap() <= 1.5 + 1e-9);
}

#[test]
fn compare_keeps_the_ordering() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["fixture", "running-example", "--out-dir", "fx"]);
    std::fs::write(dir.join("base.csv"), "src,dst,dmin,dmax\ns1,t,1,1\ns2,t,1,1\n").unwrap();
    let out = ok(dir, &["compare", "--topology", "fx/topology.txt", "--demands", "base.csv", "--margins", "1,2"]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let f = |k: &str| r[k].parse::<f64>().unwrap();
        assert!(f("partial") <= f("oblivious") + 1e-6, "{r:?}");
        assert!(f("oblivious") <= f("ecmp") + 1e-6, "{r:?}");
    }
    assert!((rows[0]["base"].parse::<f64>().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn stretch_of_a_single_path_is_one() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("line.txt"), "directed\na b 1\nb c 1\n").unwrap();
    ok(dir, &["build-dags", "--topology", "line.txt", "--destinations", "c", "--out", "dags.json"]);
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"c": [{"src": "a", "dst": "b", "ratio": 1.0}, {"src": "b", "dst": "c", "ratio": 1.0}]}"#,
    )
    .unwrap();
    let avg = ok(
        dir,
        &["stretch", "--topology", "line.txt", "--dags", "dags.json", "--config", "cfg.json", "--out", "s.csv"],
    );
    assert_eq!(avg.trim(), "1.000000");
}

#[test]
fn translate_golden_split() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    running_example(dir);
    ok(
        dir,
        &[
            "optimize", "--topology", "fx/topology.txt", "--dags", "dags.json", "--demands", "fx/demands.json",
            "--mode", "discrete", "--out", "cfg.json",
        ],
    );
    for (budget, bound) in [("0", 1.5), ("10", 2.0 * GOLDEN * 1.05)] {
        ok(
            dir,
            &[
                "translate", "--topology", "fx/topology.txt", "--dags", "dags.json", "--config", "cfg.json",
                "--budget", budget, "--demands", "fx/demands.json", "--out", "plan.json", "--quantized", "q.json",
            ],
        );
        let plan = json(dir.join("plan.json"));
        let q = plan["evaluation"]["quantized"].as_f64().unwrap();
        assert!(q <= bound + 1e-9, "budget {budget}: {q}");
    }
}

#[test]
fn fixtures_have_the_expected_shape() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["fixture", "bipartition", "--weights", "1,1", "--out-dir", "bp"]);
    let topo = std::fs::read_to_string(dir.join("bp/topology.txt")).unwrap();
    let mut nodes = std::collections::BTreeSet::new();
    for l in topo.lines().skip_while(|l| l.starts_with('#')).skip(1) {
        let f: Vec<&str> = l.split_whitespace().collect();
        nodes.insert(f[0].to_string());
        nodes.insert(f[1].to_string());
    }
    assert_eq!(nodes.len(), 9);

    ok(dir, &["fixture", "path-gap", "--n", "3", "--out-dir", "pg"]);
    let topo = std::fs::read_to_string(dir.join("pg/topology.txt")).unwrap();
    let to_t: Vec<&str> = topo.lines().filter(|l| l.contains(" t ")).collect();
    assert_eq!(to_t.len(), 3);
    assert!(to_t.iter().all(|l| l.split_whitespace().nth(2) == Some("1")));
    let demands = json(dir.join("pg/demands.json"));
    assert_eq!(demands["matrices"].as_array().unwrap().len(), 3);

    ok(dir, &["fixture", "golden-variant", "--inner-capacity", "1e6", "--out-dir", "gv"]);
    let topo = std::fs::read_to_string(dir.join("gv/topology.txt")).unwrap();
    assert!(topo.contains("s1 s2 1000000"));
    assert!(topo.contains("s2 t 1 "));
}

#[test]
fn lemma1_routing_scores_four_thirds() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = ok(dir, &["lemma1", "--weights", "1,1", "--p1", "1", "--out-dir", "l"]);
    assert_eq!(out.trim(), "1.333333");
    let cfg = json(dir.join("l/config.json"));
    let r = cfg["config"]["t"].as_array().unwrap();
    let get = |s: &str, d: &str| r.iter().find(|x| x["src"] == s && x["dst"] == d).unwrap()["ratio"].as_f64().unwrap();
    assert!((get("s1", "x1a") - 2.0 / 3.0).abs() < 1e-12);
    assert!((get("s1", "x2a") - 1.0 / 3.0).abs() < 1e-12);

    let bad = oblite(dir, &["lemma1", "--weights", "1", "--out-dir", "l2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("invalid bipartition"));
}

#[test]
fn user_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(oblite(dir, &["evaluate", "--topology", "missing.txt"]).status.code(), Some(1));
    assert_eq!(oblite(dir, &["no-such-verb"]).status.code(), Some(1));
    ok(dir, &["fixture", "running-example", "--out-dir", "fx"]);
    let r = oblite(dir, &["build-dags", "--topology", "fx/topology.txt", "--heuristic", "local-search"]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(oblite(dir, &["--help"]).status.code(), Some(0));
    assert_eq!(oblite(dir, &["optimize", "--help"]).status.code(), Some(0));
}

#[test]
fn outputs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    running_example(dir);
    let args = [
        "optimize", "--topology", "fx/topology.txt", "--dags", "dags.json", "--demands", "fx/demands.json", "--mode",
        "oblivious",
    ];
    let a = ok(dir, &args);
    let b = ok(dir, &[&["--threads", "1"][..], &args[..]].concat());
    assert_eq!(a, b);
    let out = Command::new(env!("CARGO_BIN_EXE_oblite"))
        .current_dir(dir)
        .args(args)
        .env("OBLITE_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), a);
}

#[test]
fn lp_dump_writes_problems() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    running_example(dir);
    ok(
        dir,
        &[
            "optimize", "--topology", "fx/topology.txt", "--dags", "dags.json", "--demands", "fx/demands.json",
            "--mode", "discrete", "--out", "cfg.json",
        ],
    );
    ok(
        dir,
        &[
            "--lp-dump", "lps", "evaluate", "--topology", "fx/topology.txt", "--dags", "dags.json", "--config",
            "cfg.json", "--demands", "fx/demands.json",
        ],
    );
    assert!(std::fs::read_dir(dir.join("lps")).unwrap().count() > 0);
}
