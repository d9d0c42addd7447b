//! Constructed instances: the running example, the bipartition gadget
//! network, the path-gap network, and random test topologies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dag::{build_dags, DagSet, DestinationDag};
use crate::demand::DemandMatrix;
use crate::routing::SplittingConfig;
use crate::topology::{ArcId, NodeId, Topology};

/// Random connected undirected topology on `n` nodes labelled `n0..`, with
/// capacities and weights drawn from `{1, 2, 3}`.
pub fn random_topology(seed: u64, n: usize) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topo = Topology::new(false);
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    topo.add_node(&names[0]);
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let c = rng.gen_range(1..4) as f64;
        topo.add_link(&names[i], &names[j], c, rng.gen_range(1..4) as f64)
            .expect("fresh pair");
    }
    for _ in 0..n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let (a, b) = (topo.add_node(&names[i]), topo.add_node(&names[j]));
        if i != j && topo.find_arc(a, b).is_none() {
            let c = rng.gen_range(1..4) as f64;
            topo.add_link(&names[i], &names[j], c, rng.gen_range(1..4) as f64)
                .expect("fresh pair");
        }
    }
    topo
}

/// "Infinite" capacity used by the constructions.
pub const LARGE_CAPACITY: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("need at least {min} {what}, got {got}")]
    TooSmall { what: &'static str, min: usize, got: usize },
    #[error("integers must be positive")]
    NonPositiveWeight,
    #[error("index {0} out of range")]
    BadIndex(usize),
    #[error("P1 sums to {got} but half the total is {half}")]
    NotEqualSum { got: f64, half: f64 },
}

/// The four-node running example: links s1-s2, s1-v, s2-v, s2-t, v-t.
#[derive(Debug, Clone)]
pub struct RunningExample {
    pub topology: Topology,
    /// Inverse-capacity DAGs for `t`.
    pub dags: DagSet,
    pub s1: NodeId,
    pub s2: NodeId,
    pub t: NodeId,
    /// `(d(s1,t), d(s2,t))` = (2, 0) and (0, 2).
    pub vertices: [DemandMatrix; 2],
    /// Link weights under which s2 has two equal-cost next hops (t and v)
    /// and s1 two (s2 and v).
    pub ecmp_weights: Vec<f64>,
    /// DAGs for `ecmp_weights`; their shortest-path arcs equal the
    /// augmented arcs of `dags`.
    pub ecmp_dags: DagSet,
}

/// Running-example topology with unit capacity on `s2-t` and `v-t` and
/// `inner` on the other three links.
pub fn running_example_topology(inner: f64) -> Topology {
    let mut topo = Topology::new(false);
    for (a, b, c) in [("s1", "s2", inner), ("s1", "v", inner), ("s2", "v", inner), ("s2", "t", 1.0), ("v", "t", 1.0)] {
        topo.add_link(a, b, c, 1.0 / c).expect("distinct links");
    }
    topo
}

pub fn running_example() -> RunningExample {
    running_example_with(1.0)
}

pub fn running_example_with(inner: f64) -> RunningExample {
    let topology = running_example_topology(inner);
    let node = |l: &str| topology.node(l).expect("fixture label");
    let (s1, s2, t) = (node("s1"), node("s2"), node("t"));
    let (dags, _) = build_dags(&topology, &topology.weights(), &[t]).expect("fixture DAGs");
    let mut d1 = DemandMatrix::new();
    d1.set(s1, t, 2.0);
    let mut d2 = DemandMatrix::new();
    d2.set(s2, t, 2.0);
    let ecmp_weights: Vec<f64> = topology
        .arcs()
        .iter()
        .map(|a| {
            let pair = [topology.label(a.src), topology.label(a.dst)];
            match pair {
                ["s1", "v"] | ["v", "s1"] | ["s2", "t"] | ["t", "s2"] => 2.0,
                _ => 1.0,
            }
        })
        .collect();
    let (ecmp_dags, _) = build_dags(&topology, &ecmp_weights, &[t]).expect("fixture DAGs");
    RunningExample {
        topology,
        dags,
        s1,
        s2,
        t,
        vertices: [d1, d2],
        ecmp_weights,
        ecmp_dags,
    }
}

/// The hand-tuned split on the augmented running-example DAG: 2/3 to s2 and
/// 1/3 to v at s1, an even split at s2.
pub fn running_example_config(topo: &Topology, dags: &DagSet) -> SplittingConfig {
    let t = topo.node("t").expect("fixture label");
    let mut r = vec![0.0; topo.num_arcs()];
    for (a, b, x) in [("s1", "s2", 2.0 / 3.0), ("s1", "v", 1.0 / 3.0), ("s2", "t", 0.5), ("s2", "v", 0.5), ("v", "t", 1.0)] {
        let arc = topo
            .find_arc(topo.node(a).expect("label"), topo.node(b).expect("label"))
            .expect("fixture arc");
        r[arc.0] = x;
    }
    SplittingConfig::new(topo, dags, BTreeMap::from([(t, r)])).expect("valid fixture config")
}

/// Network built from a bipartition instance: per integer `w_i` a triangle
/// `x{i}a, x{i}b, m{i}` of capacity `w_i`, spokes `s1 -> x{i}a` and
/// `s2 -> x{i}b` and an uplink `m{i} -> t`, each of capacity `2 w_i`.
#[derive(Debug, Clone)]
pub struct Bipartition {
    pub topology: Topology,
    pub weights: Vec<u64>,
    pub s1: NodeId,
    pub s2: NodeId,
    pub t: NodeId,
    /// `(2 SUM, 0)` and `(0, 2 SUM)`.
    pub vertices: [DemandMatrix; 2],
}

impl Bipartition {
    pub fn sum(&self) -> u64 {
        self.weights.iter().sum()
    }
}

pub fn bipartition(weights: &[u64]) -> Result<Bipartition, FixtureError> {
    if weights.is_empty() {
        return Err(FixtureError::TooSmall { what: "integers", min: 1, got: 0 });
    }
    if weights.contains(&0) {
        return Err(FixtureError::NonPositiveWeight);
    }
    let mut topo = Topology::new(true);
    let (s1, s2, t) = (topo.add_node("s1"), topo.add_node("s2"), topo.add_node("t"));
    for (i, &w) in weights.iter().enumerate() {
        let (w, i) = (w as f64, i + 1);
        let (xa, xb, m) = (format!("x{i}a"), format!("x{i}b"), format!("m{i}"));
        for (a, b) in [(&xa, &xb), (&xa, &m), (&xb, &m)] {
            topo.add_link(a, b, w, 1.0 / w).expect("fresh link");
        }
        topo.add_arc("s1", &xa, 2.0 * w, 0.5 / w).expect("fresh arc");
        topo.add_arc("s2", &xb, 2.0 * w, 0.5 / w).expect("fresh arc");
        topo.add_arc(&m, "t", 2.0 * w, 0.5 / w).expect("fresh arc");
    }
    let total = 2.0 * weights.iter().sum::<u64>() as f64;
    let mut d1 = DemandMatrix::new();
    d1.set(s1, t, total);
    let mut d2 = DemandMatrix::new();
    d2.set(s2, t, total);
    Ok(Bipartition {
        topology: topo,
        weights: weights.to_vec(),
        s1,
        s2,
        t,
        vertices: [d1, d2],
    })
}

/// The forward-reduction routing for the equal-sum split `p1` (indices into
/// the integer list). Gadget `i` in `P1` is oriented `x{i}a -> x{i}b`, every
/// other gadget the opposite way.
pub fn lemma1_routing(b: &Bipartition, p1: &[usize]) -> Result<(DagSet, SplittingConfig), FixtureError> {
    let k = b.weights.len();
    if let Some(&i) = p1.iter().find(|&&i| i >= k) {
        return Err(FixtureError::BadIndex(i));
    }
    let in_p1: Vec<bool> = (0..k).map(|i| p1.contains(&i)).collect();
    let total = b.sum();
    let got: u64 = (0..k).filter(|&i| in_p1[i]).map(|i| b.weights[i]).sum();
    if 2 * got != total {
        return Err(FixtureError::NotEqualSum {
            got: got as f64,
            half: total as f64 / 2.0,
        });
    }
    let sum = total as f64;
    let topo = &b.topology;
    let arc = |x: &str, y: &str| {
        topo.find_arc(topo.node(x).expect("label"), topo.node(y).expect("label"))
            .expect("gadget arc")
    };
    let mut ratios = vec![0.0; topo.num_arcs()];
    let mut arcs = Vec::new();
    for (i, &w) in b.weights.iter().enumerate() {
        let w = w as f64;
        let (xa, xb, m) = (format!("x{}a", i + 1), format!("x{}b", i + 1), format!("m{}", i + 1));
        let heavy = 4.0 * w / (3.0 * sum);
        let light = 2.0 * w / (3.0 * sum);
        let (into_a, into_b) = if in_p1[i] { (heavy, light) } else { (light, heavy) };
        let mut set = |a, x| {
            ratios[a] = x;
            arcs.push(ArcId(a));
        };
        set(arc("s1", &xa).0, into_a);
        set(arc("s2", &xb).0, into_b);
        set(arc(&m, "t").0, 1.0);
        let (from, to) = if in_p1[i] { (&xa, &xb) } else { (&xb, &xa) };
        set(arc(from, to).0, 0.5);
        set(arc(from, &m).0, 0.5);
        set(arc(to, &m).0, 1.0);
    }
    let dag = DestinationDag::new(topo, b.t, arcs.clone()).expect("gadget orientation is acyclic");
    let mut dags = DagSet::new();
    dags.insert(dag, arcs);
    let config = SplittingConfig::new(topo, &dags, BTreeMap::from([(b.t, ratios)])).expect("equal-sum ratios are valid");
    Ok((dags, config))
}

/// A bidirectional path `x1 .. xn` of large capacity with a unit arc from
/// every `x_i` to `t`, and the demand family `D_i`: `n` units from `x_i`.
#[derive(Debug, Clone)]
pub struct PathGap {
    pub topology: Topology,
    pub sources: Vec<NodeId>,
    pub t: NodeId,
    pub family: Vec<DemandMatrix>,
}

pub fn path_gap(n: usize) -> Result<PathGap, FixtureError> {
    if n < 2 {
        return Err(FixtureError::TooSmall { what: "path nodes", min: 2, got: n });
    }
    let mut topo = Topology::new(true);
    let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let sources: Vec<NodeId> = names.iter().map(|l| topo.add_node(l)).collect();
    let t = topo.add_node("t");
    for w in names.windows(2) {
        topo.add_link(&w[0], &w[1], LARGE_CAPACITY, 1.0 / LARGE_CAPACITY)
            .expect("fresh link");
    }
    for l in &names {
        topo.add_arc(l, "t", 1.0, 1.0).expect("fresh arc");
    }
    let family = sources
        .iter()
        .map(|&s| {
            let mut d = DemandMatrix::new();
            d.set(s, t, n as f64);
            d
        })
        .collect();
    Ok(PathGap {
        topology: topo,
        sources,
        t,
        family,
    })
}
