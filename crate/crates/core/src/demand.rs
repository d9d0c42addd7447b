//! Demand matrices, uncertainty sets and synthetic generators.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, Topology, TopologyError};

/// Ordered `(source, destination)` pair.
pub type Pair = (NodeId, NodeId);

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("demand {src} -> {dst}: source equals destination")]
    SelfPair { src: String, dst: String },
    #[error("demand {src} -> {dst}: value {value} is negative or not finite")]
    BadValue { src: String, dst: String, value: f64 },
    #[error("bounds for {src} -> {dst} out of order: [{lo}, {hi}]")]
    BadBounds { src: String, dst: String, lo: f64, hi: f64 },
    #[error("margin must be at least 1, got {0}")]
    BadMargin(f64),
    #[error("heavy fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("total outgoing capacity is zero")]
    ZeroCapacity,
    #[error("need at least two nodes")]
    TooFewNodes,
    #[error("discrete demand set is empty")]
    EmptySet,
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("demand CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("demand JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("demand file: {0}")]
    Format(String),
}

/// Nonnegative demand per ordered node pair; absent pairs are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandMatrix {
    entries: BTreeMap<Pair, f64>,
}

impl DemandMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `d(s, t)`; zero removes the entry.
    ///
    /// # Panics
    /// If `s == t` or `value` is negative or not finite. Use
    /// [`DemandMatrix::try_set`] for unchecked input.
    pub fn set(&mut self, s: NodeId, t: NodeId, value: f64) {
        assert!(s != t, "demand from a node to itself");
        assert!(value >= 0.0 && value.is_finite(), "demand value {value}");
        if value == 0.0 {
            self.entries.remove(&(s, t));
        } else {
            self.entries.insert((s, t), value);
        }
    }

    pub fn try_set(&mut self, topo: &Topology, s: NodeId, t: NodeId, value: f64) -> Result<(), DemandError> {
        let names = || (topo.label(s).to_string(), topo.label(t).to_string());
        if s == t {
            let (src, dst) = names();
            return Err(DemandError::SelfPair { src, dst });
        }
        if !(value >= 0.0 && value.is_finite()) {
            let (src, dst) = names();
            return Err(DemandError::BadValue { src, dst, value });
        }
        self.set(s, t, value);
        Ok(())
    }

    pub fn get(&self, s: NodeId, t: NodeId) -> f64 {
        self.entries.get(&(s, t)).copied().unwrap_or(0.0)
    }

    /// Nonzero entries in `(source, destination)` order.
    pub fn iter(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        self.entries.iter().map(|(&p, &v)| (p, v))
    }

    pub fn pairs(&self) -> Vec<Pair> {
        self.entries.keys().copied().collect()
    }

    pub fn destinations(&self) -> Vec<NodeId> {
        let mut d: Vec<NodeId> = self.entries.keys().map(|&(_, t)| t).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> DemandMatrix {
        let mut m = DemandMatrix::new();
        for (&(s, t), &v) in &self.entries {
            m.set(s, t, v * factor);
        }
        m
    }

    pub fn to_rows(&self, topo: &Topology) -> Vec<DemandRow> {
        self.iter()
            .map(|((s, t), v)| DemandRow {
                src: topo.label(s).to_string(),
                dst: topo.label(t).to_string(),
                demand: v,
            })
            .collect()
    }

    pub fn from_rows(topo: &Topology, rows: &[DemandRow]) -> Result<DemandMatrix, DemandError> {
        let mut m = DemandMatrix::new();
        for r in rows {
            let (s, t) = (topo.node(&r.src)?, topo.node(&r.dst)?);
            m.try_set(topo, s, t, r.demand)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRow {
    pub src: String,
    pub dst: String,
    pub demand: f64,
}

/// Per-pair interval `[dmin, dmax]`, scaled by a common factor when
/// `scale_free` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpec {
    bounds: BTreeMap<Pair, (f64, f64)>,
    /// Allow `lambda * [dmin, dmax]` for any `lambda >= 0`. The performance
    /// ratio is invariant under this scaling.
    pub scale_free: bool,
}

impl BoxSpec {
    pub fn new(scale_free: bool) -> Self {
        BoxSpec {
            bounds: BTreeMap::new(),
            scale_free,
        }
    }

    pub fn insert(&mut self, topo: &Topology, s: NodeId, t: NodeId, lo: f64, hi: f64) -> Result<(), DemandError> {
        let names = || (topo.label(s).to_string(), topo.label(t).to_string());
        if s == t {
            let (src, dst) = names();
            return Err(DemandError::SelfPair { src, dst });
        }
        if !(lo >= 0.0 && lo.is_finite() && hi >= lo && !hi.is_nan()) {
            let (src, dst) = names();
            return Err(DemandError::BadBounds { src, dst, lo, hi });
        }
        self.bounds.insert((s, t), (lo, hi));
        Ok(())
    }

    pub fn bounds(&self, p: Pair) -> Option<(f64, f64)> {
        self.bounds.get(&p).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pair, f64, f64)> + '_ {
        self.bounds.iter().map(|(&p, &(lo, hi))| (p, lo, hi))
    }

    /// Pairs that may carry demand (`dmax > 0`).
    pub fn active_pairs(&self) -> Vec<Pair> {
        self.iter().filter(|&(_, _, hi)| hi > 0.0).map(|(p, _, _)| p).collect()
    }

    pub fn destinations(&self) -> Vec<NodeId> {
        let mut d: Vec<NodeId> = self.active_pairs().into_iter().map(|(_, t)| t).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn is_unbounded(&self) -> bool {
        self.bounds.values().all(|&(lo, hi)| lo == 0.0 && hi.is_infinite())
    }

    pub fn contains(&self, d: &DemandMatrix) -> bool {
        d.iter().all(|(p, _)| self.bounds.contains_key(&p))
            && self.bounds.iter().all(|(&(s, t), &(lo, hi))| {
                let v = d.get(s, t);
                v >= lo - 1e-12 && v <= hi + 1e-12
            })
    }
}

/// Demand uncertainty set.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandSpec {
    Discrete(Vec<DemandMatrix>),
    Box(BoxSpec),
}

impl DemandSpec {
    /// Any nonnegative demand on `pairs`: a scale-free box with
    /// `dmin = 0` and `dmax = inf`.
    pub fn unbounded(pairs: &[Pair]) -> DemandSpec {
        let mut b = BoxSpec::new(true);
        for &p in pairs {
            b.bounds.insert(p, (0.0, f64::INFINITY));
        }
        DemandSpec::Box(b)
    }

    pub fn discrete(matrices: Vec<DemandMatrix>) -> Result<DemandSpec, DemandError> {
        if matrices.is_empty() {
            return Err(DemandError::EmptySet);
        }
        Ok(DemandSpec::Discrete(matrices))
    }

    /// Every pair that can carry demand.
    pub fn pairs(&self) -> Vec<Pair> {
        match self {
            DemandSpec::Discrete(ms) => {
                let mut p: Vec<Pair> = ms.iter().flat_map(|m| m.pairs()).collect();
                p.sort_unstable();
                p.dedup();
                p
            }
            DemandSpec::Box(b) => b.active_pairs(),
        }
    }

    pub fn destinations(&self) -> Vec<NodeId> {
        let mut d: Vec<NodeId> = self.pairs().into_iter().map(|(_, t)| t).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

/// Every ordered pair of distinct nodes.
pub fn all_pairs(topo: &Topology) -> Vec<Pair> {
    let mut v = Vec::new();
    for s in topo.nodes() {
        for t in topo.nodes() {
            if s != t {
                v.push((s, t));
            }
        }
    }
    v
}

/// Gravity model: `d_ij` proportional to the product of the total outgoing
/// capacities of `i` and `j`, scaled so entries sum to `total`.
pub fn gravity_demands(topo: &Topology, total: f64) -> Result<DemandMatrix, DemandError> {
    if topo.num_nodes() < 2 {
        return Err(DemandError::TooFewNodes);
    }
    let mass: Vec<f64> = topo
        .nodes()
        .map(|v| topo.out_arcs(v).iter().map(|&a| topo.capacity(a)).sum())
        .collect();
    let pairs = all_pairs(topo);
    let norm: f64 = pairs.iter().map(|&(i, j)| mass[i.0] * mass[j.0]).sum();
    if norm <= 0.0 {
        return Err(DemandError::ZeroCapacity);
    }
    let mut m = DemandMatrix::new();
    for (i, j) in pairs {
        m.set(i, j, total * mass[i.0] * mass[j.0] / norm);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimodalParams {
    pub heavy_fraction: f64,
    pub heavy_value: f64,
    pub light_value: f64,
    pub seed: u64,
}

impl Default for BimodalParams {
    fn default() -> Self {
        BimodalParams {
            heavy_fraction: 0.1,
            heavy_value: 10.0,
            light_value: 1.0,
            seed: 0,
        }
    }
}

/// A seeded uniform sample of `round(fraction * #pairs)` pairs gets
/// `heavy_value`, every other pair `light_value`.
pub fn bimodal_demands(topo: &Topology, params: &BimodalParams) -> Result<DemandMatrix, DemandError> {
    if !(0.0..=1.0).contains(&params.heavy_fraction) {
        return Err(DemandError::BadFraction(params.heavy_fraction));
    }
    let pairs = all_pairs(topo);
    let heavy = (params.heavy_fraction * pairs.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let chosen = index::sample(&mut rng, pairs.len(), heavy);
    let mut is_heavy = vec![false; pairs.len()];
    for i in chosen.iter() {
        is_heavy[i] = true;
    }
    let mut m = DemandMatrix::new();
    for (k, (s, t)) in pairs.into_iter().enumerate() {
        let v = if is_heavy[k] { params.heavy_value } else { params.light_value };
        m.try_set(topo, s, t, v)?;
    }
    Ok(m)
}

/// `[d / margin, margin * d]` for every nonzero pair of `base`. Pairs absent
/// from `base` stay at zero.
pub fn margin_box(base: &DemandMatrix, margin: f64, scale_free: bool) -> Result<DemandSpec, DemandError> {
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(DemandError::BadMargin(margin));
    }
    let mut b = BoxSpec::new(scale_free);
    for ((s, t), d) in base.iter() {
        b.bounds.insert((s, t), (d / margin, d * margin));
    }
    Ok(DemandSpec::Box(b))
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundRow {
    src: String,
    dst: String,
    dmin: f64,
    dmax: String,
}

/// Reads `src,dst,dmin,dmax` (with `dmax` possibly `inf`).
pub fn read_box_csv(topo: &Topology, text: &str, scale_free: bool) -> Result<BoxSpec, DemandError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut b = BoxSpec::new(scale_free);
    for row in rdr.deserialize() {
        let row: BoundRow = row?;
        let hi = match row.dmax.to_ascii_lowercase().as_str() {
            "inf" | "infinity" => f64::INFINITY,
            s => s
                .parse::<f64>()
                .map_err(|_| DemandError::Format(format!("bad dmax `{}`", row.dmax)))?,
        };
        let (s, t) = (topo.node(&row.src)?, topo.node(&row.dst)?);
        b.insert(topo, s, t, row.dmin, hi)?;
    }
    Ok(b)
}

pub fn write_box_csv(topo: &Topology, b: &BoxSpec) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for ((s, t), lo, hi) in b.iter() {
        let hi = if hi.is_infinite() { "inf".to_string() } else { hi.to_string() };
        w.serialize(BoundRow {
            src: topo.label(s).to_string(),
            dst: topo.label(t).to_string(),
            dmin: lo,
            dmax: hi,
        })
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Reads a demand CSV: a point matrix when every row has `dmin == dmax`,
/// a box otherwise.
pub fn read_demand_csv(topo: &Topology, text: &str, scale_free: bool) -> Result<DemandSpec, DemandError> {
    let b = read_box_csv(topo, text, scale_free)?;
    if b.iter().all(|(_, lo, hi)| lo == hi) {
        let mut m = DemandMatrix::new();
        for ((s, t), lo, _) in b.iter() {
            m.set(s, t, lo);
        }
        return DemandSpec::discrete(vec![m]);
    }
    Ok(DemandSpec::Box(b))
}

/// Discrete set as a JSON array of matrices, each an array of
/// `{src, dst, demand}`.
pub fn read_discrete_json(topo: &Topology, text: &str) -> Result<DemandSpec, DemandError> {
    let rows: Vec<Vec<DemandRow>> = serde_json::from_str(text)?;
    let ms = rows
        .iter()
        .map(|r| DemandMatrix::from_rows(topo, r))
        .collect::<Result<Vec<_>, _>>()?;
    DemandSpec::discrete(ms)
}

pub fn write_discrete_json(topo: &Topology, ms: &[DemandMatrix]) -> String {
    let rows: Vec<Vec<DemandRow>> = ms.iter().map(|m| m.to_rows(topo)).collect();
    serde_json::to_string_pretty(&rows).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triangle() -> Topology {
        Topology::parse("directed\na b 2\nb c 1\nc a 1\n").unwrap()
    }

    #[test]
    fn gravity_symmetric_and_weighted() {
        let topo = Topology::parse("undirected\na b\nb c\nc a\n").unwrap();
        let m = gravity_demands(&topo, 6.0).unwrap();
        for (_, v) in m.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.iter().count(), 6);

        // Outgoing capacity C = (2, 1, 1); pairwise products sum to 10.
        let topo = triangle();
        let m = gravity_demands(&topo, 8.0).unwrap();
        let n = |l| topo.node(l).unwrap();
        let expect = |ci: f64, cj: f64| 8.0 * ci * cj / 10.0;
        assert!((m.get(n("a"), n("b")) - expect(2.0, 1.0)).abs() < 1e-12);
        assert!((m.get(n("b"), n("c")) - expect(1.0, 1.0)).abs() < 1e-12);
        assert!((m.get(n("c"), n("a")) - expect(1.0, 2.0)).abs() < 1e-12);
        assert!((m.total() - 8.0).abs() < 1e-12);

        assert!(gravity_demands(&topo, 0.0).unwrap().is_zero());
    }

    #[test]
    fn bimodal_counts() {
        let topo = Topology::parse("undirected\na b\nb c\nc d\n").unwrap();
        let count_heavy = |m: &DemandMatrix, h: f64| m.iter().filter(|&(_, v)| v == h).count();
        let p = BimodalParams { heavy_fraction: 0.25, heavy_value: 5.0, light_value: 1.0, seed: 7 };
        let m = bimodal_demands(&topo, &p).unwrap();
        assert_eq!(count_heavy(&m, 5.0), 3);
        assert_eq!(count_heavy(&m, 1.0), 9);
        assert_eq!(m, bimodal_demands(&topo, &p).unwrap());

        let zero = BimodalParams { heavy_fraction: 0.0, ..p.clone() };
        assert_eq!(count_heavy(&bimodal_demands(&topo, &zero).unwrap(), 1.0), 12);
        let all = BimodalParams { heavy_fraction: 1.0, ..p };
        assert_eq!(count_heavy(&bimodal_demands(&topo, &all).unwrap(), 5.0), 12);
    }

    #[test]
    fn margin_box_examples() {
        let topo = triangle();
        let (a, b, c) = (topo.node("a").unwrap(), topo.node("b").unwrap(), topo.node("c").unwrap());
        let mut base = DemandMatrix::new();
        base.set(a, b, 4.0);
        let DemandSpec::Box(bx) = margin_box(&base, 2.0, false).unwrap() else { panic!() };
        assert_eq!(bx.bounds((a, b)), Some((2.0, 8.0)));
        assert_eq!(bx.bounds((b, c)), None);
        let DemandSpec::Box(one) = margin_box(&base, 1.0, false).unwrap() else { panic!() };
        assert_eq!(one.bounds((a, b)), Some((4.0, 4.0)));
        assert!(matches!(margin_box(&base, 0.5, false), Err(DemandError::BadMargin(_))));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let topo = triangle();
        let text = "src,dst,dmin,dmax\na,b,1,2\nb,c,0,inf\n";
        let DemandSpec::Box(b) = read_demand_csv(&topo, text, true).unwrap() else { panic!() };
        assert_eq!(read_box_csv(&topo, &write_box_csv(&topo, &b), true).unwrap(), b);
        assert!(!b.is_unbounded());

        let point = read_demand_csv(&topo, "src,dst,dmin,dmax\na,b,3,3\n", true).unwrap();
        let DemandSpec::Discrete(ms) = &point else { panic!() };
        let back = read_discrete_json(&topo, &write_discrete_json(&topo, ms)).unwrap();
        assert_eq!(back, point);

        assert!(read_demand_csv(&topo, "src,dst,dmin,dmax\na,a,1,1\n", true).is_err());
        assert!(read_demand_csv(&topo, "src,dst,dmin,dmax\na,b,3,1\n", true).is_err());
    }

    proptest! {
        #[test]
        fn gravity_sums_and_scales(seed in any::<u64>(), n in 2usize..8, total in 0.0f64..100.0, c in 0.1f64..10.0) {
            let topo = crate::fixtures::random_topology(seed, n);
            let m = gravity_demands(&topo, total).unwrap();
            prop_assert!((m.total() - total).abs() <= 1e-9 * total.max(1.0));
            let scaled = gravity_demands(&topo, total * c).unwrap();
            for ((s, t), v) in m.iter() {
                prop_assert!((scaled.get(s, t) - c * v).abs() <= 1e-9 * (c * v).max(1.0));
            }
        }

        #[test]
        fn margin_box_contains_base_and_widens(seed in any::<u64>(), x in 1.0f64..5.0, dx in 0.0f64..3.0) {
            let topo = crate::fixtures::random_topology(seed, 4);
            let base = gravity_demands(&topo, 10.0).unwrap();
            let DemandSpec::Box(narrow) = margin_box(&base, x, false).unwrap() else { unreachable!() };
            let DemandSpec::Box(wide) = margin_box(&base, x + dx, false).unwrap() else { unreachable!() };
            prop_assert!(narrow.contains(&base));
            for (p, lo, hi) in narrow.iter() {
                let (wlo, whi) = wide.bounds(p).unwrap();
                prop_assert!(wlo <= lo && whi >= hi);
            }
        }
    }
}
