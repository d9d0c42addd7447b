//! Vertices of the routable demand region
//! `{D in box : OPTU(D) <= 1}` for a handful of pairs.
//!
//! The region is approximated from outside: start from a box, then cut off
//! every vertex whose optimum exceeds 1 with the supporting hyperplane given
//! by the optimum LP's marginals. `OPTU` is sublinear, so `OPTU(D) >= y . D`
//! for those marginals `y` and each cut is valid. The vertex set is
//! maintained by incremental double description.

use log::debug;

use crate::dag::DagSet;
use crate::demand::{BoxSpec, DemandMatrix, Pair};
use crate::oracle::{optu_entries, OracleError};
use crate::topology::Topology;

/// Default limit on the number of demand pairs.
pub const VERTEX_GUARD: usize = 6;

const OPTU_TOL: f64 = 1e-7;
const GEOM_TOL: f64 = 1e-9;
const MAX_CUTS: usize = 20_000;

/// Coordinates: an optional box scale `lambda`, then the free pairs. Every
/// coordinate is divided by its upper bound so the search lives in the unit
/// cube.
struct Layout {
    pairs: Vec<Pair>,
    lambda: bool,
    free: Vec<usize>,
    /// `(pair index, value)`: `value * lambda` when `lambda` is used,
    /// otherwise a constant.
    fixed: Vec<(usize, f64)>,
    scale: Vec<f64>,
    lower: Vec<f64>,
}

impl Layout {
    fn dim(&self) -> usize {
        self.scale.len()
    }

    fn demand(&self, z: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = z.iter().zip(&self.scale).map(|(z, s)| z * s).collect();
        let mut d = vec![0.0; self.pairs.len()];
        let off = usize::from(self.lambda);
        for (j, &i) in self.free.iter().enumerate() {
            d[i] = x[off + j].max(0.0);
        }
        for &(i, v) in &self.fixed {
            d[i] = if self.lambda { v * x[0].max(0.0) } else { v };
        }
        d
    }

    /// Rewrites `sum_i coef[i] d_i <= rhs` over pairs as a normalized
    /// half-space in scaled coordinates.
    fn halfspace(&self, coef: &[f64], mut rhs: f64) -> Halfspace {
        let mut a = vec![0.0; self.dim()];
        let off = usize::from(self.lambda);
        for (j, &i) in self.free.iter().enumerate() {
            a[off + j] += coef[i];
        }
        for &(i, v) in &self.fixed {
            if self.lambda {
                a[0] += coef[i] * v;
            } else {
                rhs -= coef[i] * v;
            }
        }
        Halfspace::scaled(a, rhs, &self.scale)
    }
}

#[derive(Debug, Clone)]
struct Halfspace {
    a: Vec<f64>,
    b: f64,
}

impl Halfspace {
    /// `a . x <= b` with `x = z * scale`, normalized to a unit normal in `z`.
    fn scaled(a: Vec<f64>, b: f64, scale: &[f64]) -> Halfspace {
        let a: Vec<f64> = a.iter().zip(scale).map(|(a, s)| a * s).collect();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Halfspace { a, b };
        }
        Halfspace {
            a: a.iter().map(|x| x / norm).collect(),
            b: b / norm,
        }
    }

    fn slack(&self, z: &[f64]) -> f64 {
        self.a.iter().zip(z).map(|(a, z)| a * z).sum::<f64>() - self.b
    }
}

#[derive(Debug, Clone)]
struct Vertex {
    z: Vec<f64>,
    tight: Vec<usize>,
    checked: bool,
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    intersect(small, big).len() == small.len()
}

struct Polytope {
    dim: usize,
    constraints: Vec<Halfspace>,
    vertices: Vec<Vertex>,
}

impl Polytope {
    fn cube(lower: &[f64]) -> Polytope {
        let dim = lower.len();
        let mut constraints = Vec::new();
        for j in 0..dim {
            let mut a = vec![0.0; dim];
            a[j] = -1.0;
            constraints.push(Halfspace { a: a.clone(), b: -lower[j] });
            a[j] = 1.0;
            constraints.push(Halfspace { a, b: 1.0 });
        }
        let vertices = (0..1usize << dim)
            .map(|mask| {
                let mut z = vec![0.0; dim];
                let mut tight = Vec::with_capacity(dim);
                for j in 0..dim {
                    if mask >> j & 1 == 1 {
                        z[j] = 1.0;
                        tight.push(2 * j + 1);
                    } else {
                        z[j] = lower[j];
                        tight.push(2 * j);
                    }
                }
                Vertex { z, tight, checked: false }
            })
            .collect();
        Polytope {
            dim,
            constraints,
            vertices,
        }
    }

    fn tight_set(&self, z: &[f64]) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, h)| h.slack(z).abs() <= GEOM_TOL)
            .map(|(i, _)| i)
            .collect()
    }

    /// Intersects with `h` (double description update).
    fn add(&mut self, h: Halfspace) {
        let idx = self.constraints.len();
        let vals: Vec<f64> = self.vertices.iter().map(|v| h.slack(&v.z)).collect();
        let plus: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > GEOM_TOL).collect();
        let minus: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] < -GEOM_TOL).collect();
        self.constraints.push(h);

        let mut fresh: Vec<Vec<f64>> = Vec::new();
        for &p in &plus {
            for &q in &minus {
                let common = intersect(&self.vertices[p].tight, &self.vertices[q].tight);
                if common.len() + 1 < self.dim {
                    continue;
                }
                let adjacent = self
                    .vertices
                    .iter()
                    .enumerate()
                    .all(|(r, v)| r == p || r == q || !is_subset(&common, &v.tight));
                if !adjacent {
                    continue;
                }
                let t = vals[p] / (vals[p] - vals[q]);
                let (zp, zq) = (&self.vertices[p].z, &self.vertices[q].z);
                fresh.push(zp.iter().zip(zq).map(|(a, b)| a + t * (b - a)).collect());
            }
        }
        for (i, v) in self.vertices.iter_mut().enumerate() {
            if vals[i].abs() <= GEOM_TOL {
                v.tight.push(idx);
            }
        }
        let mut keep: Vec<Vertex> = self
            .vertices
            .drain(..)
            .zip(&vals)
            .filter(|(_, &s)| s <= GEOM_TOL)
            .map(|(v, _)| v)
            .collect();
        for z in fresh {
            let dup = keep
                .iter()
                .any(|v| v.z.iter().zip(&z).all(|(a, b)| (a - b).abs() <= GEOM_TOL));
            if !dup {
                let tight = self.tight_set(&z);
                keep.push(Vertex { z, tight, checked: false });
            }
        }
        self.vertices = keep;
    }
}

/// Vertices of the demand region for the box's active pairs that are not
/// dominated by another vertex, with the zero matrix left out.
///
/// With a scale-free box the region is the cone spanned by the box, cut at
/// `OPTU <= 1`; otherwise it is the box itself, cut the same way.
pub fn routable_vertices(
    topo: &Topology,
    spec: &BoxSpec,
    restriction: Option<&DagSet>,
    guard: usize,
) -> Result<Vec<DemandMatrix>, OracleError> {
    let pairs = spec.active_pairs();
    if pairs.len() > guard {
        return Err(OracleError::TooManyPairs {
            pairs: pairs.len(),
            guard,
        });
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let entries = |d: &[f64]| -> Vec<(Pair, f64)> { pairs.iter().copied().zip(d.iter().copied()).collect() };

    // Largest routable multiple of each single pair.
    let mut reach = Vec::with_capacity(pairs.len());
    for i in 0..pairs.len() {
        let mut unit = vec![0.0; pairs.len()];
        unit[i] = 1.0;
        reach.push(1.0 / optu_entries(topo, restriction, &entries(&unit))?.value);
    }
    let bounds: Vec<(f64, f64)> = pairs.iter().map(|&p| spec.bounds(p).expect("active pair")).collect();
    let Some(layout) = layout(&pairs, &bounds, &reach, spec.scale_free)? else {
        // Nothing varies: the single point must itself be routable.
        let d: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        if optu_entries(topo, restriction, &entries(&d))?.value > 1.0 + OPTU_TOL {
            return Err(OracleError::EmptyRegion);
        }
        return Ok(vec![to_matrix(&pairs, &d)]);
    };

    let mut poly = Polytope::cube(&layout.lower);
    if layout.lambda {
        let off = 1;
        for (j, &i) in layout.free.iter().enumerate() {
            let (lo, hi) = bounds[i];
            if lo > 0.0 {
                let mut a = vec![0.0; layout.dim()];
                a[0] = lo;
                a[off + j] = -1.0;
                poly.add(Halfspace::scaled(a, 0.0, &layout.scale));
            }
            if hi.is_finite() {
                let mut a = vec![0.0; layout.dim()];
                a[0] = -hi;
                a[off + j] = 1.0;
                poly.add(Halfspace::scaled(a, 0.0, &layout.scale));
            }
        }
    }

    let mut cuts = 0;
    'outer: loop {
        for k in 0..poly.vertices.len() {
            if poly.vertices[k].checked {
                continue;
            }
            poly.vertices[k].checked = true;
            let d = layout.demand(&poly.vertices[k].z);
            if d.iter().all(|&x| x == 0.0) {
                continue;
            }
            let opt = optu_entries(topo, restriction, &entries(&d))?;
            if opt.value <= 1.0 + OPTU_TOL {
                continue;
            }
            let y: Vec<f64> = pairs.iter().map(|p| opt.marginals.get(p).copied().unwrap_or(0.0)).collect();
            poly.add(layout.halfspace(&y, 1.0));
            cuts += 1;
            if cuts > MAX_CUTS {
                return Err(OracleError::NoConvergence(cuts));
            }
            continue 'outer;
        }
        break;
    }
    debug!("vertex enumeration: {cuts} cuts, {} vertices", poly.vertices.len());
    if poly.vertices.is_empty() {
        return Err(OracleError::EmptyRegion);
    }

    let mut points: Vec<Vec<f64>> = Vec::new();
    for v in &poly.vertices {
        let d = layout.demand(&v.z);
        let tol: Vec<f64> = reach.iter().map(|r| r * 1e-7).collect();
        if d.iter().zip(&tol).all(|(x, t)| *x <= *t) {
            continue;
        }
        if !points
            .iter()
            .any(|p| p.iter().zip(&d).zip(&tol).all(|((a, b), t)| (a - b).abs() <= *t))
        {
            points.push(d);
        }
    }
    let dominated = |i: usize| {
        points.iter().enumerate().any(|(j, w)| {
            j != i
                && w.iter().zip(&points[i]).zip(&reach).all(|((a, b), r)| *a >= *b - r * 1e-7)
                && w.iter().zip(&points[i]).zip(&reach).any(|((a, b), r)| *a > *b + r * 1e-7)
        })
    };
    let mut out: Vec<Vec<f64>> = (0..points.len()).filter(|&i| !dominated(i)).map(|i| points[i].clone()).collect();
    out.sort_by(|a, b| b.iter().zip(a).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out.iter().map(|d| to_matrix(&pairs, d)).collect())
}

fn to_matrix(pairs: &[Pair], d: &[f64]) -> DemandMatrix {
    let mut m = DemandMatrix::new();
    let scale = d.iter().fold(0.0f64, |a, &b| a.max(b));
    for (&(s, t), &x) in pairs.iter().zip(d) {
        if x > scale * 1e-12 {
            m.set(s, t, x);
        }
    }
    m
}

fn layout(pairs: &[Pair], bounds: &[(f64, f64)], reach: &[f64], scale_free: bool) -> Result<Option<Layout>, OracleError> {
    let mut free = Vec::new();
    let mut fixed = Vec::new();
    let mut scale = Vec::new();
    let mut lower = Vec::new();
    let lambda;
    if scale_free {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if lo == hi {
                fixed.push((i, lo));
            } else {
                free.push(i);
            }
        }
        lambda = bounds.iter().any(|&(lo, _)| lo > 0.0);
        if lambda {
            // Any feasible lambda satisfies lambda * dmin <= reach.
            let cap = bounds
                .iter()
                .zip(reach)
                .filter(|((lo, _), _)| *lo > 0.0)
                .map(|((lo, _), r)| r / lo)
                .fold(f64::INFINITY, f64::min);
            scale.push(cap);
            lower.push(0.0);
        }
        for &i in &free {
            scale.push(reach[i]);
            lower.push(0.0);
        }
    } else {
        lambda = false;
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            let top = hi.min(reach[i]);
            if lo > top * (1.0 + OPTU_TOL) {
                return Err(OracleError::EmptyRegion);
            }
            if top - lo <= top * 1e-9 {
                fixed.push((i, lo));
            } else {
                free.push(i);
                scale.push(top);
                lower.push(lo / top);
            }
        }
        if free.is_empty() {
            return Ok(None);
        }
    }
    Ok(Some(Layout {
        pairs: pairs.to_vec(),
        lambda,
        free,
        fixed,
        scale,
        lower,
    }))
}
