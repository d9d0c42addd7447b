//! Log-barrier interior point method for problems of the form
//!
//! ```text
//! minimize    c . x
//! subject to  a_i . x <= b_i                             (linear)
//!             log sum_k exp(A_k . x + b_k) <= l . x + c   (log-sum-exp)
//!             sum_k exp(A_k . x + b_k) <= l . x + c       (exponential)
//! ```
//!
//! Both exponential families share one evaluation path: a sum of
//! exponentials optionally passed through `log`. Hessians are assembled
//! densely and factored with Cholesky; the method targets problems with a few
//! hundred variables.

use log::debug;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// `exp(coeffs . x + constant)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl ExpTerm {
    pub fn new(coeffs: Vec<(usize, f64)>, constant: f64) -> Self {
        ExpTerm { coeffs, constant }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Logarithm of a positive geometric-program variable.
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `coeffs . x <= rhs`
    Linear { coeffs: Vec<(usize, f64)>, rhs: f64 },
    /// `log sum exp(terms) <= rhs . x + rhs_constant`
    LogSumExp {
        terms: Vec<ExpTerm>,
        rhs: Vec<(usize, f64)>,
        rhs_constant: f64,
    },
    /// `sum exp(terms) <= rhs . x + rhs_constant`
    Exp {
        terms: Vec<ExpTerm>,
        rhs: Vec<(usize, f64)>,
        rhs_constant: f64,
    },
}

impl Constraint {
    /// Value in `g(x) <= 0` form.
    pub fn value(&self, x: &[f64]) -> f64 {
        Smooth::from_constraint(self).value(x)
    }

    /// Analytic gradient of [`Constraint::value`], as sparse `(var, d/dx)` pairs.
    pub fn gradient(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let g = Smooth::from_constraint(self);
        let loc = g.local(x, false);
        g.support.iter().copied().zip(loc.grad).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConvexProblem {
    kinds: Vec<VarKind>,
    objective: Vec<(usize, f64)>,
    constraints: Vec<Constraint>,
}

impl ConvexProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind) -> usize {
        self.kinds.push(kind);
        self.kinds.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, var: usize) -> VarKind {
        self.kinds[var]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, f64)>) {
        self.objective = coeffs;
    }

    pub fn add(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn add_linear(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.add(Constraint::Linear { coeffs, rhs });
    }

    /// `lower <= x[var] <= upper`, either side may be infinite.
    pub fn add_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        if lower.is_finite() {
            self.add_linear(vec![(var, -1.0)], -lower);
        }
        if upper.is_finite() {
            self.add_linear(vec![(var, 1.0)], upper);
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Value of each constraint in `g(x) <= 0` form.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.compile().iter().map(|g| g.value(x)).collect()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraint_values(x).into_iter().fold(0.0, f64::max)
    }

    fn compile(&self) -> Vec<Smooth> {
        self.constraints.iter().map(Smooth::from_constraint).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexStatus {
    Optimal,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub status: ConvexStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    /// Scaled KKT stationarity residual at the returned point.
    pub kkt_residual: f64,
    /// Objective at the end of each barrier stage.
    pub stage_objectives: Vec<f64>,
    pub newton_steps: usize,
}

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error("start point has {0} entries, problem has {1} variables")]
    DimensionMismatch(usize, usize),
    #[error("constraint {0} references an undeclared variable")]
    UnknownVariable(usize),
    #[error("constraint {0} is not finite at the start point")]
    NonFiniteStart(usize),
    #[error("no strictly feasible point found (smallest max violation {0:.3e})")]
    InfeasibleStart(f64),
}

#[derive(Debug, Clone)]
pub struct ConvexOptions {
    pub t_start: f64,
    pub t_end: f64,
    pub t_factor: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for ConvexOptions {
    fn default() -> Self {
        ConvexOptions {
            t_start: 1.0,
            t_end: 1e8,
            t_factor: 10.0,
            armijo: 0.3,
            backtrack: 0.5,
            newton_tol: 1e-9,
            max_newton: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Affine,
    Log,
    Identity,
}

/// `g(x) = T(sum_k exp(terms_k . x + b_k)) + lin . x + constant`, with all
/// coefficients indexed into a local support.
#[derive(Debug, Clone)]
struct Smooth {
    transform: Transform,
    support: Vec<usize>,
    terms: Vec<(Vec<(usize, f64)>, f64)>,
    lin: Vec<f64>,
    constant: f64,
}

struct Local {
    value: f64,
    grad: Vec<f64>,
    /// Row-major `support x support`, absent for affine constraints.
    hess: Option<Vec<f64>>,
}

impl Smooth {
    fn from_constraint(c: &Constraint) -> Smooth {
        let (transform, terms, lin, constant): (Transform, &[ExpTerm], Vec<(usize, f64)>, f64) = match c {
            Constraint::Linear { coeffs, rhs } => (Transform::Affine, &[], coeffs.clone(), -rhs),
            Constraint::LogSumExp {
                terms,
                rhs,
                rhs_constant,
            } => (
                Transform::Log,
                terms,
                rhs.iter().map(|&(j, a)| (j, -a)).collect(),
                -rhs_constant,
            ),
            Constraint::Exp {
                terms,
                rhs,
                rhs_constant,
            } => (
                Transform::Identity,
                terms,
                rhs.iter().map(|&(j, a)| (j, -a)).collect(),
                -rhs_constant,
            ),
        };
        let mut support: Vec<usize> = lin.iter().map(|&(j, _)| j).collect();
        for t in terms {
            support.extend(t.coeffs.iter().map(|&(j, _)| j));
        }
        support.sort_unstable();
        support.dedup();
        let local = |j: usize| support.binary_search(&j).expect("index in support");
        let mut dense_lin = vec![0.0; support.len()];
        for &(j, a) in &lin {
            dense_lin[local(j)] += a;
        }
        let terms = terms
            .iter()
            .map(|t| (t.coeffs.iter().map(|&(j, a)| (local(j), a)).collect(), t.constant))
            .collect();
        Smooth {
            transform,
            support,
            terms,
            lin: dense_lin,
            constant,
        }
    }

    fn exponents(&self, x: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|(coeffs, b)| b + coeffs.iter().map(|&(k, a)| a * x[self.support[k]]).sum::<f64>())
            .collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self
            .support
            .iter()
            .zip(&self.lin)
            .map(|(&j, a)| a * x[j])
            .sum::<f64>()
            + self.constant;
        match self.transform {
            Transform::Affine => lin,
            Transform::Log => {
                let z = self.exponents(x);
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                m + z.iter().map(|zk| (zk - m).exp()).sum::<f64>().ln() + lin
            }
            Transform::Identity => self.exponents(x).iter().map(|z| z.exp()).sum::<f64>() + lin,
        }
    }

    fn local(&self, x: &[f64], want_hess: bool) -> Local {
        let n = self.support.len();
        let value = self.value(x);
        let mut grad = self.lin.clone();
        if self.transform == Transform::Affine {
            return Local {
                value,
                grad,
                hess: None,
            };
        }
        let z = self.exponents(x);
        let weights: Vec<f64> = match self.transform {
            Transform::Log => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|zk| (zk - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|ek| ek / s).collect()
            }
            _ => z.iter().map(|zk| zk.exp()).collect(),
        };
        let mut mean = vec![0.0; n];
        for ((coeffs, _), w) in self.terms.iter().zip(&weights) {
            for &(k, a) in coeffs {
                mean[k] += w * a;
            }
        }
        for k in 0..n {
            grad[k] += mean[k];
        }
        let hess = want_hess.then(|| {
            let mut h = vec![0.0; n * n];
            for ((coeffs, _), w) in self.terms.iter().zip(&weights) {
                for &(k, a) in coeffs {
                    for &(l, b) in coeffs {
                        h[k * n + l] += w * a * b;
                    }
                }
            }
            if self.transform == Transform::Log {
                for k in 0..n {
                    for l in 0..n {
                        h[k * n + l] -= mean[k] * mean[l];
                    }
                }
            }
            h
        });
        Local { value, grad, hess }
    }
}

struct Barrier<'a> {
    n: usize,
    cost: Vec<f64>,
    gs: &'a [Smooth],
}

impl Barrier<'_> {
    /// `t c.x - sum log(-g_i(x))`, or `None` outside the domain.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut v: f64 = t * self.cost.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>();
        for g in self.gs {
            let gi = g.value(x);
            if !(gi < 0.0) || !gi.is_finite() {
                return None;
            }
            v -= (-gi).ln();
        }
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut grad = DVector::from_iterator(n, self.cost.iter().map(|c| t * c));
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for g in self.gs {
            let loc = g.local(x, true);
            let inv = 1.0 / (-loc.value);
            let m = g.support.len();
            for k in 0..m {
                grad[g.support[k]] += inv * loc.grad[k];
            }
            let inv2 = inv * inv;
            for k in 0..m {
                let gk = loc.grad[k];
                for l in 0..m {
                    let mut h = inv2 * gk * loc.grad[l];
                    if let Some(hs) = &loc.hess {
                        h += inv * hs[k * m + l];
                    }
                    hess[(g.support[k], g.support[l])] += h;
                }
            }
        }
        (grad, hess)
    }

    fn kkt_residual(&self, x: &[f64], t: f64) -> f64 {
        let mut r = self.cost.clone();
        for g in self.gs {
            let loc = g.local(x, false);
            let lambda = 1.0 / (t * -loc.value);
            for (k, &j) in g.support.iter().enumerate() {
                r[j] += lambda * loc.grad[k];
            }
        }
        let cnorm = self.cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 + cnorm)
    }
}

fn newton_direction(grad: &DVector<f64>, hess: DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += reg;
            }
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-12 * scale } else { reg * 100.0 };
    }
    None
}

enum Centering {
    Converged,
    Stalled,
}

/// Damped Newton on the barrier function at fixed `t`. `stop` allows early
/// exit (used by phase one).
fn center(
    bar: &Barrier<'_>,
    x: &mut Vec<f64>,
    t: f64,
    opts: &ConvexOptions,
    steps: &mut usize,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Centering {
    for _ in 0..opts.max_newton {
        if stop(x) {
            return Centering::Converged;
        }
        let (grad, hess) = bar.derivatives(x, t);
        let Some(dir) = newton_direction(&grad, hess) else {
            return Centering::Stalled;
        };
        let slope = grad.dot(&dir);
        if -slope / 2.0 <= opts.newton_tol {
            return Centering::Converged;
        }
        let f0 = bar.value(x, t).expect("iterate stays interior");
        let mut s = 1.0;
        let mut trial = vec![0.0; x.len()];
        let accepted = loop {
            for i in 0..x.len() {
                trial[i] = x[i] + s * dir[i];
            }
            if let Some(f) = bar.value(&trial, t) {
                if f <= f0 + opts.armijo * s * slope {
                    break true;
                }
            }
            s *= opts.backtrack;
            if s < 1e-14 {
                break false;
            }
        };
        *steps += 1;
        if !accepted {
            return Centering::Stalled;
        }
        std::mem::swap(x, &mut trial);
    }
    Centering::Stalled
}

/// Solves `problem` from `start`. The start need not be strictly feasible;
/// if it is not, a phase-one barrier problem searches for an interior point.
pub fn solve_convex(
    problem: &ConvexProblem,
    start: &[f64],
    opts: &ConvexOptions,
) -> Result<ConvexSolution, ConvexError> {
    let n = problem.num_vars();
    if start.len() != n {
        return Err(ConvexError::DimensionMismatch(start.len(), n));
    }
    for (i, c) in problem.constraints.iter().enumerate() {
        let refs: Box<dyn Iterator<Item = usize>> = match c {
            Constraint::Linear { coeffs, .. } => Box::new(coeffs.iter().map(|p| p.0)),
            Constraint::LogSumExp { terms, rhs, .. } | Constraint::Exp { terms, rhs, .. } => Box::new(
                rhs.iter()
                    .map(|p| p.0)
                    .chain(terms.iter().flat_map(|t| t.coeffs.iter().map(|p| p.0))),
            ),
        };
        if refs.into_iter().any(|j| j >= n) {
            return Err(ConvexError::UnknownVariable(i));
        }
    }
    let gs = problem.compile();
    for (i, g) in gs.iter().enumerate() {
        if g.value(start).is_nan() || g.value(start) == f64::INFINITY {
            return Err(ConvexError::NonFiniteStart(i));
        }
    }
    let mut cost = vec![0.0; n];
    for &(j, c) in &problem.objective {
        cost[j] += c;
    }

    let mut x = start.to_vec();
    let mut steps = 0usize;
    let worst = |x: &[f64]| gs.iter().map(|g| g.value(x)).fold(f64::NEG_INFINITY, f64::max);
    if !(worst(&x) < 0.0) {
        x = phase_one(&gs, x, opts, &mut steps)?;
    }

    let bar = Barrier { n, cost, gs: &gs };
    let mut t = opts.t_start;
    let mut stage_objectives = Vec::new();
    let mut stalled = false;
    loop {
        if let Centering::Stalled = center(&bar, &mut x, t, opts, &mut steps, &|_| false) {
            debug!("barrier centering stalled at t = {t:e}");
            stalled = true;
        }
        stage_objectives.push(problem.objective_value(&x));
        if t >= opts.t_end {
            break;
        }
        t = (t * opts.t_factor).min(opts.t_end);
    }
    let kkt_residual = bar.kkt_residual(&x, t);
    let max_violation = worst(&x).max(0.0);
    let status = if max_violation <= 1e-6 && (kkt_residual <= 1e-4 || !stalled) {
        ConvexStatus::Optimal
    } else {
        ConvexStatus::NumericalFailure
    };
    Ok(ConvexSolution {
        status,
        objective: problem.objective_value(&x),
        x,
        max_violation,
        kkt_residual,
        stage_objectives,
        newton_steps: steps,
    })
}

/// Minimizes `s` subject to `g_i(x) <= s`, `s >= -1`, stopping as soon as
/// `s < 0`.
fn phase_one(
    gs: &[Smooth],
    x0: Vec<f64>,
    opts: &ConvexOptions,
    steps: &mut usize,
) -> Result<Vec<f64>, ConvexError> {
    let n = x0.len();
    let s_var = n;
    let mut lifted: Vec<Smooth> = gs
        .iter()
        .map(|g| {
            let mut h = g.clone();
            h.support.push(s_var);
            h.lin.push(-1.0);
            h
        })
        .collect();
    lifted.push(Smooth {
        transform: Transform::Affine,
        support: vec![s_var],
        lin: vec![-1.0],
        terms: Vec::new(),
        constant: -1.0,
    });
    let worst0 = gs.iter().map(|g| g.value(&x0)).fold(f64::NEG_INFINITY, f64::max);
    let mut x = x0;
    x.push(worst0.max(0.0) + 1.0);
    let mut cost = vec![0.0; n + 1];
    cost[s_var] = 1.0;
    let bar = Barrier {
        n: n + 1,
        cost,
        gs: &lifted,
    };
    let done = |x: &[f64]| x[s_var] < 0.0;
    let mut t = opts.t_start;
    loop {
        center(&bar, &mut x, t, opts, steps, &done);
        if done(&x) {
            x.pop();
            return Ok(x);
        }
        if t >= opts.t_end {
            break;
        }
        t *= opts.t_factor;
    }
    Err(ConvexError::InfeasibleStart(x[s_var]))
}
