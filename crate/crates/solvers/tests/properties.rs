use oblite_solvers::convex::{solve_convex, Constraint, ConvexOptions, ConvexProblem, ExpTerm, VarKind};
use oblite_solvers::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Row = (Vec<(usize, f64)>, Relation, f64);

struct RandomLp {
    sense: Sense,
    vars: Vec<(f64, f64, f64)>,
    rows: Vec<Row>,
}

/// Random feasible, bounded LP: `x0` is feasible by construction and every
/// variable has a finite upper bound.
fn random_spec(seed: u64) -> RandomLp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..9);
    let m = rng.gen_range(1..9);
    let sense = if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
    let mut vars = Vec::new();
    for &x in &x0 {
        let lo = if rng.gen_bool(0.2) { -rng.gen_range(0.0..2.0) } else { 0.0 };
        let hi = x + rng.gen_range(0.5..4.0);
        vars.push((rng.gen_range(-2.0..2.0), lo, hi));
    }
    let mut rows = Vec::new();
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-2.0..2.0)));
            }
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        rows.push(match rng.gen_range(0..3) {
            0 => (coeffs, Relation::Le, act + rng.gen_range(0.0..1.0)),
            1 => (coeffs, Relation::Ge, act - rng.gen_range(0.0..1.0)),
            _ => (coeffs, Relation::Eq, act),
        });
    }
    RandomLp { sense, vars, rows }
}

fn build(spec: &RandomLp, order: &[usize], scale: &[f64]) -> LpProblem {
    let mut p = LpProblem::new(spec.sense);
    let ids: Vec<_> = spec.vars.iter().map(|&(c, lo, hi)| p.add_var(c, lo, hi)).collect();
    for (&i, &k) in order.iter().zip(scale) {
        let (coeffs, rel, rhs) = &spec.rows[i];
        let row: Vec<_> = coeffs.iter().map(|&(j, a)| (ids[j], a * k)).collect();
        p.add_row(&row, *rel, rhs * k);
    }
    p
}

fn random_lp(seed: u64) -> LpProblem {
    let spec = random_spec(seed);
    let order: Vec<usize> = (0..spec.rows.len()).collect();
    build(&spec, &order, &vec![1.0; order.len()])
}

#[test]
fn strong_duality_on_random_lps() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let p = random_lp(seed);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal, "seed {seed}");
        let r = s.residuals(&p);
        let scale = 1.0 + s.objective.abs();
        assert!(r.primal <= 1e-7 * scale, "seed {seed}: {r:?}");
        assert!(r.dual <= 1e-7 * scale, "seed {seed}: {r:?}");
        assert!(r.complementary <= 1e-6, "seed {seed}: {r:?}");
        assert!(r.gap <= 1e-6 * scale, "seed {seed}: {r:?}");
        worst = worst.max(r.gap / scale);
    }
    println!("worst relative duality gap over 100 LPs: {worst:.3e}");
}

#[test]
fn objective_invariant_under_row_permutation_and_scaling() {
    for seed in 0..40 {
        let spec = random_spec(seed);
        let m = spec.rows.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead_beef);
        let mut order: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let scale: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..10.0)).collect();
        let a = solve_lp(&random_lp(seed)).unwrap();
        let b = solve_lp(&build(&spec, &order, &scale)).unwrap();
        assert!(
            (a.objective - b.objective).abs() <= 1e-7 * (1.0 + a.objective.abs()),
            "seed {seed}: {} vs {}",
            a.objective,
            b.objective
        );
    }
}

#[test]
fn solve_is_deterministic() {
    let p = random_lp(7);
    let a = solve_lp(&p).unwrap();
    let b = solve_lp(&p).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.duals, b.duals);
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
    if rng.gen_bool(0.5) {
        Constraint::LogSumExp {
            terms,
            rhs,
            rhs_constant: rng.gen_range(-1.0..1.0),
        }
    } else {
        Constraint::Exp {
            terms,
            rhs,
            rhs_constant: rng.gen_range(-1.0..1.0),
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(1..7);
        let c = random_lse(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut analytic = vec![0.0; n];
        for (j, g) in c.gradient(&x) {
            analytic[j] += g;
        }
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (c.value(&xp) - c.value(&xm)) / (2.0 * h);
            let rel = (fd - analytic[j]).abs() / analytic[j].abs().max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-5, "component {j}: fd {fd} vs analytic {}", analytic[j]);
        }
    }
    println!("worst relative gradient error over 50 problems: {worst:.3e}");
}

proptest! {
    #[test]
    fn gradient_check_property(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..6);
        let c = random_lse(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut analytic = vec![0.0; n];
        for (j, g) in c.gradient(&x) {
            analytic[j] += g;
        }
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += 1e-6;
            xm[j] -= 1e-6;
            let fd = (c.value(&xp) - c.value(&xm)) / 2e-6;
            prop_assert!((fd - analytic[j]).abs() / analytic[j].abs().max(1.0) <= 1e-5);
        }
    }
}

#[test]
fn pure_linear_problem_matches_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = rng.gen_range(2..5);
        let m = rng.gen_range(1..5);
        let mut lp = LpProblem::new(Sense::Minimize);
        let mut cp = ConvexProblem::new();
        let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lv: Vec<_> = costs.iter().map(|&c| lp.add_var(c, 0.0, 2.0)).collect();
        let cv: Vec<_> = (0..n).map(|_| cp.add_var(VarKind::Linear)).collect();
        cp.set_objective(cv.iter().zip(&costs).map(|(&v, &c)| (v, c)).collect());
        for &v in &cv {
            cp.add_bounds(v, 0.0, 2.0);
        }
        for _ in 0..m {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b = rng.gen_range(0.5..2.0);
            lp.add_row(&lv.iter().zip(&a).map(|(&v, &x)| (v, x)).collect::<Vec<_>>(), Relation::Le, b);
            cp.add_linear(cv.iter().zip(&a).map(|(&v, &x)| (v, x)).collect(), b);
        }
        let ls = solve_lp(&lp).unwrap();
        let cs = solve_convex(&cp, &vec![0.01; n], &ConvexOptions::default()).unwrap();
        assert!((ls.objective - cs.objective).abs() <= 1e-6, "{} vs {}", ls.objective, cs.objective);
    }
}
