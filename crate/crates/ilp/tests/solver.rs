use std::time::Duration;

use macgen_ilp::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lin(terms: &[(VarId, f64)]) -> LinExpr {
    terms.iter().copied().collect()
}

#[test]
fn small_integer_minimum() {
    let mut m = Model::new("xy");
    let x = m.add_var("x", VarKind::Integer, 0.0, 10.0).unwrap();
    let y = m.add_var("y", VarKind::Integer, 0.0, 10.0).unwrap();
    m.add_constraint("cover", lin(&[(x, 1.0), (y, 1.0)]), Sense::Ge, 3.0).unwrap();
    m.set_objective(ObjSense::Minimize, lin(&[(x, 1.0), (y, 1.0)])).unwrap();
    let s = solve(&m, &SolveOptions::default()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_eq!(s.objective, 3.0);
}

#[test]
fn fractional_relaxation_rounds_up() {
    // LP optimum is 2.5; integer optimum is 3.
    let mut m = Model::new("half");
    let x = m.add_var("x", VarKind::Integer, 0.0, 10.0).unwrap();
    m.add_constraint("c", lin(&[(x, 2.0)]), Sense::Ge, 5.0).unwrap();
    m.set_objective(ObjSense::Minimize, lin(&[(x, 1.0)])).unwrap();
    let s = solve(&m, &SolveOptions::default()).unwrap();
    assert_eq!(s.value(x), 3.0);
}

#[test]
fn infeasible_bounds_and_rows() {
    let mut m = Model::new("inf");
    let x = m.add_var("x", VarKind::Integer, 0.0, 0.0).unwrap();
    m.add_constraint("c", lin(&[(x, 1.0)]), Sense::Ge, 1.0).unwrap();
    assert_eq!(solve(&m, &SolveOptions::default()).unwrap().status, Status::Infeasible);

    let mut m = Model::new("parity");
    let x = m.add_var("x", VarKind::Integer, 0.0, 10.0).unwrap();
    m.add_constraint("c", lin(&[(x, 2.0)]), Sense::Eq, 3.0).unwrap();
    assert_eq!(solve(&m, &SolveOptions::default()).unwrap().status, Status::Infeasible);
}

#[test]
fn empty_objective_is_zero() {
    let mut m = Model::new("feas");
    let b = m.add_binary("b").unwrap();
    m.add_constraint("c", lin(&[(b, 1.0)]), Sense::Eq, 1.0).unwrap();
    let s = solve(&m, &SolveOptions::default()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_eq!(s.objective, 0.0);
    assert_eq!(s.value(b), 1.0);
}

#[test]
fn maximisation() {
    let mut m = Model::new("knap");
    let w = [3.0, 4.0, 5.0];
    let v = [4.0, 5.0, 6.0];
    let xs: Vec<VarId> = (0..3).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
    m.add_constraint("cap", xs.iter().zip(w).map(|(&x, w)| (x, w)).collect(), Sense::Le, 8.0).unwrap();
    m.set_objective(ObjSense::Maximize, xs.iter().zip(v).map(|(&x, v)| (x, v)).collect()).unwrap();
    let s = solve(&m, &SolveOptions::default()).unwrap();
    // {0,2}: weight 8, value 10.
    assert_eq!(s.objective, 10.0);
}

#[test]
fn assignment_3x3_matches_permutations() {
    let cost = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
    let mut best = f64::INFINITY;
    for p in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        best = best.min((0..3).map(|i| cost[i][p[i]]).sum());
    }
    let mut m = Model::new("assign");
    let mut x = vec![vec![]; 3];
    for i in 0..3 {
        for j in 0..3 {
            x[i].push(m.add_binary(format!("x_{i}_{j}")).unwrap());
        }
    }
    for i in 0..3 {
        m.add_constraint(format!("row{i}"), (0..3).map(|j| (x[i][j], 1.0)).collect(), Sense::Eq, 1.0).unwrap();
        m.add_constraint(format!("col{i}"), (0..3).map(|j| (x[j][i], 1.0)).collect(), Sense::Eq, 1.0).unwrap();
    }
    let obj = (0..9).map(|k| (x[k / 3][k % 3], cost[k / 3][k % 3])).collect();
    m.set_objective(ObjSense::Minimize, obj).unwrap();
    let s = solve(&m, &SolveOptions::default()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_eq!(s.objective, best);
}

#[test]
fn mixed_continuous_part() {
    let mut m = Model::new("mix");
    let y = m.add_binary("y").unwrap();
    let t = m.add_var("t", VarKind::Continuous, 0.0, f64::INFINITY).unwrap();
    // t >= 2.5 - 2y, cost t + y
    m.add_constraint("c", lin(&[(t, 1.0), (y, 2.0)]), Sense::Ge, 2.5).unwrap();
    m.set_objective(ObjSense::Minimize, lin(&[(t, 1.0), (y, 1.0)])).unwrap();
    let s = solve(&m, &SolveOptions::default()).unwrap();
    assert!((s.objective - 1.5).abs() < 1e-9);
    assert_eq!(s.value(y), 1.0);
}

#[test]
fn initial_assignment_survives_node_limit() {
    let mut m = Model::new("seed");
    let xs: Vec<VarId> = (0..6).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
    m.add_constraint("c", xs.iter().map(|&x| (x, 2.0)).collect(), Sense::Ge, 5.0).unwrap();
    m.set_objective(ObjSense::Minimize, xs.iter().map(|&x| (x, 1.0)).collect()).unwrap();
    let init = vec![1.0; 6];
    let s = solve(&m, &SolveOptions::default().with_node_limit(0).with_initial(init)).unwrap();
    assert_eq!(s.status, Status::Feasible);
    assert_eq!(s.objective, 6.0);
    assert!(s.stats.hit_limit);
    let s = solve(&m, &SolveOptions::default().with_time_limit(Duration::from_secs(10))).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_eq!(s.objective, 3.0);
}

#[test]
fn limit_without_incumbent_is_timeout() {
    let mut m = Model::new("t");
    let x = m.add_var("x", VarKind::Integer, 0.0, 10.0).unwrap();
    m.add_constraint("c", lin(&[(x, 2.0)]), Sense::Ge, 5.0).unwrap();
    let s = solve(&m, &SolveOptions::default().with_node_limit(0)).unwrap();
    assert_eq!(s.status, Status::Timeout);
    assert!(s.values.is_empty());
}

/// Random pure-binary model with a known brute-force optimum.
fn random_model(rng: &mut ChaCha8Rng) -> Model {
    let n = rng.random_range(1..=12);
    let rows = rng.random_range(1..=6);
    let mut m = Model::new("rand");
    let xs: Vec<VarId> = (0..n).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
    for r in 0..rows {
        let mut e = LinExpr::new();
        for &x in &xs {
            if rng.random_bool(0.6) {
                e.add(x, rng.random_range(-5..=5) as f64);
            }
        }
        let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.random_range(0..3)];
        let rhs = rng.random_range(-4..=6) as f64;
        m.add_constraint(format!("r{r}"), e, sense, rhs).unwrap();
    }
    let obj = xs.iter().map(|&x| (x, rng.random_range(-6..=6) as f64 + rng.random_range(0..4) as f64 * 0.25)).collect();
    m.set_objective(ObjSense::Minimize, obj).unwrap();
    m
}

fn brute_force(m: &Model) -> Option<f64> {
    let n = m.num_vars();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
        if m.check(&x, 1e-9).is_ok() {
            let v = m.objective_value(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

#[test]
fn branch_and_bound_matches_enumeration() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng);
        let expect = brute_force(&m);
        let s = solve(&m, &SolveOptions::default()).unwrap();
        match expect {
            None => assert_eq!(s.status, Status::Infeasible, "seed {seed}"),
            Some(v) => {
                assert_eq!(s.status, Status::Optimal, "seed {seed}");
                assert!((s.objective - v).abs() < 1e-6, "seed {seed}: {} vs {v}", s.objective);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_text_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng);
        let back = parse_lp(&write_lp(&m)).unwrap();
        prop_assert_eq!(back.num_vars(), m.num_vars());
        prop_assert_eq!(back.num_constraints(), m.num_constraints());
        prop_assert_eq!(write_lp(&back), write_lp(&m));
        prop_assert_eq!(brute_force(&back), brute_force(&m));
    }
}

#[cfg(unix)]
mod external {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn script(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("fake_solver.sh");
        std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    fn model() -> (Model, VarId, VarId) {
        let mut m = Model::new("ext");
        let x = m.add_var("x", VarKind::Integer, 0.0, 10.0).unwrap();
        let y = m.add_var("y", VarKind::Integer, 0.0, 10.0).unwrap();
        m.add_constraint("cover", lin(&[(x, 1.0), (y, 1.0)]), Sense::Ge, 3.0).unwrap();
        m.set_objective(ObjSense::Minimize, lin(&[(x, 1.0), (y, 1.0)])).unwrap();
        (m, x, y)
    }

    #[test]
    fn reads_gurobi_style_solution() {
        let dir = tempfile::tempdir().unwrap();
        // Checks the model file exists and contains our row before answering.
        let exe = script(dir.path(), "grep -q 'cover:' \"$1\" || exit 3\nprintf '# Objective value = 3\\nx 1\\ny 2\\n' > \"$2\"");
        let (m, x, y) = model();
        let opts = SolveOptions { backend: Backend::External(ExternalSolver::new(exe)), ..Default::default() };
        let s = solve(&m, &opts).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_eq!((s.value(x), s.value(y)), (1.0, 2.0));
    }

    #[test]
    fn rejects_assignment_that_breaks_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let exe = script(dir.path(), "printf 'x 1\\ny 1\\n' > \"$2\"");
        let (m, _, _) = model();
        let opts = SolveOptions { backend: Backend::External(ExternalSolver::new(exe)), ..Default::default() };
        assert!(matches!(solve(&m, &opts), Err(IlpError::Inconsistent(_))));
    }

    #[test]
    fn infeasible_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        let exe = script(dir.path(), "printf 'Infeasible - objective value 0\\n' > \"$2\"");
        let (m, _, _) = model();
        let opts = SolveOptions { backend: Backend::External(ExternalSolver::new(&exe)), ..Default::default() };
        assert_eq!(solve(&m, &opts).unwrap().status, Status::Infeasible);

        let exe = script(dir.path(), "exit 7");
        let opts = SolveOptions { backend: Backend::External(ExternalSolver::new(&exe)), ..Default::default() };
        assert!(matches!(solve(&m, &opts), Err(IlpError::SolverFailed(_))));

        let opts = SolveOptions {
            backend: Backend::External(ExternalSolver::new(dir.path().join("does-not-exist"))),
            ..Default::default()
        };
        assert!(matches!(solve(&m, &opts), Err(IlpError::SolverMissing { .. })));
    }
}
