use std::time::Instant;

use macgen::ct_assign::{assign, greedy_assignment, AssignOptions, StageAssignment};
use macgen::ct_plan::{plan_compressors, plan_heights};
use macgen::ct_wire::*;
use macgen::ilp::CHECK_TOL;
use macgen::ppg::generate_and_array;
use macgen::tech::DelayTable;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree(width: usize) -> StageAssignment {
    let plans = plan_compressors(&generate_and_array(width).unwrap());
    assign(&plans, &AssignOptions::default()).unwrap().0
}

/// Arrival times computed independently: each bit is tracked as a tagged
/// value through explicit per-stage port lists.
fn reference_delay(a: &StageAssignment, w: &WiringPlan, d: &DelayTable) -> f64 {
    let mut cols: Vec<Vec<f64>> = a.pp[0].iter().map(|&n| vec![0.0; n]).collect();
    for i in 0..a.stages {
        let mut next: Vec<Vec<f64>> = vec![Vec::new(); a.columns];
        let mut carry: Vec<Vec<f64>> = vec![Vec::new(); a.columns];
        for j in 0..a.columns {
            let (f, h) = (a.f[i][j], a.h[i][j]);
            let mut at = vec![f64::NAN; cols[j].len()];
            for (u, &t) in cols[j].iter().enumerate() {
                at[w.perms[i][j][u]] = t;
            }
            for k in 0..f {
                let (x, y, z) = (at[3 * k], at[3 * k + 1], at[3 * k + 2]);
                next[j].push([x + d.t_as, y + d.t_bs, z + d.t_cs].into_iter().fold(f64::MIN, f64::max));
                carry[j].push([x + d.t_ac, y + d.t_bc, z + d.t_cc].into_iter().fold(f64::MIN, f64::max));
            }
            for k in 0..h {
                let (x, y) = (at[3 * f + 2 * k], at[3 * f + 2 * k + 1]);
                next[j].push(x.max(y) + d.t_s);
                carry[j].push(x.max(y) + d.t_c);
            }
            next[j].extend_from_slice(&at[3 * f + 2 * h..]);
        }
        for j in 1..a.columns {
            let c = carry[j - 1].clone();
            next[j].extend(c);
        }
        cols = next;
    }
    cols.into_iter().flatten().fold(0.0, f64::max)
}

#[test]
fn evaluator_matches_reference_on_random_wirings() {
    let d = DelayTable::default();
    for w in [4usize, 6, 8] {
        let a = tree(w);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let wp = random_wiring(&a, &mut rng);
            wp.validate(&a).unwrap();
            let got = evaluate_wiring(&a, &wp, &d, &zero_arrivals(&a)).max;
            assert_eq!(got, reference_delay(&a, &wp, &d));
        }
    }
}

#[test]
fn encoded_wiring_satisfies_model() {
    let d = DelayTable::default();
    let a = tree(6);
    let mut arr = zero_arrivals(&a);
    for (k, t) in arr.iter_mut().flatten().enumerate() {
        *t = (k % 3) as f64 * 0.75;
    }
    let wm = build_wiring_model(&a, &d, &arr).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let wp = random_wiring(&a, &mut rng);
        let x = wm.encode(&a, &wp, &d, &arr);
        wm.model.check(&x, CHECK_TOL).unwrap();
        let obj = wm.model.objective_value(&x);
        assert!((obj - evaluate_wiring(&a, &wp, &d, &arr).max).abs() < 1e-9);
    }
}

#[test]
fn width_8_ilp_beats_random_sampling() {
    let d = DelayTable::default();
    let a = tree(8);
    let arr = zero_arrivals(&a);
    let t = Instant::now();
    let (w, rep) = optimize_wiring(&a, &d, &arr, &WireOptions::default()).unwrap();
    eprintln!("width 8 wiring: {rep:?} in {:?}", t.elapsed());
    let ilp_delay = evaluate_wiring(&a, &w, &d, &arr).max;
    assert_eq!(Some(ilp_delay), rep.ilp_objective.map(|_| rep.delay));
    assert!(ilp_delay <= rep.heuristic_delay + 1e-9);
    let (_, stats) = sample_random_wirings(&a, &d, &arr, 10_000, 2024);
    eprintln!("random: {stats:?}");
    assert!(ilp_delay <= stats.min + 1e-9, "ilp {ilp_delay} vs best random {}", stats.min);
    assert!(stats.max > stats.min, "random wirings should differ");
}

#[test]
fn sampling_is_deterministic_and_thread_independent() {
    let d = DelayTable::default();
    let a = tree(8);
    let arr = zero_arrivals(&a);
    let (x, _) = sample_random_wirings(&a, &d, &arr, 300, 11);
    let (y, _) = macgen::par::with_threads(1, || sample_random_wirings(&a, &d, &arr, 300, 11));
    assert_eq!(x, y);
    let (z, _) = sample_random_wirings(&a, &d, &arr, 300, 12);
    assert_ne!(x, z);
}

#[test]
fn late_inputs_shift_the_heuristic() {
    // A late bit should end up on a fast port or a passthrough.
    let plans = plan_heights(&[3]);
    let a = greedy_assignment(&plans).unwrap();
    let d = DelayTable::default();
    let arr = vec![vec![0.0, 0.0, 5.0]];
    let (w, rep) = optimize_wiring(&a, &d, &arr, &WireOptions::default()).unwrap();
    assert_eq!(rep.delay, evaluate_wiring(&a, &w, &d, &arr).max);
    assert_eq!(rep.delay, 5.0);
}

#[test]
fn histogram_and_csv_shapes() {
    let s = [1.0, 2.0, 2.0, 3.0];
    let csv = samples_csv(&s);
    assert_eq!(csv.lines().count(), 5);
    let svg = histogram_svg(&s, 3, "a<b");
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<rect").count(), 3);
    assert!(svg.contains("a&lt;b"));
}

/// Every wiring of a small tree, by odometer over per-slice permutations.
fn brute_force_min(a: &StageAssignment, d: &DelayTable, arr: &[Vec<f64>]) -> Option<f64> {
    let slices: Vec<(usize, usize)> = (0..a.stages)
        .flat_map(|i| (0..a.columns).map(move |j| (i, j)))
        .filter(|&(i, j)| a.f[i][j] + a.h[i][j] > 0)
        .collect();
    let perms: Vec<Vec<Vec<usize>>> = slices.iter().map(|&(i, j)| all_perms(a.pp[i][j])).collect();
    let total: usize = perms.iter().map(Vec::len).product();
    if total > 20_000 {
        return None;
    }
    let mut best = f64::INFINITY;
    let mut w = WiringPlan::identity(a);
    for mut idx in 0..total {
        for (s, &(i, j)) in slices.iter().enumerate() {
            w.perms[i][j] = perms[s][idx % perms[s].len()].clone();
            idx /= perms[s].len();
        }
        best = best.min(evaluate_wiring(a, &w, d, arr).max);
    }
    Some(best)
}

fn all_perms(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in all_perms(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ilp_matches_exhaustive_search(
        heights in prop::collection::vec(0usize..6, 1..4),
        late in prop::collection::vec(0u8..4, 16),
    ) {
        let plans = plan_heights(&heights);
        let a = greedy_assignment(&plans).unwrap();
        let d = DelayTable::default();
        let mut arr = zero_arrivals(&a);
        let mut it = late.iter();
        for t in arr.iter_mut().flatten() {
            *t = f64::from(*it.next().unwrap()) * 0.5;
        }
        let Some(best) = brute_force_min(&a, &d, &arr) else { return Ok(()) };
        let opts = WireOptions { solve: macgen::ilp::SolveOptions::default(), ..WireOptions::default() };
        let (w, rep) = optimize_wiring(&a, &d, &arr, &opts).unwrap();
        w.validate(&a).unwrap();
        prop_assert!((rep.delay - best).abs() < 1e-9, "ilp {} exhaustive {}", rep.delay, best);
        prop_assert!(rep.heuristic_delay >= best - 1e-9);
    }
}
