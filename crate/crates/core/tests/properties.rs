use ndarray::Array2;
use proptest::prelude::*;

use sublora::hessproj::{count_violating_pairs, feasible, project_to_submodular};
use sublora::quadobj::QuadObjective;
use sublora::solvers::{brute_force_max, greedy_max, randomized_greedy_max, top_k_select};

fn symmetric(n: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0..3.0f64, n * n).prop_map(move |v| {
        let a = Array2::from_shape_vec((n, n), v).unwrap();
        (&a + &a.t()) * 0.5
    })
}

/// `(c, H, x)` with `x` bounded away from zero.
fn instance(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Array2<f64>, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| {
        let x = prop::collection::vec((0.1..2.0f64, any::<bool>()), n)
            .prop_map(|v| v.into_iter().map(|(m, neg)| if neg { -m } else { m }).collect::<Vec<_>>());
        (prop::collection::vec(-2.0..2.0f64, n), symmetric(n), x)
    })
}

fn subset(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(any::<bool>(), n)
        .prop_map(|bits| bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn keeping_everything_costs_nothing((c, h, x) in instance(8)) {
        let n = x.len();
        let obj = QuadObjective::new(c, h, x).unwrap();
        let all: Vec<usize> = (0..n).collect();
        prop_assert_eq!(obj.evaluate(&all).unwrap(), 0.0);
    }

    #[test]
    fn incremental_gains_match_differences(((c, h, x), seed) in (instance(7), any::<u64>())) {
        let n = x.len();
        let obj = QuadObjective::new(c, h, x).unwrap();
        let order: Vec<usize> = {
            let mut o: Vec<usize> = (0..n).collect();
            o.rotate_left((seed % n as u64) as usize);
            o
        };
        let mut state = obj.gain_state(&[]).unwrap();
        let mut kept = Vec::new();
        for &j in &order {
            let before = obj.evaluate(&kept).unwrap();
            let gain = state.marginal_gain(j).unwrap();
            state.add(j).unwrap();
            kept.push(j);
            let after = obj.evaluate(&kept).unwrap();
            prop_assert!((after - before - gain).abs() <= 1e-10 * (1.0 + after.abs() + before.abs()));
            prop_assert!((state.value() - after).abs() <= 1e-10 * (1.0 + after.abs()));
        }
    }

    #[test]
    fn projection_is_feasible_idempotent_and_entrywise((_, h, x) in instance(8)) {
        let g = project_to_submodular(&h, &x).unwrap();
        prop_assert!(feasible(&g, &x, 0.0));
        prop_assert_eq!(count_violating_pairs(&g, &x), 0);
        prop_assert_eq!(project_to_submodular(&g, &x).unwrap(), g.clone());
        for ((i, j), &v) in g.indexed_iter() {
            prop_assert!(v == h[[i, j]] || (i != j && v == 0.0));
        }
    }

    #[test]
    fn projected_objective_is_submodular_on_the_lattice((c, h, x) in instance(6)) {
        let g = project_to_submodular(&h, &x).unwrap();
        let obj = QuadObjective::new(c, g, x).unwrap();
        let tol = obj.structural_tol();
        prop_assert!(obj.is_pairwise_submodular(tol).0);
        prop_assert!(obj.verify_lattice_exhaustive().unwrap());
    }

    #[test]
    fn pairwise_test_agrees_with_lattice((c, h, x) in instance(6)) {
        let obj = QuadObjective::new(c, h, x).unwrap();
        let tol = obj.structural_tol();
        prop_assert_eq!(obj.is_pairwise_submodular(tol).0, obj.verify_lattice_exhaustive().unwrap());
    }

    #[test]
    fn solvers_stay_feasible_and_below_the_optimum(
        ((c, h, x), b_frac, seed, stop) in (instance(8), 0.0..=1.0f64, any::<u64>(), any::<bool>())
    ) {
        let n = x.len();
        let b = ((n as f64) * b_frac).round() as usize;
        let obj = QuadObjective::new(c, h, x).unwrap();
        let best = brute_force_max(&obj, b).unwrap();
        for sel in [greedy_max(&obj, b, stop).unwrap(), randomized_greedy_max(&obj, b, seed, stop).unwrap()] {
            prop_assert!(sel.kept.len() <= b);
            if !stop {
                prop_assert_eq!(sel.kept.len(), b);
            }
            let mut sorted = sel.kept.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), sel.kept.len());
            prop_assert!(sel.value <= best.value + 1e-9);
            prop_assert!((sel.value - obj.evaluate(&sel.kept).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn full_budget_greedy_keeps_everything((c, h, x) in instance(8)) {
        let n = x.len();
        let obj = QuadObjective::new(c, h, x).unwrap();
        let sel = greedy_max(&obj, n, false).unwrap();
        prop_assert_eq!(sel.kept.len(), n);
        prop_assert!(sel.value.abs() < 1e-9);
    }

    #[test]
    fn top_k_dominates_the_rest(scores in prop::collection::vec(-5.0..5.0f64, 1..20), frac in 0.0..=1.0f64) {
        let b = ((scores.len() as f64) * frac).floor() as usize;
        let kept = top_k_select(&scores, b).unwrap();
        prop_assert_eq!(kept.len(), b);
        let worst_kept = kept.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for (i, &s) in scores.iter().enumerate() {
            if !kept.contains(&i) {
                prop_assert!(s <= worst_kept);
            }
        }
    }

    #[test]
    fn greedy_matches_brute_force_on_separable_objectives(
        (c, x, d) in (1..=8usize).prop_flat_map(|n| (
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(0.1..2.0f64, n),
            prop::collection::vec(-1.0..3.0f64, n),
        )),
        frac in 0.0..=1.0f64,
    ) {
        let n = x.len();
        let b = ((n as f64) * frac).round() as usize;
        let q = Array2::from_diag(&ndarray::Array1::from(d));
        let obj = QuadObjective::new(c, q, x).unwrap();
        let g = greedy_max(&obj, b, true).unwrap();
        let best = brute_force_max(&obj, b).unwrap();
        prop_assert!((g.value - best.value).abs() < 1e-9);
    }
}

#[test]
fn random_subsets_evaluate_consistently() {
    let mut runner = proptest::test_runner::TestRunner::default();
    runner
        .run(&(instance(6), subset(6)), |((c, h, x), s)| {
            let n = x.len();
            let s: Vec<usize> = s.into_iter().filter(|&i| i < n).collect();
            let obj = QuadObjective::new(c, h, x).unwrap();
            let v = obj.evaluate(&s).unwrap();
            let mut rev = s.clone();
            rev.reverse();
            prop_assert_eq!(obj.evaluate(&rev).unwrap(), v);
            Ok(())
        })
        .unwrap();
}
