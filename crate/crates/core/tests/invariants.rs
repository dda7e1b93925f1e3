use std::collections::BTreeSet;

use nalgebra::DMatrix;
use proptest::prelude::*;
use varsort_core::attack::{apply_attack, plan_perfect_attack, AttackPlan};
use varsort_core::graph::{enumerate_dags, make_chain, DagStructure, StructureKind, WeightedDag};
use varsort_core::metrics::{mmse, structural_hamming_distance, varsortability_from_variances};
use varsort_core::notears::{acyclicity, loss};
use varsort_core::scm::{DataMatrix, WeightedScm};

fn dag3() -> impl Strategy<Value = DagStructure> {
    (0usize..25).prop_map(|i| enumerate_dags(3).unwrap().swap_remove(i))
}

fn matrix(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| DMatrix::from_vec(d, d, v))
}

fn data(n: usize, d: usize) -> impl Strategy<Value = DataMatrix> {
    prop::collection::vec(-3.0f64..3.0, n * d)
        .prop_map(move |v| DataMatrix::new(DMatrix::from_vec(n, d, v)).unwrap())
}

fn central_difference<F: Fn(&DMatrix<f64>) -> f64>(f: F, w: &DMatrix<f64>) -> DMatrix<f64> {
    let step = 1e-6;
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        let mut up = w.clone();
        let mut down = w.clone();
        up[(i, j)] += step;
        down[(i, j)] -= step;
        (f(&up) - f(&down)) / (2.0 * step)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn acyclicity_gradient_matches_finite_differences(w in prop_oneof![matrix(3), matrix(4)]) {
        let (_, grad) = acyclicity(&w);
        let fd = central_difference(|m| acyclicity(m).0, &w);
        prop_assert!((grad - fd).amax() < 1e-6);
    }

    #[test]
    fn loss_gradient_matches_finite_differences(w in matrix(3), x in data(20, 3)) {
        let (_, grad) = loss(&w, &x).unwrap();
        let fd = central_difference(|m| loss(m, &x).unwrap().0, &w);
        prop_assert!((grad - fd).amax() < 1e-6);
    }

    #[test]
    fn dag_supported_matrices_have_zero_h(
        g in dag3(),
        weights in prop::collection::vec(0.1f64..5.0, 9),
    ) {
        let w = DMatrix::from_fn(3, 3, |i, j| if g.has_edge(i, j) { weights[i * 3 + j] } else { 0.0 });
        prop_assert!(acyclicity(&w).0 <= 1e-12);
    }

    #[test]
    fn h_is_nonnegative(w in matrix(4)) {
        prop_assert!(acyclicity(&w).0 >= 0.0);
    }

    #[test]
    fn varsortability_flips_under_reversal(
        g in dag3().prop_filter("needs an edge", |g| g.n_edges() > 0),
        vars in prop::collection::vec(0.1f64..10.0, 3),
    ) {
        let fwd = varsortability_from_variances(&vars, &g).unwrap().value;
        let back = varsortability_from_variances(&vars, &g.reversed()).unwrap().value;
        prop_assert!((fwd + back - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&fwd));
    }

    #[test]
    fn varsortability_ignores_common_rescaling(
        g in dag3().prop_filter("needs an edge", |g| g.n_edges() > 0),
        x in data(10, 3),
        c in 0.1f64..10.0,
    ) {
        let mut scaled = x.clone();
        for i in 0..3 {
            scaled = scaled.rescale_column(i, c).unwrap();
        }
        // same ordering unless two variances tie after rounding
        let v = x.variances();
        let vs = scaled.variances();
        let ordering = |v: &[f64]| {
            let mut o: Vec<(usize, usize, std::cmp::Ordering)> = Vec::new();
            for i in 0..3 {
                for j in 0..3 {
                    o.push((i, j, v[i].total_cmp(&v[j])));
                }
            }
            o
        };
        prop_assume!(ordering(&v) == ordering(&vs));
        prop_assert_eq!(
            varsortability_from_variances(&v, &g).unwrap().value,
            varsortability_from_variances(&vs, &g).unwrap().value
        );
    }

    #[test]
    fn more_parents_never_raise_mmse(g in dag3(), x in data(30, 3)) {
        let base = mmse(&g, &x).unwrap();
        for (i, j) in (0..3).flat_map(|i| (0..3).map(move |j| (i, j))) {
            if i == j || g.has_edge(i, j) {
                continue;
            }
            if let Ok(bigger) = g.with_edge(i, j) {
                prop_assert!(mmse(&bigger, &x).unwrap() <= base * (1.0 + 1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn rescaling_preserves_absolute_correlation(x in data(25, 3), c in 0.01f64..100.0, col in 0usize..3) {
        let y = x.rescale_column(col, c).unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                if let (Ok(a), Ok(b)) = (x.pearson(i, j), y.pearson(i, j)) {
                    prop_assert!((a.abs() - b.abs()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn topological_order_respects_edges(g in (0usize..543).prop_map(|i| enumerate_dags(4).unwrap().swap_remove(i))) {
        let order = g.topological_order();
        let mut pos = [0usize; 4];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        for (i, j) in g.edges() {
            prop_assert!(pos[i] < pos[j]);
        }
    }

    #[test]
    fn shd_is_a_metric(a in dag3(), b in dag3(), c in dag3()) {
        let shd = |x: &DagStructure, y: &DagStructure| structural_hamming_distance(x, y).unwrap();
        prop_assert_eq!(shd(&a, &b), shd(&b, &a));
        prop_assert_eq!(shd(&a, &b) == 0, a.same_edges(&b));
        prop_assert!(shd(&a, &c) <= shd(&a, &b) + shd(&b, &c));
    }

    #[test]
    fn perfect_plans_order_every_target_edge(
        target in dag3().prop_filter("needs an edge", |g| g.n_edges() > 0),
        seed in 0u64..1000,
        margin in 1.1f64..4.0,
    ) {
        let chain = make_chain(3).unwrap();
        prop_assume!(!target.same_edges(&chain));
        let scm = WeightedScm::with_unit_noise(WeightedDag::uniform(chain.clone(), 1.0).unwrap());
        let x = scm.sample(200, seed).unwrap();
        let plan = plan_perfect_attack(&x, &chain, &target, margin).unwrap();
        let v = apply_attack(&x, &plan).unwrap().variances();
        for (i, j) in target.edges() {
            prop_assert!(v[j] > v[i], "{:?} on {:?}", v, target.edges());
        }
        // scale factors act only on variances: |r| is unchanged
        let attacked = apply_attack(&x, &plan).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let (a, b) = (x.pearson(i, j).unwrap(), attacked.pearson(i, j).unwrap());
            prop_assert!((a.abs() - b.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn double_application_scales_variance_by_fourth_power(
        x in data(15, 3),
        s in prop::collection::vec(0.2f64..5.0, 3),
    ) {
        let chain = make_chain(3).unwrap();
        let plan = AttackPlan::new(
            chain.clone(),
            chain.reversed(),
            s.clone(),
            (0..3).collect::<BTreeSet<_>>(),
            chain.reversed(),
        ).unwrap();
        let twice = apply_attack(&apply_attack(&x, &plan).unwrap(), &plan).unwrap();
        for (i, (a, b)) in x.variances().iter().zip(twice.variances()).enumerate() {
            prop_assert!((b - a * s[i].powi(4)).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn perfect_tree_plans_are_fully_varsortable() {
    for kind in [StructureKind::Chain, StructureKind::Fork, StructureKind::Collider] {
        let source = kind.build(3).unwrap();
        let scm = WeightedScm::with_unit_noise(WeightedDag::uniform(source.clone(), 1.0).unwrap());
        let x = scm.sample(1000, 5).unwrap();
        for target in enumerate_dags(3).unwrap() {
            // trees: at most one path between any two nodes
            if target.n_edges() != 2 || target.same_edges(&source) {
                continue;
            }
            let plan = plan_perfect_attack(&x, &source, &target, 2.0).unwrap();
            let v = apply_attack(&x, &plan).unwrap().variances();
            let vs = varsortability_from_variances(&v, &target).unwrap().value;
            assert_eq!(vs, 1.0, "{kind} -> {:?}", target.edges());
        }
    }
}
