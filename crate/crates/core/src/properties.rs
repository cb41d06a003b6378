use std::sync::Arc;

use nalgebra::DMatrix;
use onl_core::certificates::{
    ball_indicator_certificate, check_positive_definite, kernel_deviation, subset_to_vector, tree_ray_certificate,
    vector_distance, vector_deviation, vector_to_kernel, SubsetCertificate,
};
use onl_core::duality::{
    a_implies_onl_bound, kernel_from_cp_map, schur_multiply, schur_test_kappa, SchurCPMap,
};
use onl_core::localization::{
    compress, localization_report, power_trick_witness, vector_amplification_reduction, weighted_reduction,
};
use onl_core::operators::random_banded;
use onl_core::space::GraphSpec;
use onl_core::{BandedOperator, Family, Field, FiniteMetricSpace, C64};
use proptest::prelude::*;

use crate::common::{block_norm_oracle, floyd_warshall, norm_oracle, space};

fn small_space(index: usize) -> Arc<FiniteMetricSpace> {
    let families = [
        Family::Cycle { n: 9 },
        Family::Path { n: 7 },
        Family::Grid { rows: 3, cols: 4 },
        Family::BinaryTree { depth: 3 },
        Family::Cycle { n: 14 },
    ];
    space(families[index % families.len()].clone())
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

/// A spanning tree plus extra edges on `n` vertices.
fn connected_graph() -> impl Strategy<Value = GraphSpec> {
    (2usize..24).prop_flat_map(|n| {
        let parents = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n), 0..n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut edges: Vec<[usize; 2]> = parents.iter().enumerate().map(|(i, p)| [p.index(i + 1), i + 1]).collect();
            edges.extend(extra.into_iter().filter(|(u, v)| u != v).map(|(u, v)| [u, v]));
            GraphSpec { n, edges }
        })
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn bfs_matches_floyd_warshall(graph in connected_graph()) {
        let s = FiniteMetricSpace::from_graph(graph.n, &graph.edges).unwrap();
        let fw = floyd_warshall(&graph);
        for y in 0..graph.n {
            for z in 0..graph.n {
                prop_assert_eq!(fw[y][z].map(|d| d as f64), Some(s.dist(y, z)));
            }
        }
        prop_assert!(s.validate().is_empty());
    }

    #[test]
    fn balls_are_symmetric(idx in 0usize..5, r in 0u32..4) {
        let s = small_space(idx);
        let cover = s.ball_cover(r as f64);
        for x in 0..s.len() {
            for &y in cover.ball(x) {
                prop_assert!(cover.contains(y, x));
            }
        }
    }

    #[test]
    fn operator_algebra(idx in 0usize..5, seed in any::<u64>(), r1 in 0u32..3, r2 in 0u32..3) {
        let s = small_space(idx);
        let a = random_banded(s.clone(), r1 as f64, seed, 1, Field::Complex);
        let b = random_banded(s.clone(), r2 as f64, seed ^ 1, 1, Field::Complex);
        prop_assert!(a.compose(&b).unwrap().propagation() <= a.propagation() + b.propagation());
        prop_assert_eq!(a.adjoint().adjoint(), a.clone());
        prop_assert_eq!(BandedOperator::from_dense(s.clone(), 1, &a.to_dense()).unwrap(), a.clone());
        let dense = a.to_dense() * b.to_dense();
        prop_assert!((a.compose(&b).unwrap().to_dense() - dense).norm() < 1e-10);
        let norm = a.operator_norm().unwrap();
        prop_assert!((norm - norm_oracle(&a.to_dense())).abs() <= 1e-10 * norm.max(1.0));
    }

    #[test]
    fn kappa_bounds_norm(idx in 0usize..5, seed in any::<u64>(), r in 0u32..3) {
        let s = small_space(idx);
        let a = random_banded(s.clone(), r as f64, seed, 1, Field::Complex);
        let kappa = schur_test_kappa(&s, r as f64) as f64;
        prop_assert!(a.operator_norm().unwrap() <= kappa * a.max_entry_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn compression_is_contractive_and_star_preserving(idx in 0usize..5, seed in any::<u64>(), r in 1u32..3, sr in 0u32..4) {
        let s = small_space(idx);
        let radius = sr as f64;
        let a = random_banded(s, r as f64, seed, 1, Field::Complex);
        let c = compress(&a, radius);
        prop_assert_eq!(compress(&a.adjoint(), radius), c.adjoint());
        prop_assert!(c.block_norm() <= a.operator_norm().unwrap() * (1.0 + 1e-12));
        prop_assert!((c.block_norm() - block_norm_oracle(&a, radius)).abs() < 1e-10);
        let two = a.scale(C64::new(2.0, -1.0));
        let sum = compress(&a.add(&two).unwrap(), radius);
        prop_assert!((sum.block_norm() - compress(&a.scale(C64::new(3.0, -1.0)), radius).block_norm()).abs() < 1e-9);
    }

    #[test]
    fn chain_and_monotonicity(idx in 0usize..5, seed in any::<u64>(), r in 1u32..3, sr in 0u32..4) {
        let s = small_space(idx);
        let a = random_banded(s, r as f64, seed, 1, Field::Complex);
        let rep = localization_report(&a, sr as f64).unwrap();
        prop_assert!(rep.chain_holds);
        prop_assert!(rep.column_ratio <= 1.0 + 1e-12);
        let next = localization_report(&a, sr as f64 + 1.0).unwrap();
        prop_assert!(rep.square_ratio <= next.square_ratio + 1e-12);
        for w in [&rep.square_witness, &rep.column_witness] {
            prop_assert!((w.norm() - 1.0).abs() < 1e-10);
            prop_assert!(w.support().iter().all(|p| w.points.contains(p)));
        }
    }

    #[test]
    fn power_trick_guarantees(seed in any::<u64>(), n in 1usize..4, sr in 0u32..3) {
        let s = space(Family::Cycle { n: 20 });
        let a = random_banded(s, 1.0, seed, 1, Field::Complex);
        let w = power_trick_witness(&a, sr as f64, n).unwrap();
        prop_assert!(w.ratio_holds);
        prop_assert!(w.support_diameter <= w.neighborhood_bound);
    }

    #[test]
    fn weighted_reduction_preserves(idx in 0usize..5, seed in any::<u64>(), weights in proptest::collection::vec(0.0f64..3.0, 14)) {
        let s = small_space(idx);
        let b = random_banded(s.clone(), 1.0, seed, 1, Field::Complex);
        let mut w: Vec<f64> = weights.into_iter().cycle().take(s.len()).collect();
        w[0] = 1.0;
        let red = weighted_reduction(&b, &w).unwrap();
        let restricted: Vec<usize> = red.support.clone();
        let positive: Vec<f64> = w.iter().copied().filter(|v| *v > 0.0).collect();
        for (&(y, z), blk) in red.operator.entries() {
            let factor = (positive[y] / positive[z]).sqrt();
            let orig = b.get(restricted[y], restricted[z]).unwrap();
            prop_assert!((blk - orig * C64::new(factor, 0.0)).norm() <= 1e-15 * orig.norm().max(1.0) * factor.max(1.0));
        }
        prop_assert!(red.operator.propagation() <= b.propagation());
    }

    #[test]
    fn weighted_reduction_matches_similarity(seed in any::<u64>(), weights in proptest::collection::vec(0.1f64..3.0, 9)) {
        let s = small_space(0);
        let b = random_banded(s, 1.0, seed, 1, Field::Complex);
        let red = weighted_reduction(&b, &weights).unwrap();
        let d = DMatrix::from_fn(9, 9, |i, j| if i == j { C64::new(weights[i].sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
        let dinv = DMatrix::from_fn(9, 9, |i, j| if i == j { C64::new(1.0 / weights[i].sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
        let expected = &d * b.to_dense() * &dinv;
        prop_assert!((red.operator.to_dense() - &expected).norm() <= 1e-12 * expected.norm());
        prop_assert!((red.operator.operator_norm().unwrap() - norm_oracle(&expected)).abs() <= 1e-10 * norm_oracle(&expected));
        prop_assert_eq!(red.operator.propagation(), b.propagation());
    }

    #[test]
    fn amplification_reduction_fraction(seed in any::<u64>(), m in 1usize..4) {
        let s = space(Family::Cycle { n: 6 });
        let a = random_banded(s, 1.0, seed, m, Field::Complex);
        let red = vector_amplification_reduction(&a, 0.1).unwrap();
        prop_assert!(red.bound_holds);
        prop_assert!(red.operator().propagation() <= a.propagation());
        prop_assert!((red.input_norm - norm_oracle(&a.to_dense())).abs() <= 1e-10 * red.input_norm);
    }

    #[test]
    fn gram_identity_and_kernel_psd(idx in 0usize..5, sr in 0u32..3) {
        let s = small_space(idx);
        let cert = ball_indicator_certificate(&s, sr as f64).unwrap();
        for y in 0..s.len() {
            for z in 0..s.len() {
                let d = vector_distance(&cert, y, z);
                prop_assert!((d * d - (2.0 - 2.0 * cert.gram(y, z).re)).abs() < 1e-12);
            }
        }
        let k = vector_to_kernel(&cert);
        prop_assert!(check_positive_definite(&k.to_dense(), None).unwrap().is_psd);
        for (&(y, z), _) in k.values() {
            prop_assert!(s.dist(y, z) <= 2.0 * sr as f64);
        }
    }

    #[test]
    fn symmetric_difference_translation(idx in 0usize..5, sr in 0u32..3, eps in 0.01f64..2.0) {
        let s = small_space(idx);
        let sets: Vec<Vec<(usize, usize)>> =
            (0..s.len()).map(|x| s.ball(x, sr as f64).unwrap().into_iter().map(|p| (p, 0)).collect()).collect();
        let subsets = SubsetCertificate::new(s.clone(), sr as f64, 1, sets).unwrap();
        let v = subset_to_vector(&subsets);
        for y in 0..s.len() {
            for z in 0..s.len() {
                if subsets.set(y).len() != subsets.set(z).len() {
                    continue;
                }
                let (sym, common) = subsets.overlap(y, z);
                if (sym as f64) < eps * common as f64 {
                    prop_assert!(1.0 - v.gram(y, z).re < eps);
                }
            }
        }
    }

    #[test]
    fn unitality_and_schur_consistency(idx in 0usize..5, seed in any::<u64>(), sr in 0u32..3, r in 1u32..3) {
        let s = small_space(idx);
        let radius = sr as f64;
        let cert = ball_indicator_certificate(&s, radius).unwrap();
        let phi = SchurCPMap::new(cert.clone(), radius).unwrap();
        let id = BandedOperator::identity(s.clone(), 1);
        prop_assert_eq!(phi.apply(&compress(&id, radius)).unwrap(), id);
        let a = random_banded(s.clone(), (r as f64).min(2.0 * radius), seed, 1, Field::Complex);
        let lhs = phi.apply(&compress(&a, radius)).unwrap();
        prop_assert_eq!(lhs, schur_multiply(&a, &phi.gram_kernel()).unwrap());
    }

    #[test]
    fn certified_bound_holds(idx in 0usize..5, seed in any::<u64>(), sr in 1u32..4) {
        let s = small_space(idx);
        let cert = ball_indicator_certificate(&s, sr as f64).unwrap();
        let samples = onl_core::operators::sample_band(&s, 1.0, 4, seed, 1, Field::Complex);
        prop_assert!(a_implies_onl_bound(&cert, 1.0, &samples).unwrap().verified);
    }

    #[test]
    fn extracted_kernels(idx in 0usize..5, sr in 0u32..3) {
        let s = small_space(idx);
        let radius = sr as f64;
        let cert = ball_indicator_certificate(&s, radius).unwrap();
        let phi = SchurCPMap::new(cert.clone(), radius).unwrap();
        let k = kernel_from_cp_map(&phi, radius).unwrap();
        prop_assert!(k.unit_diagonal() && k.is_hermitian());
        prop_assert!(check_positive_definite(&k.to_dense(), None).unwrap().is_psd);
        let gram = phi.gram_kernel();
        prop_assert_eq!(k.values(), gram.values());
        prop_assert_eq!(kernel_deviation(&k, &s, 1.0), cert.gram_deficit(1.0).0);
    }
}

#[test]
fn ball_indicator_deviation_nonincreasing_in_s() {
    let spaces = [
        space(Family::Cycle { n: 12 }),
        space(Family::Cycle { n: 30 }),
        space(Family::Grid { rows: 8, cols: 8 }),
        space(Family::Grid { rows: 4, cols: 7 }),
    ];
    for s in spaces {
        for r in [1.0, 2.0] {
            let devs: Vec<f64> =
                (0..6).map(|sr| vector_deviation(&ball_indicator_certificate(&s, sr as f64).unwrap(), r)).collect();
            for w in devs.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "{devs:?}");
            }
        }
    }
}

#[test]
fn tree_ray_overlap_on_common_root_path() {
    let t = space(Family::BinaryTree { depth: 5 });
    let length = 5;
    let cert = tree_ray_certificate(&t, 0, length).unwrap();
    for child in 1..t.len() {
        let parent = (child - 1) / 2;
        assert!(cert.gram(child, parent).re >= (length as f64 - 1.0) / length as f64);
    }
}

#[test]
fn grid_ball_certificate_improves_with_radius() {
    let g = space(Family::Grid { rows: 8, cols: 8 });
    let d1 = vector_deviation(&ball_indicator_certificate(&g, 1.0).unwrap(), 1.0);
    let d3 = vector_deviation(&ball_indicator_certificate(&g, 3.0).unwrap(), 1.0);
    assert!(d3 < d1);
}

#[test]
fn triangular_kernel_on_path_is_psd() {
    let p = space(Family::Path { n: 8 });
    let k = DMatrix::from_fn(8, 8, |y, z| C64::new((1.0 - p.dist(y, z) / 4.0).max(0.0), 0.0));
    let check = check_positive_definite(&k, None).unwrap();
    assert!(check.is_psd);
    assert!((check.min_eigenvalue - crate::common::min_eigenvalue_oracle(&k)).abs() < 1e-12);
}

#[test]
fn onl_profile_orders_bounds() {
    use onl_core::localization::{onl_profile, OnlProfileConfig};
    let c60 = space(Family::Cycle { n: 60 });
    let cert = ball_indicator_certificate(&c60, 10.0).unwrap();
    let mut config = OnlProfileConfig::new(1.0, 10.0, 20, 3);
    config.search_budget = 30;
    let p = onl_profile(&c60, &config, Some(&cert)).unwrap();
    assert!(p.bounds_ordered);
    assert!((p.certified_lower.unwrap() - 6.0 / 7.0).abs() < 1e-15);
    assert!(p.certified_lower.unwrap() <= p.adversarial_upper);

    let c6 = space(Family::Cycle { n: 6 });
    let mut config = OnlProfileConfig::new(1.0, 1.0, 10, 1);
    config.probes.push(BandedOperator::adjacency(c6.clone()));
    let p = onl_profile(&c6, &config, None).unwrap();
    assert!(p.min_ratio <= 2f64.sqrt() / 2.0 + 1e-12);
}

#[test]
fn power_trick_examples() {
    let c60 = space(Family::Cycle { n: 60 });
    let id = BandedOperator::identity(c60.clone(), 1);
    for n in 1..4 {
        let w = power_trick_witness(&id, 2.0, n).unwrap();
        assert_eq!(w.stage, 0);
        assert!((w.achieved - 1.0).abs() < 1e-12);
    }
    let adj = BandedOperator::adjacency(c60);
    let w = power_trick_witness(&adj, 5.0, 2).unwrap();
    assert!(w.achieved >= w.target - 1e-10);
}
