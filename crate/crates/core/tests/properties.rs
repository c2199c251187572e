mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treedens::{Basis, DimensionTree, TreeTensor};

#[test]
fn rank_inequalities_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        if let Err(e) = common::rank_inequalities(&mut rng) {
            panic!("instance {i}: {e}");
        }
    }
}

#[test]
fn singular_values_match_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let e = common::singular_value_error(&mut rng);
        assert!(e < 1e-10, "{e}");
    }
}

#[test]
fn full_rank_fits_are_frequency_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let e = common::frequency_table_error(&mut rng);
        assert!(e < 1e-10, "{e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_trees_are_valid(d in 2usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = DimensionTree::random_binary(d, &mut rng).unwrap();
        prop_assert!(t.validate().is_ok());
        prop_assert_eq!(t.leaves().len(), d);
        prop_assert_eq!(t.num_nodes(), 2 * d - 1);
        let back = DimensionTree::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(back.subset_family(), t.subset_family());
    }

    #[test]
    fn swaps_keep_trees_valid_and_are_involutions(d in 3usize..10, seed in any::<u64>(), pick in any::<(u16, u16)>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = DimensionTree::random_binary(d, &mut rng).unwrap();
        let m = t.num_nodes();
        let (a, b) = (pick.0 as usize % m, pick.1 as usize % m);
        match t.swap_nodes(a, b) {
            Ok(s) => {
                prop_assert!(s.validate().is_ok());
                prop_assert_eq!(s.subset(a), t.subset(a));
                prop_assert_eq!(s.subset(b), t.subset(b));
                let back = s.swap_nodes(a, b).unwrap();
                prop_assert_eq!(back.subset_family(), t.subset_family());
            }
            Err(_) => {
                let disjoint = t.subset(a).is_disjoint(t.subset(b));
                prop_assert!(a == t.root() || b == t.root() || a == b || !disjoint);
            }
        }
    }

    #[test]
    fn rank_one_storage_is_basis_sizes_plus_interior(d in 2usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = common::random_sizes(d, 1, 6, &mut rng);
        let t = DimensionTree::random_binary(d, &mut rng).unwrap();
        let ranks = vec![1; t.num_nodes()];
        prop_assert!(t.check_admissible(&ranks, &sizes).is_ok());
        let c = t.storage_complexity(&ranks, &sizes).unwrap();
        prop_assert_eq!(c, sizes.iter().sum::<usize>() + d - 1);
    }

    #[test]
    fn truncation_error_within_tolerance(seed in any::<u64>(), tol in 1e-3f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_model(4, &[3, 3, 3, 3], 3, &mut rng);
        let t = g.truncate(tol).unwrap();
        let f = g.full_tensor().unwrap();
        let ft = t.full_tensor().unwrap();
        let err: f64 = f.data.iter().zip(&ft.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= tol * f.norm() * (1.0 + 1e-9) + 1e-12, "{} > {}", err, tol * f.norm());
        let r = t.ranks();
        prop_assert!(t.tree.check_admissible(&r, &t.leaf_dims()).is_ok());
    }

    #[test]
    fn evaluation_matches_full_tensor(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = common::random_sizes(3, 2, 4, &mut rng);
        let g = common::random_model(3, &sizes, 2, &mut rng);
        let f = g.full_tensor().unwrap();
        for i in 0..sizes[0] {
            for j in 0..sizes[1] {
                for k in 0..sizes[2] {
                    let v = g.evaluate(&[i as f64, j as f64, k as f64]).unwrap();
                    prop_assert!((v - f.get(&[i, j, k])).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn rank_one_model_is_product_of_factors() {
    let tree = DimensionTree::balanced(3).unwrap();
    let bases = vec![Basis::canonical(2), Basis::canonical(3), Basis::canonical(2)];
    let v = vec![vec![1.0, 2.0], vec![0.5, -1.0, 3.0], vec![4.0, 0.25]];
    let g = TreeTensor::rank_one(tree, bases, &v).unwrap();
    for i in 0..2 {
        for j in 0..3 {
            for k in 0..2 {
                let x = [i as f64, j as f64, k as f64];
                assert!((g.evaluate(&x).unwrap() - v[0][i] * v[1][j] * v[2][k]).abs() < 1e-12);
            }
        }
    }
}
