//! The rigid DTW against exhaustive search over contiguous partitions.

mod common;

use common::{brute_dtw, path_cost, random_matrix};
use ndarray::{Array1, Array2, ArrayView1};
use proptest::prelude::*;
use protoloc::opa::{constrained_dtw, cost_matrix, dtw_from_costs, ItemKind, OrderedPrototypeSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_path_shape(path: &[usize], k: usize) {
    assert_eq!(path[0], 0);
    assert_eq!(*path.last().unwrap(), k - 1);
    for w in path.windows(2) {
        assert!(w[1] == w[0] || w[1] == w[0] + 1, "path {path:?} skips or goes back");
    }
}

#[test]
fn thousand_random_alignments_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..1000 {
        let k = rng.gen_range(1..=5);
        let m = rng.gen_range(k..=10);
        let d = rng.gen_range(1..=4);
        let protos = random_matrix(&mut rng, k, d, 1.0);
        let x = random_matrix(&mut rng, m, d, 1.0);
        let seq = OrderedPrototypeSeq {
            items: protos
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let kind = if i == 0 || i + 1 == k { ItemKind::Background } else { ItemKind::SubAction };
                    (r.to_owned(), kind)
                })
                .collect(),
            category: 0,
        };
        let r = constrained_dtw(&seq, x.view()).unwrap();
        let views: Vec<ArrayView1<'_, f64>> = protos.rows().into_iter().collect();
        let cost = cost_matrix(&views, x.view());
        assert_eq!(Some(r.phi), brute_dtw(cost.view()), "trial {trial}");
        assert_eq!(path_cost(cost.view(), &r.path), r.phi, "trial {trial}");
        assert_path_shape(&r.path, k);
    }
}

#[test]
fn cost_is_one_minus_cosine() {
    let p = Array1::from(vec![1.0, 2.0, 2.0]);
    let x = Array2::from_shape_vec((2, 3), vec![2.0, 4.0, 4.0, 0.0, 0.0, 0.0]).unwrap();
    let c = cost_matrix(&[p.view()], x.view());
    assert!(c[[0, 0]].abs() < 1e-15);
    // zero vector counts as similarity 0
    assert_eq!(c[[0, 1]], 1.0);
}

proptest! {
    #[test]
    fn dp_equals_exhaustive_minimum(
        k in 1usize..=4,
        extra in 0usize..=5,
        seed in any::<u64>(),
    ) {
        let m = k + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = random_matrix(&mut rng, k, m, 1.0).mapv(f64::abs);
        let r = dtw_from_costs(cost.view()).unwrap();
        prop_assert_eq!(Some(r.phi), brute_dtw(cost.view()));
        prop_assert_eq!(path_cost(cost.view(), &r.path), r.phi);
        prop_assert_eq!(r.path.len(), m);
        assert_path_shape(&r.path, k);
    }

    #[test]
    fn too_few_snippets_is_an_error(k in 2usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = random_matrix(&mut rng, k, k - 1, 1.0);
        prop_assert!(dtw_from_costs(cost.view()).is_err());
    }
}
