//! Prototype clustering against a straight-line re-implementation.

mod common;

use common::{check_spc, iid_proposal, spc_reference, two_block_proposal};
use ndarray::Array2;
use protoloc::spc::{init_prototypes, spc_cluster, SpcConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_reference_on_noise_proposals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let c = check_spc(&iid_proposal(&mut rng));
        assert!(c.max_error < 1e-6, "case {case}: {:.3e}", c.max_error);
        assert!(c.in_hull, "case {case}");
    }
}

#[test]
fn two_block_proposals_keep_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let c = check_spc(&two_block_proposal(&mut rng));
        assert!(c.max_error < 1e-6, "case {case}: {:.3e}", c.max_error);
        assert!(c.in_hull && c.ordered, "case {case}: {c:?}");
    }
}

#[test]
fn two_blocks_land_between_their_means() {
    let a = vec![1.0, 0.0, 0.0];
    let b = vec![0.0, 3.0, 1.0];
    let x: Vec<Vec<f64>> = (0..10).map(|i| if i < 5 { a.clone() } else { b.clone() }).collect();
    let cfg = SpcConfig::default();
    let xa = Array2::from_shape_fn((10, 3), |(i, k)| x[i][k]);
    let got = spc_cluster(xa.view(), &init_prototypes(xa.view(), 2).unwrap(), &cfg);
    let want = spc_reference(&x, 2, cfg.gamma, cfg.iterations);
    for (g, (v, _)) in got.iter().zip(&want) {
        for (p, q) in g.vector.iter().zip(v) {
            assert!((p - q).abs() < 1e-6);
        }
    }
    let dist = |v: &ndarray::Array1<f64>, w: &[f64]| {
        v.iter().zip(w).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    };
    assert!(got[0].position <= got[1].position);
    assert!(dist(&got[0].vector, &a) < dist(&got[0].vector, &b));
    assert!(dist(&got[1].vector, &b) < dist(&got[1].vector, &a));
    assert!(dist(&got[0].vector, &a) > 0.0 && dist(&got[1].vector, &b) > 0.0);
}
