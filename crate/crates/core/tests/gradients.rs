//! Central-difference checks of every loss composed through the head.

mod common;

use common::{grad_instance, max_relative_error, FD_STEPS};

#[test]
fn losses_match_central_differences() {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let inst = grad_instance(seed);
        for (name, obj) in &inst.objectives {
            let err = max_relative_error(obj, inst.app.view(), inst.mot.view(), &inst.params, &FD_STEPS, 1e-6);
            assert!(err < 1e-4, "seed {seed} {name}: relative error {err:.3e}");
            worst = worst.max(err);
        }
    }
    println!("worst relative error {worst:.3e}");
}
