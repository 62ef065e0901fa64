//! Clusters a three-phase proposal into sub-action prototypes and shows how
//! the adaptive and fixed count criteria differ on short and long proposals.
//! Association weights are `exp(-distance)` with no temperature, so phases only
//! stay apart when they are several units from each other; at unit scale
//! every prototype drifts to the proposal mean.
//!
//! cargo run --release --example spc_prototypes

use ndarray::Array2;
use protoloc::spc::{extract_prototypes, CountCriterion, SpcConfig};

/// `len` snippets cycling through three 2-d phase means, with a small wobble.
fn proposal(len: usize) -> Array2<f64> {
    let phases = [[6.0, 0.0], [0.0, 6.0], [-6.0, 3.0]];
    Array2::from_shape_fn((len, 2), |(t, k)| {
        let phase = 3 * t / len;
        phases[phase][k] + 0.3 * ((t * 7 + k * 3) % 5) as f64
    })
}

fn main() -> protoloc::Result<()> {
    for criterion in [CountCriterion::Adaptive, CountCriterion::Fixed] {
        let cfg = SpcConfig {
            criterion,
            ..SpcConfig::default()
        };
        for len in [6, 15, 40] {
            let protos = extract_prototypes(proposal(len).view(), &cfg)?;
            println!("{criterion:?}, {len} snippets -> {} prototypes", protos.len());
            for p in &protos {
                println!("  at {:.2}: [{:.2}, {:.2}]", p.position, p.vector[0], p.vector[1]);
            }
        }
    }
    Ok(())
}
