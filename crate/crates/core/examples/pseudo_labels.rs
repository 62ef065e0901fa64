//! Warms a head up on the reference corpus, builds the prototype bank and
//! prints the ordered-alignment pseudo labels of a few videos next to the
//! ground truth.
//!
//! cargo run --release --example pseudo_labels

use protoloc::synth::reference_corpus;
use protoloc::train::{snapshot, train, TrainConfig, Variant};
use protoloc::types::PseudoLabel;

fn main() -> protoloc::Result<()> {
    let (train_set, _) = reference_corpus(42)?;
    let warm = TrainConfig {
        epochs: 10,
        ..TrainConfig::reference()
    };
    let state = train(&train_set, None, &warm)?;
    let cfg = TrainConfig {
        variant: Variant::Full,
        ..warm
    };
    let snap = snapshot(&state.params, &train_set, &cfg)?;
    if let Some(bank) = &snap.bank {
        for c in 0..bank.num_categories() {
            println!("category {c}: {} prototypes in the bank", bank.prototypes(c).count());
        }
    }
    for (video, plan) in train_set.videos().iter().zip(&snap.plans).take(4) {
        let Some(labels) = &plan.labels else { continue };
        let mut truth = vec!['.'; video.len()];
        for g in video.ground_truth.as_deref().unwrap_or(&[]) {
            truth[g.start..g.end].fill('#');
        }
        for p in &video.points {
            truth[p.t] = '*';
        }
        let got: String = labels
            .labels()
            .iter()
            .map(|l| match l {
                PseudoLabel::Positive(_) => '#',
                PseudoLabel::Negative => '.',
                PseudoLabel::Unlabeled => ' ',
            })
            .collect();
        println!("{}\n  truth  {}\n  labels {got}", video.id(), truth.iter().collect::<String>());
    }
    Ok(())
}
