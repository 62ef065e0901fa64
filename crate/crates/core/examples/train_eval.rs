//! Trains one variant on the reference corpus and reports test mAP.
//!
//! cargo run --release --example train_eval -- [variant] [epochs]

use std::time::Instant;

use protoloc::eval::Report;
use protoloc::synth::reference_corpus;
use protoloc::train::{evaluate, train, TrainConfig, Variant};

fn main() -> protoloc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let variant = match args.next().as_deref() {
        None | Some("full") => Variant::Full,
        Some(name) => Variant::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .unwrap_or_else(|| panic!("unknown variant {name}")),
    };
    let reference = TrainConfig::reference();
    let epochs = args.next().map_or(reference.epochs, |e| e.parse().expect("epochs"));

    let (train_set, test_set) = reference_corpus(42)?;
    let cfg = TrainConfig {
        epochs,
        warmup_epochs: reference.warmup_epochs.min(epochs),
        variant,
        eval_every: 5,
        ..reference
    };
    let started = Instant::now();
    let state = train(&train_set, Some(&test_set), &cfg)?;
    let table = evaluate(&state.params, &test_set, &cfg.infer, &cfg.eval_thresholds)?;
    print!("{}", Report::single(variant.name(), table).to_text());
    println!("trained {epochs} epochs in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
