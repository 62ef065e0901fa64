//! Trains every component combination on the reference corpus and prints the
//! mAP table.
//!
//! cargo run --release --example ablation -- [seeds]

use protoloc::synth::reference_corpus;
use protoloc::train::{ablate, ablation_report, AblationRun, TrainConfig};

fn main() -> protoloc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seeds: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed count"));
    let (train_set, test_set) = reference_corpus(42)?;
    let cfg = TrainConfig::reference();
    let runs = AblationRun::components(&cfg.spc);
    let seeds: Vec<u64> = (0..seeds).collect();
    let results = ablate(&train_set, &test_set, &cfg, &runs, &seeds)?;
    print!("{}", ablation_report(&results).to_text());
    Ok(())
}
