//! Generates the reference corpus and prints what is in it. With a directory
//! argument the train/test split is also written out in the on-disk layout.
//!
//! cargo run --release --example synth_corpus -- [out_dir]

use protoloc::io::write_corpus;
use protoloc::synth::{reference_corpus, SynthSpec};

fn main() -> protoloc::Result<()> {
    let spec = SynthSpec::reference(42);
    let (train, test) = reference_corpus(42)?;
    println!(
        "{} categories, {}-d features, noise sigma {}, {} train / {} test videos",
        spec.num_categories(),
        spec.dim(),
        spec.noise_sigma,
        train.len(),
        test.len()
    );
    let v = &train.videos()[0];
    println!("{}: {} snippets", v.id(), v.len());
    for (g, p) in v.ground_truth.as_deref().unwrap_or(&[]).iter().zip(&v.points) {
        println!("  category {} over [{}, {}) with its point at {}", g.category, g.start, g.end, p.t);
    }
    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::PathBuf::from(dir);
        write_corpus(&train, dir.join("train"))?;
        write_corpus(&test, dir.join("test"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
