//! Aligns an ordered prototype sequence (background, two sub-actions,
//! background) to a region and turns the path into pseudo labels.
//!
//! cargo run --release --example dtw_alignment

use ndarray::{array, Array2};
use protoloc::opa::{align_region, emit_pseudo_labels, ItemKind, OrderedPrototypeSeq, RegionOutcome, RegionPartition};
use protoloc::types::{PointAnnotation, PseudoLabel};

fn main() -> protoloc::Result<()> {
    let seq = OrderedPrototypeSeq {
        items: vec![
            (array![0.0, 0.0, 1.0], ItemKind::Background),
            (array![1.0, 0.0, 0.0], ItemKind::SubAction),
            (array![0.0, 1.0, 0.0], ItemKind::SubAction),
            (array![0.0, 0.1, 1.0], ItemKind::Background),
        ],
        category: 0,
    };
    // background x2, first sub-action x3, second x2, background x3
    let rows = [2, 2, 0, 0, 0, 1, 1, 2, 2, 2];
    let x = Array2::from_shape_fn((rows.len(), 3), |(t, k)| if k == rows[t] { 1.0 } else { 0.1 });

    let outcome = align_region(seq, x.view())?;
    if let RegionOutcome::Aligned { result, .. } = &outcome {
        println!("path {:?}, cost {:.3}", result.path, result.phi);
    }
    let parts = RegionPartition {
        undetermined: vec![0..rows.len()],
        background: vec![0..0, rows.len()..rows.len()],
    };
    let labels = emit_pseudo_labels(&[outcome], &parts, &[PointAnnotation::new(3, 0)], rows.len())?;
    let line: String = labels
        .labels()
        .iter()
        .map(|l| match l {
            PseudoLabel::Positive(_) => '+',
            PseudoLabel::Negative => '-',
            PseudoLabel::Unlabeled => '?',
        })
        .collect();
    println!("labels {line}");
    Ok(())
}
