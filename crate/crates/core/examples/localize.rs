//! Localizes actions on a hand-written TCAS with multi-threshold proposals,
//! outer-inner-contrast scoring and NMS, then scores them.
//!
//! cargo run --release --example localize

use ndarray::Array2;
use protoloc::eval::{map_table, Tagged};
use protoloc::infer::{localize, InferConfig};
use protoloc::types::Segment;

fn main() -> protoloc::Result<()> {
    // one category plus background; two bumps of action score
    let action = [0.1, 0.2, 0.8, 0.9, 0.85, 0.3, 0.1, 0.1, 0.6, 0.7, 0.2, 0.1];
    let tcas = Array2::from_shape_fn((action.len(), 2), |(t, k)| if k == 0 { action[t] } else { 1.0 - action[t] });
    let dets = localize(tcas.view(), &InferConfig::default());
    for d in &dets {
        println!("[{}, {}) confidence {:.3}", d.start, d.end, d.confidence);
    }
    let gt = [Segment::new(2, 5, 0, 1.0)?, Segment::new(8, 10, 0, 1.0)?];
    let gt: Vec<Tagged<'_>> = gt.iter().map(|g| Tagged::new("v", *g)).collect();
    let dets: Vec<Tagged<'_>> = dets.iter().map(|d| Tagged::new("v", *d)).collect();
    let table = map_table(&dets, &gt, &[0.3, 0.5, 0.7], 1);
    println!("mAP {:?}", table.map);
    Ok(())
}
