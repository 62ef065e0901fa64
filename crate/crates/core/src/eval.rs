//! Detection metrics: per-category average precision at a tIoU threshold
//! and mAP tables over threshold presets.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::types::{tiou, Segment};

/// A segment tagged with the video it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct Tagged<'a> {
    pub video_id: &'a str,
    pub segment: Segment,
}

impl<'a> Tagged<'a> {
    pub fn new(video_id: &'a str, segment: Segment) -> Self {
        Self { video_id, segment }
    }
}

fn detection_order(a: &Tagged<'_>, b: &Tagged<'_>) -> std::cmp::Ordering {
    b.segment
        .confidence
        .total_cmp(&a.segment.confidence)
        .then_with(|| a.video_id.cmp(b.video_id))
        .then(a.segment.start.cmp(&b.segment.start))
        .then(a.segment.end.cmp(&b.segment.end))
}

/// All-point interpolated AP for one category; `None` without ground truth.
///
/// Detections are taken in confidence order and each claims the unmatched
/// ground-truth segment of its video with the highest tIoU, if that tIoU is
/// at least `iou_thresh`.
pub fn average_precision(
    detections: &[Tagged<'_>],
    ground_truth: &[Tagged<'_>],
    iou_thresh: f64,
) -> Option<f64> {
    if ground_truth.is_empty() {
        return None;
    }
    let mut by_video: HashMap<&str, Vec<(Segment, bool)>> = HashMap::new();
    for g in ground_truth {
        by_video.entry(g.video_id).or_default().push((g.segment, false));
    }
    let mut dets: Vec<&Tagged<'_>> = detections.iter().collect();
    dets.sort_by(|a, b| detection_order(a, b));

    let mut hits = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best: Option<(usize, f64)> = None;
        if let Some(gts) = by_video.get(d.video_id) {
            for (i, (g, used)) in gts.iter().enumerate() {
                if *used {
                    continue;
                }
                let iou = tiou(g, &d.segment);
                if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((i, iou));
                }
            }
        }
        match best {
            Some((i, _)) => {
                by_video.get_mut(d.video_id).expect("video present")[i].1 = true;
                hits.push(true);
            }
            None => hits.push(false),
        }
    }

    let n_gt = ground_truth.len() as f64;
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // precision envelope: best precision at any later rank
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let area: f64 = hits
        .iter()
        .zip(&precision)
        .filter(|(h, _)| **h)
        .map(|(_, p)| p)
        .sum();
    Some(area / n_gt)
}

/// AP for every category `0..num_categories`.
pub fn match_and_ap(
    detections: &[Tagged<'_>],
    ground_truth: &[Tagged<'_>],
    iou_thresh: f64,
    num_categories: usize,
) -> Vec<Option<f64>> {
    (0..num_categories)
        .map(|c| {
            let dets: Vec<Tagged<'_>> = detections
                .iter()
                .filter(|d| d.segment.category == c)
                .cloned()
                .collect();
            let gts: Vec<Tagged<'_>> = ground_truth
                .iter()
                .filter(|g| g.segment.category == c)
                .cloned()
                .collect();
            average_precision(&dets, &gts, iou_thresh)
        })
        .collect()
}

/// Threshold lists used for reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// tIoU 0.3:0.1:0.7
    Thumos,
    /// tIoU 0.1:0.1:0.7
    Gtea,
}

impl Preset {
    pub fn thresholds(self) -> Vec<f64> {
        let range = match self {
            Preset::Thumos => 3..=7,
            Preset::Gtea => 1..=7,
        };
        range.map(|i| i as f64 / 10.0).collect()
    }
}

/// mAP per threshold plus their average, as fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapTable {
    pub thresholds: Vec<f64>,
    pub map: Vec<f64>,
    pub avg: f64,
}

/// Mean over categories with ground truth of AP, at each threshold.
pub fn map_table(
    detections: &[Tagged<'_>],
    ground_truth: &[Tagged<'_>],
    thresholds: &[f64],
    num_categories: usize,
) -> MapTable {
    let map: Vec<f64> = thresholds
        .iter()
        .map(|&th| {
            let aps: Vec<f64> = match_and_ap(detections, ground_truth, th, num_categories)
                .into_iter()
                .flatten()
                .collect();
            if aps.is_empty() {
                0.0
            } else {
                aps.iter().sum::<f64>() / aps.len() as f64
            }
        })
        .collect();
    let avg = if map.is_empty() {
        0.0
    } else {
        map.iter().sum::<f64>() / map.len() as f64
    };
    MapTable {
        thresholds: thresholds.to_vec(),
        map,
        avg,
    }
}

/// Labelled rows sharing one threshold list, rendered like the usual
/// `mAP@IoU(%) ... AVG` tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<(String, MapTable)>,
}

impl Report {
    pub fn single(label: impl Into<String>, table: MapTable) -> Self {
        Self {
            rows: vec![(label.into(), table)],
        }
    }

    pub fn push(&mut self, label: impl Into<String>, table: MapTable) {
        self.rows.push((label.into(), table));
    }

    fn thresholds(&self) -> &[f64] {
        self.rows.first().map_or(&[], |(_, t)| &t.thresholds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for th in self.thresholds() {
            let _ = write!(out, ",mAP@{th:.1}");
        }
        out.push_str(",AVG\n");
        for (label, t) in &self.rows {
            out.push_str(label);
            for v in &t.map {
                let _ = write!(out, ",{:.2}", v * 100.0);
            }
            let _ = writeln!(out, ",{:.2}", t.avg * 100.0);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(l, _)| l.len())
            .max()
            .unwrap_or(0)
            .max(4);
        let mut out = format!("{:<width$} |", "");
        for th in self.thresholds() {
            let _ = write!(out, " {th:>5.1}");
        }
        out.push_str(" |   AVG\n");
        let rule = "-".repeat(out.trim_end().len());
        out.push_str(&rule);
        out.push('\n');
        for (label, t) in &self.rows {
            let _ = write!(out, "{label:<width$} |");
            for v in &t.map {
                let _ = write!(out, " {:>5.1}", v * 100.0);
            }
            let _ = writeln!(out, " | {:>5.1}", t.avg * 100.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: usize, end: usize, conf: f64) -> Segment {
        Segment::new(start, end, 0, conf).unwrap()
    }

    #[test]
    fn exact_single_detection() {
        let gt = [Tagged::new("v", seg(2, 8, 1.0))];
        let det = [Tagged::new("v", seg(2, 8, 0.7))];
        assert_eq!(average_precision(&det, &gt, 0.5), Some(1.0));
    }

    #[test]
    fn no_detections() {
        let gt = [Tagged::new("v", seg(2, 8, 1.0))];
        assert_eq!(average_precision(&[], &gt, 0.5), Some(0.0));
        assert_eq!(average_precision(&[], &[], 0.5), None);
    }

    #[test]
    fn tp_fp_tp_gives_five_sixths() {
        let gt = [Tagged::new("v", seg(0, 10, 1.0)), Tagged::new("v", seg(20, 30, 1.0))];
        let det = [
            Tagged::new("v", seg(0, 10, 0.9)),
            Tagged::new("v", seg(40, 50, 0.8)),
            Tagged::new("v", seg(20, 30, 0.7)),
        ];
        let ap = average_precision(&det, &gt, 0.5).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn duplicates_count_as_false_positives() {
        let gt = [Tagged::new("v", seg(0, 10, 1.0))];
        let det = [Tagged::new("v", seg(0, 10, 0.9)), Tagged::new("v", seg(0, 10, 0.8))];
        assert_eq!(average_precision(&det, &gt, 0.5), Some(1.0));
        let det = [Tagged::new("v", seg(0, 10, 0.8)), Tagged::new("v", seg(50, 60, 0.9))];
        assert_eq!(average_precision(&det, &gt, 0.5), Some(0.5));
    }

    #[test]
    fn matching_respects_video() {
        let gt = [Tagged::new("a", seg(0, 10, 1.0))];
        let det = [Tagged::new("b", seg(0, 10, 0.9))];
        assert_eq!(average_precision(&det, &gt, 0.5), Some(0.0));
    }

    #[test]
    fn perfect_and_half_shifted_tables() {
        let gt = [Tagged::new("v", seg(0, 10, 1.0))];
        let perfect = map_table(&gt, &gt, &Preset::Thumos.thresholds(), 1);
        assert!(perfect.map.iter().all(|&m| m == 1.0));
        assert_eq!(perfect.avg, 1.0);

        let shifted = [Tagged::new("v", seg(5, 15, 0.9))];
        let t = map_table(&shifted, &gt, &Preset::Gtea.thresholds(), 1);
        for (th, m) in t.thresholds.iter().zip(&t.map) {
            let expected = if *th <= 1.0 / 3.0 { 1.0 } else { 0.0 };
            assert_eq!(*m, expected, "threshold {th}");
        }
    }

    #[test]
    fn categories_without_gt_are_excluded() {
        let gt = [Tagged::new("v", seg(0, 10, 1.0))];
        let mut stray = seg(20, 30, 0.5);
        stray.category = 1;
        let det = [Tagged::new("v", seg(0, 10, 0.9)), Tagged::new("v", stray)];
        let aps = match_and_ap(&det, &gt, 0.5, 2);
        assert_eq!(aps, vec![Some(1.0), None]);
        assert_eq!(map_table(&det, &gt, &[0.5], 2).avg, 1.0);
    }

    #[test]
    fn presets() {
        assert_eq!(Preset::Thumos.thresholds(), vec![0.3, 0.4, 0.5, 0.6, 0.7]);
        assert_eq!(Preset::Gtea.thresholds().len(), 7);
    }

    #[test]
    fn report_rendering() {
        let table = MapTable {
            thresholds: vec![0.3, 0.5],
            map: vec![0.5, 0.25],
            avg: 0.375,
        };
        let r = Report::single("full", table);
        assert_eq!(r.to_csv(), "row,mAP@0.3,mAP@0.5,AVG\nfull,50.00,25.00,37.50\n");
        assert!(r.to_text().contains(" 37.5"));
    }
}
