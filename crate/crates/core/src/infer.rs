//! Test-time localization: multi-threshold proposals on the TCAS,
//! outer-inner-contrast scoring, and per-category NMS.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::types::{tiou, Segment};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub thresholds: Vec<f64>,
    pub nms_iou: f64,
    /// Outer margin length as a fraction of the proposal length.
    pub margin_ratio: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            thresholds: (1..=9).map(|i| i as f64 / 10.0).collect(),
            nms_iou: 0.5,
            margin_ratio: 0.25,
        }
    }
}

/// Maximal runs with score `>= theta` for every action category and
/// threshold. Identical spans of one category appear once.
pub fn threshold_proposals(tcas: ArrayView2<'_, f64>, thresholds: &[f64]) -> Vec<Segment> {
    let (t_len, channels) = tcas.dim();
    let mut spans: BTreeMap<(usize, usize, usize), ()> = BTreeMap::new();
    for c in 0..channels.saturating_sub(1) {
        let col = tcas.column(c);
        for &theta in thresholds {
            let mut t = 0;
            while t < t_len {
                if col[t] >= theta {
                    let start = t;
                    while t < t_len && col[t] >= theta {
                        t += 1;
                    }
                    spans.insert((c, start, t), ());
                } else {
                    t += 1;
                }
            }
        }
    }
    spans
        .into_keys()
        .map(|(category, start, end)| Segment {
            start,
            end,
            category,
            confidence: 0.0,
        })
        .collect()
}

/// Mean inner score minus mean score over the flanking margins.
pub fn oic_score(p: &Segment, tcas: ArrayView2<'_, f64>, margin_ratio: f64) -> f64 {
    let col = tcas.column(p.category);
    let len = p.end - p.start;
    let inner = (p.start..p.end).map(|t| col[t]).sum::<f64>() / len as f64;
    let margin = ((len as f64 * margin_ratio).floor() as usize).max(1);
    let left = p.start.saturating_sub(margin)..p.start;
    let right = p.end..(p.end + margin).min(col.len());
    let outer_n = left.len() + right.len();
    let outer = if outer_n == 0 {
        0.0
    } else {
        left.chain(right).map(|t| col[t]).sum::<f64>() / outer_n as f64
    };
    inner - outer
}

fn confidence_order(a: &Segment, b: &Segment) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.start.cmp(&b.start))
        .then(a.end.cmp(&b.end))
}

/// Greedy per-category suppression of proposals overlapping a kept one by
/// more than `iou_thresh`.
pub fn nms(proposals: &[Segment], iou_thresh: f64) -> Vec<Segment> {
    let mut by_cat: BTreeMap<usize, Vec<Segment>> = BTreeMap::new();
    for p in proposals {
        by_cat.entry(p.category).or_default().push(*p);
    }
    let mut kept = Vec::new();
    for (_, mut list) in by_cat {
        list.sort_by(confidence_order);
        let mut chosen: Vec<Segment> = Vec::new();
        for p in list {
            if chosen.iter().all(|k| tiou(k, &p) <= iou_thresh) {
                chosen.push(p);
            }
        }
        kept.extend(chosen);
    }
    kept.sort_by(confidence_order);
    kept
}

/// Scored proposals before NMS.
pub fn scored_proposals(tcas: ArrayView2<'_, f64>, cfg: &InferConfig) -> Vec<Segment> {
    let mut props = threshold_proposals(tcas, &cfg.thresholds);
    for p in &mut props {
        p.confidence = oic_score(p, tcas, cfg.margin_ratio);
    }
    props
}

/// Full localization of one TCAS.
pub fn localize(tcas: ArrayView2<'_, f64>, cfg: &InferConfig) -> Vec<Segment> {
    nms(&scored_proposals(tcas, cfg), cfg.nms_iou)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tcas_from(col: &[f64]) -> Array2<f64> {
        let mut a = Array2::zeros((col.len(), 2));
        for (t, &v) in col.iter().enumerate() {
            a[[t, 0]] = v;
        }
        a
    }

    fn spans(props: &[Segment]) -> Vec<(usize, usize)> {
        props.iter().map(|p| (p.start, p.end)).collect()
    }

    #[test]
    fn single_run() {
        let a = tcas_from(&[0.2, 0.8, 0.9, 0.1]);
        assert_eq!(spans(&threshold_proposals(a.view(), &[0.5])), vec![(1, 3)]);
    }

    #[test]
    fn nothing_above_threshold() {
        let a = tcas_from(&[0.2, 0.1]);
        assert!(threshold_proposals(a.view(), &[0.5, 0.9]).is_empty());
    }

    #[test]
    fn nested_runs_across_thresholds() {
        let a = tcas_from(&[0.4, 0.8, 0.8, 0.4]);
        let mut s = spans(&threshold_proposals(a.view(), &[0.3, 0.7]));
        s.sort();
        assert_eq!(s, vec![(0, 4), (1, 3)]);
    }

    #[test]
    fn duplicate_spans_merged() {
        let a = tcas_from(&[0.1, 0.9, 0.9, 0.1]);
        assert_eq!(threshold_proposals(a.view(), &[0.3, 0.5, 0.7]).len(), 1);
    }

    #[test]
    fn oic_examples() {
        let a = tcas_from(&[0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let p = Segment::new(1, 5, 0, 0.0).unwrap();
        assert_eq!(oic_score(&p, a.view(), 0.25), 1.0);

        let flat = tcas_from(&[0.4; 6]);
        assert!(oic_score(&p, flat.view(), 0.25).abs() < 1e-15);

        let hand = tcas_from(&[0.2, 0.8, 0.8, 0.4]);
        let q = Segment::new(1, 3, 0, 0.0).unwrap();
        assert!((oic_score(&q, hand.view(), 0.25) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oic_with_no_margin_room() {
        let a = tcas_from(&[0.6, 0.6]);
        let p = Segment::new(0, 2, 0, 0.0).unwrap();
        assert_eq!(oic_score(&p, a.view(), 0.25), 0.6);
    }

    #[test]
    fn nms_examples() {
        let s = |a, b, c| Segment::new(a, b, 0, c).unwrap();
        let kept = nms(&[s(0, 10, 0.8), s(0, 10, 0.9)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);

        let kept = nms(&[s(0, 5, 0.3), s(10, 15, 0.4)], 0.5);
        assert_eq!(kept.len(), 2);

        // A overlaps B, B overlaps C, A and C disjoint
        let a = s(0, 10, 0.9);
        let b = s(5, 15, 0.8);
        let c = s(10, 20, 0.7);
        assert!(tiou(&a, &b) > 0.3 && tiou(&b, &c) > 0.3 && tiou(&a, &c) == 0.0);
        let kept = nms(&[c, b, a], 0.3);
        assert_eq!(spans(&kept), vec![(0, 10), (10, 20)]);
    }

    #[test]
    fn nms_is_per_category() {
        let p = Segment::new(0, 10, 0, 0.9).unwrap();
        let q = Segment::new(0, 10, 1, 0.8).unwrap();
        assert_eq!(nms(&[p, q], 0.5).len(), 2);
    }
}
