//! Ordered prototype alignment.
//!
//! A video is cut into one undetermined region per annotated point, separated
//! by background regions. Each undetermined region is aligned against an
//! ordered prototype sequence `[background, sub-action.., background]` with a
//! rigid DTW in which every snippet maps to exactly one prototype and the
//! prototype index never decreases. The alignment yields both a distance
//! `phi` and per-snippet pseudo labels.

use std::ops::Range;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::spc::MemoryBank;
use crate::types::{PointAnnotation, PseudoLabel, PseudoLabelSeq, Segment, Tcas};

/// `1 - cos(a, b)`; a zero-norm operand counts as similarity 0.
pub fn cosine_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    1.0 - cosine_similarity(a, b)
}

pub fn cosine_similarity(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

/// Undetermined and background spans of one video.
///
/// `background[n]` precedes `undetermined[n]`, `background[n + 1]` follows it.
/// Background spans may be empty when two points sit in adjacent snippets or
/// a point sits at a video end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionPartition {
    pub undetermined: Vec<Range<usize>>,
    pub background: Vec<Range<usize>>,
}

impl RegionPartition {
    pub fn len(&self) -> usize {
        self.undetermined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.undetermined.is_empty()
    }
}

/// Picks the boundary snippet of a gap: the background peak if it clears
/// `theta_b`, the gap centre otherwise.
fn gap_boundary(bkg: ArrayView1<'_, f64>, gap: Range<usize>, theta_b: f64) -> Option<usize> {
    if gap.is_empty() {
        return None;
    }
    let (mut best, mut best_score) = (gap.start, f64::NEG_INFINITY);
    for t in gap.clone() {
        if bkg[t] > best_score {
            best = t;
            best_score = bkg[t];
        }
    }
    if best_score > theta_b {
        Some(best)
    } else {
        Some(gap.start + (gap.end - gap.start - 1) / 2)
    }
}

/// Splits `[0, len)` around sorted `points` using the background column of `tcas`.
///
/// Each inner background span is the single boundary snippet of its gap.
pub fn partition(
    len: usize,
    points: &[PointAnnotation],
    tcas: &Tcas,
    theta_b: f64,
) -> Result<RegionPartition> {
    split(len, points, tcas, theta_b, false)
}

/// Like [`partition`], but every boundary snippet above `theta_b` is grown
/// over the neighbouring snippets of its gap whose background score also
/// clears `theta_b`. Used to pool background prototypes.
pub fn background_support(
    len: usize,
    points: &[PointAnnotation],
    tcas: &Tcas,
    theta_b: f64,
) -> Result<RegionPartition> {
    split(len, points, tcas, theta_b, true)
}

fn split(
    len: usize,
    points: &[PointAnnotation],
    tcas: &Tcas,
    theta_b: f64,
    grow: bool,
) -> Result<RegionPartition> {
    if tcas.len() != len {
        return Err(Error::Shape(format!(
            "TCAS has {} snippets, video has {len}",
            tcas.len()
        )));
    }
    crate::types::validate_points(points, len)?;
    let bkg = tcas.background();
    let n = points.len();
    let mut background = Vec::with_capacity(n + 1);
    for g in 0..=n {
        let lo = if g == 0 { 0 } else { points[g - 1].t + 1 };
        let hi = if g == n { len } else { points[g].t };
        let span = match gap_boundary(bkg, lo..hi, theta_b) {
            None => lo..lo,
            Some(b) => {
                let (mut a, mut z) = (b, b + 1);
                if grow && bkg[b] > theta_b {
                    while a > lo && bkg[a - 1] > theta_b {
                        a -= 1;
                    }
                    while z < hi && bkg[z] > theta_b {
                        z += 1;
                    }
                }
                if g == 0 {
                    a = 0;
                }
                if g == n {
                    z = len;
                }
                a..z
            }
        };
        background.push(span);
    }
    let undetermined = (0..n)
        .map(|i| background[i].end..background[i + 1].start)
        .collect();
    Ok(RegionPartition {
        undetermined,
        background,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemKind {
    Background,
    SubAction,
}

/// `[background, sub-action.., background]` prototypes for one region.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedPrototypeSeq {
    pub items: Vec<(Array1<f64>, ItemKind)>,
    pub category: usize,
}

impl OrderedPrototypeSeq {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Drops interior prototypes from the rear until at most `m` items remain
    /// (never below three).
    pub fn truncate_to(&mut self, m: usize) {
        while self.items.len() > m.max(3) {
            let last_interior = self.items.len() - 2;
            self.items.remove(last_interior);
        }
    }
}

/// Bank prototypes most similar to each proposal snippet, consecutive repeats
/// collapsed. Returns bank indices.
pub fn select_prototype_indices(
    proposal: ArrayView2<'_, f64>,
    bank: &MemoryBank,
    category: usize,
) -> Result<Vec<usize>> {
    let protos: Vec<ArrayView1<'_, f64>> = bank
        .prototypes(category)
        .map(|p| ArrayView1::from(&p.vector[..]))
        .collect();
    if protos.is_empty() {
        return Err(Error::BankEmpty(category));
    }
    let mut picked: Vec<usize> = Vec::new();
    for row in proposal.rows() {
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (k, p) in protos.iter().enumerate() {
            let sim = cosine_similarity(row, *p);
            if sim > best_sim {
                best = k;
                best_sim = sim;
            }
        }
        if picked.last() != Some(&best) {
            picked.push(best);
        }
    }
    Ok(picked)
}

pub fn select_prototype_sequence(
    proposal: ArrayView2<'_, f64>,
    bank: &MemoryBank,
    category: usize,
) -> Result<Vec<Array1<f64>>> {
    let idx = select_prototype_indices(proposal, bank, category)?;
    let all: Vec<&[f64]> = bank.prototypes(category).map(|p| &p.vector[..]).collect();
    Ok(idx.into_iter().map(|i| Array1::from(all[i].to_vec())).collect())
}

/// Mean of the rows in `span`, `None` if the span is empty.
pub fn span_mean(x: ArrayView2<'_, f64>, span: &Range<usize>) -> Option<Array1<f64>> {
    if span.is_empty() {
        return None;
    }
    x.slice(ndarray::s![span.clone(), ..]).mean_axis(Axis(0))
}

/// Mean over every background snippet of the video; the whole-video mean if
/// there are none.
pub fn global_background(x: ArrayView2<'_, f64>, partition: &RegionPartition) -> Array1<f64> {
    let mut sum = Array1::zeros(x.ncols());
    let mut count = 0usize;
    for span in &partition.background {
        for t in span.clone() {
            sum += &x.row(t);
            count += 1;
        }
    }
    if count == 0 {
        return x.mean_axis(Axis(0)).expect("non-empty video");
    }
    sum / count as f64
}

/// Wraps sub-action prototypes with the two adjacent background prototypes.
pub fn build_ordered(
    sub_actions: Vec<Array1<f64>>,
    left: Option<Array1<f64>>,
    right: Option<Array1<f64>>,
    fallback: &Array1<f64>,
    category: usize,
) -> OrderedPrototypeSeq {
    let mut items = Vec::with_capacity(sub_actions.len() + 2);
    items.push((left.unwrap_or_else(|| fallback.clone()), ItemKind::Background));
    items.extend(sub_actions.into_iter().map(|v| (v, ItemKind::SubAction)));
    items.push((right.unwrap_or_else(|| fallback.clone()), ItemKind::Background));
    OrderedPrototypeSeq { items, category }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    /// Prototype index for each region snippet.
    pub path: Vec<usize>,
    pub phi: f64,
}

/// `K x M` cosine-distance cost between prototypes and snippets.
pub fn cost_matrix(protos: &[ArrayView1<'_, f64>], x: ArrayView2<'_, f64>) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_fn((protos.len(), x.nrows()), |(i, j)| {
        cosine_distance(protos[i], x.row(j))
    })
}

/// Rigid DTW over a precomputed `K x M` cost matrix.
///
/// `S(0,0) = c(0,0)`, `S(0,j) = c(0,j) + S(0,j-1)`, `S(i,0) = inf` for `i > 0`,
/// `S(i,j) = c(i,j) + min(S(i,j-1), S(i-1,j-1))`. Backtrace prefers the
/// diagonal move on ties.
pub fn dtw_from_costs(cost: ArrayView2<'_, f64>) -> Result<AlignmentResult> {
    let (k, m) = cost.dim();
    if k == 0 || m < k {
        return Err(Error::Shape(format!(
            "cannot align {k} prototypes to {m} snippets"
        )));
    }
    let mut s = ndarray::Array2::from_elem((k, m), f64::INFINITY);
    s[[0, 0]] = cost[[0, 0]];
    for j in 1..m {
        s[[0, j]] = cost[[0, j]] + s[[0, j - 1]];
        // prototype i needs at least i earlier snippets and K-1-i later ones
        let hi = j.min(k - 1);
        let lo = (k - 1).saturating_sub(m - 1 - j).max(1);
        for i in lo..=hi {
            s[[i, j]] = cost[[i, j]] + s[[i, j - 1]].min(s[[i - 1, j - 1]]);
        }
    }
    let phi = s[[k - 1, m - 1]];
    let mut path = vec![0; m];
    let mut i = k - 1;
    for j in (0..m).rev() {
        path[j] = i;
        if j == 0 {
            break;
        }
        if i > 0 && s[[i - 1, j - 1]] <= s[[i, j - 1]] {
            i -= 1;
        }
    }
    debug_assert_eq!(i, 0);
    Ok(AlignmentResult { path, phi })
}

/// Aligns an ordered prototype sequence to region features `x` (`M x D`).
pub fn constrained_dtw(
    seq: &OrderedPrototypeSeq,
    x: ArrayView2<'_, f64>,
) -> Result<AlignmentResult> {
    let protos: Vec<ArrayView1<'_, f64>> = seq.items.iter().map(|(v, _)| v.view()).collect();
    dtw_from_costs(cost_matrix(&protos, x).view())
}

/// How one undetermined region was handled.
#[derive(Clone, Debug, PartialEq)]
pub enum RegionOutcome {
    Aligned {
        result: AlignmentResult,
        /// Sequence length actually aligned (after truncation).
        k: usize,
    },
    /// Region shorter than three snippets: labelled positive wholesale.
    TooShort,
    /// No usable prototypes: left unlabelled apart from the point.
    Skipped,
}

/// Truncates `seq` to fit the region and aligns it.
pub fn align_region(mut seq: OrderedPrototypeSeq, x: ArrayView2<'_, f64>) -> Result<RegionOutcome> {
    let m = x.nrows();
    if m < 3 {
        return Ok(RegionOutcome::TooShort);
    }
    seq.truncate_to(m);
    let k = seq.len();
    let result = constrained_dtw(&seq, x)?;
    Ok(RegionOutcome::Aligned { result, k })
}

/// Turns per-region outcomes into per-snippet labels.
///
/// Background regions are negative. Inside an aligned region, snippets on the
/// first or last prototype are negative and the rest positive. The annotated
/// point is always positive.
pub fn emit_pseudo_labels(
    outcomes: &[RegionOutcome],
    partition: &RegionPartition,
    points: &[PointAnnotation],
    len: usize,
) -> Result<PseudoLabelSeq> {
    if outcomes.len() != partition.len() || points.len() != partition.len() {
        return Err(Error::Shape(format!(
            "{} outcomes for {} regions and {} points",
            outcomes.len(),
            partition.len(),
            points.len()
        )));
    }
    let mut labels = vec![PseudoLabel::Negative; len];
    for ((outcome, span), point) in outcomes.iter().zip(&partition.undetermined).zip(points) {
        let c = point.category;
        match outcome {
            RegionOutcome::Aligned { result, k } => {
                if result.path.len() != span.len() {
                    return Err(Error::Shape(format!(
                        "path of {} snippets for a region of {}",
                        result.path.len(),
                        span.len()
                    )));
                }
                for (t, &p) in span.clone().zip(&result.path) {
                    labels[t] = if p == 0 || p + 1 == *k {
                        PseudoLabel::Negative
                    } else {
                        PseudoLabel::Positive(c)
                    };
                }
            }
            RegionOutcome::TooShort => {
                for t in span.clone() {
                    labels[t] = PseudoLabel::Positive(c);
                }
            }
            RegionOutcome::Skipped => {
                for t in span.clone() {
                    labels[t] = PseudoLabel::Unlabeled;
                }
            }
        }
        labels[point.t] = PseudoLabel::Positive(c);
    }
    Ok(PseudoLabelSeq(labels))
}

/// Labels from proposals alone: inside each region, the selected proposal is
/// positive and everything else negative.
pub fn proposal_pseudo_labels(
    proposals: &[Segment],
    partition: &RegionPartition,
    points: &[PointAnnotation],
    len: usize,
) -> PseudoLabelSeq {
    let mut labels = vec![PseudoLabel::Negative; len];
    for ((prop, span), point) in proposals.iter().zip(&partition.undetermined).zip(points) {
        let lo = prop.start.max(span.start);
        let hi = prop.end.min(span.end);
        for label in labels.iter_mut().take(hi).skip(lo) {
            *label = PseudoLabel::Positive(point.category);
        }
        labels[point.t] = PseudoLabel::Positive(point.category);
    }
    PseudoLabelSeq(labels)
}

/// Distance of region `x` to each category's ordered sequence.
///
/// Returns `(category, phi)` for every sequence that could be aligned.
pub fn opa_distance_matrix(
    x: ArrayView2<'_, f64>,
    sequences: &[OrderedPrototypeSeq],
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(sequences.len());
    for seq in sequences {
        if let RegionOutcome::Aligned { result, .. } = align_region(seq.clone(), x)? {
            out.push((seq.category, result.phi));
        }
    }
    Ok(out)
}
