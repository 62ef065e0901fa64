//! Training objectives and their gradients with respect to the TCAS or the
//! fused embedding.
//!
//! Probabilities are clamped to `[EPS, 1 - EPS]` before any logarithm; a
//! clamped value contributes no gradient.

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::opa::{constrained_dtw, OrderedPrototypeSeq};
use crate::types::{PointAnnotation, PseudoLabel, PseudoLabelSeq};

pub const EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_video: f64,
    pub lambda_point: f64,
    pub lambda_opa: f64,
    pub lambda_pl: f64,
    /// Fraction of snippets averaged by top-k pooling.
    pub k_ratio: f64,
    /// Background score a pseudo background point must exceed.
    pub theta_b: f64,
    pub focal_gamma: f64,
    /// Temperature of the alignment contrast.
    pub tau: f64,
    /// Also supervise the background channel toward zero at action points.
    #[serde(default)]
    pub point_suppress_background: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_video: 1.0,
            lambda_point: 1.0,
            lambda_opa: 1.5,
            lambda_pl: 1.0,
            k_ratio: 1.0 / 8.0,
            theta_b: 0.5,
            focal_gamma: 2.0,
            tau: 0.1,
            point_suppress_background: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.lambda_video,
            self.lambda_point,
            self.lambda_opa,
            self.lambda_pl,
            self.theta_b,
            self.focal_gamma,
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(crate::Error::Validation(
                "loss weights, theta_b and focal_gamma must be finite and >= 0".into(),
            ));
        }
        if !(self.k_ratio > 0.0 && self.k_ratio <= 1.0) {
            return Err(crate::Error::Validation(format!(
                "k_ratio must lie in (0, 1], got {}",
                self.k_ratio
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(crate::Error::Validation(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// A loss value with its gradient.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

impl LossGrad {
    pub fn zero(dim: (usize, usize)) -> Self {
        Self {
            value: 0.0,
            grad: Array2::zeros(dim),
        }
    }
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < EPS {
        (EPS, true)
    } else if p > 1.0 - EPS {
        (1.0 - EPS, true)
    } else {
        (p, false)
    }
}

/// Focal term `-(1 - p)^g ln p` pulling `p` toward 1, and its derivative.
pub fn focal(p: f64, gamma: f64) -> (f64, f64) {
    let (q, clamped) = clamp_prob(p);
    let ln_q = q.ln();
    let one_minus = 1.0 - q;
    let value = -one_minus.powf(gamma) * ln_q;
    if clamped {
        return (value, 0.0);
    }
    let d_weight = if gamma == 0.0 {
        0.0
    } else {
        gamma * one_minus.powf(gamma - 1.0) * ln_q
    };
    (value, d_weight - one_minus.powf(gamma) / q)
}

/// Focal term pulling `p` toward 0.
fn focal_toward_zero(p: f64, gamma: f64) -> (f64, f64) {
    let (v, d) = focal(1.0 - p, gamma);
    (v, -d)
}

/// Indices of the `k` largest entries, ties to the lower index.
pub fn top_k_indices(col: ArrayView1<'_, f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..col.len()).collect();
    idx.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `max(1, floor(k_ratio * T))`, capped at `T`.
pub fn top_k_count(len: usize, k_ratio: f64) -> usize {
    ((k_ratio * len as f64).floor() as usize).clamp(1, len.max(1))
}

/// Top-k pooled video-level binary cross-entropy over all `C + 1` channels.
///
/// The background channel and every category in `present` have target 1.
pub fn video_loss(tcas: ArrayView2<'_, f64>, present: &[usize], k_ratio: f64) -> LossGrad {
    let (t, channels) = tcas.dim();
    let bkg = channels - 1;
    let k = top_k_count(t, k_ratio);
    let mut out = LossGrad::zero(tcas.dim());
    for c in 0..channels {
        let idx = top_k_indices(tcas.column(c), k);
        let v = idx.iter().map(|&i| tcas[[i, c]]).sum::<f64>() / k as f64;
        let target = c == bkg || present.contains(&c);
        let (q, clamped) = clamp_prob(v);
        let (value, deriv) = if target {
            (-q.ln(), -1.0 / q)
        } else {
            (-(1.0 - q).ln(), 1.0 / (1.0 - q))
        };
        out.value += value / channels as f64;
        if !clamped {
            let g = deriv / channels as f64 / k as f64;
            for &i in &idx {
                out.grad[[i, c]] += g;
            }
        }
    }
    out
}

/// Gaps between consecutive points plus the two outer gaps, as snippet ranges.
pub fn point_gaps(points: &[PointAnnotation], len: usize) -> Vec<Range<usize>> {
    (0..=points.len())
        .map(|g| {
            let lo = if g == 0 { 0 } else { points[g - 1].t + 1 };
            let hi = if g == points.len() { len } else { points[g].t };
            lo..hi.max(lo)
        })
        .collect()
}

/// Background peak of each gap whose score exceeds `theta_b`.
pub fn mine_bkg_points(tcas: ArrayView2<'_, f64>, points: &[PointAnnotation], theta_b: f64) -> Vec<usize> {
    let bkg = tcas.column(tcas.ncols() - 1);
    point_gaps(points, tcas.nrows())
        .into_iter()
        .filter_map(|gap| {
            let mut best: Option<usize> = None;
            for t in gap {
                if best.is_none_or(|b| bkg[t] > bkg[b]) {
                    best = Some(t);
                }
            }
            best.filter(|&b| bkg[b] > theta_b)
        })
        .collect()
}

/// Mean focal loss over action points (their category channel) and
/// background points (the background channel).
pub fn point_loss(
    tcas: ArrayView2<'_, f64>,
    points: &[PointAnnotation],
    bkg_points: &[usize],
    focal_gamma: f64,
) -> LossGrad {
    point_loss_with(tcas, points, bkg_points, focal_gamma, false)
}

/// [`point_loss`], optionally also pulling the background channel toward
/// zero at every action point.
pub fn point_loss_with(
    tcas: ArrayView2<'_, f64>,
    points: &[PointAnnotation],
    bkg_points: &[usize],
    focal_gamma: f64,
    suppress_background: bool,
) -> LossGrad {
    let bkg = tcas.ncols() - 1;
    let mut out = LossGrad::zero(tcas.dim());
    let n = points.len() + bkg_points.len();
    if n == 0 {
        return out;
    }
    let targets = points
        .iter()
        .map(|p| (p.t, p.category))
        .chain(bkg_points.iter().map(|&t| (t, bkg)));
    for (t, c) in targets {
        let (v, d) = focal(tcas[[t, c]], focal_gamma);
        out.value += v / n as f64;
        out.grad[[t, c]] += d / n as f64;
    }
    if suppress_background {
        for p in points {
            let (v, d) = focal_toward_zero(tcas[[p.t, bkg]], focal_gamma);
            out.value += v / n as f64;
            out.grad[[p.t, bkg]] += d / n as f64;
        }
    }
    out
}

/// Mean focal supervision from pseudo labels. Positive snippets pull their
/// category up and background down; negative snippets pull background up.
pub fn pl_loss(tcas: ArrayView2<'_, f64>, labels: &PseudoLabelSeq, focal_gamma: f64) -> LossGrad {
    let bkg = tcas.ncols() - 1;
    let mut out = LossGrad::zero(tcas.dim());
    let n = labels
        .labels()
        .iter()
        .filter(|l| !matches!(l, PseudoLabel::Unlabeled))
        .count();
    if n == 0 {
        return out;
    }
    let scale = 1.0 / n as f64;
    for (t, label) in labels.labels().iter().enumerate() {
        match *label {
            PseudoLabel::Positive(c) => {
                let (v1, d1) = focal(tcas[[t, c]], focal_gamma);
                let (v2, d2) = focal_toward_zero(tcas[[t, bkg]], focal_gamma);
                out.value += (v1 + v2) * scale;
                out.grad[[t, c]] += d1 * scale;
                out.grad[[t, bkg]] += d2 * scale;
            }
            PseudoLabel::Negative => {
                let (v, d) = focal(tcas[[t, bkg]], focal_gamma);
                out.value += v * scale;
                out.grad[[t, bkg]] += d * scale;
            }
            PseudoLabel::Unlabeled => {}
        }
    }
    out
}

/// `-log softmax(-phi / tau)` at `true_category`, with `d loss / d phi`.
///
/// `None` when the true category has no distance (undefined region).
pub fn opa_region_loss(phis: &[(usize, f64)], true_category: usize, tau: f64) -> Option<(f64, Vec<f64>)> {
    let true_idx = phis.iter().position(|&(c, _)| c == true_category)?;
    let logits: Vec<f64> = phis.iter().map(|&(_, phi)| -phi / tau).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    let value = log_z - logits[true_idx];
    let grad = logits
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let softmax = (l - log_z).exp();
            (f64::from(u8::from(i == true_idx)) - softmax) / tau
        })
        .collect();
    Some((value, grad))
}

/// Mean per-region alignment contrast; regions without a defined distance
/// for their true category are skipped.
pub fn opa_loss(regions: &[(Vec<(usize, f64)>, usize)], tau: f64) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (phis, truth) in regions {
        match opa_region_loss(phis, *truth, tau) {
            Some((v, _)) => {
                total += v;
                n += 1;
            }
            None => log::debug!("skipping region without a distance for category {truth}"),
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Everything needed to evaluate the alignment contrast of one region.
///
/// The prototype sequences are constants; only the region embedding receives
/// gradient.
#[derive(Clone, Debug)]
pub struct RegionPlan {
    pub span: Range<usize>,
    pub category: usize,
    /// One sequence per category with a non-empty bank.
    pub sequences: Vec<OrderedPrototypeSeq>,
}

/// Gradient of `1 - cos(p, x)` with respect to `x`, added into `out` scaled by `scale`.
fn add_cosine_distance_grad(
    p: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
    scale: f64,
    mut out: ndarray::ArrayViewMut1<'_, f64>,
) {
    let np = p.dot(&p).sqrt();
    let nx2 = x.dot(&x);
    let nx = nx2.sqrt();
    if np == 0.0 || nx == 0.0 {
        return;
    }
    let dot = p.dot(&x);
    let a = -scale / (np * nx);
    let b = scale * dot / (np * nx * nx2);
    out.scaled_add(a, &p);
    out.scaled_add(b, &x);
}

/// Region loss, each aligned sequence with its path and d(loss)/d(phi), and the span.
type Contribution = (f64, Vec<(OrderedPrototypeSeq, Vec<usize>, f64)>, Range<usize>);

/// Alignment contrast over a video's regions with its gradient with respect
/// to the fused embedding.
pub fn opa_loss_embedding(embedding: ArrayView2<'_, f64>, plans: &[RegionPlan], tau: f64) -> LossGrad {
    let mut out = LossGrad::zero(embedding.dim());
    let mut contributions: Vec<Contribution> = Vec::new();
    for plan in plans {
        let x = embedding.slice(ndarray::s![plan.span.clone(), ..]);
        if x.nrows() < 3 {
            continue;
        }
        let mut aligned = Vec::with_capacity(plan.sequences.len());
        let mut phis = Vec::with_capacity(plan.sequences.len());
        for seq in &plan.sequences {
            let mut seq = seq.clone();
            seq.truncate_to(x.nrows());
            let r = constrained_dtw(&seq, x).expect("sequence truncated to fit region");
            phis.push((seq.category, r.phi));
            aligned.push((seq, r.path));
        }
        let Some((value, dphi)) = opa_region_loss(&phis, plan.category, tau) else {
            log::debug!("region {:?} has no distance for its category", plan.span);
            continue;
        };
        contributions.push((
            value,
            aligned
                .into_iter()
                .zip(dphi)
                .map(|((s, p), d)| (s, p, d))
                .collect(),
            plan.span.clone(),
        ));
    }
    let n = contributions.len();
    if n == 0 {
        return out;
    }
    for (value, per_seq, span) in contributions {
        out.value += value / n as f64;
        for (seq, path, dphi) in per_seq {
            let scale = dphi / n as f64;
            if scale == 0.0 {
                continue;
            }
            for (j, &i) in path.iter().enumerate() {
                let t = span.start + j;
                add_cosine_distance_grad(
                    seq.items[i].0.view(),
                    embedding.row(t),
                    scale,
                    out.grad.row_mut(t),
                );
            }
        }
    }
    out
}

/// Values of the four loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub video: f64,
    pub point: f64,
    pub opa: f64,
    pub pl: f64,
}

/// `l1 * video + l2 * point + l3 * opa + l4 * pl`.
pub fn total_loss(c: &LossComponents, cfg: &LossConfig) -> f64 {
    cfg.lambda_video * c.video
        + cfg.lambda_point * c.point
        + cfg.lambda_opa * c.opa
        + cfg.lambda_pl * c.pl
}
