//! Sub-action prototype clustering and the per-category memory bank.
//!
//! A representative proposal is summarised by a handful of prototypes, each a
//! feature vector plus a temporal position normalised to `[0, 1]` within the
//! proposal. Prototypes start as means of equal contiguous segments and are
//! refined by repeated similarity-weighted averaging, where similarity mixes
//! feature distance and temporal distance.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Segment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpcConfig {
    /// Average proposal snippets per initial prototype.
    pub r_p: usize,
    /// Upper bound on the prototype count.
    pub n_max: usize,
    /// Weight of the temporal term in the distance.
    pub gamma: f64,
    /// Number of refinement iterations.
    pub iterations: usize,
    #[serde(default)]
    pub criterion: CountCriterion,
    #[serde(default)]
    pub mode: PrototypeMode,
}

impl Default for SpcConfig {
    fn default() -> Self {
        Self {
            r_p: 5,
            n_max: 5,
            gamma: 3.0,
            iterations: 6,
            criterion: CountCriterion::Adaptive,
            mode: PrototypeMode::Clustered,
        }
    }
}

impl SpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_p == 0 || self.n_max == 0 {
            return Err(Error::Validation("r_p and n_max must be >= 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Prototype count for a proposal of `n_p` snippets under the configured criterion.
    pub fn count(&self, n_p: usize) -> usize {
        match self.criterion {
            CountCriterion::Adaptive => adaptive_count(n_p, self),
            CountCriterion::Fixed => fixed_count(n_p, self),
        }
    }
}

/// How many prototypes a proposal receives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountCriterion {
    /// Scales with proposal length, capped at `n_max`.
    #[default]
    Adaptive,
    /// Always `n_max` (or the proposal length if shorter).
    Fixed,
}

/// How prototype vectors are obtained from a proposal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrototypeMode {
    /// Iterative temporally-aware clustering.
    #[default]
    Clustered,
    /// The centre snippet of each initial segment, without clustering.
    Snippet,
}

/// `min(max(floor(n_p / r_p), 1), n_max)`.
pub fn adaptive_count(n_p: usize, cfg: &SpcConfig) -> usize {
    (n_p / cfg.r_p.max(1)).max(1).min(cfg.n_max)
}

pub fn fixed_count(n_p: usize, cfg: &SpcConfig) -> usize {
    cfg.n_max.min(n_p).max(1)
}

/// A prototype during clustering: vector plus normalised temporal position.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototype {
    pub vector: Array1<f64>,
    pub position: f64,
}

/// Normalised position of snippet `i` in a proposal of `n` snippets.
pub fn snippet_position(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// Lengths of `n_s` contiguous segments covering `n_p` snippets, remainder
/// spread from the front.
pub fn segment_lengths(n_p: usize, n_s: usize) -> Vec<usize> {
    let base = n_p / n_s;
    let rem = n_p % n_s;
    (0..n_s).map(|j| base + usize::from(j < rem)).collect()
}

/// Uniform initialisation: segment means at segment centres.
pub fn init_prototypes(x: ArrayView2<'_, f64>, n_s: usize) -> Result<Vec<Prototype>> {
    let n_p = x.nrows();
    if n_s == 0 || n_s > n_p {
        return Err(Error::Validation(format!(
            "cannot split a {n_p}-snippet proposal into {n_s} prototypes"
        )));
    }
    let mut start = 0;
    Ok(segment_lengths(n_p, n_s)
        .into_iter()
        .map(|len| {
            let block = x.slice(ndarray::s![start..start + len, ..]);
            let vector = block.mean_axis(Axis(0)).expect("non-empty segment");
            let position = (2 * start + len) as f64 / (2 * n_p) as f64;
            start += len;
            Prototype { vector, position }
        })
        .collect())
}

/// Centre snippets of the uniform segments, used for snippet-level prototypes.
pub fn snippet_prototypes(x: ArrayView2<'_, f64>, n_s: usize) -> Result<Vec<Prototype>> {
    let n_p = x.nrows();
    if n_s == 0 || n_s > n_p {
        return Err(Error::Validation(format!(
            "cannot pick {n_s} snippets from a {n_p}-snippet proposal"
        )));
    }
    let mut start = 0;
    Ok(segment_lengths(n_p, n_s)
        .into_iter()
        .map(|len| {
            let i = start + (len - 1) / 2;
            start += len;
            Prototype {
                vector: x.row(i).to_owned(),
                position: snippet_position(i, n_p),
            }
        })
        .collect())
}

/// `sqrt(d_f^2 + gamma * d_t^2)`.
pub fn distance(
    f: ArrayView1<'_, f64>,
    t: f64,
    s: ArrayView1<'_, f64>,
    u: f64,
    gamma: f64,
) -> f64 {
    let d_f2: f64 = f.iter().zip(s.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let d_t = t - u;
    (d_f2 + gamma * d_t * d_t).sqrt()
}

/// Result of clustering with the final-iteration association weights.
#[derive(Clone, Debug)]
pub struct ClusterTrace {
    pub prototypes: Vec<Prototype>,
    /// `N_p x N_s` normalised weights that produced each final prototype;
    /// `None` when no iteration ran.
    pub weights: Option<Array2<f64>>,
}

/// Refines `init` for `cfg.iterations` rounds of similarity-weighted averaging.
pub fn spc_cluster(x: ArrayView2<'_, f64>, init: &[Prototype], cfg: &SpcConfig) -> Vec<Prototype> {
    spc_cluster_traced(x, init, cfg).prototypes
}

pub fn spc_cluster_traced(
    x: ArrayView2<'_, f64>,
    init: &[Prototype],
    cfg: &SpcConfig,
) -> ClusterTrace {
    let n_p = x.nrows();
    let positions: Vec<f64> = (0..n_p).map(|i| snippet_position(i, n_p)).collect();
    let mut protos = init.to_vec();
    let mut weights = None;
    for _ in 0..cfg.iterations {
        let mut w = Array2::zeros((n_p, protos.len()));
        let mut next = Vec::with_capacity(protos.len());
        for (j, p) in protos.iter().enumerate() {
            let dist: Vec<f64> = (0..n_p)
                .map(|i| distance(x.row(i), positions[i], p.vector.view(), p.position, cfg.gamma))
                .collect();
            let assoc: Vec<f64> = dist.iter().map(|d| (-d).exp()).collect();
            let total: f64 = assoc.iter().sum();
            if total > 0.0 && total.is_finite() {
                let mut vector = Array1::zeros(x.ncols());
                let mut position = 0.0;
                for i in 0..n_p {
                    let a = assoc[i] / total;
                    w[[i, j]] = a;
                    vector.scaled_add(a, &x.row(i));
                    position += a * positions[i];
                }
                next.push(Prototype { vector, position });
            } else {
                // every weight underflowed: snap to the nearest snippet
                let nearest = dist
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                w[[nearest, j]] = 1.0;
                next.push(Prototype {
                    vector: x.row(nearest).to_owned(),
                    position: positions[nearest],
                });
            }
        }
        protos = next;
        weights = Some(w);
    }
    ClusterTrace {
        prototypes: protos,
        weights,
    }
}

/// Prototypes for one proposal, following the configured count and mode.
pub fn extract_prototypes(x: ArrayView2<'_, f64>, cfg: &SpcConfig) -> Result<Vec<Prototype>> {
    let n_s = cfg.count(x.nrows());
    match cfg.mode {
        PrototypeMode::Clustered => {
            let init = init_prototypes(x, n_s)?;
            Ok(spc_cluster(x, &init, cfg))
        }
        PrototypeMode::Snippet => snippet_prototypes(x, n_s),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubActionPrototype {
    pub vector: Vec<f64>,
    pub position: f64,
    pub category: usize,
    pub confidence: f64,
}

/// Prototypes harvested from a single proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
    pub prototypes: Vec<SubActionPrototype>,
}

/// Per-category store of the prototype sets from the `k_sub` most confident
/// representative proposals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    pub k_sub: usize,
    pub categories: Vec<Vec<PrototypeSet>>,
}

impl MemoryBank {
    pub fn empty(num_categories: usize, k_sub: usize) -> Self {
        Self {
            k_sub,
            categories: vec![Vec::new(); num_categories],
        }
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self, category: usize) -> bool {
        self.categories
            .get(category)
            .is_none_or(|sets| sets.iter().all(|s| s.prototypes.is_empty()))
    }

    /// All prototypes of `category` in bank order (set rank, then prototype index).
    pub fn prototypes(&self, category: usize) -> impl Iterator<Item = &SubActionPrototype> {
        self.categories
            .get(category)
            .into_iter()
            .flatten()
            .flat_map(|s| s.prototypes.iter())
    }
}

/// A scored proposal offered to the bank, with its embedding rows.
#[derive(Clone, Debug)]
pub struct Candidate<'a> {
    pub video_id: &'a str,
    pub proposal: Segment,
    pub features: ArrayView2<'a, f64>,
}

fn rank_order(a: &Candidate<'_>, b: &Candidate<'_>) -> std::cmp::Ordering {
    b.proposal
        .confidence
        .total_cmp(&a.proposal.confidence)
        .then_with(|| a.video_id.cmp(b.video_id))
        .then(a.proposal.start.cmp(&b.proposal.start))
        .then(a.proposal.end.cmp(&b.proposal.end))
}

/// Builds a fresh bank from `candidates`, keeping the `k_sub` most confident
/// proposals per category (ties by video id, then start).
pub fn harvest(
    candidates: &[Candidate<'_>],
    cfg: &SpcConfig,
    k_sub: usize,
    num_categories: usize,
) -> Result<MemoryBank> {
    cfg.validate()?;
    let mut bank = MemoryBank::empty(num_categories, k_sub);
    for (category, slot) in bank.categories.iter_mut().enumerate() {
        let mut pool: Vec<&Candidate<'_>> = candidates
            .iter()
            .filter(|c| c.proposal.category == category && c.features.nrows() > 0)
            .collect();
        pool.sort_by(|a, b| rank_order(a, b));
        pool.truncate(k_sub);
        for cand in pool {
            let protos = extract_prototypes(cand.features, cfg)?;
            slot.push(PrototypeSet {
                video_id: cand.video_id.to_owned(),
                start: cand.proposal.start,
                end: cand.proposal.end,
                confidence: cand.proposal.confidence,
                prototypes: protos
                    .into_iter()
                    .map(|p| SubActionPrototype {
                        vector: p.vector.to_vec(),
                        position: p.position,
                        category,
                        confidence: cand.proposal.confidence,
                    })
                    .collect(),
            });
        }
        if slot.is_empty() {
            log::debug!("no representative proposals for category {category}");
        }
    }
    Ok(bank)
}
