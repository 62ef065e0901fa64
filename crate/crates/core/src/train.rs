//! Training loop, evaluation and ablation runs.
//!
//! Each epoch first trains on the video and point losses only. Once the
//! warm-up is over, every epoch starts by freezing a snapshot of the model:
//! inference on the training videos yields representative proposals, these
//! fill a fresh memory bank, and every annotated point gets an undetermined
//! region with per-category ordered prototype sequences and pseudo labels.
//! The snapshot stays fixed while the epoch's minibatches are optimised.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{map_table, MapTable, Report, Tagged};
use crate::infer::{localize, InferConfig};
use crate::losses::{
    mine_bkg_points, opa_loss_embedding, pl_loss, point_loss_with, total_loss, video_loss,
    LossComponents, LossConfig, RegionPlan,
};
use crate::model::{backward, forward_video, HeadParams, HeadShape};
use crate::opa::{
    align_region, background_support, build_ordered, emit_pseudo_labels, global_background, partition,
    proposal_pseudo_labels, select_prototype_sequence, span_mean, RegionOutcome,
};
use crate::spc::{harvest, Candidate, CountCriterion, MemoryBank, PrototypeMode, SpcConfig};
use crate::synth::sub_seed;
use crate::types::{Corpus, PseudoLabelSeq, Segment, Video};

/// Which extra terms are trained after the warm-up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Video and point losses only.
    Base,
    /// Alignment contrast with snippet-level prototypes.
    Opa,
    /// Alignment contrast with clustered prototypes.
    SpcOpa,
    /// Pseudo labels taken from proposals, no alignment.
    Pl,
    /// Alignment contrast and alignment pseudo labels, snippet-level prototypes.
    OpaPl,
    /// Alignment contrast and alignment pseudo labels, clustered prototypes.
    Full,
}

/// Where pseudo labels come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelSource {
    Proposal,
    Alignment,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Base,
        Variant::Opa,
        Variant::SpcOpa,
        Variant::Pl,
        Variant::OpaPl,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Opa => "opa",
            Variant::SpcOpa => "spc_opa",
            Variant::Pl => "pl",
            Variant::OpaPl => "opa_pl",
            Variant::Full => "full",
        }
    }

    pub fn opa_loss(self) -> bool {
        matches!(self, Variant::Opa | Variant::SpcOpa | Variant::OpaPl | Variant::Full)
    }

    pub fn labels(self) -> Option<LabelSource> {
        match self {
            Variant::Pl => Some(LabelSource::Proposal),
            Variant::OpaPl | Variant::Full => Some(LabelSource::Alignment),
            _ => None,
        }
    }

    /// Prototype construction, `None` when no bank is needed.
    pub fn prototypes(self) -> Option<PrototypeMode> {
        match self {
            Variant::Opa | Variant::OpaPl => Some(PrototypeMode::Snippet),
            Variant::SpcOpa | Variant::Full => Some(PrototypeMode::Clustered),
            Variant::Base | Variant::Pl => None,
        }
    }

    /// Whether epochs after the warm-up need a snapshot at all.
    pub fn needs_snapshot(self) -> bool {
        self != Variant::Base
    }
}

/// Every training hyper-parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Epochs trained with the video and point losses only.
    pub warmup_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Batch gradients with a larger global L2 norm are rescaled to it.
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Category count; taken from the corpus when absent.
    pub num_categories: Option<usize>,
    pub variant: Variant,
    pub spc: SpcConfig,
    pub k_sub: usize,
    pub loss: LossConfig,
    pub infer: InferConfig,
    /// Evaluate on the held-out corpus every this many epochs (0: never).
    pub eval_every: usize,
    pub eval_thresholds: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            warmup_epochs: 20,
            lr: 0.05,
            momentum: 0.9,
            grad_clip: Some(1.0),
            batch_size: 8,
            hidden: 64,
            embed_dim: 32,
            num_categories: None,
            variant: Variant::Full,
            spc: SpcConfig::default(),
            k_sub: 2,
            loss: LossConfig::default(),
            infer: InferConfig::default(),
            eval_every: 0,
            eval_thresholds: crate::eval::Preset::Thumos.thresholds(),
        }
    }
}

impl TrainConfig {
    /// Short schedule with a narrower head, sized for the reference corpus
    /// on one CPU core.
    pub fn reference() -> Self {
        Self {
            epochs: 30,
            warmup_epochs: 10,
            hidden: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spc.validate()?;
        self.loss.validate()?;
        if self.warmup_epochs > self.epochs {
            return Err(Error::Validation(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.embed_dim == 0 || self.k_sub == 0 {
            return Err(Error::Validation(
                "batch_size, hidden, embed_dim and k_sub must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation(format!(
                "need lr > 0 and momentum in [0, 1), got {} and {}",
                self.lr, self.momentum
            )));
        }
        if self.infer.thresholds.is_empty() {
            return Err(Error::Validation("infer.thresholds is empty".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg: TrainConfig = crate::io::read_json_file(path.as_ref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::io::write_json_file(self, path.as_ref())
    }

    /// SPC settings with the prototype mode the variant asks for.
    pub fn effective_spc(&self) -> SpcConfig {
        SpcConfig {
            mode: self.variant.prototypes().unwrap_or(self.spc.mode),
            ..self.spc.clone()
        }
    }

    fn shape(&self, corpus: &Corpus) -> HeadShape {
        HeadShape {
            input_dim: corpus.dim(),
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            num_categories: self.num_categories.unwrap_or_else(|| corpus.num_categories()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Full,
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    /// Per-video means over the epoch.
    pub components: LossComponents,
    pub total: f64,
    /// Prototype sets held by the bank (0 when no bank was built).
    pub bank_sets: usize,
    /// Regions whose own category had no prototypes.
    pub regions_skipped: usize,
    pub eval_avg: Option<f64>,
}

pub fn log_csv(rows: &[EpochLog]) -> String {
    let mut out = String::from("epoch,phase,video,point,opa,pl,total,bank_sets,regions_skipped,eval_avg\n");
    for r in rows {
        let phase = match r.phase {
            Phase::Warmup => "warmup",
            Phase::Full => "full",
        };
        let c = &r.components;
        let _ = write!(
            out,
            "{},{phase},{},{},{},{},{},{},{},",
            r.epoch, c.video, c.point, c.opa, c.pl, r.total, r.bank_sets, r.regions_skipped
        );
        if let Some(v) = r.eval_avg {
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parameters, optimiser state and history after some number of epochs.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: HeadParams,
    velocity: HeadParams,
    pub epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, corpus: &Corpus) -> Result<Self> {
        cfg.validate()?;
        let params = HeadParams::init(cfg.shape(corpus), cfg.seed);
        let velocity = params.zeros_like();
        Ok(Self {
            params,
            velocity,
            epoch: 0,
            log: Vec::new(),
        })
    }
}

/// Frozen per-video supervision derived from one model snapshot.
#[derive(Clone, Debug, Default)]
pub struct VideoPlan {
    pub regions: Vec<RegionPlan>,
    pub labels: Option<PseudoLabelSeq>,
    pub skipped: usize,
}

/// Everything derived from a snapshot, indexed like `corpus.videos()`.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub bank: Option<MemoryBank>,
    pub plans: Vec<VideoPlan>,
}

/// Highest-confidence proposal of the point's category that contains the
/// point; otherwise a window of `radius` snippets either side.
fn region_proposal(proposals: &[Segment], t: usize, category: usize, radius: usize, len: usize) -> Range<usize> {
    proposals
        .iter()
        .filter(|p| p.category == category && p.contains(t))
        .min_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.start.cmp(&b.start))
                .then(a.end.cmp(&b.end))
        })
        .map(|p| p.start..p.end)
        .unwrap_or_else(|| t.saturating_sub(radius)..(t + radius + 1).min(len))
}

fn annotated_proposals(video: &Video, tcas: ArrayView2<'_, f64>, cfg: &InferConfig) -> Vec<Segment> {
    let cats = video.categories();
    localize(tcas, cfg)
        .into_iter()
        .filter(|p| cats.contains(&p.category))
        .collect()
}

/// Builds the bank, alignment plans and pseudo labels for `params`.
pub fn snapshot(params: &HeadParams, corpus: &Corpus, cfg: &TrainConfig) -> Result<Snapshot> {
    let variant = cfg.variant;
    let c = params.shape().num_categories;
    let mut embeddings = Vec::with_capacity(corpus.len());
    let mut tcases = Vec::with_capacity(corpus.len());
    let mut proposals = Vec::with_capacity(corpus.len());
    for video in corpus.videos() {
        let out = forward_video(video, params)?;
        proposals.push(annotated_proposals(video, out.tcas.view(), &cfg.infer));
        tcases.push(out.tcas());
        embeddings.push(out.embedding);
    }

    let spc = cfg.effective_spc();
    let bank = match variant.prototypes() {
        Some(_) => {
            let candidates: Vec<Candidate<'_>> = corpus
                .videos()
                .iter()
                .zip(&proposals)
                .zip(&embeddings)
                .flat_map(|((v, props), x)| {
                    props.iter().map(move |p| Candidate {
                        video_id: v.id(),
                        proposal: *p,
                        features: x.slice(s![p.start..p.end, ..]),
                    })
                })
                .collect();
            Some(harvest(&candidates, &spc, cfg.k_sub, c)?)
        }
        None => None,
    };

    let mut plans = Vec::with_capacity(corpus.len());
    for (i, video) in corpus.videos().iter().enumerate() {
        let x = embeddings[i].view();
        let len = video.len();
        let parts = partition(len, &video.points, &tcases[i], cfg.loss.theta_b)?;
        let spans: Vec<Range<usize>> = video
            .points
            .iter()
            .map(|p| region_proposal(&proposals[i], p.t, p.category, spc.r_p, len))
            .collect();
        let mut plan = VideoPlan::default();

        if let Some(bank) = &bank {
            let support = background_support(len, &video.points, &tcases[i], cfg.loss.theta_b)?;
            let global = global_background(x, &support);
            let mut outcomes = Vec::with_capacity(video.points.len());
            for (n, point) in video.points.iter().enumerate() {
                let pro = x.slice(s![spans[n].clone(), ..]);
                let left = span_mean(x, &support.background[n]);
                let right = span_mean(x, &support.background[n + 1]);
                let mut sequences = Vec::new();
                for cat in (0..c).filter(|&cat| !bank.is_empty(cat)) {
                    let sub = select_prototype_sequence(pro, bank, cat)?;
                    sequences.push(build_ordered(sub, left.clone(), right.clone(), &global, cat));
                }
                let region = parts.undetermined[n].clone();
                let outcome = match sequences.iter().find(|q| q.category == point.category) {
                    Some(own) => align_region(own.clone(), x.slice(s![region.clone(), ..]))?,
                    None => {
                        plan.skipped += 1;
                        RegionOutcome::Skipped
                    }
                };
                outcomes.push(outcome);
                if variant.opa_loss() {
                    plan.regions.push(RegionPlan {
                        span: region,
                        category: point.category,
                        sequences,
                    });
                }
            }
            if variant.labels() == Some(LabelSource::Alignment) {
                plan.labels = Some(emit_pseudo_labels(&outcomes, &parts, &video.points, len)?);
            }
        }
        if variant.labels() == Some(LabelSource::Proposal) {
            let segs: Vec<Segment> = spans
                .iter()
                .zip(&video.points)
                .map(|(r, p)| Segment::new(r.start, r.end, p.category, 1.0))
                .collect::<Result<_>>()?;
            plan.labels = Some(proposal_pseudo_labels(&segs, &parts, &video.points, len));
        }
        plans.push(plan);
    }
    Ok(Snapshot { bank, plans })
}

fn step_video(
    video: &Video,
    plan: Option<&VideoPlan>,
    params: &HeadParams,
    cfg: &LossConfig,
) -> Result<(LossComponents, HeadParams)> {
    let out = forward_video(video, params)?;
    let a = out.tcas.view();
    let v = video_loss(a, &video.categories(), cfg.k_ratio);
    let bkg = mine_bkg_points(a, &video.points, cfg.theta_b);
    let p = point_loss_with(a, &video.points, &bkg, cfg.focal_gamma, cfg.point_suppress_background);
    let mut grad_tcas = v.grad * cfg.lambda_video;
    grad_tcas.scaled_add(cfg.lambda_point, &p.grad);
    let mut grad_emb = Array2::zeros(out.embedding.dim());
    let mut comps = LossComponents {
        video: v.value,
        point: p.value,
        ..Default::default()
    };
    if let Some(plan) = plan {
        if !plan.regions.is_empty() {
            let o = opa_loss_embedding(out.embedding.view(), &plan.regions, cfg.tau);
            comps.opa = o.value;
            grad_emb.scaled_add(cfg.lambda_opa, &o.grad);
        }
        if let Some(labels) = &plan.labels {
            let l = pl_loss(a, labels, cfg.focal_gamma);
            comps.pl = l.value;
            grad_tcas.scaled_add(cfg.lambda_pl, &l.grad);
        }
    }
    let grads = backward(grad_tcas.view(), grad_emb.view(), &out.cache, params)?;
    Ok((comps, grads))
}

fn add_components(acc: &mut LossComponents, c: &LossComponents, w: f64) {
    acc.video += c.video * w;
    acc.point += c.point * w;
    acc.opa += c.opa * w;
    acc.pl += c.pl * w;
}

/// Trains `state` until it has completed `until` epochs.
pub fn run_epochs(
    state: &mut TrainState,
    corpus: &Corpus,
    eval: Option<&Corpus>,
    cfg: &TrainConfig,
    until: usize,
) -> Result<()> {
    cfg.validate()?;
    let until = until.min(cfg.epochs);
    while state.epoch < until {
        let epoch = state.epoch;
        let phase = if epoch < cfg.warmup_epochs {
            Phase::Warmup
        } else {
            Phase::Full
        };
        let snap = match phase {
            Phase::Full if cfg.variant.needs_snapshot() => Some(snapshot(&state.params, corpus, cfg)?),
            _ => None,
        };

        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, epoch)));
        let mut comps = LossComponents::default();
        let w = 1.0 / corpus.len() as f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = state.params.zeros_like();
            for &i in batch {
                let plan = snap.as_ref().map(|s| &s.plans[i]);
                let (c, g) = step_video(&corpus.videos()[i], plan, &state.params, &cfg.loss)?;
                add_components(&mut comps, &c, w);
                grads.add_scaled(1.0 / batch.len() as f64, &g);
            }
            if let Some(max) = cfg.grad_clip {
                let norm = grads.norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            state.velocity.scale(cfg.momentum);
            state.velocity.add_scaled(1.0, &grads);
            crate::model::sgd_step(&mut state.params, &state.velocity, cfg.lr);
        }
        if !state.params.is_finite() {
            return Err(Error::Validation(format!(
                "parameters diverged in epoch {epoch}; lower the learning rate"
            )));
        }

        state.epoch += 1;
        let eval_avg = match eval {
            Some(ev) if cfg.eval_every > 0 && state.epoch.is_multiple_of(cfg.eval_every) => {
                Some(evaluate(&state.params, ev, &cfg.infer, &cfg.eval_thresholds)?.avg)
            }
            _ => None,
        };
        let row = EpochLog {
            epoch: state.epoch,
            phase,
            components: comps,
            total: total_loss(&comps, &cfg.loss),
            bank_sets: snap
                .as_ref()
                .and_then(|s| s.bank.as_ref())
                .map_or(0, |b| b.categories.iter().map(Vec::len).sum()),
            regions_skipped: snap
                .as_ref()
                .map_or(0, |s| s.plans.iter().map(|p| p.skipped).sum()),
            eval_avg,
        };
        log::info!(
            "epoch {:>3} {:?} total {:.4} video {:.4} point {:.4} opa {:.4} pl {:.4}{}",
            row.epoch,
            row.phase,
            row.total,
            comps.video,
            comps.point,
            comps.opa,
            comps.pl,
            row.eval_avg.map(|v| format!(" eval {:.2}", v * 100.0)).unwrap_or_default()
        );
        state.log.push(row);
    }
    Ok(())
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(corpus: &Corpus, eval: Option<&Corpus>, cfg: &TrainConfig) -> Result<TrainState> {
    let mut state = TrainState::new(cfg, corpus)?;
    run_epochs(&mut state, corpus, eval, cfg, cfg.epochs)?;
    Ok(state)
}

/// Localized detections for every video, keyed by id.
pub fn infer_corpus(
    params: &HeadParams,
    corpus: &Corpus,
    cfg: &InferConfig,
) -> Result<BTreeMap<String, Vec<Segment>>> {
    corpus
        .videos()
        .iter()
        .map(|v| {
            let out = forward_video(v, params)?;
            Ok((v.id().to_owned(), localize(out.tcas.view(), cfg)))
        })
        .collect()
}

/// mAP of `detections` against the corpus ground truth.
pub fn evaluate_detections(
    detections: &BTreeMap<String, Vec<Segment>>,
    corpus: &Corpus,
    thresholds: &[f64],
    num_categories: usize,
) -> Result<MapTable> {
    let mut gts = Vec::new();
    for v in corpus.videos() {
        let gt = v.ground_truth.as_ref().ok_or_else(|| {
            Error::Validation(format!("{} has no ground truth to evaluate against", v.id()))
        })?;
        gts.extend(gt.iter().map(|g| Tagged::new(v.id(), *g)));
    }
    let dets: Vec<Tagged<'_>> = detections
        .iter()
        .flat_map(|(id, segs)| segs.iter().map(move |s| Tagged::new(id, *s)))
        .collect();
    Ok(map_table(&dets, &gts, thresholds, num_categories))
}

pub fn evaluate(
    params: &HeadParams,
    corpus: &Corpus,
    cfg: &InferConfig,
    thresholds: &[f64],
) -> Result<MapTable> {
    let dets = infer_corpus(params, corpus, cfg)?;
    evaluate_detections(&dets, corpus, thresholds, params.shape().num_categories)
}

/// Pseudo labels the model would train on right now, keyed by video id.
pub fn export_pseudo_labels(
    params: &HeadParams,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<BTreeMap<String, PseudoLabelSeq>> {
    let snap = snapshot(params, corpus, cfg)?;
    Ok(corpus
        .videos()
        .iter()
        .zip(snap.plans)
        .filter_map(|(v, p)| p.labels.map(|l| (v.id().to_owned(), l)))
        .collect())
}

/// One row of an ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub label: String,
    pub variant: Variant,
    pub spc: SpcConfig,
}

impl AblationRun {
    pub fn new(label: impl Into<String>, variant: Variant, spc: SpcConfig) -> Self {
        Self {
            label: label.into(),
            variant,
            spc,
        }
    }

    /// The six component combinations.
    pub fn components(spc: &SpcConfig) -> Vec<Self> {
        Variant::ALL
            .iter()
            .map(|&v| Self::new(v.name(), v, spc.clone()))
            .collect()
    }

    /// Proposal-only labels against fixed and adaptive prototype counts.
    pub fn criteria(spc: &SpcConfig) -> Vec<Self> {
        let fixed = SpcConfig {
            criterion: CountCriterion::Fixed,
            ..spc.clone()
        };
        let adaptive = SpcConfig {
            criterion: CountCriterion::Adaptive,
            ..spc.clone()
        };
        vec![
            Self::new("proposal", Variant::Pl, spc.clone()),
            Self::new("fixed", Variant::Full, fixed),
            Self::new("adaptive", Variant::Full, adaptive),
        ]
    }

    /// The full model with `n_max` from 1 to `max`.
    pub fn n_max_sweep(spc: &SpcConfig, max: usize) -> Vec<Self> {
        (1..=max)
            .map(|n| {
                Self::new(
                    format!("n_max={n}"),
                    Variant::Full,
                    SpcConfig {
                        n_max: n,
                        ..spc.clone()
                    },
                )
            })
            .collect()
    }
}

/// Per-seed and seed-averaged results of one ablation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub label: String,
    pub per_seed: Vec<MapTable>,
    pub mean: MapTable,
}

fn mean_table(tables: &[MapTable]) -> MapTable {
    let n = tables.len() as f64;
    let thresholds = tables[0].thresholds.clone();
    let map = (0..thresholds.len())
        .map(|i| tables.iter().map(|t| t.map[i]).sum::<f64>() / n)
        .collect();
    MapTable {
        thresholds,
        map,
        avg: tables.iter().map(|t| t.avg).sum::<f64>() / n,
    }
}

/// Trains every run for every seed and evaluates on `test`.
///
/// Runs share the warm-up of their seed, which is trained once and branched.
pub fn ablate(
    train_set: &Corpus,
    test_set: &Corpus,
    base: &TrainConfig,
    runs: &[AblationRun],
    seeds: &[u64],
) -> Result<Vec<AblationResult>> {
    if runs.is_empty() || seeds.is_empty() {
        return Err(Error::Validation("ablation needs at least one run and one seed".into()));
    }
    let mut per_run: Vec<Vec<MapTable>> = vec![Vec::new(); runs.len()];
    for &seed in seeds {
        let seed_cfg = TrainConfig {
            seed,
            eval_every: 0,
            ..base.clone()
        };
        let mut warm = TrainState::new(&seed_cfg, train_set)?;
        run_epochs(&mut warm, train_set, None, &seed_cfg, seed_cfg.warmup_epochs)?;
        for (run, tables) in runs.iter().zip(per_run.iter_mut()) {
            let cfg = TrainConfig {
                variant: run.variant,
                spc: run.spc.clone(),
                ..seed_cfg.clone()
            };
            let mut state = warm.clone();
            run_epochs(&mut state, train_set, None, &cfg, cfg.epochs)?;
            let table = evaluate(&state.params, test_set, &cfg.infer, &cfg.eval_thresholds)?;
            log::info!("seed {seed} {}: AVG {:.2}", run.label, table.avg * 100.0);
            tables.push(table);
        }
    }
    Ok(runs
        .iter()
        .zip(per_run)
        .map(|(run, per_seed)| AblationResult {
            label: run.label.clone(),
            mean: mean_table(&per_seed),
            per_seed,
        })
        .collect())
}

pub fn ablation_report(results: &[AblationResult]) -> Report {
    let mut report = Report::default();
    for r in results {
        report.push(r.label.clone(), r.mean.clone());
    }
    report
}
