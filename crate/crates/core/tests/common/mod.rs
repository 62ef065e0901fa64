//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use protoloc::losses::{
    mine_bkg_points, opa_loss_embedding, pl_loss, point_loss_with, video_loss, RegionPlan,
};
use protoloc::model::{backward, forward, HeadParams};
use protoloc::types::{PointAnnotation, PseudoLabelSeq};

/// Minimum over every contiguous split of the `M` snippets into `K`
/// non-empty runs, one run per prototype in order. Costs are summed left to
/// right, which is the order the DP adds them in.
pub fn brute_dtw(cost: ArrayView2<'_, f64>) -> Option<f64> {
    let (k, m) = cost.dim();
    if k == 0 || m < k {
        return None;
    }
    // cuts[i] = first snippet of prototype i + 1
    fn walk(cost: ArrayView2<'_, f64>, cuts: &mut Vec<usize>, best: &mut f64) {
        let (k, m) = cost.dim();
        if cuts.len() == k - 1 {
            let mut acc = 0.0;
            let mut proto = 0;
            for j in 0..m {
                while proto < cuts.len() && j >= cuts[proto] {
                    proto += 1;
                }
                acc += cost[[proto, j]];
            }
            if acc < *best {
                *best = acc;
            }
            return;
        }
        let from = cuts.last().map_or(1, |c| c + 1);
        let remaining = k - 1 - cuts.len();
        for c in from..=m - remaining {
            cuts.push(c);
            walk(cost, cuts, best);
            cuts.pop();
        }
    }
    let mut best = f64::INFINITY;
    walk(cost, &mut Vec::new(), &mut best);
    Some(best)
}

/// Cost of following `path` through `cost`, summed left to right.
pub fn path_cost(cost: ArrayView2<'_, f64>, path: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (j, &i) in path.iter().enumerate() {
        acc += cost[[i, j]];
    }
    acc
}

/// Straight-line prototype clustering: uniform init then `iters` rounds of
/// `exp(-dist)`-weighted averaging of features and positions.
pub fn spc_reference(x: &[Vec<f64>], n_s: usize, gamma: f64, iters: usize) -> Vec<(Vec<f64>, f64)> {
    let n = x.len();
    let d = x[0].len();
    let mut protos = Vec::new();
    let mut start = 0;
    for j in 0..n_s {
        let len = n / n_s + if j < n % n_s { 1 } else { 0 };
        let mut mean = vec![0.0; d];
        for row in &x[start..start + len] {
            for k in 0..d {
                mean[k] += row[k];
            }
        }
        for v in &mut mean {
            *v /= len as f64;
        }
        let centre = (start as f64 + len as f64 / 2.0) / n as f64;
        protos.push((mean, centre));
        start += len;
    }
    let times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    for _ in 0..iters {
        let mut next = Vec::new();
        for (s, u) in &protos {
            let mut num = vec![0.0; d];
            let mut num_t = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                let mut sq = 0.0;
                for k in 0..d {
                    sq += (x[i][k] - s[k]) * (x[i][k] - s[k]);
                }
                let dt = times[i] - u;
                let w = (-(sq + gamma * dt * dt).sqrt()).exp();
                for k in 0..d {
                    num[k] += w * x[i][k];
                }
                num_t += w * times[i];
                den += w;
            }
            next.push((num.iter().map(|v| v / den).collect(), num_t / den));
        }
        protos = next;
    }
    protos
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// Which loss a gradient check composes with the head.
#[derive(Clone, Debug)]
pub enum Objective {
    Video { present: Vec<usize>, k_ratio: f64 },
    /// Background points are mined once from the unperturbed model and then
    /// held fixed, so the objective is smooth in the parameters.
    Point { points: Vec<PointAnnotation>, bkg: Vec<usize>, gamma: f64, suppress: bool },
    Opa { plans: Vec<RegionPlan>, tau: f64 },
    Pl { labels: PseudoLabelSeq, gamma: f64 },
}

impl Objective {
    pub fn point(
        app: ArrayView2<'_, f64>,
        mot: ArrayView2<'_, f64>,
        params: &HeadParams,
        points: Vec<PointAnnotation>,
        theta_b: f64,
        gamma: f64,
        suppress: bool,
    ) -> Self {
        let out = forward(app, mot, params).unwrap();
        let bkg = mine_bkg_points(out.tcas.view(), &points, theta_b);
        Objective::Point { points, bkg, gamma, suppress }
    }
}

/// Loss value and analytic parameter gradient.
pub fn value_and_grad(
    obj: &Objective,
    app: ArrayView2<'_, f64>,
    mot: ArrayView2<'_, f64>,
    params: &HeadParams,
) -> (f64, HeadParams) {
    let out = forward(app, mot, params).unwrap();
    let a = out.tcas.view();
    let mut g_tcas = Array2::zeros(out.tcas.dim());
    let mut g_emb = Array2::zeros(out.embedding.dim());
    let value = match obj {
        Objective::Video { present, k_ratio } => {
            let l = video_loss(a, present, *k_ratio);
            g_tcas = l.grad;
            l.value
        }
        Objective::Point { points, bkg, gamma, suppress } => {
            let l = point_loss_with(a, points, bkg, *gamma, *suppress);
            g_tcas = l.grad;
            l.value
        }
        Objective::Opa { plans, tau } => {
            let l = opa_loss_embedding(out.embedding.view(), plans, *tau);
            g_emb = l.grad;
            l.value
        }
        Objective::Pl { labels, gamma } => {
            let l = pl_loss(a, labels, *gamma);
            g_tcas = l.grad;
            l.value
        }
    };
    let grads = backward(g_tcas.view(), g_emb.view(), &out.cache, params).unwrap();
    (value, grads)
}

/// Largest relative error between the analytic gradient and central
/// differences over every parameter. Each entry is compared at every step in
/// `steps` and keeps its best agreement: large steps straddle DTW path
/// switches and ReLU kinks, small ones drown tiny entries in rounding.
/// Magnitudes below `floor` are compared against `floor`.
pub fn max_relative_error(
    obj: &Objective,
    app: ArrayView2<'_, f64>,
    mot: ArrayView2<'_, f64>,
    params: &HeadParams,
    steps: &[f64],
    floor: f64,
) -> f64 {
    let (_, analytic) = value_and_grad(obj, app, mot, params);
    let flat: Vec<f64> = analytic.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    let mut idx = 0;
    let n_tensors = probe.tensors().len();
    for ti in 0..n_tensors {
        let len = probe.tensors()[ti].len();
        for k in 0..len {
            let orig = probe.tensors()[ti][k];
            let a = flat[idx];
            let mut best = f64::INFINITY;
            for &h in steps {
                probe.tensors_mut()[ti][k] = orig + h;
                let (up, _) = value_and_grad(obj, app, mot, &probe);
                probe.tensors_mut()[ti][k] = orig - h;
                let (down, _) = value_and_grad(obj, app, mot, &probe);
                probe.tensors_mut()[ti][k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let denom = a.abs().max(numeric.abs()).max(floor);
                best = best.min((a - numeric).abs() / denom);
            }
            worst = worst.max(best);
            idx += 1;
        }
    }
    worst
}

/// Step sizes used by the gradient checks.
pub const FD_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// A tiny random head, input and one objective per loss term.
pub struct GradInstance {
    pub app: Array2<f64>,
    pub mot: Array2<f64>,
    pub params: HeadParams,
    pub objectives: Vec<(&'static str, Objective)>,
}

pub fn grad_instance(seed: u64) -> GradInstance {
    use protoloc::model::HeadShape;
    use protoloc::opa::{ItemKind, OrderedPrototypeSeq};
    use protoloc::types::PseudoLabel;
    use rand::SeedableRng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.gen_range(8..=12);
    let shape = HeadShape {
        input_dim: 3,
        hidden: 4,
        embed_dim: 3,
        num_categories: 2,
    };
    let params = HeadParams::init(shape, seed);
    let app = random_matrix(&mut rng, t, 3, 1.5);
    let mot = random_matrix(&mut rng, t, 3, 1.5);

    let p0 = rng.gen_range(1..t / 2 - 1);
    let p1 = rng.gen_range(t / 2 + 1..t - 1);
    let points = vec![
        PointAnnotation::new(p0, rng.gen_range(0..2)),
        PointAnnotation::new(p1, rng.gen_range(0..2)),
    ];
    let mut present: Vec<usize> = points.iter().map(|p| p.category).collect();
    present.dedup();
    present.sort();
    present.dedup();

    let seq = |rng: &mut ChaCha8Rng, category: usize, interior: usize| {
        let mut items = vec![(random_matrix(rng, 1, 3, 1.0).row(0).to_owned(), ItemKind::Background)];
        for _ in 0..interior {
            items.push((random_matrix(rng, 1, 3, 1.0).row(0).to_owned(), ItemKind::SubAction));
        }
        items.push((random_matrix(rng, 1, 3, 1.0).row(0).to_owned(), ItemKind::Background));
        OrderedPrototypeSeq { items, category }
    };
    let plans = points
        .iter()
        .zip([0..t / 2, t / 2..t])
        .map(|(p, span)| RegionPlan {
            span,
            category: p.category,
            sequences: vec![seq(&mut rng, 0, 2), seq(&mut rng, 1, 1)],
        })
        .collect();

    let labels = PseudoLabelSeq(
        (0..t)
            .map(|_| match rng.gen_range(0..4) {
                0 => PseudoLabel::Unlabeled,
                1 => PseudoLabel::Negative,
                c => PseudoLabel::Positive(c - 2),
            })
            .collect(),
    );

    let objectives = vec![
        ("video", Objective::Video { present, k_ratio: 0.25 }),
        (
            "point",
            Objective::point(app.view(), mot.view(), &params, points.clone(), 0.5, 2.0, false),
        ),
        (
            "point+bkg",
            Objective::point(app.view(), mot.view(), &params, points, 0.5, 2.0, true),
        ),
        ("opa", Objective::Opa { plans, tau: 0.1 }),
        ("pl", Objective::Pl { labels, gamma: 2.0 }),
    ];
    GradInstance {
        app,
        mot,
        params,
        objectives,
    }
}

/// 1 to 30 snippets of uniform noise in 1 to 6 dimensions.
pub fn iid_proposal(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.gen_range(1..=30);
    let d = rng.gen_range(1..=6);
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Two constant blocks of 2 to 15 snippets with a little noise.
pub fn two_block_proposal(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = rng.gen_range(1..=6);
    let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let (la, lb) = (rng.gen_range(2..=15), rng.gen_range(2..=15));
    (0..la + lb)
        .map(|i| {
            let m = if i < la { &a } else { &b };
            m.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect()
        })
        .collect()
}

/// Outcome of checking clustering on one proposal.
#[derive(Clone, Copy, Debug, Default)]
pub struct SpcCheck {
    pub max_error: f64,
    pub in_hull: bool,
    pub ordered: bool,
}

/// Library clustering against [`spc_reference`] under the default config.
pub fn check_spc(x: &[Vec<f64>]) -> SpcCheck {
    use protoloc::spc::{init_prototypes, spc_cluster_traced, SpcConfig};
    let cfg = SpcConfig::default();
    let n_s = cfg.count(x.len());
    let xa = Array2::from_shape_fn((x.len(), x[0].len()), |(i, k)| x[i][k]);
    let trace = spc_cluster_traced(xa.view(), &init_prototypes(xa.view(), n_s).unwrap(), &cfg);
    let want = spc_reference(x, n_s, cfg.gamma, cfg.iterations);
    let mut max_error: f64 = 0.0;
    for (g, (v, u)) in trace.prototypes.iter().zip(&want) {
        max_error = max_error.max((g.position - u).abs());
        for (a, b) in g.vector.iter().zip(v) {
            max_error = max_error.max((a - b).abs());
        }
    }
    if trace.prototypes.len() != want.len() {
        max_error = f64::INFINITY;
    }
    // hull membership through the weights that produced each prototype
    let in_hull = match &trace.weights {
        None => true,
        Some(w) => trace.prototypes.iter().enumerate().all(|(j, p)| {
            let col = w.column(j);
            let combo = col.dot(&xa);
            col.iter().all(|&v| v >= 0.0)
                && (col.sum() - 1.0).abs() < 1e-9
                && combo.iter().zip(&p.vector).all(|(a, b)| (a - b).abs() < 1e-9)
        }),
    };
    let ordered = trace.prototypes.windows(2).all(|w| w[0].position <= w[1].position);
    SpcCheck {
        max_error,
        in_hull,
        ordered,
    }
}
