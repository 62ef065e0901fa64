//! Two-stream snippet head: temporal convolutions to an embedding, then to
//! per-category sigmoid scores, with hand-written backpropagation.
//!
//! Per stream:
//!
//! ```text
//! features -conv-> relu -conv-> embedding -conv-> relu -conv-> logits -> sigmoid
//! ```
//!
//! The fused embedding is the mean of the two stream embeddings and the TCAS
//! is the mean of the two stream sigmoids.

use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Tcas, Video};

/// Temporal kernel width of every convolution.
pub const KERNEL: usize = 3;

/// Same-padded 1-D temporal convolution, weight laid out `(KERNEL, in, out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

impl Conv {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array3::zeros((KERNEL, input, output)),
            bias: Array1::zeros(output),
        }
    }

    fn init(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / ((KERNEL * input) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        Self {
            weight: Array3::from_shape_simple_fn((KERNEL, input, output), || dist.sample(rng)),
            bias: Array1::from_shape_simple_fn(output, || dist.sample(rng)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.dim().1
    }

    pub fn output_dim(&self) -> usize {
        self.weight.dim().2
    }

    /// `out[t] = b + sum_k x[t + k - 1] W_k`, zero outside `[0, T)`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let t = x.nrows();
        let mut out = Array2::zeros((t, self.output_dim()));
        out += &self.bias;
        out += &x.dot(&self.weight.index_axis(Axis(0), 1));
        if t > 1 {
            let w0 = self.weight.index_axis(Axis(0), 0);
            let w2 = self.weight.index_axis(Axis(0), 2);
            let mut tail = out.slice_mut(s![1.., ..]);
            tail += &x.slice(s![..t - 1, ..]).dot(&w0);
            let mut head = out.slice_mut(s![..t - 1, ..]);
            head += &x.slice(s![1.., ..]).dot(&w2);
        }
        out
    }

    /// Accumulates parameter gradients into `grad`; returns the input gradient
    /// when `want_input` is set.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        dout: ArrayView2<'_, f64>,
        grad: &mut Conv,
        want_input: bool,
    ) -> Option<Array2<f64>> {
        let t = x.nrows();
        grad.bias += &dout.sum_axis(Axis(0));
        {
            let mut g1 = grad.weight.index_axis_mut(Axis(0), 1);
            g1 += &x.t().dot(&dout);
        }
        if t > 1 {
            let mut g0 = grad.weight.index_axis_mut(Axis(0), 0);
            g0 += &x.slice(s![..t - 1, ..]).t().dot(&dout.slice(s![1.., ..]));
            let mut g2 = grad.weight.index_axis_mut(Axis(0), 2);
            g2 += &x.slice(s![1.., ..]).t().dot(&dout.slice(s![..t - 1, ..]));
        }
        if !want_input {
            return None;
        }
        let mut dx = dout.dot(&self.weight.index_axis(Axis(0), 1).t());
        if t > 1 {
            let w0 = self.weight.index_axis(Axis(0), 0);
            let w2 = self.weight.index_axis(Axis(0), 2);
            let mut head = dx.slice_mut(s![..t - 1, ..]);
            head += &dout.slice(s![1.., ..]).dot(&w0.t());
            let mut tail = dx.slice_mut(s![1.., ..]);
            tail += &dout.slice(s![..t - 1, ..]).dot(&w2.t());
        }
        Some(dx)
    }
}

/// The four convolutions of one stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    pub embed1: Conv,
    pub embed2: Conv,
    pub score1: Conv,
    pub score2: Conv,
}

impl StreamParams {
    fn convs(&self) -> [&Conv; 4] {
        [&self.embed1, &self.embed2, &self.score1, &self.score2]
    }

    fn convs_mut(&mut self) -> [&mut Conv; 4] {
        [
            &mut self.embed1,
            &mut self.embed2,
            &mut self.score1,
            &mut self.score2,
        ]
    }
}

/// Dimensions of a head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub num_categories: usize,
}

/// Parameters (or gradients) of the two-stream head: appearance then motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub streams: [StreamParams; 2],
}

impl HeadParams {
    pub fn zeros(shape: HeadShape) -> Self {
        let stream = || StreamParams {
            embed1: Conv::zeros(shape.input_dim, shape.hidden),
            embed2: Conv::zeros(shape.hidden, shape.embed_dim),
            score1: Conv::zeros(shape.embed_dim, shape.hidden),
            score2: Conv::zeros(shape.hidden, shape.num_categories + 1),
        };
        Self {
            streams: [stream(), stream()],
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialisation.
    pub fn init(shape: HeadShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stream = || StreamParams {
            embed1: Conv::init(shape.input_dim, shape.hidden, &mut rng),
            embed2: Conv::init(shape.hidden, shape.embed_dim, &mut rng),
            score1: Conv::init(shape.embed_dim, shape.hidden, &mut rng),
            score2: Conv::init(shape.hidden, shape.num_categories + 1, &mut rng),
        };
        let appearance = stream();
        let motion = stream();
        Self {
            streams: [appearance, motion],
        }
    }

    pub fn shape(&self) -> HeadShape {
        let s = &self.streams[0];
        HeadShape {
            input_dim: s.embed1.input_dim(),
            hidden: s.embed1.output_dim(),
            embed_dim: s.embed2.output_dim(),
            num_categories: s.score2.output_dim() - 1,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape())
    }

    /// Flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.streams
            .iter()
            .flat_map(|s| s.convs())
            .flat_map(|c| {
                [
                    c.weight.as_slice().expect("standard layout"),
                    c.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.streams
            .iter_mut()
            .flat_map(|s| s.convs_mut())
            .flat_map(|c| {
                [
                    c.weight.as_slice_mut().expect("standard layout"),
                    c.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &HeadParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// Global L2 norm over every tensor.
    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// `params - lr * grads`.
pub fn sgd_step(params: &mut HeadParams, grads: &HeadParams, lr: f64) {
    params.add_scaled(-lr, grads);
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

#[derive(Clone, Debug)]
struct StreamCache {
    input: Array2<f64>,
    pre_hidden: Array2<f64>,
    hidden: Array2<f64>,
    embedding: Array2<f64>,
    pre_score_hidden: Array2<f64>,
    score_hidden: Array2<f64>,
    probs: Array2<f64>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    streams: [StreamCache; 2],
}

impl ForwardCache {
    /// Pre-activations of every ReLU, for kink diagnostics.
    pub fn relu_inputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.streams
            .iter()
            .flat_map(|s| s.pre_hidden.iter().chain(s.pre_score_hidden.iter()).copied())
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Fused `T x D` embedding.
    pub embedding: Array2<f64>,
    /// `T x (C + 1)` scores in `(0, 1)`.
    pub tcas: Array2<f64>,
    pub cache: ForwardCache,
}

impl ForwardOutput {
    pub fn tcas(&self) -> Tcas {
        Tcas::new(self.tcas.clone()).expect("sigmoid outputs lie in [0, 1]")
    }
}

fn stream_forward(p: &StreamParams, input: ArrayView2<'_, f64>) -> StreamCache {
    let pre_hidden = p.embed1.forward(input);
    let hidden = relu(&pre_hidden);
    let embedding = p.embed2.forward(hidden.view());
    let pre_score_hidden = p.score1.forward(embedding.view());
    let score_hidden = relu(&pre_score_hidden);
    let logits = p.score2.forward(score_hidden.view());
    StreamCache {
        input: input.to_owned(),
        pre_hidden,
        hidden,
        embedding,
        pre_score_hidden,
        score_hidden,
        probs: logits.mapv(sigmoid),
    }
}

pub fn forward(
    appearance: ArrayView2<'_, f64>,
    motion: ArrayView2<'_, f64>,
    params: &HeadParams,
) -> Result<ForwardOutput> {
    let shape = params.shape();
    if appearance.dim() != motion.dim() {
        return Err(Error::Shape(format!(
            "streams differ: {:?} vs {:?}",
            appearance.dim(),
            motion.dim()
        )));
    }
    if appearance.ncols() != shape.input_dim || appearance.nrows() == 0 {
        return Err(Error::Shape(format!(
            "features are {:?}, head expects T x {}",
            appearance.dim(),
            shape.input_dim
        )));
    }
    let a = stream_forward(&params.streams[0], appearance);
    let m = stream_forward(&params.streams[1], motion);
    let embedding = (&a.embedding + &m.embedding) * 0.5;
    let tcas = (&a.probs + &m.probs) * 0.5;
    Ok(ForwardOutput {
        embedding,
        tcas,
        cache: ForwardCache { streams: [a, m] },
    })
}

pub fn forward_video(video: &Video, params: &HeadParams) -> Result<ForwardOutput> {
    forward(video.appearance.data(), video.motion.data(), params)
}

fn relu_mask(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Gradients of the head parameters given upstream gradients with respect to
/// the TCAS (`grad_tcas`) and the fused embedding (`grad_embedding`).
pub fn backward(
    grad_tcas: ArrayView2<'_, f64>,
    grad_embedding: ArrayView2<'_, f64>,
    cache: &ForwardCache,
    params: &HeadParams,
) -> Result<HeadParams> {
    let t = cache.streams[0].probs.nrows();
    if grad_tcas.dim() != cache.streams[0].probs.dim()
        || grad_embedding.dim() != cache.streams[0].embedding.dim()
    {
        return Err(Error::Shape(format!(
            "upstream gradients {:?} / {:?} do not match a {t}-snippet forward pass",
            grad_tcas.dim(),
            grad_embedding.dim()
        )));
    }
    let mut grads = params.zeros_like();
    for ((p, c), g) in params
        .streams
        .iter()
        .zip(&cache.streams)
        .zip(grads.streams.iter_mut())
    {
        let mut dlogits = grad_tcas.to_owned() * 0.5;
        Zip::from(&mut dlogits)
            .and(&c.probs)
            .for_each(|d, &pr| *d *= pr * (1.0 - pr));
        let mut d_score_hidden = p
            .score2
            .backward(c.score_hidden.view(), dlogits.view(), &mut g.score2, true)
            .expect("input gradient requested");
        relu_mask(&mut d_score_hidden, &c.pre_score_hidden);
        let mut d_embed = p
            .score1
            .backward(c.embedding.view(), d_score_hidden.view(), &mut g.score1, true)
            .expect("input gradient requested");
        d_embed.scaled_add(0.5, &grad_embedding);
        let mut d_hidden = p
            .embed2
            .backward(c.hidden.view(), d_embed.view(), &mut g.embed2, true)
            .expect("input gradient requested");
        relu_mask(&mut d_hidden, &c.pre_hidden);
        p.embed1
            .backward(c.input.view(), d_hidden.view(), &mut g.embed1, false);
    }
    Ok(grads)
}

/// Serialized model: shapes plus row-major parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub shape: HeadShape,
    pub params: HeadParams,
}

impl Checkpoint {
    pub fn new(params: HeadParams) -> Self {
        Self {
            shape: params.shape(),
            params,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json_file(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: Checkpoint = crate::io::read_json_file(path.as_ref())?;
        if ckpt.params.shape() != ckpt.shape {
            return Err(Error::Shape(format!(
                "{}: declared shape {:?} does not match parameters {:?}",
                path.as_ref().display(),
                ckpt.shape,
                ckpt.params.shape()
            )));
        }
        if !ckpt.params.is_finite() {
            return Err(Error::Validation(format!(
                "{}: non-finite parameters",
                path.as_ref().display()
            )));
        }
        Ok(ckpt)
    }
}
