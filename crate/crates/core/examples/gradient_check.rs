//! Compares the analytic gradient of the video loss through the head with
//! central differences on a few parameters.
//!
//! cargo run --release --example gradient_check

use ndarray::Array2;
use protoloc::losses::video_loss;
use protoloc::model::{backward, forward, HeadParams, HeadShape};

fn main() -> protoloc::Result<()> {
    let shape = HeadShape {
        input_dim: 3,
        hidden: 4,
        embed_dim: 3,
        num_categories: 2,
    };
    let params = HeadParams::init(shape, 1);
    let app = Array2::from_shape_fn((10, 3), |(t, k)| ((t * 3 + k) as f64 * 0.7).sin());
    let mot = Array2::from_shape_fn((10, 3), |(t, k)| ((t + 2 * k) as f64 * 0.4).cos());
    let loss = |p: &HeadParams| -> protoloc::Result<f64> {
        Ok(video_loss(forward(app.view(), mot.view(), p)?.tcas.view(), &[1], 0.25).value)
    };

    let out = forward(app.view(), mot.view(), &params)?;
    let l = video_loss(out.tcas.view(), &[1], 0.25);
    let zeros = Array2::zeros(out.embedding.dim());
    let grads = backward(l.grad.view(), zeros.view(), &out.cache, &params)?;
    println!("loss {:.6}", l.value);

    let h = 1e-5;
    for (tensor, index) in [(0, 0), (1, 3), (3, 1), (7, 2)] {
        let mut up = params.clone();
        up.tensors_mut()[tensor][index] += h;
        let mut down = params.clone();
        down.tensors_mut()[tensor][index] -= h;
        let numeric = (loss(&up)? - loss(&down)?) / (2.0 * h);
        let analytic = grads.tensors()[tensor][index];
        println!("tensor {tensor}[{index}]: analytic {analytic:+.8} numeric {numeric:+.8}");
    }
    Ok(())
}
