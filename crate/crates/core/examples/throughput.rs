//! Times forward and backward passes of the desk-width network.
//!
//! `cargo run --release -p lipforensics --example throughput -- [batch] [frames]`

use std::time::Instant;

use lipforensics::nn::{Graph, Head, LipForensicsModel, Mode, ModelConfig};
use lipforensics::tensor::Rng;

fn main() -> lipforensics::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let batch = args.next().unwrap_or(8);
    let frames = args.next().unwrap_or(25);
    let (model, store) = LipForensicsModel::new(ModelConfig::desk(4), 0)?;
    let mut rng = Rng::new(1);
    let clips = rng.normal_tensor(&[batch, frames, 88, 88], 0.0, 1.0);
    let labels: Vec<usize> = (0..batch).map(|i| i % 4).collect();
    for round in 0..3 {
        let t0 = Instant::now();
        let mut g = Graph::new(&store, Mode::Train, round);
        let x = g.input(clips.clone());
        let logits = model.forward(&mut g, x, Head::Lipread)?;
        let loss = g.cross_entropy(logits, &labels)?;
        let t1 = Instant::now();
        let grads = g.backward(loss)?;
        let t2 = Instant::now();
        println!(
            "batch {batch} x {frames} frames: forward {:.1} ms, backward {:.1} ms, {} grads, {:.1} ms/clip",
            (t1 - t0).as_secs_f64() * 1e3,
            (t2 - t1).as_secs_f64() * 1e3,
            grads.len(),
            (t2 - t0).as_secs_f64() * 1e3 / batch as f64
        );
    }
    Ok(())
}
