// Throwaway op-level profiler (deleted before ship).
use eqdesc_core::autodiff::Graph;
use eqdesc_core::data::{END_ID, START_ID};
use eqdesc_core::expr::{sample_equation, Category};
use eqdesc_core::layout::render;
use eqdesc_core::model::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let cfg = ModelConfig::desk_default(74);
    let params: Params<f32> = init_params(&cfg, 7);
    let e = sample_equation(Category::Integral, &mut ChaCha8Rng::seed_from_u64(3), 4);
    let img = render(&e, 64, 256);
    let tokens: Vec<u32> = std::iter::once(START_ID).chain((0..14).map(|i| 4 + i % 60)).chain(std::iter::once(END_ID)).collect();

    let n = 50;
    let t = Instant::now();
    for i in 0..n {
        let _ = example_loss_grads(&params, &cfg, &img, &tokens, true, i).unwrap();
    }
    println!("full fwd+bwd: {:.2} ms/example", t.elapsed().as_secs_f64() * 1000.0 / n as f64);

    let t = Instant::now();
    for i in 0..n {
        let _ = example_loss(&params, &cfg, &img, &tokens, true, i).unwrap();
    }
    println!("full fwd only: {:.2} ms/example", t.elapsed().as_secs_f64() * 1000.0 / n as f64);

    // encoder-only forward
    let t = Instant::now();
    for i in 0..n {
        let mut g: Graph<f32> = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let _ = encode(&mut g, &bound, &cfg, &img, true, &mut rng).unwrap();
    }
    println!("encode fwd:   {:.2} ms/example", t.elapsed().as_secs_f64() * 1000.0 / n as f64);

    // bind-only cost (param copies)
    let t = Instant::now();
    for _ in 0..n {
        let mut g: Graph<f32> = Graph::new();
        let _ = bind(&mut g, &params, &cfg);
    }
    println!("bind only:    {:.2} ms/example", t.elapsed().as_secs_f64() * 1000.0 / n as f64);
}
