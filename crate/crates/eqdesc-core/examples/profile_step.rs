// Throwaway step profiler (deleted before ship).
use eqdesc_core::autodiff::SgdState;
use eqdesc_core::data::{END_ID, START_ID};
use eqdesc_core::expr::{sample_equation, Category};
use eqdesc_core::layout::render;
use eqdesc_core::model::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let cfg = ModelConfig::desk_default(74);
    let mut params: Params<f32> = init_params(&cfg, 7);
    let mut opt = SgdState::new();
    let hyper = Hyper { lr: 0.3, momentum: 0.9, weight_decay: 1e-4 };
    let examples: Vec<_> = (0..50u64)
        .map(|s| {
            let e = sample_equation(Category::ALL[(s % 7) as usize], &mut ChaCha8Rng::seed_from_u64(s), 4);
            let img = render(&e, 64, 256);
            let toks: Vec<u32> = std::iter::once(START_ID).chain((0..13).map(|i| 4 + (s as u32 + i) % 60)).chain(std::iter::once(END_ID)).collect();
            (img, toks)
        })
        .collect();
    let batch = Batch::new(examples);
    // warmup
    let _ = train_step(&mut params, &mut opt, &cfg, &batch, &hyper, 0).unwrap();
    let t = Instant::now();
    let n = 10;
    for i in 0..n {
        let _ = train_step(&mut params, &mut opt, &cfg, &batch, &hyper, i).unwrap();
    }
    let per_step = t.elapsed().as_secs_f64() / n as f64;
    println!("train_step(batch=50): {:.1} ms -> {:.1} s per 2000-example epoch", per_step * 1000.0, per_step * 40.0);
}
