// Throwaway calibration harness (deleted before ship): measures epoch time
// and val-BLEU trajectory for candidate desk configurations.
use eqdesc_core::pipeline::{gen_data, train_with_progress, RunConfig};
use std::path::PathBuf;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let tag = args.get(1).cloned().unwrap_or_else(|| "a".into());
    let mut cfg = RunConfig::default();
    for kv in &args[2..] {
        let (k, v) = kv.split_once('=').unwrap();
        cfg.set(k, v).unwrap();
    }
    let data = PathBuf::from(format!("/tmp/cal-{tag}-data"));
    let run = PathBuf::from(format!("/tmp/cal-{tag}-run"));
    let _ = std::fs::remove_dir_all(&run);
    let t0 = Instant::now();
    if !data.join("manifest.jsonl").exists() {
        let s = gen_data(&cfg, &data, None).unwrap();
        println!("gen: {} records, vocab {} ({:?})", s.records, s.vocab_size, t0.elapsed());
    }
    let t1 = Instant::now();
    let mut last = t1;
    train_with_progress(&data, &cfg, &run, None, |log| {
        let now = Instant::now();
        println!(
            "epoch {:>3} loss {:.4} val_bleu4 {:.4} ({:.1}s)",
            log.epoch, log.train_loss, log.val_bleu4,
            (now - last).as_secs_f64()
        );
        last = now;
    })
    .unwrap();
    println!("total train {:?}", t1.elapsed());
}
