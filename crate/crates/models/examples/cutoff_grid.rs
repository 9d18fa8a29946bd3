//! Trains every main model at one cutoff on the default dataset and prints
//! per-bin test accuracy.
//!
//! cargo run --release -p propnli-models --example cutoff_grid -- <cutoff> [epochs] [kinds...]

use std::time::Instant;

use propnli_core::{generate_pairs, split_dataset, GenConfig};
use propnli_models::{run_experiment, EncoderKind, ModelConfig, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cutoff: usize = args.first().map(|s| s.parse().expect("cutoff")).unwrap_or(4);
    let epochs: usize = args.get(1).map(|s| s.parse().expect("epochs")).unwrap_or(100);
    let kinds: Vec<EncoderKind> = if args.len() > 2 {
        args[2..].iter().map(|s| s.parse().expect("kind")).collect()
    } else {
        EncoderKind::MAIN.to_vec()
    };
    let data = generate_pairs(&GenConfig::default()).expect("generate");
    let split = split_dataset(&data, 0.8, 42);
    for kind in kinds {
        let start = Instant::now();
        let mc = ModelConfig::new(kind, 42);
        let tc = TrainConfig { epochs, ..TrainConfig::default() };
        let (_, r) = run_experiment(&split, cutoff, &mc, &tc).expect("experiment");
        let accs: Vec<String> = (1..=12).map(|b| format!("{:.1}", 100.0 * r.test.accuracy(b).unwrap_or(0.0))).collect();
        println!(
            "{kind:9} train {:.1} base {:.1} | {} | {:.0}s",
            100.0 * r.train_accuracy().unwrap_or(0.0),
            100.0 * r.baseline_test.pooled(1..=cutoff).unwrap_or(0.0),
            accs.join(" "),
            start.elapsed().as_secs_f64()
        );
    }
}
