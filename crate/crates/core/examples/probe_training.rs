// Scratch probe: synthetic-task learning speed at various learning rates.
use dctconv::data::image::AugmentConfig;
use dctconv::data::{stratified_split, synth_dataset, SynthSpec};
use dctconv::model::ModelConfig;
use dctconv::rng::RngState;
use dctconv::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10);
    let aug: bool = args.get(4).map(|s| s == "aug").unwrap_or(false);
    let size: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(64);
    let n_per_class: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(150);

    let plan = ModelConfig::default_config((3, size, size), 2).plan().unwrap();
    let mut data_rng = RngState::new(4242);
    let samples = synth_dataset(
        &mut data_rng,
        &SynthSpec {
            classes: 2,
            n_per_class,
            size,
        },
    )
    .unwrap();
    let (ti, vi) = stratified_split(&samples, 2, 2.0 / 3.0, &mut data_rng);
    let train_set: Vec<_> = ti.iter().map(|&i| samples[i].clone()).collect();
    let val_set: Vec<_> = vi.iter().map(|&i| samples[i].clone()).collect();
    println!("train {} / val {}", train_set.len(), val_set.len());

    let cfg = TrainConfig {
        epochs,
        batch_size: 32,
        lr,
        weight_decay: 0.01,
        seed,
        augment: if aug {
            AugmentConfig::default()
        } else {
            AugmentConfig::none()
        },
        target_val_accuracy: Some(0.95),
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let out = train(&plan, &train_set, &val_set, &cfg).unwrap();
    for row in &out.curves {
        println!(
            "epoch {:2} {:5} loss {:.4} acc {:.3}",
            row.epoch, row.split, row.loss, row.accuracy
        );
    }
    println!(
        "lr {lr} seed {seed} aug {aug}: {} epochs in {:.1}s, diverged: {:?}",
        out.epochs_run,
        t0.elapsed().as_secs_f64(),
        out.diverged
    );
}
