// Scratch probe: 32-sample overfit speed on the micro config.
use dctconv::data::image::AugmentConfig;
use dctconv::data::{synth_dataset, SynthSpec};
use dctconv::model::ModelConfig;
use dctconv::rng::RngState;
use dctconv::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3e-3);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);

    let plan = ModelConfig::micro_config().plan().unwrap();
    let mut data_rng = RngState::new(777);
    let samples = synth_dataset(
        &mut data_rng,
        &SynthSpec {
            classes: 2,
            n_per_class: 16,
            size: 16,
        },
    )
    .unwrap();

    // batch = full 32-sample set, so one step per epoch
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 32,
        lr,
        weight_decay: 0.0,
        seed,
        augment: AugmentConfig::none(),
        target_val_accuracy: None,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let out = train(&plan, &samples, &[][..] as &[dctconv::data::Sample], &cfg).unwrap();
    let first_perfect = out
        .curves
        .iter()
        .find(|r| r.split == "train" && r.accuracy >= 1.0)
        .map(|r| r.epoch);
    println!(
        "lr {lr} seed {seed}: first 100% train accuracy at step {:?} ({} steps run, {:.1}s)",
        first_perfect,
        out.epochs_run,
        t0.elapsed().as_secs_f64()
    );
}
