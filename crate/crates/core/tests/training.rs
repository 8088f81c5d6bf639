//! Training-dynamics invariants on the synthetic dataset.

use dctconv::data::{stratified_split, synth_dataset, Sample, SynthSpec};
use dctconv::model::ModelConfig;
use dctconv::rng::RngState;
use dctconv::train::{train, TrainConfig};

/// Loss decreases over the first 10 epochs for the default model and
/// training hyperparameters, monotone in the 3-epoch moving average, across
/// seeds {0, 1, 2}. Run at 32 x 32 desk scale to keep the sweep affordable.
#[test]
fn loss_decreases_over_first_ten_epochs_default_config() {
    let plan = ModelConfig::default_config((3, 32, 32), 2).plan().unwrap();
    let mut data_rng = RngState::new(4242);
    let samples = synth_dataset(
        &mut data_rng,
        &SynthSpec {
            classes: 2,
            n_per_class: 150,
            size: 32,
        },
    )
    .unwrap();

    for seed in [0u64, 1, 2] {
        let mut split_rng = RngState::new(seed).derive(3);
        let (ti, vi) = stratified_split(&samples, 2, 2.0 / 3.0, &mut split_rng);
        let train_set: Vec<Sample> = ti.iter().map(|&i| samples[i].clone()).collect();
        let val_set: Vec<Sample> = vi.iter().map(|&i| samples[i].clone()).collect();

        let cfg = TrainConfig {
            epochs: 10,
            seed,
            target_val_accuracy: None,
            ..TrainConfig::default()
        };
        let outcome = train(&plan, &train_set, &val_set, &cfg).unwrap();
        assert!(outcome.diverged.is_none());
        let losses: Vec<f64> = outcome
            .curves
            .iter()
            .filter(|r| r.split == "train")
            .map(|r| r.loss)
            .collect();
        assert_eq!(losses.len(), 10);
        let ma: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
        for (i, pair) in ma.windows(2).enumerate() {
            assert!(
                pair[1] < pair[0],
                "seed {seed}: moving average rose at window {i}: {ma:?}"
            );
        }
    }
}
