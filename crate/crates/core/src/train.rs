//! Cross-entropy loss, the AdamW optimizer with decoupled weight decay, and
//! the deterministic training loop.
//!
//! All randomness (weight init, shuffling, augmentation draws) flows from
//! one seed through derived counter-based streams, so identical configs
//! produce bit-identical loss curves. Augmentation streams are keyed by
//! (epoch, sample index), independent of batch composition.

use crate::autodiff::Tape;
use crate::checkpoint::{Checkpoint, Dtype};
use crate::data::image::{augment, AugmentConfig};
use crate::data::{Sample, SampleSource};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::model::{
    bind_weights, collect_grads, forward_on_tape, forward_single, init_weights, ModelPlan,
    ModelWeights, ModelWeightsOf,
};
use crate::rng::RngState;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Mean over the batch of -log softmax(logits)[label].
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let lv = tape.leaf(logits.clone());
    let loss = tape.cross_entropy(lv, labels)?;
    Ok(tape.value(loss).data()[0])
}

/// Placeholder for schedules; only the constant rate exists, matching the
/// single reported initial rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Used when a dataset arrives unsplit.
    pub train_fraction: f64,
    pub lr_schedule: LrSchedule,
    /// Stop once validation accuracy reaches this value.
    pub target_val_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            lr: 1e-4,
            weight_decay: 0.01,
            seed: 0,
            augment: AugmentConfig::default(),
            train_fraction: 0.7,
            lr_schedule: LrSchedule::Constant,
            target_val_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train: epochs and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train: lr and weight_decay must be non-negative".into()));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Config("train: train_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

struct Moments {
    m: Tensor,
    v: Tensor,
}

/// AdamW state: per-weight first/second moments in weight traversal order,
/// bias-corrected, with decoupled weight decay.
pub struct AdamWState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    moments: Vec<Moments>,
}

impl AdamWState {
    pub fn new(weights: &ModelWeights, lr: f64, weight_decay: f64) -> AdamWState {
        let mut moments = Vec::new();
        weights.visit(&mut |_, t: &Tensor| {
            moments.push(Moments {
                m: Tensor::zeros(t.shape()),
                v: Tensor::zeros(t.shape()),
            })
        });
        AdamWState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            moments,
        }
    }

    /// Number of tracked weight tensors.
    pub fn tracked(&self) -> usize {
        self.moments.len()
    }

    /// Archive entries for optional persistence alongside the weights.
    pub fn to_checkpoint_entries(&self, ckpt: &mut Checkpoint, names: &[String]) {
        for (name, mom) in names.iter().zip(self.moments.iter()) {
            ckpt.push(format!("optim.m.{name}"), Dtype::F64, mom.m.clone());
            ckpt.push(format!("optim.v.{name}"), Dtype::F64, mom.v.clone());
        }
        ckpt.push(
            "optim.step",
            Dtype::F64,
            Tensor::new(vec![1], vec![self.step as f64]).expect("scalar"),
        );
    }
}

/// One AdamW update. Decay is decoupled (applied directly to the weight,
/// separate from the adaptive step); moments are bias-corrected. A
/// non-finite gradient aborts with the offending tensor named.
pub fn adamw_step(
    weights: &mut ModelWeights,
    grads: &ModelWeightsOf<Tensor>,
    state: &mut AdamWState,
) -> Result<()> {
    let flat_grads: Vec<(String, Tensor)> = grads.named();
    if flat_grads.len() != state.moments.len() {
        return Err(Error::Config(format!(
            "adamw: {} gradient tensors for {} tracked weights",
            flat_grads.len(),
            state.moments.len()
        )));
    }
    for (name, g) in &flat_grads {
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "adamw: non-finite gradient in tensor '{name}'"
            )));
        }
    }
    let flat_grads: Vec<&Tensor> = flat_grads.iter().map(|(_, t)| t).collect();
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    let mut idx = 0usize;
    weights.visit_mut(&mut |w: &mut Tensor| {
        let g = flat_grads[idx];
        let mom = &mut state.moments[idx];
        for e in 0..w.len() {
            let gv = g.data()[e];
            let wv = &mut w.data_mut()[e];
            // decoupled decay first, separate from the adaptive step
            *wv *= 1.0 - state.lr * state.weight_decay;
            let m = &mut mom.m.data_mut()[e];
            let v = &mut mom.v.data_mut()[e];
            *m = state.beta1 * *m + (1.0 - state.beta1) * gv;
            *v = state.beta2 * *v + (1.0 - state.beta2) * gv * gv;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *wv -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        idx += 1;
    });
    Ok(())
}

/// One learning-curve row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn curves_to_csv(rows: &[EpochRow]) -> String {
    let mut s = String::from("epoch,split,loss,accuracy,precision,recall,f1\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch, r.split, r.loss, r.accuracy, r.precision, r.recall, r.f1
        );
    }
    s
}

/// Result of a training run. `diverged` marks an aborted run; the weights
/// are then the last finite state.
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub curves: Vec<EpochRow>,
    pub final_val: Option<MetricsReport>,
    pub epochs_run: usize,
    pub diverged: Option<String>,
}

/// Mean loss and confusion matrix over the indexed subset of a source
/// (no augmentation).
pub fn evaluate_indices<S: SampleSource + ?Sized>(
    plan: &ModelPlan,
    weights: &ModelWeights,
    source: &S,
    indices: &[usize],
) -> Result<(f64, ConfusionMatrix)> {
    if indices.is_empty() {
        return Err(Error::Input("evaluate: no samples".into()));
    }
    let k = plan.config.num_classes;
    let mut cm = ConfusionMatrix::new(k);
    let mut loss_sum = 0.0;
    for &i in indices {
        let s = source.get(i)?;
        let logits = forward_single(plan, weights, &s.image)?;
        loss_sum += cross_entropy(&logits, &[s.label])?;
        cm.accumulate(s.label, argmax(logits.data()))?;
    }
    Ok((loss_sum / indices.len() as f64, cm))
}

/// Mean loss and confusion matrix over a whole sample set.
pub fn evaluate<S: SampleSource + ?Sized>(
    plan: &ModelPlan,
    weights: &ModelWeights,
    samples: &S,
) -> Result<(f64, ConfusionMatrix)> {
    let indices: Vec<usize> = (0..samples.len()).collect();
    evaluate_indices(plan, weights, samples, &indices)
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

fn row_from(epoch: usize, split: &str, loss: f64, report: &MetricsReport) -> EpochRow {
    EpochRow {
        epoch,
        split: split.to_string(),
        loss,
        accuracy: report.accuracy,
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
    }
}

/// Deterministic training loop: per-epoch shuffling, per-sample
/// augmentation on the train split only, AdamW updates, and per-epoch
/// train/val learning-curve rows.
pub fn train<S1, S2>(
    plan: &ModelPlan,
    train_set: &S1,
    val_set: &S2,
    cfg: &TrainConfig,
) -> Result<TrainOutcome>
where
    S1: SampleSource + ?Sized,
    S2: SampleSource + ?Sized,
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("train: empty training set".into()));
    }
    let base = RngState::new(cfg.seed);
    let mut init_rng = base.derive(1);
    let mut weights = init_weights(plan, &mut init_rng);
    let mut state = AdamWState::new(&weights, cfg.lr, cfg.weight_decay);
    let k = plan.config.num_classes;

    let mut curves = Vec::new();
    let mut final_val = None;
    let mut epochs_run = 0;
    let mut diverged = None;

    'training: for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = base.derive(1000 + epoch as u64);
        shuffle_rng.shuffle(&mut order);

        let mut cm = ConfusionMatrix::new(k);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let last_good = weights.clone();
            let mut batch_loss = 0.0;
            let mut grad_acc: Option<ModelWeightsOf<Tensor>> = None;
            let inv_b = 1.0 / batch.len() as f64;
            for &idx in batch {
                let sample = train_set.get(idx)?;
                let mut aug_rng =
                    base.derive(((epoch as u64) << 32) ^ (idx as u64).wrapping_add(2));
                let image = augment(&sample.image, &mut aug_rng, &cfg.augment);

                let mut tape = Tape::new();
                let xv = tape.leaf(image);
                let wv = bind_weights(&mut tape, &weights);
                let logits = forward_on_tape(&mut tape, plan, &wv, xv)?;
                let loss = tape.cross_entropy(logits, &[sample.label])?;
                batch_loss += tape.value(loss).data()[0] * inv_b;
                cm.accumulate(sample.label, argmax(tape.value(logits).data()))?;
                let grads = tape.backward(loss)?;
                let sample_grads = collect_grads(&tape, &wv, &grads);
                grad_acc = Some(match grad_acc {
                    None => sample_grads.map(|t| t.scale(inv_b)),
                    Some(mut acc) => {
                        let flat = sample_grads.named();
                        let mut i = 0;
                        acc.visit_mut(&mut |a: &mut Tensor| {
                            for (av, gv) in a.data_mut().iter_mut().zip(flat[i].1.data()) {
                                *av += gv * inv_b;
                            }
                            i += 1;
                        });
                        acc
                    }
                });
            }
            if !batch_loss.is_finite() {
                diverged = Some(format!("non-finite loss at epoch {epoch}"));
                weights = last_good;
                break 'training;
            }
            let grads = grad_acc.expect("non-empty batch");
            if let Err(e) = adamw_step(&mut weights, &grads, &mut state) {
                diverged = Some(e.to_string());
                weights = last_good;
                break 'training;
            }
            loss_sum += batch_loss * batch.len() as f64;
            seen += batch.len();
        }
        epochs_run = epoch;
        let train_report = compute_metrics(&cm)?;
        curves.push(row_from(
            epoch,
            "train",
            loss_sum / seen as f64,
            &train_report,
        ));

        if !val_set.is_empty() {
            let (val_loss, val_cm) = evaluate(plan, &weights, val_set)?;
            let val_report = compute_metrics(&val_cm)?;
            curves.push(row_from(epoch, "val", val_loss, &val_report));
            let reached = cfg
                .target_val_accuracy
                .map(|t| val_report.accuracy >= t)
                .unwrap_or(false);
            final_val = Some(val_report);
            if reached {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        weights,
        curves,
        final_val,
        epochs_run,
        diverged,
    })
}

/// Archive model weights (and optionally optimizer state) under stable
/// names.
pub fn weights_to_checkpoint(
    weights: &ModelWeights,
    dtype: Dtype,
    optimizer: Option<&AdamWState>,
) -> Checkpoint {
    let mut ckpt = Checkpoint::new();
    let mut names = Vec::new();
    weights.visit(&mut |name, t: &Tensor| {
        ckpt.push(format!("model.{name}"), dtype, t.clone());
        names.push(name);
    });
    if let Some(state) = optimizer {
        state.to_checkpoint_entries(&mut ckpt, &names);
    }
    ckpt
}

/// Rebuild weights for `plan` from an archive, validating names and shapes.
pub fn weights_from_checkpoint(plan: &ModelPlan, ckpt: &Checkpoint) -> Result<ModelWeights> {
    let mut rng = RngState::new(0);
    let mut weights = init_weights(plan, &mut rng);
    let mut names = Vec::new();
    weights.visit(&mut |name, _: &Tensor| names.push(name));
    let mut idx = 0;
    let mut problem = None;
    weights.visit_mut(&mut |t: &mut Tensor| {
        let name = &names[idx];
        idx += 1;
        if problem.is_some() {
            return;
        }
        match ckpt.get(&format!("model.{name}")) {
            Some(found) if found.shape() == t.shape() => *t = found.clone(),
            Some(found) => {
                problem = Some(format!(
                    "tensor 'model.{name}' has shape {:?}, plan wants {:?}",
                    found.shape(),
                    t.shape()
                ))
            }
            None => problem = Some(format!("tensor 'model.{name}' missing from checkpoint")),
        }
    });
    match problem {
        Some(p) => Err(Error::Input(format!("checkpoint does not fit the model: {p}"))),
        None => Ok(weights),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthSpec};
    use crate::model::ModelConfig;

    #[test]
    fn cross_entropy_uniform_logits_is_ln_k() {
        for k in [2usize, 5, 8] {
            let logits = Tensor::zeros(&[1, k]);
            let loss = cross_entropy(&logits, &[0]).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_saturates_on_dominant_correct_logit() {
        let mut logits = Tensor::zeros(&[1, 3]);
        logits.data_mut()[1] = 1000.0;
        let loss = cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let mut rng = RngState::new(1);
        let logits = rng.rand_uniform(&[4, 3], -2.0, 2.0);
        let labels = [0usize, 2, 1, 1];
        let got = cross_entropy(&logits, &labels).unwrap();
        // direct formula, no log-sum-exp shortcut
        let mut want = 0.0;
        for (b, &label) in labels.iter().enumerate() {
            let row: Vec<f64> = (0..3).map(|j| logits.at2(b, j)).collect();
            let z: f64 = row.iter().map(|&x| x.exp()).sum();
            want += -(row[label].exp() / z).ln();
        }
        want /= labels.len() as f64;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut rng = RngState::new(2);
        let logits = rng.rand_uniform(&[2, 3], -1.0, 1.0);
        let labels = [2usize, 0];
        let mut tape = Tape::new();
        let lv = tape.leaf(logits.clone());
        let loss = tape.cross_entropy(lv, &labels).unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic = grads.get(lv).unwrap();
        let p = logits.softmax(1).unwrap();
        for b in 0..2 {
            for j in 0..3 {
                let onehot = if j == labels[b] { 1.0 } else { 0.0 };
                let want = (p.at2(b, j) - onehot) / 2.0;
                assert!((analytic.at2(b, j) - want).abs() < 1e-12);
            }
        }
        // and against central differences
        let h = 1e-6;
        for b in 0..2 {
            for j in 0..3 {
                let mut plus = logits.clone();
                plus.data_mut()[b * 3 + j] += h;
                let mut minus = logits.clone();
                minus.data_mut()[b * 3 + j] -= h;
                let fd = (cross_entropy(&plus, &labels).unwrap()
                    - cross_entropy(&minus, &labels).unwrap())
                    / (2.0 * h);
                assert!((analytic.at2(b, j) - fd).abs() < 1e-6);
            }
        }
    }

    fn micro_setup() -> (crate::model::ModelPlan, ModelWeights) {
        let plan = ModelConfig::micro_config().plan().unwrap();
        let mut rng = RngState::new(3);
        let weights = init_weights(&plan, &mut rng);
        (plan, weights)
    }

    fn zero_grads(weights: &ModelWeights) -> ModelWeightsOf<Tensor> {
        weights.map(|t| Tensor::zeros(t.shape()))
    }

    #[test]
    fn adamw_zero_gradient_without_decay_keeps_weights() {
        let (_, mut weights) = micro_setup();
        let before = weights.clone();
        let grads = zero_grads(&weights);
        let mut state = AdamWState::new(&weights, 1e-3, 0.0);
        for _ in 0..5 {
            adamw_step(&mut weights, &grads, &mut state).unwrap();
        }
        let mut max_diff = 0.0f64;
        let flat_b: Vec<(String, Tensor)> = before.named();
        let flat_a: Vec<(String, Tensor)> = weights.named();
        for ((_, b), (_, a)) in flat_b.iter().zip(flat_a.iter()) {
            max_diff = max_diff.max(b.sub(a).unwrap().max_abs());
        }
        assert_eq!(max_diff, 0.0);
    }

    #[test]
    fn adamw_single_step_matches_hand_computation() {
        // scalar g = 0.5, lr = 1e-4, zero moments: the first update is
        // -lr * g / (sqrt(g^2) + eps) after bias correction, which is
        // approximately -lr * sign(g)
        let (_, mut weights) = micro_setup();
        let w0 = weights.stem.gamma.data()[0];
        let mut grads = zero_grads(&weights);
        grads.stem.gamma.data_mut()[0] = 0.5;
        let mut state = AdamWState::new(&weights, 1e-4, 0.0);
        adamw_step(&mut weights, &grads, &mut state).unwrap();
        let got = weights.stem.gamma.data()[0] - w0;
        let g = 0.5f64;
        let m_hat = g; // m / (1 - beta1)
        let v_hat = g * g; // v / (1 - beta2)
        let want = -1e-4 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        assert!((got + 1e-4).abs() < 1e-9, "approximately -lr * sign(g)");
    }

    #[test]
    fn adamw_decoupled_decay_shrinks_exactly() {
        let (_, mut weights) = micro_setup();
        let w0 = weights.head_weight.clone();
        let grads = zero_grads(&weights);
        let (lr, wd) = (1e-2, 0.1);
        let mut state = AdamWState::new(&weights, lr, wd);
        // each step shrinks by exactly (1 - lr * wd)
        adamw_step(&mut weights, &grads, &mut state).unwrap();
        let w1 = weights.head_weight.clone();
        assert_eq!(w1.sub(&w0.scale(1.0 - lr * wd)).unwrap().max_abs(), 0.0);
        adamw_step(&mut weights, &grads, &mut state).unwrap();
        let w2 = weights.head_weight.clone();
        assert_eq!(w2.sub(&w1.scale(1.0 - lr * wd)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn adamw_rejects_non_finite_gradient_naming_tensor() {
        let (_, mut weights) = micro_setup();
        let mut grads = zero_grads(&weights);
        grads.blocks[0].freq.dc_gamma.data_mut()[0] = f64::NAN;
        let mut state = AdamWState::new(&weights, 1e-3, 0.0);
        match adamw_step(&mut weights, &grads, &mut state) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("block0.freq.dc_gamma"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    fn tiny_dataset(size: usize, n: usize) -> Vec<Sample> {
        let mut rng = RngState::new(11);
        synth_dataset(
            &mut rng,
            &SynthSpec {
                classes: 2,
                n_per_class: n,
                size,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_lr_zero_decay_leaves_weights_unchanged() {
        let plan = ModelConfig::micro_config().plan().unwrap();
        let data = tiny_dataset(16, 4);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 0.0,
            weight_decay: 0.0,
            seed: 5,
            augment: AugmentConfig::none(),
            ..TrainConfig::default()
        };
        let outcome = train(&plan, &data, &[][..] as &[Sample], &cfg).unwrap();
        let mut fresh_rng = RngState::new(cfg.seed).derive(1);
        let fresh = init_weights(&plan, &mut fresh_rng);
        for ((_, a), (_, b)) in outcome.weights.named().iter().zip(fresh.named().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_loss_curves() {
        let plan = ModelConfig::micro_config().plan().unwrap();
        let data = tiny_dataset(16, 6);
        let (train_set, val_set) = data.split_at(8);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 1e-3,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&plan, train_set, val_set, &cfg).unwrap();
        let b = train(&plan, train_set, val_set, &cfg).unwrap();
        assert_eq!(a.curves.len(), b.curves.len());
        for (ra, rb) in a.curves.iter().zip(b.curves.iter()) {
            assert!(ra.loss.to_bits() == rb.loss.to_bits(), "epoch {}", ra.epoch);
            assert_eq!(ra.accuracy, rb.accuracy);
        }
    }

    #[test]
    fn loss_decreases_on_tiny_overfit_smoke() {
        let plan = ModelConfig::micro_config().plan().unwrap();
        let data = tiny_dataset(16, 8);
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 16,
            lr: 3e-3,
            weight_decay: 0.0,
            seed: 1,
            augment: AugmentConfig::none(),
            ..TrainConfig::default()
        };
        let outcome = train(&plan, &data, &[][..] as &[Sample], &cfg).unwrap();
        let first = outcome.curves.first().unwrap().loss;
        let last = outcome.curves.last().unwrap().loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn checkpoint_roundtrip_restores_weights() {
        let (plan, weights) = micro_setup();
        let state = AdamWState::new(&weights, 1e-4, 0.01);
        let ckpt = weights_to_checkpoint(&weights, Dtype::F64, Some(&state));
        let back = weights_from_checkpoint(&plan, &ckpt).unwrap();
        for ((na, a), (nb, b)) in weights.named().iter().zip(back.named().iter()) {
            assert_eq!(na, nb);
            assert_eq!(a, b);
        }
        assert!(ckpt.get("optim.step").is_some());
    }

    #[test]
    fn checkpoint_shape_mismatch_is_reported() {
        let (plan, weights) = micro_setup();
        let mut ckpt = weights_to_checkpoint(&weights, Dtype::F64, None);
        ckpt.entries[0].tensor = Tensor::zeros(&[1, 1, 1, 1]);
        assert!(weights_from_checkpoint(&plan, &ckpt).is_err());
    }
}
