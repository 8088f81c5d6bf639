// Scratch probe: per-tensor FD disagreement in the micro-model sweep.
use dctconv::autodiff::Tape;
use dctconv::model::{
    bind_weights, collect_grads, forward_on_tape, forward_single, init_weights, ModelConfig,
    ModelWeights,
};
use dctconv::rng::RngState;
use dctconv::tensor::Tensor;

fn model_loss(
    plan: &dctconv::model::ModelPlan,
    weights: &ModelWeights,
    x: &Tensor,
    label: usize,
) -> f64 {
    let logits = forward_single(plan, weights, x).unwrap();
    let mut tape = Tape::new();
    let lv = tape.leaf(logits);
    let loss = tape.cross_entropy(lv, &[label]).unwrap();
    tape.value(loss).data()[0]
}

fn main() {
    let seed = 12345u64;
    let plan = ModelConfig::micro_config().plan().unwrap();
    let mut rng = RngState::new(seed);
    let weights = init_weights(&plan, &mut rng);
    let x = rng.rand_uniform(&[3, 16, 16], 0.0, 1.0);
    let label = 1usize;

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = bind_weights(&mut tape, &weights);
    let logits = forward_on_tape(&mut tape, &plan, &wv, xv).unwrap();
    let loss = tape.cross_entropy(logits, &[label]).unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic = collect_grads(&tape, &wv, &grads);

    let mut names = Vec::new();
    analytic.visit(&mut |n, _: &Tensor| names.push(n));
    let mut aflat = Vec::new();
    analytic.visit(&mut |_, t: &Tensor| aflat.push(t.clone()));

    let h = 1e-5;
    for (ti, name) in names.iter().enumerate() {
        let len = aflat[ti].len();
        let mut fd = Tensor::zeros(aflat[ti].shape());
        for e in 0..len {
            let mut loss_at = |delta: f64| {
                let mut w = weights.clone();
                let mut idx = 0;
                w.visit_mut(&mut |t: &mut Tensor| {
                    if idx == ti {
                        t.data_mut()[e] += delta;
                    }
                    idx += 1;
                });
                model_loss(&plan, &w, &x, label)
            };
            fd.data_mut()[e] = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        }
        let num = aflat[ti]
            .data()
            .iter()
            .zip(fd.data())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        let den = aflat[ti].max_abs().max(fd.max_abs()).max(1e-8);
        let rel = num / den;
        let marker = if rel > 1e-4 { "  <-- FAIL" } else { "" };
        println!(
            "{name:<28} rel {rel:.3e}  (max analytic {:.3e}, max fd {:.3e}){marker}",
            aflat[ti].max_abs(),
            fd.max_abs()
        );
    }
}
