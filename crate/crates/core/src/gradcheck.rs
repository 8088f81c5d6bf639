//! Central finite-difference verification of every registered tape op and
//! of the full micro model, plus adjoint-pair inner-product checks for the
//! linear transforms.
//!
//! All checks run in 64-bit with step 1e-5 against a relative tolerance of
//! 1e-4. The scalar probe loss is sum(w * op(x)) for a fixed random w, so
//! every output element influences the loss.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{
    bind_weights, collect_grads, forward_on_tape, forward_single, init_weights, ModelConfig,
    ModelWeights,
};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Finite-difference step (64-bit).
pub const FD_STEP: f64 = 1e-5;
/// Relative error tolerance every check must meet.
pub const REL_TOL: f64 = 1e-4;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// |<A x, y> - <x, A^T y>| for linear ops with an adjoint-pair check.
    pub adjoint_err: Option<f64>,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < REL_TOL
    }
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

/// max |a - b| normalized by the larger gradient magnitude. The 1e-6
/// denominator floor keeps finite-difference noise from failing tensors
/// whose true gradients sit near the f64 resolution of the probe; a real
/// adjoint error still scales with the gradient and is caught.
fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let num = a
        .data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()));
    num / a.max_abs().max(b.max_abs()).max(1e-6)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Scalar probe loss: the op output itself when scalar, otherwise
/// sum(w * out) for the given weighting.
fn probe_loss(tape: &mut Tape, out: Var, w: &Tensor) -> Result<Var> {
    if tape.value(out).len() == 1 {
        return Ok(out);
    }
    let wv = tape.leaf(w.clone());
    let prod = tape.mul(out, wv)?;
    Ok(tape.sum_all(prod))
}

/// Compare reverse-mode gradients of `build` against central differences on
/// every element of every input.
fn fd_check(inputs: &[Tensor], build: &Build, seed: u64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let mut wrng = RngState::new(seed ^ 0x5EED_F00D);
    let w = wrng.rand_uniform(tape.shape(out), -1.0, 1.0);
    let loss = probe_loss(&mut tape, out, &w)?;
    let grads = tape.backward(loss)?;

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = probe.iter().map(|x| t.leaf(x.clone())).collect();
        let o = build(&mut t, &vs)?;
        let l = probe_loss(&mut t, o, &w)?;
        Ok(t.value(l).data()[0])
    };

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], input.shape());
        let mut fd = Tensor::zeros(input.shape());
        for e in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[e] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[e] -= FD_STEP;
            fd.data_mut()[e] = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic, &fd));
    }
    Ok(worst)
}

/// Inner-product adjoint test for a linear op: backward applied to y must
/// produce A^T y with <A x, y> = <x, A^T y>.
fn adjoint_check(input: &Tensor, build: &Build, seed: u64) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let out = build(&mut tape, &[x])?;
    let mut rng = RngState::new(seed ^ 0xAD01);
    let y = rng.rand_uniform(tape.shape(out), -1.0, 1.0);
    let yv = tape.leaf(y.clone());
    let prod = tape.mul(out, yv)?;
    let loss = tape.sum_all(prod);
    let grads = tape.backward(loss)?;
    let at_y = grads.get_or_zeros(x, input.shape());
    Ok((dot(tape.value(out), &y) - dot(input, &at_y)).abs())
}

struct Scenario {
    name: &'static str,
    inputs: Vec<Tensor>,
    build: Box<Build>,
    /// linear ops additionally get the adjoint-pair check on input 0
    adjoint: bool,
}

fn scenarios(seed: u64) -> Vec<Scenario> {
    let mut rng = RngState::new(seed);
    let mut r = |shape: &[usize], lo: f64, hi: f64| rng.rand_uniform(shape, lo, hi);

    let mut list: Vec<Scenario> = Vec::new();
    let mut push = |name: &'static str,
                    inputs: Vec<Tensor>,
                    adjoint: bool,
                    build: Box<Build>| {
        list.push(Scenario {
            name,
            inputs,
            build,
            adjoint,
        })
    };

    push(
        "add",
        vec![r(&[2, 3], -1.0, 1.0), r(&[2, 3], -1.0, 1.0)],
        false,
        Box::new(|t, v| t.add(v[0], v[1])),
    );
    push(
        "sub",
        vec![r(&[2, 3], -1.0, 1.0), r(&[2, 3], -1.0, 1.0)],
        false,
        Box::new(|t, v| t.sub(v[0], v[1])),
    );
    push(
        "mul",
        vec![r(&[2, 3], -1.0, 1.0), r(&[2, 3], -1.0, 1.0)],
        false,
        Box::new(|t, v| t.mul(v[0], v[1])),
    );
    push(
        "scale",
        vec![r(&[2, 3], -1.0, 1.0)],
        true,
        Box::new(|t, v| Ok(t.scale(v[0], -1.7))),
    );
    push(
        "relu6",
        vec![r(&[3, 4], -2.0, 8.0)],
        false,
        Box::new(|t, v| Ok(t.relu6(v[0]))),
    );
    push(
        "gelu",
        vec![r(&[3, 4], -3.0, 3.0)],
        false,
        Box::new(|t, v| Ok(t.gelu(v[0]))),
    );
    push(
        "matmul",
        vec![r(&[3, 4], -1.0, 1.0), r(&[4, 2], -1.0, 1.0)],
        false,
        Box::new(|t, v| t.matmul(v[0], v[1])),
    );
    push(
        "transpose",
        vec![r(&[3, 4], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.transpose(v[0])),
    );
    push(
        "softmax",
        vec![r(&[3, 5], -2.0, 2.0)],
        false,
        Box::new(|t, v| t.softmax(v[0], 1)),
    );
    push(
        "reshape",
        vec![r(&[2, 6], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.reshape(v[0], &[3, 4])),
    );
    push(
        "sum_all",
        vec![r(&[2, 3], -1.0, 1.0)],
        false,
        Box::new(|t, v| Ok(t.sum_all(v[0]))),
    );
    push(
        "dct2d",
        vec![r(&[2, 4, 4], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.dct2d(v[0])),
    );
    push(
        "idct2d",
        vec![r(&[2, 4, 4], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.idct2d(v[0])),
    );
    push(
        "dc_scale",
        vec![r(&[2, 3, 4], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.dc_scale(v[0])),
    );
    push(
        "channel_affine",
        vec![
            r(&[2, 3, 3], -1.0, 1.0),
            r(&[2], 0.5, 1.5),
            r(&[2], -0.5, 0.5),
        ],
        false,
        Box::new(|t, v| t.channel_affine(v[0], v[1], v[2])),
    );
    push(
        "crop",
        vec![r(&[2, 4, 6], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.crop_corner(v[0], 2, 3)),
    );
    push(
        "pad",
        vec![r(&[2, 2, 3], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.pad_corner(v[0], 4, 6)),
    );
    push(
        "tokenize",
        vec![r(&[3, 2, 2], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.tokenize(v[0])),
    );
    push(
        "untokenize",
        vec![r(&[6, 2], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.untokenize(v[0], 2, 3)),
    );
    push(
        "conv2d",
        vec![r(&[2, 5, 5], -1.0, 1.0), r(&[3, 2, 3, 3], -1.0, 1.0)],
        false,
        Box::new(|t, v| t.conv2d(v[0], v[1], 2, 1)),
    );
    push(
        "depthwise_conv2d",
        vec![r(&[2, 5, 5], -1.0, 1.0), r(&[2, 3, 3], -1.0, 1.0)],
        false,
        Box::new(|t, v| t.depthwise_conv2d(v[0], v[1], 2, 1)),
    );
    push(
        "concat_cols",
        vec![r(&[3, 2], -1.0, 1.0), r(&[3, 3], -1.0, 1.0)],
        false,
        Box::new(|t, v| t.concat_cols(v)),
    );
    push(
        "slice_cols",
        vec![r(&[3, 5], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.slice_cols(v[0], 1, 2)),
    );
    push(
        "global_avg_pool",
        vec![r(&[2, 3, 4], -1.0, 1.0)],
        true,
        Box::new(|t, v| t.global_avg_pool(v[0])),
    );
    push(
        "cross_entropy",
        vec![r(&[3, 4], -2.0, 2.0)],
        false,
        Box::new(|t, v| t.cross_entropy(v[0], &[0, 2, 1])),
    );
    list
}

/// Names accepted by [`check_op`], in registry order; `model` is the full
/// micro-model sweep.
pub fn op_names() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = scenarios(0).iter().map(|s| s.name).collect();
    names.push("model");
    names
}

/// Check one registered op (or "model", or the "negative-control"
/// fixture) against central finite differences.
pub fn check_op(name: &str, seed: u64) -> Result<OpCheck> {
    if name == "model" {
        return check_micro_model(seed);
    }
    if name == "negative-control" {
        return check_negative_control(seed);
    }
    let scenario = scenarios(seed)
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Input(format!("gradcheck: unknown op '{name}'")))?;
    let max_rel_err = fd_check(&scenario.inputs, &scenario.build, seed)?;
    let adjoint_err = if scenario.adjoint {
        Some(adjoint_check(&scenario.inputs[0], &scenario.build, seed)?)
    } else {
        None
    };
    Ok(OpCheck {
        name: name.to_string(),
        max_rel_err,
        adjoint_err,
    })
}

/// Check every registered op plus the micro model.
pub fn check_all(seed: u64) -> Result<Vec<OpCheck>> {
    op_names().iter().map(|n| check_op(n, seed)).collect()
}

fn model_loss(
    plan: &crate::model::ModelPlan,
    weights: &ModelWeights,
    x: &Tensor,
    label: usize,
) -> Result<f64> {
    let logits = forward_single(plan, weights, x)?;
    let mut tape = Tape::new();
    let lv = tape.leaf(logits);
    let loss = tape.cross_entropy(lv, &[label])?;
    Ok(tape.value(loss).data()[0])
}

/// Finite-difference sweep over every weight of the 2-block micro model.
///
/// Weights are jittered off the default init: relu6 clamps emit exact
/// zeros, and with zero-initialized affine shifts those land pre-activations
/// exactly on the kink, where central differences straddle the
/// non-differentiable point. A generic weight position keeps kink hits at
/// measure zero.
pub fn check_micro_model(seed: u64) -> Result<OpCheck> {
    let plan = ModelConfig::micro_config().plan()?;
    let mut rng = RngState::new(seed);
    let mut weights = init_weights(&plan, &mut rng);
    weights.visit_mut(&mut |t: &mut Tensor| {
        for v in t.data_mut() {
            *v += rng.uniform(-0.03, 0.03);
        }
    });
    let x = rng.rand_uniform(&[3, 16, 16], 0.0, 1.0);
    let label = 1usize;

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = bind_weights(&mut tape, &weights);
    let logits = forward_on_tape(&mut tape, &plan, &wv, xv)?;
    let loss = tape.cross_entropy(logits, &[label])?;
    let grads = tape.backward(loss)?;
    let analytic = collect_grads(&tape, &wv, &grads);

    let mut analytic_flat: Vec<Tensor> = Vec::new();
    analytic.visit(&mut |_, t: &Tensor| analytic_flat.push(t.clone()));

    let n_tensors = analytic_flat.len();
    let mut worst = 0.0f64;
    for ti in 0..n_tensors {
        let len = analytic_flat[ti].len();
        let mut fd = Tensor::zeros(analytic_flat[ti].shape());
        for e in 0..len {
            let loss_at = |delta: f64| -> Result<f64> {
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
            fd.data_mut()[e] = (loss_at(FD_STEP)? - loss_at(-FD_STEP)?) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic_flat[ti], &fd));
    }
    Ok(OpCheck {
        name: "model".into(),
        max_rel_err: worst,
        adjoint_err: None,
    })
}

/// Negative control: a deliberately corrupted adjoint must be caught.
fn check_negative_control(seed: u64) -> Result<OpCheck> {
    let mut rng = RngState::new(seed);
    let inputs = vec![rng.rand_uniform(&[2, 3], -1.0, 1.0)];
    let build: Box<Build> = Box::new(|t, v| Ok(t.bad_scale_for_negative_control(v[0])));
    let max_rel_err = fd_check(&inputs, &build, seed)?;
    Ok(OpCheck {
        name: "negative-control".into(),
        max_rel_err,
        adjoint_err: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_op_passes_fd_check() {
        for check in check_all(12345).unwrap() {
            if check.name == "model" {
                continue; // exercised by the integration suite
            }
            assert!(
                check.passed(),
                "{}: rel err {}",
                check.name,
                check.max_rel_err
            );
            if let Some(adj) = check.adjoint_err {
                assert!(adj < 1e-10, "{}: adjoint err {adj}", check.name);
            }
        }
    }

    #[test]
    fn negative_control_is_caught() {
        let check = check_op("negative-control", 7).unwrap();
        assert!(
            !check.passed(),
            "corrupted adjoint slipped through: {}",
            check.max_rel_err
        );
    }

    #[test]
    fn unknown_op_name_is_input_error() {
        assert!(matches!(check_op("no_such_op", 0), Err(Error::Input(_))));
    }
}
