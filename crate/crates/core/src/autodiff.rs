//! Tape-based reverse-mode differentiation over the crate's op set.
//!
//! A [`Tape`] records every operation with references to its input and
//! output values. [`Tape::backward`] replays the nodes once in reverse
//! creation order (reverse topological order by construction) and
//! accumulates gradients additively at fan-out. Every op carries its
//! adjoint by construction of the `TapeOp` trait, so a missing adjoint is
//! unrepresentable rather than a silent zero.
//!
//! Linear transform adjoints follow the transpose rule: the backward of the
//! orthonormal DCT is the inverse transform, the backward of a corner crop
//! is the matching zero-pad, and vice versa.

use crate::attention::{tokenize_raw, untokenize_raw};
use crate::error::{Error, Result};
use crate::frequency::{
    channel_affine_tensor, crop_corner, dc_scale_tensor, dct2d_tensor, idct2d_tensor, pad_corner,
};
use crate::mobileconv::{conv2d, depthwise_conv2d};
use crate::tensor::{gelu_grad, Tensor};

/// Handle to a value stored on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One recorded operation and the adjoint it replays backward.
trait TapeOp {
    fn name(&self) -> &'static str;
    /// Per-input gradients given input values, the output value, and the
    /// gradient arriving at the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

struct Node {
    inputs: Vec<Var>,
    output: Var,
    op: Box<dyn TapeOp>,
}

/// Records a forward computation for exact reverse-mode replay.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    nodes: Vec<Node>,
}

/// Gradient accumulators produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    g: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.g[v.0].as_ref()
    }

    /// Gradient for `v`, or zeros of the given shape when the loss does not
    /// depend on it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        match self.g[v.0].as_ref() {
            Some(t) => t.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    /// Insert a value with no producing op (weights and inputs).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.values.push(t);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    fn push(&mut self, inputs: Vec<Var>, out: Tensor, op: Box<dyn TapeOp>) -> Var {
        let output = self.leaf(out);
        self.nodes.push(Node { inputs, output, op });
        output
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(vec![a, b], out, Box::new(AddOp)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(vec![a, b], out, Box::new(SubOp)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(vec![a, b], out, Box::new(MulOp)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).scale(factor);
        self.push(vec![a], out, Box::new(ScaleOp { factor }))
    }

    pub fn relu6(&mut self, a: Var) -> Var {
        let out = self.value(a).relu6();
        self.push(vec![a], out, Box::new(Relu6Op))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).gelu();
        self.push(vec![a], out, Box::new(GeluOp))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(vec![a, b], out, Box::new(MatmulOp)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.push(vec![a], out, Box::new(TransposeOp)))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.value(a).softmax(axis)?;
        Ok(self.push(vec![a], out, Box::new(SoftmaxOp { axis })))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(vec![a], out, Box::new(ReshapeOp)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::new(vec![1], vec![self.value(a).sum()]).expect("scalar");
        self.push(vec![a], out, Box::new(SumAllOp))
    }

    /// Orthonormal per-channel 2D DCT of a C x M x N value.
    pub fn dct2d(&mut self, a: Var) -> Result<Var> {
        let out = dct2d_tensor(self.value(a))?;
        Ok(self.push(vec![a], out, Box::new(Dct2dOp)))
    }

    /// Inverse orthonormal per-channel 2D DCT.
    pub fn idct2d(&mut self, a: Var) -> Result<Var> {
        let out = idct2d_tensor(self.value(a))?;
        Ok(self.push(vec![a], out, Box::new(Idct2dOp)))
    }

    /// Divide each channel's DC coefficient by sqrt(M N).
    pub fn dc_scale(&mut self, a: Var) -> Result<Var> {
        let out = dc_scale_tensor(self.value(a))?;
        Ok(self.push(vec![a], out, Box::new(DcScaleOp)))
    }

    /// y[c,i,j] = gamma[c] * x[c,i,j] + beta[c].
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let out = channel_affine_tensor(self.value(x), self.value(gamma), self.value(beta))?;
        Ok(self.push(vec![x, gamma, beta], out, Box::new(ChannelAffineOp)))
    }

    /// Keep the top-left keep_m x keep_n corner of each channel.
    pub fn crop_corner(&mut self, a: Var, keep_m: usize, keep_n: usize) -> Result<Var> {
        let out = crop_corner(self.value(a), keep_m, keep_n)?;
        Ok(self.push(vec![a], out, Box::new(CropOp)))
    }

    /// Zero-pad each channel to target_m x target_n, source in the top-left.
    pub fn pad_corner(&mut self, a: Var, target_m: usize, target_n: usize) -> Result<Var> {
        let out = pad_corner(self.value(a), target_m, target_n)?;
        Ok(self.push(vec![a], out, Box::new(PadOp)))
    }

    /// C x m x n -> (m n) x C token matrix, spatial positions row-major.
    pub fn tokenize(&mut self, a: Var) -> Result<Var> {
        let out = tokenize_raw(self.value(a))?;
        Ok(self.push(vec![a], out, Box::new(TokenizeOp)))
    }

    /// (m n) x C -> C x m x n; exact inverse of [`Tape::tokenize`].
    pub fn untokenize(&mut self, a: Var, m: usize, n: usize) -> Result<Var> {
        let out = untokenize_raw(self.value(a), m, n)?;
        Ok(self.push(vec![a], out, Box::new(UntokenizeOp)))
    }

    pub fn conv2d(&mut self, x: Var, kernels: Var, stride: usize, padding: usize) -> Result<Var> {
        let out = conv2d(self.value(x), self.value(kernels), stride, padding)?;
        Ok(self.push(
            vec![x, kernels],
            out,
            Box::new(Conv2dOp { stride, padding }),
        ))
    }

    pub fn depthwise_conv2d(
        &mut self,
        x: Var,
        kernels: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let out = depthwise_conv2d(self.value(x), self.value(kernels), stride, padding)?;
        Ok(self.push(
            vec![x, kernels],
            out,
            Box::new(DepthwiseConv2dOp { stride, padding }),
        ))
    }

    /// Concatenate rank-2 values along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_cols: no inputs".into()));
        }
        let rows = self.shape(parts[0])[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(Error::Dimension(format!(
                    "concat_cols: incompatible shape {s:?}, expected {rows} rows"
                )));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(&[rows, total]);
        let mut col = 0;
        for (&p, &w) in parts.iter().zip(widths.iter()) {
            for r in 0..rows {
                for j in 0..w {
                    out.data_mut()[r * total + col + j] = self.values[p.0].at2(r, j);
                }
            }
            col += w;
        }
        Ok(self.push(parts.to_vec(), out, Box::new(ConcatColsOp { widths })))
    }

    /// Columns [start, start + len) of a rank-2 value.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 || start + len > s[1] {
            return Err(Error::Dimension(format!(
                "slice_cols: [{start}, {}) out of range for shape {s:?}",
                start + len
            )));
        }
        let (rows, cols) = (s[0], s[1]);
        let mut out = Tensor::zeros(&[rows, len]);
        for r in 0..rows {
            for j in 0..len {
                out.data_mut()[r * len + j] = self.values[a.0].data()[r * cols + start + j];
            }
        }
        Ok(self.push(vec![a], out, Box::new(SliceColsOp { start })))
    }

    /// C x H x W -> 1 x C channel means.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 3 {
            return Err(Error::Dimension(format!(
                "global_avg_pool: expected C x H x W, got {s:?}"
            )));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut out = Tensor::zeros(&[1, c]);
        for ch in 0..c {
            let plane = &self.value(a).data()[ch * h * w..(ch + 1) * h * w];
            out.data_mut()[ch] = plane.iter().sum::<f64>() / (h * w) as f64;
        }
        Ok(self.push(vec![a], out, Box::new(GlobalAvgPoolOp)))
    }

    /// Mean over the batch of -log softmax(logits)[label], log-sum-exp
    /// stabilized. logits: B x K.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "cross_entropy: logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let k = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Input(format!(
                "cross_entropy: label {bad} out of range for {k} classes"
            )));
        }
        let t = self.value(logits);
        let b = labels.len();
        let mut total = 0.0;
        for (row, &label) in labels.iter().enumerate() {
            let xs = &t.data()[row * k..(row + 1) * k];
            let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total += lse - xs[label];
        }
        let out = Tensor::new(vec![1], vec![total / b as f64])?;
        Ok(self.push(
            vec![logits],
            out,
            Box::new(CrossEntropyOp {
                labels: labels.to_vec(),
            }),
        ))
    }

    /// Forward x * 2 with a backward that wrongly claims x * 3. Exists only
    /// so the gradient-check harness can prove it catches a corrupted
    /// adjoint; never use it in a real computation.
    pub fn bad_scale_for_negative_control(&mut self, a: Var) -> Var {
        let out = self.value(a).scale(2.0);
        self.push(vec![a], out, Box::new(BadScaleOp))
    }

    /// Reverse pass from a scalar value.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut g: Vec<Option<Tensor>> = vec![None; self.values.len()];
        g[loss.0] = Some(Tensor::ones(&[1]));
        for node in self.nodes.iter().rev() {
            // Later nodes have already pushed their contributions, so the
            // accumulator at this node's output is final; take it. Op
            // outputs are never leaves, so nothing reads it afterwards.
            let Some(out_grad) = g[node.output.0].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.values[v.0]).collect();
            let in_grads = node
                .op
                .backward(&inputs, &self.values[node.output.0], &out_grad);
            debug_assert_eq!(in_grads.len(), node.inputs.len(), "{}", node.op.name());
            for (var, ig) in node.inputs.iter().zip(in_grads.into_iter()) {
                debug_assert_eq!(
                    ig.shape(),
                    self.values[var.0].shape(),
                    "{} gradient shape",
                    node.op.name()
                );
                match &mut g[var.0] {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(ig.data()) {
                            *a += v;
                        }
                    }
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(Grads { g })
    }
}

struct AddOp;
impl TapeOp for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![g.clone(), g.clone()]
    }
}

struct SubOp;
impl TapeOp for SubOp {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![g.clone(), g.scale(-1.0)]
    }
}

struct MulOp;
impl TapeOp for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![
            g.mul(inputs[1]).expect("shape checked at creation"),
            g.mul(inputs[0]).expect("shape checked at creation"),
        ]
    }
}

struct ScaleOp {
    factor: f64,
}
impl TapeOp for ScaleOp {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![g.scale(self.factor)]
    }
}

struct Relu6Op;
impl TapeOp for Relu6Op {
    fn name(&self) -> &'static str {
        "relu6"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let mut dx = g.clone();
        for (d, &x) in dx.data_mut().iter_mut().zip(inputs[0].data()) {
            if !(0.0..6.0).contains(&x) {
                *d = 0.0;
            }
        }
        vec![dx]
    }
}

struct GeluOp;
impl TapeOp for GeluOp {
    fn name(&self) -> &'static str {
        "gelu"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let mut dx = g.clone();
        for (d, &x) in dx.data_mut().iter_mut().zip(inputs[0].data()) {
            *d *= gelu_grad(x);
        }
        vec![dx]
    }
}

struct MatmulOp;
impl TapeOp for MatmulOp {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let (a, b) = (inputs[0], inputs[1]);
        let da = g
            .matmul(&b.transpose().expect("rank 2"))
            .expect("shapes agree");
        let db = a
            .transpose()
            .expect("rank 2")
            .matmul(g)
            .expect("shapes agree");
        vec![da, db]
    }
}

struct TransposeOp;
impl TapeOp for TransposeOp {
    fn name(&self) -> &'static str {
        "transpose"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![g.transpose().expect("rank 2")]
    }
}

struct SoftmaxOp {
    axis: usize,
}
impl TapeOp for SoftmaxOp {
    fn name(&self) -> &'static str {
        "softmax"
    }
    fn backward(&self, _: &[&Tensor], output: &Tensor, g: &Tensor) -> Vec<Tensor> {
        // dx = y * (g - sum(g * y)) per slice along the axis
        let shape = output.shape();
        let axis_len = shape[self.axis];
        let inner: usize = shape[self.axis + 1..].iter().product();
        let outer: usize = shape[..self.axis].iter().product();
        let mut dx = Tensor::zeros(shape);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut dot = 0.0;
                for a in 0..axis_len {
                    let idx = base + a * inner;
                    dot += g.data()[idx] * output.data()[idx];
                }
                for a in 0..axis_len {
                    let idx = base + a * inner;
                    dx.data_mut()[idx] = output.data()[idx] * (g.data()[idx] - dot);
                }
            }
        }
        vec![dx]
    }
}

struct ReshapeOp;
impl TapeOp for ReshapeOp {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![g.reshape(inputs[0].shape()).expect("same length")]
    }
}

struct SumAllOp;
impl TapeOp for SumAllOp {
    fn name(&self) -> &'static str {
        "sum_all"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![Tensor::full(inputs[0].shape(), g.data()[0])]
    }
}

struct Dct2dOp;
impl TapeOp for Dct2dOp {
    fn name(&self) -> &'static str {
        "dct2d"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        // orthonormal transform: adjoint = inverse
        vec![idct2d_tensor(g).expect("shape preserved")]
    }
}

struct Idct2dOp;
impl TapeOp for Idct2dOp {
    fn name(&self) -> &'static str {
        "idct2d"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![dct2d_tensor(g).expect("shape preserved")]
    }
}

struct DcScaleOp;
impl TapeOp for DcScaleOp {
    fn name(&self) -> &'static str {
        "dc_scale"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        // diagonal scaling is self-adjoint
        vec![dc_scale_tensor(g).expect("shape preserved")]
    }
}

struct ChannelAffineOp;
impl TapeOp for ChannelAffineOp {
    fn name(&self) -> &'static str {
        "channel_affine"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let (x, gamma) = (inputs[0], inputs[1]);
        let c = x.shape()[0];
        let plane = x.shape()[1] * x.shape()[2];
        let mut dx = Tensor::zeros(x.shape());
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        for ch in 0..c {
            let ga = gamma.data()[ch];
            let mut sg = 0.0;
            let mut sb = 0.0;
            for i in 0..plane {
                let idx = ch * plane + i;
                let gv = g.data()[idx];
                dx.data_mut()[idx] = gv * ga;
                sg += gv * x.data()[idx];
                sb += gv;
            }
            dgamma.data_mut()[ch] = sg;
            dbeta.data_mut()[ch] = sb;
        }
        vec![dx, dgamma, dbeta]
    }
}

struct CropOp;
impl TapeOp for CropOp {
    fn name(&self) -> &'static str {
        "crop"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        // adjoint of crop is zero-pad back to the source size
        let s = inputs[0].shape();
        vec![pad_corner(g, s[1], s[2]).expect("target at least source")]
    }
}

struct PadOp;
impl TapeOp for PadOp {
    fn name(&self) -> &'static str {
        "pad"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        // adjoint of zero-pad is crop back to the source size
        let s = inputs[0].shape();
        vec![crop_corner(g, s[1], s[2]).expect("source fits in output")]
    }
}

struct TokenizeOp;
impl TapeOp for TokenizeOp {
    fn name(&self) -> &'static str {
        "tokenize"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let s = inputs[0].shape();
        vec![untokenize_raw(g, s[1], s[2]).expect("token count matches")]
    }
}

struct UntokenizeOp;
impl TapeOp for UntokenizeOp {
    fn name(&self) -> &'static str {
        "untokenize"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        vec![tokenize_raw(g).expect("rank 3 by construction")]
    }
}

struct Conv2dOp {
    stride: usize,
    padding: usize,
}
impl TapeOp for Conv2dOp {
    fn name(&self) -> &'static str {
        "conv2d"
    }
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let (x, k) = (inputs[0], inputs[1]);
        let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (cout, ks) = (k.shape()[0], k.shape()[2]);
        let (oh, ow) = (output.shape()[1], output.shape()[2]);
        let mut dx = Tensor::zeros(x.shape());
        let mut dk = Tensor::zeros(k.shape());
        let (s, p) = (self.stride, self.padding);
        for co in 0..cout {
            for oi in 0..oh {
                for oj in 0..ow {
                    let gv = g.data()[(co * oh + oi) * ow + oj];
                    if gv == 0.0 {
                        continue;
                    }
                    for ci in 0..cin {
                        for di in 0..ks {
                            let ih = (oi * s + di) as isize - p as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            for dj in 0..ks {
                                let iw = (oj * s + dj) as isize - p as isize;
                                if iw < 0 || iw >= w as isize {
                                    continue;
                                }
                                let xi = (ci * h + ih as usize) * w + iw as usize;
                                let ki = ((co * cin + ci) * ks + di) * ks + dj;
                                dx.data_mut()[xi] += gv * k.data()[ki];
                                dk.data_mut()[ki] += gv * x.data()[xi];
                            }
                        }
                    }
                }
            }
        }
        vec![dx, dk]
    }
}

struct DepthwiseConv2dOp {
    stride: usize,
    padding: usize,
}
impl TapeOp for DepthwiseConv2dOp {
    fn name(&self) -> &'static str {
        "depthwise_conv2d"
    }
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let (x, k) = (inputs[0], inputs[1]);
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let ks = k.shape()[1];
        let (oh, ow) = (output.shape()[1], output.shape()[2]);
        let mut dx = Tensor::zeros(x.shape());
        let mut dk = Tensor::zeros(k.shape());
        let (s, p) = (self.stride, self.padding);
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let gv = g.data()[(ch * oh + oi) * ow + oj];
                    if gv == 0.0 {
                        continue;
                    }
                    for di in 0..ks {
                        let ih = (oi * s + di) as isize - p as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for dj in 0..ks {
                            let iw = (oj * s + dj) as isize - p as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            let xi = (ch * h + ih as usize) * w + iw as usize;
                            let ki = (ch * ks + di) * ks + dj;
                            dx.data_mut()[xi] += gv * k.data()[ki];
                            dk.data_mut()[ki] += gv * x.data()[xi];
                        }
                    }
                }
            }
        }
        vec![dx, dk]
    }
}

struct ConcatColsOp {
    widths: Vec<usize>,
}
impl TapeOp for ConcatColsOp {
    fn name(&self) -> &'static str {
        "concat_cols"
    }
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let rows = output.shape()[0];
        let total = output.shape()[1];
        let mut grads = Vec::with_capacity(inputs.len());
        let mut col = 0;
        for &w in &self.widths {
            let mut part = Tensor::zeros(&[rows, w]);
            for r in 0..rows {
                part.data_mut()[r * w..(r + 1) * w]
                    .copy_from_slice(&g.data()[r * total + col..r * total + col + w]);
            }
            grads.push(part);
            col += w;
        }
        grads
    }
}

struct SliceColsOp {
    start: usize,
}
impl TapeOp for SliceColsOp {
    fn name(&self) -> &'static str {
        "slice_cols"
    }
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let (rows, cols) = (inputs[0].shape()[0], inputs[0].shape()[1]);
        let len = output.shape()[1];
        let mut dx = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            dx.data_mut()[r * cols + self.start..r * cols + self.start + len]
                .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
        }
        vec![dx]
    }
}

struct GlobalAvgPoolOp;
impl TapeOp for GlobalAvgPoolOp {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let (c, h, w) = (
            inputs[0].shape()[0],
            inputs[0].shape()[1],
            inputs[0].shape()[2],
        );
        let inv = 1.0 / (h * w) as f64;
        let mut dx = Tensor::zeros(inputs[0].shape());
        for ch in 0..c {
            let gv = g.data()[ch] * inv;
            for v in &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w] {
                *v = gv;
            }
        }
        vec![dx]
    }
}

struct BadScaleOp;
impl TapeOp for BadScaleOp {
    fn name(&self) -> &'static str {
        "bad_scale"
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        // wrong on purpose: forward multiplies by 2
        vec![g.scale(3.0)]
    }
}

struct CrossEntropyOp {
    labels: Vec<usize>,
}
impl TapeOp for CrossEntropyOp {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, g: &Tensor) -> Vec<Tensor> {
        // d loss / d logits = (softmax - onehot) / B
        let logits = inputs[0];
        let b = self.labels.len();
        let k = logits.shape()[1];
        let mut dx = logits.softmax(1).expect("finite logits recorded");
        for (row, &label) in self.labels.iter().enumerate() {
            dx.data_mut()[row * k + label] -= 1.0;
        }
        vec![dx.scale(g.data()[0] / b as f64)]
    }
}
