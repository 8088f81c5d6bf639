//! Staged classifier built from dual-branch blocks, plus the parameter and
//! multiply-add accounting that makes the attention-cost reduction
//! checkable.
//!
//! Every block fuses the frequency branch and the mobile-convolution branch
//! by elementwise addition; both branches are constructed (and validated at
//! plan time) to emit the same (C_out, M', N') shape. A strided 3x3 stem
//! halves the input before the first stage, and the head is a global
//! average pool followed by one linear layer.

use crate::attention::{
    dct_attention_branch_on_tape, CgaConfig, DctBranchWeightsOf,
};
use crate::autodiff::{Grads, Tape, Var};
use crate::error::{Error, Result};
use crate::mobileconv::{conv_out_dim, MobileBlockConfig, MobileBlockWeightsOf};
use crate::rng::RngState;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// One stage of identical blocks. The first block of a stage applies the
/// stage stride and maps the incoming channel count to `channels`; the rest
/// run at stride 1 with `channels` in and out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub blocks: usize,
    pub channels: usize,
    /// Low-pass reduction factor of every block in the stage.
    pub reduction: usize,
    pub heads: usize,
    pub expansion: usize,
    pub kernel: usize,
    /// Stride of the stage's first block (1 or 2).
    pub stride: usize,
}

/// Whole-model configuration; a JSON-compatible document with every
/// architectural hyperparameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input shape (C, H, W).
    pub input: (usize, usize, usize),
    /// 2 for the binary task, 8 for the subtype task.
    pub num_classes: usize,
    pub stem_channels: usize,
    pub stages: Vec<StageSpec>,
}

impl ModelConfig {
    /// Desk-scale default: four blocks in three stages with channels
    /// (32, 64, 128), reduction 2 everywhere.
    pub fn default_config(input: (usize, usize, usize), num_classes: usize) -> ModelConfig {
        let stage = |blocks, channels, stride| StageSpec {
            blocks,
            channels,
            reduction: 2,
            heads: 4,
            expansion: 4,
            kernel: 3,
            stride,
        };
        ModelConfig {
            input,
            num_classes,
            stem_channels: 32,
            stages: vec![stage(1, 32, 2), stage(1, 64, 2), stage(2, 128, 2)],
        }
    }

    /// Two-block micro configuration on 16 x 16 inputs, small enough for
    /// exhaustive finite-difference sweeps.
    pub fn micro_config() -> ModelConfig {
        let stage = |stride| StageSpec {
            blocks: 1,
            channels: 8,
            reduction: 2,
            heads: 2,
            expansion: 2,
            kernel: 3,
            stride,
        };
        ModelConfig {
            input: (3, 16, 16),
            num_classes: 2,
            stem_channels: 8,
            stages: vec![stage(2), stage(1)],
        }
    }

    /// Two stride-1 blocks on 64 x 64 inputs: every block keeps its spatial
    /// size, so the whole reduction sweep r in {1, 2, 4} constructs and the
    /// attention terms dominate the cost.
    pub fn bench_config() -> ModelConfig {
        let stage = |channels| StageSpec {
            blocks: 1,
            channels,
            reduction: 2,
            heads: 4,
            expansion: 2,
            kernel: 3,
            stride: 1,
        };
        ModelConfig {
            input: (3, 64, 64),
            num_classes: 2,
            stem_channels: 32,
            stages: vec![stage(32), stage(64)],
        }
    }

    /// Same architecture with every block's reduction factor replaced.
    pub fn with_reduction(&self, r: usize) -> ModelConfig {
        let mut cfg = self.clone();
        for s in &mut cfg.stages {
            s.reduction = r;
        }
        cfg
    }

    /// Resolve and validate the per-block plan.
    pub fn plan(&self) -> Result<ModelPlan> {
        ModelPlan::new(self)
    }
}

/// Resolved configuration of one dual-branch block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DctConvBlockConfig {
    /// Spatial dims (M, N) at block input.
    pub input_dims: (usize, usize),
    /// Spatial dims (M', N') both branches emit.
    pub output_dims: (usize, usize),
    pub reduction: usize,
    pub cga: CgaConfig,
    pub mobile: MobileBlockConfig,
}

impl DctConvBlockConfig {
    pub fn in_channels(&self) -> usize {
        self.mobile.in_channels
    }
    pub fn out_channels(&self) -> usize {
        self.mobile.out_channels
    }

    /// Token count entering the attention.
    pub fn tokens(&self) -> usize {
        (self.input_dims.0 / self.reduction) * (self.input_dims.1 / self.reduction)
    }

    pub fn validate(&self) -> Result<()> {
        self.cga.validate()?;
        self.mobile.validate()?;
        let (m, n) = self.input_dims;
        if self.reduction == 0 || m % self.reduction != 0 || n % self.reduction != 0 {
            return Err(Error::Config(format!(
                "block: reduction {} must divide input dims {m} x {n}",
                self.reduction
            )));
        }
        if self.cga.channels != self.mobile.in_channels
            || self.cga.out_channels != self.mobile.out_channels
        {
            return Err(Error::Config(
                "block: attention channel widths must match the convolution branch".into(),
            ));
        }
        let p = (self.mobile.kernel - 1) / 2;
        let om = conv_out_dim(m, self.mobile.kernel, self.mobile.stride, p);
        let on = conv_out_dim(n, self.mobile.kernel, self.mobile.stride, p);
        if (om, on) != self.output_dims {
            return Err(Error::Config(format!(
                "block: convolution branch emits {om} x {on}, plan says {:?}",
                self.output_dims
            )));
        }
        if m / self.reduction > om || n / self.reduction > on {
            return Err(Error::Config(format!(
                "block: frequency branch at {} x {} cannot pad down to {om} x {on}",
                m / self.reduction,
                n / self.reduction
            )));
        }
        Ok(())
    }
}

/// Validated whole-model layout: stem, resolved blocks, classifier head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelPlan {
    pub config: ModelConfig,
    pub blocks: Vec<DctConvBlockConfig>,
    /// Channels entering the classifier head.
    pub head_in: usize,
}

pub const STEM_KERNEL: usize = 3;
pub const STEM_STRIDE: usize = 2;

impl ModelPlan {
    fn new(config: &ModelConfig) -> Result<ModelPlan> {
        let (c, h, w) = config.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config("model: input dims must be positive".into()));
        }
        if config.num_classes != 2 && config.num_classes != 8 {
            return Err(Error::Config(format!(
                "model: num_classes must be 2 or 8, got {}",
                config.num_classes
            )));
        }
        if config.stages.is_empty() {
            return Err(Error::Config("model: at least one stage required".into()));
        }
        let p = (STEM_KERNEL - 1) / 2;
        let mut dims = (
            conv_out_dim(h, STEM_KERNEL, STEM_STRIDE, p),
            conv_out_dim(w, STEM_KERNEL, STEM_STRIDE, p),
        );
        let mut channels = config.stem_channels;
        let mut blocks = Vec::new();
        for (si, stage) in config.stages.iter().enumerate() {
            if stage.blocks == 0 {
                return Err(Error::Config(format!("model: stage {si} has zero blocks")));
            }
            for bi in 0..stage.blocks {
                let stride = if bi == 0 { stage.stride } else { 1 };
                let mobile = MobileBlockConfig {
                    in_channels: channels,
                    out_channels: stage.channels,
                    expansion: stage.expansion,
                    stride,
                    kernel: stage.kernel,
                };
                let kp = (stage.kernel - 1) / 2;
                let out_dims = (
                    conv_out_dim(dims.0, stage.kernel, stride, kp),
                    conv_out_dim(dims.1, stage.kernel, stride, kp),
                );
                if channels % stage.heads != 0 {
                    return Err(Error::Config(format!(
                        "model: stage {si} heads {} do not divide block input channels {channels}",
                        stage.heads
                    )));
                }
                let cga = CgaConfig {
                    heads: stage.heads,
                    key_dim: channels / stage.heads,
                    channels,
                    out_channels: stage.channels,
                };
                let block = DctConvBlockConfig {
                    input_dims: dims,
                    output_dims: out_dims,
                    reduction: stage.reduction,
                    cga,
                    mobile,
                };
                block.validate().map_err(|e| {
                    Error::Config(format!("model: stage {si} block {bi}: {e}"))
                })?;
                blocks.push(block);
                dims = out_dims;
                channels = stage.channels;
            }
        }
        Ok(ModelPlan {
            config: config.clone(),
            blocks,
            head_in: channels,
        })
    }
}

/// Stem weights: strided 3x3 convolution plus per-channel affine.
#[derive(Debug, Clone)]
pub struct StemWeightsOf<T> {
    pub kernels: T,
    pub gamma: T,
    pub beta: T,
}

/// Weights of one dual-branch block.
#[derive(Debug, Clone)]
pub struct BlockWeightsOf<T> {
    pub freq: DctBranchWeightsOf<T>,
    pub mobile: MobileBlockWeightsOf<T>,
}

/// All learnable tensors of the model, generic over storage so the same
/// structure carries weights, tape variables, or gradients.
#[derive(Debug, Clone)]
pub struct ModelWeightsOf<T> {
    pub stem: StemWeightsOf<T>,
    pub blocks: Vec<BlockWeightsOf<T>>,
    pub head_weight: T,
    pub head_bias: T,
}

pub type ModelWeights = ModelWeightsOf<Tensor>;

impl<T> ModelWeightsOf<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelWeightsOf<U> {
        ModelWeightsOf {
            stem: StemWeightsOf {
                kernels: f(&self.stem.kernels),
                gamma: f(&self.stem.gamma),
                beta: f(&self.stem.beta),
            },
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockWeightsOf {
                    freq: b.freq.map(&mut f),
                    mobile: b.mobile.map(&mut f),
                })
                .collect(),
            head_weight: f(&self.head_weight),
            head_bias: f(&self.head_bias),
        }
    }

    /// Visit every tensor with its stable dotted path, in a fixed traversal
    /// order.
    pub fn visit(&self, f: &mut impl FnMut(String, &T)) {
        f("stem.kernels".into(), &self.stem.kernels);
        f("stem.gamma".into(), &self.stem.gamma);
        f("stem.beta".into(), &self.stem.beta);
        for (i, b) in self.blocks.iter().enumerate() {
            b.freq.visit(&format!("block{i}.freq"), f);
            b.mobile.visit(&format!("block{i}.mobile"), f);
        }
        f("head.weight".into(), &self.head_weight);
        f("head.bias".into(), &self.head_bias);
    }

    /// Visit every tensor mutably in the same order as [`Self::visit`].
    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        f(&mut self.stem.kernels);
        f(&mut self.stem.gamma);
        f(&mut self.stem.beta);
        for b in &mut self.blocks {
            b.freq.visit_mut(f);
            b.mobile.visit_mut(f);
        }
        f(&mut self.head_weight);
        f(&mut self.head_bias);
    }
}

impl ModelWeights {
    /// Flat (path, tensor) view in traversal order.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t: &Tensor| out.push((name, t.clone())));
        out
    }
}

/// Deterministic weight initialization: Kaiming fan-in normals for
/// convolution kernels, truncated normal (std 0.02) for attention and head
/// projections, identity affines.
pub fn init_weights(plan: &ModelPlan, rng: &mut RngState) -> ModelWeights {
    let conv_init = |rng: &mut RngState, shape: &[usize], fan_in: usize| {
        let std = (2.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.normal() * std).collect();
        Tensor::new(shape.to_vec(), data).expect("shape/data agree")
    };
    let proj_init = |rng: &mut RngState, shape: &[usize]| {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.trunc_normal(0.02)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape/data agree")
    };

    let (cin, _, _) = plan.config.input;
    let c0 = plan.config.stem_channels;
    let stem = StemWeightsOf {
        kernels: conv_init(
            rng,
            &[c0, cin, STEM_KERNEL, STEM_KERNEL],
            cin * STEM_KERNEL * STEM_KERNEL,
        ),
        gamma: Tensor::ones(&[c0]),
        beta: Tensor::zeros(&[c0]),
    };

    let blocks = plan
        .blocks
        .iter()
        .map(|b| {
            let hc = b.mobile.hidden_channels();
            let k = b.mobile.kernel;
            let split = b.cga.split_dim();
            let heads = (0..b.cga.heads)
                .map(|_| crate::attention::HeadWeightsOf {
                    wq: proj_init(rng, &[split, b.cga.key_dim]),
                    wk: proj_init(rng, &[split, b.cga.key_dim]),
                    wv: proj_init(rng, &[split, split]),
                })
                .collect();
            BlockWeightsOf {
                freq: DctBranchWeightsOf {
                    dc_gamma: Tensor::ones(&[b.in_channels()]),
                    dc_beta: Tensor::zeros(&[b.in_channels()]),
                    cga: crate::attention::CgaWeightsOf {
                        heads,
                        out_proj: proj_init(rng, &[b.cga.channels, b.cga.out_channels]),
                    },
                },
                mobile: MobileBlockWeightsOf {
                    expand: conv_init(rng, &[hc, b.in_channels(), 1, 1], b.in_channels()),
                    expand_gamma: Tensor::ones(&[hc]),
                    expand_beta: Tensor::zeros(&[hc]),
                    depthwise: conv_init(rng, &[hc, k, k], k * k),
                    depthwise_gamma: Tensor::ones(&[hc]),
                    depthwise_beta: Tensor::zeros(&[hc]),
                    project: conv_init(rng, &[b.out_channels(), hc, 1, 1], hc),
                    project_gamma: Tensor::ones(&[b.out_channels()]),
                    project_beta: Tensor::zeros(&[b.out_channels()]),
                },
            }
        })
        .collect();

    ModelWeights {
        stem,
        blocks,
        head_weight: proj_init(rng, &[plan.head_in, plan.config.num_classes]),
        head_bias: Tensor::zeros(&[1, plan.config.num_classes]),
    }
}

/// Mobile branch as a tape composition.
pub fn mobile_block_on_tape(
    tape: &mut Tape,
    x: Var,
    cfg: &MobileBlockConfig,
    w: &MobileBlockWeightsOf<Var>,
) -> Result<Var> {
    let p = (cfg.kernel - 1) / 2;
    let expanded = tape.conv2d(x, w.expand, 1, 0)?;
    let expanded = tape.channel_affine(expanded, w.expand_gamma, w.expand_beta)?;
    let expanded = tape.relu6(expanded);
    let spatial = tape.depthwise_conv2d(expanded, w.depthwise, cfg.stride, p)?;
    let spatial = tape.channel_affine(spatial, w.depthwise_gamma, w.depthwise_beta)?;
    let spatial = tape.relu6(spatial);
    let projected = tape.conv2d(spatial, w.project, 1, 0)?;
    let projected = tape.channel_affine(projected, w.project_gamma, w.project_beta)?;
    if cfg.has_residual() {
        tape.add(projected, x)
    } else {
        Ok(projected)
    }
}

/// One dual-branch block: elementwise fusion of the frequency branch and
/// the mobile branch.
pub fn dct_conv_block_on_tape(
    tape: &mut Tape,
    x: Var,
    cfg: &DctConvBlockConfig,
    w: &BlockWeightsOf<Var>,
) -> Result<Var> {
    let (tm, tn) = cfg.output_dims;
    let freq = dct_attention_branch_on_tape(tape, x, cfg.reduction, &cfg.cga, &w.freq, tm, tn)?;
    let local = mobile_block_on_tape(tape, x, &cfg.mobile, &w.mobile)?;
    tape.add(freq, local)
}

/// Block weights in plain-tensor form.
pub type DctConvBlockWeights = BlockWeightsOf<Tensor>;

/// Single block on plain tensors.
pub fn dct_conv_block(
    x: &Tensor,
    cfg: &DctConvBlockConfig,
    weights: &DctConvBlockWeights,
) -> Result<Tensor> {
    cfg.validate()?;
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = BlockWeightsOf {
        freq: weights.freq.map(|t| tape.leaf(t.clone())),
        mobile: weights.mobile.map(|t| tape.leaf(t.clone())),
    };
    let out = dct_conv_block_on_tape(&mut tape, xv, cfg, &wv)?;
    Ok(tape.value(out).clone())
}

/// Full forward pass of one sample on a tape; returns 1 x K logits.
pub fn forward_on_tape(
    tape: &mut Tape,
    plan: &ModelPlan,
    w: &ModelWeightsOf<Var>,
    x: Var,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let (c, h, wd) = plan.config.input;
    if shape != [c, h, wd] {
        return Err(Error::Dimension(format!(
            "forward: input shape {shape:?} does not match configured ({c}, {h}, {wd})"
        )));
    }
    let p = (STEM_KERNEL - 1) / 2;
    let mut cur = tape.conv2d(x, w.stem.kernels, STEM_STRIDE, p)?;
    cur = tape.channel_affine(cur, w.stem.gamma, w.stem.beta)?;
    cur = tape.relu6(cur);
    for (cfg, bw) in plan.blocks.iter().zip(w.blocks.iter()) {
        cur = dct_conv_block_on_tape(tape, cur, cfg, bw)?;
    }
    let pooled = tape.global_avg_pool(cur)?;
    let logits = tape.matmul(pooled, w.head_weight)?;
    tape.add(logits, w.head_bias)
}

/// Bind every weight tensor onto a tape, preserving structure.
pub fn bind_weights(tape: &mut Tape, w: &ModelWeights) -> ModelWeightsOf<Var> {
    w.map(|t| tape.leaf(t.clone()))
}

/// Collect per-weight gradients back into the weight structure (zeros where
/// the loss did not touch a tensor).
pub fn collect_grads(
    tape: &Tape,
    vars: &ModelWeightsOf<Var>,
    grads: &Grads,
) -> ModelWeightsOf<Tensor> {
    vars.map(|&v| grads.get_or_zeros(v, tape.shape(v)))
}

/// Logits for a single C x H x W sample.
pub fn forward_single(plan: &ModelPlan, weights: &ModelWeights, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = bind_weights(&mut tape, weights);
    let out = forward_on_tape(&mut tape, plan, &wv, xv)?;
    Ok(tape.value(out).clone())
}

/// Logits for a B x C x H x W batch; samples are independent.
pub fn forward(plan: &ModelPlan, weights: &ModelWeights, batch: &Tensor) -> Result<Tensor> {
    if batch.rank() != 4 {
        return Err(Error::Dimension(format!(
            "forward: expected B x C x H x W batch, got {:?}",
            batch.shape()
        )));
    }
    let b = batch.shape()[0];
    let sample_len = batch.len() / b;
    let k = plan.config.num_classes;
    let mut out = Tensor::zeros(&[b, k]);
    for i in 0..b {
        let sample = Tensor::new(
            vec![batch.shape()[1], batch.shape()[2], batch.shape()[3]],
            batch.data()[i * sample_len..(i + 1) * sample_len].to_vec(),
        )?;
        let logits = forward_single(plan, weights, &sample)?;
        out.data_mut()[i * k..(i + 1) * k].copy_from_slice(logits.data());
    }
    Ok(out)
}

/// Exact count of learnable scalars.
pub fn count_params(weights: &ModelWeights) -> usize {
    let mut total = 0;
    weights.visit(&mut |_, t: &Tensor| total += t.len());
    total
}

/// One accounted operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopEntry {
    pub path: String,
    pub macs: u64,
}

/// Per-block branch totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockFlops {
    pub freq_macs: u64,
    pub mobile_macs: u64,
    pub attention_score_macs: u64,
}

/// Exact multiply-add counts for one forward pass of a single sample.
///
/// Conventions: matmul M*N*K; convolution Cout*Cin*k^2*H'*W'; depthwise
/// C*k^2*H'*W'; per-channel affine one MAC per element; separable 2D DCT
/// C*M*N*(M+N); attention scores h*L^2*d_k and attention-times-values
/// h*L^2*d_v. Activations, pooling sums, and softmax are not multiply-adds
/// and count zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub entries: Vec<FlopEntry>,
    pub per_block: Vec<BlockFlops>,
    pub attention_score_macs: u64,
    pub total_macs: u64,
}

impl FlopsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,macs\n");
        for e in &self.entries {
            s.push_str(&format!("{},{}\n", e.path, e.macs));
        }
        s.push_str(&format!("attention_scores_subtotal,{}\n", self.attention_score_macs));
        s.push_str(&format!("total,{}\n", self.total_macs));
        s
    }

    pub fn to_text(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.path.len())
            .chain(["total".len()])
            .max()
            .unwrap_or(5);
        let mut s = String::new();
        s.push_str(&format!("{:<width$}  {:>14}\n", "op", "MACs"));
        for e in &self.entries {
            s.push_str(&format!("{:<width$}  {:>14}\n", e.path, e.macs));
        }
        s.push_str(&format!(
            "{:<width$}  {:>14}\n",
            "attention scores", self.attention_score_macs
        ));
        s.push_str(&format!("{:<width$}  {:>14}\n", "total", self.total_macs));
        s
    }
}

/// Exact per-op multiply-add counts for the configured model at its input
/// shape.
pub fn count_flops(plan: &ModelPlan) -> FlopsReport {
    let mut entries: Vec<FlopEntry> = Vec::new();

    let (cin, h, w) = plan.config.input;
    let c0 = plan.config.stem_channels;
    let p = (STEM_KERNEL - 1) / 2;
    let (sh, sw) = (
        conv_out_dim(h, STEM_KERNEL, STEM_STRIDE, p),
        conv_out_dim(w, STEM_KERNEL, STEM_STRIDE, p),
    );
    entries.push(FlopEntry {
        path: "stem.conv".into(),
        macs: (c0 * cin * STEM_KERNEL * STEM_KERNEL * sh * sw) as u64,
    });
    entries.push(FlopEntry {
        path: "stem.affine".into(),
        macs: (c0 * sh * sw) as u64,
    });

    let mut per_block = Vec::new();
    let mut score_subtotal = 0u64;
    for (i, b) in plan.blocks.iter().enumerate() {
        let (m, n) = b.input_dims;
        let (om, on) = b.output_dims;
        let c = b.in_channels();
        let co = b.out_channels();
        let (mm, nn) = (m / b.reduction, n / b.reduction);
        let l = b.tokens() as u64;
        let split = b.cga.split_dim() as u64;
        let dk = b.cga.key_dim as u64;
        let heads = b.cga.heads as u64;
        let scores = heads * l * l * dk;

        let freq_ops = [
            ("dct2d", (c * m * n * (m + n)) as u64),
            ("dc_affine", (c * m * n) as u64),
            ("qkv_proj", heads * l * split * (dk + dk + split)),
            ("scores", scores),
            ("attn_values", heads * l * l * split),
            ("out_proj", l * (c as u64) * (co as u64)),
            ("idct2d", (co * mm * nn * (mm + nn)) as u64),
        ];
        let hc = b.mobile.hidden_channels();
        let k = b.mobile.kernel;
        let mobile_ops = [
            ("expand", (hc * c * m * n) as u64),
            ("expand_affine", (hc * m * n) as u64),
            ("depthwise", (hc * k * k * om * on) as u64),
            ("depthwise_affine", (hc * om * on) as u64),
            ("project", (co * hc * om * on) as u64),
            ("project_affine", (co * om * on) as u64),
        ];
        for (name, macs) in freq_ops {
            entries.push(FlopEntry {
                path: format!("block{i}.freq.{name}"),
                macs,
            });
        }
        for (name, macs) in mobile_ops {
            entries.push(FlopEntry {
                path: format!("block{i}.mobile.{name}"),
                macs,
            });
        }
        score_subtotal += scores;
        per_block.push(BlockFlops {
            freq_macs: freq_ops.iter().map(|(_, m)| m).sum(),
            mobile_macs: mobile_ops.iter().map(|(_, m)| m).sum(),
            attention_score_macs: scores,
        });
    }

    entries.push(FlopEntry {
        path: "head.linear".into(),
        macs: (plan.head_in * plan.config.num_classes) as u64,
    });

    let total = entries.iter().map(|e| e.macs).sum();
    FlopsReport {
        entries,
        per_block,
        attention_score_macs: score_subtotal,
        total_macs: total,
    }
}

/// MACs of a plain matrix product, the convention the report uses.
pub fn matmul_macs(m: usize, k: usize, n: usize) -> u64 {
    (m * k * n) as u64
}
