//! Frequency-domain attention branch: token extraction from a cropped
//! spectrum, cascaded group attention, and the spatial reconstruction that
//! re-aligns the branch with the convolution branch.
//!
//! Tokens are the spatial frequency positions of the low-passed coefficient
//! map: a C x m x n spectrum becomes L = m*n tokens of dimension C in
//! row-major (u, v) order. With reduction r this puts L = MN/r^2 tokens in
//! front of the attention, which is what makes the score cost shrink by
//! r^4. No positional encodings are added: DCT coefficients are already
//! indexed by frequency.
//!
//! Cascaded group attention splits the C channels across h heads; head i
//! receives its split plus the output of head i-1 (elementwise add, shapes
//! match because every split and head output is C/h wide). Head outputs are
//! concatenated back to C channels and passed through a final learned
//! projection.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::frequency::{Convention, Spectrum2D};
use crate::tensor::Tensor;

/// Cascaded-group-attention hyperparameters.
///
/// `channels` is the token dimension C entering the attention (h must
/// divide it); `out_channels` is the width of the final projection, which
/// the enclosing block sets to its fusion width. Per-head query/key width
/// is `key_dim`; value width is C/h so concatenation restores C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CgaConfig {
    pub heads: usize,
    pub key_dim: usize,
    pub channels: usize,
    pub out_channels: usize,
}

impl CgaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.key_dim == 0 || self.channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(
                "attention: all dimensions must be positive".into(),
            ));
        }
        if self.channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention: heads {} must divide channels {}",
                self.heads, self.channels
            )));
        }
        Ok(())
    }

    /// Channel width of each head's split (and of its value projection).
    pub fn split_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.key_dim as f64).sqrt()
    }
}

/// Tokenized spectrum: L x C token matrix plus the spatial dims and
/// convention needed to invert exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMap {
    pub tokens: Tensor,
    pub rows: usize,
    pub cols: usize,
    pub convention: Convention,
}

/// Per-head projection weights, generic over storage.
#[derive(Debug, Clone)]
pub struct HeadWeightsOf<T> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
}

/// Weights of one cascaded-group-attention layer.
#[derive(Debug, Clone)]
pub struct CgaWeightsOf<T> {
    pub heads: Vec<HeadWeightsOf<T>>,
    pub out_proj: T,
}

pub type CgaWeights = CgaWeightsOf<Tensor>;

impl<T> CgaWeightsOf<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> CgaWeightsOf<U> {
        CgaWeightsOf {
            heads: self
                .heads
                .iter()
                .map(|h| HeadWeightsOf {
                    wq: f(&h.wq),
                    wk: f(&h.wk),
                    wv: f(&h.wv),
                })
                .collect(),
            out_proj: f(&self.out_proj),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &T)) {
        for (i, h) in self.heads.iter().enumerate() {
            f(format!("{prefix}.head{i}.wq"), &h.wq);
            f(format!("{prefix}.head{i}.wk"), &h.wk);
            f(format!("{prefix}.head{i}.wv"), &h.wv);
        }
        f(format!("{prefix}.out_proj"), &self.out_proj);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        for h in &mut self.heads {
            f(&mut h.wq);
            f(&mut h.wk);
            f(&mut h.wv);
        }
        f(&mut self.out_proj);
    }
}

/// Weights of the whole frequency branch: the DC-normalization affine plus
/// the attention layer.
#[derive(Debug, Clone)]
pub struct DctBranchWeightsOf<T> {
    pub dc_gamma: T,
    pub dc_beta: T,
    pub cga: CgaWeightsOf<T>,
}

pub type DctBranchWeights = DctBranchWeightsOf<Tensor>;

impl<T> DctBranchWeightsOf<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> DctBranchWeightsOf<U> {
        DctBranchWeightsOf {
            dc_gamma: f(&self.dc_gamma),
            dc_beta: f(&self.dc_beta),
            cga: self.cga.map(f),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &T)) {
        f(format!("{prefix}.dc_gamma"), &self.dc_gamma);
        f(format!("{prefix}.dc_beta"), &self.dc_beta);
        self.cga.visit(&format!("{prefix}.cga"), f);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        f(&mut self.dc_gamma);
        f(&mut self.dc_beta);
        self.cga.visit_mut(f);
    }
}

/// C x m x n -> (m n) x C; token row i*n + j holds the channel vector at
/// spatial position (i, j).
pub(crate) fn tokenize_raw(t: &Tensor) -> Result<Tensor> {
    if t.rank() != 3 {
        return Err(Error::Dimension(format!(
            "tokenize: expected C x m x n, got {:?}",
            t.shape()
        )));
    }
    let (c, m, n) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let l = m * n;
    let mut out = Tensor::zeros(&[l, c]);
    for ch in 0..c {
        for i in 0..m {
            for j in 0..n {
                out.data_mut()[(i * n + j) * c + ch] = t.at3(ch, i, j);
            }
        }
    }
    Ok(out)
}

/// (m n) x C -> C x m x n; exact inverse of [`tokenize_raw`].
pub(crate) fn untokenize_raw(t: &Tensor, m: usize, n: usize) -> Result<Tensor> {
    if t.rank() != 2 || t.shape()[0] != m * n {
        return Err(Error::Dimension(format!(
            "untokenize: token matrix {:?} does not match {m} x {n} positions",
            t.shape()
        )));
    }
    let c = t.shape()[1];
    let mut out = Tensor::zeros(&[c, m, n]);
    for ch in 0..c {
        for i in 0..m {
            for j in 0..n {
                out.set3(ch, i, j, t.data()[(i * n + j) * c + ch]);
            }
        }
    }
    Ok(out)
}

/// Turn a spectrum into its token matrix.
pub fn tokenize(spec: &Spectrum2D) -> Result<TokenMap> {
    Ok(TokenMap {
        tokens: tokenize_raw(&spec.coeffs)?,
        rows: spec.rows(),
        cols: spec.cols(),
        convention: spec.convention,
    })
}

/// Exact inverse of [`tokenize`].
pub fn untokenize(map: &TokenMap) -> Result<Spectrum2D> {
    Ok(Spectrum2D {
        coeffs: untokenize_raw(&map.tokens, map.rows, map.cols)?,
        convention: map.convention,
    })
}

/// Row-stochastic attention weights softmax(q k^T * scale).
pub fn attention_weights(q: &Tensor, k: &Tensor, scale: f64) -> Result<Tensor> {
    q.matmul(&k.transpose()?)?.scale(scale).softmax(1)
}

/// Scaled dot-product attention: softmax(q k^T / sqrt(d_k)) v.
pub fn attention_head(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    if q.shape()[0] != k.shape()[0] || q.shape()[0] != v.shape()[0] {
        return Err(Error::Dimension(format!(
            "attention_head: token counts differ: q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let d_k = q.shape()[1] as f64;
    attention_weights(q, k, 1.0 / d_k.sqrt())?.matmul(v)
}

/// Cascaded group attention as a tape composition; tokens is an L x C
/// value, the result is L x out_channels.
pub fn cga_on_tape(
    tape: &mut Tape,
    tokens: Var,
    cfg: &CgaConfig,
    w: &CgaWeightsOf<Var>,
) -> Result<Var> {
    cfg.validate()?;
    if tape.shape(tokens)[1] != cfg.channels {
        return Err(Error::Dimension(format!(
            "attention: tokens have {} channels, config says {}",
            tape.shape(tokens)[1],
            cfg.channels
        )));
    }
    if w.heads.len() != cfg.heads {
        return Err(Error::Config(format!(
            "attention: {} head weight sets for {} heads",
            w.heads.len(),
            cfg.heads
        )));
    }
    let split = cfg.split_dim();
    let mut outs = Vec::with_capacity(cfg.heads);
    let mut prev: Option<Var> = None;
    for (i, head) in w.heads.iter().enumerate() {
        let mut x = tape.slice_cols(tokens, i * split, split)?;
        if let Some(p) = prev {
            x = tape.add(x, p)?;
        }
        let q = tape.matmul(x, head.wq)?;
        let k = tape.matmul(x, head.wk)?;
        let v = tape.matmul(x, head.wv)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scaled = tape.scale(scores, cfg.scale());
        let attn = tape.softmax(scaled, 1)?;
        let y = tape.matmul(attn, v)?;
        outs.push(y);
        prev = Some(y);
    }
    let cat = tape.concat_cols(&outs)?;
    tape.matmul(cat, w.out_proj)
}

/// Cascaded group attention on a token map.
pub fn cascaded_group_attention(
    tokens: &TokenMap,
    cfg: &CgaConfig,
    weights: &CgaWeights,
) -> Result<TokenMap> {
    let mut tape = Tape::new();
    let t = tape.leaf(tokens.tokens.clone());
    let wv = weights.map(|w| tape.leaf(w.clone()));
    let out = cga_on_tape(&mut tape, t, cfg, &wv)?;
    Ok(TokenMap {
        tokens: tape.value(out).clone(),
        rows: tokens.rows,
        cols: tokens.cols,
        convention: tokens.convention,
    })
}

/// The full frequency branch as a tape composition:
/// dct2d -> dc normalization -> low-pass crop -> tokenize -> cascaded group
/// attention -> untokenize -> idct2d at the cropped size -> spatial
/// zero-pad to the convolution branch's output size.
pub fn dct_attention_branch_on_tape(
    tape: &mut Tape,
    x: Var,
    r: usize,
    cfg: &CgaConfig,
    w: &DctBranchWeightsOf<Var>,
    target_m: usize,
    target_n: usize,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(Error::Dimension(format!(
            "dct_attention_branch: expected C x M x N input, got {shape:?}"
        )));
    }
    let (big_m, big_n) = (shape[1], shape[2]);
    if r == 0 || big_m % r != 0 || big_n % r != 0 {
        return Err(Error::Dimension(format!(
            "dct_attention_branch: r = {r} must divide input dims {big_m} x {big_n}"
        )));
    }
    let (m, n) = (big_m / r, big_n / r);
    if m > target_m || n > target_n {
        return Err(Error::Dimension(format!(
            "dct_attention_branch: cropped size {m} x {n} exceeds branch target {target_m} x {target_n}"
        )));
    }
    let spec = tape.dct2d(x)?;
    let scaled = tape.dc_scale(spec)?;
    let norm = tape.channel_affine(scaled, w.dc_gamma, w.dc_beta)?;
    let low = tape.crop_corner(norm, m, n)?;
    let tokens = tape.tokenize(low)?;
    let mixed = cga_on_tape(tape, tokens, cfg, &w.cga)?;
    let spatial = tape.untokenize(mixed, m, n)?;
    let img = tape.idct2d(spatial)?;
    if m == target_m && n == target_n {
        Ok(img)
    } else {
        tape.pad_corner(img, target_m, target_n)
    }
}

/// Frequency branch on plain tensors: C x M x N in, out_channels x M' x N'
/// out.
pub fn dct_attention_branch(
    x: &Tensor,
    r: usize,
    cfg: &CgaConfig,
    weights: &DctBranchWeights,
    target_m: usize,
    target_n: usize,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = weights.map(|w| tape.leaf(w.clone()));
    let out = dct_attention_branch_on_tape(&mut tape, xv, r, cfg, &wv, target_m, target_n)?;
    Ok(tape.value(out).clone())
}

/// Identity-flavored weights for composition tests: Q = K = 0, V and the
/// output projection embed identity blocks.
pub fn neutral_cga_weights(cfg: &CgaConfig) -> CgaWeights {
    let split = cfg.split_dim();
    let heads = (0..cfg.heads)
        .map(|_| {
            let mut wv = Tensor::zeros(&[split, split]);
            for i in 0..split {
                wv.data_mut()[i * split + i] = 1.0;
            }
            HeadWeightsOf {
                wq: Tensor::zeros(&[split, cfg.key_dim]),
                wk: Tensor::zeros(&[split, cfg.key_dim]),
                wv,
            }
        })
        .collect();
    let mut out_proj = Tensor::zeros(&[cfg.channels, cfg.out_channels]);
    for i in 0..cfg.channels.min(cfg.out_channels) {
        out_proj.data_mut()[i * cfg.out_channels + i] = 1.0;
    }
    CgaWeights { heads, out_proj }
}
