//! Local-feature branch: direct 2D convolution, depthwise convolution, and
//! the inverted-residual mobile block (pointwise expand, depthwise, pointwise
//! project, residual skip when shapes permit).
//!
//! Kernels are odd-sized with same-style padding p = (k - 1) / 2, so stride 1
//! preserves spatial dims and stride 2 exactly halves even ones. Instead of
//! batch statistics, each convolution is followed by a per-channel learnable
//! affine.

use crate::error::{Error, Result};
use crate::frequency::channel_affine_tensor;
use crate::tensor::Tensor;

/// Inverted-residual block hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MobileBlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Expansion factor e >= 1 for the hidden pointwise stage.
    pub expansion: usize,
    /// Spatial stride of the depthwise stage, 1 or 2.
    pub stride: usize,
    /// Depthwise kernel size, odd.
    pub kernel: usize,
}

impl MobileBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.expansion < 1 {
            return Err(Error::Config("mobile block: expansion must be >= 1".into()));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::Config(format!(
                "mobile block: stride must be 1 or 2, got {}",
                self.stride
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "mobile block: kernel must be odd, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    pub fn hidden_channels(&self) -> usize {
        self.in_channels * self.expansion
    }

    /// Residual skip applies iff stride 1 and matching channel counts.
    pub fn has_residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }
}

/// Learnable tensors of one mobile block, generic over storage so the same
/// structure can hold weights (`Tensor`) or tape variables.
#[derive(Debug, Clone)]
pub struct MobileBlockWeightsOf<T> {
    /// Pointwise expansion kernels, (e*Cin) x Cin x 1 x 1.
    pub expand: T,
    pub expand_gamma: T,
    pub expand_beta: T,
    /// Depthwise kernels, (e*Cin) x k x k.
    pub depthwise: T,
    pub depthwise_gamma: T,
    pub depthwise_beta: T,
    /// Pointwise projection kernels, Cout x (e*Cin) x 1 x 1.
    pub project: T,
    pub project_gamma: T,
    pub project_beta: T,
}

pub type MobileBlockWeights = MobileBlockWeightsOf<Tensor>;

impl<T> MobileBlockWeightsOf<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> MobileBlockWeightsOf<U> {
        MobileBlockWeightsOf {
            expand: f(&self.expand),
            expand_gamma: f(&self.expand_gamma),
            expand_beta: f(&self.expand_beta),
            depthwise: f(&self.depthwise),
            depthwise_gamma: f(&self.depthwise_gamma),
            depthwise_beta: f(&self.depthwise_beta),
            project: f(&self.project),
            project_gamma: f(&self.project_gamma),
            project_beta: f(&self.project_beta),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &T)) {
        f(format!("{prefix}.expand"), &self.expand);
        f(format!("{prefix}.expand_gamma"), &self.expand_gamma);
        f(format!("{prefix}.expand_beta"), &self.expand_beta);
        f(format!("{prefix}.depthwise"), &self.depthwise);
        f(format!("{prefix}.depthwise_gamma"), &self.depthwise_gamma);
        f(format!("{prefix}.depthwise_beta"), &self.depthwise_beta);
        f(format!("{prefix}.project"), &self.project);
        f(format!("{prefix}.project_gamma"), &self.project_gamma);
        f(format!("{prefix}.project_beta"), &self.project_beta);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        f(&mut self.expand);
        f(&mut self.expand_gamma);
        f(&mut self.expand_beta);
        f(&mut self.depthwise);
        f(&mut self.depthwise_gamma);
        f(&mut self.depthwise_beta);
        f(&mut self.project);
        f(&mut self.project_gamma);
        f(&mut self.project_beta);
    }
}

pub(crate) fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

fn check_kernel(k: usize, padding: usize) -> Result<()> {
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv: kernel size {k} must be odd")));
    }
    if padding != (k - 1) / 2 {
        return Err(Error::Config(format!(
            "conv: padding {padding} must equal (k - 1) / 2 = {}",
            (k - 1) / 2
        )));
    }
    Ok(())
}

/// Direct sliding-window convolution.
///
/// x: Cin x H x W, kernels: Cout x Cin x k x k; zero padding p = (k-1)/2.
/// Output spatial dims follow H' = (H + 2p - k) / s + 1.
pub fn conv2d(x: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if x.rank() != 3 || kernels.rank() != 4 {
        return Err(Error::Dimension(format!(
            "conv2d: want Cin x H x W input and Cout x Cin x k x k kernels, got {:?} and {:?}",
            x.shape(),
            kernels.shape()
        )));
    }
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kc, kh, kw) = (
        kernels.shape()[0],
        kernels.shape()[1],
        kernels.shape()[2],
        kernels.shape()[3],
    );
    if kc != cin {
        return Err(Error::Dimension(format!(
            "conv2d: input has {cin} channels but kernels expect {kc}"
        )));
    }
    if kh != kw {
        return Err(Error::Dimension("conv2d: kernels must be square".into()));
    }
    check_kernel(kh, padding)?;
    let oh = conv_out_dim(h, kh, stride, padding);
    let ow = conv_out_dim(w, kw, stride, padding);
    let mut out = Tensor::zeros(&[cout, oh, ow]);
    let xd = x.data();
    let kd = kernels.data();
    let od = out.data_mut();
    for co in 0..cout {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut acc = 0.0;
                for ci in 0..cin {
                    let kbase = ((co * cin + ci) * kh) * kw;
                    for di in 0..kh {
                        let ih = (oi * stride + di) as isize - padding as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let xrow = (ci * h + ih as usize) * w;
                        let krow = kbase + di * kw;
                        for dj in 0..kw {
                            let iw = (oj * stride + dj) as isize - padding as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            acc += xd[xrow + iw as usize] * kd[krow + dj];
                        }
                    }
                }
                od[(co * oh + oi) * ow + oj] = acc;
            }
        }
    }
    Ok(out)
}

/// Depthwise convolution: each channel convolved independently with its own
/// k x k kernel. x: C x H x W, kernels: C x k x k.
pub fn depthwise_conv2d(
    x: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    if x.rank() != 3 || kernels.rank() != 3 {
        return Err(Error::Dimension(format!(
            "depthwise_conv2d: want C x H x W input and C x k x k kernels, got {:?} and {:?}",
            x.shape(),
            kernels.shape()
        )));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kc, kh, kw) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if kc != c {
        return Err(Error::Dimension(format!(
            "depthwise_conv2d: input has {c} channels but kernels have {kc}"
        )));
    }
    if kh != kw {
        return Err(Error::Dimension(
            "depthwise_conv2d: kernels must be square".into(),
        ));
    }
    check_kernel(kh, padding)?;
    let oh = conv_out_dim(h, kh, stride, padding);
    let ow = conv_out_dim(w, kw, stride, padding);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let xd = x.data();
    let kd = kernels.data();
    let od = out.data_mut();
    for ch in 0..c {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut acc = 0.0;
                for di in 0..kh {
                    let ih = (oi * stride + di) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let xrow = (ch * h + ih as usize) * w;
                    let krow = (ch * kh + di) * kw;
                    for dj in 0..kw {
                        let iw = (oj * stride + dj) as isize - padding as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        acc += xd[xrow + iw as usize] * kd[krow + dj];
                    }
                }
                od[(ch * oh + oi) * ow + oj] = acc;
            }
        }
    }
    Ok(out)
}

/// Inverted-residual forward: expand -> affine -> relu6 -> depthwise ->
/// affine -> relu6 -> project -> affine, plus the skip when
/// [`MobileBlockConfig::has_residual`] holds.
pub fn mobile_block(x: &Tensor, cfg: &MobileBlockConfig, w: &MobileBlockWeights) -> Result<Tensor> {
    cfg.validate()?;
    let p = (cfg.kernel - 1) / 2;
    let expanded = conv2d(x, &w.expand, 1, 0)?;
    let expanded = channel_affine_tensor(&expanded, &w.expand_gamma, &w.expand_beta)?.relu6();
    let spatial = depthwise_conv2d(&expanded, &w.depthwise, cfg.stride, p)?;
    let spatial = channel_affine_tensor(&spatial, &w.depthwise_gamma, &w.depthwise_beta)?.relu6();
    let projected = conv2d(&spatial, &w.project, 1, 0)?;
    let projected = channel_affine_tensor(&projected, &w.project_gamma, &w.project_beta)?;
    if cfg.has_residual() {
        projected.add(x)
    } else {
        Ok(projected)
    }
}

/// Identity-initialized weights for tests and identity-composition checks:
/// expand/project are (possibly rectangular) identity maps, depthwise kernels
/// have a single center 1, affines are gamma = 1, beta = 0.
pub fn identity_block_weights(cfg: &MobileBlockConfig) -> MobileBlockWeights {
    let hc = cfg.hidden_channels();
    let mut expand = Tensor::zeros(&[hc, cfg.in_channels, 1, 1]);
    for c in 0..hc.min(cfg.in_channels) {
        expand.data_mut()[c * cfg.in_channels + c] = 1.0;
    }
    let mut depthwise = Tensor::zeros(&[hc, cfg.kernel, cfg.kernel]);
    let center = (cfg.kernel / 2) * cfg.kernel + cfg.kernel / 2;
    for c in 0..hc {
        depthwise.data_mut()[c * cfg.kernel * cfg.kernel + center] = 1.0;
    }
    let mut project = Tensor::zeros(&[cfg.out_channels, hc, 1, 1]);
    for c in 0..cfg.out_channels.min(hc) {
        project.data_mut()[c * hc + c] = 1.0;
    }
    MobileBlockWeights {
        expand,
        expand_gamma: Tensor::ones(&[hc]),
        expand_beta: Tensor::zeros(&[hc]),
        depthwise,
        depthwise_gamma: Tensor::ones(&[hc]),
        depthwise_beta: Tensor::zeros(&[hc]),
        project,
        project_gamma: Tensor::ones(&[cfg.out_channels]),
        project_beta: Tensor::zeros(&[cfg.out_channels]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    /// Independent six-loop sliding-window oracle.
    fn conv2d_naive(x: &Tensor, k: &Tensor, stride: usize, padding: usize) -> Tensor {
        let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (cout, ks) = (k.shape()[0], k.shape()[2]);
        let oh = conv_out_dim(h, ks, stride, padding);
        let ow = conv_out_dim(w, ks, stride, padding);
        let mut out = Tensor::zeros(&[cout, oh, ow]);
        for co in 0..cout {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for di in 0..ks {
                            for dj in 0..ks {
                                let ih = oi as isize * stride as isize + di as isize
                                    - padding as isize;
                                let iw = oj as isize * stride as isize + dj as isize
                                    - padding as isize;
                                if ih >= 0 && ih < h as isize && iw >= 0 && iw < w as isize {
                                    acc += x.at3(ci, ih as usize, iw as usize)
                                        * k.data()[((co * cin + ci) * ks + di) * ks + dj];
                                }
                            }
                        }
                    }
                    out.set3(co, oi, oj, acc);
                }
            }
        }
        out
    }

    #[test]
    fn pointwise_identity_kernel_is_identity() {
        let mut rng = RngState::new(1);
        let x = rng.rand_uniform(&[3, 5, 5], -1.0, 1.0);
        let mut k = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            k.data_mut()[c * 3 + c] = 1.0;
        }
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert!(y.sub(&x).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn center_one_3x3_kernel_is_identity() {
        let mut rng = RngState::new(2);
        let x = rng.rand_uniform(&[2, 4, 4], -1.0, 1.0);
        // depthwise form expressed as a full conv: k[c][c] has center 1
        let mut k = Tensor::zeros(&[2, 2, 3, 3]);
        for c in 0..2 {
            k.data_mut()[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let y = conv2d(&x, &k, 1, 1).unwrap();
        assert!(y.sub(&x).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn conv2d_matches_six_loop_oracle() {
        let mut rng = RngState::new(3);
        let x = rng.rand_uniform(&[3, 5, 5], -1.0, 1.0);
        for stride in [1usize, 2] {
            let k = rng.rand_uniform(&[4, 3, 3, 3], -1.0, 1.0);
            let got = conv2d(&x, &k, stride, 1).unwrap();
            let want = conv2d_naive(&x, &k, stride, 1);
            assert!(got.sub(&want).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_channel_mismatch_is_error() {
        let x = Tensor::zeros(&[3, 4, 4]);
        let k = Tensor::zeros(&[2, 5, 1, 1]);
        assert!(matches!(conv2d(&x, &k, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn depthwise_center_one_is_identity() {
        let mut rng = RngState::new(4);
        let x = rng.rand_uniform(&[3, 6, 6], -1.0, 1.0);
        let mut k = Tensor::zeros(&[3, 3, 3]);
        for c in 0..3 {
            k.data_mut()[(c * 3 + 1) * 3 + 1] = 1.0;
        }
        let y = depthwise_conv2d(&x, &k, 1, 1).unwrap();
        assert!(y.sub(&x).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn depthwise_strided_box_kernel_on_constant_input() {
        // 4x4 constant input, 3x3 box kernel, stride 2, padding 1.
        // Interior output sites see the full 3x3 window: value = 9 * 0.5;
        // border sites see a truncated window.
        let x = Tensor::full(&[1, 4, 4], 0.5);
        let k = Tensor::ones(&[1, 3, 3]);
        let y = depthwise_conv2d(&x, &k, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        // hand evaluation at the 4 output sites
        assert!((y.at3(0, 0, 0) - 4.0 * 0.5).abs() < 1e-15); // 2x2 window
        assert!((y.at3(0, 0, 1) - 6.0 * 0.5).abs() < 1e-15); // 2x3 window
        assert!((y.at3(0, 1, 0) - 6.0 * 0.5).abs() < 1e-15); // 3x2 window
        assert!((y.at3(0, 1, 1) - 9.0 * 0.5).abs() < 1e-15); // full window
    }

    #[test]
    fn depthwise_equals_grouped_conv2d() {
        let mut rng = RngState::new(5);
        let c = 3;
        let x = rng.rand_uniform(&[c, 5, 5], -1.0, 1.0);
        let k = rng.rand_uniform(&[c, 3, 3], -1.0, 1.0);
        // grouped oracle: full conv kernels with zeros off the diagonal
        let mut full = Tensor::zeros(&[c, c, 3, 3]);
        for ch in 0..c {
            for di in 0..3 {
                for dj in 0..3 {
                    full.data_mut()[((ch * c + ch) * 3 + di) * 3 + dj] =
                        k.data()[(ch * 3 + di) * 3 + dj];
                }
            }
        }
        for stride in [1usize, 2] {
            let got = depthwise_conv2d(&x, &k, stride, 1).unwrap();
            let want = conv2d(&x, &full, stride, 1).unwrap();
            assert!(got.sub(&want).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn mobile_block_identity_weights_give_double_with_residual() {
        let cfg = MobileBlockConfig {
            in_channels: 2,
            out_channels: 2,
            expansion: 1,
            stride: 1,
            kernel: 3,
        };
        let mut rng = RngState::new(6);
        // values in [0, 1] keep relu6 on its identity segment
        let x = rng.rand_uniform(&[2, 4, 4], 0.0, 1.0);
        let y = mobile_block(&x, &cfg, &identity_block_weights(&cfg)).unwrap();
        assert!(y.sub(&x.scale(2.0)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn mobile_block_stride_two_halves_even_dims() {
        let cfg = MobileBlockConfig {
            in_channels: 3,
            out_channels: 5,
            expansion: 4,
            stride: 2,
            kernel: 3,
        };
        let mut rng = RngState::new(7);
        let x = rng.rand_uniform(&[3, 8, 6], -1.0, 1.0);
        let mut w = identity_block_weights(&cfg);
        w.expand = rng.rand_uniform(w.expand.shape(), -0.5, 0.5);
        w.depthwise = rng.rand_uniform(w.depthwise.shape(), -0.5, 0.5);
        w.project = rng.rand_uniform(w.project.shape(), -0.5, 0.5);
        let y = mobile_block(&x, &cfg, &w).unwrap();
        assert_eq!(y.shape(), &[5, 4, 3]);
    }

    #[test]
    fn mobile_block_zero_weights_no_residual_gives_zero() {
        let cfg = MobileBlockConfig {
            in_channels: 2,
            out_channels: 3,
            expansion: 2,
            stride: 2,
            kernel: 3,
        };
        let mut rng = RngState::new(8);
        let x = rng.rand_uniform(&[2, 4, 4], -1.0, 1.0);
        let w = identity_block_weights(&cfg).map(|t| Tensor::zeros(t.shape()));
        let y = mobile_block(&x, &cfg, &w).unwrap();
        assert_eq!(y, Tensor::zeros(&[3, 2, 2]));
    }

    #[test]
    fn conv_shape_law_holds_across_configs() {
        let mut rng = RngState::new(9);
        for &(h, w, k, s) in &[(7usize, 9usize, 3usize, 1usize), (8, 8, 3, 2), (10, 6, 5, 2)] {
            let p = (k - 1) / 2;
            let x = rng.rand_uniform(&[1, h, w], -1.0, 1.0);
            let kern = rng.rand_uniform(&[2, 1, k, k], -1.0, 1.0);
            let y = conv2d(&x, &kern, s, p).unwrap();
            assert_eq!(y.shape()[1], (h + 2 * p - k) / s + 1);
            assert_eq!(y.shape()[2], (w + 2 * p - k) / s + 1);
        }
    }

    #[test]
    fn depthwise_plus_pointwise_equals_composed_full_conv() {
        // When the full kernel is k_full[co][ci] = pw[co][ci] * dw[ci],
        // pointwise(depthwise(x)) equals conv2d(x, k_full).
        let mut rng = RngState::new(10);
        let (cin, cout) = (2usize, 3usize);
        let x = rng.rand_uniform(&[cin, 5, 5], -1.0, 1.0);
        let dw = rng.rand_uniform(&[cin, 3, 3], -1.0, 1.0);
        let pw = rng.rand_uniform(&[cout, cin, 1, 1], -1.0, 1.0);
        let got = conv2d(&depthwise_conv2d(&x, &dw, 1, 1).unwrap(), &pw, 1, 0).unwrap();
        let mut full = Tensor::zeros(&[cout, cin, 3, 3]);
        for co in 0..cout {
            for ci in 0..cin {
                for d in 0..9 {
                    full.data_mut()[(co * cin + ci) * 9 + d] =
                        pw.data()[co * cin + ci] * dw.data()[ci * 9 + d];
                }
            }
        }
        let want = conv2d(&x, &full, 1, 1).unwrap();
        assert!(got.sub(&want).unwrap().max_abs() < 1e-10);
    }
}
