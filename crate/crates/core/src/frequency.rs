//! DCT-II transforms and the frequency-domain plumbing of the attention
//! branch: low-pass coefficient cropping, zero-padding back to a target
//! size, and DC-coefficient normalization.
//!
//! Two conventions exist. The raw 1D transform is the plain cosine sum
//!
//! ```text
//! X[k] = sum_n x[n] cos(pi/N (n + 1/2) k)
//! ```
//!
//! and the orthonormal convention additionally scales row k by
//! alpha(k) = sqrt(1/N) for k = 0 and sqrt(2/N) otherwise, which makes the
//! transform matrix orthogonal. The 2D transform applies the orthonormal
//! scaling in both axes, so the inverse is the exact transpose map and
//! Parseval holds: coefficient energy equals pixel energy.
//!
//! Per-channel 2D transforms are computed separably (row transforms, then
//! column transforms) but must agree with the direct double-sum definition;
//! the test suite holds them to the naive oracle.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which scaling a spectrum was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    Raw,
    Orthonormal,
}

/// 1D signal x[n] of length N >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal1D {
    pub values: Vec<f64>,
}

/// 1D DCT coefficients X[k] with the convention they were computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum1D {
    pub coefficients: Vec<f64>,
    pub convention: Convention,
}

/// Per-channel 2D DCT coefficient map, stored C x M x N.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    pub coeffs: Tensor,
    pub convention: Convention,
}

impl Spectrum2D {
    pub fn channels(&self) -> usize {
        self.coeffs.shape()[0]
    }
    pub fn rows(&self) -> usize {
        self.coeffs.shape()[1]
    }
    pub fn cols(&self) -> usize {
        self.coeffs.shape()[2]
    }
}

/// Low-pass reduction factor r >= 1; keeps the top-left (M/r) x (N/r) corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowPassConfig {
    pub r: usize,
}

/// Orthonormal DCT-II matrix: T[k, n] = alpha(k) cos(pi/N (n + 1/2) k).
pub fn dct_matrix(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    let nf = n as f64;
    for k in 0..n {
        let alpha = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        for x in 0..n {
            let v = alpha * (std::f64::consts::PI / nf * (x as f64 + 0.5) * k as f64).cos();
            t.data_mut()[k * n + x] = v;
        }
    }
    t
}

/// 1D DCT-II of a signal under the chosen convention.
pub fn dct1d(signal: &Signal1D, convention: Convention) -> Result<Spectrum1D> {
    let n = signal.values.len();
    if n == 0 {
        return Err(Error::Dimension("dct1d: empty signal".into()));
    }
    let nf = n as f64;
    let mut coefficients = vec![0.0; n];
    for (k, c) in coefficients.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (x, &v) in signal.values.iter().enumerate() {
            acc += v * (std::f64::consts::PI / nf * (x as f64 + 0.5) * k as f64).cos();
        }
        if convention == Convention::Orthonormal {
            let alpha = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            acc *= alpha;
        }
        *c = acc;
    }
    Ok(Spectrum1D {
        coefficients,
        convention,
    })
}

/// Per-channel orthonormal 2D DCT-II of a C x M x N image, computed
/// separably as T_M x X x T_N^T.
pub fn dct2d(img: &Tensor) -> Result<Spectrum2D> {
    let coeffs = dct2d_tensor(img)?;
    Ok(Spectrum2D {
        coeffs,
        convention: Convention::Orthonormal,
    })
}

/// Inverse of [`dct2d`]. The spectrum must carry the orthonormal tag it was
/// emitted with; anything else is a contract violation.
pub fn idct2d(spec: &Spectrum2D) -> Result<Tensor> {
    if spec.convention != Convention::Orthonormal {
        return Err(Error::Contract(
            "idct2d: spectrum convention is not the orthonormal one dct2d emits".into(),
        ));
    }
    idct2d_tensor(&spec.coeffs)
}

/// Raw-tensor 2D DCT used by both the typed API and the autodiff tape.
pub(crate) fn dct2d_tensor(img: &Tensor) -> Result<Tensor> {
    let (c, m, n) = dims3(img, "dct2d")?;
    let tm = dct_matrix(m);
    let tn_t = dct_matrix(n).transpose()?;
    per_channel(img, c, m, n, |ch| tm.matmul(ch)?.matmul(&tn_t))
}

/// Raw-tensor inverse 2D DCT: T_M^T x X x T_N.
pub(crate) fn idct2d_tensor(spec: &Tensor) -> Result<Tensor> {
    let (c, m, n) = dims3(spec, "idct2d")?;
    let tm_t = dct_matrix(m).transpose()?;
    let tn = dct_matrix(n);
    per_channel(spec, c, m, n, |ch| tm_t.matmul(ch)?.matmul(&tn))
}

fn dims3(t: &Tensor, op: &str) -> Result<(usize, usize, usize)> {
    if t.rank() != 3 {
        return Err(Error::Dimension(format!(
            "{op}: expected C x M x N tensor, got shape {:?}",
            t.shape()
        )));
    }
    Ok((t.shape()[0], t.shape()[1], t.shape()[2]))
}

fn per_channel(
    t: &Tensor,
    c: usize,
    m: usize,
    n: usize,
    f: impl Fn(&Tensor) -> Result<Tensor>,
) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[c, m, n]);
    for ch in 0..c {
        let slice = Tensor::new(vec![m, n], t.data()[ch * m * n..(ch + 1) * m * n].to_vec())?;
        let r = f(&slice)?;
        out.data_mut()[ch * m * n..(ch + 1) * m * n].copy_from_slice(r.data());
    }
    Ok(out)
}

/// Keep only the lowest-frequency (M/r) x (N/r) corner of each channel.
/// Pure selection; no rescaling.
pub fn lowpass_crop(spec: &Spectrum2D, cfg: LowPassConfig) -> Result<Spectrum2D> {
    let (m, n) = (spec.rows(), spec.cols());
    if cfg.r == 0 || m % cfg.r != 0 || n % cfg.r != 0 {
        return Err(Error::Dimension(format!(
            "lowpass_crop: r = {} must divide spatial dims {} x {}",
            cfg.r, m, n
        )));
    }
    Ok(Spectrum2D {
        coeffs: crop_corner(&spec.coeffs, m / cfg.r, n / cfg.r)?,
        convention: spec.convention,
    })
}

/// Embed a spectrum in the top-left corner of a larger M x N map, zeros
/// elsewhere.
pub fn freq_zero_pad(spec: &Spectrum2D, target_m: usize, target_n: usize) -> Result<Spectrum2D> {
    Ok(Spectrum2D {
        coeffs: pad_corner(&spec.coeffs, target_m, target_n)?,
        convention: spec.convention,
    })
}

pub(crate) fn crop_corner(t: &Tensor, keep_m: usize, keep_n: usize) -> Result<Tensor> {
    let (c, m, n) = dims3(t, "crop")?;
    if keep_m > m || keep_n > n {
        return Err(Error::Dimension(format!(
            "crop: target {keep_m} x {keep_n} exceeds source {m} x {n}"
        )));
    }
    let mut out = Tensor::zeros(&[c, keep_m, keep_n]);
    for ch in 0..c {
        for i in 0..keep_m {
            for j in 0..keep_n {
                out.set3(ch, i, j, t.at3(ch, i, j));
            }
        }
    }
    Ok(out)
}

pub(crate) fn pad_corner(t: &Tensor, target_m: usize, target_n: usize) -> Result<Tensor> {
    let (c, m, n) = dims3(t, "pad")?;
    if target_m < m || target_n < n {
        return Err(Error::Dimension(format!(
            "pad: target {target_m} x {target_n} smaller than source {m} x {n}"
        )));
    }
    let mut out = Tensor::zeros(&[c, target_m, target_n]);
    for ch in 0..c {
        for i in 0..m {
            for j in 0..n {
                out.set3(ch, i, j, t.at3(ch, i, j));
            }
        }
    }
    Ok(out)
}

/// Per-channel affine map on the coefficient map after the DC entry is
/// divided by sqrt(M N): y = gamma[c] * x + beta[c]. The DC scaling keeps
/// the mean-proportional coefficient from dominating while the affine stays
/// invertible whenever gamma has no zero entry.
pub fn dc_normalize(spec: &Spectrum2D, gamma: &Tensor, beta: &Tensor) -> Result<Spectrum2D> {
    let c = spec.channels();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Dimension(format!(
            "dc_normalize: gamma/beta lengths {} / {} do not match {} channels",
            gamma.len(),
            beta.len(),
            c
        )));
    }
    if gamma.data().iter().any(|&g| g == 0.0) {
        log::warn!("dc_normalize: gamma contains a zero entry; the map is not invertible");
    }
    let scaled = dc_scale_tensor(&spec.coeffs)?;
    Ok(Spectrum2D {
        coeffs: channel_affine_tensor(&scaled, gamma, beta)?,
        convention: spec.convention,
    })
}

/// Exact inverse of [`dc_normalize`] for gamma without zeros.
pub fn dc_denormalize(spec: &Spectrum2D, gamma: &Tensor, beta: &Tensor) -> Result<Spectrum2D> {
    let (c, m, n) = dims3(&spec.coeffs, "dc_denormalize")?;
    let root_mn = ((m * n) as f64).sqrt();
    let mut out = spec.coeffs.clone();
    for ch in 0..c {
        let g = gamma.data()[ch];
        if g == 0.0 {
            return Err(Error::Input(
                "dc_denormalize: gamma has a zero entry; not invertible".into(),
            ));
        }
        let b = beta.data()[ch];
        for i in 0..m {
            for j in 0..n {
                let mut v = (spec.coeffs.at3(ch, i, j) - b) / g;
                if i == 0 && j == 0 {
                    v *= root_mn;
                }
                out.set3(ch, i, j, v);
            }
        }
    }
    Ok(Spectrum2D {
        coeffs: out,
        convention: spec.convention,
    })
}

/// Divide each channel's DC entry by sqrt(M N); all other entries pass
/// through. Linear and diagonal, hence self-adjoint.
pub(crate) fn dc_scale_tensor(t: &Tensor) -> Result<Tensor> {
    let (c, m, n) = dims3(t, "dc_scale")?;
    let root_mn = ((m * n) as f64).sqrt();
    let mut out = t.clone();
    for ch in 0..c {
        let dc = out.at3(ch, 0, 0);
        out.set3(ch, 0, 0, dc / root_mn);
    }
    Ok(out)
}

/// y[c, i, j] = gamma[c] * x[c, i, j] + beta[c].
pub(crate) fn channel_affine_tensor(t: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let (c, m, n) = dims3(t, "channel_affine")?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Dimension(format!(
            "channel_affine: gamma/beta lengths {} / {} vs {} channels",
            gamma.len(),
            beta.len(),
            c
        )));
    }
    let mut out = Tensor::zeros(&[c, m, n]);
    for ch in 0..c {
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        let src = &t.data()[ch * m * n..(ch + 1) * m * n];
        let dst = &mut out.data_mut()[ch * m * n..(ch + 1) * m * n];
        for (d, &s) in dst.iter_mut().zip(src.iter()) {
            *d = g * s + b;
        }
    }
    Ok(out)
}
