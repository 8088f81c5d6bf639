//! Image decode (PNG via the image crate, raw P6 PPM for bit-exact
//! fixtures), bilinear resize, and the training-time augmentations:
//! horizontal flip, bounded rotation with border replication, and
//! reflect-pad random crop.
//!
//! Pixel tensors are 3 x H x W, RGB, values in [0, 1] (pixel / 255).
//! Bilinear sampling uses corner-aligned coordinates, so a linear ramp
//! resamples to a linear ramp.

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;
use std::path::Path;

/// Decode PNG or PPM by extension, then resize to `target` (H, W) if the
/// decoded dims differ.
pub fn load_image(path: &Path, target: (usize, usize)) -> Result<Tensor> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let img = match ext.as_str() {
        "ppm" => {
            let bytes = std::fs::read(path)
                .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
            decode_ppm(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?
        }
        "png" => decode_png(path)?,
        other => {
            return Err(Error::Decode(format!(
                "{}: unsupported container '{other}' (png and ppm are supported)",
                path.display()
            )))
        }
    };
    if (img.shape()[1], img.shape()[2]) == target {
        Ok(img)
    } else {
        Ok(resize_bilinear(&img, target.0, target.1))
    }
}

fn decode_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Tensor::zeros(&[3, h, w]);
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out.set3(c, y as usize, x as usize, px.0[c] as f64 / 255.0);
        }
    }
    Ok(out)
}

/// Raw binary PPM (P6, maxval 255): header tokens separated by whitespace
/// and '#' comments, then H*W*3 raw bytes.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0usize;
    let mut token = |expect: &str| -> Result<String> {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Decode(format!("ppm: missing {expect}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    if magic != "P6" {
        return Err(Error::Decode(format!("ppm: magic '{magic}', want P6")));
    }
    let w: usize = token("width")?
        .parse()
        .map_err(|_| Error::Decode("ppm: bad width".into()))?;
    let h: usize = token("height")?
        .parse()
        .map_err(|_| Error::Decode("ppm: bad height".into()))?;
    let maxval: usize = token("maxval")?
        .parse()
        .map_err(|_| Error::Decode("ppm: bad maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Decode(format!("ppm: maxval {maxval}, want 255")));
    }
    pos += 1; // single whitespace after maxval
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(Error::Decode(format!(
            "ppm: truncated pixel data, need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let mut out = Tensor::zeros(&[3, h, w]);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = bytes[pos + (y * w + x) * 3 + c] as f64 / 255.0;
                out.set3(c, y, x, v);
            }
        }
    }
    Ok(out)
}

/// Encode a [0, 1] tensor as binary P6, rounding to bytes.
pub fn encode_ppm(t: &Tensor) -> Vec<u8> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push((t.at3(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    out
}

/// Corner-aligned bilinear resize of a C x H x W tensor.
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    let sy = if out_h > 1 {
        (h - 1) as f64 / (out_h - 1) as f64
    } else {
        0.0
    };
    let sx = if out_w > 1 {
        (w - 1) as f64 / (out_w - 1) as f64
    } else {
        0.0
    };
    for ch in 0..c {
        for i in 0..out_h {
            let y = i as f64 * sy;
            let y0 = y.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = y - y0 as f64;
            for j in 0..out_w {
                let x = j as f64 * sx;
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = x - x0 as f64;
                let v = t.at3(ch, y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + t.at3(ch, y0, x1) * (1.0 - fy) * fx
                    + t.at3(ch, y1, x0) * fy * (1.0 - fx)
                    + t.at3(ch, y1, x1) * fy * fx;
                out.set3(ch, i, j, v);
            }
        }
    }
    out
}

/// Augmentation toggles and magnitudes. None of the transforms change the
/// tensor shape or leave [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    pub flip: bool,
    pub rotate: bool,
    pub crop: bool,
    /// Rotation bound in degrees; draws are uniform in [-bound, +bound].
    pub max_rotation_deg: f64,
    /// Reflect padding before the random crop window.
    pub crop_pad: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip: true,
            rotate: true,
            crop: true,
            max_rotation_deg: 15.0,
            crop_pad: 8,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> AugmentConfig {
        AugmentConfig {
            flip: false,
            rotate: false,
            crop: false,
            ..AugmentConfig::default()
        }
    }
}

/// Mirror across the vertical axis.
pub fn hflip(t: &Tensor) -> Tensor {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                out.set3(ch, i, j, t.at3(ch, i, w - 1 - j));
            }
        }
    }
    out
}

/// Rotate by `theta` radians about the image center, bilinear resampling
/// with border replication.
pub fn rotate_bilinear(t: &Tensor, theta: f64) -> Tensor {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (cos, sin) = (theta.cos(), theta.sin());
    let mut out = Tensor::zeros(&[c, h, w]);
    for i in 0..h {
        for j in 0..w {
            // inverse map: output point pulled back into the source
            let dy = i as f64 - cy;
            let dx = j as f64 - cx;
            let sy = cy + dy * cos - dx * sin;
            let sx = cx + dy * sin + dx * cos;
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            for ch in 0..c {
                let v = t.at3(ch, y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + t.at3(ch, y0, x1) * (1.0 - fy) * fx
                    + t.at3(ch, y1, x0) * fy * (1.0 - fx)
                    + t.at3(ch, y1, x1) * fy * fx;
                out.set3(ch, i, j, v);
            }
        }
    }
    out
}

fn reflect_index(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Reflect-pad by `p` on all spatial sides.
pub fn pad_reflect(t: &Tensor, p: usize) -> Tensor {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = Tensor::zeros(&[c, h + 2 * p, w + 2 * p]);
    for ch in 0..c {
        for i in 0..h + 2 * p {
            let si = reflect_index(i as isize - p as isize, h);
            for j in 0..w + 2 * p {
                let sj = reflect_index(j as isize - p as isize, w);
                out.set3(ch, i, j, t.at3(ch, si, sj));
            }
        }
    }
    out
}

/// H x W window at offset (oy, ox) of a padded image.
pub fn crop_window(t: &Tensor, oy: usize, ox: usize, h: usize, w: usize) -> Result<Tensor> {
    let (c, th, tw) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if oy + h > th || ox + w > tw {
        return Err(Error::Dimension(format!(
            "crop_window: {h} x {w} at ({oy}, {ox}) exceeds {th} x {tw}"
        )));
    }
    let mut out = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                out.set3(ch, i, j, t.at3(ch, oy + i, ox + j));
            }
        }
    }
    Ok(out)
}

/// Training augmentation: flip with p = 0.5, rotation uniform in the
/// configured bound, reflect-pad random crop back to the original size.
/// Deterministic in the RNG state; disabled transforms draw nothing.
pub fn augment(t: &Tensor, rng: &mut RngState, cfg: &AugmentConfig) -> Tensor {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let mut img = t.clone();
    if cfg.flip && rng.uniform01() < 0.5 {
        img = hflip(&img);
    }
    if cfg.rotate {
        let bound = cfg.max_rotation_deg.to_radians();
        let theta = rng.uniform(-bound, bound);
        img = rotate_bilinear(&img, theta);
    }
    if cfg.crop {
        let p = cfg.crop_pad;
        let padded = pad_reflect(&img, p);
        let oy = (rng.next_u64() % (2 * p as u64 + 1)) as usize;
        let ox = (rng.next_u64() % (2 * p as u64 + 1)) as usize;
        img = crop_window(&padded, oy, ox, h, w).expect("window fits by construction");
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor {
        let mut t = Tensor::zeros(&[3, h, w]);
        for c in 0..3 {
            for i in 0..h {
                for j in 0..w {
                    t.set3(c, i, j, 0.1 + 0.05 * i as f64 + 0.02 * j as f64);
                }
            }
        }
        t
    }

    #[test]
    fn white_single_pixel_ppm_resizes_to_ones() {
        let bytes = b"P6\n1 1\n255\n\xff\xff\xff".to_vec();
        let img = decode_ppm(&bytes).unwrap();
        let resized = resize_bilinear(&img, 224, 224);
        assert_eq!(resized.shape(), &[3, 224, 224]);
        assert!(resized.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn checkerboard_ppm_decodes_exact_bytes() {
        // 2x2: white, black / black, white
        let bytes = b"P6\n2 2\n255\n\xff\xff\xff\x00\x00\x00\x00\x00\x00\xff\xff\xff".to_vec();
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.shape(), &[3, 2, 2]);
        for c in 0..3 {
            assert_eq!(img.at3(c, 0, 0), 1.0);
            assert_eq!(img.at3(c, 0, 1), 0.0);
            assert_eq!(img.at3(c, 1, 0), 0.0);
            assert_eq!(img.at3(c, 1, 1), 1.0);
        }
    }

    #[test]
    fn ppm_roundtrips_through_encoder() {
        let mut rng = RngState::new(1);
        let img = rng.rand_uniform(&[3, 4, 5], 0.0, 1.0);
        let quantized = img.map(|v| (v * 255.0).round() / 255.0);
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        assert!(back.sub(&quantized).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn truncated_ppm_is_decode_error() {
        let bytes = b"P6\n2 2\n255\n\xff\xff".to_vec();
        assert!(matches!(decode_ppm(&bytes), Err(Error::Decode(_))));
    }

    #[test]
    fn bilinear_resize_preserves_linear_ramps() {
        // downsize keeps every sample interior, so a linear ramp must map
        // to a linear ramp exactly
        let img = ramp(8, 8);
        let small = resize_bilinear(&img, 4, 4);
        for c in 0..3 {
            for i in 0..4 {
                for j in 0..4 {
                    let want = 0.1 + 0.05 * (i as f64 * 7.0 / 3.0) + 0.02 * (j as f64 * 7.0 / 3.0);
                    assert!((small.at3(c, i, j) - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn double_flip_is_identity() {
        let mut rng = RngState::new(2);
        let img = rng.rand_uniform(&[3, 5, 6], 0.0, 1.0);
        assert_eq!(hflip(&hflip(&img)), img);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let mut rng = RngState::new(3);
        let img = rng.rand_uniform(&[3, 7, 7], 0.0, 1.0);
        let r = rotate_bilinear(&img, 0.0);
        assert!(r.sub(&img).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn centered_crop_window_recovers_original() {
        let mut rng = RngState::new(4);
        let img = rng.rand_uniform(&[3, 16, 16], 0.0, 1.0);
        let padded = pad_reflect(&img, 8);
        let back = crop_window(&padded, 8, 8, 16, 16).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn augment_preserves_shape_and_range() {
        let mut rng = RngState::new(5);
        let img = rng.rand_uniform(&[3, 16, 16], 0.0, 1.0);
        let cfg = AugmentConfig::default();
        for _ in 0..20 {
            let a = augment(&img, &mut rng, &cfg);
            assert_eq!(a.shape(), img.shape());
            assert!(a.data().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn augment_is_deterministic_given_rng() {
        let mut rng = RngState::new(6);
        let img = rng.rand_uniform(&[3, 16, 16], 0.0, 1.0);
        let cfg = AugmentConfig::default();
        let a = augment(&img, &mut RngState::new(77), &cfg);
        let b = augment(&img, &mut RngState::new(77), &cfg);
        assert_eq!(a, b);
    }
}
