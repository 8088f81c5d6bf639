//! Dense row-major f64 tensors and the small op set the rest of the crate
//! is built on: elementwise math, matrix multiply, softmax, reductions.
//!
//! No general broadcasting: binary ops require identical shapes, scalar
//! variants exist for tensor-vs-scalar. All tests run in 64-bit.

use crate::error::{Error, Result};

/// Dense N-dimensional array, contiguous row-major f64 storage.
///
/// `product(shape) == data.len()` always holds; the shape is fixed at
/// construction and `reshape` returns a new value with identical element
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Identity matrix of size n.
    pub fn eye(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Single scalar value of a 1-element tensor.
    pub fn scalar(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Dimension(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New tensor with the same data in a different shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(c * self.shape[1] + i) * self.shape[2] + j]
    }

    pub fn set3(&mut self, c: usize, i: usize, j: usize, v: f64) {
        debug_assert_eq!(self.rank(), 3);
        let idx = (c * self.shape[1] + i) * self.shape[2] + j;
        self.data[idx] = v;
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip(other, |a, b| a - b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "mul")?;
        Ok(self.zip(other, |a, b| a * b))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|a| a * s)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        self.map(|a| a + s)
    }

    pub fn relu6(&self) -> Tensor {
        self.map(relu6)
    }

    pub fn gelu(&self) -> Tensor {
        self.map(gelu)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Sum of squared entries.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Matrix product of two rank-2 tensors: [M,K] x [K,N] -> [M,N].
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::Dimension(format!(
                "matmul requires rank-2 tensors, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul: inner dimensions disagree, {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        // i-k-j order keeps both b and out rows contiguous.
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow.iter()) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::Dimension(format!(
                "transpose requires rank-2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Softmax along `axis`; max-subtraction keeps large inputs from
    /// overflowing. Every slice along the axis sums to 1.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::Dimension(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape
            )));
        }
        if self.data.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let axis_len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut max = f64::NEG_INFINITY;
                for a in 0..axis_len {
                    max = max.max(out[base + a * inner]);
                }
                let mut sum = 0.0;
                for a in 0..axis_len {
                    let e = (out[base + a * inner] - max).exp();
                    out[base + a * inner] = e;
                    sum += e;
                }
                for a in 0..axis_len {
                    out[base + a * inner] /= sum;
                }
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }
}

pub fn relu6(x: f64) -> f64 {
    x.max(0.0).min(6.0)
}

/// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// Derivative of the tanh-form GELU.
pub fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn random(shape: &[usize], rng: &mut RngState) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut rng = RngState::new(1);
        let x = random(&[3, 4], &mut rng);
        let got = Tensor::eye(3).matmul(&x).unwrap();
        assert_eq!(got, x);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = RngState::new(7);
        let a = random(&[5, 7], &mut rng);
        let b = random(&[7, 3], &mut rng);
        let c = a.matmul(&b).unwrap();
        // independent naive triple loop
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..7 {
                    acc += a.at2(i, k) * b.at2(k, j);
                }
                assert!((c.at2(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn matmul_associative_on_random_instances() {
        let mut rng = RngState::new(42);
        for _ in 0..5 {
            let a = random(&[4, 3], &mut rng);
            let b = random(&[3, 5], &mut rng);
            let c = random(&[5, 2], &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let diff = left.sub(&right).unwrap().max_abs();
            assert!(diff < 1e-9, "associativity violated by {diff}");
        }
    }

    #[test]
    fn softmax_uniform_input() {
        let x = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        let y = x.softmax(0).unwrap();
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_no_overflow_on_large_inputs() {
        let x = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let y = x.softmax(0).unwrap();
        assert!(y.is_finite());
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = x.softmax(0).unwrap();
        let z: f64 = (1f64).exp() + (2f64).exp() + (3f64).exp();
        for (i, &v) in y.data().iter().enumerate() {
            let want = ((i + 1) as f64).exp() / z;
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_nan_input_is_numeric_error() {
        let x = Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(x.softmax(0), Err(Error::Numeric(_))));
    }

    #[test]
    fn softmax_slices_sum_to_one() {
        let mut rng = RngState::new(3);
        let x = random(&[4, 6], &mut rng).scale(50.0);
        for axis in 0..2 {
            let y = x.softmax(axis).unwrap();
            let (rows, cols) = (y.shape()[0], y.shape()[1]);
            if axis == 1 {
                for i in 0..rows {
                    let s: f64 = (0..cols).map(|j| y.at2(i, j)).sum();
                    assert!((s - 1.0).abs() < 1e-9);
                    for j in 0..cols {
                        assert!(y.at2(i, j) > 0.0);
                    }
                }
            } else {
                for j in 0..cols {
                    let s: f64 = (0..rows).map(|i| y.at2(i, j)).sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn elementwise_add_identity_and_clamps() {
        let mut rng = RngState::new(9);
        let x = random(&[2, 3], &mut rng);
        assert_eq!(x.add(&Tensor::zeros(&[2, 3])).unwrap(), x);
        assert_eq!(relu6(7.0), 6.0);
        assert_eq!(relu6(-1.0), 0.0);
        assert_eq!(gelu(0.0), 0.0);
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        assert!(matches!(a.add(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn reshape_roundtrip_is_identity() {
        let mut rng = RngState::new(5);
        let x = random(&[3, 4, 2], &mut rng);
        let y = x.reshape(&[24]).unwrap().reshape(&[3, 4, 2]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn constructor_rejects_bad_length() {
        assert!(Tensor::new(vec![2, 2], vec![1.0]).is_err());
    }
}
