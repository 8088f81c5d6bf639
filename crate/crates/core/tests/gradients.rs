//! Cross-module gradient verification: the registered-op sweep, the full
//! micro-model sweep, and direct adjoint-pair identities for the linear
//! resize ops.

use dctconv::frequency::*;
use dctconv::gradcheck;
use dctconv::rng::RngState;
use dctconv::tensor::Tensor;

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[test]
fn crop_and_pad_are_an_adjoint_pair() {
    // <crop(x), y> = <x, pad(y)> on random vectors
    let mut rng = RngState::new(41);
    for _ in 0..10 {
        let x = rng.rand_uniform(&[2, 6, 8], -1.0, 1.0);
        let y = rng.rand_uniform(&[2, 3, 4], -1.0, 1.0);
        let spec_x = Spectrum2D {
            coeffs: x.clone(),
            convention: Convention::Orthonormal,
        };
        let spec_y = Spectrum2D {
            coeffs: y.clone(),
            convention: Convention::Orthonormal,
        };
        let crop_x = lowpass_crop(&spec_x, LowPassConfig { r: 2 }).unwrap();
        let pad_y = freq_zero_pad(&spec_y, 6, 8).unwrap();
        let lhs = dot(&crop_x.coeffs, &y);
        let rhs = dot(&x, &pad_y.coeffs);
        assert!((lhs - rhs).abs() < 1e-10, "adjoint identity off: {lhs} vs {rhs}");
    }
}

#[test]
fn dct_and_idct_are_an_adjoint_pair() {
    // <dct(x), y> = <x, idct(y)>: the orthonormal transform's adjoint is
    // its inverse
    let mut rng = RngState::new(43);
    let x = rng.rand_uniform(&[3, 8, 8], -1.0, 1.0);
    let y = rng.rand_uniform(&[3, 8, 8], -1.0, 1.0);
    let dx = dct2d(&x).unwrap().coeffs;
    let iy = idct2d(&Spectrum2D {
        coeffs: y.clone(),
        convention: Convention::Orthonormal,
    })
    .unwrap();
    assert!((dot(&dx, &y) - dot(&x, &iy)).abs() < 1e-10);
}

#[test]
fn every_registered_op_and_the_micro_model_pass() {
    for check in gradcheck::check_all(12345).unwrap() {
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
