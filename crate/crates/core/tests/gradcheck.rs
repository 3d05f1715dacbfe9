//! Analytic gradients of every primitive against central finite differences.

mod common;

use common::suites::{primitive_errors, PRIMITIVE_TOL};
use common::{random_tensor, rng};
use stylemapper::autodiff::{Conv2dOptions, Graph, Tensor};

#[test]
fn every_primitive_matches_finite_differences() {
    let errs = primitive_errors();
    assert!(errs.len() >= 25);
    for (name, err) in errs {
        assert!(err < PRIMITIVE_TOL, "{name}: relative error {err:.3e}");
    }
}

#[test]
fn sum_of_x_has_unit_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[5], vec![1.0, -2.0, 3.0, 0.0, 4.0]).unwrap());
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 5]);
}

#[test]
fn l1_gradient_is_sign_with_zero_at_ties() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[4], vec![0.5, -0.25, 0.0, 2.0]).unwrap());
    let z = g.constant(Tensor::zeros(&[4]));
    let l = g.l1_loss(x, z).unwrap();
    g.backward(l).unwrap();
    let got: Vec<f64> = g.grad(x).unwrap().iter().map(|v| v * 4.0).collect();
    assert_eq!(got, vec![1.0, -1.0, 0.0, 1.0]);
}

#[test]
fn backward_rejects_non_scalar_and_is_repeatable() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let y = g.mul(x, x).unwrap();
    assert!(g.backward(y).is_err());
    let s = g.sum(y);
    g.backward(s).unwrap();
    let first = g.grad(x).unwrap().to_vec();
    g.zero_grad();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), first.as_slice());
}

#[test]
fn sobel_kernel_on_constant_patch_is_zero_at_centre() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let k = g.constant(Tensor::new(&[1, 1, 3, 3], vec![1.0, 0.0, -1.0, 2.0, 0.0, -2.0, 1.0, 0.0, -1.0]).unwrap());
    let y = g.conv2d(x, k, None, Conv2dOptions { stride: 1, padding: 1 }).unwrap();
    assert_eq!(g.value(y).data()[4], 0.0);
}

#[test]
fn instance_norm_output_is_standardised() {
    let mut r = rng(9);
    let mut g = Graph::<f64>::new();
    let x = g.constant(random_tensor(&mut r, &[2, 3, 6, 6], -5.0, 9.0));
    let y = g.instance_norm(x, 1e-5).unwrap();
    for plane in g.value(y).data().chunks(36) {
        let mean = plane.iter().sum::<f64>() / 36.0;
        let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5, "mean {mean} var {var}");
    }
}

#[test]
fn shape_errors_name_the_primitive() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 4]));
    let err = g.add(a, b).unwrap_err().to_string();
    assert!(err.contains("add") && err.contains("[2, 3]") && err.contains("[2, 4]"), "{err}");
    let err = g.matmul(a, a).unwrap_err().to_string();
    assert!(err.contains("matmul"), "{err}");
    let img = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let k = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
    assert!(g.conv2d(img, k, None, Conv2dOptions::default()).unwrap_err().to_string().contains("conv2d"));
}
