//! Central finite-difference gradients: the independent oracle for every
//! autodiff gradient in the crate.

use super::tensor::Tensor;
use crate::error::{contract_err, numeric_err, Result};

/// Estimates `∂f/∂x` elementwise by `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
///
/// `f` is evaluated in `f64` so that the difference quotient is limited by the
/// `f32` storage of `x`, not by the accumulation of the scalar.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f32) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(contract_err!("finite_diff_grad: step must be positive, got {h}"));
    }
    let mut probe = x.clone();
    let mut grad = vec![0.0f32; x.len()];
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(numeric_err!(
                "finite_diff_grad: non-finite objective at element {i} ({up}, {down})"
            ));
        }
        // use the step actually representable in f32
        let step = ((orig + h) as f64) - ((orig - h) as f64);
        grad[i] = ((up - down) / step) as f32;
    }
    Tensor::new(x.shape(), grad)
}

/// Norm-wise relative error `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn relative_error(autodiff: &[f32], reference: &[f32], floor: f32) -> f32 {
    let diff = autodiff
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    let scale = reference.iter().map(|b| b.abs()).fold(0.0f32, f32::max).max(floor);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let x = Tensor::new(&[1], vec![1.0]).unwrap();
        let g = finite_diff_grad(|t| Ok(t.data().iter().map(|&v| (v as f64).powi(2)).sum()), &x, 1e-3).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn constant_and_linear() {
        let x = Tensor::new(&[4], vec![0.3, -1.0, 2.0, 5.0]).unwrap();
        let g = finite_diff_grad(|_| Ok(7.0), &x, 1e-3).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        let g = finite_diff_grad(|t| Ok(t.sum()), &x, 1e-3).unwrap();
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-6), "{g:?}");
    }

    #[test]
    fn rejects_bad_step_and_nan() {
        let x = Tensor::ones(&[2]);
        assert!(finite_diff_grad(|_| Ok(0.0), &x, 0.0).is_err());
        assert!(finite_diff_grad(|_| Ok(f64::NAN), &x, 1e-3).is_err());
    }
}
