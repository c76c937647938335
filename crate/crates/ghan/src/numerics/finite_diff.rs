//! Central finite-difference gradient oracle.
//!
//! Independent of the tape; used by tests to cross-check every recorded
//! gradient.

use super::tensor::Tensor;

/// Central differences `(f(x + h*e_i) - f(x - h*e_i)) / (2h)` per coordinate.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad).expect("gradient shares the input shape")
}

/// Relative-error comparison with an absolute floor, the convention used by
/// all gradient checks in this crate.
pub fn max_relative_error(got: &Tensor, want: &Tensor, abs_floor: f64) -> f64 {
    assert_eq!(got.shape(), want.shape());
    got.data()
        .iter()
        .zip(want.data())
        .map(|(g, w)| {
            let denom = w.abs().max(abs_floor);
            (g - w).abs() / denom
        })
        .fold(0.0, f64::max)
}
