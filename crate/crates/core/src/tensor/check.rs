//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates a caller-supplied forward function,
//! so it stays independent of the backward implementation it is used to
//! verify. Checks should run in `f64`: the default step of `1e-5` leaves no
//! usable precision in `f32`.

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` at `x`: `(f(x+h*e_i) - f(x-h*e_i)) / 2h`.
pub fn numerical_gradient<F>(mut f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut point = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let original = point[i];
        point[i] = original + step;
        let plus = f(&point);
        point[i] = original - step;
        let minus = f(&point);
        point[i] = original;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Largest relative disagreement between two gradient vectors.
///
/// Per element: `|a - b| / max(|a|, |b|)`, with disagreements below `atol`
/// treated as zero so that float noise around true-zero gradients does not
/// register.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], atol: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let diff = (a - n).abs();
            if diff <= atol {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
