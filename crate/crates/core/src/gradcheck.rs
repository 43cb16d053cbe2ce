//! Central finite-difference gradient checking.
//!
//! These helpers evaluate a user closure only; they know nothing about the
//! tape internals, which keeps them usable as an independent reference when
//! validating tape gradients.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_diff_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Relative error between two gradient components, floored so that pairs of
/// near-zero values compare as equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

/// Largest componentwise relative error between two gradients.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}
