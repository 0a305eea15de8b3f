use super::tensor::ParamTensor;

/// Central-difference step used by every gradient check in the crate.
pub const FD_STEP: f64 = 1e-5;

/// `(f(x+h) - f(x-h)) / 2h` for a scalar function.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Compares analytic and central-difference gradients of `loss` over the
/// tensors returned by `select`.
///
/// `loss(model, true)` must evaluate the loss and accumulate its gradient
/// into the selected tensors; `loss(model, false)` only evaluates. Returns
/// `max |analytic - numeric| / max(1e-8, |numeric|)` over all entries.
pub fn grad_check<M, S, F>(model: &mut M, select: S, mut loss: F) -> f64
where
    S: for<'a> Fn(&'a mut M) -> Vec<&'a mut ParamTensor>,
    F: FnMut(&mut M, bool) -> f64,
{
    for p in select(model) {
        p.zero_grad();
    }
    loss(model, true);
    let analytic: Vec<Vec<f64>> = select(model).into_iter().map(|p| p.grad.clone()).collect();
    let mut worst: f64 = 0.0;
    for (t, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let original = select(model)[t].values[k];
            select(model)[t].values[k] = original + FD_STEP;
            let plus = loss(model, false);
            select(model)[t].values[k] = original - FD_STEP;
            let minus = loss(model, false);
            select(model)[t].values[k] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = (a - numeric).abs() / numeric.abs().max(1e-8);
            worst = worst.max(err);
        }
    }
    for p in select(model) {
        p.zero_grad();
    }
    worst
}
