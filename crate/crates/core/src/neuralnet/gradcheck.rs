use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Module;
use super::NnError;

/// Gradients below this magnitude are compared absolutely; exactly-zero
/// gradients (e.g. key biases under softmax) otherwise amplify rounding noise.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Compares analytic gradients with central differences on `probes`
/// randomly chosen scalar parameters and returns the largest relative error,
/// `|a − n| / max(|a|, |n|, 1e-6)`.
///
/// `loss_fn` must return the loss and accumulate gradients into the
/// module's parameters; it is called with gradients zeroed.
pub fn finite_difference_check<M, F>(
    model: &mut M,
    mut loss_fn: F,
    probes: usize,
    h: f64,
    seed: u64,
) -> Result<f64, NnError>
where
    M: Module,
    F: FnMut(&mut M) -> f64,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(NnError::InvalidStep(h));
    }
    model.zero_grad();
    loss_fn(model);
    let mut analytic: Vec<f64> = Vec::new();
    model.visit(&mut |p| {
        analytic.extend_from_slice(p.grad.data());
    });
    if analytic.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let flat = rng.gen_range(0..analytic.len());
        let original = read_scalar(model, flat);
        write_scalar(model, flat, original + h);
        model.zero_grad();
        let plus = loss_fn(model);
        write_scalar(model, flat, original - h);
        model.zero_grad();
        let minus = loss_fn(model);
        write_scalar(model, flat, original);
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[flat];
        let denom = a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    model.zero_grad();
    Ok(worst)
}

fn read_scalar<M: Module>(model: &M, flat: usize) -> f64 {
    let mut offset = 0;
    let mut out = 0.0;
    model.visit(&mut |p| {
        if flat >= offset && flat < offset + p.len() {
            out = p.value.data()[flat - offset];
        }
        offset += p.len();
    });
    out
}

fn write_scalar<M: Module>(model: &mut M, flat: usize, value: f64) {
    let mut offset = 0;
    model.visit_mut(&mut |p| {
        if flat >= offset && flat < offset + p.len() {
            p.value.data_mut()[flat - offset] = value;
        }
        offset += p.len();
    });
}
