use crate::error::{Error, Result};

use super::tensor::Tensor2;

/// Compares analytic gradients against central differences.
///
/// `f` maps a parameter list to `(value, gradients)`. The result is the
/// largest `|analytic − numeric| / max(1, |analytic|)` over every coordinate.
pub fn grad_check<F>(mut f: F, params: &[Tensor2], h: f64) -> Result<f64>
where
    F: FnMut(&[Tensor2]) -> Result<(f64, Vec<Tensor2>)>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::Config(format!("finite-difference step {h} outside [1e-6, 1e-3]")));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("function value at the base point".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::dim(
            "grad_check",
            format!("{} gradients for {} params", analytic.len(), params.len()),
        ));
    }

    let mut work: Vec<Tensor2> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        if !grad.same_shape(&params[pi]) {
            return Err(Error::dim("grad_check", format!("gradient {pi} shape")));
        }
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let (plus, _) = f(&work)?;
            work[pi].data_mut()[j] = orig - h;
            let (minus, _) = f(&work)?;
            work[pi].data_mut()[j] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("perturbed value at param {pi}[{j}]")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
