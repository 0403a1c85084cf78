use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::Result;

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central difference `(f(x + h) - f(x - h)) / 2h` along coordinate `i`,
/// restoring `x[i]` afterwards.
pub fn central_difference<F>(f: &mut F, x: &mut [f64], i: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x)?;
    x[i] = orig - h;
    let minus = f(x)?;
    x[i] = orig;
    Ok((plus - minus) / (2.0 * h))
}

/// Compares the tape gradient of scalar `f` at `x` with central differences
/// and returns the largest coordinate-wise relative error.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let mut leaf = x.clone();
    leaf.requires_grad = true;
    let xv = tape.leaf(leaf);
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(xv)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let shape = x.shape().to_vec();
    let mut eval = |data: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::new(shape.clone(), data.to_vec())?);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };
    let mut point = x.data().to_vec();
    let mut worst = 0.0f64;
    for (i, a) in analytic.iter().enumerate() {
        let numeric = central_difference(&mut eval, &mut point, i, h)?;
        worst = worst.max(relative_error(*a, numeric));
    }
    Ok(worst)
}
