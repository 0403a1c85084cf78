use rand::seq::index::sample;
use rand::Rng;

use super::{MultimodalModel, TokenId};
use crate::error::Result;
use crate::numerics::{central_difference, relative_error, Tape};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub coordinates_checked: usize,
}

/// Finite-difference check of the full model loss on one example.
///
/// Every parameter tensor is probed at up to `per_tensor` randomly chosen
/// coordinates (all of them when the tensor is smaller).
pub fn check_model_gradients<R: Rng + ?Sized>(
    model: &MultimodalModel,
    prompt: &[TokenId],
    image: Option<&[f64]>,
    response: &[TokenId],
    h: f64,
    per_tensor: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let mut analytic_model = model.clone();
    let all: Vec<String> = analytic_model.params.names().map(String::from).collect();
    analytic_model.params.set_trainable(all.clone())?;
    analytic_model.params.zero_grad();
    let mut tape = Tape::new();
    let (loss, _) = analytic_model.example_loss(&mut tape, prompt, image, response)?;
    tape.backward(loss)?;
    tape.write_param_grads(&mut analytic_model.params)?;

    let mut probe = model.clone();
    probe.params.freeze_all();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        coordinates_checked: 0,
    };
    for name in &all {
        let analytic = analytic_model.params.get(name)?.grad().expect("zeroed above").to_vec();
        let n = analytic.len();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            sample(rng, n, per_tensor).into_vec()
        };
        let mut point = probe.params.get(name)?.data().to_vec();
        for i in coords {
            let mut eval = |x: &[f64]| -> Result<f64> {
                probe.params.get_mut(name)?.data_mut()[i] = x[i];
                let mut tape = Tape::new();
                let (l, _) = probe.example_loss(&mut tape, prompt, image, response)?;
                Ok(tape.value(l).item())
            };
            let numeric = central_difference(&mut eval, &mut point, i, h)?;
            probe.params.get_mut(name)?.data_mut()[i] = point[i];
            let err = relative_error(analytic[i], numeric);
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = format!("{name}[{i}]");
            }
            report.coordinates_checked += 1;
        }
    }
    Ok(report)
}
