//! Central finite-difference checks of analytic gradients (64-bit).

use std::collections::BTreeMap;

use super::{Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_parameter_errors: BTreeMap<String, f64>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Norm-wise relative error `|a - n| / max(|a|, |n|, 1e-5)` (Euclidean norms).
///
/// Some parameters have an exactly zero true gradient (a key bias shifts
/// every logit of a softmax row equally). Central differences at h = 1e-5
/// on an O(1) loss carry about 1e-10 of roundoff per entry, so the floor
/// turns the check into an absolute one below a gradient norm of 1e-5.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied())
        .max(norm(&mut numeric.iter().copied()))
        .max(1e-5);
    diff / scale
}

/// Compares gradients from [`Tensor::backward`] against central differences
/// with step `h` for every entry of every named parameter.
///
/// `loss` is called with fresh `requires_grad` copies of the parameters and
/// must return a scalar.
pub fn check_gradients<F>(params: &[(String, Tensor<f64>)], h: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = params
        .iter()
        .map(|(_, t)| Tensor::parameter(t.to_vec(), t.shape()))
        .collect::<Result<_>>()?;
    let grads = loss(&leaves)?.backward()?;

    let mut per_parameter_errors = BTreeMap::new();
    let mut values: Vec<Vec<f64>> = params.iter().map(|(_, t)| t.to_vec()).collect();
    for (p, (name, tensor)) in params.iter().enumerate() {
        let analytic = grads.tensor(&leaves[p]).to_vec();
        let mut numeric = vec![0.0; tensor.numel()];
        for i in 0..tensor.numel() {
            let orig = values[p][i];
            let mut eval = |v: f64, values: &mut Vec<Vec<f64>>| -> Result<f64> {
                values[p][i] = v;
                let ts: Vec<Tensor<f64>> = values
                    .iter()
                    .zip(params)
                    .map(|(vals, (_, t))| Tensor::from_vec(vals.clone(), t.shape()))
                    .collect::<Result<_>>()?;
                Ok(loss(&ts)?.item())
            };
            let plus = eval(orig + h, &mut values)?;
            let minus = eval(orig - h, &mut values)?;
            values[p][i] = orig;
            numeric[i] = (plus - minus) / (2.0 * h);
        }
        per_parameter_errors.insert(name.clone(), relative_error(&analytic, &numeric));
    }
    let max_rel_error = per_parameter_errors.values().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_parameter_errors,
    })
}
