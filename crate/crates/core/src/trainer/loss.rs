use crate::kernels::{Param, Real};

use super::TrainError;

/// Masked mean squared error over the unmasked entries and its gradient
/// with respect to `pred`.
pub fn mse_loss(
    pred: &[[f64; 3]],
    target: &[[f64; 3]],
    mask: &[[bool; 3]],
) -> Result<(f64, Vec<[f64; 3]>), TrainError> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(TrainError::Config(format!(
            "loss inputs disagree in length: {} predictions, {} targets, {} masks",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    let count = mask.iter().flatten().filter(|&&m| m).count();
    if count == 0 {
        return Err(TrainError::EmptyLoss);
    }
    let mut sum = 0.0;
    let mut grad = vec![[0.0; 3]; pred.len()];
    for n in 0..pred.len() {
        for k in 0..3 {
            if mask[n][k] {
                let d = pred[n][k] - target[n][k];
                sum += d * d;
                grad[n][k] = 2.0 * d / count as f64;
            }
        }
    }
    Ok((sum / count as f64, grad))
}

/// `λ·Σω²` over the conv and dense weights.
pub fn weight_penalty<T: Real>(params: &[&Param<T>], lambda: f64) -> f64 {
    lambda
        * params
            .iter()
            .filter(|p| p.decays())
            .map(|p| p.value.sum_squares())
            .sum::<f64>()
}

pub fn total_loss<T: Real>(mse: f64, params: &[&Param<T>], lambda: f64) -> f64 {
    mse + weight_penalty(params, lambda)
}

/// Adds `2λω` to the gradient of every decaying parameter.
pub fn add_weight_decay_grad<T: Real>(params: &mut [&mut Param<T>], lambda: f64) {
    let two_l = T::lit(2.0 * lambda);
    for p in params.iter_mut().filter(|p| p.decays()) {
        let Param { value, grad, .. } = &mut **p;
        for (g, &w) in grad.data_mut().iter_mut().zip(value.data()) {
            *g += two_l * w;
        }
    }
}
