use crate::datapipe::{denorm, Category, InputSet, NormStats};
use crate::kernels::NdArray;
use crate::model::Model;
use crate::trainer::build_batch;

use super::EvalError;

/// Predictions at every whole minute of an interval, each the mean over all
/// input sets of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCurve {
    /// Minutes since water addition.
    pub minutes: Vec<f64>,
    /// `(δ, τ₀, μ)` per grid point.
    pub predictions: Vec<[f64; 3]>,
    pub n_averaged: usize,
    /// Shared timestamp of the run's sets.
    pub image_ts_min: f64,
}

/// Sets both time offsets to `t − image_ts` for each minute `t` in
/// `[t0, t1]` and averages the denormalised outputs over `sets`.
pub fn time_sweep(
    model: &Model<f32>,
    sets: &[InputSet],
    norm: &NormStats,
    t0: f64,
    t1: f64,
) -> Result<SweepCurve, EvalError> {
    if !(t0.is_finite() && t1.is_finite()) || t0 > t1 {
        return Err(EvalError::Invalid(format!("sweep interval [{t0}, {t1}] is empty")));
    }
    let first = sets
        .first()
        .ok_or_else(|| EvalError::Empty("run has no input sets".into()))?;
    let image_ts = first.image_ts_min;
    if sets.iter().any(|s| s.image_ts_min != image_ts) {
        return Err(EvalError::Invalid("sweep sets must come from one run".into()));
    }
    let dt = norm.get(Category::DeltaT)?;
    const CHUNK: usize = 64;
    let mut batches = Vec::new();
    for chunk in sets.chunks(CHUNK) {
        let refs: Vec<&InputSet> = chunk.iter().collect();
        batches.push(build_batch::<f32>(&refs, norm)?);
    }
    let steps = (t1 - t0).floor() as usize + 1;
    let mut minutes = Vec::with_capacity(steps);
    let mut predictions = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = t0 + i as f64;
        let offset = ((t - image_ts - dt.mean) / dt.std) as f32;
        let mut sum = [0.0f64; 3];
        for b in &mut batches {
            let n = b.len();
            b.delta_t = NdArray::full(&[n, 2], offset);
            let y = model.predict(b)?;
            for r in 0..n {
                for (k, s) in sum.iter_mut().enumerate() {
                    *s += y.outer(r)[k] as f64;
                }
            }
        }
        let mut p = [0.0; 3];
        for (k, c) in Category::TARGETS.iter().enumerate() {
            p[k] = denorm(sum[k] / sets.len() as f64, norm, *c)?;
        }
        minutes.push(t);
        predictions.push(p);
    }
    Ok(SweepCurve {
        minutes,
        predictions,
        n_averaged: sets.len(),
        image_ts_min: image_ts,
    })
}
