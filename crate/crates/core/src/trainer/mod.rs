//! Loss, batching and the epoch loop with validation-based weight selection.

mod loss;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datapipe::{augment, fit_norm_stats, Category, DataError, InputSet, NormStats};
use crate::evaluator::{epsilon_metrics, predict_sets, EvalError};
use crate::kernels::{
    nesterov_step, GradCheckTarget, KernelError, Mode, NdArray, OptimizerState, Real,
};
use crate::model::{Batch, Model, ModelConfig, ModelError};

pub use loss::{add_weight_decay_grad, mse_loss, total_loss, weight_penalty};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no unmasked targets in the batch")]
    EmptyLoss,
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Eval(#[from] Box<EvalError>),
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        Self::Eval(Box::new(e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            momentum: 0.99,
            weight_decay: 1e-3,
            epochs: 5,
            batch_size: 16,
            seed: 1,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate={} must be positive", self.learning_rate));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return bad(format!("momentum={} must lie in (0, 1)", self.momentum));
        }
        if !(self.weight_decay > 0.0) {
            return bad(format!("weight_decay={} must be positive", self.weight_decay));
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size={} is below 2 (batch norm needs two samples)", self.batch_size));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation ε_rel in percent for δ, τ₀, μ.
    pub val_eps_rel: [f64; 3],
    pub val_eps_mean: f64,
}

pub const EPOCH_CSV_HEADER: &str = "epoch,train_loss,eps_rel_delta,eps_rel_tau0,eps_rel_mu,eps_rel_mean";

pub fn epoch_csv(reports: &[EpochReport]) -> String {
    let mut s = format!("{EPOCH_CSV_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{:.9},{:.6},{:.6},{:.6},{:.6}",
            r.epoch, r.train_loss, r.val_eps_rel[0], r.val_eps_rel[1], r.val_eps_rel[2], r.val_eps_mean
        );
    }
    s
}

/// Normalised targets and masks of a slice of sets.
pub fn batch_targets(sets: &[&InputSet], stats: &NormStats) -> Result<(Vec<[f64; 3]>, Vec<[bool; 3]>), DataError> {
    let mut targets = Vec::with_capacity(sets.len());
    for s in sets {
        let mut t = [0.0; 3];
        for (k, c) in Category::TARGETS.iter().enumerate() {
            if s.target_mask[k] {
                let ms = stats.get(*c)?;
                t[k] = (s.targets[k] - ms.mean) / ms.std;
            }
        }
        targets.push(t);
    }
    Ok((targets, sets.iter().map(|s| s.target_mask).collect()))
}

/// Normalised network input for `sets`, which must share one combination
/// and image size.
pub fn build_batch<T: Real>(sets: &[&InputSet], stats: &NormStats) -> Result<Batch<T>, DataError> {
    let first = sets
        .first()
        .ok_or_else(|| DataError::Input("cannot build an empty batch".into()))?;
    let cats = first.combination.channel_categories();
    let (c, h, w, m) = (first.channels, first.height, first.width, first.mix.len());
    let plane = h * w;
    let mut chan_stats = Vec::with_capacity(c);
    for cat in &cats {
        let s = stats.get(*cat)?;
        chan_stats.push((s.mean as f32, (1.0 / s.std) as f32));
    }
    let dt = stats.get(Category::DeltaT)?;
    let mut images = Vec::with_capacity(sets.len() * c * plane);
    let mut delta_t = Vec::with_capacity(sets.len() * 2);
    let mut mix = Vec::with_capacity(sets.len() * m);
    for s in sets {
        if s.combination != first.combination || (s.height, s.width) != (h, w) || s.mix.len() != m {
            return Err(DataError::Input("sets in one batch must share combination and size".into()));
        }
        for (ch, &(mean, inv)) in chan_stats.iter().enumerate() {
            images.extend(s.image[ch * plane..(ch + 1) * plane].iter().map(|&v| T::lit(((v - mean) * inv) as f64)));
        }
        delta_t.extend(s.delta_t.iter().map(|&v| T::lit((v - dt.mean) / dt.std)));
        mix.extend(s.mix.iter().map(|&v| T::lit(v)));
    }
    let n = sets.len();
    let shape_err = |e: KernelError| DataError::Input(e.to_string());
    Ok(Batch {
        images: NdArray::from_vec(&[n, c, h, w], images).map_err(shape_err)?,
        delta_t: NdArray::from_vec(&[n, 2], delta_t).map_err(shape_err)?,
        mix: NdArray::from_vec(&[n, m], mix).map_err(shape_err)?,
    })
}

fn to_rows<T: Real>(out: &NdArray<T>) -> Vec<[f64; 3]> {
    (0..out.dim(0))
        .map(|i| {
            let r = out.outer(i);
            [r[0].as_f64(), r[1].as_f64(), r[2].as_f64()]
        })
        .collect()
}

fn from_rows<T: Real>(rows: &[[f64; 3]]) -> NdArray<T> {
    NdArray::from_vec(&[rows.len(), 3], rows.iter().flatten().map(|&v| T::lit(v)).collect())
        .expect("rows are n×3")
}

/// One optimisation step on `batch`; returns the total loss.
pub fn train_step<T: Real>(
    model: &mut Model<T>,
    optimizer: &mut OptimizerState<T>,
    batch: &Batch<T>,
    targets: &[[f64; 3]],
    mask: &[[bool; 3]],
    lambda: f64,
) -> Result<f64, TrainError> {
    model.zero_grad();
    let (out, cache) = model.forward(batch, Mode::Train)?;
    let (mse, grad) = mse_loss(&to_rows(&out), targets, mask)?;
    let loss = total_loss(mse, &model.params(), lambda);
    model.backward(&cache, &from_rows(&grad), false)?;
    add_weight_decay_grad(&mut model.params_mut(), lambda);
    if loss.is_finite() {
        nesterov_step(&mut model.params_mut(), optimizer)?;
    }
    Ok(loss)
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest averaged validation ε_rel.
    pub model: Model<f32>,
    pub best_epoch: usize,
    /// Optimizer state at the end of training.
    pub optimizer: OptimizerState<f32>,
    pub norm: NormStats,
    pub reports: Vec<EpochReport>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Trains a fresh model on `train` and selects weights on `val`.
/// Normalisation statistics are fitted on `train` only.
pub fn train(
    train: &[InputSet],
    val: &[InputSet],
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.len() < 2 || val.is_empty() {
        return Err(TrainError::Config(format!(
            "need at least 2 training and 1 validation set, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    let norm = fit_norm_stats(train)?;
    let mut model = Model::<f32>::build(model_config, cfg.seed)?;
    let mut optimizer = OptimizerState::new(cfg.learning_rate, cfg.momentum, cfg.weight_decay)?;
    let mut reports: Vec<EpochReport> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let mut rng = epoch_rng(cfg.seed, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let augmented: Vec<InputSet>;
            let sets: Vec<&InputSet> = if cfg.augment {
                augmented = chunk
                    .iter()
                    .map(|&i| augment(&train[i], &norm, &mut rng))
                    .collect::<Result<_, _>>()?;
                augmented.iter().collect()
            } else {
                chunk.iter().map(|&i| &train[i]).collect()
            };
            let batch = build_batch::<f32>(&sets, &norm)?;
            let (targets, mask) = batch_targets(&sets, &norm)?;
            let loss = train_step(&mut model, &mut optimizer, &batch, &targets, &mask, cfg.weight_decay)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b });
            }
            loss_sum += loss;
            batches += 1;
        }
        let metrics = epsilon_metrics(&predict_sets(&model, val, &norm)?)?;
        let present: Vec<f64> = metrics.eps_rel.iter().copied().filter(|v| v.is_finite()).collect();
        let report = EpochReport {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_eps_rel: metrics.eps_rel,
            val_eps_mean: present.iter().sum::<f64>() / present.len().max(1) as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, val eps_rel {:.2}/{:.2}/{:.2} %",
            report.train_loss,
            report.val_eps_rel[0],
            report.val_eps_rel[1],
            report.val_eps_rel[2]
        );
        on_epoch(&report);
        if best.as_ref().is_none_or(|(v, _, _)| report.val_eps_mean < *v) {
            best = Some((report.val_eps_mean, epoch, model.clone()));
        }
        reports.push(report);
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        optimizer,
        norm,
        reports,
    })
}

/// Full-model loss `MSE + λΣω²` as a gradient-check target over every
/// parameter tensor. In training mode the conv biases feed batch norm and
/// their gradient vanishes identically; evaluation mode exercises them.
pub struct ModelLossCheck {
    pub model: Model<f64>,
    pub mode: Mode,
    pub batch: Batch<f64>,
    pub targets: Vec<[f64; 3]>,
    pub mask: Vec<[bool; 3]>,
    pub lambda: f64,
}

impl ModelLossCheck {
    fn eval(&mut self) -> f64 {
        let (out, _) = self.model.forward(&self.batch, self.mode).expect("valid batch");
        let (mse, _) = mse_loss(&to_rows(&out), &self.targets, &self.mask).expect("unmasked targets");
        total_loss(mse, &self.model.params(), self.lambda)
    }
}

impl GradCheckTarget for ModelLossCheck {
    fn tensors(&self) -> Vec<(String, usize)> {
        self.model.params().iter().map(|p| (p.name.clone(), p.value.len())).collect()
    }

    fn get(&self, tensor: usize, index: usize) -> f64 {
        self.model.params()[tensor].value.data()[index]
    }

    fn set(&mut self, tensor: usize, index: usize, value: f64) {
        self.model.params_mut()[tensor].value.data_mut()[index] = value;
    }

    fn loss(&mut self) -> f64 {
        self.eval()
    }

    fn gradients(&mut self) -> Vec<Vec<f64>> {
        self.model.zero_grad();
        let (out, cache) = self.model.forward(&self.batch, self.mode).expect("valid batch");
        let (_, grad) = mse_loss(&to_rows(&out), &self.targets, &self.mask).expect("unmasked targets");
        self.model.backward(&cache, &from_rows(&grad), false).expect("valid cache");
        add_weight_decay_grad(&mut self.model.params_mut(), self.lambda);
        self.model.params().iter().map(|p| p.grad.data().to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Param, ParamKind};

    #[test]
    fn mse_examples() {
        let (l, _) = mse_loss(&[[1.0; 3]], &[[0.0; 3]], &[[true; 3]]).unwrap();
        assert_eq!(l, 1.0);
        let (l, g) = mse_loss(&[[0.5, 2.0, -1.0]], &[[0.5, 2.0, -1.0]], &[[true; 3]]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![[0.0; 3]]);
        // Second sample contributes δ only: divisor 4.
        let pred = [[1.0, 2.0, 3.0], [4.0, 9.0, 9.0]];
        let target = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let mask = [[true; 3], [true, false, false]];
        let (l, g) = mse_loss(&pred, &target, &mask).unwrap();
        assert_eq!(l, (1.0 + 4.0 + 9.0 + 4.0) / 4.0);
        assert_eq!(g[1], [1.0, 0.0, 0.0]);
        assert!(matches!(
            mse_loss(&pred, &target, &[[false; 3]; 2]),
            Err(TrainError::EmptyLoss)
        ));
    }

    #[test]
    fn penalty_counts_weights_only() {
        let w = Param::new("w", ParamKind::Weight, NdArray::from_vec(&[1], vec![2.0f64]).unwrap());
        let b = Param::new("b", ParamKind::Bias, NdArray::from_vec(&[1], vec![5.0f64]).unwrap());
        assert_eq!(total_loss(0.0, &[&w, &b], 0.5), 2.0);
        assert_eq!(total_loss(0.7, &[&w, &b], 0.0), 0.7);
        let (mut w, mut b) = (w, b);
        add_weight_decay_grad(&mut [&mut w, &mut b], 0.5);
        assert_eq!(w.grad.data(), &[2.0]);
        assert_eq!(b.grad.data(), &[0.0]);
    }

    #[test]
    fn config_is_validated() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 1, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
