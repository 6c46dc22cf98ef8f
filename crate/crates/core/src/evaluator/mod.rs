//! Error metrics, prediction averaging, the input-combination ablation and
//! continuous time sweeps.

mod ablation;
mod report;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::datapipe::{denorm, Category, DataError, InputSet, NormStats};
use crate::model::{Model, ModelError};
use crate::trainer::build_batch;

pub use ablation::{
    fold_plan_for, run_ablation, sets_by_concrete, split_fold, AblationConfig, AblationRow, FoldSets,
};
pub use report::{
    averaging_csv, metrics_csv, parse_metrics_csv, plot_data, sweep_csv, sweep_svg, AveragingRow, MetricRow,
    SLUMP_PRECISION_CM,
};
pub use sweep::{time_sweep, SweepCurve};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Empty(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] Box<crate::trainer::TrainError>),
}

/// One denormalised prediction with the keys needed for grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub concrete_id: usize,
    pub run_id: usize,
    pub combination_index: usize,
    /// Slump and rheometer timestamps of the references.
    pub reference_ts_min: [f64; 2],
    pub pred: [f64; 3],
    pub target: [f64; 3],
    pub mask: [bool; 3],
}

impl Prediction {
    pub fn for_set(set: &InputSet, pred: [f64; 3]) -> Self {
        Self {
            concrete_id: set.concrete_id,
            run_id: set.run_id,
            combination_index: set.combination_index,
            reference_ts_min: set.reference_ts_min,
            pred,
            target: set.targets,
            mask: set.target_mask,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteMetrics {
    pub concrete_id: usize,
    pub eps_rel: [f64; 3],
    pub eps_abs: [f64; 3],
    /// Unmasked predictions per output.
    pub count: [usize; 3],
}

/// ε_rel in percent and ε_abs in output units. An output without any
/// unmasked prediction is NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub eps_rel: [f64; 3],
    pub eps_abs: [f64; 3],
    pub per_concrete: Vec<ConcreteMetrics>,
}

impl MetricReport {
    pub fn mean_eps_rel(&self) -> f64 {
        let v: Vec<f64> = self.eps_rel.iter().copied().filter(|x| x.is_finite()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean over each concrete's predictions, then unweighted mean over
/// concretes. References equal to zero are left out of ε_rel.
pub fn epsilon_metrics(preds: &[Prediction]) -> Result<MetricReport, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty("no predictions to evaluate".into()));
    }
    let mut by_concrete: BTreeMap<usize, Vec<&Prediction>> = BTreeMap::new();
    for p in preds {
        by_concrete.entry(p.concrete_id).or_default().push(p);
    }
    let mut per_concrete = Vec::with_capacity(by_concrete.len());
    for (&id, ps) in &by_concrete {
        let mut m = ConcreteMetrics {
            concrete_id: id,
            eps_rel: [f64::NAN; 3],
            eps_abs: [f64::NAN; 3],
            count: [0; 3],
        };
        for k in 0..3 {
            let (mut abs, mut rel, mut n, mut n_rel) = (0.0, 0.0, 0usize, 0usize);
            for p in ps.iter().filter(|p| p.mask[k]) {
                let e = (p.pred[k] - p.target[k]).abs();
                abs += e;
                n += 1;
                if p.target[k] == 0.0 {
                    log::warn!("concrete {id}: reference value 0 left out of eps_rel");
                } else {
                    rel += e / p.target[k].abs();
                    n_rel += 1;
                }
            }
            m.count[k] = n;
            if n > 0 {
                m.eps_abs[k] = abs / n as f64;
            }
            if n_rel > 0 {
                m.eps_rel[k] = 100.0 * rel / n_rel as f64;
            }
        }
        per_concrete.push(m);
    }
    let mut eps_rel = [f64::NAN; 3];
    let mut eps_abs = [f64::NAN; 3];
    for k in 0..3 {
        let mean = |f: &dyn Fn(&ConcreteMetrics) -> f64| {
            let v: Vec<f64> = per_concrete.iter().map(f).filter(|x| !x.is_nan()).collect();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        eps_rel[k] = mean(&|c| c.eps_rel[k]);
        eps_abs[k] = mean(&|c| c.eps_abs[k]);
    }
    Ok(MetricReport {
        eps_rel,
        eps_abs,
        per_concrete,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Grouping {
    None,
    /// Same reference combination within a run.
    PerRun,
    /// Same reference combination across all runs of a concrete.
    AllRuns,
    /// Same reference value: the slump measurement for δ, the rheometer
    /// measurement for τ₀ and μ.
    PerReference,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [Grouping::None, Grouping::PerRun, Grouping::AllRuns, Grouping::PerReference];

    pub fn parse(s: &str) -> Result<Self, EvalError> {
        Self::ALL
            .into_iter()
            .find(|g| g.to_string() == s)
            .ok_or_else(|| {
                EvalError::Invalid(format!(
                    "unknown averaging {s:?}; valid: none, per_run, all_runs, per_reference"
                ))
            })
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::None => "none",
            Grouping::PerRun => "per_run",
            Grouping::AllRuns => "all_runs",
            Grouping::PerReference => "per_reference",
        })
    }
}

/// Averaged predictions, one list per output (only that output unmasked).
#[derive(Clone, Debug, PartialEq)]
pub struct Averaged {
    pub grouping: Grouping,
    pub outputs: [Vec<Prediction>; 3],
    pub mean_group_size: [f64; 3],
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey(usize, usize, usize, u64);

fn group_key(p: &Prediction, g: Grouping, k: usize, ordinal: usize) -> GroupKey {
    match g {
        Grouping::None => GroupKey(p.concrete_id, 0, 0, ordinal as u64),
        Grouping::PerRun => GroupKey(p.concrete_id, p.run_id, p.combination_index, 0),
        Grouping::AllRuns => GroupKey(p.concrete_id, 0, p.combination_index, 0),
        Grouping::PerReference => {
            let ts = if k == 0 { p.reference_ts_min[0] } else { p.reference_ts_min[1] };
            GroupKey(p.concrete_id, 0, 0, ts.to_bits())
        }
    }
}

/// Arithmetic mean of the predictions in each group, per output. Groups
/// are formed from unmasked predictions only.
pub fn average_predictions(preds: &[Prediction], grouping: Grouping) -> Averaged {
    let mut outputs: [Vec<Prediction>; 3] = Default::default();
    let mut mean_group_size = [f64::NAN; 3];
    for k in 0..3 {
        let mut groups: BTreeMap<GroupKey, (Prediction, f64, usize)> = BTreeMap::new();
        for (i, p) in preds.iter().enumerate().filter(|(_, p)| p.mask[k]) {
            let e = groups.entry(group_key(p, grouping, k, i)).or_insert_with(|| {
                let mut first = p.clone();
                first.mask = [false; 3];
                first.mask[k] = true;
                (first, 0.0, 0)
            });
            if e.0.target[k] != p.target[k] {
                log::warn!(
                    "concrete {}: group mixes different references for output {k}",
                    p.concrete_id
                );
            }
            e.1 += p.pred[k];
            e.2 += 1;
        }
        if groups.is_empty() {
            continue;
        }
        let total: usize = groups.values().map(|g| g.2).sum();
        mean_group_size[k] = total as f64 / groups.len() as f64;
        outputs[k] = groups
            .into_values()
            .map(|(mut p, sum, n)| {
                p.pred[k] = sum / n as f64;
                p
            })
            .collect();
    }
    Averaged {
        grouping,
        outputs,
        mean_group_size,
    }
}

/// Metrics of averaged predictions, output by output.
pub fn averaged_metrics(avg: &Averaged) -> Result<MetricReport, EvalError> {
    let mut report = MetricReport {
        eps_rel: [f64::NAN; 3],
        eps_abs: [f64::NAN; 3],
        per_concrete: Vec::new(),
    };
    for k in 0..3 {
        if avg.outputs[k].is_empty() {
            continue;
        }
        let m = epsilon_metrics(&avg.outputs[k])?;
        report.eps_rel[k] = m.eps_rel[k];
        report.eps_abs[k] = m.eps_abs[k];
    }
    Ok(report)
}

/// Eval-mode predictions of `sets`, denormalised.
pub fn predict_sets(model: &Model<f32>, sets: &[InputSet], norm: &NormStats) -> Result<Vec<Prediction>, EvalError> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(sets.len());
    for chunk in sets.chunks(CHUNK) {
        let refs: Vec<&InputSet> = chunk.iter().collect();
        let batch = build_batch::<f32>(&refs, norm)?;
        let y = model.predict(&batch)?;
        for (i, s) in chunk.iter().enumerate() {
            let row = y.outer(i);
            let mut pred = [0.0; 3];
            for (k, c) in Category::TARGETS.iter().enumerate() {
                pred[k] = denorm(row[k] as f64, norm, *c)?;
            }
            out.push(Prediction::for_set(s, pred));
        }
    }
    Ok(out)
}

/// Predicts the training mean of each output (over unmasked targets) for
/// every set.
pub fn mean_baseline(train: &[InputSet], sets: &[InputSet]) -> Result<Vec<Prediction>, EvalError> {
    let mut mean = [0.0; 3];
    for (k, m) in mean.iter_mut().enumerate() {
        let v: Vec<f64> = train.iter().filter(|s| s.target_mask[k]).map(|s| s.targets[k]).collect();
        if v.is_empty() {
            return Err(EvalError::Empty(format!("no training targets for output {k}")));
        }
        *m = v.iter().sum::<f64>() / v.len() as f64;
    }
    Ok(sets.iter().map(|s| Prediction::for_set(s, mean)).collect())
}
