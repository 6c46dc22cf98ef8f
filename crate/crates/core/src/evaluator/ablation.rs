use std::collections::HashMap;

use crate::datapipe::{AssembleConfig, Combination, Dataset, InputSet};
use crate::model::ModelConfig;
use crate::protocol::{make_folds, Fold, FoldPlan, FoldSpec};
use crate::trainer::{train, TrainConfig};

use super::{epsilon_metrics, predict_sets, EvalError, MetricReport};

/// Fold plan over all concretes of `dataset` with the scaled constraints.
pub fn fold_plan_for(dataset: &Dataset, seed: u64) -> Result<FoldPlan, EvalError> {
    let concretes = dataset.fold_concretes()?;
    let recycled = concretes.iter().filter(|c| c.recycled).count();
    let spec = FoldSpec::scaled(concretes.len(), recycled);
    make_folds(&concretes, &spec, seed).map_err(|e| EvalError::Invalid(e.to_string()))
}

#[derive(Clone, Debug, Default)]
pub struct FoldSets {
    pub train: Vec<InputSet>,
    pub val: Vec<InputSet>,
    pub test: Vec<InputSet>,
}

/// Splits input sets (keyed by concrete) along `fold`.
pub fn split_fold(by_concrete: &HashMap<usize, Vec<InputSet>>, fold: &Fold) -> FoldSets {
    let gather = |ids: &[usize]| -> Vec<InputSet> {
        ids.iter()
            .flat_map(|id| by_concrete.get(id).into_iter().flatten().cloned())
            .collect()
    };
    FoldSets {
        train: gather(&fold.train),
        val: gather(&fold.val),
        test: gather(&fold.test),
    }
}

/// Input sets of every concrete, keyed by concrete id.
pub fn sets_by_concrete(
    dataset: &Dataset,
    cfg: &AssembleConfig,
) -> Result<HashMap<usize, Vec<InputSet>>, EvalError> {
    let ids: Vec<usize> = dataset.concretes.iter().map(|c| c.id).collect();
    let mut out: HashMap<usize, Vec<InputSet>> = HashMap::new();
    for s in dataset.input_sets(&ids, cfg)? {
        out.entry(s.concrete_id).or_default().push(s);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub combinations: Vec<Combination>,
    /// Folds to run; all folds when empty.
    pub folds: Vec<usize>,
    pub repeats: usize,
    pub fold_seed: u64,
    pub base_model: ModelConfig,
    pub train: TrainConfig,
    /// Assembly settings; the combination is replaced per run.
    pub assemble: AssembleConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub combination: Combination,
    pub fold: usize,
    pub repeat: usize,
    pub plan_digest: String,
    pub report: MetricReport,
}

/// Trains and tests one model per (repeat, combination, fold). Every
/// combination of a repeat sees the same fold plan and training seed.
pub fn run_ablation(
    dataset: &Dataset,
    cfg: &AblationConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>, EvalError> {
    let mut rows = Vec::new();
    for repeat in 0..cfg.repeats {
        let plan = fold_plan_for(dataset, cfg.fold_seed + repeat as u64)?;
        let digest = plan.digest();
        let folds: Vec<usize> = if cfg.folds.is_empty() {
            (0..plan.folds.len()).collect()
        } else {
            cfg.folds.clone()
        };
        for &comb in &cfg.combinations {
            let acfg = AssembleConfig {
                combination: comb,
                ..cfg.assemble.clone()
            };
            let sets = sets_by_concrete(dataset, &acfg)?;
            let model_cfg = comb.model_config(&cfg.base_model);
            for &f in &folds {
                let fold = plan
                    .folds
                    .get(f)
                    .ok_or_else(|| EvalError::Invalid(format!("fold {f} does not exist")))?;
                let split = split_fold(&sets, fold);
                let tcfg = TrainConfig {
                    seed: cfg.train.seed + repeat as u64,
                    ..cfg.train.clone()
                };
                let outcome = train(&split.train, &split.val, &model_cfg, &tcfg, |_| {})
                    .map_err(|e| EvalError::Train(Box::new(e)))?;
                let report = epsilon_metrics(&predict_sets(&outcome.model, &split.test, &outcome.norm)?)?;
                let row = AblationRow {
                    combination: comb,
                    fold: f,
                    repeat,
                    plan_digest: digest.clone(),
                    report,
                };
                on_row(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
