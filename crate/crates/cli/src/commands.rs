use std::fs;
use std::path::{Path, PathBuf};

use rheocast::datapipe::{
    count_input_sets, AssembleConfig, Combination, Dataset, InputSet, NormStats,
};
use rheocast::evaluator::{
    average_predictions, averaged_metrics, averaging_csv, epsilon_metrics, fold_plan_for, metrics_csv, plot_data,
    predict_sets, run_ablation, split_fold, sweep_csv, sweep_svg, time_sweep, AblationConfig, AveragingRow,
    Grouping, MetricReport, MetricRow, Prediction,
};
use rheocast::model::{load_checkpoint_expecting, save_checkpoint, Model, ModelConfig};
use rheocast::protocol::{enumerate_combinations, parse_key_values, FoldPlan, Reading};
use rheocast::synthgen::generate_campaign;
use rheocast::trainer::{epoch_csv, train};

use crate::config::parse_combination;
use crate::{CliError, Command, Config};

/// Name of the effective configuration echoed into output directories.
pub const CONFIG_ECHO: &str = "rheocast.cfg";
pub const FOLD_PLAN_FILE: &str = "folds.txt";
pub const MODEL_FILE: &str = "model.rhc";
pub const NORM_FILE: &str = "norm.txt";
pub const META_FILE: &str = "meta.txt";

pub fn dispatch(cfg: Config, command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate {
            out,
            seed,
            preset,
            force,
        } => generate(cfg, &out, seed, preset.as_deref(), force),
        Command::Train {
            data,
            out,
            fold,
            combination,
            epochs,
            seed,
        } => {
            let mut cfg = cfg;
            if let Some(name) = combination {
                cfg.data.combination = parse_combination(&name)?;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            train_cmd(&cfg, &data, &out, &fold)
        }
        Command::Evaluate {
            data,
            checkpoints,
            out,
            average,
            combination,
            dry_run,
            oracle,
        } => {
            let mut cfg = cfg;
            if let Some(name) = combination {
                cfg.data.combination = parse_combination(&name)?;
            }
            if let Some(g) = average {
                cfg.eval.groupings = vec![Grouping::parse(&g)?];
            }
            if dry_run {
                return dry_run_cmd(&cfg, &data, checkpoints.as_deref());
            }
            let out = out.ok_or_else(|| CliError::Usage("evaluate needs -o/--out unless --dry-run".into()))?;
            evaluate_cmd(&cfg, &data, checkpoints.as_deref(), &out, oracle)
        }
        Command::Sweep {
            data,
            checkpoint,
            concrete,
            run,
            from,
            to,
            out,
            svg,
        } => sweep_cmd(&cfg, &data, &checkpoint, concrete, run, (from, to), &out, svg),
        Command::Ablate {
            data,
            out,
            repeats,
            fold,
            combinations,
        } => {
            let mut cfg = cfg;
            if let Some(r) = repeats {
                cfg.eval.repeats = r;
            }
            if !combinations.is_empty() {
                cfg.eval.combinations = combinations
                    .iter()
                    .map(|n| parse_combination(n))
                    .collect::<Result<_, _>>()?;
            }
            cfg.validate()?;
            ablate_cmd(&cfg, &data, &out, &fold)
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn open_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::open(path)?)
}

fn assemble_config(cfg: &Config, ds: &Dataset, combination: Combination) -> AssembleConfig {
    AssembleConfig {
        skip_head: cfg.data.skip_head,
        flow: cfg.data.flow.clone(),
        combination,
        ..AssembleConfig::new(ds.paddle_threshold_mm, combination)
    }
}

/// `all` or a fold index below `n`.
fn parse_folds(spec: &str, n: usize) -> Result<Vec<usize>, CliError> {
    if spec == "all" {
        return Ok((0..n).collect());
    }
    match spec.parse::<usize>() {
        Ok(k) if k < n => Ok(vec![k]),
        _ => Err(CliError::Usage(format!(
            "--fold {spec:?}: expected all or an index in 0..{n}"
        ))),
    }
}

pub fn fold_dir(out: &Path, combination: Combination, fold: usize) -> PathBuf {
    out.join(combination.to_string()).join(format!("fold_{fold}"))
}

fn generate(cfg: Config, out: &Path, seed: Option<u64>, preset: Option<&str>, force: bool) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(p) = preset {
        // The flag replaces the whole [campaign] section.
        cfg.campaign = rheocast::synthgen::CampaignSpec::preset(p)
            .ok_or_else(|| CliError::Usage(format!("--preset {p:?}; valid: desk, paper")))?;
        cfg.campaign_preset = p.to_string();
    }
    if let Some(s) = seed {
        cfg.campaign.seed = s;
    }
    cfg.validate()?;
    let report = generate_campaign(&cfg.campaign, out, force)?;
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    println!("frames {}", report.frames_written);
    println!("digest {}", report.digest);
    Ok(())
}

fn train_cmd(cfg: &Config, data: &Path, out: &Path, fold: &str) -> Result<(), CliError> {
    let ds = open_dataset(data)?;
    let comb = cfg.data.combination;
    let model_cfg = cfg.model_config(ds.height, ds.width, comb)?;
    let plan = fold_plan_for(&ds, cfg.eval.fold_seed)?;
    let folds = parse_folds(fold, plan.folds.len())?;
    create_dir(out)?;
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    write(&out.join(FOLD_PLAN_FILE), &plan.to_text())?;

    let mut ids: Vec<usize> = folds
        .iter()
        .flat_map(|&k| plan.folds[k].train.iter().chain(&plan.folds[k].val).copied())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    log::info!("assembling input sets of {} concretes", ids.len());
    let acfg = assemble_config(cfg, &ds, comb);
    let mut by_concrete = std::collections::HashMap::new();
    for s in ds.input_sets(&ids, &acfg)? {
        by_concrete.entry(s.concrete_id).or_insert_with(Vec::new).push(s);
    }
    for k in folds {
        let split = split_fold(&by_concrete, &plan.folds[k]);
        log::info!(
            "fold {k}: {} training and {} validation sets",
            split.train.len(),
            split.val.len()
        );
        let outcome = train(&split.train, &split.val, &model_cfg, &cfg.train, |_| {})?;
        let dir = fold_dir(out, comb, k);
        create_dir(&dir)?;
        save_checkpoint(&dir.join(MODEL_FILE), &outcome.model, Some(&outcome.optimizer))?;
        write(&dir.join(NORM_FILE), &outcome.norm.to_text())?;
        write(&dir.join("epochs.csv"), &epoch_csv(&outcome.reports))?;
        write(
            &dir.join(META_FILE),
            &format!(
                "combination={comb}\nfold={k}\nbest_epoch={}\nfold_plan={}\n",
                outcome.best_epoch,
                plan.digest()
            ),
        )?;
        println!("fold {k}: best epoch {} -> {}", outcome.best_epoch, dir.display());
    }
    Ok(())
}

/// A trained model with everything needed to run it.
pub struct LoadedModel {
    pub model: Model<f32>,
    pub norm: NormStats,
    pub combination: Combination,
    pub fold: usize,
}

pub fn load_fold_dir(dir: &Path, height: usize, width: usize, cfg: &Config) -> Result<LoadedModel, CliError> {
    let dir = if dir.is_file() {
        dir.parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        dir.to_path_buf()
    };
    let meta_path = dir.join(META_FILE);
    let meta = parse_key_values(&read(&meta_path)?, "meta.txt")?;
    let get = |k: &str| {
        meta.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| CliError::Io(format!("{}: missing {k}", meta_path.display())))
    };
    let combination = Combination::parse(&get("combination")?)
        .map_err(|e| CliError::Io(format!("{}: {e}", meta_path.display())))?;
    let fold = get("fold")?
        .parse()
        .map_err(|_| CliError::Io(format!("{}: fold is not an integer", meta_path.display())))?;
    let model_cfg: ModelConfig = cfg.model_config(height, width, combination)?;
    let ckpt = load_checkpoint_expecting::<f32>(&dir.join(MODEL_FILE), &model_cfg)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.join(MODEL_FILE).display())))?;
    let norm_path = dir.join(NORM_FILE);
    let norm = NormStats::parse(&read(&norm_path)?).map_err(|e| CliError::Io(format!("{}: {e}", norm_path.display())))?;
    Ok(LoadedModel {
        model: ckpt.model,
        norm,
        combination,
        fold,
    })
}

/// Fold directories under a `train` output for one combination, by fold.
fn trained_folds(checkpoints: &Path, combination: Combination) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let root = checkpoints.join(combination.to_string());
    let entries = fs::read_dir(&root).map_err(|e| io_err(&root, e))?;
    let mut out = Vec::new();
    for e in entries {
        let e = e.map_err(|e| io_err(&root, e))?;
        let name = e.file_name();
        let Some(k) = name.to_str().and_then(|n| n.strip_prefix("fold_")).and_then(|n| n.parse().ok()) else {
            continue;
        };
        if e.path().join(MODEL_FILE).exists() {
            out.push((k, e.path()));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Usage(format!("no trained folds under {}", root.display())));
    }
    Ok(out)
}

fn fold_plan(cfg: &Config, ds: &Dataset, checkpoints: Option<&Path>) -> Result<FoldPlan, CliError> {
    if let Some(p) = checkpoints.map(|c| c.join(FOLD_PLAN_FILE)).filter(|p| p.exists()) {
        return Ok(FoldPlan::parse(&read(&p)?).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?);
    }
    Ok(fold_plan_for(ds, cfg.eval.fold_seed)?)
}

fn dry_run_cmd(cfg: &Config, data: &Path, checkpoints: Option<&Path>) -> Result<(), CliError> {
    let ds = open_dataset(data)?;
    let (mut runs, mut frames, mut sets) = (0, 0, 0);
    for c in &ds.concretes {
        enumerate_combinations(&c.references)?;
        for r in &c.runs {
            let n = count_input_sets(&r.frame_indices, cfg.data.skip_head);
            if n == 0 {
                return Err(CliError::Usage(format!(
                    "concrete {} run {}: {} frames yield no input sets",
                    c.id,
                    r.meta.run_id,
                    r.frame_indices.len()
                )));
            }
            runs += 1;
            frames += r.frame_indices.len();
            sets += n;
        }
        // Decode one frame per concrete to catch damaged files early.
        if let Some(r) = c.runs.first() {
            let f = ds.load_frames(&rheocast::datapipe::RunInfo {
                frame_indices: r.frame_indices.iter().take(1).copied().collect(),
                ..r.clone()
            })?;
            if f.first().is_some_and(|f| (f.ortho.height(), f.ortho.width()) != (ds.height, ds.width)) {
                return Err(CliError::Io(format!(
                    "concrete {}: frame size differs from campaign.txt",
                    c.id
                )));
            }
        }
    }
    let plan = fold_plan(cfg, &ds, checkpoints)?;
    let mut n_ckpt = 0;
    if let Some(ck) = checkpoints {
        for (_, dir) in trained_folds(ck, cfg.data.combination)? {
            load_fold_dir(&dir, ds.height, ds.width, cfg)?;
            n_ckpt += 1;
        }
    }
    println!(
        "ok: {} concretes, {runs} runs, {frames} frames, {sets} input sets per combination, {} folds, {n_ckpt} checkpoints",
        ds.concretes.len(),
        plan.folds.len()
    );
    Ok(())
}

/// Mean over folds, skipping outputs a fold could not score.
fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn evaluate_cmd(
    cfg: &Config,
    data: &Path,
    checkpoints: Option<&Path>,
    out: &Path,
    oracle: bool,
) -> Result<(), CliError> {
    let ds = open_dataset(data)?;
    let comb = cfg.data.combination;
    let plan = fold_plan(cfg, &ds, checkpoints)?;
    let folds: Vec<(usize, Option<PathBuf>)> = match (oracle, checkpoints) {
        (true, _) => (0..plan.folds.len()).map(|k| (k, None)).collect(),
        (false, Some(ck)) => trained_folds(ck, comb)?.into_iter().map(|(k, d)| (k, Some(d))).collect(),
        (false, None) => return Err(CliError::Usage("evaluate needs --checkpoints or --oracle".into())),
    };
    let acfg = assemble_config(cfg, &ds, comb);
    let mut metric_rows = Vec::new();
    let mut per_grouping: Vec<Vec<(MetricReport, [f64; 3])>> = vec![Vec::new(); cfg.eval.groupings.len()];
    for (k, dir) in folds {
        let fold = plan
            .folds
            .get(k)
            .ok_or_else(|| CliError::Usage(format!("fold {k} is not in the fold plan")))?;
        let sets: Vec<InputSet> = ds.input_sets(&fold.test, &acfg)?;
        let preds: Vec<Prediction> = match dir {
            None => sets.iter().map(|s| Prediction::for_set(s, s.targets)).collect(),
            Some(d) => {
                let m = load_fold_dir(&d, ds.height, ds.width, cfg)?;
                if m.combination != comb || m.fold != k {
                    return Err(CliError::Io(format!("{}: meta.txt does not match its location", d.display())));
                }
                predict_sets(&m.model, &sets, &m.norm)?
            }
        };
        let report = epsilon_metrics(&preds)?;
        log::info!("fold {k}: eps_rel {:?}", report.eps_rel);
        metric_rows.extend(MetricRow::from_report(&comb.to_string(), k, 0, &report));
        for (g, acc) in cfg.eval.groupings.iter().zip(per_grouping.iter_mut()) {
            let avg = average_predictions(&preds, *g);
            acc.push((averaged_metrics(&avg)?, avg.mean_group_size));
        }
    }
    let mut avg_rows = Vec::new();
    for (g, acc) in cfg.eval.groupings.iter().zip(&per_grouping) {
        for (k, output) in ["delta", "tau0", "mu"].iter().enumerate() {
            avg_rows.push(AveragingRow {
                grouping: g.to_string(),
                group_size_mean: mean_finite(acc.iter().map(|a| a.1[k])),
                output: output.to_string(),
                eps_rel: mean_finite(acc.iter().map(|a| a.0.eps_rel[k])),
                eps_abs: mean_finite(acc.iter().map(|a| a.0.eps_abs[k])),
            });
        }
    }
    create_dir(out)?;
    write(&out.join("metrics.csv"), &metrics_csv(&metric_rows))?;
    write(&out.join("averaging.csv"), &averaging_csv(&avg_rows))?;
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    println!("wrote {} metric rows to {}", metric_rows.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_cmd(
    cfg: &Config,
    data: &Path,
    checkpoint: &Path,
    concrete: usize,
    run: usize,
    (from, to): (f64, f64),
    out: &Path,
    svg: bool,
) -> Result<(), CliError> {
    if !(from.is_finite() && to.is_finite()) || from > to {
        return Err(CliError::Usage(format!("sweep interval --from {from} --to {to} is empty")));
    }
    let ds = open_dataset(data)?;
    let m = load_fold_dir(checkpoint, ds.height, ds.width, cfg)?;
    let c = ds.concrete(concrete)?;
    let r = c
        .runs
        .iter()
        .find(|r| r.meta.run_id == run)
        .ok_or_else(|| CliError::Usage(format!("concrete {concrete} has no run {run}")))?;
    let sets = ds.run_input_sets(c, r, &assemble_config(cfg, &ds, m.combination))?;
    let curve = time_sweep(&m.model, &sets, &m.norm, from, to)?;
    let refs: Vec<(f64, f64)> = c
        .references
        .iter()
        .filter_map(|r| match r.reading {
            Reading::Slump { delta_cm } => Some((r.timestamp_min, delta_cm)),
            _ => None,
        })
        .collect();
    create_dir(out)?;
    write(&out.join("sweep.csv"), &sweep_csv(&curve))?;
    write(&out.join("plot.csv"), &plot_data(&curve, &refs))?;
    if svg {
        write(&out.join("sweep.svg"), &sweep_svg(&curve, &refs))?;
    }
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    println!("{} minutes, {} sets averaged", curve.minutes.len(), curve.n_averaged);
    Ok(())
}

fn ablate_cmd(cfg: &Config, data: &Path, out: &Path, fold: &str) -> Result<(), CliError> {
    let ds = open_dataset(data)?;
    let plan = fold_plan_for(&ds, cfg.eval.fold_seed)?;
    let folds = parse_folds(fold, plan.folds.len())?;
    let full = Combination::parse("O+D+m+OF").expect("valid name");
    let acfg = AblationConfig {
        combinations: cfg.eval.combinations.clone(),
        folds,
        repeats: cfg.eval.repeats,
        fold_seed: cfg.eval.fold_seed,
        base_model: cfg.model_config(ds.height, ds.width, full)?,
        train: cfg.train.clone(),
        assemble: assemble_config(cfg, &ds, full),
    };
    create_dir(out)?;
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    let rows = run_ablation(&ds, &acfg, |r| {
        log::info!(
            "repeat {} {} fold {}: eps_rel {:?}",
            r.repeat,
            r.combination,
            r.fold,
            r.report.eps_rel
        )
    })?;
    let metric_rows: Vec<MetricRow> = rows
        .iter()
        .flat_map(|r| MetricRow::from_report(&r.combination.to_string(), r.fold, r.repeat, &r.report))
        .collect();
    write(&out.join("metrics.csv"), &metrics_csv(&metric_rows))?;
    let mut summary = String::from("combination,output,eps_rel,eps_abs\n");
    for comb in &acfg.combinations {
        let name = comb.to_string();
        for output in ["delta", "tau0", "mu"] {
            let sel = || metric_rows.iter().filter(|r| r.combination == name && r.output == output);
            summary.push_str(&format!(
                "{name},{output},{:.6},{:.6}\n",
                mean_finite(sel().map(|r| r.eps_rel)),
                mean_finite(sel().map(|r| r.eps_abs))
            ));
        }
    }
    write(&out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}
