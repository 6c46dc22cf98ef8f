//! Sectioned `key = value` configuration.
//!
//! ```text
//! [model]
//! preset = auto
//!
//! [train]
//! epochs = 5
//! ```
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file is a valid configuration. Unknown sections and keys are
//! rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use rheocast::datapipe::{Combination, FlowParams};
use rheocast::evaluator::Grouping;
use rheocast::model::ModelConfig;
use rheocast::synthgen::CampaignSpec;
use rheocast::trainer::TrainConfig;

use crate::CliError;

pub const SECTIONS: [&str; 5] = ["model", "train", "data", "campaign", "eval"];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// `auto` picks the preset matching the dataset's frame size.
    pub model_preset: String,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub campaign_preset: String,
    pub campaign: CampaignSpec,
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub combination: Combination,
    /// Leading frame pairs of each run that never form input sets.
    pub skip_head: usize,
    pub flow: FlowParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Seed of the fold plan.
    pub fold_seed: u64,
    /// Cross-validation repetitions in `ablate`.
    pub repeats: usize,
    /// Combinations compared by `ablate`.
    pub combinations: Vec<Combination>,
    /// Groupings reported by `evaluate` when `--average` is not given.
    pub groupings: Vec<Grouping>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model_preset: "auto".into(),
            train: TrainConfig::default(),
            data: DataConfig {
                combination: Combination::parse("D+m+OF").expect("valid name"),
                skip_head: 20,
                flow: FlowParams::default(),
            },
            campaign_preset: "desk".into(),
            campaign: CampaignSpec::desk(),
            eval: EvalConfig {
                fold_seed: 1,
                repeats: 2,
                combinations: Combination::all(),
                groupings: Grouping::ALL.to_vec(),
            },
        }
    }
}

fn value<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("[{section}] {key} = {v:?} cannot be parsed")))
}

fn list<T>(v: &str, mut f: impl FnMut(&str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    v.split(',').map(str::trim).filter(|t| !t.is_empty()).map(&mut f).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| CliError::Usage(format!("config line {}: {m}", i + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!(
                        "unknown section [{name}]; valid: {}",
                        SECTIONS.join(", ")
                    )));
                }
                if sections.iter().any(|(s, _)| s == name) {
                    return Err(err(format!("section [{name}] appears twice")));
                }
                sections.push((name.to_string(), Vec::new()));
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            let Some((_, entries)) = sections.last_mut() else {
                return Err(err(format!("key {k} appears before any section header")));
            };
            if entries.iter().any(|(seen, _)| *seen == k) {
                return Err(err(format!("duplicate key {k}")));
            }
            entries.push((k, v));
        }

        let mut cfg = Config::default();
        for (section, entries) in &sections {
            // Presets first so that individual keys override them.
            if let Some((_, v)) = entries.iter().find(|(k, _)| k == "preset") {
                cfg.apply(section, "preset", v)?;
            }
            for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
                cfg.apply(section, k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, v: &str) -> Result<(), CliError> {
        let s = section;
        match (section, key) {
            ("model", "preset") => {
                if v != "auto" && ModelConfig::preset(v).is_none() {
                    return Err(CliError::Usage(format!(
                        "[model] preset = {v:?}; valid: auto, paper, desk128, desk64"
                    )));
                }
                self.model_preset = v.to_string();
            }
            ("train", "learning_rate") => self.train.learning_rate = value(s, key, v)?,
            ("train", "momentum") => self.train.momentum = value(s, key, v)?,
            ("train", "weight_decay") => self.train.weight_decay = value(s, key, v)?,
            ("train", "epochs") => self.train.epochs = value(s, key, v)?,
            ("train", "batch_size") => self.train.batch_size = value(s, key, v)?,
            ("train", "seed") => self.train.seed = value(s, key, v)?,
            ("train", "augment") => self.train.augment = value(s, key, v)?,
            ("data", "combination") => self.data.combination = parse_combination(v)?,
            ("data", "skip_head") => self.data.skip_head = value(s, key, v)?,
            ("data", "flow_levels") => self.data.flow.levels = value(s, key, v)?,
            ("data", "flow_window") => self.data.flow.window = value(s, key, v)?,
            ("data", "flow_iterations") => self.data.flow.iterations = value(s, key, v)?,
            ("data", "flow_poly_radius") => self.data.flow.poly_radius = value(s, key, v)?,
            ("data", "flow_poly_sigma") => self.data.flow.poly_sigma = value(s, key, v)?,
            ("campaign", "preset") => {
                self.campaign = CampaignSpec::preset(v).ok_or_else(|| {
                    CliError::Usage(format!("[campaign] preset = {v:?}; valid: desk, paper"))
                })?;
                self.campaign_preset = v.to_string();
            }
            ("campaign", "n_concretes") => self.campaign.n_concretes = value(s, key, v)?,
            ("campaign", "runs_per_concrete") => self.campaign.runs_per_concrete = value(s, key, v)?,
            ("campaign", "frames_per_run") => self.campaign.frames_per_run = value(s, key, v)?,
            ("campaign", "height") => self.campaign.height = value(s, key, v)?,
            ("campaign", "width") => self.campaign.width = value(s, key, v)?,
            ("campaign", "seed") => self.campaign.seed = value(s, key, v)?,
            ("campaign", "n_recycled") => self.campaign.n_recycled = value(s, key, v)?,
            ("campaign", "implausible") => self.campaign.implausible = list(v, |t| value(s, key, t))?,
            ("campaign", "slump_noise_cm") => self.campaign.slump_noise_cm = value(s, key, v)?,
            ("campaign", "rheo_noise_rel") => self.campaign.rheo_noise_rel = value(s, key, v)?,
            ("campaign", "frame_drop_prob") => self.campaign.frame_drop_prob = value(s, key, v)?,
            ("campaign", "ortho_shading") => self.campaign.ortho_shading = value(s, key, v)?,
            ("campaign", "texture_gain") => self.campaign.texture_gain = value(s, key, v)?,
            ("eval", "fold_seed") => self.eval.fold_seed = value(s, key, v)?,
            ("eval", "repeats") => self.eval.repeats = value(s, key, v)?,
            ("eval", "combinations") => self.eval.combinations = list(v, parse_combination)?,
            ("eval", "groupings") => {
                self.eval.groupings = list(v, |t| Grouping::parse(t).map_err(|e| CliError::Usage(e.to_string())))?
            }
            _ => return Err(CliError::Usage(format!("unknown key {key} in [{section}]"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.data.flow.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.campaign.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.eval.repeats == 0 {
            return Err(CliError::Usage("[eval] repeats must be at least 1".into()));
        }
        if self.eval.combinations.is_empty() || self.eval.groupings.is_empty() {
            return Err(CliError::Usage("[eval] combinations and groupings must not be empty".into()));
        }
        Ok(())
    }

    /// The effective configuration in the format `parse` reads.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let d = &self.data;
        let c = &self.campaign;
        let mut s = String::new();
        let _ = writeln!(s, "[model]\npreset = {}\n", self.model_preset);
        let _ = writeln!(
            s,
            "[train]\nlearning_rate = {:?}\nmomentum = {:?}\nweight_decay = {:?}\nepochs = {}\n\
             batch_size = {}\nseed = {}\naugment = {}\n",
            t.learning_rate, t.momentum, t.weight_decay, t.epochs, t.batch_size, t.seed, t.augment
        );
        let _ = writeln!(
            s,
            "[data]\ncombination = {}\nskip_head = {}\nflow_levels = {}\nflow_window = {}\n\
             flow_iterations = {}\nflow_poly_radius = {}\nflow_poly_sigma = {:?}\n",
            d.combination, d.skip_head, d.flow.levels, d.flow.window, d.flow.iterations, d.flow.poly_radius,
            d.flow.poly_sigma
        );
        let _ = writeln!(
            s,
            "[campaign]\npreset = {}\nn_concretes = {}\nruns_per_concrete = {}\nframes_per_run = {}\n\
             height = {}\nwidth = {}\nseed = {}\nn_recycled = {}\nimplausible = {}\nslump_noise_cm = {:?}\n\
             rheo_noise_rel = {:?}\nframe_drop_prob = {:?}\northo_shading = {}\ntexture_gain = {:?}\n",
            self.campaign_preset,
            c.n_concretes,
            c.runs_per_concrete,
            c.frames_per_run,
            c.height,
            c.width,
            c.seed,
            c.n_recycled,
            join(&c.implausible),
            c.slump_noise_cm,
            c.rheo_noise_rel,
            c.frame_drop_prob,
            c.ortho_shading,
            c.texture_gain
        );
        let _ = writeln!(
            s,
            "[eval]\nfold_seed = {}\nrepeats = {}\ncombinations = {}\ngroupings = {}",
            self.eval.fold_seed,
            self.eval.repeats,
            join(&self.eval.combinations),
            join(&self.eval.groupings)
        );
        s
    }

    /// Model configuration for frames of `height × width` and the configured
    /// combination.
    pub fn model_config(&self, height: usize, width: usize, combination: Combination) -> Result<ModelConfig, CliError> {
        let name = if self.model_preset == "auto" {
            match (height, width) {
                (64, 64) => "desk64",
                (128, 128) => "desk128",
                (512, 512) => "paper",
                _ => {
                    return Err(CliError::Usage(format!(
                        "no model preset for {height}x{width} frames; set [model] preset"
                    )))
                }
            }
        } else {
            self.model_preset.as_str()
        };
        let base = ModelConfig::preset(name).expect("preset validated on parse");
        if base.input_size != (height, width) {
            return Err(CliError::Usage(format!(
                "model preset {name} expects {}x{} frames, the dataset has {height}x{width}",
                base.input_size.0, base.input_size.1
            )));
        }
        let cfg = combination.model_config(&base);
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn parse_combination(name: &str) -> Result<Combination, CliError> {
    Combination::parse(name).map_err(|e| CliError::Usage(e.to_string()))
}
