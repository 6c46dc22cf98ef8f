//! Synthetic campaign generator. Writes a directory that `Dataset::open`
//! reads back, plus a `truth.txt` with the latent property curves of every
//! concrete.

mod latent;
mod render;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datapipe::{frame_path, write_frame_file, ChannelTag, DataError};
use crate::protocol::{format_references, parse_key_values, fmt_f64, Materials, ProtocolError, ReferenceMeasurement};

pub use latent::{
    sample_concrete, sample_references, LatentCurves, ReferenceNoise, DELTA_RANGE, MU_RANGE,
    TAU0_RANGE,
};
pub use render::{render_run, RenderParams, RenderedRun, RunSpec, RunState};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} is not empty; pass force to overwrite")]
    NotEmpty(PathBuf),
    #[error("invalid campaign: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> GenError + '_ {
    move |source| GenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignSpec {
    pub n_concretes: usize,
    pub runs_per_concrete: usize,
    pub frames_per_run: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub n_recycled: usize,
    /// Concretes whose rheometer readings are distorted and flagged.
    pub implausible: Vec<usize>,
    pub slump_noise_cm: f64,
    pub rheo_noise_rel: f64,
    /// Probability that a frame is missing from disk.
    pub frame_drop_prob: f64,
    pub ortho_shading: bool,
    pub texture_gain: f64,
}

impl CampaignSpec {
    /// Full-scale campaign: 45 concretes, 14 runs of 1300 frames.
    pub fn paper() -> Self {
        Self {
            n_concretes: 45,
            runs_per_concrete: 14,
            frames_per_run: 1300,
            height: 128,
            width: 128,
            seed: 7,
            n_recycled: 5,
            implausible: vec![11, 29],
            slump_noise_cm: 1.23,
            rheo_noise_rel: 0.03,
            frame_drop_prob: 0.0,
            ortho_shading: true,
            texture_gain: 8000.0,
        }
    }

    /// Desk-scale campaign: 12 concretes, 14 runs of 120 frames at 64×64.
    pub fn desk() -> Self {
        Self {
            n_concretes: 12,
            frames_per_run: 120,
            height: 64,
            width: 64,
            n_recycled: 1,
            implausible: vec![4, 9],
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            ortho_shading: self.ortho_shading,
            texture_gain: self.texture_gain,
            ..RenderParams::new(self.height, self.width)
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Invalid(m));
        if self.n_concretes == 0 || self.runs_per_concrete == 0 {
            return bad("n_concretes and runs_per_concrete must be positive".into());
        }
        if self.frames_per_run < 2 {
            return bad(format!("frames_per_run={} is below 2", self.frames_per_run));
        }
        if self.height < 16 || self.width < 20 {
            return bad(format!(
                "{}x{} frames are too small (need at least 16x20)",
                self.height, self.width
            ));
        }
        if self.n_recycled > self.n_concretes {
            return bad(format!("n_recycled={} exceeds n_concretes", self.n_recycled));
        }
        if let Some(i) = self.implausible.iter().find(|&&i| i >= self.n_concretes) {
            return bad(format!("implausible concrete {i} out of range"));
        }
        if !(0.0..1.0).contains(&self.frame_drop_prob) {
            return bad(format!("frame_drop_prob={} not in [0, 1)", self.frame_drop_prob));
        }
        if !(self.slump_noise_cm >= 0.0 && self.rheo_noise_rel >= 0.0 && self.texture_gain >= 0.0) {
            return bad("noise levels and texture_gain must be non-negative".into());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let implausible: Vec<String> = self.implausible.iter().map(|i| i.to_string()).collect();
        let p = self.render_params();
        format!(
            "n_concretes={}\nruns_per_concrete={}\nframes_per_run={}\nheight={}\nwidth={}\n\
             seed={}\nn_recycled={}\nimplausible={}\nslump_noise_cm={}\nrheo_noise_rel={}\n\
             frame_drop_prob={}\northo_shading={}\ntexture_gain={}\nfill_mm={}\npaddle_threshold_mm={}\n",
            self.n_concretes,
            self.runs_per_concrete,
            self.frames_per_run,
            self.height,
            self.width,
            self.seed,
            self.n_recycled,
            implausible.join(","),
            fmt_f64(self.slump_noise_cm),
            fmt_f64(self.rheo_noise_rel),
            fmt_f64(self.frame_drop_prob),
            self.ortho_shading,
            fmt_f64(self.texture_gain),
            fmt_f64(p.fill_mm),
            fmt_f64(p.paddle_threshold_mm()),
        )
    }

    /// Parses `campaign.txt`. Keys written by `to_text` that are derived
    /// (`fill_mm`, `paddle_threshold_mm`) are accepted and ignored.
    pub fn parse(text: &str) -> Result<Self, GenError> {
        let kv = parse_key_values(text, "campaign.txt")?;
        let mut s = Self::desk();
        s.implausible.clear();
        for (k, v) in &kv {
            let bad = || GenError::Invalid(format!("{k}={v} cannot be parsed"));
            match k.as_str() {
                "n_concretes" => s.n_concretes = v.parse().map_err(|_| bad())?,
                "runs_per_concrete" => s.runs_per_concrete = v.parse().map_err(|_| bad())?,
                "frames_per_run" => s.frames_per_run = v.parse().map_err(|_| bad())?,
                "height" => s.height = v.parse().map_err(|_| bad())?,
                "width" => s.width = v.parse().map_err(|_| bad())?,
                "seed" => s.seed = v.parse().map_err(|_| bad())?,
                "n_recycled" => s.n_recycled = v.parse().map_err(|_| bad())?,
                "implausible" => {
                    s.implausible = v
                        .split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(|t| t.trim().parse().map_err(|_| bad()))
                        .collect::<Result<_, _>>()?
                }
                "slump_noise_cm" => s.slump_noise_cm = v.parse().map_err(|_| bad())?,
                "rheo_noise_rel" => s.rheo_noise_rel = v.parse().map_err(|_| bad())?,
                "frame_drop_prob" => s.frame_drop_prob = v.parse().map_err(|_| bad())?,
                "ortho_shading" => s.ortho_shading = v.parse().map_err(|_| bad())?,
                "texture_gain" => s.texture_gain = v.parse().map_err(|_| bad())?,
                "fill_mm" | "paddle_threshold_mm" => {}
                _ => return Err(GenError::Invalid(format!("unknown key {k}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }
}

/// Everything drawn for one concrete before rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteRecord {
    pub id: usize,
    pub materials: Materials,
    pub curves: LatentCurves,
    pub recycled: bool,
    pub implausible: bool,
    pub references: Vec<ReferenceMeasurement>,
    pub runs: Vec<RunSpec>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn recycled_ids(spec: &CampaignSpec) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..spec.n_concretes).collect();
    ids.shuffle(&mut rng_for(spec.seed, 0));
    ids.truncate(spec.n_recycled);
    ids
}

/// Draws materials, curves, references and run schedule of concrete `id`.
/// The first half of the runs use 30 fps and 0.2 m/s, the rest 60 fps and
/// 0.45 m/s; runs start every 4.5 minutes from minute 12.
pub fn generate_concrete(spec: &CampaignSpec, id: usize) -> ConcreteRecord {
    let recycled = recycled_ids(spec).contains(&id);
    let implausible = spec.implausible.contains(&id);
    let mut rng = rng_for(spec.seed, 1 + id as u64);
    let (materials, curves) = sample_concrete(&mut rng, recycled);
    let noise = ReferenceNoise {
        slump_sigma_cm: spec.slump_noise_cm,
        rheo_sigma_rel: spec.rheo_noise_rel,
    };
    let references = sample_references(&mut rng, &curves, &noise, implausible);
    let slow = spec.runs_per_concrete.div_ceil(2);
    let runs = (0..spec.runs_per_concrete)
        .map(|r| {
            let (fps, v) = if r < slow { (30.0, 0.2) } else { (60.0, 0.45) };
            RunSpec {
                run_id: r,
                start_min: 12.0 + 4.5 * r as f64 + rng.random_range(-0.5..0.5),
                frame_rate_fps: fps,
                paddle_velocity_mps: v,
                n_frames: spec.frames_per_run,
            }
        })
        .collect();
    ConcreteRecord {
        id,
        materials,
        curves,
        recycled,
        implausible,
        references,
        runs,
    }
}

/// Material state used for rendering a run: the latent curves evaluated at
/// the middle of the run.
pub fn run_state(curves: &LatentCurves, run: &RunSpec) -> RunState {
    let t = run.start_min + run.n_frames as f64 / run.frame_rate_fps / 120.0;
    let [delta, tau0, mu] = curves.state(t);
    RunState { delta, tau0, mu }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenReport {
    pub digest: String,
    pub frames_written: usize,
}

/// Latent truth of a generated campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub concretes: Vec<TruthEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthEntry {
    pub id: usize,
    pub curves: LatentCurves,
    pub recycled: bool,
    pub implausible: bool,
}

impl Truth {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.concretes {
            let p = format!("concrete.{}", e.id);
            s += &format!("{p}.recycled={}\n{p}.implausible={}\n", e.recycled, e.implausible);
            s += &e.curves.to_kv(&p);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, GenError> {
        let kv = parse_key_values(text, "truth.txt")?;
        let mut ids: Vec<usize> = kv
            .iter()
            .filter_map(|(k, _)| k.strip_prefix("concrete.")?.split('.').next()?.parse().ok())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let find = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let concretes = ids
            .into_iter()
            .map(|id| {
                let p = format!("concrete.{id}");
                let flag = |name: &str| {
                    find(&format!("{p}.{name}"))
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| GenError::Invalid(format!("truth.txt: bad or missing {p}.{name}")))
                };
                let curves = LatentCurves::from_kv(|k| find(&format!("{p}.{k}"))?.parse().ok())
                    .ok_or_else(|| GenError::Invalid(format!("truth.txt: incomplete curves for {p}")))?;
                Ok(TruthEntry {
                    id,
                    curves,
                    recycled: flag("recycled")?,
                    implausible: flag("implausible")?,
                })
            })
            .collect::<Result<Vec<_>, GenError>>()?;
        Ok(Self { concretes })
    }

    pub fn load(root: &Path) -> Result<Self, GenError> {
        let path = root.join("truth.txt");
        Self::parse(&fs::read_to_string(&path).map_err(io(&path))?)
    }

    pub fn get(&self, id: usize) -> Option<&TruthEntry> {
        self.concretes.iter().find(|e| e.id == id)
    }
}

fn is_own_entry(name: &str) -> bool {
    name == "campaign.txt" || name == "truth.txt" || name.starts_with("concrete_")
}

fn prepare_dir(out: &Path, force: bool) -> Result<(), GenError> {
    if !out.exists() {
        return fs::create_dir(out).map_err(io(out));
    }
    let entries: Vec<_> = fs::read_dir(out)
        .map_err(io(out))?
        .collect::<Result<_, _>>()
        .map_err(io(out))?;
    if entries.is_empty() {
        return Ok(());
    }
    if !force {
        return Err(GenError::NotEmpty(out.to_path_buf()));
    }
    for e in entries {
        let name = e.file_name();
        if !name.to_str().is_some_and(is_own_entry) {
            continue;
        }
        let p = e.path();
        if p.is_dir() {
            fs::remove_dir_all(&p).map_err(io(&p))?;
        } else {
            fs::remove_file(&p).map_err(io(&p))?;
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), GenError> {
    fs::write(path, text).map_err(io(path))
}

fn write_run(
    spec: &CampaignSpec,
    rec: &ConcreteRecord,
    run: &RunSpec,
    dir: &Path,
) -> Result<usize, GenError> {
    fs::create_dir(dir).map_err(io(dir))?;
    write(
        &dir.join("run.txt"),
        &format!(
            "start_min={}\nframe_rate_fps={}\npaddle_velocity_mps={}\n",
            fmt_f64(run.start_min),
            fmt_f64(run.frame_rate_fps),
            fmt_f64(run.paddle_velocity_mps)
        ),
    )?;
    let stream = 1_000_000 + 1000 * rec.id as u64 + run.run_id as u64;
    let mut rng = rng_for(spec.seed, stream);
    let rendered = render_run(&run_state(&rec.curves, run), run, &spec.render_params(), &mut rng);
    let mut written = 0;
    for f in &rendered.frames {
        if spec.frame_drop_prob > 0.0 && rng.random_bool(spec.frame_drop_prob) {
            continue;
        }
        write_frame_file(&frame_path(dir, f.index, ChannelTag::Ortho), &f.ortho, ChannelTag::Ortho)?;
        write_frame_file(&frame_path(dir, f.index, ChannelTag::Depth), &f.depth, ChannelTag::Depth)?;
        written += 1;
    }
    Ok(written)
}

/// Generates a campaign under `out`, whose parent must exist. A non-empty
/// `out` is refused unless `force` is set, in which case only entries this
/// generator writes are removed first.
pub fn generate_campaign(spec: &CampaignSpec, out: &Path, force: bool) -> Result<GenReport, GenError> {
    spec.validate()?;
    prepare_dir(out, force)?;
    write(&out.join("campaign.txt"), &spec.to_text())?;
    let records: Vec<ConcreteRecord> = (0..spec.n_concretes).map(|i| generate_concrete(spec, i)).collect();
    let truth = Truth {
        concretes: records
            .iter()
            .map(|r| TruthEntry {
                id: r.id,
                curves: r.curves,
                recycled: r.recycled,
                implausible: r.implausible,
            })
            .collect(),
    };
    write(&out.join("truth.txt"), &truth.to_text())?;

    let mut jobs = Vec::new();
    for rec in &records {
        let dir = out.join(format!("concrete_{:02}", rec.id));
        fs::create_dir(&dir).map_err(io(&dir))?;
        write(&dir.join("mix.txt"), &rec.materials.to_text())?;
        write(&dir.join("meta.txt"), &format!("recycled={}\n", rec.recycled))?;
        write(&dir.join("references.csv"), &format_references(&rec.references))?;
        jobs.extend(rec.runs.iter().map(|run| (rec, run, dir.join(format!("run_{:02}", run.run_id)))));
    }
    let counts: Vec<Result<usize, GenError>> = jobs
        .par_iter()
        .map(|(rec, run, dir)| write_run(spec, rec, run, dir))
        .collect();
    let mut frames_written = 0;
    for c in counts {
        frames_written += c?;
    }
    log::info!("generated {} concretes, {frames_written} frames", spec.n_concretes);
    Ok(GenReport {
        digest: directory_digest(out)?,
        frames_written,
    })
}

/// SHA-256 over every file below `root`, in sorted relative-path order,
/// hashing each path and its contents.
pub fn directory_digest(root: &Path) -> Result<String, GenError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), GenError> {
        for e in fs::read_dir(dir).map_err(io(dir))? {
            let p = e.map_err(io(dir))?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let mut rel: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|p| {
            let r = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            (r, p)
        })
        .collect();
    rel.sort();
    let mut h = Sha256::new();
    for (r, p) in rel {
        let bytes = fs::read(&p).map_err(io(&p))?;
        h.update(r.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{count_input_sets, Dataset};

    fn tiny() -> CampaignSpec {
        CampaignSpec {
            n_concretes: 3,
            runs_per_concrete: 2,
            frames_per_run: 26,
            height: 32,
            width: 32,
            n_recycled: 1,
            implausible: vec![2],
            ..CampaignSpec::desk()
        }
    }

    #[test]
    fn campaign_text_round_trips() {
        for s in [CampaignSpec::desk(), CampaignSpec::paper(), tiny()] {
            assert_eq!(CampaignSpec::parse(&s.to_text()).unwrap(), s);
        }
        assert!(CampaignSpec::parse("n_concretes=2\nbogus=1\n").is_err());
    }

    #[test]
    fn generated_campaign_opens_and_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        let ra = generate_campaign(&tiny(), &a, false).unwrap();
        let rb = generate_campaign(&tiny(), &b, false).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.frames_written, 3 * 2 * 26);

        let ds = Dataset::open(&a).unwrap();
        assert_eq!(ds.concretes.len(), 3);
        assert_eq!(ds.paddle_threshold_mm, 50.0);
        assert_eq!(ds.concretes.iter().filter(|c| c.recycled).count(), 1);
        for c in &ds.concretes {
            for r in &c.runs {
                assert_eq!(count_input_sets(&r.frame_indices, 20), 26 - 1 - 20);
            }
        }
        let truth = Truth::load(&a).unwrap();
        assert_eq!(truth.concretes.len(), 3);
        assert!(truth.get(2).unwrap().implausible);
        assert_eq!(Truth::parse(&truth.to_text()).unwrap(), truth);
    }

    #[test]
    fn refuses_non_empty_output_unless_forced() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("c");
        fs::create_dir(&out).unwrap();
        fs::write(out.join("keep.txt"), "x").unwrap();
        assert!(matches!(generate_campaign(&tiny(), &out, false), Err(GenError::NotEmpty(_))));
        let first = generate_campaign(&tiny(), &out, true).unwrap();
        let again = generate_campaign(&tiny(), &out, true).unwrap();
        assert_eq!(first, again);
        assert!(out.join("keep.txt").exists());
        assert!(generate_campaign(&tiny(), &tmp.path().join("no/such/dir"), false).is_err());
    }

    #[test]
    fn dropped_frames_shrink_input_sets() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = CampaignSpec {
            frame_drop_prob: 0.2,
            ..tiny()
        };
        let r = generate_campaign(&spec, &tmp.path().join("c"), false).unwrap();
        assert!(r.frames_written < 3 * 2 * 26);
        let ds = Dataset::open(&tmp.path().join("c")).unwrap();
        let run = &ds.concretes[0].runs[0];
        let idx = &run.frame_indices;
        let consecutive = idx.windows(2).filter(|w| w[1] == w[0] + 1).count();
        assert_eq!(count_input_sets(idx, 20), consecutive.saturating_sub(20));
    }
}
