//! On-disk campaign layout:
//!
//! ```text
//! <root>/campaign.txt                 key=value, incl. height, width, paddle_threshold_mm
//! <root>/concrete_NN/mix.txt          material keys
//! <root>/concrete_NN/meta.txt         recycled=true|false
//! <root>/concrete_NN/references.csv   kind,timestamp_min,v1,v2,plausible
//! <root>/concrete_NN/run_RR/run.txt   start_min, frame_rate_fps, paddle_velocity_mps
//! <root>/concrete_NN/run_RR/frame_IIIII_O.rhf, frame_IIIII_D.rhf
//! ```
//!
//! Frame files (`RHF1`): magic, u32 H, u32 W, channel tag byte `O` or `D`,
//! then H·W little-endian f32.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{assemble_input_sets, AssembleConfig, DataError, Frame, Grid, InputSet, RunMeta};
use crate::protocol::{
    enumerate_combinations, parse_key_values, parse_references, FoldConcrete, Materials, Reading,
    ReferenceMeasurement,
};

pub const FRAME_MAGIC: &[u8; 4] = b"RHF1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelTag {
    Ortho,
    Depth,
}

impl ChannelTag {
    fn byte(self) -> u8 {
        match self {
            ChannelTag::Ortho => b'O',
            ChannelTag::Depth => b'D',
        }
    }
}

pub fn encode_frame(grid: &Grid, tag: ChannelTag) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * grid.data().len());
    out.extend_from_slice(FRAME_MAGIC);
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.push(tag.byte());
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_frame_file(path: &Path, grid: &Grid, tag: ChannelTag) -> Result<(), DataError> {
    fs::write(path, encode_frame(grid, tag)).map_err(|e| DataError::io(path, e))
}

pub fn read_frame_file(path: &Path) -> Result<(Grid, ChannelTag), DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    if bytes.len() < 13 || &bytes[..4] != FRAME_MAGIC {
        return Err(DataError::format(path, "not an RHF1 frame file"));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let tag = match bytes[12] {
        b'O' => ChannelTag::Ortho,
        b'D' => ChannelTag::Depth,
        t => return Err(DataError::format(path, format!("unknown channel tag {t:#04x}"))),
    };
    let body = &bytes[13..];
    if body.len() != 4 * h * w {
        return Err(DataError::format(
            path,
            format!("{h}x{w} frame needs {} data bytes, found {}", 4 * h * w, body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((Grid::from_vec(h, w, data)?, tag))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunInfo {
    pub meta: RunMeta,
    pub dir: PathBuf,
    /// Sorted indices of the frames present on disk.
    pub frame_indices: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteInfo {
    pub id: usize,
    pub dir: PathBuf,
    pub materials: Materials,
    pub recycled: bool,
    pub references: Vec<ReferenceMeasurement>,
    pub runs: Vec<RunInfo>,
}

impl ConcreteInfo {
    /// δ of the earliest slump measurement.
    pub fn first_slump(&self) -> Option<f64> {
        self.references
            .iter()
            .filter_map(|r| match r.reading {
                Reading::Slump { delta_cm } => Some((r.timestamp_min, delta_cm)),
                _ => None,
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, d)| d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub height: usize,
    pub width: usize,
    pub paddle_threshold_mm: f32,
    pub concretes: Vec<ConcreteInfo>,
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn kv_get<T: std::str::FromStr>(
    kv: &[(String, String)],
    key: &str,
    path: &Path,
) -> Result<T, DataError> {
    let v = kv
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| DataError::format(path, format!("missing key {key}")))?;
    v.parse()
        .map_err(|_| DataError::format(path, format!("{key}={v} cannot be parsed")))
}

/// Sorted `(number, path)` of the entries `<prefix>NN` in `dir`.
fn numbered_dirs(dir: &Path, prefix: &str) -> Result<Vec<(usize, PathBuf)>, DataError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| DataError::io(dir, e))? {
        let entry = entry.map_err(|e| DataError::io(dir, e))?;
        let name = entry.file_name();
        let Some(n) = name
            .to_str()
            .and_then(|s| s.strip_prefix(prefix))
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        if entry.path().is_dir() {
            out.push((n, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

pub fn frame_path(run_dir: &Path, index: u32, tag: ChannelTag) -> PathBuf {
    let t = match tag {
        ChannelTag::Ortho => 'O',
        ChannelTag::Depth => 'D',
    };
    run_dir.join(format!("frame_{index:05}_{t}.rhf"))
}

fn frame_indices(run_dir: &Path) -> Result<Vec<u32>, DataError> {
    let mut ortho = Vec::new();
    let mut depth = Vec::new();
    for entry in fs::read_dir(run_dir).map_err(|e| DataError::io(run_dir, e))? {
        let entry = entry.map_err(|e| DataError::io(run_dir, e))?;
        let name = entry.file_name();
        let Some(rest) = name.to_str().and_then(|s| s.strip_prefix("frame_")) else {
            continue;
        };
        let Some((num, tag)) = rest.strip_suffix(".rhf").and_then(|r| r.split_once('_')) else {
            continue;
        };
        let Ok(i) = num.parse::<u32>() else { continue };
        match tag {
            "O" => ortho.push(i),
            "D" => depth.push(i),
            _ => {}
        }
    }
    ortho.sort_unstable();
    depth.sort_unstable();
    if ortho != depth {
        return Err(DataError::format(run_dir, "orthophoto and depth frames do not pair up"));
    }
    Ok(ortho)
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self, DataError> {
        let campaign = root.join("campaign.txt");
        let kv = parse_key_values(&read_text(&campaign)?, "campaign.txt")?;
        let height = kv_get(&kv, "height", &campaign)?;
        let width = kv_get(&kv, "width", &campaign)?;
        let paddle_threshold_mm = kv_get(&kv, "paddle_threshold_mm", &campaign)?;
        let mut concretes = Vec::new();
        for (id, dir) in numbered_dirs(root, "concrete_")? {
            let materials = Materials::parse(&read_text(&dir.join("mix.txt"))?)?;
            let meta_path = dir.join("meta.txt");
            let meta = parse_key_values(&read_text(&meta_path)?, "meta.txt")?;
            let recycled = kv_get(&meta, "recycled", &meta_path)?;
            let references = parse_references(&read_text(&dir.join("references.csv"))?)?;
            let mut runs = Vec::new();
            for (run_id, run_dir) in numbered_dirs(&dir, "run_")? {
                let run_path = run_dir.join("run.txt");
                let rk = parse_key_values(&read_text(&run_path)?, "run.txt")?;
                let meta = RunMeta {
                    concrete_id: id,
                    run_id,
                    start_min: kv_get(&rk, "start_min", &run_path)?,
                    frame_rate_fps: kv_get(&rk, "frame_rate_fps", &run_path)?,
                    paddle_velocity_mps: kv_get(&rk, "paddle_velocity_mps", &run_path)?,
                };
                if !(meta.frame_rate_fps > 0.0) {
                    return Err(DataError::format(&run_path, "frame_rate_fps must be positive"));
                }
                runs.push(RunInfo {
                    meta,
                    frame_indices: frame_indices(&run_dir)?,
                    dir: run_dir,
                });
            }
            concretes.push(ConcreteInfo {
                id,
                dir,
                materials,
                recycled,
                references,
                runs,
            });
        }
        if concretes.is_empty() {
            return Err(DataError::format(root, "no concrete_NN directories"));
        }
        Ok(Self {
            root: root.to_path_buf(),
            height,
            width,
            paddle_threshold_mm,
            concretes,
        })
    }

    pub fn concrete(&self, id: usize) -> Result<&ConcreteInfo, DataError> {
        self.concretes
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| DataError::Input(format!("no concrete {id} in {}", self.root.display())))
    }

    pub fn fold_concretes(&self) -> Result<Vec<FoldConcrete>, DataError> {
        self.concretes
            .iter()
            .map(|c| {
                Ok(FoldConcrete {
                    id: c.id,
                    delta1: c.first_slump().ok_or_else(|| {
                        DataError::format(&c.dir, "no slump measurement")
                    })?,
                    recycled: c.recycled,
                })
            })
            .collect()
    }

    pub fn load_frames(&self, run: &RunInfo) -> Result<Vec<Frame>, DataError> {
        run.frame_indices
            .iter()
            .map(|&index| {
                let (ortho, t1) = read_frame_file(&frame_path(&run.dir, index, ChannelTag::Ortho))?;
                let (depth, t2) = read_frame_file(&frame_path(&run.dir, index, ChannelTag::Depth))?;
                if t1 != ChannelTag::Ortho || t2 != ChannelTag::Depth {
                    return Err(DataError::format(&run.dir, format!("frame {index} has swapped tags")));
                }
                if ortho.shape() != (self.height, self.width) || depth.shape() != ortho.shape() {
                    return Err(DataError::format(
                        &run.dir,
                        format!("frame {index} is not {}x{}", self.height, self.width),
                    ));
                }
                Ok(Frame {
                    index,
                    timestamp_s: index as f64 / run.meta.frame_rate_fps,
                    ortho,
                    depth,
                })
            })
            .collect()
    }

    /// Input sets of one run.
    pub fn run_input_sets(
        &self,
        concrete: &ConcreteInfo,
        run: &RunInfo,
        cfg: &AssembleConfig,
    ) -> Result<Vec<InputSet>, DataError> {
        let combos = enumerate_combinations(&concrete.references)?;
        let frames = self.load_frames(run)?;
        assemble_input_sets(&frames, &combos, &concrete.materials, &run.meta, cfg)
    }

    /// Input sets of the given concretes, runs processed in parallel and
    /// returned in (concrete, run, frame) order.
    pub fn input_sets(&self, ids: &[usize], cfg: &AssembleConfig) -> Result<Vec<InputSet>, DataError> {
        let mut jobs = Vec::new();
        for &id in ids {
            let c = self.concrete(id)?;
            jobs.extend(c.runs.iter().map(move |r| (c, r)));
        }
        let parts: Vec<Result<Vec<InputSet>, DataError>> = jobs
            .par_iter()
            .map(|(c, r)| self.run_input_sets(c, r, cfg))
            .collect();
        let mut out = Vec::new();
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}
