use super::{flow_between, mask_paddle, Combination, DataError, FlowParams, Grid, PolyPyramid};
use crate::protocol::{
    assign_combination, compute_delta_t, Materials, MixDesign, ReferenceCombination,
};

/// One time step of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub index: u32,
    /// Seconds since the start of the run.
    pub timestamp_s: f64,
    pub ortho: Grid,
    pub depth: Grid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub concrete_id: usize,
    pub run_id: usize,
    /// Start of the run in minutes since water addition.
    pub start_min: f64,
    pub frame_rate_fps: f64,
    pub paddle_velocity_mps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssembleConfig {
    pub skip_head: usize,
    pub paddle_threshold_mm: f32,
    pub flow: FlowParams,
    pub combination: Combination,
}

impl AssembleConfig {
    pub fn new(paddle_threshold_mm: f32, combination: Combination) -> Self {
        Self {
            skip_head: 20,
            paddle_threshold_mm,
            flow: FlowParams::default(),
            combination,
        }
    }
}

/// One network sample in original (un-normalised) units.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSet {
    /// `channels × height × width`, channels as given by
    /// [`Combination::channel_categories`].
    pub image: Vec<f32>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub combination: Combination,
    /// Minutes: `(slump_ts − image_ts, rheo_ts − image_ts)`.
    pub delta_t: [f64; 2],
    pub mix: Vec<f64>,
    /// `(δ, τ₀, μ)` in cm, Pa, Pa·s.
    pub targets: [f64; 3],
    pub target_mask: [bool; 3],
    pub concrete_id: usize,
    pub run_id: usize,
    pub frame_index: u32,
    pub combination_index: usize,
    /// Central timestamp of the run, minutes since water addition.
    pub image_ts_min: f64,
    /// Timestamps of the slump and rheometer measurement behind the targets.
    pub reference_ts_min: [f64; 2],
}

impl InputSet {
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.image[c * plane..(c + 1) * plane]
    }
}

/// Positions `i` in `indices` whose successor is `indices[i] + 1`, after
/// dropping the first `skip_head` of them.
fn eligible_pairs(indices: &[u32], skip_head: usize) -> Vec<usize> {
    indices
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] == w[0] + 1)
        .map(|(i, _)| i)
        .skip(skip_head)
        .collect()
}

/// Number of input sets a run with these (sorted) frame indices yields.
pub fn count_input_sets(indices: &[u32], skip_head: usize) -> usize {
    eligible_pairs(indices, skip_head).len()
}

/// Builds the input sets of one run: one per consecutive frame pair, minus
/// the first `skip_head`. All sets share the timestamp of the run's central
/// frame; reference combinations are assigned round robin.
pub fn assemble_input_sets(
    frames: &[Frame],
    combos: &[ReferenceCombination],
    materials: &Materials,
    run: &RunMeta,
    cfg: &AssembleConfig,
) -> Result<Vec<InputSet>, DataError> {
    if combos.is_empty() {
        return Err(DataError::Input("run has no reference combinations".into()));
    }
    if frames.windows(2).any(|w| w[1].index <= w[0].index) {
        return Err(DataError::Input("frames must be strictly ordered by index".into()));
    }
    if frames.len() < cfg.skip_head + 2 {
        log::warn!(
            "concrete {} run {}: {} frames, fewer than skip_head + 2; no input sets",
            run.concrete_id,
            run.run_id,
            frames.len()
        );
        return Ok(Vec::new());
    }
    let indices: Vec<u32> = frames.iter().map(|f| f.index).collect();
    let pairs = eligible_pairs(&indices, cfg.skip_head);
    let central = &frames[frames.len() / 2];
    let image_ts_min = run.start_min + central.timestamp_s / 60.0;
    let mix = MixDesign {
        materials: materials.clone(),
        time_since_water_addition_min: image_ts_min,
        paddle_velocity_mps: run.paddle_velocity_mps,
        frame_rate_fps: run.frame_rate_fps,
    }
    .model_vector(cfg.combination.materials)?;

    let comb = cfg.combination;
    let (h, w) = frames[0].ortho.shape();
    let plane = h * w;
    let mut out = Vec::with_capacity(pairs.len());
    // The second pyramid of one pair is the first of the next.
    let mut cached: Option<(usize, PolyPyramid)> = None;
    for (ordinal, &i) in pairs.iter().enumerate() {
        let (a, b) = (&frames[i], &frames[i + 1]);
        if a.ortho.shape() != (h, w) || a.depth.shape() != (h, w) || b.ortho.shape() != (h, w) {
            return Err(DataError::Input(format!(
                "frame {} has a different shape from the run",
                a.index
            )));
        }
        let mut image = Vec::with_capacity(comb.image_channels() * plane);
        if comb.ortho {
            image.extend_from_slice(a.ortho.data());
        }
        if comb.depth {
            let (masked, _) = mask_paddle(&a.depth, cfg.paddle_threshold_mm)?;
            image.extend_from_slice(masked.data());
        }
        if comb.flow {
            let first = match cached.take() {
                Some((j, p)) if j == i => p,
                _ => PolyPyramid::new(&a.ortho, &cfg.flow)?,
            };
            let second = PolyPyramid::new(&b.ortho, &cfg.flow)?;
            let f = flow_between(&first, &second, &cfg.flow)?;
            image.extend_from_slice(f.x.data());
            image.extend_from_slice(f.y.data());
            cached = Some((i + 1, second));
        }
        let ci = assign_combination(ordinal, combos.len());
        let combo = &combos[ci];
        out.push(InputSet {
            image,
            channels: comb.image_channels(),
            height: h,
            width: w,
            combination: comb,
            delta_t: compute_delta_t(image_ts_min, combo),
            mix: mix.clone(),
            targets: combo.targets,
            target_mask: combo.mask,
            concrete_id: run.concrete_id,
            run_id: run.run_id,
            frame_index: a.index,
            combination_index: ci,
            image_ts_min,
            reference_ts_min: [combo.slump_timestamp_min, combo.rheo_timestamp_min],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{enumerate_combinations, Reading, ReferenceMeasurement};

    fn frames(indices: impl IntoIterator<Item = u32>) -> Vec<Frame> {
        indices
            .into_iter()
            .map(|i| Frame {
                index: i,
                timestamp_s: i as f64 / 30.0,
                ortho: Grid::from_fn(16, 16, |y, x| ((x * 7 + y * 3 + i as usize) % 11) as f32 / 11.0),
                depth: Grid::filled(16, 16, 40.0),
            })
            .collect()
    }

    fn combos() -> Vec<ReferenceCombination> {
        let r = |t, reading| ReferenceMeasurement {
            timestamp_min: t,
            reading,
            plausible: true,
        };
        enumerate_combinations(&[
            r(9.0, Reading::Slump { delta_cm: 50.0 }),
            r(39.0, Reading::Slump { delta_cm: 47.0 }),
            r(11.0, Reading::Rheometer { tau0_pa: 100.0, mu_pas: 30.0 }),
        ])
        .unwrap()
    }

    fn materials() -> Materials {
        Materials {
            water_cement_ratio: 0.5,
            paste_content: 0.3,
            admixture_content: 0.5,
            grading_curve: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0],
        }
    }

    fn run() -> RunMeta {
        RunMeta {
            concrete_id: 3,
            run_id: 1,
            start_min: 20.0,
            frame_rate_fps: 30.0,
            paddle_velocity_mps: 0.2,
        }
    }

    fn cfg() -> AssembleConfig {
        AssembleConfig::new(60.0, Combination::parse("O+D").unwrap())
    }

    #[test]
    fn thirty_frames_give_nine_sets() {
        let sets = assemble_input_sets(&frames(0..30), &combos(), &materials(), &run(), &cfg()).unwrap();
        assert_eq!(sets.len(), 9);
        assert_eq!(sets[0].frame_index, 20);
        assert_eq!(count_input_sets(&(0..30).collect::<Vec<_>>(), 20), 9);
    }

    #[test]
    fn missing_frame_removes_two_pairs() {
        let idx: Vec<u32> = (0..30).filter(|&i| i != 25).collect();
        let sets = assemble_input_sets(&frames(idx.clone()), &combos(), &materials(), &run(), &cfg()).unwrap();
        assert_eq!(sets.len(), 7);
        assert!(sets.iter().all(|s| s.frame_index != 24 && s.frame_index != 25));
        assert_eq!(count_input_sets(&idx, 20), 7);
    }

    #[test]
    fn short_run_is_empty() {
        let sets = assemble_input_sets(&frames(0..21), &combos(), &materials(), &run(), &cfg()).unwrap();
        assert!(sets.is_empty());
    }

    #[test]
    fn sets_share_central_timestamp_and_round_robin() {
        let sets = assemble_input_sets(&frames(0..30), &combos(), &materials(), &run(), &cfg()).unwrap();
        let ts = 20.0 + 15.0 / 30.0 / 60.0;
        for (k, s) in sets.iter().enumerate() {
            assert_eq!(s.image_ts_min, ts);
            assert_eq!(s.combination_index, k % 2);
            let c = &combos()[s.combination_index];
            assert_eq!(s.delta_t, [c.slump_timestamp_min - ts, c.rheo_timestamp_min - ts]);
            assert_eq!(s.mix.len(), 3);
            assert_eq!(s.channels, 2);
        }
    }

    #[test]
    fn flow_channels_match_direct_computation() {
        let c = AssembleConfig::new(60.0, Combination::parse("D+m+OF").unwrap());
        let fr = frames(0..24);
        let sets = assemble_input_sets(&fr, &combos(), &materials(), &run(), &c).unwrap();
        assert_eq!(sets.len(), 3);
        for s in &sets {
            let i = s.frame_index as usize;
            let f = super::super::optical_flow(&fr[i].ortho, &fr[i + 1].ortho, &c.flow).unwrap();
            assert_eq!(s.channel(1), f.x.data());
            assert_eq!(s.channel(2), f.y.data());
            assert_eq!(s.mix.len(), 18);
        }
    }
}
