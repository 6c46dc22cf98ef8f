//! Frame rendering for one run of the surrogate mixer.
//!
//! The depth map is a filled channel with a groove along the paddle path.
//! Where the paddle passes, the groove is carved to full depth; afterwards
//! it relaxes towards a residual depth that grows with yield stress, with a
//! time constant that grows with viscosity. The groove's cross-channel width
//! grows with slump flow. The orthophoto is a periodic texture drifting along
//! the channel at a speed proportional to paddle velocity over viscosity,
//! plus optional shading of the settled trough and the LED strip.

use rand::Rng;

use crate::datapipe::{paint_led_strip, Frame, Grid};

const GROOVE_DEPTH_MM: f64 = 14.0;
const PADDLE_HALF_WIDTH: usize = 2;
const PADDLE_MARGIN: usize = 3;
const SHADING_PER_MM: f64 = 0.04;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderParams {
    pub height: usize,
    pub width: usize,
    pub fill_mm: f64,
    /// Height of the paddle ridge above the fill level.
    pub paddle_rise_mm: f64,
    pub ortho_shading: bool,
    /// Texture drift in px/frame is `texture_gain · v / (μ · fps)`.
    pub texture_gain: f64,
}

impl RenderParams {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            fill_mm: 40.0,
            paddle_rise_mm: 30.0,
            ortho_shading: true,
            texture_gain: 8000.0,
        }
    }

    /// Masking threshold between the undisturbed surface and the paddle.
    pub fn paddle_threshold_mm(&self) -> f64 {
        self.fill_mm + 10.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub run_id: usize,
    pub start_min: f64,
    pub frame_rate_fps: f64,
    pub paddle_velocity_mps: f64,
    pub n_frames: usize,
}

/// Material state during a run: `(δ, τ₀, μ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunState {
    pub delta: f64,
    pub tau0: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedRun {
    pub frames: Vec<Frame>,
    /// Depth maps before the paddle ridge was inserted.
    pub pre_insertion: Vec<Grid>,
    /// Inclusive column range of the paddle in each frame.
    pub paddle_columns: Vec<(usize, usize)>,
}

struct Wave {
    fy: f64,
    fx: f64,
    phase: f64,
    amp: f64,
}

fn waves<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Wave> {
    (0..n)
        .map(|_| Wave {
            fy: rng.random_range(1..6) as f64 * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            fx: rng.random_range(1..7) as f64,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            amp: rng.random_range(0.3..1.0),
        })
        .collect()
}

/// Periodic texture in [0, 1] evaluated at horizontal offset `shift`, using
/// `sin(α + β) = sin α cos β + cos α sin β` to separate rows and columns.
fn texture(ws: &[Wave], h: usize, w: usize, shift: f64, out: &mut [f64]) {
    let total: f64 = ws.iter().map(|wv| wv.amp).sum();
    out.iter_mut().for_each(|v| *v = 0.0);
    let tau = std::f64::consts::TAU;
    let mut col_s = vec![0.0; w];
    let mut col_c = vec![0.0; w];
    for wv in ws {
        for (x, (s, c)) in col_s.iter_mut().zip(col_c.iter_mut()).enumerate() {
            let a = tau * wv.fx * (x as f64 - shift) / w as f64;
            *s = libm::sin(a);
            *c = libm::cos(a);
        }
        for y in 0..h {
            let b = tau * wv.fy * y as f64 / h as f64 + wv.phase;
            let (sb, cb) = (libm::sin(b), libm::cos(b));
            let row = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                row[x] += wv.amp * (col_s[x] * cb + col_c[x] * sb);
            }
        }
    }
    for v in out.iter_mut() {
        *v = 0.5 + 0.5 * *v / total;
    }
}

fn paddle_position(i: usize, period: usize, phase: usize, w: usize) -> usize {
    let span = (w - 1 - 2 * PADDLE_MARGIN) as f64;
    let p = ((i + phase) % period) as f64 / period as f64;
    let tri = if p < 0.5 { 2.0 * p } else { 2.0 - 2.0 * p };
    PADDLE_MARGIN + libm::round(tri * span) as usize
}

pub fn render_run<R: Rng + ?Sized>(
    state: &RunState,
    run: &RunSpec,
    params: &RenderParams,
    rng: &mut R,
) -> RenderedRun {
    let (h, w) = (params.height, params.width);
    let fill = params.fill_mm;
    let centre = h as f64 / 2.0 + rng.random_range(-1.0..1.0) * h as f64 / 16.0;
    let half_width = h as f64 * (0.06 + 0.0045 * (state.delta - 30.0));
    let residual = 1.0 + state.tau0 / 60.0;
    let relax_s = state.mu / 800.0;
    let dt = 1.0 / run.frame_rate_fps;
    let decay = libm::exp(-dt / relax_s);
    let drift = params.texture_gain * run.paddle_velocity_mps / (state.mu * run.frame_rate_fps);

    let profile: Vec<f64> = (0..h)
        .map(|y| {
            let u = (y as f64 - centre) / half_width;
            if u.abs() < 1.0 {
                (1.0 - u * u) * (1.0 - u * u)
            } else {
                0.0
            }
        })
        .collect();
    let relief_waves = waves(rng, 4);
    let mut relief = vec![0.0; h * w];
    texture(&relief_waves, h, w, 0.0, &mut relief);
    relief.iter_mut().for_each(|v| *v = 0.8 * (*v - 0.5));
    let tex_waves = waves(rng, 10);
    let period = (run.n_frames / 6).max(2);
    let phase = rng.random_range(0..period);

    // Shading follows the settled trough only, so the orthophoto changes
    // between frames through the texture drift alone.
    let mut shade = vec![0.0; h * w];
    if params.ortho_shading {
        let settled = |y: usize, x: usize| {
            let (y, x) = (y.min(h - 1), x.min(w - 1));
            fill - residual * profile[y] + relief[y * w + x]
        };
        for y in 0..h {
            for x in 0..w {
                let gx = settled(y, x + 1) - settled(y, x.saturating_sub(1));
                let gy = settled(y + 1, x) - settled(y.saturating_sub(1), x);
                shade[y * w + x] = SHADING_PER_MM * (gx + gy);
            }
        }
    }
    let mut groove = vec![residual; w];
    let mut shift = 0.0;
    let mut prev_pos = paddle_position(0, period, phase, w);
    let mut tex = vec![0.0; h * w];
    let mut out = RenderedRun {
        frames: Vec::with_capacity(run.n_frames),
        pre_insertion: Vec::with_capacity(run.n_frames),
        paddle_columns: Vec::with_capacity(run.n_frames),
    };
    for i in 0..run.n_frames {
        let pos = paddle_position(i, period, phase, w);
        for g in groove.iter_mut() {
            *g = residual + (*g - residual) * decay;
        }
        let (lo, hi) = (prev_pos.min(pos), prev_pos.max(pos));
        for g in &mut groove[lo.saturating_sub(PADDLE_HALF_WIDTH)..=(hi + PADDLE_HALF_WIDTH).min(w - 1)] {
            *g = GROOVE_DEPTH_MM;
        }
        if i > 0 {
            shift += drift;
        }
        prev_pos = pos;

        let mut depth = vec![0.0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                depth[y * w + x] = fill - groove[x] * profile[y] + relief[y * w + x];
            }
        }
        texture(&tex_waves, h, w, shift, &mut tex);
        let mut ortho = Grid::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                let o = 0.15 + 0.6 * tex[y * w + x] + shade[y * w + x];
                ortho.set(y, x, o.clamp(0.0, 1.0) as f32);
            }
        }
        let pre = Grid::from_vec(h, w, depth.iter().map(|&v| v as f32).collect()).unwrap();
        let mut d = pre.clone();
        let (c0, c1) = (pos - PADDLE_HALF_WIDTH, (pos + PADDLE_HALF_WIDTH).min(w - 1));
        for y in 0..h {
            for x in c0..=c1 {
                d.set(y, x, (fill + params.paddle_rise_mm) as f32);
            }
        }
        let ms = libm::round(i as f64 * 1000.0 / run.frame_rate_fps) as u64;
        paint_led_strip(&mut ortho, ms).expect("image holds the LED strip");
        out.frames.push(Frame {
            index: i as u32,
            timestamp_s: i as f64 * dt,
            ortho,
            depth: d,
        });
        out.pre_insertion.push(pre);
        out.paddle_columns.push((c0, c1));
    }
    out
}
