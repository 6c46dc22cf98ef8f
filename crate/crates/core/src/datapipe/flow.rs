//! Dense two-frame optical flow by polynomial expansion (Farnebäck).
//!
//! Each frame is approximated around every pixel by `f(u) ≈ uᵀAu + bᵀu + c`,
//! fitted by weighted least squares under a Gaussian applicability. For a
//! displacement `d`, `b₂ = b₁ − 2A·d`, so `d` follows from the coefficient
//! pair; the per-pixel equations are pooled over a box window and solved on
//! a coarse-to-fine pyramid, warping the second frame's coefficients by the
//! current estimate at each iteration.

use super::{DataError, Grid};

/// Intensities are processed on a 0–255 scale so that the regulariser added
/// to the 2×2 determinant is small relative to real structure.
const INTENSITY_SCALE: f64 = 255.0;
const DET_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    /// Side of the square averaging window.
    pub window: usize,
    pub iterations: usize,
    /// Half-width of the polynomial-expansion neighbourhood.
    pub poly_radius: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 15,
            iterations: 3,
            poly_radius: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.levels == 0 || self.window == 0 || self.iterations == 0 || self.poly_radius == 0 {
            return Err(DataError::Input(format!(
                "flow parameters must be positive: {self:?}"
            )));
        }
        if !(self.poly_sigma > 0.0) {
            return Err(DataError::Input(format!("poly_sigma must be > 0, got {}", self.poly_sigma)));
        }
        Ok(())
    }
}

/// Per-pixel displacement from the first frame to the second.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub x: Grid,
    pub y: Grid,
}

#[derive(Clone, Debug)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn at(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.v[y * self.w + x]
    }
}

/// Quadratic coefficients per pixel: `a11, a12, a22, b1, b2` (x first).
#[derive(Clone, Debug)]
struct Poly {
    h: usize,
    w: usize,
    c: Vec<[f64; 5]>,
}

impl Poly {
    fn bilinear(&self, y: f64, x: f64) -> [f64; 5] {
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.h - 1), (x0 + 1).min(self.w - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let p = |yy: usize, xx: usize| &self.c[yy * self.w + xx];
        let mut out = [0.0; 5];
        for (k, o) in out.iter_mut().enumerate() {
            let top = p(y0, x0)[k] * (1.0 - fx) + p(y0, x1)[k] * fx;
            let bottom = p(y1, x0)[k] * (1.0 - fx) + p(y1, x1)[k] * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        out
    }
}

/// Polynomial expansions of one frame at every pyramid level, finest first.
/// Computing this once per frame lets consecutive pairs share the work.
#[derive(Clone, Debug)]
pub struct PolyPyramid {
    levels: Vec<Poly>,
}

impl PolyPyramid {
    pub fn new(frame: &Grid, params: &FlowParams) -> Result<Self, DataError> {
        params.validate()?;
        let (h, w) = frame.shape();
        if h < params.window || w < params.window {
            return Err(DataError::Input(format!(
                "frame {h}x{w} is smaller than the {0}x{0} flow window",
                params.window
            )));
        }
        let min_side = 2 * params.poly_radius + 1;
        let mut plane = Plane {
            h,
            w,
            v: frame.data().iter().map(|&v| v as f64 * INTENSITY_SCALE).collect(),
        };
        let mut levels = vec![expand(&plane, params)];
        while levels.len() < params.levels {
            let next = downsample(&plane);
            if next.h.min(next.w) < min_side {
                break;
            }
            levels.push(expand(&next, params));
            plane = next;
        }
        Ok(Self { levels })
    }

    fn shape(&self) -> (usize, usize) {
        (self.levels[0].h, self.levels[0].w)
    }
}

fn gaussian(radius: usize, sigma: f64) -> Vec<f64> {
    (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

fn expand(img: &Plane, params: &FlowParams) -> Poly {
    let n = params.poly_radius as isize;
    let g = gaussian(params.poly_radius, params.poly_sigma);
    let (h, w) = (img.h, img.w);
    let (mut m0, mut m2, mut m4) = (0.0, 0.0, 0.0);
    for (i, &gi) in g.iter().enumerate() {
        let d = i as f64 - n as f64;
        m0 += gi;
        m2 += gi * d * d;
        m4 += gi * d * d * d * d;
    }
    // Gram block of {1, x², y²}; the odd and mixed terms decouple.
    let gram = [
        [m0 * m0, m0 * m2, m0 * m2],
        [m0 * m2, m4 * m0, m2 * m2],
        [m0 * m2, m2 * m2, m4 * m0],
    ];
    let inv = invert3(&gram);

    // Row pass: weighted moments 0, 1, 2 along x.
    let mut rows = vec![[0.0f64; 3]; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, &gi) in g.iter().enumerate() {
                let d = i as isize - n;
                let v = img.at(y as isize, x as isize + d) * gi;
                let df = d as f64;
                acc[0] += v;
                acc[1] += v * df;
                acc[2] += v * df * df;
            }
            rows[y * w + x] = acc;
        }
    }
    let row_at = |y: isize, x: usize| rows[y.clamp(0, h as isize - 1) as usize * w + x];

    let mut c = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (mut c00, mut c10, mut c01, mut c20, mut c02, mut c11) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, &gi) in g.iter().enumerate() {
                let d = i as isize - n;
                let r = row_at(y as isize + d, x);
                let df = d as f64;
                c00 += gi * r[0];
                c10 += gi * r[1];
                c20 += gi * r[2];
                c01 += gi * df * r[0];
                c02 += gi * df * df * r[0];
                c11 += gi * df * r[1];
            }
            let rhs = [c00, c20, c02];
            let rxx = inv[1][0] * rhs[0] + inv[1][1] * rhs[1] + inv[1][2] * rhs[2];
            let ryy = inv[2][0] * rhs[0] + inv[2][1] * rhs[1] + inv[2][2] * rhs[2];
            let bx = c10 / (m0 * m2);
            let by = c01 / (m0 * m2);
            let rxy = c11 / (m2 * m2);
            c.push([rxx, rxy / 2.0, ryy, bx, by]);
        }
    }
    Poly { h, w, c }
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for col in 0..3 {
            let (r1, r2) = ((col + 1) % 3, (col + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][col] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

/// Binomial blur followed by 2× decimation.
fn downsample(img: &Plane) -> Plane {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (h, w) = (img.h, img.w);
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            let x = (2 * ox) as isize;
            tmp[y * ow + ox] = K
                .iter()
                .enumerate()
                .map(|(i, k)| k * img.at(y as isize, x + i as isize - 2))
                .sum();
        }
    }
    let t = Plane { h, w: ow, v: tmp };
    let mut v = vec![0.0; oh * ow];
    for oy in 0..oh {
        let y = (2 * oy) as isize;
        for x in 0..ow {
            v[oy * ow + x] = K
                .iter()
                .enumerate()
                .map(|(i, k)| k * t.at(y + i as isize - 2, x as isize))
                .sum();
        }
    }
    Plane { h: oh, w: ow, v }
}

/// Mean over a `size×size` window with replicated borders.
fn box_blur(p: &mut Plane, size: usize) {
    let r = (size / 2) as isize;
    let norm = 1.0 / (2 * r + 1) as f64;
    let (h, w) = (p.h, p.w);
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in -r..=r {
                s += p.at(y as isize, x as isize + d);
            }
            tmp[y * w + x] = s * norm;
        }
    }
    let t = Plane { h, w, v: tmp };
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in -r..=r {
                s += t.at(y as isize + d, x as isize);
            }
            p.v[y * w + x] = s * norm;
        }
    }
}

fn refine(p1: &Poly, p2: &Poly, flow: &mut [[f64; 2]], window: usize) {
    let (h, w) = (p1.h, p1.w);
    let mut fields: Vec<Plane> = (0..5)
        .map(|_| Plane {
            h,
            w,
            v: vec![0.0; h * w],
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let [dx, dy] = flow[i];
            let c1 = &p1.c[i];
            let c2 = p2.bilinear(y as f64 + dy, x as f64 + dx);
            let a11 = 0.5 * (c1[0] + c2[0]);
            let a12 = 0.5 * (c1[1] + c2[1]);
            let a22 = 0.5 * (c1[2] + c2[2]);
            let b1 = -0.5 * (c2[3] - c1[3]) + a11 * dx + a12 * dy;
            let b2 = -0.5 * (c2[4] - c1[4]) + a12 * dx + a22 * dy;
            fields[0].v[i] = a11 * a11 + a12 * a12;
            fields[1].v[i] = a12 * (a11 + a22);
            fields[2].v[i] = a12 * a12 + a22 * a22;
            fields[3].v[i] = a11 * b1 + a12 * b2;
            fields[4].v[i] = a12 * b1 + a22 * b2;
        }
    }
    for f in &mut fields {
        box_blur(f, window);
    }
    for (i, d) in flow.iter_mut().enumerate() {
        let (g11, g12, g22) = (fields[0].v[i], fields[1].v[i], fields[2].v[i]);
        let (h1, h2) = (fields[3].v[i], fields[4].v[i]);
        let idet = 1.0 / (g11 * g22 - g12 * g12 + DET_EPS);
        *d = [(g22 * h1 - g12 * h2) * idet, (g11 * h2 - g12 * h1) * idet];
    }
}

fn upsample(flow: &[[f64; 2]], h: usize, w: usize, oh: usize, ow: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let sy = ((y as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
        let (y0, fy) = (sy.floor() as usize, sy - sy.floor());
        let y1 = (y0 + 1).min(h - 1);
        for x in 0..ow {
            let sx = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
            let (x0, fx) = (sx.floor() as usize, sx - sx.floor());
            let x1 = (x0 + 1).min(w - 1);
            let mut d = [0.0; 2];
            for (k, dk) in d.iter_mut().enumerate() {
                let top = flow[y0 * w + x0][k] * (1.0 - fx) + flow[y0 * w + x1][k] * fx;
                let bot = flow[y1 * w + x0][k] * (1.0 - fx) + flow[y1 * w + x1][k] * fx;
                *dk = 2.0 * (top * (1.0 - fy) + bot * fy);
            }
            out.push(d);
        }
    }
    out
}

/// Flow between two prepared frames.
pub fn flow_between(
    first: &PolyPyramid,
    second: &PolyPyramid,
    params: &FlowParams,
) -> Result<FlowField, DataError> {
    if first.shape() != second.shape() || first.levels.len() != second.levels.len() {
        return Err(DataError::Input(format!(
            "frames differ in shape: {:?} vs {:?}",
            first.shape(),
            second.shape()
        )));
    }
    let mut flow: Vec<[f64; 2]> = Vec::new();
    let mut prev: Option<(usize, usize)> = None;
    for l in (0..first.levels.len()).rev() {
        let (p1, p2) = (&first.levels[l], &second.levels[l]);
        flow = match prev {
            None => vec![[0.0; 2]; p1.h * p1.w],
            Some((ph, pw)) => upsample(&flow, ph, pw, p1.h, p1.w),
        };
        for _ in 0..params.iterations {
            refine(p1, p2, &mut flow, params.window);
        }
        prev = Some((p1.h, p1.w));
    }
    let (h, w) = first.shape();
    let x = Grid::from_vec(h, w, flow.iter().map(|d| d[0] as f32).collect())?;
    let y = Grid::from_vec(h, w, flow.iter().map(|d| d[1] as f32).collect())?;
    Ok(FlowField { x, y })
}

pub fn optical_flow(a: &Grid, b: &Grid, params: &FlowParams) -> Result<FlowField, DataError> {
    if a.shape() != b.shape() {
        return Err(DataError::Input(format!(
            "frames differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    flow_between(&PolyPyramid::new(a, params)?, &PolyPyramid::new(b, params)?, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smooth periodic texture in [0,1]: a sum of random integer-frequency
    /// sinusoids, so wrapped shifts have no seam.
    pub(crate) fn texture(h: usize, w: usize, seed: u64) -> Grid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| {
                (
                    rng.random_range(1..6) as f64,
                    rng.random_range(1..6) as f64 * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(0.3..1.0),
                )
            })
            .collect();
        let total: f64 = waves.iter().map(|w| w.3).sum();
        Grid::from_fn(h, w, |y, x| {
            let mut s = 0.0;
            for &(fy, fx, ph, amp) in &waves {
                let arg = std::f64::consts::TAU * (fy * y as f64 / h as f64 + fx * x as f64 / w as f64) + ph;
                s += amp * arg.sin();
            }
            (0.5 + 0.5 * s / total) as f32
        })
    }

    fn shifted(g: &Grid, dx: isize, dy: isize) -> Grid {
        let (h, w) = g.shape();
        Grid::from_fn(h, w, |y, x| {
            let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
            let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
            g.get(sy, sx)
        })
    }

    fn interior_median(g: &Grid, margin: usize) -> f32 {
        let (h, w) = g.shape();
        let mut v = Vec::new();
        for y in margin..h - margin {
            for x in margin..w - margin {
                v.push(g.get(y, x));
            }
        }
        v.sort_by(f32::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let a = texture(48, 48, 1);
        let f = optical_flow(&a, &a, &FlowParams::default()).unwrap();
        assert!(f.x.data().iter().chain(f.y.data()).all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn integer_shifts_are_recovered() {
        let a = texture(64, 64, 7);
        for (dx, dy) in [(3, 0), (-2, 1)] {
            let b = shifted(&a, dx, dy);
            let f = optical_flow(&a, &b, &FlowParams::default()).unwrap();
            let mx = interior_median(&f.x, 8);
            let my = interior_median(&f.y, 8);
            assert!((mx - dx as f32).abs() < 0.2, "({dx},{dy}) → x {mx}");
            assert!((my - dy as f32).abs() < 0.2, "({dx},{dy}) → y {my}");
        }
    }

    #[test]
    fn frame_smaller_than_window_is_rejected() {
        let a = Grid::zeros(10, 40);
        assert!(matches!(
            optical_flow(&a, &a, &FlowParams::default()),
            Err(DataError::Input(_))
        ));
    }

    #[test]
    fn quadratic_fit_is_exact_on_quadratics() {
        // f = 2 + 0.5x − 0.25y + 0.1x² + 0.05y² − 0.02xy, read at the centre
        // of a large frame where no border replication reaches the window.
        let f = |y: f64, x: f64| 2.0 + 0.5 * x - 0.25 * y + 0.1 * x * x + 0.05 * y * y - 0.02 * x * y;
        let plane = Plane {
            h: 31,
            w: 31,
            v: (0..31 * 31)
                .map(|i| f((i / 31) as f64 - 15.0, (i % 31) as f64 - 15.0))
                .collect(),
        };
        let p = expand(&plane, &FlowParams::default());
        let c = p.c[15 * 31 + 15];
        let want = [0.1, -0.01, 0.05, 0.5, -0.25];
        for (got, want) in c.iter().zip(want) {
            assert!((got - want).abs() < 1e-9, "{c:?}");
        }
    }
}
