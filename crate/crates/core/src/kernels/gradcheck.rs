//! Central finite-difference verification of analytic gradients.
//!
//! A [`GradCheckTarget`] exposes its differentiable tensors (parameters and
//! inputs alike) as flat `f64` slots, a scalar loss and the analytic gradient
//! of that loss. [`gradient_check`] perturbs each checked coordinate by ±ε and
//! compares `(L(x+ε) − L(x−ε)) / 2ε` with the analytic value.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub trait GradCheckTarget {
    /// Name and length of every tensor taking part in the check.
    fn tensors(&self) -> Vec<(String, usize)>;
    fn get(&self, tensor: usize, index: usize) -> f64;
    fn set(&mut self, tensor: usize, index: usize, value: f64);
    fn loss(&mut self) -> f64;
    /// Analytic gradients, in the order of [`GradCheckTarget::tensors`].
    fn gradients(&mut self) -> Vec<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Lower bound on the denominator of the relative error, so coordinates
    /// whose true gradient is zero are compared absolutely. The bound is
    /// raised further to the level where round-off in the loss alone,
    /// [`ROUNDOFF_ULPS`] units of `|L|` over `2ε`, would reach the tolerance.
    pub abs_floor: f64,
    /// Check at most this many coordinates per tensor (chosen with `seed`).
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-7,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Denominator floor actually used.
    pub floor: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| t.max_rel_err >= self.tolerance)
    }
}

/// Round-off allowance of a central difference, in units of `ε_mach·|L|`.
pub const ROUNDOFF_ULPS: f64 = 8.0;

/// Effective denominator floor for a loss of magnitude `loss`.
pub fn effective_floor(cfg: &GradCheckConfig, loss: f64) -> f64 {
    let noise = ROUNDOFF_ULPS * f64::EPSILON * loss.abs() / (2.0 * cfg.epsilon);
    cfg.abs_floor.max(noise / cfg.tolerance)
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn gradient_check(target: &mut dyn GradCheckTarget, cfg: &GradCheckConfig) -> GradCheckReport {
    let tensors = target.tensors();
    let analytic = target.gradients();
    let floor = effective_floor(cfg, target.loss());
    assert_eq!(analytic.len(), tensors.len(), "one gradient per tensor");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        tensors: Vec::with_capacity(tensors.len()),
        max_rel_err: 0.0,
        tolerance: cfg.tolerance,
        floor,
    };
    for (t, (name, len)) in tensors.iter().enumerate() {
        let coords: Vec<usize> = match cfg.max_coords_per_tensor {
            Some(k) if k < *len => {
                let mut v = sample(&mut rng, *len, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..*len).collect(),
        };
        let mut tc = TensorCheck {
            name: name.clone(),
            checked: coords.len(),
            max_rel_err: 0.0,
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for &i in &coords {
            let orig = target.get(t, i);
            target.set(t, i, orig + cfg.epsilon);
            let up = target.loss();
            target.set(t, i, orig - cfg.epsilon);
            let down = target.loss();
            target.set(t, i, orig);
            let numeric = (up - down) / (2.0 * cfg.epsilon);
            let a = analytic[t][i];
            let err = relative_error(a, numeric, floor);
            if err > tc.max_rel_err || !err.is_finite() {
                tc.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
                tc.worst_index = i;
                tc.worst_analytic = a;
                tc.worst_numeric = numeric;
            }
        }
        report.max_rel_err = report.max_rel_err.max(tc.max_rel_err);
        report.tensors.push(tc);
    }
    report
}
