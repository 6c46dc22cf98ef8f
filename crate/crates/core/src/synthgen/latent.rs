//! Per-concrete latent property curves, mix designs and reference
//! measurements.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::protocol::{fmt_f64, Materials, Reading, ReferenceMeasurement, GRADING_BINS};

/// Value ranges of the reference measurements (min, max).
pub const DELTA_RANGE: (f64, f64) = (30.00, 63.50);
pub const TAU0_RANGE: (f64, f64) = (65.84, 585.40);
pub const MU_RANGE: (f64, f64) = (19.76, 121.91);

/// `δ(t) = δ₀ − a·ln(1 + b·t)`, `τ₀(t) = τ₀₀ + c·t`, `μ(t) = μ₀ + d·√t`,
/// `t` in minutes since water addition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentCurves {
    pub delta0: f64,
    pub a: f64,
    pub b: f64,
    pub tau00: f64,
    pub c: f64,
    pub mu0: f64,
    pub d: f64,
}

impl LatentCurves {
    pub fn delta(&self, t: f64) -> f64 {
        self.delta0 - self.a * libm::log(1.0 + self.b * t.max(0.0))
    }

    pub fn tau0(&self, t: f64) -> f64 {
        self.tau00 + self.c * t.max(0.0)
    }

    pub fn mu(&self, t: f64) -> f64 {
        self.mu0 + self.d * libm::sqrt(t.max(0.0))
    }

    pub fn state(&self, t: f64) -> [f64; 3] {
        [self.delta(t), self.tau0(t), self.mu(t)]
    }

    pub(crate) fn to_kv(&self, prefix: &str) -> String {
        [
            ("delta0", self.delta0),
            ("a", self.a),
            ("b", self.b),
            ("tau00", self.tau00),
            ("c", self.c),
            ("mu0", self.mu0),
            ("d", self.d),
        ]
        .iter()
        .map(|(k, v)| format!("{prefix}.{k}={}\n", fmt_f64(*v)))
        .collect()
    }

    pub(crate) fn from_kv(get: impl Fn(&str) -> Option<f64>) -> Option<Self> {
        Some(Self {
            delta0: get("delta0")?,
            a: get("a")?,
            b: get("b")?,
            tau00: get("tau00")?,
            c: get("c")?,
            mu0: get("mu0")?,
            d: get("d")?,
        })
    }
}

/// Draws materials and matching latent coefficients. Higher water–cement
/// ratio raises δ₀ and lowers τ₀₀; more paste lowers μ₀; more admixture slows
/// the loss of slump and the growth of yield stress.
pub fn sample_concrete<R: Rng + ?Sized>(rng: &mut R, recycled: bool) -> (Materials, LatentCurves) {
    let wc: f64 = rng.random_range(0.38..0.62);
    let paste: f64 = rng.random_range(0.28..0.40);
    let admixture: f64 = rng.random_range(0.0..2.0);
    let fuller_q: f64 = rng.random_range(0.3..0.6);
    let mut xi = [0.0f64; 7];
    for x in &mut xi {
        *x = rng.random_range(0.0..1.0);
    }

    let consistency = (wc - 0.38) / 0.24;
    let fluidity = (paste - 0.28) / 0.12;
    let retard = admixture / 2.0;
    let mut delta0 = 44.0 + 18.0 * (0.7 * consistency + 0.3 * xi[0]);
    let tau00 = 350.0 - 280.0 * (0.7 * consistency + 0.3 * xi[1]);
    if recycled {
        // Porous recycled aggregate absorbs water.
        delta0 -= 2.0;
    }
    let curves = LatentCurves {
        delta0,
        a: 2.5 + 2.5 * (0.7 * (1.0 - retard) + 0.3 * xi[2]),
        b: 0.05 + 0.07 * (0.7 * (1.0 - retard) + 0.3 * xi[6]),
        tau00,
        c: 0.8 + 1.0 * (0.7 * (1.0 - retard) + 0.3 * xi[3]),
        mu0: 20.0 + 60.0 * (0.6 * (1.0 - fluidity) + 0.4 * xi[4]),
        d: 1.5 + 1.5 * (0.7 * (1.0 - fluidity) + 0.3 * xi[5]),
    };

    // Fuller-type cumulative grading over sieve sizes 0.125 … 32 mm.
    let mut grading_curve = [0.0; GRADING_BINS];
    for (i, g) in grading_curve.iter_mut().enumerate() {
        let size = 0.125 * libm::pow(2.0, i as f64 * 8.0 / (GRADING_BINS - 1) as f64);
        *g = libm::pow(size / 32.0, fuller_q).min(1.0);
    }
    let materials = Materials {
        water_cement_ratio: wc,
        paste_content: paste,
        admixture_content: admixture,
        grading_curve,
    };
    (materials, curves)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceNoise {
    /// Standard deviation of the slump measurement in cm.
    pub slump_sigma_cm: f64,
    /// Relative standard deviation of the rheometer values.
    pub rheo_sigma_rel: f64,
}

/// Three slump tests at about 9, 39 and 69 minutes (±2), each followed by a
/// rheometer measurement 1–4 minutes later. Implausible concretes get
/// distorted rheometer values flagged as such. Values are clamped into the
/// reference ranges.
pub fn sample_references<R: Rng + ?Sized>(
    rng: &mut R,
    curves: &LatentCurves,
    noise: &ReferenceNoise,
    implausible: bool,
) -> Vec<ReferenceMeasurement> {
    let clamp = |v: f64, r: (f64, f64)| v.clamp(r.0, r.1);
    let mut slumps = Vec::with_capacity(3);
    let mut rheos = Vec::with_capacity(3);
    for nominal in [9.0, 39.0, 69.0] {
        let ts = nominal + rng.random_range(-2.0..2.0);
        let tr = ts + rng.random_range(1.0..4.0);
        let e_s = standard(rng);
        let e_t = standard(rng);
        let e_m = standard(rng);
        let distort: f64 = rng.random_range(1.6..2.2);
        let delta = curves.delta(ts) + noise.slump_sigma_cm * e_s;
        let mut tau0 = curves.tau0(tr) * (1.0 + noise.rheo_sigma_rel * e_t);
        let mut mu = curves.mu(tr) * (1.0 + noise.rheo_sigma_rel * e_m);
        if implausible {
            tau0 *= distort;
            mu /= distort;
        }
        slumps.push(ReferenceMeasurement {
            timestamp_min: ts,
            reading: Reading::Slump {
                delta_cm: clamp(delta, DELTA_RANGE),
            },
            plausible: true,
        });
        rheos.push(ReferenceMeasurement {
            timestamp_min: tr,
            reading: Reading::Rheometer {
                tau0_pa: clamp(tau0, TAU0_RANGE),
                mu_pas: clamp(mu, MU_RANGE),
            },
            plausible: !implausible,
        });
    }
    slumps.extend(rheos);
    slumps
}

fn standard<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn curves_are_monotone_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let recycled = rng.random_bool(0.1);
            let (_, c) = sample_concrete(&mut rng, recycled);
            let mut prev = c.state(0.0);
            for t in 1..=80 {
                let s = c.state(t as f64);
                assert!(s[0] <= prev[0] && s[1] >= prev[1] && s[2] >= prev[2]);
                assert!(s[0] >= DELTA_RANGE.0 && s[0] <= DELTA_RANGE.1, "{c:?} t={t}");
                assert!(s[1] >= TAU0_RANGE.0 && s[1] <= TAU0_RANGE.1, "{c:?} t={t}");
                assert!(s[2] >= MU_RANGE.0 && s[2] <= MU_RANGE.1, "{c:?} t={t}");
                prev = s;
            }
        }
    }

    #[test]
    fn noiseless_references_lie_on_curves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, c) = sample_concrete(&mut rng, false);
        let noise = ReferenceNoise {
            slump_sigma_cm: 0.0,
            rheo_sigma_rel: 0.0,
        };
        let refs = sample_references(&mut rng, &c, &noise, false);
        assert_eq!(refs.len(), 6);
        for r in refs {
            match r.reading {
                Reading::Slump { delta_cm } => assert_eq!(delta_cm, c.delta(r.timestamp_min)),
                Reading::Rheometer { tau0_pa, mu_pas } => {
                    assert_eq!(tau0_pa, c.tau0(r.timestamp_min));
                    assert_eq!(mu_pas, c.mu(r.timestamp_min));
                }
            }
        }
    }

    #[test]
    fn wetter_mixes_flow_further() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<_> = (0..400).map(|_| sample_concrete(&mut rng, false)).collect();
        let (wet, dry): (Vec<_>, Vec<_>) = samples.iter().partition(|(m, _)| m.water_cement_ratio > 0.5);
        let mean = |v: &[&(Materials, LatentCurves)]| v.iter().map(|(_, c)| c.delta0).sum::<f64>() / v.len() as f64;
        assert!(mean(&wet) > mean(&dry) + 3.0);
    }
}
