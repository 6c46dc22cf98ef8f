use rand::Rng;

use super::{Category, DataError, InputSet, NormStats};

/// The five random factors of one augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub brightness: f64,
    pub contrast: f64,
    pub depth_offset: f64,
    pub flow_offset: [f64; 2],
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            depth_offset: 0.0,
            flow_offset: [0.0; 2],
        }
    }

    /// Always consumes five uniforms, in field order, whatever channels are
    /// present, so the rng stream does not depend on the combination.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            brightness: rng.random_range(0.85..1.15),
            contrast: rng.random_range(0.75..1.25),
            depth_offset: rng.random_range(-0.07..0.07),
            flow_offset: [rng.random_range(-0.07..0.07), rng.random_range(-0.07..0.07)],
        }
    }
}

/// Applies `draw` in place to an un-normalised image laid out as
/// `categories` (one entry per channel). Orthophoto:
/// `clamp(c·(O − Ō) + Ō + (b − 1)·Ō, 0, 1)` with the per-image mean `Ō`;
/// depth and flow: `x + u·std_train`.
pub fn augment_image(
    image: &mut [f32],
    categories: &[Category],
    draw: &AugmentDraw,
    stats: &NormStats,
) -> Result<(), DataError> {
    if categories.is_empty() || image.len() % categories.len() != 0 {
        return Err(DataError::Input("image length does not match its channels".into()));
    }
    let plane = image.len() / categories.len();
    let mut flow_axis = 0;
    for (c, cat) in categories.iter().enumerate() {
        let ch = &mut image[c * plane..(c + 1) * plane];
        match cat {
            Category::Ortho => {
                let mean = ch.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
                for v in ch.iter_mut() {
                    let o = draw.contrast * (*v as f64 - mean) + mean + (draw.brightness - 1.0) * mean;
                    *v = o.clamp(0.0, 1.0) as f32;
                }
            }
            Category::Depth | Category::Flow => {
                let u = if *cat == Category::Depth {
                    draw.depth_offset
                } else {
                    flow_axis += 1;
                    draw.flow_offset[flow_axis - 1]
                };
                if u != 0.0 {
                    let shift = (u * stats.get(*cat)?.std) as f32;
                    for v in ch.iter_mut() {
                        *v += shift;
                    }
                }
            }
            other => {
                return Err(DataError::Input(format!("{other} is not an image category")));
            }
        }
    }
    Ok(())
}

/// Returns an augmented copy of a training set.
pub fn augment<R: Rng + ?Sized>(
    set: &InputSet,
    stats: &NormStats,
    rng: &mut R,
) -> Result<InputSet, DataError> {
    let draw = AugmentDraw::sample(rng);
    let mut out = set.clone();
    augment_image(&mut out.image, &set.combination.channel_categories(), &draw, stats)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::MeanStd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stats() -> NormStats {
        let mut s = NormStats::default();
        s.set(Category::Depth, MeanStd { mean: 40.0, std: 2.0 });
        s.set(Category::Flow, MeanStd { mean: 0.0, std: 1.5 });
        s
    }

    fn image() -> (Vec<f32>, Vec<Category>) {
        let mut img: Vec<f32> = (0..16).map(|i| i as f32 / 20.0).collect();
        img.extend((0..16).map(|i| 38.0 + i as f32 / 4.0));
        img.extend((0..32).map(|i| (i as f32 - 16.0) / 8.0));
        (img, vec![Category::Ortho, Category::Depth, Category::Flow, Category::Flow])
    }

    #[test]
    fn identity_draw_changes_nothing() {
        let (mut img, cats) = image();
        let orig = img.clone();
        augment_image(&mut img, &cats, &AugmentDraw::identity(), &stats()).unwrap();
        assert_eq!(img, orig);
    }

    #[test]
    fn contrast_leaves_constant_image() {
        let mut img = vec![0.4f32; 16];
        let draw = AugmentDraw {
            contrast: 1.2,
            ..AugmentDraw::identity()
        };
        augment_image(&mut img, &[Category::Ortho], &draw, &stats()).unwrap();
        assert!(img.iter().all(|&v| (v - 0.4).abs() < 1e-7));
    }

    #[test]
    fn offsets_use_training_std_per_axis() {
        let (mut img, cats) = image();
        let orig = img.clone();
        let draw = AugmentDraw {
            depth_offset: 0.05,
            flow_offset: [-0.07, 0.02],
            ..AugmentDraw::identity()
        };
        augment_image(&mut img, &cats, &draw, &stats()).unwrap();
        assert!((img[16] - orig[16] - 0.1).abs() < 1e-5);
        assert!((img[32] - orig[32] + 0.105).abs() < 1e-5);
        assert!((img[48] - orig[48] - 0.03).abs() < 1e-5);
        assert_eq!(&img[..16], &orig[..16]);
    }

    #[test]
    fn brightness_draws_are_uniform() {
        // Kolmogorov–Smirnov against U(0.85, 1.15); critical value at
        // α = 0.01 is 1.628/√n.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| AugmentDraw::sample(&mut rng).brightness).collect();
        xs.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let cdf = (x - 0.85) / 0.3;
            d = d.max((cdf - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
        assert!(xs[0] >= 0.85 && xs[n - 1] < 1.15);
    }
}
