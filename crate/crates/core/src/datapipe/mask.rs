use super::{DataError, Grid};

/// Replaces every height above `threshold` (the paddle) by the mean of the
/// remaining cells. Returns the masked grid and the validity mask.
pub fn mask_paddle(depth: &Grid, threshold: f32) -> Result<(Grid, Vec<bool>), DataError> {
    if !threshold.is_finite() {
        return Err(DataError::Input(format!("masking threshold {threshold} is not finite")));
    }
    let valid: Vec<bool> = depth.data().iter().map(|&v| v <= threshold).collect();
    let (sum, count) = depth
        .data()
        .iter()
        .zip(&valid)
        .filter(|(_, &ok)| ok)
        .fold((0.0f64, 0usize), |(s, n), (&v, _)| (s + v as f64, n + 1));
    if count == 0 {
        return Err(DataError::EmptySurface { threshold });
    }
    let fill = (sum / count as f64) as f32;
    let mut out = depth.clone();
    for (v, &ok) in out.data_mut().iter_mut().zip(&valid) {
        if !ok {
            *v = fill;
        }
    }
    Ok((out, valid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_threshold_is_untouched() {
        let g = Grid::from_fn(4, 5, |y, x| (y + x) as f32);
        let (m, valid) = mask_paddle(&g, 100.0).unwrap();
        assert_eq!(m, g);
        assert!(valid.iter().all(|&v| v));
    }

    #[test]
    fn spike_becomes_mean_of_others() {
        let mut g = Grid::from_fn(3, 3, |y, x| (y * 3 + x) as f32);
        g.set(1, 1, 80.0);
        let (m, valid) = mask_paddle(&g, 8.0).unwrap();
        let others = [0.0, 1.0, 2.0, 3.0, 5.0, 6.0, 7.0, 8.0];
        let mean = others.iter().sum::<f32>() / 8.0;
        assert_eq!(m.get(1, 1), mean);
        assert!(!valid[4]);
        assert_eq!(valid.iter().filter(|&&v| !v).count(), 1);
    }

    #[test]
    fn idempotent() {
        let g = Grid::from_fn(6, 6, |y, x| if x == 2 { 90.0 } else { (y * x) as f32 });
        let (once, _) = mask_paddle(&g, 40.0).unwrap();
        let (twice, _) = mask_paddle(&once, 40.0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn fully_covered_surface_is_an_error() {
        let g = Grid::filled(2, 2, 50.0);
        assert!(matches!(mask_paddle(&g, 10.0), Err(DataError::EmptySurface { .. })));
    }
}
