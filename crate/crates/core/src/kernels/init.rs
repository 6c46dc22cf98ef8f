use rand::Rng;

use super::{KernelError, NdArray, Real};

/// He initialisation with a uniform distribution on `[-√(6/fan_in), √(6/fan_in)]`.
pub fn he_uniform<T: Real, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Result<NdArray<T>, KernelError> {
    if fan_in == 0 {
        return Err(KernelError::Config("fan_in must be positive".into()));
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            T::lit(bound * (2.0 * u - 1.0))
        })
        .collect();
    NdArray::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fan_in_six_has_unit_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: NdArray<f64> = he_uniform(&[1000], 6, &mut rng).unwrap();
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn variance_is_two_over_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: NdArray<f64> = he_uniform(&[1_000_000], 100, &mut rng).unwrap();
        let n = a.len() as f64;
        let mean = a.data().iter().sum::<f64>() / n;
        let var = a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 0.02 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn same_seed_same_array() {
        let a: NdArray<f32> = he_uniform(&[4, 3, 5, 5], 75, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b: NdArray<f32> = he_uniform(&[4, 3, 5, 5], 75, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fan_in_rejected() {
        let r: Result<NdArray<f32>, _> = he_uniform(&[3], 0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(r.is_err());
    }
}
