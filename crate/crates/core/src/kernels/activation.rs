use super::{KernelError, NdArray, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    pub fn leaky_relu(slope: f64) -> Result<Self, KernelError> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(KernelError::Config(format!(
                "leaky ReLU slope must lie in (0,1), got {slope}"
            )));
        }
        Ok(Self::LeakyRelu(slope))
    }

    #[inline]
    fn slope<T: Real>(&self) -> T {
        match *self {
            Self::Relu => T::zero(),
            Self::LeakyRelu(s) => T::lit(s),
        }
    }

    pub fn forward<T: Real>(&self, input: &NdArray<T>) -> NdArray<T> {
        let slope = self.slope::<T>();
        input.map(|x| if x < T::zero() { slope * x } else { x })
    }

    /// Subgradient at exactly zero is taken from the positive side for leaky
    /// ReLU and is 0 for ReLU.
    pub fn backward<T: Real>(&self, input: &NdArray<T>, grad_out: &NdArray<T>) -> NdArray<T> {
        let slope = self.slope::<T>();
        let data = input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| match self {
                Self::Relu if x > T::zero() => g,
                Self::Relu => T::zero(),
                Self::LeakyRelu(_) if x < T::zero() => slope * g,
                Self::LeakyRelu(_) => g,
            })
            .collect();
        NdArray::from_vec(input.shape(), data).expect("shape preserved")
    }
}
