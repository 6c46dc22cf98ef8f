use super::{KernelError, NdArray, Param, Real};

/// State of SGD with Nesterov momentum.
///
/// Velocities are created lazily on the first step and matched to parameters
/// by name afterwards. `weight_decay` is carried here for bookkeeping only;
/// the `2λω` term is folded into the gradients by the caller before
/// [`nesterov_step`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocities: Vec<(String, NdArray<T>)>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self, KernelError> {
        if !(learning_rate > 0.0) {
            return Err(KernelError::Config(format!(
                "learning rate must be > 0, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(KernelError::Config(format!(
                "momentum must lie in [0,1), got {momentum}"
            )));
        }
        if !(weight_decay >= 0.0) {
            return Err(KernelError::Config(format!(
                "weight decay must be >= 0, got {weight_decay}"
            )));
        }
        Ok(Self {
            learning_rate,
            momentum,
            weight_decay,
            velocities: Vec::new(),
        })
    }

    pub fn velocities(&self) -> &[(String, NdArray<T>)] {
        &self.velocities
    }

    pub fn set_velocities(&mut self, velocities: Vec<(String, NdArray<T>)>) {
        self.velocities = velocities;
    }

    pub fn velocity(&self, name: &str) -> Option<&NdArray<T>> {
        self.velocities.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// One Nesterov momentum update in the Sutskever form:
///
/// ```text
/// v ← β·v − η·∇
/// ω ← ω + β·v − η·∇
/// ```
///
/// Nothing is modified if any gradient is non-finite.
pub fn nesterov_step<T: Real>(
    params: &mut [&mut Param<T>],
    state: &mut OptimizerState<T>,
) -> Result<(), KernelError> {
    if let Some(bad) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(KernelError::NonFiniteGradient(bad.name.clone()));
    }
    if state.velocities.is_empty() {
        state.velocities = params
            .iter()
            .map(|p| (p.name.clone(), NdArray::zeros(p.value.shape())))
            .collect();
    }
    if state.velocities.len() != params.len() {
        return Err(KernelError::Config(format!(
            "optimizer tracks {} parameters but {} were passed",
            state.velocities.len(),
            params.len()
        )));
    }
    let beta = T::lit(state.momentum);
    let lr = T::lit(state.learning_rate);
    for (p, (name, v)) in params.iter_mut().zip(state.velocities.iter_mut()) {
        if *name != p.name || v.shape() != p.value.shape() {
            return Err(KernelError::Config(format!(
                "optimizer velocity `{name}` {:?} does not match parameter `{}` {:?}",
                v.shape(),
                p.name,
                p.value.shape()
            )));
        }
        for ((w, vel), &g) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(v.data_mut().iter_mut())
            .zip(p.grad.data())
        {
            let step = lr * g;
            *vel = beta * *vel - step;
            *w += beta * *vel - step;
        }
    }
    Ok(())
}
