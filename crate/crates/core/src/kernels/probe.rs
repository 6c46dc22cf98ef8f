//! Gradient-check targets for the individual kernels. Each probe reads the
//! kernel output out through a fixed random linear functional
//! `L = Σ probe ⊙ f(tensors)`, so the analytic gradient is the kernel's
//! backward pass applied to `probe`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    batch_norm_backward, batch_norm_forward, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    Activation, BatchNormConfig, GradCheckTarget, Mode, NdArray, RunningStats, KERNEL_SIZE,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeKind {
    Conv { stride: usize },
    BatchNorm,
    Dense,
    Activation(Activation),
}

#[derive(Clone, Debug)]
pub struct KernelProbe {
    pub name: String,
    pub kind: ProbeKind,
    /// Differentiable inputs in kernel argument order.
    pub tensors: Vec<(String, NdArray<f64>)>,
    probe: NdArray<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> NdArray<f64> {
    let len = shape.iter().product();
    NdArray::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized")
}

/// Values bounded away from zero, so no coordinate sits on a ReLU kink
/// within a finite-difference step.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> NdArray<f64> {
    uniform(rng, shape).map(|v| if v < 0.0 { v - 0.05 } else { v + 0.05 })
}

impl KernelProbe {
    pub fn new(kind: ProbeKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = KERNEL_SIZE;
        let (name, tensors) = match kind {
            ProbeKind::Conv { stride } => (
                format!("conv2d stride {stride}"),
                vec![
                    ("input".to_string(), uniform(&mut rng, &[2, 3, 9, 7])),
                    ("weight".to_string(), uniform(&mut rng, &[4, 3, k, k])),
                    ("bias".to_string(), uniform(&mut rng, &[4])),
                ],
            ),
            ProbeKind::BatchNorm => (
                "batch norm".to_string(),
                vec![
                    ("input".to_string(), uniform(&mut rng, &[3, 2, 4, 5])),
                    ("gamma".to_string(), uniform(&mut rng, &[2]).map(|v| v + 1.5)),
                    ("beta".to_string(), uniform(&mut rng, &[2])),
                ],
            ),
            ProbeKind::Dense => (
                "dense".to_string(),
                vec![
                    ("input".to_string(), uniform(&mut rng, &[3, 6])),
                    ("weight".to_string(), uniform(&mut rng, &[4, 6])),
                    ("bias".to_string(), uniform(&mut rng, &[4])),
                ],
            ),
            ProbeKind::Activation(a) => (
                format!("{a:?}"),
                vec![("input".to_string(), off_zero(&mut rng, &[4, 7]))],
            ),
        };
        let mut probe = Self {
            name,
            kind,
            tensors,
            probe: NdArray::zeros(&[0]),
        };
        let shape = probe.output().shape().to_vec();
        probe.probe = uniform(&mut rng, &shape);
        probe
    }

    fn output(&self) -> NdArray<f64> {
        let t = |i: usize| &self.tensors[i].1;
        match self.kind {
            ProbeKind::Conv { stride } => conv2d_forward(t(0), t(1), t(2), stride).expect("valid shapes").0,
            ProbeKind::BatchNorm => {
                let mut running = RunningStats::new(t(0).dim(1));
                batch_norm_forward(t(0), t(1), t(2), &mut running, Mode::Train, &BatchNormConfig::default())
                    .expect("valid shapes")
                    .0
            }
            ProbeKind::Dense => dense_forward(t(0), t(1), t(2)).expect("valid shapes"),
            ProbeKind::Activation(a) => a.forward(t(0)),
        }
    }
}

/// One probe per kernel: convolution at strides 1 and 2, batch norm in
/// training mode, dense, ReLU and leaky ReLU.
pub fn kernel_probes(seed: u64) -> Vec<KernelProbe> {
    [
        ProbeKind::Conv { stride: 1 },
        ProbeKind::Conv { stride: 2 },
        ProbeKind::BatchNorm,
        ProbeKind::Dense,
        ProbeKind::Activation(Activation::Relu),
        ProbeKind::Activation(Activation::LeakyRelu(0.2)),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, kind)| KernelProbe::new(kind, seed.wrapping_add(i as u64)))
    .collect()
}

impl GradCheckTarget for KernelProbe {
    fn tensors(&self) -> Vec<(String, usize)> {
        self.tensors.iter().map(|(n, t)| (n.clone(), t.len())).collect()
    }

    fn get(&self, tensor: usize, index: usize) -> f64 {
        self.tensors[tensor].1.data()[index]
    }

    fn set(&mut self, tensor: usize, index: usize, value: f64) {
        self.tensors[tensor].1.data_mut()[index] = value;
    }

    fn loss(&mut self) -> f64 {
        self.output().data().iter().zip(self.probe.data()).map(|(a, b)| a * b).sum()
    }

    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let t = |i: usize| &self.tensors[i].1;
        let g = &self.probe;
        let grads: Vec<NdArray<f64>> = match self.kind {
            ProbeKind::Conv { stride } => {
                let (_, cache) = conv2d_forward(t(0), t(1), t(2), stride).expect("valid shapes");
                let gr = conv2d_backward(&cache, g).expect("valid shapes");
                vec![gr.input, gr.weight, gr.bias]
            }
            ProbeKind::BatchNorm => {
                let mut running = RunningStats::new(t(0).dim(1));
                let (_, cache) =
                    batch_norm_forward(t(0), t(1), t(2), &mut running, Mode::Train, &BatchNormConfig::default())
                        .expect("valid shapes");
                let gr = batch_norm_backward(&cache, t(1), g).expect("valid shapes");
                vec![gr.input, gr.gamma, gr.beta]
            }
            ProbeKind::Dense => {
                let gr = dense_backward(t(0), t(1), g).expect("valid shapes");
                vec![gr.input, gr.weight, gr.bias]
            }
            ProbeKind::Activation(a) => vec![a.backward(t(0), g)],
        };
        grads.into_iter().map(NdArray::into_vec).collect()
    }
}
