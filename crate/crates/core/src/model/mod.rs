//! The regression network: seven `conv 5×5/2 → batch norm → ReLU` blocks
//! produce a flattened embedding `z`, which is concatenated with the time
//! offsets `Δt` and the mix vector `m` and mapped by three dense layers to the
//! normalised target state `(δ, τ₀, μ)`.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernels::{
    self, batch_norm_backward, batch_norm_forward, conv2d_forward, conv_output_len, dense_backward,
    dense_forward, he_uniform, Activation, BatchNormCache, BatchNormConfig, Conv2dCache,
    KernelError, Mode, NdArray, Param, ParamKind, Real, RunningStats, KERNEL_SIZE,
};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting,
    save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

pub const CONV_LAYERS: usize = 7;
pub const FC_LAYERS: usize = 3;
pub const CONV_STRIDE: usize = 2;
pub const OUTPUTS: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid model input: {0}")]
    Input(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// `(H, W)` of the image stack.
    pub input_size: (usize, usize),
    /// Image channels; 4 for `[O, D, OF_x, OF_y]`, fewer in ablations.
    pub in_channels: usize,
    pub conv_channels: [usize; CONV_LAYERS],
    pub embedding_len: usize,
    pub delta_t_dim: usize,
    pub mix_dim: usize,
    /// Output widths of the three dense layers; the last must be 3.
    pub fc_sizes: [usize; FC_LAYERS],
    pub leaky_slope: f64,
    pub batch_norm: BatchNormConfig,
}

impl ModelConfig {
    /// 512×512 input, final map 4×4×40.
    pub fn paper() -> Self {
        Self {
            input_size: (512, 512),
            in_channels: 4,
            conv_channels: [8, 16, 32, 32, 40, 40, 40],
            embedding_len: 640,
            delta_t_dim: 2,
            mix_dim: 18,
            fc_sizes: [441, 222, 3],
            leaky_slope: 0.2,
            batch_norm: BatchNormConfig::default(),
        }
    }

    /// 128×128 input, final map 1×1×640.
    pub fn desk128() -> Self {
        Self {
            input_size: (128, 128),
            conv_channels: [8, 16, 32, 64, 128, 256, 640],
            ..Self::paper()
        }
    }

    /// 64×64 input with the 128×128 channel plan; the last stride-2 layer
    /// maps 1×1 to 1×1, so the embedding is still 640.
    pub fn desk64() -> Self {
        Self {
            input_size: (64, 64),
            ..Self::desk128()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk128" => Some(Self::desk128()),
            "desk64" => Some(Self::desk64()),
            _ => None,
        }
    }

    /// Spatial size after the seven stride-2 convolutions.
    pub fn final_map(&self) -> (usize, usize) {
        let shrink = |mut n: usize| {
            for _ in 0..CONV_LAYERS {
                n = conv_output_len(n, CONV_STRIDE);
            }
            n
        };
        (shrink(self.input_size.0), shrink(self.input_size.1))
    }

    pub fn fc_input_width(&self) -> usize {
        self.embedding_len + self.delta_t_dim + self.mix_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        let (h, w) = self.input_size;
        if h == 0 || w == 0 {
            return fail(format!("input size must be positive, got {h}x{w}"));
        }
        if self.in_channels == 0 {
            return fail("in_channels must be positive".into());
        }
        if let Some(i) = self.conv_channels.iter().position(|&c| c == 0) {
            return fail(format!("conv_channels[{i}] must be positive"));
        }
        let (fh, fw) = self.final_map();
        let flat = self.conv_channels[CONV_LAYERS - 1] * fh * fw;
        if flat != self.embedding_len {
            return fail(format!(
                "conv_channels[6]·final_h·final_w = {}·{fh}·{fw} = {flat} but embedding_len = {}",
                self.conv_channels[CONV_LAYERS - 1],
                self.embedding_len
            ));
        }
        if self.fc_sizes[FC_LAYERS - 1] != OUTPUTS {
            return fail(format!(
                "fc_sizes[2] must be {OUTPUTS}, got {}",
                self.fc_sizes[FC_LAYERS - 1]
            ));
        }
        if let Some(i) = self.fc_sizes.iter().position(|&c| c == 0) {
            return fail(format!("fc_sizes[{i}] must be positive"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope must lie in (0,1), got {}", self.leaky_slope));
        }
        if !(self.batch_norm.eps > 0.0) || !(0.0..=1.0).contains(&self.batch_norm.momentum) {
            return fail(format!("invalid batch-norm settings {:?}", self.batch_norm));
        }
        Ok(())
    }
}

/// Network input for `N` samples. `images` is `[N, C, H, W]`, `delta_t` is
/// `[N, 2]`, `mix` is `[N, mix_dim]`; all already normalised.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub images: NdArray<T>,
    pub delta_t: NdArray<T>,
    pub mix: NdArray<T>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.images.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ConvBlock<T> {
    weight: Param<T>,
    bias: Param<T>,
    gamma: Param<T>,
    beta: Param<T>,
    running: RunningStats<T>,
}

#[derive(Clone, Debug, PartialEq)]
struct DenseLayer<T> {
    weight: Param<T>,
    bias: Param<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    blocks: Vec<ConvBlock<T>>,
    head: Vec<DenseLayer<T>>,
}

struct BlockCache<T> {
    conv: Conv2dCache<T>,
    bn: BatchNormCache<T>,
    normalized: NdArray<T>,
}

/// Intermediate values kept by [`Model::forward`] for [`Model::backward`].
pub struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    final_shape: Vec<usize>,
    /// Input to each dense layer.
    dense_inputs: Vec<NdArray<T>>,
    /// Pre-activation output of the first two dense layers.
    dense_pre: Vec<NdArray<T>>,
}

/// Gradients of the loss with respect to the network inputs.
#[derive(Clone, Debug)]
pub struct InputGrads<T> {
    pub images: Option<NdArray<T>>,
    pub delta_t: NdArray<T>,
    pub mix: NdArray<T>,
}

impl<T: Real> Model<T> {
    /// Builds the network with He-uniform weights, zero biases, unit
    /// batch-norm scale and zero shift.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(CONV_LAYERS);
        let mut cin = config.in_channels;
        for (i, &cout) in config.conv_channels.iter().enumerate() {
            let fan_in = cin * KERNEL_SIZE * KERNEL_SIZE;
            let w = he_uniform(&[cout, cin, KERNEL_SIZE, KERNEL_SIZE], fan_in, &mut rng)?;
            blocks.push(ConvBlock {
                weight: Param::new(format!("conv{}.weight", i + 1), ParamKind::Weight, w),
                bias: Param::new(format!("conv{}.bias", i + 1), ParamKind::Bias, NdArray::zeros(&[cout])),
                gamma: Param::new(format!("bn{}.gamma", i + 1), ParamKind::Scale, NdArray::full(&[cout], T::one())),
                beta: Param::new(format!("bn{}.beta", i + 1), ParamKind::Shift, NdArray::zeros(&[cout])),
                running: RunningStats::new(cout),
            });
            cin = cout;
        }
        let mut head = Vec::with_capacity(FC_LAYERS);
        let mut fin = config.fc_input_width();
        for (i, &fout) in config.fc_sizes.iter().enumerate() {
            let w = he_uniform(&[fout, fin], fin, &mut rng)?;
            head.push(DenseLayer {
                weight: Param::new(format!("fc{}.weight", i + 1), ParamKind::Weight, w),
                bias: Param::new(format!("fc{}.bias", i + 1), ParamKind::Bias, NdArray::zeros(&[fout])),
            });
            fin = fout;
        }
        Ok(Self {
            config: config.clone(),
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::with_capacity(4 * CONV_LAYERS + 2 * FC_LAYERS);
        for b in &self.blocks {
            out.extend([&b.weight, &b.bias, &b.gamma, &b.beta]);
        }
        for d in &self.head {
            out.extend([&d.weight, &d.bias]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::with_capacity(4 * CONV_LAYERS + 2 * FC_LAYERS);
        for b in &mut self.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        for d in &mut self.head {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    /// Batch-norm running statistics as named tensors (`bnK.running_mean`,
    /// `bnK.running_var`).
    pub fn buffers(&self) -> Vec<(String, &NdArray<T>)> {
        let mut out = Vec::with_capacity(2 * CONV_LAYERS);
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("bn{}.running_mean", i + 1), &b.running.mean));
            out.push((format!("bn{}.running_var", i + 1), &b.running.var));
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut NdArray<T>)> {
        let mut out = Vec::with_capacity(2 * CONV_LAYERS);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("bn{}.running_mean", i + 1), &mut b.running.mean));
            out.push((format!("bn{}.running_var", i + 1), &mut b.running.var));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Converts every parameter and buffer to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let cp = |p: &Param<T>| Param {
            name: p.name.clone(),
            kind: p.kind,
            value: p.value.cast(),
            grad: p.grad.cast(),
        };
        Model {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    weight: cp(&b.weight),
                    bias: cp(&b.bias),
                    gamma: cp(&b.gamma),
                    beta: cp(&b.beta),
                    running: RunningStats {
                        mean: b.running.mean.cast(),
                        var: b.running.var.cast(),
                    },
                })
                .collect(),
            head: self
                .head
                .iter()
                .map(|d| DenseLayer {
                    weight: cp(&d.weight),
                    bias: cp(&d.bias),
                })
                .collect(),
        }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<usize, ModelError> {
        let c = &self.config;
        let shape = batch.images.shape();
        if shape.len() != 4 {
            return Err(ModelError::Input(format!("images must be [N,C,H,W], got {shape:?}")));
        }
        let n = shape[0];
        if shape[1] != c.in_channels {
            return Err(ModelError::Input(format!(
                "expected {} image channels, got {}",
                c.in_channels, shape[1]
            )));
        }
        if (shape[2], shape[3]) != c.input_size {
            return Err(ModelError::Input(format!(
                "expected {}x{} images, got {}x{}",
                c.input_size.0, c.input_size.1, shape[2], shape[3]
            )));
        }
        if batch.delta_t.shape() != [n, c.delta_t_dim] {
            return Err(ModelError::Input(format!(
                "delta_t must be [{n},{}], got {:?}",
                c.delta_t_dim,
                batch.delta_t.shape()
            )));
        }
        if batch.mix.shape() != [n, c.mix_dim] {
            return Err(ModelError::Input(format!(
                "mix must be [{n},{}], got {:?}",
                c.mix_dim,
                batch.mix.shape()
            )));
        }
        Ok(n)
    }

    /// Forward pass. In [`Mode::Train`] batch statistics are used and the
    /// running statistics are updated.
    pub fn forward(
        &mut self,
        batch: &Batch<T>,
        mode: Mode,
    ) -> Result<(NdArray<T>, ForwardCache<T>), ModelError> {
        let n = self.check_batch(batch)?;
        let bn_cfg = self.config.batch_norm;
        let mut x = batch.images.clone();
        let mut block_caches = Vec::with_capacity(CONV_LAYERS);
        for b in &mut self.blocks {
            let (y, conv) = conv2d_forward(&x, &b.weight.value, &b.bias.value, CONV_STRIDE)?;
            let (normalized, bn) =
                batch_norm_forward(&y, &b.gamma.value, &b.beta.value, &mut b.running, mode, &bn_cfg)?;
            x = Activation::Relu.forward(&normalized);
            block_caches.push(BlockCache { conv, bn, normalized });
        }
        let final_shape = x.shape().to_vec();
        let z = x.reshape(&[n, self.config.embedding_len])?;

        // f = [z, Δt, m]
        let width = self.config.fc_input_width();
        let mut f = NdArray::zeros(&[n, width]);
        for s in 0..n {
            let row = f.outer_mut(s);
            let (zl, dl) = (self.config.embedding_len, self.config.delta_t_dim);
            row[..zl].copy_from_slice(z.outer(s));
            row[zl..zl + dl].copy_from_slice(batch.delta_t.outer(s));
            row[zl + dl..].copy_from_slice(batch.mix.outer(s));
        }

        let leaky = Activation::LeakyRelu(self.config.leaky_slope);
        let mut dense_inputs = Vec::with_capacity(FC_LAYERS);
        let mut dense_pre = Vec::with_capacity(FC_LAYERS - 1);
        let mut h = f;
        for (i, d) in self.head.iter().enumerate() {
            let out = dense_forward(&h, &d.weight.value, &d.bias.value)?;
            dense_inputs.push(h);
            if i + 1 < FC_LAYERS {
                h = leaky.forward(&out);
                dense_pre.push(out);
            } else {
                h = out;
            }
        }
        Ok((
            h,
            ForwardCache {
                blocks: block_caches,
                final_shape,
                dense_inputs,
                dense_pre,
            },
        ))
    }

    /// Eval-mode prediction without touching any state.
    pub fn predict(&self, batch: &Batch<T>) -> Result<NdArray<T>, ModelError> {
        let mut scratch = self.clone_for_eval();
        Ok(scratch.forward(batch, Mode::Eval)?.0)
    }

    fn clone_for_eval(&self) -> Self {
        // Gradients are irrelevant in eval mode; skip copying them.
        let strip = |p: &Param<T>| Param {
            name: p.name.clone(),
            kind: p.kind,
            value: p.value.clone(),
            grad: NdArray::zeros(&[0]),
        };
        Self {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    weight: strip(&b.weight),
                    bias: strip(&b.bias),
                    gamma: strip(&b.gamma),
                    beta: strip(&b.beta),
                    running: b.running.clone(),
                })
                .collect(),
            head: self
                .head
                .iter()
                .map(|d| DenseLayer {
                    weight: strip(&d.weight),
                    bias: strip(&d.bias),
                })
                .collect(),
        }
    }

    /// Back-propagates `grad_out` (`[N, 3]`), adding parameter gradients to
    /// the accumulators. The image gradient is only computed when
    /// `want_image_grad` is set.
    pub fn backward(
        &mut self,
        cache: &ForwardCache<T>,
        grad_out: &NdArray<T>,
        want_image_grad: bool,
    ) -> Result<InputGrads<T>, ModelError> {
        let leaky = Activation::LeakyRelu(self.config.leaky_slope);
        let mut g = grad_out.clone();
        for i in (0..FC_LAYERS).rev() {
            if i + 1 < FC_LAYERS {
                g = leaky.backward(&cache.dense_pre[i], &g);
            }
            let d = &mut self.head[i];
            let grads = dense_backward(&cache.dense_inputs[i], &d.weight.value, &g)?;
            d.weight.accumulate(&grads.weight);
            d.bias.accumulate(&grads.bias);
            g = grads.input;
        }

        let n = g.dim(0);
        let (zl, dl, ml) = (
            self.config.embedding_len,
            self.config.delta_t_dim,
            self.config.mix_dim,
        );
        let mut gz = NdArray::zeros(&[n, zl]);
        let mut gdt = NdArray::zeros(&[n, dl]);
        let mut gm = NdArray::zeros(&[n, ml]);
        for s in 0..n {
            let row = g.outer(s);
            gz.outer_mut(s).copy_from_slice(&row[..zl]);
            gdt.outer_mut(s).copy_from_slice(&row[zl..zl + dl]);
            gm.outer_mut(s).copy_from_slice(&row[zl + dl..zl + dl + ml]);
        }

        let mut g = gz.reshape(&cache.final_shape)?;
        let mut image_grad = None;
        for i in (0..CONV_LAYERS).rev() {
            let bc = &cache.blocks[i];
            let b = &mut self.blocks[i];
            g = Activation::Relu.backward(&bc.normalized, &g);
            let bn = batch_norm_backward(&bc.bn, &b.gamma.value, &g)?;
            b.gamma.accumulate(&bn.gamma);
            b.beta.accumulate(&bn.beta);
            let need_input = i > 0 || want_image_grad;
            let conv = kernels::conv2d_backward_select(&bc.conv, &bn.input, need_input)?;
            b.weight.accumulate(&conv.weight);
            b.bias.accumulate(&conv.bias);
            if i == 0 {
                image_grad = need_input.then_some(conv.input);
            } else {
                g = conv.input;
            }
        }
        Ok(InputGrads {
            images: image_grad,
            delta_t: gdt,
            mix: gm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_size: (16, 16),
            in_channels: 4,
            conv_channels: [2, 3, 3, 4, 4, 4, 5],
            embedding_len: 5,
            delta_t_dim: 2,
            mix_dim: 3,
            fc_sizes: [6, 4, 3],
            ..ModelConfig::paper()
        }
    }

    fn random_batch(cfg: &ModelConfig, n: usize, seed: u64) -> Batch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |shape: &[usize]| {
            let len = shape.iter().product();
            NdArray::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap()
        };
        Batch {
            images: r(&[n, cfg.in_channels, cfg.input_size.0, cfg.input_size.1]),
            delta_t: r(&[n, cfg.delta_t_dim]),
            mix: r(&[n, cfg.mix_dim]),
        }
    }

    #[test]
    fn paper_preset_reaches_640() {
        let cfg = ModelConfig::paper();
        assert_eq!(cfg.final_map(), (4, 4));
        assert_eq!(cfg.conv_channels[6] * 16, 640);
        assert_eq!(cfg.fc_input_width(), 660);
        cfg.validate().unwrap();
    }

    #[test]
    fn linear_fc_schedule_accepted() {
        // 660 → 441 → 222 → 3 steps down by 219 each.
        let cfg = ModelConfig::paper();
        assert_eq!(cfg.fc_sizes, [441, 222, 3]);
        let w = [cfg.fc_input_width(), 441, 222, 3];
        assert!(w.windows(2).all(|p| p[0] - p[1] == 219));
    }

    #[test]
    fn desk_presets_validate() {
        for cfg in [ModelConfig::desk128(), ModelConfig::desk64()] {
            cfg.validate().unwrap();
            assert_eq!(cfg.final_map(), (1, 1));
        }
    }

    #[test]
    fn broken_invariants_are_named() {
        let mut cfg = ModelConfig::paper();
        cfg.embedding_len = 600;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("embedding_len"), "{msg}");
        let mut cfg = ModelConfig::paper();
        cfg.fc_sizes = [441, 222, 4];
        assert!(cfg.validate().unwrap_err().to_string().contains("fc_sizes[2]"));
        let mut cfg = ModelConfig::paper();
        cfg.leaky_slope = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("leaky_slope"));
    }

    #[test]
    fn build_is_deterministic() {
        let a = Model::<f32>::build(&ModelConfig::desk64(), 3).unwrap();
        let b = Model::<f32>::build(&ModelConfig::desk64(), 3).unwrap();
        let c = Model::<f32>::build(&ModelConfig::desk64(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.param_count(), b.param_count());
    }

    #[test]
    fn output_is_three_per_sample() {
        let cfg = tiny_config();
        let mut m = Model::<f64>::build(&cfg, 1).unwrap();
        let batch = random_batch(&cfg, 3, 2);
        let (y, _) = m.forward(&batch, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[3, 3]);
        assert!(y.all_finite());
    }

    #[test]
    fn wrong_channel_count_rejected() {
        let cfg = tiny_config();
        let m = Model::<f64>::build(&cfg, 1).unwrap();
        let mut batch = random_batch(&cfg, 2, 2);
        batch.images = NdArray::zeros(&[2, 3, 16, 16]);
        assert!(matches!(m.predict(&batch), Err(ModelError::Input(_))));
    }

    #[test]
    fn zero_weights_emit_final_bias() {
        let cfg = tiny_config();
        let mut m = Model::<f64>::build(&cfg, 1).unwrap();
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        m.head[2].bias.value = NdArray::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let mut batch = random_batch(&cfg, 2, 2);
        batch.images.fill(0.0);
        batch.delta_t.fill(0.0);
        batch.mix.fill(0.0);
        let y = m.predict(&batch).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn eval_mode_is_pure_and_per_sample() {
        let cfg = tiny_config();
        let m = Model::<f64>::build(&cfg, 5).unwrap();
        let batch = random_batch(&cfg, 3, 6);
        let y1 = m.predict(&batch).unwrap();
        let y2 = m.predict(&batch).unwrap();
        assert_eq!(y1, y2);

        // Reverse the samples and expect reversed outputs.
        let perm = [2usize, 1, 0];
        let permute = |a: &NdArray<f64>| {
            let mut out = a.clone();
            for (dst, &src) in perm.iter().enumerate() {
                out.outer_mut(dst).copy_from_slice(a.outer(src));
            }
            out
        };
        let pb = Batch {
            images: permute(&batch.images),
            delta_t: permute(&batch.delta_t),
            mix: permute(&batch.mix),
        };
        assert_eq!(m.predict(&pb).unwrap(), permute(&y1));
    }

    #[test]
    fn swapping_delta_t_and_mix_changes_output() {
        let cfg = ModelConfig {
            mix_dim: 2,
            ..tiny_config()
        };
        let m = Model::<f64>::build(&cfg, 8).unwrap();
        let batch = random_batch(&cfg, 2, 9);
        let swapped = Batch {
            delta_t: batch.mix.clone(),
            mix: batch.delta_t.clone(),
            ..batch.clone()
        };
        assert_ne!(m.predict(&batch).unwrap(), m.predict(&swapped).unwrap());
    }
}
