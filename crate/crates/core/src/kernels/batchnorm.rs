use rayon::prelude::*;

use super::{shape_err, KernelError, NdArray, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    /// Added to the variance before the square root.
    pub eps: f64,
    /// Weight of the current batch in the running-stat update.
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Per-channel running mean and (unbiased) variance used in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: NdArray<T>,
    pub var: NdArray<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: NdArray::zeros(&[channels]),
            var: NdArray::full(&[channels], T::one()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    xhat: NdArray<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub input: NdArray<T>,
    pub gamma: NdArray<T>,
    pub beta: NdArray<T>,
}

/// Iterates the `H·W` plane of channel `c` for every sample.
fn planes<T>(data: &[T], n: usize, c: usize, channels: usize, plane: usize) -> impl Iterator<Item = &[T]> {
    (0..n).map(move |s| &data[(s * channels + c) * plane..(s * channels + c + 1) * plane])
}

pub fn batch_norm_forward<T: Real>(
    input: &NdArray<T>,
    gamma: &NdArray<T>,
    beta: &NdArray<T>,
    running: &mut RunningStats<T>,
    mode: Mode,
    cfg: &BatchNormConfig,
) -> Result<(NdArray<T>, BatchNormCache<T>), KernelError> {
    if input.rank() != 4 {
        return Err(shape_err(
            "batch_norm",
            format!("input must be [N,C,H,W], got {:?}", input.shape()),
        ));
    }
    let (n, c, plane) = (input.dim(0), input.dim(1), input.dim(2) * input.dim(3));
    for (what, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running mean", &running.mean),
        ("running var", &running.var),
    ] {
        if t.shape() != [c] {
            return Err(shape_err(
                "batch_norm",
                format!("{what} must be [{c}], got {:?}", t.shape()),
            ));
        }
    }
    let count = n * plane;
    if mode == Mode::Train && count < 2 {
        return Err(KernelError::BatchTooSmall { count });
    }

    // Per-channel statistics, accumulated in f64 in a fixed order.
    let stats: Vec<(f64, f64)> = match mode {
        Mode::Train => (0..c)
            .into_par_iter()
            .map(|ch| {
                let mut sum = 0.0;
                for p in planes(input.data(), n, ch, c, plane) {
                    sum += p.iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut sq = 0.0;
                for p in planes(input.data(), n, ch, c, plane) {
                    sq += p
                        .iter()
                        .map(|v| {
                            let d = v.as_f64() - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                (mean, sq / count as f64)
            })
            .collect(),
        Mode::Eval => (0..c)
            .map(|ch| (running.mean.data()[ch].as_f64(), running.var.data()[ch].as_f64()))
            .collect(),
    };

    let inv_std: Vec<T> = stats
        .iter()
        .map(|&(_, var)| T::lit(1.0 / (var + cfg.eps).sqrt()))
        .collect();

    let mut xhat = NdArray::zeros(input.shape());
    let mut out = NdArray::zeros(input.shape());
    {
        let xd = input.data();
        let xh = xhat.data_mut();
        let od = out.data_mut();
        for s in 0..n {
            for ch in 0..c {
                let mean = T::lit(stats[ch].0);
                let (g, b, is) = (gamma.data()[ch], beta.data()[ch], inv_std[ch]);
                let off = (s * c + ch) * plane;
                for i in off..off + plane {
                    let v = (xd[i] - mean) * is;
                    xh[i] = v;
                    od[i] = g * v + b;
                }
            }
        }
    }

    if mode == Mode::Train {
        let m = cfg.momentum;
        let unbias = count as f64 / (count - 1) as f64;
        for ch in 0..c {
            let rm = &mut running.mean.data_mut()[ch];
            *rm = T::lit((1.0 - m) * rm.as_f64() + m * stats[ch].0);
            let rv = &mut running.var.data_mut()[ch];
            *rv = T::lit((1.0 - m) * rv.as_f64() + m * stats[ch].1 * unbias);
        }
    }

    Ok((out, BatchNormCache { xhat, inv_std, mode }))
}

pub fn batch_norm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &NdArray<T>,
    grad_out: &NdArray<T>,
) -> Result<BatchNormGrads<T>, KernelError> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(shape_err(
            "batch_norm_backward",
            format!("{:?} vs {:?}", grad_out.shape(), cache.xhat.shape()),
        ));
    }
    let shape = cache.xhat.shape();
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let count = (n * plane) as f64;

    let mut sums = vec![(0.0f64, 0.0f64); c];
    sums.par_iter_mut().enumerate().for_each(|(ch, acc)| {
        let gp = planes(grad_out.data(), n, ch, c, plane);
        let xp = planes(cache.xhat.data(), n, ch, c, plane);
        for (g, x) in gp.zip(xp) {
            for (gv, xv) in g.iter().zip(x) {
                acc.0 += gv.as_f64();
                acc.1 += gv.as_f64() * xv.as_f64();
            }
        }
    });

    let grad_beta = NdArray::from_vec(&[c], sums.iter().map(|s| T::lit(s.0)).collect())?;
    let grad_gamma = NdArray::from_vec(&[c], sums.iter().map(|s| T::lit(s.1)).collect())?;

    let mut grad_input = NdArray::zeros(shape);
    {
        let gi = grad_input.data_mut();
        let go = grad_out.data();
        let xh = cache.xhat.data();
        for s in 0..n {
            for ch in 0..c {
                let scale = gamma.data()[ch] * cache.inv_std[ch];
                let off = (s * c + ch) * plane;
                match cache.mode {
                    Mode::Train => {
                        let mean_g = T::lit(sums[ch].0 / count);
                        let mean_gx = T::lit(sums[ch].1 / count);
                        for i in off..off + plane {
                            gi[i] = scale * (go[i] - mean_g - xh[i] * mean_gx);
                        }
                    }
                    Mode::Eval => {
                        for i in off..off + plane {
                            gi[i] = scale * go[i];
                        }
                    }
                }
            }
        }
    }

    Ok(BatchNormGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
