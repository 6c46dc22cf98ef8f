//! 5×5 convolution with fixed zero padding of 2.
//!
//! Implemented as im2col followed by a small gemm. Kernel taps that fall
//! entirely into the padding for every output position are dropped from the
//! column matrix, which matters for the last layers of the network where the
//! feature map is 2×2 or 1×1 and only a handful of the 25 taps ever touch data.

use rayon::prelude::*;

use super::{axpy, dot, shape_err, KernelError, NdArray, Real};

pub const KERNEL_SIZE: usize = 5;
pub const PADDING: usize = 2;

/// Output length along one spatial axis: `floor((len + 2·2 − 5) / stride) + 1`.
pub fn conv_output_len(len: usize, stride: usize) -> usize {
    assert!(stride >= 1, "stride must be at least 1");
    (len + 2 * PADDING - KERNEL_SIZE) / stride + 1
}

/// Everything the backward pass needs from the forward pass.
#[derive(Clone, Debug)]
pub struct Conv2dCache<T> {
    input_shape: [usize; 4],
    out_h: usize,
    out_w: usize,
    stride: usize,
    cout: usize,
    taps_y: Vec<usize>,
    taps_x: Vec<usize>,
    /// One column matrix per sample, `[k_active, out_h·out_w]`.
    cols: Vec<Vec<T>>,
    /// Weights gathered onto the active taps, `[cout, k_active]`.
    gathered: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub input: NdArray<T>,
    pub weight: NdArray<T>,
    pub bias: NdArray<T>,
}

/// Kernel offsets along one axis that hit real data for at least one output.
fn active_taps(len: usize, out_len: usize, stride: usize) -> Vec<usize> {
    (0..KERNEL_SIZE)
        .filter(|&k| {
            (0..out_len).any(|o| {
                let i = (o * stride + k) as isize - PADDING as isize;
                i >= 0 && (i as usize) < len
            })
        })
        .collect()
}

#[inline]
fn source_index(o: usize, k: usize, stride: usize, len: usize) -> Option<usize> {
    let i = (o * stride + k) as isize - PADDING as isize;
    (i >= 0 && (i as usize) < len).then_some(i as usize)
}

pub fn conv2d_forward<T: Real>(
    input: &NdArray<T>,
    weight: &NdArray<T>,
    bias: &NdArray<T>,
    stride: usize,
) -> Result<(NdArray<T>, Conv2dCache<T>), KernelError> {
    if stride == 0 {
        return Err(KernelError::Config("convolution stride must be >= 1".into()));
    }
    if input.rank() != 4 {
        return Err(shape_err(
            "conv2d",
            format!("input must be [N,Cin,H,W], got {:?}", input.shape()),
        ));
    }
    if weight.rank() != 4 || weight.dim(2) != KERNEL_SIZE || weight.dim(3) != KERNEL_SIZE {
        return Err(shape_err(
            "conv2d",
            format!("weights must be [Cout,Cin,5,5], got {:?}", weight.shape()),
        ));
    }
    let (n, cin, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let cout = weight.dim(0);
    if weight.dim(1) != cin {
        return Err(shape_err(
            "conv2d",
            format!(
                "input has Cin={cin} but weights expect Cin={} (weights {:?})",
                weight.dim(1),
                weight.shape()
            ),
        ));
    }
    if bias.shape() != [cout] {
        return Err(shape_err(
            "conv2d",
            format!("bias must be [{cout}], got {:?}", bias.shape()),
        ));
    }
    if h == 0 || w == 0 {
        return Err(shape_err("conv2d", "empty spatial extent"));
    }

    let out_h = conv_output_len(h, stride);
    let out_w = conv_output_len(w, stride);
    let plane = out_h * out_w;
    let taps_y = active_taps(h, out_h, stride);
    let taps_x = active_taps(w, out_w, stride);
    let k_active = cin * taps_y.len() * taps_x.len();

    let wd = weight.data();
    let mut gathered = vec![T::zero(); cout * k_active];
    for co in 0..cout {
        let mut r = 0;
        for ci in 0..cin {
            for &ky in &taps_y {
                for &kx in &taps_x {
                    gathered[co * k_active + r] =
                        wd[((co * cin + ci) * KERNEL_SIZE + ky) * KERNEL_SIZE + kx];
                    r += 1;
                }
            }
        }
    }

    let mut output = NdArray::zeros(&[n, cout, out_h, out_w]);
    let mut cols: Vec<Vec<T>> = vec![Vec::new(); n];
    output
        .data_mut()
        .par_chunks_mut(cout * plane)
        .zip(cols.par_iter_mut())
        .enumerate()
        .for_each(|(s, (out, col))| {
            let x = input.outer(s);
            *col = im2col(x, cin, h, w, out_h, out_w, stride, &taps_y, &taps_x);
            for co in 0..cout {
                let row = &mut out[co * plane..(co + 1) * plane];
                row.fill(bias.data()[co]);
                let wrow = &gathered[co * k_active..(co + 1) * k_active];
                if plane == 1 {
                    row[0] += dot(wrow, col);
                } else {
                    for (r, &wv) in wrow.iter().enumerate() {
                        axpy(row, wv, &col[r * plane..(r + 1) * plane]);
                    }
                }
            }
        });

    let cache = Conv2dCache {
        input_shape: [n, cin, h, w],
        out_h,
        out_w,
        stride,
        cout,
        taps_y,
        taps_x,
        cols,
        gathered,
    };
    Ok((output, cache))
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    taps_y: &[usize],
    taps_x: &[usize],
) -> Vec<T> {
    let plane = out_h * out_w;
    let rows = cin * taps_y.len() * taps_x.len();
    let mut col = vec![T::zero(); rows * plane];
    let mut r = 0;
    for ci in 0..cin {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        for &ky in taps_y {
            for &kx in taps_x {
                let dst = &mut col[r * plane..(r + 1) * plane];
                for oy in 0..out_h {
                    let Some(iy) = source_index(oy, ky, stride, h) else {
                        continue;
                    };
                    for ox in 0..out_w {
                        if let Some(ix) = source_index(ox, kx, stride, w) {
                            dst[oy * out_w + ox] = xc[iy * w + ix];
                        }
                    }
                }
                r += 1;
            }
        }
    }
    col
}

pub fn conv2d_backward<T: Real>(
    cache: &Conv2dCache<T>,
    grad_out: &NdArray<T>,
) -> Result<Conv2dGrads<T>, KernelError> {
    conv2d_backward_select(cache, grad_out, true)
}

/// Like [`conv2d_backward`], but leaves `input` empty when `need_input` is
/// false (the first layer of a network never needs it during training).
pub fn conv2d_backward_select<T: Real>(
    cache: &Conv2dCache<T>,
    grad_out: &NdArray<T>,
    need_input: bool,
) -> Result<Conv2dGrads<T>, KernelError> {
    let [n, cin, h, w] = cache.input_shape;
    let cout = cache.cout;
    let plane = cache.out_h * cache.out_w;
    if grad_out.shape() != [n, cout, cache.out_h, cache.out_w] {
        return Err(shape_err(
            "conv2d_backward",
            format!(
                "gradient shape {:?} does not match output [{n},{cout},{},{}]",
                grad_out.shape(),
                cache.out_h,
                cache.out_w
            ),
        ));
    }
    let nty = cache.taps_y.len();
    let ntx = cache.taps_x.len();
    let k_active = cin * nty * ntx;

    let mut grad_bias = NdArray::zeros(&[cout]);
    for (co, gb) in grad_bias.data_mut().iter_mut().enumerate() {
        let mut acc = T::zero();
        for s in 0..n {
            let g = &grad_out.outer(s)[co * plane..(co + 1) * plane];
            acc += g.iter().copied().sum::<T>();
        }
        *gb = acc;
    }

    // Weight gradient on the active taps; each row is owned by one task and
    // summed over samples in order.
    let mut gathered_grad = vec![T::zero(); cout * k_active];
    gathered_grad
        .par_chunks_mut(k_active)
        .enumerate()
        .for_each(|(co, row)| {
            for s in 0..n {
                let g = &grad_out.outer(s)[co * plane..(co + 1) * plane];
                let col = &cache.cols[s];
                for (r, acc) in row.iter_mut().enumerate() {
                    *acc += dot(g, &col[r * plane..(r + 1) * plane]);
                }
            }
        });
    let mut grad_weight = NdArray::zeros(&[cout, cin, KERNEL_SIZE, KERNEL_SIZE]);
    {
        let gw = grad_weight.data_mut();
        for co in 0..cout {
            let mut r = 0;
            for ci in 0..cin {
                for &ky in &cache.taps_y {
                    for &kx in &cache.taps_x {
                        gw[((co * cin + ci) * KERNEL_SIZE + ky) * KERNEL_SIZE + kx] =
                            gathered_grad[co * k_active + r];
                        r += 1;
                    }
                }
            }
        }
    }

    if !need_input {
        return Ok(Conv2dGrads {
            input: NdArray::zeros(&[0]),
            weight: grad_weight,
            bias: grad_bias,
        });
    }
    let mut grad_input = NdArray::zeros(&[n, cin, h, w]);
    let stride = cache.stride;
    let (out_h, out_w) = (cache.out_h, cache.out_w);
    grad_input
        .data_mut()
        .par_chunks_mut(cin * h * w)
        .enumerate()
        .for_each(|(s, dx)| {
            let g = grad_out.outer(s);
            let mut dcol = vec![T::zero(); k_active * plane];
            for co in 0..cout {
                let grow = &g[co * plane..(co + 1) * plane];
                let wrow = &cache.gathered[co * k_active..(co + 1) * k_active];
                for (r, &wv) in wrow.iter().enumerate() {
                    axpy(&mut dcol[r * plane..(r + 1) * plane], wv, grow);
                }
            }
            let mut r = 0;
            for ci in 0..cin {
                let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
                for &ky in &cache.taps_y {
                    for &kx in &cache.taps_x {
                        let src = &dcol[r * plane..(r + 1) * plane];
                        for oy in 0..out_h {
                            let Some(iy) = source_index(oy, ky, stride, h) else {
                                continue;
                            };
                            for ox in 0..out_w {
                                if let Some(ix) = source_index(ox, kx, stride, w) {
                                    dxc[iy * w + ix] += src[oy * out_w + ox];
                                }
                            }
                        }
                        r += 1;
                    }
                }
            }
        });

    Ok(Conv2dGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> NdArray<f64> {
        let len = shape.iter().product();
        NdArray::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Naive direct convolution, used as an independent reference.
    fn direct(x: &NdArray<f64>, w: &NdArray<f64>, b: &NdArray<f64>, stride: usize) -> NdArray<f64> {
        let (n, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let cout = w.dim(0);
        let (oh, ow) = (conv_output_len(h, stride), conv_output_len(wd, stride));
        let mut out = NdArray::zeros(&[n, cout, oh, ow]);
        for s in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[co];
                        for ci in 0..cin {
                            for ky in 0..5 {
                                for kx in 0..5 {
                                    let iy = (oy * stride + ky) as isize - 2;
                                    let ix = (ox * stride + kx) as isize - 2;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((s * cin + ci) * h + iy as usize) * wd
                                        + ix as usize]
                                        * w.data()[((co * cin + ci) * 5 + ky) * 5 + kx];
                                }
                            }
                        }
                        out.data_mut()[((s * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_center_value() {
        let x = NdArray::<f64>::full(&[1, 1, 5, 5], 1.0);
        let mut w = NdArray::zeros(&[1, 1, 5, 5]);
        w.data_mut()[12] = 1.0;
        let b = NdArray::zeros(&[1]);
        let (y, _) = conv2d_forward(&x, &w, &b, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        assert_eq!(y.data()[12], 1.0);
    }

    #[test]
    fn stride_two_halves_eight() {
        let x = NdArray::<f32>::zeros(&[1, 1, 8, 8]);
        let w = NdArray::zeros(&[3, 1, 5, 5]);
        let b = NdArray::zeros(&[3]);
        let (y, _) = conv2d_forward(&x, &w, &b, 2).unwrap();
        assert_eq!(y.shape(), &[1, 3, 4, 4]);
    }

    #[test]
    fn channel_mismatch_names_dims() {
        let x = NdArray::<f32>::zeros(&[1, 3, 8, 8]);
        let w = NdArray::zeros(&[2, 4, 5, 5]);
        let b = NdArray::zeros(&[2]);
        let err = conv2d_forward(&x, &w, &b, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Cin=3") && msg.contains("Cin=4"), "{msg}");
    }

    #[test]
    fn matches_direct_convolution_on_tiny_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(h, w, stride) in &[(1, 1, 2), (2, 2, 2), (3, 5, 2), (7, 4, 1), (12, 12, 2)] {
            let x = random(&[2, 3, h, w], &mut rng);
            let wt = random(&[4, 3, 5, 5], &mut rng);
            let b = random(&[4], &mut rng);
            let (y, _) = conv2d_forward(&x, &wt, &b, stride).unwrap();
            let r = direct(&x, &wt, &b, stride);
            for (a, e) in y.data().iter().zip(r.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[2, 3, 12, 12], &mut rng);
        let w = random(&[4, 3, 5, 5], &mut rng);
        let b = random(&[4], &mut rng);
        let probe = random(&[2, 4, 6, 6], &mut rng);
        let loss = |x: &NdArray<f64>, w: &NdArray<f64>, b: &NdArray<f64>| {
            let (y, _) = conv2d_forward(x, w, b, 2).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum::<f64>()
        };
        let (_, cache) = conv2d_forward(&x, &w, &b, 2).unwrap();
        let grads = conv2d_backward(&cache, &probe).unwrap();
        let eps = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for i in (0..x.len()).step_by(7) {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += eps;
            xm.data_mut()[i] -= eps;
            let num = (loss(&xp, &w, &b) - loss(&xm, &w, &b)) / (2.0 * eps);
            assert!(rel(grads.input.data()[i], num) < 1e-4, "input {i}");
        }
        for i in (0..w.len()).step_by(5) {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp.data_mut()[i] += eps;
            wm.data_mut()[i] -= eps;
            let num = (loss(&x, &wp, &b) - loss(&x, &wm, &b)) / (2.0 * eps);
            assert!(rel(grads.weight.data()[i], num) < 1e-4, "weight {i}");
        }
        for i in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp.data_mut()[i] += eps;
            bm.data_mut()[i] -= eps;
            let num = (loss(&x, &w, &bp) - loss(&x, &w, &bm)) / (2.0 * eps);
            assert!(rel(grads.bias.data()[i], num) < 1e-4, "bias {i}");
        }
    }

    proptest! {
        #[test]
        fn output_shape_obeys_floor_formula(h in 1usize..40, w in 1usize..40, stride in 1usize..4) {
            let x = NdArray::<f32>::zeros(&[1, 1, h, w]);
            let wt = NdArray::zeros(&[2, 1, 5, 5]);
            let b = NdArray::zeros(&[2]);
            let (y, _) = conv2d_forward(&x, &wt, &b, stride).unwrap();
            prop_assert_eq!(y.dim(2), (h + 4 - 5) / stride + 1);
            prop_assert_eq!(y.dim(3), (w + 4 - 5) / stride + 1);
        }
    }
}
