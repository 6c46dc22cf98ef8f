use super::{axpy, dot, shape_err, KernelError, NdArray, Real};

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: NdArray<T>,
    pub weight: NdArray<T>,
    pub bias: NdArray<T>,
}

fn check<T: Real>(
    input: &NdArray<T>,
    weight: &NdArray<T>,
) -> Result<(usize, usize, usize), KernelError> {
    if input.rank() != 2 || weight.rank() != 2 {
        return Err(shape_err(
            "dense",
            format!("expected [N,Fin] and [Fout,Fin], got {:?} and {:?}", input.shape(), weight.shape()),
        ));
    }
    let (n, fin, fout) = (input.dim(0), input.dim(1), weight.dim(0));
    if weight.dim(1) != fin {
        return Err(shape_err(
            "dense",
            format!("input width {fin} does not match weights {:?}", weight.shape()),
        ));
    }
    Ok((n, fin, fout))
}

/// `out[n,o] = bias[o] + Σ_i weight[o,i]·input[n,i]`
pub fn dense_forward<T: Real>(
    input: &NdArray<T>,
    weight: &NdArray<T>,
    bias: &NdArray<T>,
) -> Result<NdArray<T>, KernelError> {
    let (n, fin, fout) = check(input, weight)?;
    if bias.shape() != [fout] {
        return Err(shape_err(
            "dense",
            format!("bias must be [{fout}], got {:?}", bias.shape()),
        ));
    }
    let mut out = NdArray::zeros(&[n, fout]);
    for s in 0..n {
        let x = input.outer(s);
        let row = out.outer_mut(s);
        for o in 0..fout {
            row[o] = bias.data()[o] + dot(&weight.data()[o * fin..(o + 1) * fin], x);
        }
    }
    Ok(out)
}

pub fn dense_backward<T: Real>(
    input: &NdArray<T>,
    weight: &NdArray<T>,
    grad_out: &NdArray<T>,
) -> Result<DenseGrads<T>, KernelError> {
    let (n, fin, fout) = check(input, weight)?;
    if grad_out.shape() != [n, fout] {
        return Err(shape_err(
            "dense_backward",
            format!("gradient must be [{n},{fout}], got {:?}", grad_out.shape()),
        ));
    }
    let mut gw = NdArray::zeros(&[fout, fin]);
    let mut gb = NdArray::zeros(&[fout]);
    let mut gx = NdArray::zeros(&[n, fin]);
    for s in 0..n {
        let g = grad_out.outer(s);
        let x = input.outer(s);
        for o in 0..fout {
            gb.data_mut()[o] += g[o];
            axpy(&mut gw.data_mut()[o * fin..(o + 1) * fin], g[o], x);
        }
        let dx = gx.outer_mut(s);
        for o in 0..fout {
            axpy(dx, g[o], &weight.data()[o * fin..(o + 1) * fin]);
        }
    }
    Ok(DenseGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_copy_input() {
        let x = NdArray::<f64>::from_vec(&[2, 3], vec![1., -2., 3., 0.5, 0.0, -7.]).unwrap();
        let mut w = NdArray::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let y = dense_forward(&x, &w, &NdArray::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_weights_emit_bias() {
        let x = NdArray::<f64>::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = NdArray::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = dense_forward(&x, &NdArray::zeros(&[3, 2]), &b).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn width_mismatch_is_a_config_error() {
        let x = NdArray::<f32>::zeros(&[1, 4]);
        assert!(matches!(
            dense_forward(&x, &NdArray::zeros(&[2, 3]), &NdArray::zeros(&[2])),
            Err(KernelError::Shape { .. })
        ));
    }
}
