use super::{NdArray, Real};

/// Role of a parameter inside a layer. Only [`ParamKind::Weight`] entries
/// carry the weight-decay penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Batch-norm gamma.
    Scale,
    /// Batch-norm beta.
    Shift,
}

/// A trainable tensor together with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: NdArray<T>,
    pub grad: NdArray<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: NdArray<T>) -> Self {
        let grad = NdArray::zeros(value.shape());
        Self {
            name: name.into(),
            kind,
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn decays(&self) -> bool {
        self.kind == ParamKind::Weight
    }

    pub(crate) fn accumulate(&mut self, g: &NdArray<T>) {
        debug_assert_eq!(g.shape(), self.grad.shape());
        for (a, b) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *a += *b;
        }
    }
}
