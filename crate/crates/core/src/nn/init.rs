use rand::{Rng, RngCore};

use super::tensor::Tensor2;
use crate::scalar::Scalar;

/// Fills `w` from U(-a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Scalar, R: Rng + ?Sized>(w: &mut Tensor2<T>, rng: &mut R) {
    let limit = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
    for v in w.data_mut() {
        *v = T::c(rng.random_range(-limit..limit));
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask<T: Scalar>(rows: usize, cols: usize, p: f64, rng: &mut dyn RngCore) -> Tensor2<T> {
    let keep = T::c(1.0 / (1.0 - p));
    Tensor2::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p { T::zero() } else { keep })
}

pub(crate) fn apply_mask<T: Scalar>(x: &mut Tensor2<T>, mask: &Tensor2<T>) {
    for (v, &m) in x.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
}
