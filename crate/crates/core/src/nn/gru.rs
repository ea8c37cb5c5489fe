//! Gated recurrent unit layer, batched over samples.
//!
//! Row-vector convention: a batch of inputs is a `B × d_in` matrix and every
//! gate is `x W + h U + b`.

use rand::Rng;

use super::init::xavier_uniform;
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer<T> {
    pub w_z: Tensor2<T>,
    pub w_r: Tensor2<T>,
    pub w_h: Tensor2<T>,
    pub u_z: Tensor2<T>,
    pub u_r: Tensor2<T>,
    pub u_h: Tensor2<T>,
    pub b_z: Tensor2<T>,
    pub b_r: Tensor2<T>,
    pub b_h: Tensor2<T>,
}

/// Activations of one layer over a sequence, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    inputs: Vec<Tensor2<T>>,
    h_prev: Vec<Tensor2<T>>,
    z: Vec<Tensor2<T>>,
    r: Vec<Tensor2<T>>,
    rh: Vec<Tensor2<T>>,
    candidate: Vec<Tensor2<T>>,
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> GruLayer<T> {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        Self {
            w_z: Tensor2::zeros(d_in, d_h),
            w_r: Tensor2::zeros(d_in, d_h),
            w_h: Tensor2::zeros(d_in, d_h),
            u_z: Tensor2::zeros(d_h, d_h),
            u_r: Tensor2::zeros(d_h, d_h),
            u_h: Tensor2::zeros(d_h, d_h),
            b_z: Tensor2::zeros(1, d_h),
            b_r: Tensor2::zeros(1, d_h),
            b_h: Tensor2::zeros(1, d_h),
        }
    }

    pub fn xavier<R: Rng + ?Sized>(d_in: usize, d_h: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(d_in, d_h);
        for w in [&mut layer.w_z, &mut layer.w_r, &mut layer.w_h, &mut layer.u_z, &mut layer.u_r, &mut layer.u_h]
        {
            xavier_uniform(w, rng);
        }
        layer
    }

    pub fn d_in(&self) -> usize {
        self.w_z.rows()
    }

    pub fn d_h(&self) -> usize {
        self.w_z.cols()
    }

    pub(crate) fn tensors(&self) -> [(&'static str, &Tensor2<T>); 9] {
        [
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor2<T>); 9] {
        [
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ]
    }

    /// One recurrence step for a batch: returns `(h_t, z, r, r ⊙ h, h̃)`.
    fn step(&self, x: &Tensor2<T>, h: &Tensor2<T>) -> [Tensor2<T>; 5] {
        let batch = x.rows();
        let d_h = self.d_h();
        let gate = |w: &Tensor2<T>, u: &Tensor2<T>, hh: &Tensor2<T>, b: &Tensor2<T>| {
            let mut a = Tensor2::zeros(batch, d_h);
            a.gemm(T::one(), x, false, w, false, T::zero());
            a.gemm(T::one(), hh, false, u, false, T::one());
            a.add_row(b.data());
            a
        };
        let z = gate(&self.w_z, &self.u_z, h, &self.b_z).map(sigmoid);
        let r = gate(&self.w_r, &self.u_r, h, &self.b_r).map(sigmoid);
        let mut rh = r.clone();
        for (v, &hv) in rh.data_mut().iter_mut().zip(h.data()) {
            *v *= hv;
        }
        let cand = gate(&self.w_h, &self.u_h, &rh, &self.b_h).map(|v| v.tanh());
        let mut out = Tensor2::zeros(batch, d_h);
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            let zi = z.data()[i];
            *o = (T::one() - zi) * h.data()[i] + zi * cand.data()[i];
        }
        [out, z, r, rh, cand]
    }

    /// Single-sample cell: `h_t` from `x_t` and `h_{t-1}`.
    pub fn cell(&self, x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
        if x.len() != self.d_in() || h_prev.len() != self.d_h() {
            return Err(Error::Shape(format!(
                "gru cell expects x[{}], h[{}]; got x[{}], h[{}]",
                self.d_in(),
                self.d_h(),
                x.len(),
                h_prev.len()
            )));
        }
        let x = Tensor2::from_vec(1, x.len(), x.to_vec())?;
        let h = Tensor2::from_vec(1, h_prev.len(), h_prev.to_vec())?;
        let [out, ..] = self.step(&x, &h);
        Ok(out.into_data())
    }

    /// Runs the layer over `inputs[t]` (each `B × d_in`) from a zero state.
    pub fn forward(&self, inputs: &[Tensor2<T>], keep_cache: bool) -> (Vec<Tensor2<T>>, Option<GruCache<T>>) {
        let batch = inputs.first().map_or(0, |x| x.rows());
        let mut h = Tensor2::zeros(batch, self.d_h());
        let mut outs = Vec::with_capacity(inputs.len());
        let mut cache = keep_cache.then(|| GruCache {
            inputs: Vec::with_capacity(inputs.len()),
            h_prev: Vec::with_capacity(inputs.len()),
            z: Vec::with_capacity(inputs.len()),
            r: Vec::with_capacity(inputs.len()),
            rh: Vec::with_capacity(inputs.len()),
            candidate: Vec::with_capacity(inputs.len()),
        });
        for x in inputs {
            let [next, z, r, rh, cand] = self.step(x, &h);
            if let Some(c) = cache.as_mut() {
                c.inputs.push(x.clone());
                c.h_prev.push(h.clone());
                c.z.push(z);
                c.r.push(r);
                c.rh.push(rh);
                c.candidate.push(cand);
            }
            outs.push(next.clone());
            h = next;
        }
        (outs, cache)
    }

    /// Backpropagation through time. `d_outs[t]` is dL/dh_t from the layer above;
    /// gradients accumulate into `grads`; returns dL/dx_t.
    pub fn backward(&self, cache: &GruCache<T>, d_outs: &[Tensor2<T>], grads: &mut GruLayer<T>) -> Vec<Tensor2<T>> {
        let steps = cache.inputs.len();
        let batch = cache.inputs.first().map_or(0, |x| x.rows());
        let d_h = self.d_h();
        let mut d_inputs = vec![Tensor2::zeros(0, 0); steps];
        let mut d_h_next = Tensor2::zeros(batch, d_h);
        for t in (0..steps).rev() {
            let mut d_h_t = d_outs[t].clone();
            d_h_t.add_assign(&d_h_next);

            let (z, r, cand, h_prev) = (&cache.z[t], &cache.r[t], &cache.candidate[t], &cache.h_prev[t]);
            let n = batch * d_h;
            let mut da_h = Tensor2::zeros(batch, d_h);
            let mut da_z = Tensor2::zeros(batch, d_h);
            let mut d_prev = Tensor2::zeros(batch, d_h);
            for i in 0..n {
                let g = d_h_t.data()[i];
                let zi = z.data()[i];
                let ci = cand.data()[i];
                let hp = h_prev.data()[i];
                da_h.data_mut()[i] = g * zi * (T::one() - ci * ci);
                da_z.data_mut()[i] = g * (ci - hp) * zi * (T::one() - zi);
                d_prev.data_mut()[i] = g * (T::one() - zi);
            }

            // candidate path: a_h = x W_h + (r ⊙ h) U_h + b_h
            let x = &cache.inputs[t];
            grads.w_h.gemm(T::one(), x, true, &da_h, false, T::one());
            grads.u_h.gemm(T::one(), &cache.rh[t], true, &da_h, false, T::one());
            da_h.sum_rows_into(grads.b_h.data_mut());
            let d_rh = Tensor2::matmul_nt(&da_h, &self.u_h);

            let mut da_r = Tensor2::zeros(batch, d_h);
            for i in 0..n {
                let ri = r.data()[i];
                let hp = h_prev.data()[i];
                let g = d_rh.data()[i];
                d_prev.data_mut()[i] += g * ri;
                da_r.data_mut()[i] = g * hp * ri * (T::one() - ri);
            }

            grads.w_r.gemm(T::one(), x, true, &da_r, false, T::one());
            grads.u_r.gemm(T::one(), h_prev, true, &da_r, false, T::one());
            da_r.sum_rows_into(grads.b_r.data_mut());
            grads.w_z.gemm(T::one(), x, true, &da_z, false, T::one());
            grads.u_z.gemm(T::one(), h_prev, true, &da_z, false, T::one());
            da_z.sum_rows_into(grads.b_z.data_mut());

            d_prev.gemm(T::one(), &da_r, false, &self.u_r, true, T::one());
            d_prev.gemm(T::one(), &da_z, false, &self.u_z, true, T::one());

            let mut dx = Tensor2::matmul_nt(&da_h, &self.w_h);
            dx.gemm(T::one(), &da_r, false, &self.w_r, true, T::one());
            dx.gemm(T::one(), &da_z, false, &self.w_z, true, T::one());
            d_inputs[t] = dx;
            d_h_next = d_prev;
        }
        d_inputs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_halve_the_previous_state() {
        let layer = GruLayer::<f64>::zeros(3, 4);
        let h = layer.cell(&[1.0, -2.0, 0.5], &[2.0, -4.0, 1.0, 8.0]).unwrap();
        assert_eq!(h, vec![1.0, -2.0, 0.5, 4.0]);
        let h0 = layer.cell(&[1.0, 1.0, 1.0], &[0.0; 4]).unwrap();
        assert_eq!(h0, vec![0.0; 4]);
    }

    #[test]
    fn cell_rejects_wrong_shapes() {
        let layer = GruLayer::<f64>::zeros(3, 4);
        assert!(layer.cell(&[1.0; 2], &[0.0; 4]).is_err());
        assert!(layer.cell(&[1.0; 3], &[0.0; 5]).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }

    #[test]
    fn batched_sequence_matches_repeated_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = GruLayer::<f64>::xavier(3, 5, &mut rng);
        let xs: Vec<Tensor2<f64>> =
            (0..4).map(|t| Tensor2::from_fn(2, 3, |b, j| ((t + 1) * (b + 2) * (j + 1)) as f64 * 0.07 - 0.3)).collect();
        let (outs, _) = layer.forward(&xs, false);
        for b in 0..2 {
            let mut h = vec![0.0; 5];
            for t in 0..4 {
                h = layer.cell(xs[t].row(b), &h).unwrap();
                for (a, e) in outs[t].row(b).iter().zip(&h) {
                    assert!((a - e).abs() < 1e-14);
                }
            }
        }
    }
}
