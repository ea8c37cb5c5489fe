//! Transformer encoder block over GRU hidden states: multi-head scaled
//! dot-product self-attention, output projection, residual + layer norm,
//! position-wise ReLU feed-forward, residual + layer norm.

use rand::{Rng, RngCore};

use super::init::{apply_mask, dropout_mask, xavier_uniform};
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock<T> {
    pub n_heads: usize,
    pub w_q: Tensor2<T>,
    pub w_k: Tensor2<T>,
    pub w_v: Tensor2<T>,
    pub w_o: Tensor2<T>,
    pub ff_w1: Tensor2<T>,
    pub ff_b1: Tensor2<T>,
    pub ff_w2: Tensor2<T>,
    pub ff_b2: Tensor2<T>,
    pub ln1_g: Tensor2<T>,
    pub ln1_b: Tensor2<T>,
    pub ln2_g: Tensor2<T>,
    pub ln2_b: Tensor2<T>,
}

#[derive(Debug, Clone)]
struct NormCache<T> {
    xhat: Tensor2<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    seq_len: usize,
    x: Tensor2<T>,
    q: Tensor2<T>,
    k: Tensor2<T>,
    v: Tensor2<T>,
    /// Softmax matrices indexed `sample * n_heads + head`, each `T × T`.
    probs: Vec<Tensor2<T>>,
    concat: Tensor2<T>,
    attn_mask: Option<Tensor2<T>>,
    ln1: NormCache<T>,
    y1: Tensor2<T>,
    ff_pre: Tensor2<T>,
    ff_act: Tensor2<T>,
    ff_mask: Option<Tensor2<T>>,
    ln2: NormCache<T>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn layer_norm<T: Scalar>(x: &Tensor2<T>, g: &[T], b: &[T]) -> (Tensor2<T>, NormCache<T>) {
    let (rows, cols) = x.shape();
    let n = T::c(cols as f64);
    let eps = T::c(LAYER_NORM_EPS);
    let mut xhat = Tensor2::zeros(rows, cols);
    let mut y = Tensor2::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        inv_std.push(inv);
        for c in 0..cols {
            let h = (row[c] - mean) * inv;
            xhat.set(r, c, h);
            y.set(r, c, g[c] * h + b[c]);
        }
    }
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward<T: Scalar>(
    dy: &Tensor2<T>,
    cache: &NormCache<T>,
    g: &[T],
    dg: &mut [T],
    db: &mut [T],
) -> Tensor2<T> {
    let (rows, cols) = dy.shape();
    let n = T::c(cols as f64);
    let mut dx = Tensor2::zeros(rows, cols);
    let mut dxhat = vec![T::zero(); cols];
    for r in 0..rows {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        let mut sum = T::zero();
        let mut dot = T::zero();
        for c in 0..cols {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            dxhat[c] = dyr[c] * g[c];
            sum += dxhat[c];
            dot += dxhat[c] * xh[c];
        }
        let scale = cache.inv_std[r] / n;
        let out = dx.row_mut(r);
        for c in 0..cols {
            out[c] = scale * (n * dxhat[c] - sum - xh[c] * dot);
        }
    }
    dx
}

/// Row-wise softmax in place, max-shifted.
pub(crate) fn softmax_rows<T: Scalar>(s: &mut Tensor2<T>) {
    for r in 0..s.rows() {
        let row = s.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl<T: Scalar> EncoderBlock<T> {
    pub fn zeros(d_model: usize, d_ff: usize, n_heads: usize) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(Error::Config(format!("d_model {d_model} is not divisible by {n_heads} heads")));
        }
        let ones = Tensor2::from_fn(1, d_model, |_, _| T::one());
        Ok(Self {
            n_heads,
            w_q: Tensor2::zeros(d_model, d_model),
            w_k: Tensor2::zeros(d_model, d_model),
            w_v: Tensor2::zeros(d_model, d_model),
            w_o: Tensor2::zeros(d_model, d_model),
            ff_w1: Tensor2::zeros(d_model, d_ff),
            ff_b1: Tensor2::zeros(1, d_ff),
            ff_w2: Tensor2::zeros(d_ff, d_model),
            ff_b2: Tensor2::zeros(1, d_model),
            ln1_g: ones.clone(),
            ln1_b: Tensor2::zeros(1, d_model),
            ln2_g: ones,
            ln2_b: Tensor2::zeros(1, d_model),
        })
    }

    pub fn xavier<R: Rng + ?Sized>(d_model: usize, d_ff: usize, n_heads: usize, rng: &mut R) -> Result<Self> {
        let mut block = Self::zeros(d_model, d_ff, n_heads)?;
        for w in [&mut block.w_q, &mut block.w_k, &mut block.w_v, &mut block.w_o, &mut block.ff_w1, &mut block.ff_w2] {
            xavier_uniform(w, rng);
        }
        Ok(block)
    }

    pub fn d_model(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_k(&self) -> usize {
        self.d_model() / self.n_heads
    }

    pub(crate) fn tensors(&self) -> [(&'static str, &Tensor2<T>); 12] {
        [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
            ("ff_w1", &self.ff_w1),
            ("ff_b1", &self.ff_b1),
            ("ff_w2", &self.ff_w2),
            ("ff_b2", &self.ff_b2),
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor2<T>); 12] {
        [
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_o", &mut self.w_o),
            ("ff_w1", &mut self.ff_w1),
            ("ff_b1", &mut self.ff_b1),
            ("ff_w2", &mut self.ff_w2),
            ("ff_b2", &mut self.ff_b2),
            ("ln1_g", &mut self.ln1_g),
            ("ln1_b", &mut self.ln1_b),
            ("ln2_g", &mut self.ln2_g),
            ("ln2_b", &mut self.ln2_b),
        ]
    }

    /// Multi-head self-attention before the output projection: returns the
    /// concatenated head outputs and every softmax matrix.
    fn attend(&self, q: &Tensor2<T>, k: &Tensor2<T>, v: &Tensor2<T>, seq_len: usize) -> (Tensor2<T>, Vec<Tensor2<T>>) {
        let rows = q.rows();
        let samples = rows / seq_len;
        let d_k = self.d_k();
        let scale = T::one() / T::c(d_k as f64).sqrt();
        let mut concat = Tensor2::zeros(rows, self.d_model());
        let mut probs = Vec::with_capacity(samples * self.n_heads);
        for s in 0..samples {
            let base = s * seq_len;
            for h in 0..self.n_heads {
                let off = h * d_k;
                let mut a = Tensor2::from_fn(seq_len, seq_len, |i, j| {
                    let qi = &q.row(base + i)[off..off + d_k];
                    let kj = &k.row(base + j)[off..off + d_k];
                    qi.iter().zip(kj).map(|(&x, &y)| x * y).sum::<T>() * scale
                });
                softmax_rows(&mut a);
                for i in 0..seq_len {
                    let out = &mut concat.row_mut(base + i)[off..off + d_k];
                    for j in 0..seq_len {
                        let w = a.get(i, j);
                        let vj = &v.row(base + j)[off..off + d_k];
                        for (o, &vv) in out.iter_mut().zip(vj) {
                            *o += w * vv;
                        }
                    }
                }
                probs.push(a);
            }
        }
        (concat, probs)
    }

    /// Attention probabilities for inspection, indexed `sample * n_heads + head`.
    pub fn attention_probs(&self, x: &Tensor2<T>, seq_len: usize) -> Vec<Tensor2<T>> {
        let q = Tensor2::matmul(x, &self.w_q);
        let k = Tensor2::matmul(x, &self.w_k);
        let v = Tensor2::matmul(x, &self.w_v);
        self.attend(&q, &k, &v, seq_len).1
    }

    /// `x` stacks `seq_len` rows per sample. Dropout is active iff `rng` is given.
    pub fn forward(
        &self,
        x: &Tensor2<T>,
        seq_len: usize,
        dropout: f64,
        mut rng: Option<&mut dyn RngCore>,
        keep_cache: bool,
    ) -> Result<(Tensor2<T>, Option<EncoderCache<T>>)> {
        if seq_len == 0 || !x.rows().is_multiple_of(seq_len) || x.cols() != self.d_model() {
            return Err(Error::Shape(format!(
                "encoder input {}x{} incompatible with seq_len {seq_len}, d_model {}",
                x.rows(),
                x.cols(),
                self.d_model()
            )));
        }
        let rows = x.rows();
        let q = Tensor2::matmul(x, &self.w_q);
        let k = Tensor2::matmul(x, &self.w_k);
        let v = Tensor2::matmul(x, &self.w_v);
        let (concat, probs) = self.attend(&q, &k, &v, seq_len);
        let mut attn = Tensor2::matmul(&concat, &self.w_o);
        let attn_mask = match rng.as_deref_mut() {
            Some(r) if dropout > 0.0 => Some(dropout_mask(rows, self.d_model(), dropout, r)),
            _ => None,
        };
        if let Some(m) = &attn_mask {
            apply_mask(&mut attn, m);
        }
        attn.add_assign(x);
        let (y1, ln1) = layer_norm(&attn, self.ln1_g.data(), self.ln1_b.data());

        let mut ff_pre = Tensor2::matmul(&y1, &self.ff_w1);
        ff_pre.add_row(self.ff_b1.data());
        let ff_act = ff_pre.map(|v| v.max(T::zero()));
        let mut ff = Tensor2::matmul(&ff_act, &self.ff_w2);
        ff.add_row(self.ff_b2.data());
        let ff_mask = match rng {
            Some(r) if dropout > 0.0 => Some(dropout_mask(rows, self.d_model(), dropout, r)),
            _ => None,
        };
        if let Some(m) = &ff_mask {
            apply_mask(&mut ff, m);
        }
        ff.add_assign(&y1);
        let (y2, ln2) = layer_norm(&ff, self.ln2_g.data(), self.ln2_b.data());

        let cache = keep_cache.then(|| EncoderCache {
            seq_len,
            x: x.clone(),
            q,
            k,
            v,
            probs,
            concat,
            attn_mask,
            ln1,
            y1,
            ff_pre,
            ff_act,
            ff_mask,
            ln2,
        });
        Ok((y2, cache))
    }

    /// Accumulates parameter gradients into `grads`; returns dL/dx.
    pub fn backward(&self, cache: &EncoderCache<T>, dy: &Tensor2<T>, grads: &mut EncoderBlock<T>) -> Tensor2<T> {
        let rows = dy.rows();
        let d_model = self.d_model();
        let d_k = self.d_k();
        let seq_len = cache.seq_len;
        let scale = T::one() / T::c(d_k as f64).sqrt();

        // second residual + norm
        let d_s2 = layer_norm_backward(dy, &cache.ln2, self.ln2_g.data(), grads.ln2_g.data_mut(), grads.ln2_b.data_mut());
        let mut d_y1 = d_s2.clone();
        let mut d_ff = d_s2;
        if let Some(m) = &cache.ff_mask {
            apply_mask(&mut d_ff, m);
        }
        d_ff.sum_rows_into(grads.ff_b2.data_mut());
        grads.ff_w2.gemm(T::one(), &cache.ff_act, true, &d_ff, false, T::one());
        let mut d_act = Tensor2::matmul_nt(&d_ff, &self.ff_w2);
        for (g, &pre) in d_act.data_mut().iter_mut().zip(cache.ff_pre.data()) {
            if pre <= T::zero() {
                *g = T::zero();
            }
        }
        d_act.sum_rows_into(grads.ff_b1.data_mut());
        grads.ff_w1.gemm(T::one(), &cache.y1, true, &d_act, false, T::one());
        d_y1.gemm(T::one(), &d_act, false, &self.ff_w1, true, T::one());

        // first residual + norm
        let d_s1 = layer_norm_backward(&d_y1, &cache.ln1, self.ln1_g.data(), grads.ln1_g.data_mut(), grads.ln1_b.data_mut());
        let mut dx = d_s1.clone();
        let mut d_attn = d_s1;
        if let Some(m) = &cache.attn_mask {
            apply_mask(&mut d_attn, m);
        }
        grads.w_o.gemm(T::one(), &cache.concat, true, &d_attn, false, T::one());
        let d_concat = Tensor2::matmul_nt(&d_attn, &self.w_o);

        let mut dq = Tensor2::zeros(rows, d_model);
        let mut dk = Tensor2::zeros(rows, d_model);
        let mut dv = Tensor2::zeros(rows, d_model);
        let samples = rows / seq_len;
        let mut d_a = Tensor2::<T>::zeros(seq_len, seq_len);
        for s in 0..samples {
            let base = s * seq_len;
            for h in 0..self.n_heads {
                let off = h * d_k;
                let a = &cache.probs[s * self.n_heads + h];
                // dA = dO Vᵀ ; dV = Aᵀ dO
                for i in 0..seq_len {
                    let d_o = &d_concat.row(base + i)[off..off + d_k];
                    for j in 0..seq_len {
                        let vj = &cache.v.row(base + j)[off..off + d_k];
                        d_a.set(i, j, d_o.iter().zip(vj).map(|(&x, &y)| x * y).sum());
                        let w = a.get(i, j);
                        let dvj = &mut dv.row_mut(base + j)[off..off + d_k];
                        for (o, &g) in dvj.iter_mut().zip(d_o) {
                            *o += w * g;
                        }
                    }
                }
                // softmax backward, then scores = q kᵀ * scale
                for i in 0..seq_len {
                    let dot: T = (0..seq_len).map(|j| d_a.get(i, j) * a.get(i, j)).sum();
                    for j in 0..seq_len {
                        let ds = a.get(i, j) * (d_a.get(i, j) - dot) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        for c in off..off + d_k {
                            let qi = cache.q.get(base + i, c);
                            let kj = cache.k.get(base + j, c);
                            let cur = dq.get(base + i, c);
                            dq.set(base + i, c, cur + ds * kj);
                            let cur = dk.get(base + j, c);
                            dk.set(base + j, c, cur + ds * qi);
                        }
                    }
                }
            }
        }
        grads.w_q.gemm(T::one(), &cache.x, true, &dq, false, T::one());
        grads.w_k.gemm(T::one(), &cache.x, true, &dk, false, T::one());
        grads.w_v.gemm(T::one(), &cache.x, true, &dv, false, T::one());
        dx.gemm(T::one(), &dq, false, &self.w_q, true, T::one());
        dx.gemm(T::one(), &dk, false, &self.w_k, true, T::one());
        dx.gemm(T::one(), &dv, false, &self.w_v, true, T::one());
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn head_count_must_divide_width() {
        assert!(EncoderBlock::<f64>::zeros(8, 4, 3).is_err());
        assert!(EncoderBlock::<f64>::zeros(8, 4, 0).is_err());
        assert!(EncoderBlock::<f64>::zeros(8, 4, 4).is_ok());
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let block = EncoderBlock::<f64>::xavier(8, 16, 2, &mut rng).unwrap();
        let x = Tensor2::from_fn(15, 8, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.3 - 1.4);
        for p in block.attention_probs(&x, 5) {
            for r in 0..p.rows() {
                let s: f64 = p.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
        let mut a = Tensor2::from_vec(1, 3, vec![0.2, -1.0, 3.0]).unwrap();
        let mut b = a.map(|v| v + 41.5);
        softmax_rows(&mut a);
        softmax_rows(&mut b);
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn rejects_ragged_sequences() {
        let block = EncoderBlock::<f64>::zeros(4, 8, 2).unwrap();
        let x = Tensor2::zeros(7, 4);
        assert!(block.forward(&x, 5, 0.0, None, false).is_err());
    }
}
