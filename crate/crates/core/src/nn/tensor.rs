use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row count below which `gemm` skips the packed kernel.
const SMALL_ROWS: usize = 8;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor2<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&mut self, k: T) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds `bias` to every row.
    pub fn add_row(&mut self, bias: &[T]) {
        assert_eq!(bias.len(), self.cols, "bias width");
        for row in self.data.chunks_exact_mut(self.cols) {
            for (x, &b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
    }

    /// Column sums accumulated into `out`.
    pub fn sum_rows_into(&self, out: &mut [T]) {
        assert_eq!(out.len(), self.cols, "sum_rows width");
        for row in self.data.chunks_exact(self.cols) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor2<U> {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::from_f64(x.f64()).unwrap_or_else(U::nan)).collect(),
        }
    }

    /// `self = alpha * op(a) * op(b) + beta * self`.
    pub fn gemm(&mut self, alpha: T, a: &Self, ta: bool, b: &Self, tb: bool, beta: T) {
        let (m, ka, rsa, csa) = if ta {
            (a.cols, a.rows, 1, a.cols as isize)
        } else {
            (a.rows, a.cols, a.cols as isize, 1)
        };
        let (kb, n, rsb, csb) = if tb {
            (b.cols, b.rows, 1, b.cols as isize)
        } else {
            (b.rows, b.cols, b.cols as isize, 1)
        };
        assert_eq!(ka, kb, "gemm inner dimension");
        assert_eq!((m, n), self.shape(), "gemm output shape");
        if m == 0 || n == 0 {
            return;
        }
        if ka == 0 {
            self.scale(beta);
            return;
        }
        if m <= SMALL_ROWS && !tb {
            // Packing b would cost as much as the product itself here.
            let cols = self.cols;
            for i in 0..m {
                let out = &mut self.data[i * cols..(i + 1) * cols];
                if beta == T::zero() {
                    out.fill(T::zero());
                } else if beta != T::one() {
                    out.iter_mut().for_each(|o| *o *= beta);
                }
                for k in 0..ka {
                    let s = alpha * if ta { a.data[k * a.cols + i] } else { a.data[i * a.cols + k] };
                    for (o, &w) in out.iter_mut().zip(&b.data[k * n..(k + 1) * n]) {
                        *o += s * w;
                    }
                }
            }
            return;
        }
        // SAFETY: strides derive from the checked shapes of a, b, and self.
        unsafe {
            T::gemm_raw(
                m,
                ka,
                n,
                alpha,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                self.data.as_mut_ptr(),
                self.cols as isize,
                1,
            );
        }
    }

    /// `a * b`
    pub fn matmul(a: &Self, b: &Self) -> Self {
        let mut out = Self::zeros(a.rows, b.cols);
        out.gemm(T::one(), a, false, b, false, T::zero());
        out
    }

    /// `aᵀ * b`
    pub fn matmul_tn(a: &Self, b: &Self) -> Self {
        let mut out = Self::zeros(a.cols, b.cols);
        out.gemm(T::one(), a, true, b, false, T::zero());
        out
    }

    /// `a * bᵀ`
    pub fn matmul_nt(a: &Self, b: &Self) -> Self {
        let mut out = Self::zeros(a.rows, b.rows);
        out.gemm(T::one(), a, false, b, true, T::zero());
        out
    }
}
