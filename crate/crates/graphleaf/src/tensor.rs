//! Dense row-major tensors over f32 or f64.
//!
//! Training runs in f32; gradient checking runs the same code in f64 to
//! keep finite-difference noise below the comparison thresholds. The
//! [`Scalar`] trait is the bridge: every numeric kernel is generic over it.

use crate::error::{Error, Result};

mod sealed {
    pub trait Sealed {}
    impl Sealed for f32 {}
    impl Sealed for f64 {}
}

/// Element type of a [`Tensor`]: f32 or f64.
pub trait Scalar:
    Copy
    + Clone
    + Default
    + PartialOrd
    + PartialEq
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + sealed::Sealed
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn maximum(self, other: Self) -> Self {
                if self >= other {
                    self
                } else {
                    other
                }
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Input(format!(
                "tensor shape {:?} wants {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Number of rows when interpreted as a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of columns when interpreted as a matrix (product of trailing dims).
    pub fn cols(&self) -> usize {
        if self.shape.len() <= 1 {
            if self.shape.is_empty() {
                0
            } else {
                1
            }
        } else {
            self.shape[1..].iter().product()
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = T::from_f64(a.to_f64() + b.to_f64());
        }
    }

    pub fn to_f64_tensor(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.to_f64()).collect(),
        }
    }

    pub fn from_f64_tensor(src: &Tensor<f64>) -> Tensor<T> {
        Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().map(|&v| T::from_f64(v)).collect(),
        }
    }

    /// `self [m,k] · rhs [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (rhs.rows(), rhs.cols());
        assert_eq!(k, k2, "matmul inner dims {} vs {}", k, k2);
        let mut out = vec![T::ZERO; m * n];
        let a = &self.data;
        let b = &rhs.data;
        // ikj loop order keeps the inner loop contiguous in both operands;
        // rows are independent, so row parallelism cannot change results
        par_rows(&mut out, n, m * k * n, |i, out_row| {
            let a_row = &a[i * k..(i + 1) * k];
            for (p, &a_ip) in a_row.iter().enumerate() {
                if a_ip == T::ZERO {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for j in 0..n {
                    out_row[j] =
                        T::from_f64(out_row[j].to_f64() + a_ip.to_f64() * b_row[j].to_f64());
                }
            }
        });
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    /// `self [m,k] · rhsᵀ where rhs is [n,k] -> [m,n]`.
    pub fn matmul_nt(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (rhs.rows(), rhs.cols());
        assert_eq!(k, k2, "matmul_nt inner dims {} vs {}", k, k2);
        let mut out = vec![T::ZERO; m * n];
        let a = &self.data;
        let b = &rhs.data;
        par_rows(&mut out, n, m * k * n, |i, out_row| {
            let a_row = &a[i * k..(i + 1) * k];
            for (j, o) in out_row.iter_mut().enumerate() {
                let b_row = &b[j * k..(j + 1) * k];
                let mut acc = 0.0f64;
                for p in 0..k {
                    acc += a_row[p].to_f64() * b_row[p].to_f64();
                }
                *o = T::from_f64(acc);
            }
        });
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    /// `selfᵀ · rhs where self is [k,m], rhs is [k,n] -> [m,n]`.
    pub fn matmul_tn(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (rhs.rows(), rhs.cols());
        assert_eq!(k, k2, "matmul_tn inner dims {} vs {}", k, k2);
        let mut out = vec![T::ZERO; m * n];
        let a = &self.data;
        let b = &rhs.data;
        par_rows(&mut out, n, m * k * n, |i, out_row| {
            for p in 0..k {
                let a_ip = a[p * m + i];
                if a_ip == T::ZERO {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for j in 0..n {
                    out_row[j] =
                        T::from_f64(out_row[j].to_f64() + a_ip.to_f64() * b_row[j].to_f64());
                }
            }
        });
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }
}

// Splits `out` into rows of width `n` and runs `body` per row, in
// parallel once the work is large enough to pay for the fork. Each row's
// reduction order is fixed, so results match the sequential path bit for
// bit.
fn par_rows<T: Scalar>(
    out: &mut [T],
    n: usize,
    work: usize,
    body: impl Fn(usize, &mut [T]) + Sync + Send,
) {
    const PARALLEL_WORK_THRESHOLD: usize = 1 << 20;
    if work < PARALLEL_WORK_THRESHOLD || n == 0 {
        for (i, row) in out.chunks_mut(n).enumerate() {
            body(i, row);
        }
    } else {
        use rayon::prelude::*;
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    }
}
