//! Compressed sparse row matrix used for the normalized graph operator.

use crate::tensor::{Scalar, Tensor};

/// Square CSR matrix. Column indices within each row are sorted, which
/// fixes the accumulation order of every product.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Build from triplets. Entries must be unique; rows get sorted by column.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, _, _) in &triplets {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = triplets.iter().map(|&(_, c, _)| c).collect();
        let vals = triplets.iter().map(|&(_, _, v)| v).collect();
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()]
            .iter()
            .zip(self.vals[range].iter())
            .map(|(&c, &v)| (c, v))
    }

    pub fn entry(&self, r: usize, c: usize) -> T {
        for (col, v) in self.row_entries(r) {
            if col == c {
                return v;
            }
        }
        T::ZERO
    }

    pub fn is_symmetric(&self) -> bool {
        for r in 0..self.n {
            for (c, v) in self.row_entries(r) {
                if (self.entry(c, r).to_f64() - v.to_f64()).abs() > 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// `self [n,n] · dense [n,f] -> [n,f]`.
    pub fn matmul_dense(&self, dense: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.n, dense.rows(), "spmm row mismatch");
        let f = dense.cols();
        let mut out = Tensor::zeros(&[self.n, f]);
        for r in 0..self.n {
            let dst_range = r * f..(r + 1) * f;
            for (c, w) in self.row_entries(r) {
                let src = dense.row(c);
                let dst: &mut [T] = &mut out.data_mut()[dst_range.clone()];
                for j in 0..f {
                    dst[j] = T::from_f64(dst[j].to_f64() + w.to_f64() * src[j].to_f64());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_matmul_matches_dense() {
        // [[1, 2], [0, 3]] · [[1], [1]] = [[3], [3]]
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0f64), (0, 1, 2.0), (1, 1, 3.0)]);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        let y = m.matmul_dense(&x);
        assert_eq!(y.data(), &[3.0, 3.0]);
        assert_eq!(m.entry(0, 1), 2.0);
        assert_eq!(m.entry(1, 0), 0.0);
        assert!(!m.is_symmetric());
    }
}
