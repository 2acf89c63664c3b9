//! Dense row-major matrices, the only tensor shape the model needs.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape/data mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self + other`, elementwise; shapes must match.
    pub fn add_assign(&mut self, other: &Matrix<S>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale_assign(&mut self, c: S) {
        self.data.iter_mut().for_each(|x| *x = *x * c);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sq_norm(&self) -> S {
        self.data.iter().map(|x| *x * *x).sum()
    }

    /// `a · b`.
    pub fn matmul(a: &Matrix<S>, b: &Matrix<S>) -> Matrix<S> {
        assert_eq!(a.cols, b.rows, "matmul inner dims");
        let mut out = Matrix::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            let arow = a.row(i);
            let orow = out.row_mut(i);
            for (k, &aik) in arow.iter().enumerate() {
                if aik == S::zero() {
                    continue;
                }
                let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o = *o + aik * bkj;
                }
            }
        }
        out
    }

    /// `a · bᵀ`; both operands traversed row-wise.
    pub fn matmul_bt(a: &Matrix<S>, b: &Matrix<S>) -> Matrix<S> {
        assert_eq!(a.cols, b.cols, "matmul_bt inner dims");
        let mut out = Matrix::zeros(a.rows, b.rows);
        for i in 0..a.rows {
            let arow = a.row(i);
            for j in 0..b.rows {
                let brow = b.row(j);
                let mut acc = S::zero();
                for (&x, &y) in arow.iter().zip(brow) {
                    acc = acc + x * y;
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// `aᵀ · b`, accumulated into `out` (used for weight gradients).
    pub fn matmul_at_acc(a: &Matrix<S>, b: &Matrix<S>, out: &mut Matrix<S>) {
        assert_eq!(a.rows, b.rows, "matmul_at inner dims");
        assert_eq!((out.rows, out.cols), (a.cols, b.cols));
        for k in 0..a.rows {
            let arow = a.row(k);
            let brow = b.row(k);
            for (i, &aki) in arow.iter().enumerate() {
                if aki == S::zero() {
                    continue;
                }
                let orow = out.row_mut(i);
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o = *o + aki * bkj;
                }
            }
        }
    }
}
