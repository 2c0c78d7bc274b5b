//! Minimal row-major f64 matrix used by the transformer.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// self [m,k] times w^T where w is [n,k]; the Linear-layer forward.
    pub fn mul_transpose(&self, w: &Mat) -> Mat {
        debug_assert_eq!(self.cols, w.cols);
        let mut out = Mat::zeros(self.rows, w.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            let out_row = out.row_mut(i);
            for (j, val) in out_row.iter_mut().enumerate() {
                let b = w.row(j);
                *val = dot(a, b);
            }
        }
        out
    }

    /// self [m,k] times b [k,n].
    pub fn mul(&self, b: &Mat) -> Mat {
        debug_assert_eq!(self.cols, b.rows);
        let mut out = Mat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &coef) in a.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                axpy(coef, b.row(k), out_row);
            }
        }
        out
    }

    /// self^T [k,m] times b [m,n]; self is [m,k].
    pub fn transpose_mul(&self, b: &Mat) -> Mat {
        debug_assert_eq!(self.rows, b.rows);
        let mut out = Mat::zeros(self.cols, b.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let b_row = b.row(i);
            for (k, &coef) in a.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                axpy(coef, b_row, out.row_mut(k));
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// out += coef * src
#[inline]
pub fn axpy(coef: f64, src: &[f64], out: &mut [f64]) {
    for (o, s) in out.iter_mut().zip(src) {
        *o += coef * s;
    }
}

/// In-place softmax over a slice, numerically shifted by the max.
pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
