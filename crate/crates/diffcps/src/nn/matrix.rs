//! Dense row-major `f64` matrices and the multiply kernels the networks run on.
//!
//! The hot path of every training step is a handful of `batch x 256 x 256`
//! products, so `gemm_acc` uses a register-tiled kernel (4 rows x 32 columns
//! of accumulators) that the compiler vectorizes well. Everything is plain
//! sequential f64 arithmetic; results are bit-reproducible across runs.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong;
    /// shape errors here are programmer errors, not runtime conditions.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "hcat row mismatch");
        let cols = self.cols + other.cols;
        let mut out = Matrix::zeros(self.rows, cols);
        for r in 0..self.rows {
            out.row_mut(r)[..self.cols].copy_from_slice(self.row(r));
            out.row_mut(r)[self.cols..].copy_from_slice(other.row(r));
        }
        out
    }

    /// Copy of columns `[lo, hi)`.
    pub fn columns(&self, lo: usize, hi: usize) -> Matrix {
        assert!(lo <= hi && hi <= self.cols);
        let mut out = Matrix::zeros(self.rows, hi - lo);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[lo..hi]);
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

const ROW_TILE: usize = 4;
const COL_TILE: usize = 32;

/// `c += a * b` for row-major matrices, `a: (m,k)`, `b: (k,n)`, `c: (m,n)`.
pub fn gemm_acc(c: &mut Matrix, a: &Matrix, b: &Matrix) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    assert_eq!(c.rows, a.rows, "gemm output rows mismatch");
    assert_eq!(c.cols, b.cols, "gemm output cols mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    gemm_acc_slices(&mut c.data, &a.data, &b.data, m, k, n);
}

/// Slice-level `c += a * b`; lets callers multiply against parameter storage
/// without materializing `Matrix` views.
pub fn gemm_acc_slices(cv: &mut [f64], av: &[f64], bv: &[f64], m: usize, k: usize, n: usize) {
    assert_eq!(av.len(), m * k);
    assert_eq!(bv.len(), k * n);
    assert_eq!(cv.len(), m * n);

    let mut i = 0;
    while i + ROW_TILE <= m {
        let mut j0 = 0;
        while j0 + COL_TILE <= n {
            let mut acc = [[0.0f64; COL_TILE]; ROW_TILE];
            for kk in 0..k {
                let br = &bv[kk * n + j0..kk * n + j0 + COL_TILE];
                let a0 = av[i * k + kk];
                let a1 = av[(i + 1) * k + kk];
                let a2 = av[(i + 2) * k + kk];
                let a3 = av[(i + 3) * k + kk];
                for j in 0..COL_TILE {
                    acc[0][j] += a0 * br[j];
                    acc[1][j] += a1 * br[j];
                    acc[2][j] += a2 * br[j];
                    acc[3][j] += a3 * br[j];
                }
            }
            for (r, acc_r) in acc.iter().enumerate() {
                let cr = &mut cv[(i + r) * n + j0..(i + r) * n + j0 + COL_TILE];
                for j in 0..COL_TILE {
                    cr[j] += acc_r[j];
                }
            }
            j0 += COL_TILE;
        }
        if j0 < n {
            gemm_rows_tail(cv, av, bv, i, i + ROW_TILE, j0, k, n);
        }
        i += ROW_TILE;
    }
    if i < m {
        gemm_rows_tail(cv, av, bv, i, m, 0, k, n);
    }
}

/// Transpose of a row-major `(rows, cols)` slice into `out`.
pub fn transpose_into(out: &mut Vec<f64>, src: &[f64], rows: usize, cols: usize) {
    assert_eq!(src.len(), rows * cols);
    out.clear();
    out.resize(rows * cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Fallback path: rows `[i_lo, i_hi)`, columns `[j_lo, n)`, accumulating in
/// memory instead of registers.
fn gemm_rows_tail(
    cv: &mut [f64],
    av: &[f64],
    bv: &[f64],
    i_lo: usize,
    i_hi: usize,
    j_lo: usize,
    k: usize,
    n: usize,
) {
    for i in i_lo..i_hi {
        for kk in 0..k {
            let a0 = av[i * k + kk];
            let br = &bv[kk * n + j_lo..kk * n + n];
            let cr = &mut cv[i * n + j_lo..i * n + n];
            for j in 0..cr.len() {
                cr[j] += a0 * br[j];
            }
        }
    }
}

/// `c = a * b` (overwrites `c`).
pub fn gemm(c: &mut Matrix, a: &Matrix, b: &Matrix) {
    c.data.iter_mut().for_each(|v| *v = 0.0);
    gemm_acc(c, a, b);
}

/// Adds `row` to every row of `m` (bias broadcast).
pub fn add_row_broadcast(m: &mut Matrix, row: &[f64]) {
    assert_eq!(m.cols, row.len());
    for r in 0..m.rows {
        let mr = m.row_mut(r);
        for (v, b) in mr.iter_mut().zip(row) {
            *v += b;
        }
    }
}

/// Column sums of `m` accumulated into `out` (bias gradient).
pub fn add_col_sums(m: &Matrix, out: &mut [f64]) {
    assert_eq!(m.cols, out.len());
    for r in 0..m.rows {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
}
