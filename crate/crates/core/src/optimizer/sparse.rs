//! Block-sparse Cholesky factorisation of symmetric positive-definite normal
//! matrices, with a selected-inverse pass for marginal covariances.
//!
//! Blocks are stored as 3x3 matrices. Variables of dimension 1 occupy the
//! top-left entry; their padding rows/columns are zero off the diagonal and
//! one on it, so they stay decoupled through every operation.

use std::rc::Rc;

use nalgebra::{Cholesky, Matrix3, Vector3};

/// Filled lower-triangular block structure of `L` for a fixed ordering.
#[derive(Debug, Clone)]
pub struct SymbolicFactor {
    dims: Vec<usize>,
    /// `col_start[j]..col_start[j+1]` indexes the strictly-lower rows of column `j`.
    col_start: Vec<usize>,
    rows: Vec<usize>,
}

impl SymbolicFactor {
    /// Analyses the fill of eliminating variables `0..n` in order, given the
    /// coupled pairs of the matrix.
    pub fn analyze(dims: Vec<usize>, couplings: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let n = dims.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in couplings {
            if a == b {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            adj[lo].push(hi);
        }
        let mut col_start = Vec::with_capacity(n + 1);
        let mut rows = Vec::new();
        col_start.push(0);
        for j in 0..n {
            let mut s = std::mem::take(&mut adj[j]);
            s.sort_unstable();
            s.dedup();
            if let Some((&parent, rest)) = s.split_first() {
                // struct(L_parent) inherits struct(L_j) minus the parent itself
                adj[parent].extend_from_slice(rest);
            }
            rows.extend_from_slice(&s);
            col_start.push(rows.len());
        }
        Self {
            dims,
            col_start,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn scalar_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn col_rows(&self, j: usize) -> &[usize] {
        &self.rows[self.col_start[j]..self.col_start[j + 1]]
    }

    pub fn nnz_blocks(&self) -> usize {
        self.rows.len()
    }

    /// Position of block `(row, col)` (row > col) in the off-diagonal storage.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let r = self.col_rows(col);
        r.binary_search(&row).ok().map(|i| self.col_start[col] + i)
    }
}

/// Lower triangle of a symmetric block matrix on a [`SymbolicFactor`] pattern;
/// after [`BlockMatrix::factorize`] it holds the Cholesky factor.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    sym: Rc<SymbolicFactor>,
    pub diag: Vec<Matrix3<f64>>,
    pub off: Vec<Matrix3<f64>>,
    linv: Vec<Matrix3<f64>>,
    factored: bool,
}

impl BlockMatrix {
    pub fn zeros(sym: Rc<SymbolicFactor>) -> Self {
        let diag = sym.dims.iter().map(|&d| padding(d)).collect();
        let nnz = sym.nnz_blocks();
        Self {
            sym,
            diag,
            off: vec![Matrix3::zeros(); nnz],
            linv: Vec::new(),
            factored: false,
        }
    }

    pub fn symbolic(&self) -> &SymbolicFactor {
        &self.sym
    }

    /// Adds `m` to block `(row, col)`; for `row < col` the transpose is added
    /// to `(col, row)`.
    pub fn add(&mut self, row: usize, col: usize, m: &Matrix3<f64>) {
        if row == col {
            self.diag[row] += m;
        } else if row > col {
            let p = self.sym.find(row, col).expect("block in pattern");
            self.off[p] += m;
        } else {
            let p = self.sym.find(col, row).expect("block in pattern");
            self.off[p] += m.transpose();
        }
    }

    /// Dense scalar copy (unpadded), for tests and diagnostics.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let offs = scalar_offsets(&self.sym.dims);
        let n = self.sym.scalar_dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for j in 0..self.sym.len() {
            let dj = self.sym.dims[j];
            for a in 0..dj {
                for b in 0..dj {
                    m[(offs[j] + a, offs[j] + b)] = self.diag[j][(a, b)];
                }
            }
            for (k, &i) in self.sym.col_rows(j).iter().enumerate() {
                let blk = &self.off[self.sym.col_start[j] + k];
                for a in 0..self.sym.dims[i] {
                    for b in 0..dj {
                        m[(offs[i] + a, offs[j] + b)] = blk[(a, b)];
                        m[(offs[j] + b, offs[i] + a)] = blk[(a, b)];
                    }
                }
            }
        }
        m
    }

    /// In-place right-looking block Cholesky. On failure returns the index of
    /// the block whose pivot was not positive definite.
    pub fn factorize(&mut self) -> Result<(), usize> {
        let sym = Rc::clone(&self.sym);
        let n = sym.len();
        self.linv = vec![Matrix3::zeros(); n];
        for j in 0..n {
            let d = self.diag[j];
            let scale = d.diagonal().abs().max();
            let chol = Cholesky::new(d).ok_or(j)?;
            let l = chol.l();
            // reject pivots that are positive only through round-off
            if l.diagonal().min() <= 1e-10 * scale.sqrt().max(1e-300) {
                return Err(j);
            }
            let li = l.try_inverse().ok_or(j)?;
            self.diag[j] = l;
            self.linv[j] = li;
            let lo = sym.col_start[j];
            let rows = sym.col_rows(j);
            for k in 0..rows.len() {
                self.off[lo + k] *= li.transpose();
            }
            for (ka, &a) in rows.iter().enumerate() {
                let la = self.off[lo + ka];
                self.diag[a] -= la * la.transpose();
                for (kb, &b) in rows.iter().enumerate().skip(ka + 1) {
                    let lb = self.off[lo + kb];
                    let p = sym.find(b, a).expect("symbolic fill covers update");
                    self.off[p] -= lb * la.transpose();
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `L L^T x = rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut [Vector3<f64>]) {
        assert!(self.factored, "factorize first");
        let sym = Rc::clone(&self.sym);
        let n = sym.len();
        for j in 0..n {
            let y = self.linv[j] * rhs[j];
            rhs[j] = y;
            let lo = sym.col_start[j];
            for (k, &i) in sym.col_rows(j).iter().enumerate() {
                rhs[i] -= self.off[lo + k] * y;
            }
        }
        for j in (0..n).rev() {
            let lo = sym.col_start[j];
            let mut acc = rhs[j];
            for (k, &i) in sym.col_rows(j).iter().enumerate() {
                acc -= self.off[lo + k].transpose() * rhs[i];
            }
            rhs[j] = self.linv[j].transpose() * acc;
        }
    }

    /// Diagonal blocks of the inverse, via the selected-inversion recursion
    /// `Z_Sj = -Z_SS L_Sj L_jj^-1`, `Z_jj = L_jj^-T L_jj^-1 - Z_Sj^T L_Sj L_jj^-1`,
    /// evaluated from the last column to the first on the filled pattern.
    pub fn inverse_diagonal(&self) -> Vec<Matrix3<f64>> {
        assert!(self.factored, "factorize first");
        let sym = Rc::clone(&self.sym);
        let n = sym.len();
        let mut zdiag = vec![Matrix3::zeros(); n];
        let mut zoff = vec![Matrix3::zeros(); sym.nnz_blocks()];
        for j in (0..n).rev() {
            let lo = sym.col_start[j];
            let rows = sym.col_rows(j);
            let li = self.linv[j];
            let mut zsj: Vec<Matrix3<f64>> = Vec::with_capacity(rows.len());
            for &i in rows {
                let mut acc = Matrix3::zeros();
                for (kk, &k) in rows.iter().enumerate() {
                    let zik = if i == k {
                        zdiag[i]
                    } else if i > k {
                        zoff[sym.find(i, k).expect("pattern")]
                    } else {
                        zoff[sym.find(k, i).expect("pattern")].transpose()
                    };
                    acc += zik * self.off[lo + kk];
                }
                zsj.push(-acc * li);
            }
            let mut zjj = li.transpose() * li;
            for (k, z) in zsj.iter().enumerate() {
                zjj -= z.transpose() * self.off[lo + k] * li;
            }
            zdiag[j] = (zjj + zjj.transpose()) * 0.5;
            for (k, z) in zsj.into_iter().enumerate() {
                zoff[lo + k] = z;
            }
        }
        zdiag
    }
}

fn padding(d: usize) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for k in d..3 {
        m[(k, k)] = 1.0;
    }
    m
}

pub fn scalar_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        offs.push(acc);
        acc += d;
    }
    offs
}
