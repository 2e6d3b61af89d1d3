//! Block-skyline Cholesky for the reduced camera system: 6x6 pose blocks in
//! frame order with a variable envelope, followed by one dense 8-wide border
//! for the shared intrinsics.

use nalgebra::{Cholesky, Matrix6, SMatrix, SVector, Vector6};

pub(crate) type Matrix8 = SMatrix<f64, 8, 8>;
pub(crate) type Matrix8x6 = SMatrix<f64, 8, 6>;
pub(crate) type Vector8 = SVector<f64, 8>;

/// Symmetric matrix stored as its lower block envelope.
pub(crate) struct BlockSkyline {
    /// First non-zero block column of each block row.
    first: Vec<usize>,
    /// `rows[i][k - first[i]]` holds block `(i, k)` for `first[i] <= k <= i`.
    rows: Vec<Vec<Matrix6<f64>>>,
    border: Vec<Matrix8x6>,
    corner: Matrix8,
}

impl BlockSkyline {
    pub fn new(first: Vec<usize>) -> Self {
        let rows = first
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                debug_assert!(f <= i);
                vec![Matrix6::zeros(); i - f + 1]
            })
            .collect();
        let n = first.len();
        Self {
            first,
            rows,
            border: vec![Matrix8x6::zeros(); n],
            corner: Matrix8::zeros(),
        }
    }

    /// Block `(i, k)` with `k <= i`, which must lie inside the envelope.
    pub fn block_mut(&mut self, i: usize, k: usize) -> &mut Matrix6<f64> {
        let f = self.first[i];
        &mut self.rows[i][k - f]
    }

    pub fn diag_mut(&mut self, i: usize) -> &mut Matrix6<f64> {
        self.rows[i].last_mut().expect("non-empty row")
    }

    pub fn border_mut(&mut self, i: usize) -> &mut Matrix8x6 {
        &mut self.border[i]
    }

    pub fn corner_mut(&mut self) -> &mut Matrix8 {
        &mut self.corner
    }

    /// In-place factorization; on failure returns the offending block row
    /// (`len` for the border corner).
    pub fn factor(mut self) -> Result<SkylineFactor, usize> {
        let n = self.first.len();
        let mut diag_inv: Vec<Matrix6<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let fi = self.first[i];
            for k in fi..i {
                let fk = self.first[k];
                let m0 = fi.max(fk);
                let mut acc = self.rows[i][k - fi];
                for m in m0..k {
                    acc -= self.rows[i][m - fi] * self.rows[k][m - fk].transpose();
                }
                self.rows[i][k - fi] = acc * diag_inv[k].transpose();
            }
            let mut acc = self.rows[i][i - fi];
            for m in fi..i {
                let l = &self.rows[i][m - fi];
                acc -= l * l.transpose();
            }
            let l = Cholesky::new(acc).ok_or(i)?.unpack();
            let linv = l.solve_lower_triangular(&Matrix6::identity()).ok_or(i)?;
            self.rows[i][i - fi] = l;
            diag_inv.push(linv);

            let mut b = self.border[i];
            for m in fi..i {
                b -= self.border[m] * self.rows[i][m - fi].transpose();
            }
            self.border[i] = b * diag_inv[i].transpose();
        }
        let mut c = self.corner;
        for b in &self.border {
            c -= b * b.transpose();
        }
        let corner = Cholesky::new(c).ok_or(n)?.unpack();
        Ok(SkylineFactor {
            first: self.first,
            rows: self.rows,
            diag_inv,
            border: self.border,
            corner,
        })
    }
}

pub(crate) struct SkylineFactor {
    first: Vec<usize>,
    rows: Vec<Vec<Matrix6<f64>>>,
    diag_inv: Vec<Matrix6<f64>>,
    border: Vec<Matrix8x6>,
    corner: Matrix8,
}

impl SkylineFactor {
    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [Vector6<f64>], bk: &mut Vector8) {
        let n = self.first.len();
        for i in 0..n {
            let fi = self.first[i];
            let mut acc = b[i];
            for m in fi..i {
                acc -= self.rows[i][m - fi] * b[m];
            }
            b[i] = self.diag_inv[i] * acc;
        }
        let mut acc = *bk;
        for (m, bm) in b.iter().enumerate() {
            acc -= self.border[m] * bm;
        }
        let yk = self.corner.solve_lower_triangular(&acc).expect("factor has a non-zero diagonal");
        let xk = self
            .corner
            .tr_solve_lower_triangular(&yk)
            .expect("factor has a non-zero diagonal");
        for (m, bm) in b.iter_mut().enumerate() {
            *bm -= self.border[m].transpose() * xk;
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = self.diag_inv[i].transpose() * b[i];
            b[i] = xi;
            for m in fi..i {
                let d = self.rows[i][m - fi].transpose() * xi;
                b[m] -= d;
            }
        }
        *bk = xk;
    }
}
