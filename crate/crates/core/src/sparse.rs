//! Minimal compressed-sparse-row matrices for assembly and the LU bridge to
//! the `faer` sparse direct solver.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free columns per row.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut order = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[order[i]] = j;
            vals[order[i]] = v;
            order[i] += 1;
        }
        // Sort each row by column and merge duplicates.
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        for i in 0..nrows {
            let lo = counts[i];
            let hi = if i + 1 < nrows { counts[i + 1] } else { triplets.len() };
            let mut row: Vec<(usize, f64)> = cols[lo..hi]
                .iter()
                .copied()
                .zip(vals[lo..hi].iter().copied())
                .collect();
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if out_cols.len() > row_ptr[i] && *out_cols.last().unwrap() == c {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
            row_ptr[i + 1] = out_cols.len();
        }
        Self { nrows, ncols, row_ptr, cols: out_cols, vals: out_vals }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// All stored entries as (row, col, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    /// y ← y + factor · A x
    pub fn matvec_add(&self, x: &[f64], factor: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] += factor * acc;
        }
    }

    /// A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_add(x, 1.0, &mut y);
        y
    }

    /// Aᵀ
    pub fn transposed(&self) -> CsrMatrix {
        let triplets: Vec<(usize, usize, f64)> =
            self.entries().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }
}

/// Solve the square system `a x = rhs` by sparse LU factorization.
/// `context` names the system in error messages (e.g. a slab index).
pub fn solve_lu(a: &CsrMatrix, rhs: &[f64], context: usize) -> Result<Vec<f64>> {
    assert_eq!(a.nrows(), a.ncols(), "LU solve needs a square matrix");
    assert_eq!(rhs.len(), a.nrows());
    let triplets: Vec<Triplet<usize, usize, f64>> = a
        .entries()
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let mat = SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &triplets).map_err(
        |e| Error::Solve { slab: context, message: format!("matrix construction failed: {e:?}") },
    )?;
    let lu = mat.sp_lu().map_err(|e| Error::Solve {
        slab: context,
        message: format!("LU factorization failed: {e:?}"),
    })?;
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let solution: Vec<f64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solve {
            slab: context,
            message: "solution contains non-finite entries".into(),
        });
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn triplets_are_merged_and_sorted() {
        let a = CsrMatrix::from_triplets(
            2,
            3,
            &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)],
        );
        assert_eq!(a.nnz(), 3);
        let entries: Vec<_> = a.entries().collect();
        assert_eq!(entries[0], (0, 0, 2.0));
        assert_eq!(entries[1], (0, 2, 1.5));
        assert_eq!(entries[2], (1, 1, -1.0));
    }

    #[test]
    fn matvec_matches_dense_arithmetic() {
        // [[2, 0, 1], [0, 3, 0]] · [1, 2, 3] = [5, 6]
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0)]);
        let y = a.matvec(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(y[0], 5.0);
        assert_relative_eq!(y[1], 6.0);

        let t = a.transposed();
        let z = t.matvec(&[1.0, 1.0]);
        assert_relative_eq!(z[0], 2.0);
        assert_relative_eq!(z[1], 3.0);
        assert_relative_eq!(z[2], 1.0);
    }

    #[test]
    fn lu_solves_small_nonsymmetric_system() {
        // x = (1, -2, 3) for a hand-built system.
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, 0.5),
                (2, 2, 5.0),
            ],
        );
        let x_true = [1.0, -2.0, 3.0];
        let rhs = a.matvec(&x_true);
        let x = solve_lu(&a, &rhs, 0).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert_relative_eq!(xi, ti, max_relative = 1e-12);
        }
    }

    #[test]
    fn singular_systems_are_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]);
        let result = solve_lu(&a, &[1.0, 1.0], 7);
        match result {
            Err(Error::Solve { slab, .. }) => assert_eq!(slab, 7),
            other => panic!("expected a solve error, got {other:?}"),
        }
    }
}
