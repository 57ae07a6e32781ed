//! Sparse direct linear solves for the global systems.
//!
//! A thin wrapper over the CSparse-style LU in `rsparse`: triplets are
//! accumulated in deterministic element order, compressed into CSC with
//! duplicate summation in a fixed order, factorized once, and the factors
//! reused across however many right-hand sides a pass needs (the
//! forward-sensitivity engine solves one factorization against `N_beta`
//! columns per load step).

use rsparse::data::{Nmrc, Sprs, Symb};

use crate::{Error, Result};

/// Triplet accumulator for a square sparse matrix.
#[derive(Clone, Debug)]
pub struct TripletMatrix {
    pub n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        TripletMatrix {
            n,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Compress to CSC, summing duplicates. Sorting is stable with a
    /// deterministic key, so repeated assemblies of the same contributions
    /// sum in identical order and reproduce bit-identical matrices.
    fn to_csc(&self) -> Sprs<f64> {
        let mut sorted: Vec<(usize, usize, f64)> = self.entries.clone();
        sorted.sort_by_key(|&(r, c, _)| (c, r));

        let mut p = Vec::with_capacity(self.n + 1);
        let mut i = Vec::new();
        let mut x = Vec::new();
        let mut col = 0usize;
        p.push(0isize);
        let mut it = sorted.into_iter().peekable();
        while let Some((r, c, v)) = it.next() {
            while col < c {
                p.push(i.len() as isize);
                col += 1;
            }
            let mut sum = v;
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 == r && c2 == c {
                    sum += v2;
                    it.next();
                } else {
                    break;
                }
            }
            i.push(r);
            x.push(sum);
        }
        while col < self.n {
            p.push(i.len() as isize);
            col += 1;
        }
        let nzmax = x.len();
        Sprs {
            nzmax,
            m: self.n,
            n: self.n,
            p,
            i,
            x,
        }
    }

    /// Dense copy, for small cross-checks in tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// An LU factorization (partial pivoting, fill-reducing column ordering)
/// that can be applied to many right-hand sides.
pub struct SparseLu {
    n: usize,
    symbolic: Symb,
    numeric: Nmrc<f64>,
}

impl SparseLu {
    pub fn factor(matrix: &TripletMatrix) -> Result<Self> {
        let a = matrix.to_csc();
        // order 2: the A^T A column ordering CSparse uses for LU
        let mut symbolic = rsparse::sqr(&a, 2, false);
        let numeric = rsparse::lu(&a, &mut symbolic, 1.0)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        Ok(SparseLu {
            n: matrix.n,
            symbolic,
            numeric,
        })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut x = vec![0.0; self.n];
        ipvec(self.n, &self.numeric.pinv, b, &mut x);
        rsparse::lsolve(&self.numeric.l, &mut x);
        rsparse::usolve(&self.numeric.u, &mut x);
        ipvec(self.n, &self.symbolic.q, &x, b);
    }
}

/// `x(p) = b` with `None` denoting the identity permutation.
fn ipvec(n: usize, p: &Option<Vec<isize>>, b: &[f64], x: &mut [f64]) {
    match p {
        Some(perm) => {
            for k in 0..n {
                x[perm[k] as usize] = b[k];
            }
        }
        None => x[..n].copy_from_slice(&b[..n]),
    }
}
