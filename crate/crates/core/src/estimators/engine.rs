//! Kernel-weighted least squares with a per-subject sandwich covariance.
//!
//! Rows are accumulated in a fixed order (subjects in input order, then
//! observations or pairs in lexicographic order) and every reduction is a
//! plain left-to-right sum, so results do not depend on thread count and
//! removing zero-weight rows leaves them bit-for-bit unchanged.

use crate::error::{Error, Result};
use crate::linalg::{dot, min_eigenvalue, Lu, Matrix};
use crate::scalar::Scalar;

/// Relative threshold on the smallest eigenvalue of the normal matrix.
pub const SINGULARITY_TOL: f64 = 1e-10;

/// Design rows with weights, responses and subject labels.
#[derive(Debug, Clone)]
pub(crate) struct Rows<T> {
    dim: usize,
    design: Vec<T>,
    y: Vec<T>,
    w: Vec<T>,
    subject: Vec<usize>,
}

impl<T: Scalar> Rows<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            design: Vec::new(),
            y: Vec::new(),
            w: Vec::new(),
            subject: Vec::new(),
        }
    }

    /// Appends a row and returns its design slot for the caller to fill.
    /// Subjects must be pushed in nondecreasing order.
    #[inline]
    pub fn push(&mut self, subject: usize, w: T, y: T) -> &mut [T] {
        debug_assert!(self.subject.last().is_none_or(|&s| s <= subject));
        self.subject.push(subject);
        self.w.push(w);
        self.y.push(y);
        let start = self.design.len();
        self.design.resize(start + self.dim, T::zero());
        &mut self.design[start..]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.design[r * self.dim..(r + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, r: usize) -> T {
        self.w[r]
    }

    #[inline]
    pub fn response(&self, r: usize) -> T {
        self.y[r]
    }

    #[inline]
    pub fn subject(&self, r: usize) -> usize {
        self.subject[r]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> (Matrix<T>, Vec<T>) {
        let mut gram = Matrix::zeros(self.dim, self.dim);
        let mut rhs = vec![T::zero(); self.dim];
        for r in 0..self.len() {
            let w = self.w[r];
            let row = self.row(r);
            gram.add_outer(w, row);
            let wy = w * self.y[r];
            for (b, &x) in rhs.iter_mut().zip(row) {
                *b += wy * x;
            }
        }
        (gram, rhs)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LocalSolution<T> {
    pub theta: Vec<T>,
    pub cov: Matrix<T>,
    pub n_rows: usize,
}

/// Fails with `SingularLocalFit` when the smallest eigenvalue is below
/// `SINGULARITY_TOL` times the mean diagonal.
pub(crate) fn checked_lu<T: Scalar>(gram: &Matrix<T>, t: T) -> Result<Lu<T>> {
    let singular = || Error::SingularLocalFit {
        t: t.to_f64_lossy(),
    };
    if !gram.is_finite() {
        return Err(singular());
    }
    let scale = gram.mean_diagonal();
    if !(scale > T::zero()) || min_eigenvalue(gram) < T::lit(SINGULARITY_TOL) * scale {
        return Err(singular());
    }
    Lu::new(gram).ok_or_else(singular)
}

pub(crate) fn solve_weighted<T: Scalar>(rows: &Rows<T>, t: T, h: T) -> Result<LocalSolution<T>> {
    if rows.len() == 0 {
        return Err(Error::NoLocalData {
            t: t.to_f64_lossy(),
            h: h.to_f64_lossy(),
        });
    }
    let (gram, rhs) = rows.gram();
    let lu = checked_lu(&gram, t)?;
    let theta = lu.solve(&rhs);
    let bread_inv = lu.inverse();

    let dim = rows.dim();
    let mut meat = Matrix::zeros(dim, dim);
    let mut score = vec![T::zero(); dim];
    let mut current = rows.subject(0);
    for r in 0..rows.len() {
        let s = rows.subject(r);
        if s != current {
            meat.add_outer(T::one(), &score);
            score.iter_mut().for_each(|v| *v = T::zero());
            current = s;
        }
        let row = rows.row(r);
        let resid = rows.weight(r) * (rows.response(r) - dot(row, &theta));
        for (acc, &x) in score.iter_mut().zip(row) {
            *acc += resid * x;
        }
    }
    meat.add_outer(T::one(), &score);
    let cov = Matrix::sandwich(&bread_inv, &meat);
    Ok(LocalSolution {
        theta,
        cov,
        n_rows: rows.len(),
    })
}
