//! Symmetric positive definite factorizations and the dense linear algebra
//! shared by the posterior and design code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Smallest jitter, relative to the mean diagonal entry.
pub const JITTER_START: f64 = 1e-12;
/// Largest jitter tried before giving up, relative to the mean diagonal entry.
pub const JITTER_MAX: f64 = 1e-6;

/// Cholesky factor of a symmetric positive (semi)definite matrix.
///
/// Construction follows a fixed jitter ladder: the plain factorization is
/// tried first, then `1e-12 * mean(diag)` is added to the diagonal and
/// escalated by factors of ten up to `1e-6 * mean(diag)`. An exactly zero
/// matrix is accepted as a degenerate factor (`L = 0`) which can be used for
/// sampling but not for solves.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    l: DMatrix<f64>,
    jitter: f64,
}

impl SpdFactor {
    pub fn new(mat: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n {
            return Err(Error::dims(context, "square matrix", format!("{}x{}", n, mat.ncols())));
        }
        if let Some(idx) = mat.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: context,
                row: idx % n.max(1),
                col: idx / n.max(1),
            });
        }
        if n == 0 || mat.iter().all(|&x| x == 0.0) {
            return Ok(Self {
                chol: None,
                l: DMatrix::zeros(n, n),
                jitter: 0.0,
            });
        }
        if let Some(chol) = Cholesky::new(mat.clone()) {
            return Ok(Self::from_chol(chol, 0.0));
        }
        let mean_diag = mat.trace() / n as f64;
        if !(mean_diag > 0.0) {
            return Err(Error::NotPositiveDefinite { context });
        }
        let mut rel = JITTER_START;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let eps = rel * mean_diag;
            let mut shifted = mat.clone();
            for i in 0..n {
                shifted[(i, i)] += eps;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(Self::from_chol(chol, eps));
            }
            rel *= 10.0;
        }
        Err(Error::NotPositiveDefinite { context })
    }

    fn from_chol(chol: Cholesky<f64, Dyn>, jitter: f64) -> Self {
        let l = chol.l();
        Self {
            chol: Some(chol),
            l,
            jitter,
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Absolute diagonal shift that was needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn is_degenerate(&self) -> bool {
        self.chol.is_none() && self.dim() > 0
    }

    fn chol(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.chol.as_ref().ok_or(Error::NotPositiveDefinite {
            context: "solve with degenerate factor",
        })
    }

    /// `A⁻¹ B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.dim() {
            return Err(Error::dims("spd solve", self.dim(), b.nrows()));
        }
        if self.dim() == 0 {
            return Ok(b.clone());
        }
        Ok(self.chol()?.solve(b))
    }

    /// `A⁻¹ b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.dim() {
            return Err(Error::dims("spd solve", self.dim(), b.len()));
        }
        if self.dim() == 0 {
            return Ok(b.clone());
        }
        Ok(self.chol()?.solve(b))
    }

    /// `L⁻¹ B` (forward substitution only).
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.dim() {
            return Err(Error::dims("spd forward solve", self.dim(), b.nrows()));
        }
        if self.dim() == 0 {
            return Ok(b.clone());
        }
        self.chol()?;
        self.l
            .solve_lower_triangular(b)
            .ok_or(Error::NotPositiveDefinite {
                context: "forward substitution",
            })
    }

    /// `L Lᵀ`, i.e. the (jittered) matrix that was factored.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    (mat + mat.transpose()) * 0.5
}

pub fn trace_of(mat: &DMatrix<f64>) -> Result<f64> {
    if !mat.is_square() {
        return Err(Error::dims(
            "trace",
            "square matrix",
            format!("{}x{}", mat.nrows(), mat.ncols()),
        ));
    }
    Ok(mat.trace())
}

/// Posterior covariance of a linear-Gaussian model through the Woodbury form
///
/// `P − P Hᵀ (Γ + H P Hᵀ)⁻¹ H P`
///
/// which only factors a `k×k` matrix, `k` being the number of observations.
pub fn woodbury_posterior_cov(
    prior_cov: &DMatrix<f64>,
    op: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = prior_cov.nrows();
    if !prior_cov.is_square() {
        return Err(Error::dims("woodbury prior", "square", format!("{}x{}", n, prior_cov.ncols())));
    }
    if op.ncols() != n {
        return Err(Error::dims("woodbury operator columns", n, op.ncols()));
    }
    let k = op.nrows();
    if noise_cov.nrows() != k || noise_cov.ncols() != k {
        return Err(Error::dims(
            "woodbury noise",
            format!("{k}x{k}"),
            format!("{}x{}", noise_cov.nrows(), noise_cov.ncols()),
        ));
    }
    if k == 0 {
        return Ok(prior_cov.clone());
    }
    let p_ht = prior_cov * op.transpose();
    let inner = symmetrize(&(noise_cov + op * &p_ht));
    let factor = SpdFactor::new(&inner, "woodbury inner matrix")?;
    let gain_t = factor.solve(&p_ht.transpose())?;
    Ok(symmetrize(&(prior_cov - p_ht * gain_t)))
}

/// Gather rows and columns `idx` of a square matrix.
pub fn principal_submatrix(mat: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| mat[(idx[i], idx[j])])
}

/// Gather rows `idx` of a matrix.
pub fn select_rows(mat: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), mat.ncols(), |i, j| mat[(idx[i], j)])
}

#[cfg_attr(not(debug_assertions), allow(dead_code))]
pub(crate) fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn negative_variance_is_rejected() {
        let err = SpdFactor::new(&dmatrix![-1.0], "test").unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn hand_cholesky_2x2() {
        let f = SpdFactor::new(&dmatrix![2.0, 1.0; 1.0, 2.0], "test").unwrap();
        let l = f.l();
        assert!((l[(0, 0)] - 1.41421356).abs() < 1e-8);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 0.70710678).abs() < 1e-8);
        assert!((l[(1, 1)] - 1.22474487).abs() < 1e-8);
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn rank_deficient_gets_jitter() {
        // rank one: v vᵀ
        let m = dmatrix![1.0, 1.0; 1.0, 1.0];
        let f = SpdFactor::new(&m, "test").unwrap();
        assert!(f.jitter() > 0.0);
        assert!(f.jitter() <= JITTER_MAX * 1.0 + 1e-18);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let f = SpdFactor::new(&DMatrix::zeros(3, 3), "test").unwrap();
        assert!(f.is_degenerate());
        assert!(f.solve_vec(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn woodbury_scalar() {
        let out = woodbury_posterior_cov(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((out[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn woodbury_zero_operator_is_prior() {
        let prior = dmatrix![2.0, 0.3; 0.3, 1.0];
        let out = woodbury_posterior_cov(&prior, &DMatrix::zeros(2, 2), &DMatrix::identity(2, 2))
            .unwrap();
        assert_eq!(out, prior);
    }

    #[test]
    fn woodbury_partial_observation() {
        let out = woodbury_posterior_cov(
            &DMatrix::identity(2, 2),
            &dmatrix![1.0, 0.0],
            &dmatrix![0.01],
        )
        .unwrap();
        assert!((out[(0, 0)] - 1.0 / 101.0).abs() < 1e-14);
        assert!((out[(1, 1)] - 1.0).abs() < 1e-14);
        assert!((trace_of(&out).unwrap() - 1.00990099).abs() < 1e-8);
    }

    #[test]
    fn trace_examples() {
        assert_eq!(trace_of(&DMatrix::identity(3, 3)).unwrap(), 3.0);
        assert_eq!(trace_of(&dmatrix![2.0, 9.0; 9.0, 3.0]).unwrap(), 5.0);
        assert!(trace_of(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn woodbury_shape_errors() {
        let p = DMatrix::identity(2, 2);
        assert!(woodbury_posterior_cov(&p, &DMatrix::zeros(1, 3), &dmatrix![1.0]).is_err());
        assert!(woodbury_posterior_cov(&p, &DMatrix::zeros(1, 2), &DMatrix::identity(2, 2)).is_err());
    }
}
