//! Finite-dimensional Gaussian densities and the primary/auxiliary block split.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spd::{symmetrize, SpdFactor};

/// `N(mean, cov)` with the covariance factored once at construction.
#[derive(Clone, Debug)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: SpdFactor,
}

impl GaussianDensity {
    /// Symmetrizes `cov` and factors it under the jitter policy of
    /// [`SpdFactor`].
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dims(
                "gaussian covariance",
                format!("{0}x{0}", mean.len()),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        if let Some(i) = mean.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: "gaussian mean",
                row: i,
                col: 0,
            });
        }
        let cov = symmetrize(&cov);
        let factor = SpdFactor::new(&cov, "gaussian covariance")?;
        Ok(Self { mean, cov, factor })
    }

    /// Standard normal `N(0, I_n)`.
    pub fn standard(n: usize) -> Self {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Lower Cholesky factor of the (possibly jittered) covariance.
    pub fn chol(&self) -> &DMatrix<f64> {
        self.factor.l()
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    /// Draws `count` rows `mean + L ξ`, `ξ ~ N(0, I)`. Row-major, one draw per row.
    pub fn sample(&self, count: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(count, &mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(count, n);
        let mut xi = DVector::zeros(n);
        for r in 0..count {
            for x in xi.iter_mut() {
                *x = StandardNormal.sample(rng);
            }
            let draw = &self.mean + self.factor.l() * &xi;
            out.row_mut(r).copy_from(&draw.transpose());
        }
        out
    }

    /// One draw of `L ξ` (zero-mean), used by proposal kernels.
    pub fn centered_draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        self.factor.l() * xi
    }
}

/// Split of a joint parameter vector into `[primary; auxiliary]` blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSplit {
    pub n_primary: usize,
    pub n_aux: usize,
}

impl BlockSplit {
    pub fn new(n_primary: usize, n_aux: usize) -> Self {
        Self { n_primary, n_aux }
    }

    pub fn total(&self) -> usize {
        self.n_primary + self.n_aux
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.total() != n {
            return Err(Error::dims("block split", self.total(), n));
        }
        Ok(())
    }

    /// Primary block of a joint vector.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v.len())?;
        Ok(v.rows(0, self.n_primary).into_owned())
    }

    /// Joint vector with `m` in the primary slot and zeros elsewhere.
    pub fn embed(&self, m: &DVector<f64>) -> Result<DVector<f64>> {
        if m.len() != self.n_primary {
            return Err(Error::dims("block embed", self.n_primary, m.len()));
        }
        let mut v = DVector::zeros(self.total());
        v.rows_mut(0, self.n_primary).copy_from(m);
        Ok(v)
    }

    /// Leading `n_primary × n_primary` block.
    pub fn primary_block(&self, mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(mat.nrows())?;
        self.check(mat.ncols())?;
        Ok(mat.view((0, 0), (self.n_primary, self.n_primary)).into_owned())
    }
}

/// Marginal of the primary block. Gaussian marginalization is exact block extraction.
pub fn marginal_block(g: &GaussianDensity, split: BlockSplit) -> Result<GaussianDensity> {
    split.check(g.dim())?;
    if split.n_aux == 0 {
        return Ok(g.clone());
    }
    let mean = g.mean().rows(0, split.n_primary).into_owned();
    let cov = split.primary_block(g.cov())?;
    GaussianDensity::new(mean, cov)
}
