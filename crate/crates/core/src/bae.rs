//! Approximation-error statistics for a linear surrogate.
//!
//! Given parameter samples `v⁽ˡ⁾`, accurate outputs `A(v⁽ˡ⁾)` and a linear
//! surrogate `F`, the errors `ε⁽ˡ⁾ = A(v⁽ˡ⁾) − F v⁽ˡ⁾` are summarized by sample
//! moments. The conditional error model then yields the corrected operator
//! `F̃ = F + C_εv C_vv⁻¹` and total-error covariance
//! `Γ_ν|v = Γ_e + C_εε − C_εv C_vv⁻¹ C_vε`, both of which are independent of
//! `F` whenever `(v₀, C_vv)` are the sample moments of the same ensemble.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baem::{ByteReader, ByteWriter};
use crate::ensemble::{DataLayout, Ensemble};
use crate::error::{Error, Result};
use crate::gaussian::GaussianDensity;
use crate::problems::TestProblem;
use crate::spd::{symmetrize, SpdFactor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurrogateKind {
    Zero,
    Explicit,
    Affine,
    FiniteDifference,
}

/// Affine surrogate `v ↦ F v + c`.
#[derive(Clone, Debug)]
pub struct LinearSurrogate {
    kind: SurrogateKind,
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
    provenance: String,
}

impl LinearSurrogate {
    pub fn zero(n_data: usize, n_params: usize) -> Self {
        Self {
            kind: SurrogateKind::Zero,
            matrix: DMatrix::zeros(n_data, n_params),
            offset: DVector::zeros(n_data),
            provenance: "zero map".into(),
        }
    }

    pub fn explicit(matrix: DMatrix<f64>) -> Result<Self> {
        let n_d = matrix.nrows();
        Self::affine(matrix, DVector::zeros(n_d)).map(|s| Self {
            kind: SurrogateKind::Explicit,
            provenance: "explicit matrix".into(),
            ..s
        })
    }

    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if offset.len() != matrix.nrows() {
            return Err(Error::dims("surrogate offset", matrix.nrows(), offset.len()));
        }
        if let Some(k) = matrix.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: "surrogate matrix",
                row: k % matrix.nrows().max(1),
                col: k / matrix.nrows().max(1),
            });
        }
        if offset.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("surrogate offset must be finite".into()));
        }
        Ok(Self {
            kind: SurrogateKind::Affine,
            matrix,
            offset,
            provenance: "affine map".into(),
        })
    }

    /// Central-difference linearization `A(p) + J (v − p)` with per-coordinate
    /// step `1e-5·(1 + |p_i|)`.
    pub fn finite_difference(problem: &TestProblem, point: &DVector<f64>) -> Result<Self> {
        let n_v = problem.n_params();
        if point.len() != n_v {
            return Err(Error::dims("linearization point", n_v, point.len()));
        }
        let base = problem.forward(point)?;
        let cols: Vec<DVector<f64>> = (0..n_v)
            .into_par_iter()
            .map(|i| {
                let h = fd_step(point[i]);
                let mut plus = point.clone();
                let mut minus = point.clone();
                plus[i] += h;
                minus[i] -= h;
                Ok((problem.forward(&plus)? - problem.forward(&minus)?) / (2.0 * h))
            })
            .collect::<Result<_>>()?;
        let jac = DMatrix::from_columns(&cols);
        let offset = &base - &jac * point;
        let summary = if n_v <= 8 {
            format!("{:?}", point.as_slice())
        } else {
            format!("‖p‖₂ = {:?}, n = {n_v}", point.norm())
        };
        Ok(Self {
            kind: SurrogateKind::FiniteDifference,
            matrix: jac,
            offset,
            provenance: format!("central differences at {summary}, step 1e-5·(1+|p_i|)"),
        })
    }

    pub fn kind(&self) -> SurrogateKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn n_data(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v + &self.offset
    }
}

pub fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// `ε⁽ˡ⁾ = A(v⁽ˡ⁾) − (F v⁽ˡ⁾ + c)`, one row per sample.
pub fn error_samples(e: &Ensemble, s: &LinearSurrogate) -> Result<DMatrix<f64>> {
    if s.n_params() != e.n_params() || s.n_data() != e.n_data() {
        return Err(Error::dims(
            "surrogate vs ensemble",
            format!("{}x{}", e.n_data(), e.n_params()),
            format!("{}x{}", s.n_data(), s.n_params()),
        ));
    }
    let mut err = e.accurate_data() - e.params() * s.matrix().transpose();
    for mut row in err.row_iter_mut() {
        row -= s.offset().transpose();
    }
    Ok(err)
}

/// Where the parameter mean and covariance come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatsSource {
    /// Sample moments of the ensemble parameters (exact surrogate invariance).
    Sample,
    /// Mean and covariance of the supplied prior; error moments still from samples.
    AnalyticPrior,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StatsOptions<'a> {
    /// `None` picks `Sample` when `q > n_v`, otherwise `AnalyticPrior`.
    pub source: Option<StatsSource>,
    /// Drop the error/parameter cross-covariance.
    pub enhanced: bool,
    pub prior: Option<&'a GaussianDensity>,
}

/// Everything the posterior and design code needs about the total error.
#[derive(Clone, Debug)]
pub struct TotalErrorModel {
    pub eps_mean: DVector<f64>,
    pub c_ee: DMatrix<f64>,
    pub c_ev: DMatrix<f64>,
    pub v_mean: DVector<f64>,
    pub c_vv: DMatrix<f64>,
    pub f_tilde: DMatrix<f64>,
    pub gamma_total: DMatrix<f64>,
    pub noise: GaussianDensity,
    pub stats_source: StatsSource,
    pub enhanced: bool,
    pub layout: DataLayout,
    pub surrogate: LinearSurrogate,
    c_vv_factor: SpdFactor,
}

pub fn estimate_stats(
    e: &Ensemble,
    s: &LinearSurrogate,
    noise: &GaussianDensity,
    opts: StatsOptions<'_>,
) -> Result<TotalErrorModel> {
    let q = e.len();
    if q < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: q });
    }
    let n_v = e.n_params();
    let n_d = e.n_data();
    if noise.dim() != n_d {
        return Err(Error::dims("noise dimension", n_d, noise.dim()));
    }
    let source = match opts.source {
        Some(src) => src,
        None if q > n_v => StatsSource::Sample,
        None if opts.prior.is_some() => StatsSource::AnalyticPrior,
        None => return Err(Error::InsufficientSamples { needed: n_v + 1, got: q }),
    };
    let err = error_samples(e, s)?;
    let eps_mean = column_means(&err);
    let p_mean = column_means(e.params());
    let ec = center(&err, &eps_mean);
    let pc = center(e.params(), &p_mean);
    let scale = 1.0 / (q as f64 - 1.0);

    let c_ee = symmetrize(&(ec.transpose() * &ec * scale));
    let c_ev = if opts.enhanced {
        DMatrix::zeros(n_d, n_v)
    } else {
        ec.transpose() * &pc * scale
    };
    let (v_mean, c_vv) = match source {
        StatsSource::Sample => (p_mean, symmetrize(&(pc.transpose() * &pc * scale))),
        StatsSource::AnalyticPrior => {
            let prior = opts
                .prior
                .ok_or_else(|| Error::InvalidConfig("analytic-prior statistics need a prior".into()))?;
            if prior.dim() != n_v {
                return Err(Error::dims("prior dimension", n_v, prior.dim()));
            }
            (prior.mean().clone(), prior.cov().clone())
        }
    };
    TotalErrorModel::assemble(
        eps_mean,
        c_ee,
        c_ev,
        v_mean,
        c_vv,
        noise.clone(),
        source,
        opts.enhanced,
        e.layout(),
        s.clone(),
    )
}

impl TotalErrorModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        eps_mean: DVector<f64>,
        c_ee: DMatrix<f64>,
        c_ev: DMatrix<f64>,
        v_mean: DVector<f64>,
        c_vv: DMatrix<f64>,
        noise: GaussianDensity,
        stats_source: StatsSource,
        enhanced: bool,
        layout: DataLayout,
        surrogate: LinearSurrogate,
    ) -> Result<Self> {
        let c_vv_factor = SpdFactor::new(&c_vv, "parameter covariance C_vv")?;
        if c_vv_factor.is_degenerate() {
            return Err(Error::NotPositiveDefinite {
                context: "parameter covariance C_vv",
            });
        }
        // C_vv⁻¹ C_vε
        let gain = c_vv_factor.solve(&c_ev.transpose())?;
        let f_tilde = surrogate.matrix() + gain.transpose();
        let gamma = symmetrize(&(noise.cov() + &c_ee - &c_ev * &gain));
        let gamma_factor = SpdFactor::new(&gamma, "total error covariance")?;
        let mut gamma_total = gamma;
        for i in 0..gamma_total.nrows() {
            gamma_total[(i, i)] += gamma_factor.jitter();
        }
        Ok(Self {
            eps_mean,
            c_ee,
            c_ev,
            v_mean,
            c_vv,
            f_tilde,
            gamma_total,
            noise,
            stats_source,
            enhanced,
            layout,
            surrogate,
            c_vv_factor,
        })
    }

    /// Standard linear-Gaussian model: the surrogate is exact, so all error
    /// moments vanish and `F̃ = op`, `Γ_ν|v = Γ_e`.
    pub fn linear_gaussian(
        prior: &GaussianDensity,
        op: DMatrix<f64>,
        noise: &GaussianDensity,
        layout: DataLayout,
    ) -> Result<Self> {
        let n_d = op.nrows();
        let n_v = op.ncols();
        if layout.n_data() != n_d {
            return Err(Error::dims("layout vs operator rows", n_d, layout.n_data()));
        }
        if prior.dim() != n_v || noise.dim() != n_d {
            return Err(Error::dims(
                "prior/noise vs operator",
                format!("{n_v}/{n_d}"),
                format!("{}/{}", prior.dim(), noise.dim()),
            ));
        }
        Self::assemble(
            DVector::zeros(n_d),
            DMatrix::zeros(n_d, n_d),
            DMatrix::zeros(n_d, n_v),
            prior.mean().clone(),
            prior.cov().clone(),
            noise.clone(),
            StatsSource::AnalyticPrior,
            false,
            layout,
            LinearSurrogate::explicit(op)?,
        )
    }

    pub fn n_params(&self) -> usize {
        self.v_mean.len()
    }

    pub fn n_data(&self) -> usize {
        self.eps_mean.len()
    }

    pub fn c_vv_factor(&self) -> &SpdFactor {
        &self.c_vv_factor
    }

    /// `N(v₀, C_vv)` as used by the posterior.
    pub fn prior(&self) -> Result<GaussianDensity> {
        GaussianDensity::new(self.v_mean.clone(), self.c_vv.clone())
    }

    /// `c + e₀ + ε₀ − C_εv C_vv⁻¹ v₀`: what is subtracted from data before
    /// applying the corrected operator.
    pub fn data_offset(&self) -> Result<DVector<f64>> {
        let shift = &self.c_ev * self.c_vv_factor.solve_vec(&self.v_mean)?;
        Ok(self.surrogate.offset() + self.noise.mean() + &self.eps_mean - shift)
    }

    /// `F C_vv + C_εv`, i.e. `F̃ C_vv` without forming `C_vv⁻¹`.
    pub fn data_param_cross(&self) -> DMatrix<f64> {
        self.surrogate.matrix() * &self.c_vv + &self.c_ev
    }
}

/// `F̃ = F + C_εv C_vv⁻¹`.
pub fn corrected_operator(t: &TotalErrorModel) -> &DMatrix<f64> {
    #[cfg(debug_assertions)]
    {
        if let Ok(gain) = t.c_vv_factor.solve(&t.c_ev.transpose()) {
            let recomputed = t.surrogate.matrix() + gain.transpose();
            debug_assert!(
                crate::spd::relative_frobenius(&recomputed, &t.f_tilde) < 1e-10,
                "stored corrected operator is stale"
            );
        }
    }
    &t.f_tilde
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let q = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / q))
}

fn center(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= mean.transpose();
    }
    out
}

const BAES_MAGIC: [u8; 4] = *b"BAES";
const BAES_VERSION: u32 = 1;

/// Writes a `BAES` container: magic, version, dimensions, flags, then the
/// float64 blocks `ε₀, C_εε, C_εv, v₀, C_vv, F̃, Γ_ν|v, e₀, Γ_e, F, c`
/// (row-major, little-endian) and finally the surrogate provenance string.
pub fn write_stats(path: &Path, t: &TotalErrorModel) -> Result<()> {
    let mut w = ByteWriter::create(path)?;
    w.bytes(&BAES_MAGIC)?;
    w.u32(BAES_VERSION)?;
    w.u64(t.n_params() as u64)?;
    w.u64(t.n_data() as u64)?;
    w.u32(t.layout.sensors as u32)?;
    w.u32(t.layout.times as u32)?;
    w.u8(match t.stats_source {
        StatsSource::Sample => 0,
        StatsSource::AnalyticPrior => 1,
    })?;
    w.u8(t.enhanced as u8)?;
    w.u8(match t.surrogate.kind {
        SurrogateKind::Zero => 0,
        SurrogateKind::Explicit => 1,
        SurrogateKind::Affine => 2,
        SurrogateKind::FiniteDifference => 3,
    })?;
    w.vector(&t.eps_mean)?;
    w.matrix(&t.c_ee)?;
    w.matrix(&t.c_ev)?;
    w.vector(&t.v_mean)?;
    w.matrix(&t.c_vv)?;
    w.matrix(&t.f_tilde)?;
    w.matrix(&t.gamma_total)?;
    w.vector(t.noise.mean())?;
    w.matrix(t.noise.cov())?;
    w.matrix(t.surrogate.matrix())?;
    w.vector(t.surrogate.offset())?;
    let prov = t.surrogate.provenance.as_bytes();
    w.u64(prov.len() as u64)?;
    w.bytes(prov)?;
    w.finish()
}

pub fn read_stats(path: &Path) -> Result<TotalErrorModel> {
    let mut r = ByteReader::open(path)?;
    if r.array::<4>()? != BAES_MAGIC {
        return Err(Error::format(Some(path), "bad magic, expected \"BAES\""));
    }
    let version = r.u32()?;
    if version != BAES_VERSION {
        return Err(Error::format(Some(path), format!("unsupported version {version}")));
    }
    let n_v = r.len_u64()?;
    let n_d = r.len_u64()?;
    let layout = DataLayout::new(r.u32()? as usize, r.u32()? as usize);
    if layout.n_data() != n_d {
        return Err(Error::dims("baes layout vs n_d", n_d, layout.n_data()));
    }
    let stats_source = match r.u8()? {
        0 => StatsSource::Sample,
        1 => StatsSource::AnalyticPrior,
        x => return Err(Error::format(Some(path), format!("unknown stats source {x}"))),
    };
    let enhanced = r.u8()? != 0;
    let kind = match r.u8()? {
        0 => SurrogateKind::Zero,
        1 => SurrogateKind::Explicit,
        2 => SurrogateKind::Affine,
        3 => SurrogateKind::FiniteDifference,
        x => return Err(Error::format(Some(path), format!("unknown surrogate kind {x}"))),
    };
    let floats = n_d + n_d * n_d + n_d * n_v + n_v + n_v * n_v + n_d * n_v + n_d * n_d + n_d + n_d * n_d + n_d * n_v + n_d;
    if r.remaining()? < (floats as u64) * 8 + 8 {
        return Err(Error::dims("baes payload bytes", floats * 8 + 8, r.remaining()?));
    }
    let eps_mean = r.vector(n_d, "eps_mean")?;
    let c_ee = r.matrix(n_d, n_d, "C_ee")?;
    let c_ev = r.matrix(n_d, n_v, "C_ev")?;
    let v_mean = r.vector(n_v, "v_mean")?;
    let c_vv = r.matrix(n_v, n_v, "C_vv")?;
    let f_tilde = r.matrix(n_d, n_v, "F_tilde")?;
    let gamma_total = r.matrix(n_d, n_d, "gamma_total")?;
    let noise_mean = r.vector(n_d, "noise mean")?;
    let noise_cov = r.matrix(n_d, n_d, "noise cov")?;
    let f = r.matrix(n_d, n_v, "surrogate")?;
    let offset = r.vector(n_d, "surrogate offset")?;
    let plen = r.len_u64()?;
    let mut prov = vec![0u8; plen];
    for b in prov.iter_mut() {
        *b = r.u8()?;
    }
    r.expect_end()?;
    let provenance = String::from_utf8(prov).map_err(|_| Error::format(Some(path), "provenance is not utf-8"))?;
    let c_vv_factor = SpdFactor::new(&c_vv, "parameter covariance C_vv")?;
    Ok(TotalErrorModel {
        eps_mean,
        c_ee,
        c_ev,
        v_mean,
        c_vv,
        f_tilde,
        gamma_total,
        noise: GaussianDensity::new(noise_mean, noise_cov)?,
        stats_source,
        enhanced,
        layout,
        surrogate: LinearSurrogate {
            kind,
            matrix: f,
            offset,
            provenance,
        },
        c_vv_factor,
    })
}
