//! Design-dependent Gaussian posteriors and the A-optimal trace objective.

use nalgebra::{DMatrix, DVector};

use crate::bae::{corrected_operator, SurrogateKind, TotalErrorModel};
use crate::ensemble::DataLayout;
use crate::error::{Error, Result};
use crate::gaussian::{BlockSplit, GaussianDensity};
use crate::spd::{principal_submatrix, select_rows, symmetrize, woodbury_posterior_cov, SpdFactor};

/// Binary sensor selection, replicated over `n_t` observation times.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DesignVector {
    weights: Vec<bool>,
    n_t: usize,
}

impl DesignVector {
    pub fn new(weights: Vec<bool>, n_t: usize) -> Self {
        Self { weights, n_t }
    }

    pub fn empty(s: usize, n_t: usize) -> Self {
        Self::new(vec![false; s], n_t)
    }

    pub fn full(s: usize, n_t: usize) -> Self {
        Self::new(vec![true; s], n_t)
    }

    pub fn from_indices(s: usize, chosen: &[usize], n_t: usize) -> Result<Self> {
        let mut w = vec![false; s];
        for &j in chosen {
            if j >= s {
                return Err(Error::dims("design sensor index", format!("< {s}"), j));
            }
            w[j] = true;
        }
        Ok(Self::new(w, n_t))
    }

    pub fn for_layout(layout: DataLayout, chosen: &[usize]) -> Result<Self> {
        Self::from_indices(layout.sensors, chosen, layout.times)
    }

    pub fn weights(&self) -> &[bool] {
        &self.weights
    }

    pub fn n_sensors(&self) -> usize {
        self.weights.len()
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn count(&self) -> usize {
        self.weights.iter().filter(|&&w| w).count()
    }

    /// Chosen sensor indices in ascending order.
    pub fn sensors(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&j| self.weights[j]).collect()
    }

    /// Data indices `t·s + j` kept by the design, ascending.
    pub fn selected_rows(&self) -> Vec<usize> {
        let s = self.weights.len();
        let chosen = self.sensors();
        (0..self.n_t)
            .flat_map(|t| chosen.iter().map(move |&j| t * s + j))
            .collect()
    }

    fn check(&self, n_d: usize) -> Result<()> {
        if self.weights.len() * self.n_t != n_d {
            return Err(Error::dims(
                "design vs data length",
                n_d,
                format!("{}·{}", self.weights.len(), self.n_t),
            ));
        }
        Ok(())
    }
}

/// Entries of `v` observed by the design (`W v`).
pub fn apply_design(d: &DesignVector, v: &DVector<f64>) -> Result<DVector<f64>> {
    d.check(v.len())?;
    let rows = d.selected_rows();
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|&r| v[r])))
}

/// Rows of `m` observed by the design (`W M`).
pub fn apply_design_rows(d: &DesignVector, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    d.check(m.nrows())?;
    Ok(select_rows(m, &d.selected_rows()))
}

/// `W M Wᵀ` for a square data-space matrix.
pub fn apply_design_both(d: &DesignVector, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    d.check(m.nrows())?;
    if !m.is_square() {
        return Err(Error::dims("design sandwich", "square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(principal_submatrix(m, &d.selected_rows()))
}

/// Conjugate update for `d = op·v + e`, `v ~ prior`, `e ~ noise`.
pub fn linear_gaussian_posterior(
    prior: &GaussianDensity,
    op: &DMatrix<f64>,
    noise: &GaussianDensity,
    data: &DVector<f64>,
) -> Result<GaussianDensity> {
    if data.len() != op.nrows() || noise.dim() != op.nrows() {
        return Err(Error::dims(
            "posterior data/noise",
            op.nrows(),
            format!("{}/{}", data.len(), noise.dim()),
        ));
    }
    let cov = woodbury_posterior_cov(prior.cov(), op, noise.cov())?;
    if op.nrows() == 0 {
        return Ok(prior.clone());
    }
    // mean = v₀ + P Hᵀ (Γ + H P Hᵀ)⁻¹ (d − e₀ − H v₀)
    let p_ht = prior.cov() * op.transpose();
    let inner = symmetrize(&(noise.cov() + op * &p_ht));
    let innov = data - noise.mean() - op * prior.mean();
    let w = SpdFactor::new(&inner, "posterior innovation covariance")?.solve_vec(&innov)?;
    GaussianDensity::new(prior.mean() + p_ht * w, cov)
}

/// BAE posterior for the rows of `data` observed by `d`.
pub fn bae_posterior(t: &TotalErrorModel, d: &DesignVector, data: &DVector<f64>) -> Result<GaussianDensity> {
    if d.n_sensors() != t.layout.sensors || d.n_t() != t.layout.times {
        return Err(Error::dims(
            "design vs statistics layout",
            format!("{}x{}", t.layout.sensors, t.layout.times),
            format!("{}x{}", d.n_sensors(), d.n_t()),
        ));
    }
    let k = d.selected_rows().len();
    if data.len() != k {
        return Err(Error::dims("selected data length", k, data.len()));
    }
    let prior = t.prior()?;
    if k == 0 {
        return Ok(prior);
    }
    let centred = data - apply_design(d, &t.data_offset()?)?;
    let op = apply_design_rows(d, corrected_operator(t))?;
    let noise = GaussianDensity::new(DVector::zeros(k), apply_design_both(d, &t.gamma_total)?)?;
    linear_gaussian_posterior(&prior, &op, &noise, &centred)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelMode {
    Joint,
    Marginal,
}

/// Precomputed data-space matrices of the trace objective.
///
/// With `B = F C_vv + C_εv = F̃ C_vv` (restricted to the primary columns in
/// marginal mode), `M = Γ_ν|v + F̃ C_vv F̃ᵀ` and `N = B Bᵀ`, the objective is
/// `trace[(W M Wᵀ)⁻¹ W N Wᵀ] = ‖L⁻¹ W B‖²_F` with `L Lᵀ = W M Wᵀ`.
#[derive(Clone, Debug)]
pub struct ObjectiveKernel {
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub mode: KernelMode,
    pub split: Option<BlockSplit>,
    pub prior_trace: f64,
    pub layout: DataLayout,
}

impl ObjectiveKernel {
    pub fn n_sensors(&self) -> usize {
        self.layout.sensors
    }

    pub fn n_t(&self) -> usize {
        self.layout.times
    }

    pub fn empty_design(&self) -> DesignVector {
        DesignVector::empty(self.layout.sensors, self.layout.times)
    }

    pub fn design(&self, chosen: &[usize]) -> Result<DesignVector> {
        DesignVector::for_layout(self.layout, chosen)
    }
}

pub fn build_kernel(t: &TotalErrorModel, mode: KernelMode, split: Option<BlockSplit>) -> Result<ObjectiveKernel> {
    let cross = t.data_param_cross();
    let (b, prior_trace) = match mode {
        KernelMode::Joint => (cross.clone(), t.c_vv.trace()),
        KernelMode::Marginal => {
            let split = split.ok_or_else(|| Error::InvalidConfig("marginal mode needs a block split".into()))?;
            split.check(t.n_params())?;
            (
                cross.columns(0, split.n_primary).into_owned(),
                t.c_vv.view((0, 0), (split.n_primary, split.n_primary)).trace(),
            )
        }
    };
    let m = if t.surrogate.kind() == SurrogateKind::Zero {
        // F = 0: the C_εv C_vv⁻¹ C_vε terms cancel
        symmetrize(&(t.noise.cov() + &t.c_ee))
    } else {
        let c_vv_inv_cross_t = t.c_vv_factor().solve(&cross.transpose())?;
        symmetrize(&(&t.gamma_total + &cross * c_vv_inv_cross_t))
    };
    SpdFactor::new(&m, "objective denominator M")?;
    let n = symmetrize(&(&b * b.transpose()));
    Ok(ObjectiveKernel {
        m,
        n,
        b,
        mode,
        split: if mode == KernelMode::Marginal { split } else { None },
        prior_trace,
        layout: t.layout,
    })
}

/// `trace[K(w)]` (or `trace[K_m(w)]`); larger is better, zero for the empty design.
pub fn criterion(kernel: &ObjectiveKernel, d: &DesignVector) -> Result<f64> {
    check_design(kernel, d)?;
    let rows = d.selected_rows();
    if rows.is_empty() {
        return Ok(0.0);
    }
    let factor = SpdFactor::new(&principal_submatrix(&kernel.m, &rows), "selected denominator W M Wᵀ")?;
    let y = factor.solve_lower(&select_rows(&kernel.b, &rows))?;
    Ok(y.norm_squared())
}

/// Trace of the (marginal) posterior covariance, `prior_trace − criterion`.
pub fn posterior_trace(kernel: &ObjectiveKernel, d: &DesignVector) -> Result<f64> {
    Ok(kernel.prior_trace - criterion(kernel, d)?)
}

pub(crate) fn check_design(kernel: &ObjectiveKernel, d: &DesignVector) -> Result<()> {
    if d.n_sensors() != kernel.layout.sensors || d.n_t() != kernel.layout.times {
        return Err(Error::dims(
            "design vs kernel layout",
            format!("{}x{}", kernel.layout.sensors, kernel.layout.times),
            format!("{}x{}", d.n_sensors(), d.n_t()),
        ));
    }
    Ok(())
}
