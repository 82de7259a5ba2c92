//! Built-in forward models.

mod darcy;
mod levelset;

pub use darcy::{BoundaryFluxes, DarcySolution, MiniDarcy, PriorParams, SensorGrid, MAX_GRID, MAX_SENSORS_PER_SIDE};
pub use levelset::LevelSetMap;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::DataLayout;
use crate::error::{Error, Result};
use crate::gaussian::{BlockSplit, GaussianDensity};

#[derive(Clone, Debug)]
enum Forward {
    Linear(DMatrix<f64>),
    Exp { op: DMatrix<f64>, alpha: f64 },
    Darcy(MiniDarcy),
}

/// A deterministic accurate forward map `A(v)` with its data layout and prior.
#[derive(Clone, Debug)]
pub struct TestProblem {
    name: String,
    n_params: usize,
    layout: DataLayout,
    split: Option<BlockSplit>,
    forward: Forward,
}

impl TestProblem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn layout(&self) -> DataLayout {
        self.layout
    }

    pub fn split(&self) -> Option<BlockSplit> {
        self.split
    }

    /// Reinterprets the data vector as `sensors × times` (time-major).
    pub fn with_layout(mut self, layout: DataLayout) -> Result<Self> {
        if layout.n_data() != self.layout.n_data() {
            return Err(Error::dims("problem layout", self.layout.n_data(), layout.n_data()));
        }
        self.layout = layout;
        Ok(self)
    }

    pub fn with_split(mut self, split: BlockSplit) -> Result<Self> {
        split.check(self.n_params)?;
        self.split = Some(split);
        Ok(self)
    }

    pub fn darcy(&self) -> Option<&MiniDarcy> {
        match &self.forward {
            Forward::Darcy(d) => Some(d),
            _ => None,
        }
    }

    pub fn forward(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n_params {
            return Err(Error::dims("forward input", self.n_params, v.len()));
        }
        let out = match &self.forward {
            Forward::Linear(f) => f * v,
            Forward::Exp { op, alpha } => (op * v * *alpha).map(f64::exp_m1),
            Forward::Darcy(d) => d.forward(v)?,
        };
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::SolverFailure(format!("{} produced a non-finite output", self.name)));
        }
        Ok(out)
    }

    /// Problem-specific default prior (`N(0, I)` for the algebraic problems).
    pub fn default_prior(&self) -> Result<GaussianDensity> {
        build_priors(self, PriorParams::default())
    }
}

/// `A(v) = F v`.
pub fn linear_problem(f_true: DMatrix<f64>) -> Result<TestProblem> {
    check_finite(&f_true)?;
    Ok(TestProblem {
        name: "linear".into(),
        n_params: f_true.ncols(),
        layout: DataLayout::new(f_true.nrows(), 1),
        split: None,
        forward: Forward::Linear(f_true),
    })
}

/// `A(v) = exp(α F v) − 1`, entrywise.
pub fn exp_problem(f: DMatrix<f64>, alpha: f64) -> Result<TestProblem> {
    check_finite(&f)?;
    if !alpha.is_finite() {
        return Err(Error::InvalidConfig("alpha must be finite".into()));
    }
    Ok(TestProblem {
        name: "exp".into(),
        n_params: f.ncols(),
        layout: DataLayout::new(f.nrows(), 1),
        split: None,
        forward: Forward::Exp { op: f, alpha },
    })
}

/// Desk-scale Darcy problem with parameters `(m, ψ)`, `m` primary.
pub fn mini_darcy_problem(grid_n: usize, sensors: SensorGrid) -> Result<TestProblem> {
    let d = MiniDarcy::new(grid_n, sensors)?;
    Ok(TestProblem {
        name: "darcy".into(),
        n_params: d.n_flux() + d.n_level_set(),
        layout: DataLayout::new(sensors.count(), 1),
        split: Some(BlockSplit::new(d.n_flux(), d.n_level_set())),
        forward: Forward::Darcy(d),
    })
}

pub fn build_priors(problem: &TestProblem, params: PriorParams) -> Result<GaussianDensity> {
    match &problem.forward {
        Forward::Darcy(d) => d.prior(params),
        _ => Ok(GaussianDensity::standard(problem.n_params)),
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    match m.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(Error::NonFiniteValue {
            what: "problem operator",
            row: k % m.nrows(),
            col: k / m.nrows(),
        }),
        None => Ok(()),
    }
}
