//! Steady Darcy flow `∇·(e^{Φ(ψ)} ∇u) = 0` on the unit square.
//!
//! Vertex-centred finite volumes on an `n × n` node grid (spacing
//! `h = 1/(n−1)`), which reduces to the 5-point stencil in the interior.
//! Boundary conditions: flux `e^{m}` in through the top, flux `−1` on the
//! bottom, `u = 0` on the left, no flux on the right. Boundary fluxes use
//! midpoint quadrature over each node's dual face. The resulting SPD system is
//! banded (bandwidth `n−1`) and solved by banded Cholesky.

use nalgebra::{DMatrix, DVector};

use super::levelset::LevelSetMap;
use crate::error::{Error, Result};
use crate::gaussian::GaussianDensity;
use crate::spd::symmetrize;

pub const MAX_GRID: usize = 64;
pub const MAX_SENSORS_PER_SIDE: usize = 16;

/// Regular `nx × ny` array of sensors spanning the closed unit square.
/// Sensor `b·nx + a` sits at `(a/(nx−1), b/(ny−1))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SensorGrid {
    pub nx: usize,
    pub ny: usize,
}

impl SensorGrid {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny }
    }

    pub fn count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        let coord = |k: usize, n: usize| if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
        let mut pts = Vec::with_capacity(self.count());
        for b in 0..self.ny {
            for a in 0..self.nx {
                pts.push((coord(a, self.nx), coord(b, self.ny)));
            }
        }
        pts
    }
}

#[derive(Clone, Debug)]
pub struct MiniDarcy {
    n: usize,
    sensors: Vec<(f64, f64)>,
    level_set: LevelSetMap,
}

/// Net inflow through each boundary segment.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryFluxes {
    pub top: f64,
    pub bottom: f64,
    pub left: f64,
    pub right: f64,
}

impl BoundaryFluxes {
    pub fn net(&self) -> f64 {
        self.top + self.bottom + self.left + self.right
    }
}

#[derive(Clone, Debug)]
pub struct DarcySolution {
    n: usize,
    /// Nodal pressure, index `j·n + i` for node `(i h, j h)`.
    pub u: Vec<f64>,
    pub relative_residual: f64,
    pub fluxes: BoundaryFluxes,
}

impl DarcySolution {
    /// Bilinear interpolation of the nodal field.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let n = self.n;
        let h = 1.0 / (n - 1) as f64;
        let locate = |s: f64| {
            let f = (s / h).clamp(0.0, (n - 1) as f64);
            let i0 = (f.floor() as usize).min(n - 2);
            (i0, f - i0 as f64)
        };
        let (i0, tx) = locate(x);
        let (j0, ty) = locate(y);
        let u = |i: usize, j: usize| self.u[j * n + i];
        (1.0 - tx) * (1.0 - ty) * u(i0, j0)
            + tx * (1.0 - ty) * u(i0 + 1, j0)
            + (1.0 - tx) * ty * u(i0, j0 + 1)
            + tx * ty * u(i0 + 1, j0 + 1)
    }
}

impl MiniDarcy {
    pub fn new(grid_n: usize, sensors: SensorGrid) -> Result<Self> {
        if !(3..=MAX_GRID).contains(&grid_n) {
            return Err(Error::InvalidConfig(format!("grid size must be in 3..={MAX_GRID}, got {grid_n}")));
        }
        if sensors.nx == 0
            || sensors.ny == 0
            || sensors.nx > MAX_SENSORS_PER_SIDE
            || sensors.ny > MAX_SENSORS_PER_SIDE
        {
            return Err(Error::InvalidConfig(format!(
                "sensor grid must be between 1x1 and {MAX_SENSORS_PER_SIDE}x{MAX_SENSORS_PER_SIDE}"
            )));
        }
        Ok(Self {
            n: grid_n,
            sensors: sensors.points(),
            level_set: LevelSetMap::binary(),
        })
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    pub fn n_flux(&self) -> usize {
        self.n
    }

    pub fn n_level_set(&self) -> usize {
        self.n * self.n
    }

    pub fn sensor_points(&self) -> &[(f64, f64)] {
        &self.sensors
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let h = 1.0 / (self.n - 1) as f64;
        (i as f64 * h, j as f64 * h)
    }

    /// Parameter vector is `[m (n); ψ (n²)]`, data is `u` at the sensors.
    pub fn forward(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        if v.len() != n + n * n {
            return Err(Error::dims("darcy parameters", n + n * n, v.len()));
        }
        let sol = self.solve(&v.as_slice()[..n], &v.as_slice()[n..])?;
        Ok(DVector::from_iterator(
            self.sensors.len(),
            self.sensors.iter().map(|&(x, y)| sol.at(x, y)),
        ))
    }

    pub fn solve(&self, m: &[f64], psi: &[f64]) -> Result<DarcySolution> {
        let n = self.n;
        if m.len() != n || psi.len() != n * n {
            return Err(Error::dims("darcy fields", format!("{n} + {}", n * n), format!("{} + {}", m.len(), psi.len())));
        }
        if m.iter().chain(psi).any(|x| !x.is_finite()) {
            return Err(Error::SolverFailure("non-finite parameter".into()));
        }
        let h = 1.0 / (n - 1) as f64;
        let kappa: Vec<f64> = psi.iter().map(|&p| self.level_set.eval(p).exp()).collect();
        let k_at = |i: usize, j: usize| kappa[j * n + i];
        let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);
        // dual face length relative to h
        let edge_weight = |k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };

        let cols = n - 1;
        let unknowns = cols * n;
        let idx = |i: usize, j: usize| j * cols + (i - 1);
        let mut a = BandMatrix::new(unknowns, cols);
        let mut b = vec![0.0; unknowns];
        let mut left = 0.0;
        let mut left_links = Vec::new();

        for j in 0..n {
            for i in 1..n {
                let p = idx(i, j);
                // horizontal neighbours
                for (ni, nj) in [(i - 1, j), (i + 1, j)] {
                    if ni >= n {
                        continue;
                    }
                    let t = harmonic(k_at(i, j), k_at(ni, nj)) * edge_weight(j);
                    a.add(p, p, t);
                    if ni == 0 {
                        left_links.push((p, t));
                    } else if ni > i {
                        a.add(idx(ni, nj), p, -t);
                    }
                }
                // vertical neighbours
                for nj in [j.wrapping_sub(1), j + 1] {
                    if nj >= n {
                        continue;
                    }
                    let t = harmonic(k_at(i, j), k_at(i, nj)) * edge_weight(i);
                    a.add(p, p, t);
                    if nj > j {
                        a.add(idx(i, nj), p, -t);
                    }
                }
                let w = edge_weight(i) * h;
                if j == n - 1 {
                    b[p] += m[i].exp() * w;
                }
                if j == 0 {
                    b[p] -= w;
                }
            }
        }
        let top: f64 = (1..n).map(|i| m[i].exp() * edge_weight(i) * h).sum();
        let bottom: f64 = -(1..n).map(|i| edge_weight(i) * h).sum::<f64>();

        let factor = a.cholesky().ok_or_else(|| Error::SolverFailure("system matrix not positive definite".into()))?;
        let x = factor.solve(&b);
        let ax = a.mul_vec(&x);
        let rnorm = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let bnorm = b.iter().map(|q| q * q).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let relative_residual = rnorm / bnorm;
        if !relative_residual.is_finite() || relative_residual > 1e-10 {
            return Err(Error::SolverFailure(format!("relative residual {relative_residual:e} above 1e-10")));
        }
        for &(p, t) in &left_links {
            left -= t * x[p];
        }
        let mut u = vec![0.0; n * n];
        for j in 0..n {
            for i in 1..n {
                u[j * n + i] = x[idx(i, j)];
            }
        }
        Ok(DarcySolution {
            n,
            u,
            relative_residual,
            fluxes: BoundaryFluxes {
                top,
                bottom,
                left,
                right: 0.0,
            },
        })
    }

    /// Squared-exponential covariance `exp(−‖x−y‖²/c1²)` over the grid nodes.
    pub fn level_set_covariance(&self, c1: f64) -> DMatrix<f64> {
        let n = self.n;
        let pts: Vec<(f64, f64)> = (0..n * n).map(|k| self.node(k % n, k / n)).collect();
        DMatrix::from_fn(n * n, n * n, |a, b| {
            let (dx, dy) = (pts[a].0 - pts[b].0, pts[a].1 - pts[b].1);
            (-(dx * dx + dy * dy) / (c1 * c1)).exp()
        })
    }

    /// `(c2 − c3 d²/dx²)⁻²` on the top boundary nodes, 3-point Laplacian with
    /// homogeneous Dirichlet values just beyond both ends.
    pub fn flux_covariance(&self, c2: f64, c3: f64) -> Result<DMatrix<f64>> {
        let n = self.n;
        let h = 1.0 / (n - 1) as f64;
        let off = c3 / (h * h);
        let a = DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                c2 + 2.0 * off
            } else if r.abs_diff(c) == 1 {
                -off
            } else {
                0.0
            }
        });
        let chol = nalgebra::Cholesky::new(a).ok_or(Error::NotPositiveDefinite {
            context: "flux prior operator",
        })?;
        let inv = chol.inverse();
        Ok(symmetrize(&(&inv * &inv)))
    }

    /// Independent blocks: flux prior for `m`, squared-exponential for `ψ`, zero means.
    pub fn prior(&self, params: PriorParams) -> Result<GaussianDensity> {
        params.validate()?;
        let n = self.n;
        let nv = n + n * n;
        let mut cov = DMatrix::zeros(nv, nv);
        cov.view_mut((0, 0), (n, n)).copy_from(&self.flux_covariance(params.c2, params.c3)?);
        cov.view_mut((n, n), (n * n, n * n)).copy_from(&self.level_set_covariance(params.c1));
        GaussianDensity::new(DVector::zeros(nv), cov)
    }
}

/// Prior hyperparameters: `c1` is the level-set length scale, `c2`/`c3` shape
/// the boundary-flux operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            c1: 1.0 / 8.0,
            c2: 2.0,
            c3: 8e-2,
        }
    }
}

impl PriorParams {
    pub fn validate(&self) -> Result<()> {
        if [self.c1, self.c2, self.c3].iter().all(|c| c.is_finite() && *c > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("prior hyperparameters must be positive: {self:?}")))
        }
    }
}

/// Symmetric band matrix storing the lower band row-wise.
struct BandMatrix {
    n: usize,
    bw: usize,
    // row k holds entries (k, k-bw) .. (k, k)
    data: Vec<f64>,
}

impl BandMatrix {
    fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bw);
        r * (self.bw + 1) + (self.bw - (r - c))
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    /// Adds to the lower-triangle entry `(r, c)`, `c ≤ r`.
    fn add(&mut self, r: usize, c: usize, x: f64) {
        let s = self.slot(r, c);
        self.data[s] += x;
    }

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            for c in lo..=r {
                let a = self.data[self.slot(r, c)];
                y[r] += a * x[c];
                if c != r {
                    y[c] += a * x[r];
                }
            }
        }
        y
    }

    fn cholesky(&self) -> Option<BandMatrix> {
        let mut l = BandMatrix::new(self.n, self.bw);
        for k in 0..self.n {
            let lo = k.saturating_sub(self.bw);
            for j in lo..=k {
                let mut s = self.get(k, j);
                let plo = lo.max(j.saturating_sub(self.bw));
                for p in plo..j {
                    s -= l.data[l.slot(k, p)] * l.data[l.slot(j, p)];
                }
                let slot = l.slot(k, j);
                if j == k {
                    if !(s > 0.0) {
                        return None;
                    }
                    l.data[slot] = s.sqrt();
                } else {
                    l.data[slot] = s / l.data[l.slot(j, j)];
                }
            }
        }
        Some(l)
    }

    /// Solves `L Lᵀ x = b` for a factor produced by [`Self::cholesky`].
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for k in 0..n {
            let lo = k.saturating_sub(self.bw);
            let mut s = y[k];
            for p in lo..k {
                s -= self.data[self.slot(k, p)] * y[p];
            }
            y[k] = s / self.data[self.slot(k, k)];
        }
        for k in (0..n).rev() {
            let hi = (k + self.bw).min(n - 1);
            let mut s = y[k];
            for r in k + 1..=hi {
                s -= self.data[self.slot(r, k)] * y[r];
            }
            y[k] = s / self.data[self.slot(k, k)];
        }
        y
    }
}
