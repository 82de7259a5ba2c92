//! Preconditioned Crank–Nicolson Metropolis sampling of design-restricted
//! posteriors under the accurate forward model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::GaussianDensity;
use crate::posterior::{apply_design, apply_design_both, DesignVector};
use crate::problems::TestProblem;
use crate::spd::{symmetrize, SpdFactor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcnConfig {
    pub beta: f64,
    pub n_steps: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for PcnConfig {
    fn default() -> Self {
        Self {
            beta: 0.2,
            n_steps: 200_000,
            n_burn: 20_000,
            thin: 10,
            seed: 0,
        }
    }
}

impl PcnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.n_burn >= self.n_steps {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be shorter than the chain ({})",
                self.n_burn, self.n_steps
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Thinned post-burn-in samples kept.
    pub fn kept(&self) -> usize {
        (self.n_steps - self.n_burn).div_ceil(self.thin)
    }
}

#[derive(Clone, Debug)]
pub struct ChainSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub trace: f64,
    pub acceptance: f64,
    pub ess: DVector<f64>,
    /// Thinned post-burn-in states, one per row.
    pub samples: DMatrix<f64>,
}

impl ChainSummary {
    /// Monte Carlo standard error of each mean coordinate.
    pub fn mean_stderr(&self) -> DVector<f64> {
        DVector::from_fn(self.mean.len(), |i, _| (self.cov[(i, i)] / self.ess[i].max(1.0)).sqrt())
    }
}

/// Runs a pCN chain started at the prior mean. `misfit` is the negative
/// log-likelihood `J` up to an additive constant.
pub fn run_chain<F>(prior: &GaussianDensity, mut misfit: F, cfg: &PcnConfig) -> Result<ChainSummary>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    cfg.validate()?;
    let n = prior.dim();
    let v0 = prior.mean();
    let shrink = (1.0 - cfg.beta * cfg.beta).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = v0.clone();
    let mut j = misfit(&v).map_err(|e| at_step(0, e))?;
    let mut accepted = 0usize;
    let mut samples = DMatrix::zeros(cfg.kept(), n);
    let mut kept = 0;
    for step in 0..cfg.n_steps {
        let xi = prior.centered_draw(&mut rng);
        let proposal = v0 + (&v - v0) * shrink + xi * cfg.beta;
        let j_prop = misfit(&proposal).map_err(|e| at_step(step + 1, e))?;
        let log_u = rng.random::<f64>().ln();
        if log_u < j - j_prop {
            v = proposal;
            j = j_prop;
            accepted += 1;
        }
        if step >= cfg.n_burn && (step - cfg.n_burn).is_multiple_of(cfg.thin) {
            samples.row_mut(kept).copy_from(&v.transpose());
            kept += 1;
        }
    }
    debug_assert_eq!(kept, samples.nrows());
    Ok(summarize(samples, accepted as f64 / cfg.n_steps as f64))
}

fn at_step(step: usize, e: Error) -> Error {
    Error::SolverFailure(format!("chain aborted at step {step}: {e}"))
}

fn summarize(samples: DMatrix<f64>, acceptance: f64) -> ChainSummary {
    let q = samples.nrows();
    let n = samples.ncols();
    let mean = DVector::from_iterator(n, samples.column_iter().map(|c| c.sum() / q as f64));
    let mut centred = samples.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = if q > 1 {
        symmetrize(&(centred.transpose() * &centred / (q as f64 - 1.0)))
    } else {
        DMatrix::zeros(n, n)
    };
    let ess = DVector::from_iterator(n, centred.column_iter().map(|c| effective_sample_size(c.as_slice())));
    ChainSummary {
        trace: cov.trace(),
        mean,
        cov,
        acceptance,
        ess,
        samples,
    }
}

/// Autocorrelation-based ESS with Geyer's initial positive sequence
/// truncation. `x` must already be centred.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let c0: f64 = x.iter().map(|a| a * a).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0;
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n / 2 {
        let pair = if lag == 0 { 1.0 } else { rho(lag) } + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}

/// Selected-data Gaussian misfit `½‖W(d − A(v) − e₀)‖²` in the `WΓ_eWᵀ` norm.
pub struct DesignMisfit<'a> {
    problem: &'a TestProblem,
    design: &'a DesignVector,
    data: DVector<f64>,
    noise_mean: DVector<f64>,
    factor: Option<SpdFactor>,
}

impl<'a> DesignMisfit<'a> {
    pub fn new(
        problem: &'a TestProblem,
        noise: &GaussianDensity,
        data: &DVector<f64>,
        design: &'a DesignVector,
    ) -> Result<Self> {
        let rows = design.selected_rows().len();
        if data.len() != rows {
            return Err(Error::dims("selected data length", rows, data.len()));
        }
        let noise_mean = apply_design(design, noise.mean())?;
        let factor = if rows == 0 {
            None
        } else {
            Some(SpdFactor::new(&apply_design_both(design, noise.cov())?, "selected noise covariance")?)
        };
        Ok(Self {
            problem,
            design,
            data: data.clone(),
            noise_mean,
            factor,
        })
    }

    pub fn eval(&self, v: &DVector<f64>) -> Result<f64> {
        let Some(factor) = &self.factor else {
            return Ok(0.0);
        };
        let pred = apply_design(self.design, &self.problem.forward(v)?)?;
        let r = &self.data - pred - &self.noise_mean;
        let w = factor.solve_lower(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()))?;
        Ok(0.5 * w.norm_squared())
    }
}

pub fn pcn_sample(
    problem: &TestProblem,
    prior: &GaussianDensity,
    noise: &GaussianDensity,
    data: &DVector<f64>,
    design: &DesignVector,
    cfg: &PcnConfig,
) -> Result<ChainSummary> {
    if prior.dim() != problem.n_params() {
        return Err(Error::dims("prior vs problem", problem.n_params(), prior.dim()));
    }
    let misfit = DesignMisfit::new(problem, noise, data, design)?;
    run_chain(prior, |v| misfit.eval(v), cfg)
}

/// Shortens or lengthens `beta` on pilot chains until acceptance falls in
/// `[0.2, 0.3]` or `rounds` pilots are spent. Returns the tuned config.
pub fn tune_beta<F>(prior: &GaussianDensity, misfit: F, cfg: &PcnConfig, pilot_steps: usize, rounds: usize) -> Result<PcnConfig>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut tuned = *cfg;
    for round in 0..rounds {
        let pilot = PcnConfig {
            n_steps: pilot_steps.max(2),
            n_burn: 0,
            thin: 1,
            seed: cfg.seed.wrapping_add(0x9e37_79b9 + round as u64),
            ..tuned
        };
        let acc = run_chain(prior, &misfit, &pilot)?.acceptance;
        if acc < 0.2 {
            tuned.beta *= 0.5;
        } else if acc > 0.3 && tuned.beta < 1.0 {
            tuned.beta = (tuned.beta * 1.5).min(1.0);
        } else {
            break;
        }
    }
    Ok(tuned)
}

/// Work estimate for a design comparison, in forward solves.
pub fn mcmc_forward_solves(n_designs: usize, n_seeds: usize, cfg: &PcnConfig) -> u128 {
    (cfg.n_steps as u128 + 1) * n_designs as u128 * n_seeds as u128 + n_seeds as u128
}

#[derive(Clone, Debug, PartialEq)]
pub struct McmcRow {
    pub design: usize,
    pub data_seed: u64,
    pub trace: f64,
    pub acceptance: f64,
    pub min_ess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McmcAggregate {
    pub design: usize,
    pub mean_trace: f64,
    pub std_trace: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct McmcTable {
    pub rows: Vec<McmcRow>,
    pub per_design: Vec<McmcAggregate>,
}

/// Draws a truth from the prior and noisy data at every sensor, seeded only
/// by `data_seed` so that all designs see the same synthetic experiment.
pub fn synthesize_data(
    problem: &TestProblem,
    prior: &GaussianDensity,
    noise: &GaussianDensity,
    data_seed: u64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let truth = prior.mean() + prior.centered_draw(&mut rng);
    let data = problem.forward(&truth)? + noise.mean() + noise.centered_draw(&mut rng);
    Ok((truth, data))
}

/// Chain seed for one (design, data seed) cell: a function of the contents,
/// not of the position in the list.
pub fn cell_seed(master: u64, data_seed: u64, design: &DesignVector) -> u64 {
    let mut h = splitmix(master ^ 0x5bd1_e995);
    h = splitmix(h ^ data_seed);
    h = splitmix(h ^ design.n_t() as u64);
    for chunk in design.weights().chunks(64) {
        let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, &w)| acc | ((w as u64) << i));
        h = splitmix(h ^ bits);
    }
    splitmix(h ^ design.n_sensors() as u64)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn compare_designs_mcmc(
    problem: &TestProblem,
    prior: &GaussianDensity,
    noise: &GaussianDensity,
    designs: &[DesignVector],
    data_seeds: &[u64],
    cfg: &PcnConfig,
) -> Result<McmcTable> {
    cfg.validate()?;
    if designs.is_empty() || data_seeds.is_empty() {
        return Ok(McmcTable::default());
    }
    let datasets: Vec<DVector<f64>> = data_seeds
        .iter()
        .map(|&s| synthesize_data(problem, prior, noise, s).map(|(_, d)| d))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..designs.len())
        .flat_map(|d| (0..data_seeds.len()).map(move |s| (d, s)))
        .collect();
    let rows: Vec<McmcRow> = cells
        .par_iter()
        .map(|&(di, si)| {
            let design = &designs[di];
            let data = apply_design(design, &datasets[si])?;
            let chain_cfg = PcnConfig {
                seed: cell_seed(cfg.seed, data_seeds[si], design),
                ..*cfg
            };
            let summary = pcn_sample(problem, prior, noise, &data, design, &chain_cfg)?;
            Ok(McmcRow {
                design: di,
                data_seed: data_seeds[si],
                trace: summary.trace,
                acceptance: summary.acceptance,
                min_ess: summary.ess.min(),
            })
        })
        .collect::<Result<_>>()?;
    let per_design = (0..designs.len())
        .map(|di| {
            let traces: Vec<f64> = rows.iter().filter(|r| r.design == di).map(|r| r.trace).collect();
            let n = traces.len() as f64;
            let mean = traces.iter().sum::<f64>() / n;
            let var = if traces.len() > 1 {
                traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            McmcAggregate {
                design: di,
                mean_trace: mean,
                std_trace: var.sqrt(),
            }
        })
        .collect();
    Ok(McmcTable { rows, per_design })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::linear_problem;
    use nalgebra::dvector;

    fn short(beta: f64, seed: u64) -> PcnConfig {
        PcnConfig {
            beta,
            n_steps: 2_000,
            n_burn: 100,
            thin: 1,
            seed,
        }
    }

    #[test]
    fn config_checks() {
        assert!(PcnConfig::default().validate().is_ok());
        assert!(PcnConfig { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(PcnConfig { beta: 1.5, ..Default::default() }.validate().is_err());
        assert!(PcnConfig { n_burn: 10, n_steps: 10, ..Default::default() }.validate().is_err());
        assert_eq!(PcnConfig { n_steps: 25, n_burn: 5, thin: 10, ..Default::default() }.kept(), 2);
    }

    #[test]
    fn flat_likelihood_accepts_everything() {
        let s = run_chain(&GaussianDensity::standard(2), |_| Ok(0.0), &short(0.3, 1)).unwrap();
        assert_eq!(s.acceptance, 1.0);
    }

    #[test]
    fn beta_one_is_independent_prior_draws() {
        let prior = GaussianDensity::new(dvector![1.0, -2.0], DMatrix::identity(2, 2)).unwrap();
        let cfg = PcnConfig { n_steps: 5, n_burn: 0, thin: 1, beta: 1.0, seed: 4 };
        let s = run_chain(&prior, |_| Ok(0.0), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for r in 0..5 {
            let draw = prior.mean() + prior.centered_draw(&mut rng);
            let _: f64 = rng.random();
            assert_eq!(s.samples.row(r).transpose(), draw);
        }
    }

    #[test]
    fn constant_shift_keeps_decisions() {
        let prior = GaussianDensity::standard(2);
        let j = |v: &DVector<f64>| Ok(0.5 * ((v[0] - 1.0).powi(2) + v[1].powi(2)));
        let a = run_chain(&prior, j, &short(0.5, 3)).unwrap();
        let b = run_chain(&prior, |v| j(v).map(|x| x + 17.0), &short(0.5, 3)).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.acceptance, b.acceptance);
    }

    #[test]
    fn misfit_failure_reports_step() {
        let mut calls = 0;
        let err = run_chain(
            &GaussianDensity::standard(1),
            |_| {
                calls += 1;
                if calls > 3 {
                    Err(Error::SolverFailure("boom".into()))
                } else {
                    Ok(0.0)
                }
            },
            &short(0.2, 0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("step 3"), "{err}");
    }

    #[test]
    fn ess_of_iid_and_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let iid: Vec<f64> = (0..4000).map(|_| rng.random::<f64>() - 0.5).collect();
        let ess = effective_sample_size(&iid);
        assert!(ess > 3000.0, "{ess}");
        let mut x = 0.0;
        let ar: Vec<f64> = (0..4000)
            .map(|_| {
                x = 0.9 * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        let m = ar.iter().sum::<f64>() / 4000.0;
        let centred: Vec<f64> = ar.iter().map(|a| a - m).collect();
        assert!(effective_sample_size(&centred) < 600.0);
    }

    #[test]
    fn duplicated_designs_match() {
        let p = linear_problem(DMatrix::identity(2, 2)).unwrap();
        let prior = GaussianDensity::standard(2);
        let noise = GaussianDensity::standard(2);
        let d = DesignVector::from_indices(2, &[0], 1).unwrap();
        let cfg = PcnConfig { n_steps: 500, n_burn: 50, thin: 5, beta: 0.3, seed: 11 };
        let t = compare_designs_mcmc(&p, &prior, &noise, &[d.clone(), d], &[1, 2], &cfg).unwrap();
        assert_eq!(t.rows[0].trace, t.rows[2].trace);
        assert_eq!(t.rows[1].trace, t.rows[3].trace);
        assert!(compare_designs_mcmc(&p, &prior, &noise, &[], &[1], &cfg).unwrap().rows.is_empty());
        assert_eq!(mcmc_forward_solves(2, 2, &cfg), 501 * 4 + 2);
    }
}
