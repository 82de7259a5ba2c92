//! Turning options into problems, ensembles, error models and kernels.

use std::path::{Path, PathBuf};

use bae_oed::ensemble::{csv_paths, read_csv_matrix};
use bae_oed::{
    build_kernel, build_priors, estimate_stats, exp_problem, linear_problem, load_ensemble, load_ensemble_with_layout,
    mini_darcy_problem, prior_predictive_noise, read_stats, BlockSplit, DMatrix, DVector, DataLayout, Ensemble,
    Error, GaussianDensity, KernelMode, LinearSurrogate, ObjectiveKernel, PriorParams, SensorGrid, StatsOptions,
    StatsSource, TestProblem, TotalErrorModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{ModelArgs, ProblemArgs, ProblemKind, SourceArg};
use crate::error::{usage, CliError};
use crate::manifest::Recorder;

pub struct Problem {
    pub problem: TestProblem,
    pub prior: GaussianDensity,
}

pub fn parse_pair(s: &str, what: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("{what} must look like AxB, got {s:?}")))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| usage(format!("bad {what} {s:?}")));
    Ok((p(a)?, p(b)?))
}

/// Uniform entries in `[-1, 1] / √n_v`, row-major from a ChaCha8 stream.
pub fn random_operator(n_d: usize, n_v: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n_v.max(1) as f64).sqrt();
    DMatrix::from_row_iterator(n_d, n_v, (0..n_d * n_v).map(|_| rng.random_range(-1.0..=1.0) * scale))
}

pub fn build_problem(a: &ProblemArgs, rec: &mut Recorder) -> Result<Option<Problem>, CliError> {
    let Some(kind) = a.problem else {
        return Ok(None);
    };
    let problem = match kind {
        ProblemKind::Linear | ProblemKind::Exp => {
            if a.n_params == 0 || a.sensors == 0 || a.times == 0 {
                return Err(usage("--n-params, --sensors and --times must be positive"));
            }
            let layout = DataLayout::new(a.sensors, a.times);
            let op = match &a.operator {
                Some(path) => {
                    rec.input(path);
                    let m = read_csv_matrix(path, "operator")?;
                    if m.shape() != (layout.n_data(), a.n_params) {
                        return Err(Error::DimensionMismatch {
                            context: "operator shape (sensors·times × n-params)",
                            expected: format!("{}x{}", layout.n_data(), a.n_params),
                            actual: format!("{}x{}", m.nrows(), m.ncols()),
                        }
                        .into());
                    }
                    m
                }
                None => {
                    rec.seed("problem_seed", a.problem_seed);
                    random_operator(layout.n_data(), a.n_params, a.problem_seed)
                }
            };
            let p = if kind == ProblemKind::Linear {
                linear_problem(op)?
            } else {
                exp_problem(op, a.alpha)?
            };
            p.with_layout(layout)?
        }
        ProblemKind::Darcy => {
            if a.times != 1 {
                return Err(usage("the darcy problem observes a single time (--times 1)"));
            }
            let (nx, ny) = parse_pair(&a.sensor_grid, "--sensor-grid")?;
            mini_darcy_problem(a.grid, SensorGrid::new(nx, ny))?
        }
    };
    let params = PriorParams {
        c1: a.c1,
        c2: a.c2,
        c3: a.c3,
    };
    params.validate()?;
    let prior = build_priors(&problem, params)?;
    Ok(Some(Problem { problem, prior }))
}

pub fn require_problem(p: Option<Problem>, why: &str) -> Result<Problem, CliError> {
    p.ok_or_else(|| usage(format!("--problem is required {why}")))
}

pub fn isotropic_noise(n: usize, std: f64) -> Result<GaussianDensity, CliError> {
    if !(std.is_finite() && std > 0.0) {
        return Err(usage(format!("--noise-std must be positive, got {std}")));
    }
    Ok(GaussianDensity::new(DVector::zeros(n), DMatrix::identity(n, n) * (std * std))?)
}

pub fn record_ensemble_inputs(path: &Path, rec: &mut Recorder) {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let (p, d) = csv_paths(path);
        rec.input(p);
        rec.input(d);
    } else {
        rec.input(path);
    }
}

pub fn load_ensemble_for(
    path: &Path,
    layout: Option<&str>,
    problem: Option<&Problem>,
    max_samples: Option<usize>,
    rec: &mut Recorder,
) -> Result<Ensemble, CliError> {
    record_ensemble_inputs(path, rec);
    let layout = match layout {
        Some(s) => Some(parse_pair(s, "--layout").map(|(s, t)| DataLayout::new(s, t))?),
        None => problem.map(|p| p.problem.layout()),
    };
    let mut e = match layout {
        Some(l) => load_ensemble_with_layout(path, l)?,
        None => load_ensemble(path)?,
    };
    if let Some(q) = max_samples {
        e = e.truncated(q)?;
    }
    if let Some(p) = problem {
        if p.problem.n_params() != e.n_params() || p.problem.layout().n_data() != e.n_data() {
            return Err(Error::DimensionMismatch {
                context: "ensemble vs --problem",
                expected: format!("n_v={} n_d={}", p.problem.n_params(), p.problem.layout().n_data()),
                actual: format!("n_v={} n_d={}", e.n_params(), e.n_data()),
            }
            .into());
        }
    }
    Ok(e)
}

pub fn build_surrogate(
    spec: &str,
    e: &Ensemble,
    problem: Option<&Problem>,
    rec: &mut Recorder,
) -> Result<LinearSurrogate, CliError> {
    match spec {
        "zero" => Ok(LinearSurrogate::zero(e.n_data(), e.n_params())),
        "fd" => {
            let p = problem.ok_or_else(|| usage("--surrogate fd needs --problem to differentiate"))?;
            Ok(LinearSurrogate::finite_difference(&p.problem, p.prior.mean())?)
        }
        other => {
            let path = other
                .strip_prefix("matrix:")
                .ok_or_else(|| usage(format!("--surrogate must be zero, fd or matrix:<csv>, got {other:?}")))?;
            let path = PathBuf::from(path);
            rec.input(&path);
            let m = read_csv_matrix(&path, "surrogate matrix")?;
            if m.shape() != (e.n_data(), e.n_params()) {
                return Err(Error::DimensionMismatch {
                    context: "surrogate matrix shape",
                    expected: format!("{}x{}", e.n_data(), e.n_params()),
                    actual: format!("{}x{}", m.nrows(), m.ncols()),
                }
                .into());
            }
            Ok(LinearSurrogate::explicit(m)?)
        }
    }
}

pub fn noise_for(e: &Ensemble, std: Option<f64>, fraction: f64) -> Result<GaussianDensity, CliError> {
    match std {
        Some(s) => isotropic_noise(e.n_data(), s),
        None => Ok(prior_predictive_noise(e, fraction)?),
    }
}

pub struct Model {
    pub stats: TotalErrorModel,
    pub problem: Option<Problem>,
}

pub fn source_name(s: StatsSource) -> &'static str {
    match s {
        StatsSource::Sample => "sample",
        StatsSource::AnalyticPrior => "analytic-prior",
    }
}

/// Reads saved statistics, or estimates them from an ensemble.
pub fn load_model(m: &ModelArgs, rec: &mut Recorder) -> Result<Model, CliError> {
    let problem = build_problem(&m.problem, rec)?;
    let stats = if let Some(path) = &m.stats {
        rec.input(path);
        read_stats(path)?
    } else {
        let path = m
            .ensemble
            .as_ref()
            .ok_or_else(|| usage("one of --ensemble or --stats is required"))?;
        let e = load_ensemble_for(path, m.layout.as_deref(), problem.as_ref(), m.max_samples, rec)?;
        let surrogate = build_surrogate(&m.surrogate, &e, problem.as_ref(), rec)?;
        let noise = noise_for(&e, m.noise_std, m.noise_fraction)?;
        let source = match m.stats_source {
            SourceArg::Auto => None,
            SourceArg::Sample => Some(StatsSource::Sample),
            SourceArg::Analytic => Some(StatsSource::AnalyticPrior),
        };
        let opts = StatsOptions {
            source,
            enhanced: m.enhanced,
            prior: problem.as_ref().map(|p| &p.prior),
        };
        rec.result("noise_std", noise.cov()[(0, 0)].sqrt());
        estimate_stats(&e, &surrogate, &noise, opts)?
    };
    eprintln!(
        "stats source: {}{}",
        source_name(stats.stats_source),
        if m.stats.is_some() { " (saved statistics)" } else { "" }
    );
    rec.result("stats_source", source_name(stats.stats_source));
    rec.result("enhanced", stats.enhanced);
    rec.result("surrogate", stats.surrogate.provenance().to_string());
    Ok(Model { stats, problem })
}

pub fn kernel_for(t: &TotalErrorModel, marginal: Option<usize>) -> Result<ObjectiveKernel, CliError> {
    match marginal {
        None => Ok(build_kernel(t, KernelMode::Joint, None)?),
        Some(np) => {
            let n_v = t.n_params();
            if np == 0 || np > n_v {
                return Err(usage(format!("--marginal must lie in 1..={n_v}, got {np}")));
            }
            Ok(build_kernel(t, KernelMode::Marginal, Some(BlockSplit::new(np, n_v - np)))?)
        }
    }
}
