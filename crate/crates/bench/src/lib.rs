//! Fixtures shared by the benchmarks.

use bae_oed::{
    build_kernel, estimate_stats, exp_problem, mini_darcy_problem, prior_predictive_noise, synthesize_ensemble,
    DMatrix, DataLayout, Ensemble, GaussianDensity, KernelMode, LinearSurrogate, ObjectiveKernel, SensorGrid,
    StatsOptions, TestProblem,
};

pub struct Fixture {
    pub problem: TestProblem,
    pub ensemble: Ensemble,
    pub noise: GaussianDensity,
}

impl Fixture {
    pub fn zero_surrogate(&self) -> LinearSurrogate {
        LinearSurrogate::zero(self.ensemble.n_data(), self.ensemble.n_params())
    }

    pub fn kernel(&self) -> ObjectiveKernel {
        let t = estimate_stats(&self.ensemble, &self.zero_surrogate(), &self.noise, StatsOptions::default())
            .expect("fixture statistics");
        build_kernel(&t, KernelMode::Joint, None).expect("fixture kernel")
    }
}

/// exp problem with a fixed, dense, well-scaled operator.
pub fn exp_fixture(n_v: usize, sensors: usize, times: usize, q: usize) -> Fixture {
    let layout = DataLayout::new(sensors, times);
    let scale = 1.0 / (n_v as f64).sqrt();
    let f = DMatrix::from_fn(layout.n_data(), n_v, |i, j| ((i * 7 + j * 13) as f64 * 0.37).sin() * scale);
    let problem = exp_problem(f, 0.5).and_then(|p| p.with_layout(layout)).expect("exp problem");
    finish(problem, q)
}

/// Desk-scale Darcy problem on a `grid`² mesh with `side`² candidate sensors.
pub fn darcy_fixture(grid: usize, side: usize, q: usize) -> Fixture {
    finish(mini_darcy_problem(grid, SensorGrid::new(side, side)).expect("darcy problem"), q)
}

fn finish(problem: TestProblem, q: usize) -> Fixture {
    let prior = problem.default_prior().expect("prior");
    let ensemble = synthesize_ensemble(&problem, &prior, q, 1).expect("ensemble");
    let noise = prior_predictive_noise(&ensemble, 0.01).expect("noise");
    Fixture {
        problem,
        ensemble,
        noise,
    }
}
