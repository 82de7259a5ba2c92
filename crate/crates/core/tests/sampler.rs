use bae_oed::pcn::{effective_sample_size, DesignMisfit};
use bae_oed::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn linear_2d() -> (TestProblem, GaussianDensity, GaussianDensity) {
    (
        linear_problem(DMatrix::identity(2, 2)).unwrap(),
        GaussianDensity::standard(2),
        GaussianDensity::standard(2),
    )
}

#[test]
fn linear_gaussian_chain_matches_analytic_posterior() {
    let (p, prior, noise) = linear_2d();
    let design = DesignVector::full(2, 1);
    let data = DVector::from_vec(vec![1.0, 0.0]);
    let cfg = PcnConfig {
        beta: 0.5,
        n_steps: 200_000,
        n_burn: 10_000,
        thin: 10,
        seed: 3,
    };
    let chain = pcn_sample(&p, &prior, &noise, &data, &design, &cfg).unwrap();
    let exact = linear_gaussian_posterior(&prior, &DMatrix::identity(2, 2), &noise, &data).unwrap();
    let se = chain.mean_stderr();
    for i in 0..2 {
        assert!((chain.mean[i] - exact.mean()[i]).abs() < 3.0 * se[i], "coord {i}: {} ± {}", chain.mean[i], se[i]);
    }
    assert!((chain.trace / exact.cov().trace() - 1.0).abs() < 0.05, "trace {}", chain.trace);
    assert!((0.0..=1.0).contains(&chain.acceptance));
}

#[test]
fn empty_design_reproduces_prior() {
    let n = 6;
    let cov = DMatrix::from_fn(n, n, |i, j| (-((i as f64 - j as f64).powi(2)) / 4.0).exp() + if i == j { 0.1 } else { 0.0 });
    let prior = GaussianDensity::new(DVector::from_element(n, 0.7), cov).unwrap();
    let p = linear_problem(DMatrix::identity(n, n)).unwrap();
    let noise = GaussianDensity::standard(n);
    let cfg = PcnConfig {
        beta: 0.9,
        n_steps: 100_000,
        n_burn: 1_000,
        thin: 10,
        seed: 9,
    };
    let chain = pcn_sample(&p, &prior, &noise, &DVector::zeros(0), &DesignVector::empty(n, 1), &cfg).unwrap();
    assert_eq!(chain.acceptance, 1.0);
    assert!((chain.trace / prior.cov().trace() - 1.0).abs() < 0.05, "trace {}", chain.trace);
    let se = chain.mean_stderr();
    for i in 0..n {
        assert!((chain.mean[i] - 0.7).abs() < 3.0 * se[i]);
    }
}

#[test]
fn one_dimensional_histogram_passes_ks() {
    let p = linear_problem(DMatrix::from_element(1, 1, 1.0)).unwrap();
    let prior = GaussianDensity::standard(1);
    let noise = GaussianDensity::new(DVector::zeros(1), DMatrix::from_element(1, 1, 0.5)).unwrap();
    let data = DVector::from_element(1, 0.8);
    let exact = linear_gaussian_posterior(&prior, &DMatrix::from_element(1, 1, 1.0), &noise, &data).unwrap();
    let cfg = PcnConfig {
        beta: 1.0,
        n_steps: 1_000_000 + 1_000,
        n_burn: 1_000,
        thin: 10,
        seed: 17,
    };
    let chain = pcn_sample(&p, &prior, &noise, &data, &DesignVector::full(1, 1), &cfg).unwrap();
    let mut xs: Vec<f64> = chain.samples.column(0).iter().copied().collect();
    assert_eq!(xs.len(), 100_000);
    xs.sort_by(f64::total_cmp);
    let target = Normal::new(exact.mean()[0], exact.cov()[(0, 0)].sqrt()).unwrap();
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = target.cdf(x);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let critical = 1.628 / n.sqrt();
    assert!(ks < critical, "KS {ks} vs {critical}");
}

#[test]
fn shifted_misfit_gives_identical_chain() {
    let (p, prior, noise) = linear_2d();
    let design = DesignVector::full(2, 1);
    let data = DVector::from_vec(vec![0.3, -0.4]);
    let misfit = DesignMisfit::new(&p, &noise, &data, &design).unwrap();
    let cfg = PcnConfig {
        beta: 0.3,
        n_steps: 20_000,
        n_burn: 0,
        thin: 1,
        seed: 1,
    };
    let a = run_chain(&prior, |v| misfit.eval(v), &cfg).unwrap();
    let b = run_chain(&prior, |v| misfit.eval(v).map(|j| j + 5.0), &cfg).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.acceptance, b.acceptance);
}

#[test]
fn beta_tuning_targets_moderate_acceptance() {
    let (p, prior, _) = linear_2d();
    let design = DesignVector::full(2, 1);
    let data = DVector::from_vec(vec![1.0, 0.0]);
    let sharp = GaussianDensity::new(DVector::zeros(2), DMatrix::identity(2, 2) * 1e-3).unwrap();
    let misfit = DesignMisfit::new(&p, &sharp, &data, &design).unwrap();
    let start = PcnConfig { beta: 1.0, ..PcnConfig::default() };
    let tuned = pcn::tune_beta(&prior, |v| misfit.eval(v), &start, 2_000, 12).unwrap();
    assert!(tuned.beta < 0.5);
    let acc = run_chain(&prior, |v| misfit.eval(v), &PcnConfig { n_steps: 5_000, n_burn: 0, thin: 1, ..tuned })
        .unwrap()
        .acceptance;
    assert!((0.1..=0.45).contains(&acc), "acceptance {acc}");
}

#[test]
fn design_comparison_prefers_informative_sensor() {
    let p = linear_problem(DMatrix::identity(2, 2)).unwrap();
    let prior = GaussianDensity::standard(2);
    let noise = GaussianDensity::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.01]))).unwrap();
    let designs = [DesignVector::from_indices(2, &[1], 1).unwrap(), DesignVector::from_indices(2, &[0], 1).unwrap()];
    let cfg = PcnConfig {
        beta: 0.2,
        n_steps: 40_000,
        n_burn: 2_000,
        thin: 10,
        seed: 5,
    };
    let table = compare_designs_mcmc(&p, &prior, &noise, &designs, &[1, 2, 3, 4, 5], &cfg).unwrap();
    assert_eq!(table.rows.len(), 10);
    assert!(table.per_design[0].mean_trace < table.per_design[1].mean_trace);
    assert!(table.rows.iter().all(|r| r.min_ess > 10.0));
    assert!(effective_sample_size(&[0.0; 8]) == 8.0);
}
