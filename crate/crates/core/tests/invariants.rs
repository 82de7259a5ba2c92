use bae_oed::*;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n, 1.0);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.2
}

fn diag_noise(rng: &mut ChaCha8Rng, n: usize) -> GaussianDensity {
    let d = DVector::from_fn(n, |_, _| 0.01 + 0.09 * rng.random::<f64>());
    GaussianDensity::new(DVector::zeros(n), DMatrix::from_diagonal(&d)).unwrap()
}

struct Instance {
    problem: TestProblem,
    ensemble: Ensemble,
    noise: GaussianDensity,
    rng: ChaCha8Rng,
}

fn exp_instance(seed: u64, n_v: usize, s: usize, n_t: usize, extra: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_matrix(&mut rng, s * n_t, n_v, 1.0 / (n_v as f64).sqrt());
    let alpha = 0.3 + 0.5 * rng.random::<f64>();
    let problem = exp_problem(f, alpha).unwrap().with_layout(DataLayout::new(s, n_t)).unwrap();
    let prior = GaussianDensity::standard(n_v);
    let ensemble = synthesize_ensemble(&problem, &prior, n_v + extra, seed ^ 0xabc).unwrap();
    let noise = diag_noise(&mut rng, s * n_t);
    Instance {
        problem,
        ensemble,
        noise,
        rng,
    }
}

fn sample_stats(i: &Instance, s: &LinearSurrogate, enhanced: bool) -> TotalErrorModel {
    estimate_stats(
        &i.ensemble,
        s,
        &i.noise,
        StatsOptions {
            source: Some(StatsSource::Sample),
            enhanced,
            prior: None,
        },
    )
    .unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn rel_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn random_design(rng: &mut ChaCha8Rng, layout: DataLayout) -> DesignVector {
    DesignVector::new((0..layout.sensors).map(|_| rng.random::<bool>()).collect(), layout.times)
}

fn all_designs(layout: DataLayout) -> impl Iterator<Item = DesignVector> {
    (0..1u32 << layout.sensors)
        .map(move |mask| DesignVector::new((0..layout.sensors).map(|j| mask >> j & 1 == 1).collect(), layout.times))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn woodbury_matches_direct_inverse(seed in any::<u64>(), n in 1usize..8, k in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_spd(&mut rng, n);
        let op = random_matrix(&mut rng, k, n, 1.0);
        let noise = random_spd(&mut rng, k);
        let post = woodbury_posterior_cov(&prior, &op, &noise).unwrap();
        let direct = (prior.clone().try_inverse().unwrap()
            + op.transpose() * noise.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(0, 0)) * &op)
            .try_inverse()
            .unwrap();
        prop_assert!(rel(&post, &direct) < 1e-8);
        prop_assert!(min_eig(&post) >= -1e-10 * prior.norm());
        prop_assert!(post.trace() <= prior.trace() + 1e-12 * prior.trace());
    }

    #[test]
    fn corrected_quantities_do_not_depend_on_surrogate(
        seed in any::<u64>(), n_v in 2usize..5, s in 2usize..5, n_t in 1usize..3,
    ) {
        let mut inst = exp_instance(seed, n_v, s, n_t, 30);
        let n_d = s * n_t;
        let random = LinearSurrogate::explicit(random_matrix(&mut inst.rng, n_d, n_v, 2.0)).unwrap();
        let fd = LinearSurrogate::finite_difference(&inst.problem, &DVector::zeros(n_v)).unwrap();
        let base = sample_stats(&inst, &LinearSurrogate::zero(n_d, n_v), false);
        let design = random_design(&mut inst.rng, inst.problem.layout());
        let data = DVector::from_fn(design.selected_rows().len(), |_, _| inst.rng.random::<f64>() - 0.5);
        let base_post = bae_posterior(&base, &design, &data).unwrap();
        let base_crit = criterion(&build_kernel(&base, KernelMode::Joint, None).unwrap(), &design).unwrap();
        for s in [random, fd] {
            let t = sample_stats(&inst, &s, false);
            prop_assert!(rel(&t.f_tilde, &base.f_tilde) < 1e-8);
            prop_assert!(rel(&t.gamma_total, &base.gamma_total) < 1e-8);
            prop_assert!(rel_vec(&t.data_offset().unwrap(), &base.data_offset().unwrap()) < 1e-8);
            let post = bae_posterior(&t, &design, &data).unwrap();
            prop_assert!(rel_vec(post.mean(), base_post.mean()) < 1e-7);
            prop_assert!(rel(post.cov(), base_post.cov()) < 1e-7);
            let c = criterion(&build_kernel(&t, KernelMode::Joint, None).unwrap(), &design).unwrap();
            prop_assert!(rel_scalar(c, base_crit) < 1e-7 || (c - base_crit).abs() < 1e-12);
        }
    }

    #[test]
    fn enhanced_model_depends_on_surrogate(seed in any::<u64>(), n_v in 2usize..5, s in 2usize..5) {
        let mut inst = exp_instance(seed, n_v, s, 1, 30);
        let random = LinearSurrogate::explicit(random_matrix(&mut inst.rng, s, n_v, 2.0)).unwrap();
        let zero = sample_stats(&inst, &LinearSurrogate::zero(s, n_v), true);
        let other = sample_stats(&inst, &random, true);
        prop_assert_eq!(&zero.f_tilde, zero.surrogate.matrix());
        prop_assert!((&zero.gamma_total - (zero.noise.cov() + &zero.c_ee)).norm() <= 1e-15 * zero.gamma_total.norm());
        prop_assert!(rel(&zero.gamma_total, &other.gamma_total) > 1e-6);
    }

    #[test]
    fn conditioning_shrinks_error_covariance(seed in any::<u64>(), n_v in 1usize..5, s in 1usize..6) {
        let inst = exp_instance(seed, n_v, s, 1, 10);
        let t = sample_stats(&inst, &LinearSurrogate::zero(s, n_v), false);
        let gap = inst.noise.cov() + &t.c_ee - &t.gamma_total;
        prop_assert!(min_eig(&gap) >= -1e-10);
    }

    #[test]
    fn statistics_ignore_row_order(seed in any::<u64>(), n_v in 1usize..4, s in 1usize..4) {
        let mut inst = exp_instance(seed, n_v, s, 1, 12);
        let q = inst.ensemble.len();
        let mut order: Vec<usize> = (0..q).collect();
        for i in (1..q).rev() {
            order.swap(i, inst.rng.random_range(0..=i));
        }
        let a = sample_stats(&inst, &LinearSurrogate::zero(s, n_v), false);
        inst.ensemble = inst.ensemble.permuted(&order).unwrap();
        let b = sample_stats(&inst, &LinearSurrogate::zero(s, n_v), false);
        prop_assert!(rel(&a.f_tilde, &b.f_tilde) < 1e-12);
        prop_assert!(rel(&a.gamma_total, &b.gamma_total) < 1e-12);
        prop_assert!(rel_vec(&a.eps_mean, &b.eps_mean) < 1e-12);
    }

    #[test]
    fn adding_a_sensor_never_hurts(seed in any::<u64>(), n_v in 1usize..6, s in 2usize..7, n_t in 1usize..3) {
        let mut inst = exp_instance(seed, n_v, s, n_t, 20);
        let t = sample_stats(&inst, &LinearSurrogate::zero(s * n_t, n_v), false);
        let k = build_kernel(&t, KernelMode::Joint, None).unwrap();
        let d = random_design(&mut inst.rng, k.layout);
        let base = criterion(&k, &d).unwrap();
        for j in (0..s).filter(|&j| !d.weights()[j]) {
            let mut w = d.weights().to_vec();
            w[j] = true;
            let bigger = criterion(&k, &DesignVector::new(w, n_t)).unwrap();
            prop_assert!(bigger >= base - 1e-10);
        }
    }

    #[test]
    fn criterion_is_prior_minus_posterior_trace(seed in any::<u64>(), n_v in 1usize..13, s in 1usize..7, n_t in 1usize..3) {
        let inst = exp_instance(seed, n_v, s, n_t, 15);
        let t = sample_stats(&inst, &LinearSurrogate::zero(s * n_t, n_v), false);
        let k = build_kernel(&t, KernelMode::Joint, None).unwrap();
        for d in all_designs(k.layout) {
            let data = DVector::zeros(d.selected_rows().len());
            let post = bae_posterior(&t, &d, &data).unwrap();
            let c = criterion(&k, &d).unwrap();
            let expected = k.prior_trace - post.cov().trace();
            prop_assert!((c - expected).abs() <= 1e-8 * k.prior_trace, "{} vs {}", c, expected);
        }
    }

    #[test]
    fn marginal_criterion_uses_primary_block(seed in any::<u64>(), n_m in 1usize..4, n_x in 0usize..4, s in 1usize..5) {
        let inst = exp_instance(seed, n_m + n_x, s, 1, 15);
        let split = BlockSplit::new(n_m, n_x);
        let t = sample_stats(&inst, &LinearSurrogate::zero(s, n_m + n_x), false);
        let k = build_kernel(&t, KernelMode::Marginal, Some(split)).unwrap();
        for d in all_designs(k.layout) {
            let post = bae_posterior(&t, &d, &DVector::zeros(d.selected_rows().len())).unwrap();
            let primary = post.cov().view((0, 0), (n_m, n_m)).trace();
            let c = criterion(&k, &d).unwrap();
            prop_assert!((c - (k.prior_trace - primary)).abs() <= 1e-8 * k.prior_trace.max(1.0));
        }
    }

    #[test]
    fn zero_surrogate_kernel_matches_general_assembly(seed in any::<u64>(), n_v in 1usize..5, s in 1usize..5) {
        let inst = exp_instance(seed, n_v, s, 1, 15);
        let special = sample_stats(&inst, &LinearSurrogate::zero(s, n_v), false);
        let general = sample_stats(&inst, &LinearSurrogate::explicit(DMatrix::zeros(s, n_v)).unwrap(), false);
        let a = build_kernel(&special, KernelMode::Joint, None).unwrap();
        let b = build_kernel(&general, KernelMode::Joint, None).unwrap();
        prop_assert!(rel(&a.m, &b.m) < 1e-10);
        prop_assert!(rel(&a.n, &(&special.c_ev * special.c_ev.transpose())) < 1e-12);
    }

    #[test]
    fn greedy_path_properties(seed in any::<u64>(), n_v in 1usize..6, s in 2usize..8) {
        let inst = exp_instance(seed, n_v, s, 1, 15);
        let t = sample_stats(&inst, &LinearSurrogate::zero(s, n_v), false);
        let k = build_kernel(&t, KernelMode::Joint, None).unwrap();
        let g = greedy_design(&k, s).unwrap();
        prop_assert!(g.criterion_path.windows(2).all(|w| w[1] >= w[0] - 1e-10));
        let mut sorted = g.chosen.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), s);
        let (best, _) = brute_force_design(&k, 1).unwrap();
        prop_assert_eq!(best.sensors(), vec![g.chosen[0]]);
        for (step, &c) in g.criterion_path.iter().enumerate() {
            let d = k.design(&g.chosen[..=step]).unwrap();
            let direct = criterion(&k, &d).unwrap();
            prop_assert!((c - direct).abs() <= 1e-9 * direct.abs().max(1e-12));
        }
    }

    #[test]
    fn evaluation_is_pure(seed in any::<u64>(), s in 2usize..6) {
        let inst = exp_instance(seed, 3, s, 1, 15);
        let t = sample_stats(&inst, &LinearSurrogate::zero(s, 3), false);
        let k = build_kernel(&t, KernelMode::Joint, None).unwrap();
        let designs = random_designs(k.layout, s / 2, 6, seed).unwrap();
        let mut reversed = designs.clone();
        reversed.reverse();
        let a = evaluate_designs(&k, &designs).unwrap();
        let mut b = evaluate_designs(&k, &reversed).unwrap().rows;
        b.reverse();
        prop_assert_eq!(a.rows, b);
    }

    #[test]
    fn level_set_values_and_monotonicity(mut psi in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let ls = LevelSetMap::new(vec![-1.0, 0.5, 2.0], vec![0.0, 1.0, 1.5, 4.0]).unwrap();
        psi.sort_by(f64::total_cmp);
        let out = ls.apply(&psi);
        prop_assert!(out.iter().all(|z| ls.values().contains(z)));
        prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ensemble_files_roundtrip_bitwise(
        seed in any::<u64>(), q in 2usize..10, n_v in 0usize..4, s in 1usize..4, n_t in 1usize..3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weird = |_: usize, _: usize| match rng.random_range(0..6) {
            0 => -0.0,
            1 => f64::MIN_POSITIVE / 8.0,
            2 => f64::MAX,
            _ => rng.random::<f64>() * 1e3 - 5e2,
        };
        let e = Ensemble::new(
            DMatrix::from_fn(q, n_v, &mut weird),
            DMatrix::from_fn(q, s * n_t, &mut weird),
            EnsembleMeta { layout: DataLayout::new(s, n_t), seed: Some(seed), provenance: "prop".into() },
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("e.baem");
        save_ensemble(&e, &bin, EnsembleFormat::Baem).unwrap();
        let back = load_ensemble(&bin).unwrap();
        prop_assert!(back.params().iter().zip(e.params().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(back.accurate_data().iter().zip(e.accurate_data().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.layout(), e.layout());
        let csv = dir.path().join("e.csv");
        if n_v == 0 {
            prop_assert!(save_ensemble(&e, &csv, EnsembleFormat::Csv).is_err());
            return Ok(());
        }
        save_ensemble(&e, &csv, EnsembleFormat::Csv).unwrap();
        let back = load_ensemble_with_layout(&csv, e.layout()).unwrap();
        prop_assert!(back.params().iter().zip(e.params().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(back.accurate_data().iter().zip(e.accurate_data().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn zero_surrogate_recovers_linear_truth_in_sample_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f_true = random_matrix(&mut rng, 4, 3, 1.0);
    let problem = linear_problem(f_true.clone()).unwrap();
    let e = synthesize_ensemble(&problem, &GaussianDensity::standard(3), 40, 2).unwrap();
    let noise = diag_noise(&mut rng, 4);
    let t = estimate_stats(&e, &LinearSurrogate::zero(4, 3), &noise, StatsOptions::default()).unwrap();
    assert_eq!(t.stats_source, StatsSource::Sample);
    assert!(rel(corrected_operator(&t), &f_true) < 1e-10);
    assert!(rel(&t.gamma_total, noise.cov()) < 1e-10);
}

#[test]
fn analytic_prior_mode_converges_with_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f_true = random_matrix(&mut rng, 3, 2, 1.0);
    let problem = linear_problem(f_true.clone()).unwrap();
    let prior = GaussianDensity::standard(2);
    // with little noise, finite-q mismatch between sample and prior moments
    // can make Γ_ν|v indefinite in this mode
    let noise = GaussianDensity::standard(3);
    let err = |q: usize| {
        let e = synthesize_ensemble(&problem, &prior, q, 3).unwrap();
        let t = estimate_stats(
            &e,
            &LinearSurrogate::zero(3, 2),
            &noise,
            StatsOptions {
                source: Some(StatsSource::AnalyticPrior),
                enhanced: false,
                prior: Some(&prior),
            },
        )
        .unwrap();
        rel(&t.f_tilde, &f_true)
    };
    let (coarse, fine) = (err(100), err(100_000));
    assert!(fine < 0.02 && fine < coarse, "{coarse} -> {fine}");
}
