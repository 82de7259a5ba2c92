use std::f64::consts::PI;

use bae_oed::*;

/// Smooth top flux and a level set whose zero contour is a wavy vertical
/// interface, sampled on an `n × n` grid.
fn smooth_parameters(n: usize) -> DVector<f64> {
    let h = 1.0 / (n - 1) as f64;
    let mut v = DVector::zeros(n + n * n);
    for i in 0..n {
        v[i] = 0.5 * (PI * i as f64 * h).sin();
    }
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * h, j as f64 * h);
            v[n + j * n + i] = x - 0.45 + 0.2 * (2.0 * PI * y).sin();
        }
    }
    v
}

#[test]
fn sensor_values_converge_under_refinement() {
    let values: Vec<DVector<f64>> = [16, 32, 64]
        .iter()
        .map(|&n| {
            mini_darcy_problem(n, SensorGrid::new(8, 8))
                .unwrap()
                .forward(&smooth_parameters(n))
                .unwrap()
        })
        .collect();
    let coarse = (&values[1] - &values[0]).norm();
    let fine = (&values[2] - &values[1]).norm();
    let ratio = fine / coarse;
    assert!((0.3..=0.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn problem_shape_and_prior() {
    let p = mini_darcy_problem(16, SensorGrid::new(8, 8)).unwrap();
    assert_eq!(p.n_params(), 16 + 256);
    assert_eq!(p.layout(), DataLayout::new(64, 1));
    assert_eq!(p.split(), Some(BlockSplit::new(16, 256)));
    let prior = p.default_prior().unwrap();
    assert_eq!(prior.dim(), 272);
    for i in 16..272 {
        assert!((prior.cov()[(i, i)] - 1.0).abs() < 1e-15);
    }
    assert_eq!(prior.cov()[(3, 100)], 0.0);
}

#[test]
fn prior_draws_solve_accurately_and_deterministically() {
    let p = mini_darcy_problem(24, SensorGrid::new(5, 4)).unwrap();
    let prior = p.default_prior().unwrap();
    let draws = prior.sample(8, 3);
    let d = p.darcy().unwrap();
    for r in 0..draws.nrows() {
        let v = draws.row(r).transpose();
        let sol = d.solve(&v.as_slice()[..24], &v.as_slice()[24..]).unwrap();
        assert!(sol.relative_residual <= 1e-10);
        assert!(sol.fluxes.net().abs() < 1e-8, "net flux {}", sol.fluxes.net());
        assert_eq!(p.forward(&v).unwrap(), p.forward(&v).unwrap());
    }
}

#[test]
fn rejects_oversized_configurations() {
    assert!(mini_darcy_problem(65, SensorGrid::new(8, 8)).is_err());
    assert!(mini_darcy_problem(16, SensorGrid::new(17, 2)).is_err());
    let p = mini_darcy_problem(8, SensorGrid::new(2, 2)).unwrap();
    assert!(p.forward(&DVector::zeros(3)).is_err());
}
