//! Greedy A-optimal sensor selection, random baselines and exhaustive search.

use std::time::{Duration, Instant};

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemble::DataLayout;
use crate::error::{Error, Result};
use crate::posterior::{check_design, criterion, DesignVector, ObjectiveKernel};
use crate::spd::SpdFactor;

/// Number of random designs per cardinality in baseline comparisons.
pub const DEFAULT_RANDOM_DESIGNS: usize = 100;
/// Exhaustive search refuses more subsets than this.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Scores within this relative distance of the best are treated as ties and
/// resolved in favour of the lower index.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Default)]
pub struct GreedyTrace {
    pub chosen: Vec<usize>,
    pub criterion_path: Vec<f64>,
    pub posterior_trace_path: Vec<f64>,
    /// Per step, `(candidate, score)` for every candidate evaluated.
    pub candidate_scores: Option<Vec<Vec<(usize, f64)>>>,
    pub wall_times: Vec<Duration>,
}

impl GreedyTrace {
    pub fn design(&self, layout: DataLayout) -> Result<DesignVector> {
        DesignVector::for_layout(layout, &self.chosen)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GreedyOptions {
    pub retain_scores: bool,
}

pub fn greedy_design(kernel: &ObjectiveKernel, k: usize) -> Result<GreedyTrace> {
    greedy_design_with(kernel, k, GreedyOptions::default())
}

/// Growing factorization of `W M Wᵀ` for the sensors picked so far, together
/// with `Y = L⁻¹ W B`, so that the current criterion is `‖Y‖²`.
struct Incremental<'a> {
    kernel: &'a ObjectiveKernel,
    rows: Vec<usize>,
    l: DMatrix<f64>,
    y: DMatrix<f64>,
    score: f64,
}

struct Trial {
    l12: DMatrix<f64>,
    l22: DMatrix<f64>,
    z: DMatrix<f64>,
    score: f64,
}

impl<'a> Incremental<'a> {
    fn new(kernel: &'a ObjectiveKernel) -> Self {
        Self {
            kernel,
            rows: Vec::new(),
            l: DMatrix::zeros(0, 0),
            y: DMatrix::zeros(0, kernel.b.ncols()),
            score: 0.0,
        }
    }

    fn block_rows(&self, sensor: usize) -> Vec<usize> {
        let s = self.kernel.n_sensors();
        (0..self.kernel.n_t()).map(|t| t * s + sensor).collect()
    }

    fn trial(&self, sensor: usize) -> Result<Trial> {
        let m = &self.kernel.m;
        let b = &self.kernel.b;
        let new_rows = self.block_rows(sensor);
        let r = self.rows.len();
        let nt = new_rows.len();
        let m_sc = DMatrix::from_fn(r, nt, |i, j| m[(self.rows[i], new_rows[j])]);
        let l12 = if r == 0 {
            m_sc
        } else {
            self.l
                .solve_lower_triangular(&m_sc)
                .ok_or_else(|| Error::SolverFailure("greedy factor update".into()))?
        };
        let m_cc = DMatrix::from_fn(nt, nt, |i, j| m[(new_rows[i], new_rows[j])]);
        let schur = m_cc - l12.transpose() * &l12;
        let factor = SpdFactor::new(&crate::spd::symmetrize(&schur), "greedy Schur complement")?;
        let b_c = DMatrix::from_fn(nt, b.ncols(), |i, j| b[(new_rows[i], j)]);
        let z = factor.solve_lower(&(b_c - l12.transpose() * &self.y))?;
        let score = self.score + z.norm_squared();
        Ok(Trial {
            l12,
            l22: factor.l().clone(),
            z,
            score,
        })
    }

    fn accept(&mut self, sensor: usize, t: Trial) {
        let r = self.rows.len();
        let nt = t.l22.nrows();
        let mut l = DMatrix::zeros(r + nt, r + nt);
        l.view_mut((0, 0), (r, r)).copy_from(&self.l);
        l.view_mut((r, 0), (nt, r)).copy_from(&t.l12.transpose());
        l.view_mut((r, r), (nt, nt)).copy_from(&t.l22);
        let mut y = DMatrix::zeros(r + nt, self.y.ncols());
        y.view_mut((0, 0), (r, self.y.ncols())).copy_from(&self.y);
        y.view_mut((r, 0), (nt, self.y.ncols())).copy_from(&t.z);
        self.rows.extend(self.block_rows(sensor));
        self.l = l;
        self.y = y;
        self.score = t.score;
    }
}

/// Index of the best score; near-ties go to the earliest entry.
fn argmax_lowest(scores: &[(usize, f64)]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &(idx, score) in scores {
        match best {
            None => best = Some((idx, score)),
            Some((_, b)) if score > b + TIE_TOL * b.abs().max(f64::MIN_POSITIVE) => best = Some((idx, score)),
            _ => {}
        }
    }
    best
}

pub fn greedy_design_with(kernel: &ObjectiveKernel, k: usize, opts: GreedyOptions) -> Result<GreedyTrace> {
    let s = kernel.n_sensors();
    if k > s {
        return Err(Error::KExceedsSensors { k, sensors: s });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut state = Incremental::new(kernel);
    let mut available = vec![true; s];
    let mut trace = GreedyTrace {
        candidate_scores: opts.retain_scores.then(Vec::new),
        ..Default::default()
    };
    for _ in 0..k {
        let start = Instant::now();
        let candidates: Vec<usize> = (0..s).filter(|&j| available[j]).collect();
        let trials: Vec<Trial> = candidates
            .par_iter()
            .map(|&c| state.trial(c))
            .collect::<Result<_>>()?;
        let scores: Vec<(usize, f64)> = candidates.iter().zip(&trials).map(|(&c, t)| (c, t.score)).collect();
        let (pick, score) = argmax_lowest(&scores).expect("at least one candidate");
        let pos = candidates.binary_search(&pick).expect("pick is a candidate");
        let trial = trials.into_iter().nth(pos).expect("trial exists");
        state.accept(pick, trial);
        available[pick] = false;
        trace.chosen.push(pick);
        trace.criterion_path.push(score);
        trace.posterior_trace_path.push(kernel.prior_trace - score);
        if let Some(all) = trace.candidate_scores.as_mut() {
            all.push(scores);
        }
        trace.wall_times.push(start.elapsed());
    }
    Ok(trace)
}

/// `count` designs of `k` distinct sensors each, uniform without replacement
/// within a design and independent across designs.
pub fn random_designs(layout: DataLayout, k: usize, count: usize, seed: u64) -> Result<Vec<DesignVector>> {
    if k > layout.sensors {
        return Err(Error::KExceedsSensors {
            k,
            sensors: layout.sensors,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let idx = rand::seq::index::sample(&mut rng, layout.sensors, k).into_vec();
            DesignVector::for_layout(layout, &idx)
        })
        .collect()
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exact maximizer over all `k`-subsets; ties go to the lexicographically
/// smallest subset.
pub fn brute_force_design(kernel: &ObjectiveKernel, k: usize) -> Result<(DesignVector, f64)> {
    let s = kernel.n_sensors();
    if k > s {
        return Err(Error::KExceedsSensors { k, sensors: s });
    }
    let count = binomial(s, k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::CombinatorialBlowup {
            count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let subsets: Vec<Vec<usize>> = (0..s).combinations(k).collect();
    let scores: Vec<(usize, f64)> = subsets
        .par_iter()
        .enumerate()
        .map(|(i, sub)| Ok((i, criterion(kernel, &kernel.design(sub)?)?)))
        .collect::<Result<_>>()?;
    let (best, score) = argmax_lowest(&scores).expect("at least the empty subset");
    Ok((kernel.design(&subsets[best])?, score))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linearly interpolated quantiles (`(n−1)·p` positions). `None` for no data.
pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quantiles {
        min: v[0],
        q25: at(0.25),
        median: at(0.5),
        q75: at(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignRow {
    pub sensors: Vec<usize>,
    pub criterion: f64,
    pub posterior_trace: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignReport {
    pub rows: Vec<DesignRow>,
    /// Quantiles of the criterion column.
    pub summary: Option<Quantiles>,
}

pub fn evaluate_designs(kernel: &ObjectiveKernel, designs: &[DesignVector]) -> Result<DesignReport> {
    for d in designs {
        check_design(kernel, d)?;
    }
    let rows: Vec<DesignRow> = designs
        .par_iter()
        .map(|d| {
            let c = criterion(kernel, d)?;
            Ok(DesignRow {
                sensors: d.sensors(),
                criterion: c,
                posterior_trace: kernel.prior_trace - c,
            })
        })
        .collect::<Result<_>>()?;
    let summary = quantiles(&rows.iter().map(|r| r.criterion).collect::<Vec<_>>());
    Ok(DesignReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bae::TotalErrorModel;
    use crate::gaussian::GaussianDensity;
    use crate::posterior::{build_kernel, KernelMode};
    use nalgebra::{dvector, DVector};

    fn kernel(op: DMatrix<f64>, noise_diag: DVector<f64>) -> ObjectiveKernel {
        let n_v = op.ncols();
        let n_d = op.nrows();
        let noise = GaussianDensity::new(DVector::zeros(n_d), DMatrix::from_diagonal(&noise_diag)).unwrap();
        let t = TotalErrorModel::linear_gaussian(&GaussianDensity::standard(n_v), op, &noise, DataLayout::new(n_d, 1))
            .unwrap();
        build_kernel(&t, KernelMode::Joint, None).unwrap()
    }

    #[test]
    fn two_sensor_pick() {
        let k = kernel(DMatrix::identity(2, 2), dvector![1.0, 0.01]);
        let g = greedy_design(&k, 1).unwrap();
        assert_eq!(g.chosen, vec![1]);
        assert!((g.criterion_path[0] - 100.0 / 101.0).abs() < 1e-14);
        let (bf, _) = brute_force_design(&k, 1).unwrap();
        assert_eq!(bf.sensors(), vec![1]);
    }

    #[test]
    fn full_selection_matches_full_design() {
        let op = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin());
        let k = kernel(op, DVector::from_element(5, 0.1));
        let g = greedy_design_with(&k, 5, GreedyOptions { retain_scores: true }).unwrap();
        let mut sorted = g.chosen.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        let full = criterion(&k, &DesignVector::full(5, 1)).unwrap();
        assert!((g.criterion_path[4] - full).abs() < 1e-10 * full);
        let scores = g.candidate_scores.unwrap();
        assert_eq!(scores.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 4, 3, 2, 1]);
        assert!(g.criterion_path.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    }

    #[test]
    fn exchangeable_sensors_tie_to_lowest() {
        let op = DMatrix::from_element(4, 2, 1.0);
        let k = kernel(op, DVector::from_element(4, 0.5));
        assert_eq!(greedy_design(&k, 1).unwrap().chosen, vec![0]);
        assert_eq!(brute_force_design(&k, 2).unwrap().0.sensors(), vec![0, 1]);
    }

    #[test]
    fn k_limits() {
        let k = kernel(DMatrix::identity(2, 2), dvector![1.0, 1.0]);
        assert!(matches!(greedy_design(&k, 3), Err(Error::KExceedsSensors { .. })));
        assert_eq!(brute_force_design(&k, 2).unwrap().0.sensors(), vec![0, 1]);
    }

    #[test]
    fn brute_force_guard() {
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(4, 5), 0);
        let k = kernel(DMatrix::identity(40, 1), DVector::from_element(40, 1.0));
        assert!(matches!(brute_force_design(&k, 20), Err(Error::CombinatorialBlowup { .. })));
    }

    #[test]
    fn random_designs_are_deterministic() {
        let layout = DataLayout::new(4, 1);
        let a = random_designs(layout, 2, 100, 9).unwrap();
        assert_eq!(a, random_designs(layout, 2, 100, 9).unwrap());
        assert!(a.iter().all(|d| d.count() == 2));
        let full = random_designs(layout, 4, 3, 1).unwrap();
        assert!(full.iter().all(|d| d == &DesignVector::full(4, 1)));
    }

    #[test]
    fn evaluation_examples() {
        let k = kernel(DMatrix::identity(3, 3), dvector![1.0, 0.5, 0.1]);
        let rep = evaluate_designs(&k, &[k.empty_design()]).unwrap();
        assert_eq!(rep.rows[0].criterion, 0.0);
        assert_eq!(rep.rows[0].posterior_trace, 3.0);
        let d = k.design(&[1]).unwrap();
        let rep = evaluate_designs(&k, &[d.clone(), d]).unwrap();
        assert_eq!(rep.rows[0], rep.rows[1]);
    }

    #[test]
    fn quantile_interpolation() {
        let q = quantiles(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q25, q.median, q.q75, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(quantiles(&[1.0, 2.0]).unwrap().median, 1.5);
        assert!(quantiles(&[]).is_none());
    }
}
