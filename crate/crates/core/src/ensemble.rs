//! Paired parameter / accurate-model samples and their on-disk formats.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baem::{read_baem, write_baem, BaemFile};
use crate::error::{Error, Result};
use crate::gaussian::GaussianDensity;
use crate::problems::TestProblem;

/// Default ensemble size for synthesized ensembles.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 10_000;

/// Sensor/time layout of a data vector. Entry `(t, j)` lives at `t·sensors + j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataLayout {
    pub sensors: usize,
    pub times: usize,
}

impl DataLayout {
    pub fn new(sensors: usize, times: usize) -> Self {
        Self { sensors, times }
    }

    pub fn n_data(&self) -> usize {
        self.sensors * self.times
    }

    pub fn index(&self, time: usize, sensor: usize) -> usize {
        time * self.sensors + sensor
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleMeta {
    pub layout: DataLayout,
    pub seed: Option<u64>,
    pub provenance: String,
}

/// `q` parameter draws `v⁽ˡ⁾` with their accurate-model outputs `A(v⁽ˡ⁾)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    params: DMatrix<f64>,
    accurate_data: DMatrix<f64>,
    meta: EnsembleMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleFormat {
    Baem,
    Csv,
}

impl Ensemble {
    pub fn new(params: DMatrix<f64>, accurate_data: DMatrix<f64>, meta: EnsembleMeta) -> Result<Self> {
        let q = params.nrows();
        if accurate_data.nrows() != q {
            return Err(Error::dims("ensemble rows (params vs data)", q, accurate_data.nrows()));
        }
        if q < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: q });
        }
        if accurate_data.ncols() != meta.layout.n_data() {
            return Err(Error::dims(
                "ensemble data columns (sensors·times)",
                meta.layout.n_data(),
                accurate_data.ncols(),
            ));
        }
        check_finite(&params, "ensemble params")?;
        check_finite(&accurate_data, "ensemble data")?;
        Ok(Self {
            params,
            accurate_data,
            meta,
        })
    }

    pub fn params(&self) -> &DMatrix<f64> {
        &self.params
    }

    pub fn accurate_data(&self) -> &DMatrix<f64> {
        &self.accurate_data
    }

    pub fn meta(&self) -> &EnsembleMeta {
        &self.meta
    }

    pub fn layout(&self) -> DataLayout {
        self.meta.layout
    }

    pub fn len(&self) -> usize {
        self.params.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_params(&self) -> usize {
        self.params.ncols()
    }

    pub fn n_data(&self) -> usize {
        self.accurate_data.ncols()
    }

    /// First `q` rows, for sample-size studies.
    pub fn truncated(&self, q: usize) -> Result<Self> {
        if q > self.len() {
            return Err(Error::dims("ensemble truncation", format!("<= {}", self.len()), q));
        }
        Self::new(
            self.params.rows(0, q).into_owned(),
            self.accurate_data.rows(0, q).into_owned(),
            EnsembleMeta {
                provenance: format!("{} [first {q} rows]", self.meta.provenance),
                ..self.meta.clone()
            },
        )
    }

    /// Reorder rows; `order` must be a permutation of `0..len`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() || order.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidConfig("row order is not a permutation".into()));
        }
        let p = DMatrix::from_fn(self.len(), self.n_params(), |r, c| self.params[(order[r], c)]);
        let d = DMatrix::from_fn(self.len(), self.n_data(), |r, c| self.accurate_data[(order[r], c)]);
        Self::new(p, d, self.meta.clone())
    }
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFiniteValue { what, row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Paths `<stem>.params.csv` and `<stem>.data.csv` for a CSV ensemble.
pub fn csv_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".params.csv")
        .or_else(|| s.strip_suffix(".data.csv"))
        .or_else(|| s.strip_suffix(".csv"))
        .unwrap_or(&s);
    (
        PathBuf::from(format!("{stem}.params.csv")),
        PathBuf::from(format!("{stem}.data.csv")),
    )
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a BAEM file or a CSV pair. CSV ensembles carry no layout header, so
/// every data column is treated as one sensor observed once.
pub fn load_ensemble(path: &Path) -> Result<Ensemble> {
    if is_csv(path) {
        let (pp, dp) = csv_paths(path);
        let params = read_csv_matrix(&pp, "params")?;
        let data = read_csv_matrix(&dp, "data")?;
        let layout = DataLayout::new(data.ncols(), 1);
        return Ensemble::new(
            params,
            data,
            EnsembleMeta {
                layout,
                seed: None,
                provenance: format!("csv:{}", path.display()),
            },
        );
    }
    let file = read_baem(path)?;
    let layout = DataLayout::new(file.sensors as usize, file.times as usize);
    if layout.n_data() != file.data.ncols() {
        return Err(Error::dims(
            "baem header sensors·times vs n_d",
            file.data.ncols(),
            layout.n_data(),
        ));
    }
    Ensemble::new(
        file.params,
        file.data,
        EnsembleMeta {
            layout,
            seed: None,
            provenance: format!("baem:{}", path.display()),
        },
    )
}

/// Like [`load_ensemble`] but overrides the data layout (needed for CSV input
/// with more than one observation time).
pub fn load_ensemble_with_layout(path: &Path, layout: DataLayout) -> Result<Ensemble> {
    let e = load_ensemble(path)?;
    let meta = EnsembleMeta {
        layout,
        ..e.meta.clone()
    };
    Ensemble::new(e.params, e.accurate_data, meta)
}

pub fn save_ensemble(e: &Ensemble, path: &Path, format: EnsembleFormat) -> Result<Vec<PathBuf>> {
    match format {
        EnsembleFormat::Baem => {
            let layout = e.layout();
            let to_u32 = |x: usize| {
                u32::try_from(x).map_err(|_| Error::InvalidConfig(format!("layout value {x} exceeds u32")))
            };
            write_baem(
                path,
                &BaemFile {
                    sensors: to_u32(layout.sensors)?,
                    times: to_u32(layout.times)?,
                    params: e.params.clone(),
                    data: e.accurate_data.clone(),
                },
            )?;
            Ok(vec![path.to_path_buf()])
        }
        EnsembleFormat::Csv => {
            let (pp, dp) = csv_paths(path);
            write_csv_matrix(&pp, &e.params)?;
            write_csv_matrix(&dp, &e.accurate_data)?;
            Ok(vec![pp, dp])
        }
    }
}

/// Shortest representation that parses back to the identical double.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    if m.ncols() == 0 && m.nrows() > 0 {
        return Err(Error::InvalidConfig(format!(
            "{}: CSV cannot hold rows without columns; use the BAEM format",
            path.display()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|&x| format_f64(x)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(Some(path), e))
}

pub fn read_csv_matrix(path: &Path, what: &'static str) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::dims("csv row length", cols.unwrap_or(0), rec.len()));
        }
        for (c, field) in rec.iter().enumerate() {
            let x: f64 = field.trim().parse().map_err(|_| {
                Error::format(Some(path), format!("cannot parse {field:?} at row {r}, column {c}"))
            })?;
            if !x.is_finite() {
                return Err(Error::NonFiniteValue { what, row: r, col: c });
            }
            values.push(x);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(Some(path), io),
            other => Error::format(Some(path), format!("{other:?}")),
        }
    } else {
        Error::format(Some(path), e.to_string())
    }
}

/// Draws `q` parameters from `prior` and evaluates the problem's forward map
/// on each. Rows are evaluated in parallel but assembled by index.
pub fn synthesize_ensemble(
    problem: &TestProblem,
    prior: &GaussianDensity,
    q: usize,
    seed: u64,
) -> Result<Ensemble> {
    if prior.dim() != problem.n_params() {
        return Err(Error::dims("prior vs problem parameters", problem.n_params(), prior.dim()));
    }
    let params = prior.sample(q, seed);
    let rows: Vec<DVector<f64>> = (0..q)
        .into_par_iter()
        .map(|r| problem.forward(&params.row(r).transpose()))
        .collect::<Result<_>>()?;
    let n_d = problem.layout().n_data();
    let mut data = DMatrix::zeros(q, n_d);
    for (r, row) in rows.iter().enumerate() {
        data.row_mut(r).copy_from(&row.transpose());
    }
    Ensemble::new(
        params,
        data,
        EnsembleMeta {
            layout: problem.layout(),
            seed: Some(seed),
            provenance: format!("synthesized:{}", problem.name()),
        },
    )
}

/// `N(0, σ² I)` with `σ = fraction × RMS` of the per-coordinate sample standard
/// deviations of the ensemble outputs.
pub fn prior_predictive_noise(e: &Ensemble, fraction: f64) -> Result<GaussianDensity> {
    if !(fraction.is_finite() && fraction > 0.0) {
        return Err(Error::InvalidConfig(format!("noise fraction must be positive, got {fraction}")));
    }
    let q = e.len() as f64;
    let mean_var = e
        .accurate_data()
        .column_iter()
        .map(|c| {
            let m = c.sum() / q;
            c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (q - 1.0)
        })
        .sum::<f64>()
        / e.n_data().max(1) as f64;
    let sigma = fraction * mean_var.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig("ensemble outputs are constant; cannot scale noise".into()));
    }
    GaussianDensity::new(DVector::zeros(e.n_data()), DMatrix::identity(e.n_data(), e.n_data()) * (sigma * sigma))
}
