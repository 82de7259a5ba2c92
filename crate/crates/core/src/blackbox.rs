//! Runs an external forward model through a file-based protocol.
//!
//! For every parameter row the child is invoked as
//!
//! ```text
//! <executable> <input.baem> <output.baem> <seed>
//! ```
//!
//! where the input holds a single row with `n_d = 0` and the child writes a
//! single row with `n_v = 0`. The child may write `sensors = times = 0` in its
//! header, in which case the output is treated as `n_d` sensors observed once.
//! Row `l` receives seed `seed + l` (wrapping), so the result does not depend
//! on how rows are scheduled across workers.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::baem::{read_baem, write_baem, BaemFile};
use crate::ensemble::{DataLayout, Ensemble, EnsembleMeta};
use crate::error::{Error, Result};

const POLL: Duration = Duration::from_millis(2);

#[derive(Clone, Debug)]
pub struct BlackBoxSpec {
    pub executable: PathBuf,
    pub working_dir: PathBuf,
    pub timeout: Duration,
    pub max_parallel: usize,
}

impl BlackBoxSpec {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        Self {
            executable: executable.into(),
            working_dir: std::env::temp_dir(),
            timeout: Duration::from_secs(3600),
            max_parallel: 1,
        }
    }

    /// Resolves the executable path and checks it can be launched.
    pub fn validate(&self) -> Result<PathBuf> {
        let exe = if self.executable.components().count() > 1 || self.executable.is_absolute() {
            self.executable
                .canonicalize()
                .map_err(|e| Error::io(Some(&self.executable), e))?
        } else {
            // bare name: resolve relative to cwd first, else leave to PATH lookup
            match self.executable.canonicalize() {
                Ok(p) => p,
                Err(_) => self.executable.clone(),
            }
        };
        if exe.is_absolute() {
            let meta = std::fs::metadata(&exe).map_err(|e| Error::io(Some(&exe), e))?;
            if !meta.is_file() {
                return Err(Error::InvalidConfig(format!("{} is not a file", exe.display())));
            }
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                if meta.permissions().mode() & 0o111 == 0 {
                    return Err(Error::InvalidConfig(format!("{} is not executable", exe.display())));
                }
            }
        }
        if !self.working_dir.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "working directory {} does not exist",
                self.working_dir.display()
            )));
        }
        if self.max_parallel == 0 {
            return Err(Error::InvalidConfig("max_parallel must be at least 1".into()));
        }
        Ok(exe)
    }
}

enum RowOutcome {
    Done(Vec<f64>, DataLayout),
    Cancelled,
}

pub fn run_black_box(spec: &BlackBoxSpec, params: &DMatrix<f64>, seed: u64) -> Result<Ensemble> {
    let exe = spec.validate()?;
    for r in 0..params.nrows() {
        for c in 0..params.ncols() {
            if !params[(r, c)].is_finite() {
                return Err(Error::NonFiniteValue {
                    what: "black-box params",
                    row: r,
                    col: c,
                });
            }
        }
    }
    let q = params.nrows();
    let scratch = tempfile::Builder::new()
        .prefix("bae-oed-bb-")
        .tempdir_in(&spec.working_dir)
        .map_err(|e| Error::io(Some(&spec.working_dir), e))?;

    let next = AtomicUsize::new(0);
    let cancel = AtomicBool::new(false);
    let results: Mutex<Vec<Option<(Vec<f64>, DataLayout)>>> = Mutex::new(vec![None; q]);
    let errors: Mutex<Vec<(usize, Error)>> = Mutex::new(Vec::new());
    let workers = spec.max_parallel.min(q.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if cancel.load(Ordering::SeqCst) {
                    break;
                }
                let row = next.fetch_add(1, Ordering::SeqCst);
                if row >= q {
                    break;
                }
                let input = params.rows(row, 1).into_owned();
                match run_row(&exe, spec, scratch.path(), row, &input, seed.wrapping_add(row as u64), &cancel) {
                    Ok(RowOutcome::Done(values, layout)) => {
                        results.lock().unwrap()[row] = Some((values, layout));
                    }
                    Ok(RowOutcome::Cancelled) => break,
                    Err(e) => {
                        cancel.store(true, Ordering::SeqCst);
                        errors.lock().unwrap().push((row, e));
                        break;
                    }
                }
            });
        }
    });

    let mut errors = errors.into_inner().unwrap();
    if !errors.is_empty() {
        errors.sort_by_key(|(row, _)| *row);
        return Err(errors.remove(0).1);
    }
    let results = results.into_inner().unwrap();
    let mut layout = None;
    let mut data = Vec::new();
    for (row, res) in results.into_iter().enumerate() {
        let (values, row_layout) = res.expect("every row completes when no error occurred");
        match layout {
            None => layout = Some(row_layout),
            Some(l) if l != row_layout => {
                return Err(Error::format(
                    None,
                    format!("black-box output layout changed at row {row}: {l:?} vs {row_layout:?}"),
                ))
            }
            _ => {}
        }
        data.extend(values);
    }
    let layout = layout.unwrap_or(DataLayout::new(0, 1));
    Ensemble::new(
        params.clone(),
        DMatrix::from_row_slice(q, layout.n_data(), &data),
        EnsembleMeta {
            layout,
            seed: Some(seed),
            provenance: format!("black-box:{}", exe.display()),
        },
    )
}

fn run_row(
    exe: &Path,
    spec: &BlackBoxSpec,
    scratch: &Path,
    row: usize,
    input: &DMatrix<f64>,
    seed: u64,
    cancel: &AtomicBool,
) -> Result<RowOutcome> {
    let in_path = scratch.join(format!("row{row}.in.baem"));
    let out_path = scratch.join(format!("row{row}.out.baem"));
    let err_path = scratch.join(format!("row{row}.stderr"));
    write_baem(
        &in_path,
        &BaemFile {
            sensors: 0,
            times: 0,
            params: input.clone(),
            data: DMatrix::zeros(1, 0),
        },
    )?;
    let stderr = File::create(&err_path).map_err(|e| Error::io(Some(&err_path), e))?;
    let mut child = Command::new(exe)
        .arg(&in_path)
        .arg(&out_path)
        .arg(seed.to_string())
        .current_dir(&spec.working_dir)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(stderr)
        .spawn()
        .map_err(|e| Error::io(Some(exe), e))?;

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {}
            Err(e) => {
                reap(&mut child);
                return Err(Error::io(Some(exe), e));
            }
        }
        if cancel.load(Ordering::SeqCst) {
            reap(&mut child);
            return Ok(RowOutcome::Cancelled);
        }
        if start.elapsed() > spec.timeout {
            reap(&mut child);
            return Err(Error::Timeout {
                row,
                seconds: spec.timeout.as_secs_f64(),
            });
        }
        std::thread::sleep(POLL);
    };
    if !status.success() {
        let stderr = std::fs::read_to_string(&err_path).unwrap_or_default();
        return Err(Error::SubprocessFailure {
            row,
            code: status.code(),
            stderr,
        });
    }
    let out = read_baem(&out_path)?;
    if out.rows() != 1 || out.params.ncols() != 0 {
        return Err(Error::format(
            Some(&out_path),
            format!(
                "expected one data row with n_v = 0, got q = {}, n_v = {}",
                out.rows(),
                out.params.ncols()
            ),
        ));
    }
    let n_d = out.data.ncols();
    let layout = match (out.sensors as usize, out.times as usize) {
        (0, 0) => DataLayout::new(n_d, 1),
        (s, t) if s * t == n_d => DataLayout::new(s, t),
        (s, t) => {
            return Err(Error::format(
                Some(&out_path),
                format!("header sensors·times = {s}·{t} does not match n_d = {n_d}"),
            ))
        }
    };
    Ok(RowOutcome::Done(out.data.as_slice().to_vec(), layout))
}

fn reap(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}
