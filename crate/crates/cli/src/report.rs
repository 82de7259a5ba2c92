//! CSV artifacts and design files.

use std::path::{Path, PathBuf};

use bae_oed::ensemble::format_f64;
use bae_oed::Error;

use crate::error::CliError;

pub const DESIGN_HEADER: [&str; 4] = ["step", "sensor", "criterion", "posterior_trace"];

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::Io {
                path: Some(path.to_path_buf()),
                source: io,
            }
            .into();
        }
        unreachable!("io error kind");
    }
    Error::Format {
        path: Some(path.to_path_buf()),
        message: e.to_string(),
    }
    .into()
}

/// Writes a header plus rows; floats must already be formatted.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| {
        CliError::Core(Error::Io {
            path: Some(path.to_path_buf()),
            source: e,
        })
    })
}

pub fn f(x: f64) -> String {
    format_f64(x)
}

pub fn join_sensors(s: &[usize]) -> String {
    s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedDesign {
    pub name: String,
    pub sensors: Vec<usize>,
}

/// Reads either a `design.csv` (sensor column, in selection order) or rows of
/// `name,sensors` with sensors separated by `;` or spaces.
pub fn read_design_file(path: &Path) -> Result<Vec<NamedDesign>, CliError> {
    let bad = |message: String| -> CliError {
        Error::Format {
            path: Some(path.to_path_buf()),
            message,
        }
        .into()
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| csv_err(path, e))?;
    let parse_idx = |t: &str, row: usize| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("row {row}: {t:?} is not a sensor index")))
    };
    let is_design_csv = records
        .first()
        .is_some_and(|r| r.iter().map(str::trim).eq(DESIGN_HEADER.iter().copied()));
    if is_design_csv {
        let sensors = records[1..]
            .iter()
            .enumerate()
            .map(|(i, r)| parse_idx(r.get(1).unwrap_or(""), i + 1))
            .collect::<Result<_, _>>()?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "design".into());
        return Ok(vec![NamedDesign { name, sensors }]);
    }
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.len() != 2 {
            return Err(bad(format!("row {i}: expected name,sensors, got {} fields", r.len())));
        }
        let sensors = r[1]
            .split([';', ' '])
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_idx(t, i))
            .collect::<Result<_, _>>()?;
        out.push(NamedDesign {
            name: r[0].trim().to_string(),
            sensors,
        });
    }
    if out.is_empty() {
        return Err(bad("no designs found".into()));
    }
    Ok(out)
}

pub fn parse_sensor_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split([',', ';', ' '])
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad sensor index {t:?} in --sensor-list")))
        })
        .collect()
}

/// `A..B` / `A..=B` (inclusive) or a comma list.
pub fn parse_k_range(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("--k-range must be A..B or a comma list, got {s:?}"));
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Usage("--k-range values must be at least 1".into()));
    }
    Ok(ks)
}

pub fn out_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: Some(dir.to_path_buf()),
        source: e,
    })?;
    Ok(dir.join(name))
}
