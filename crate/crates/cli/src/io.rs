//! File formats.
//!
//! Trace CSV: optional leading `# key=value` metadata lines, a header
//! `i1,i2`, then one sample pair per line. Floats are written in shortest
//! round-trip form, so reading a written trace gives back identical bits.
//!
//! Ladder CSV: header `power,variance`, `#` comments allowed.
//!
//! Calibration: a JSON object with `slope`, `intercept`, `r_squared` and
//! `fit_points` (list of `[power, variance]`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use homodyne_core::{SnlCalibration, TracePair, TraceSource};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TRACE_HEADER: [&str; 2] = ["i1", "i2"];
pub const LADDER_HEADER: [&str; 2] = ["power", "variance"];

/// `key=value` pairs describing where a trace came from.
pub fn trace_metadata(traces: &TracePair) -> Vec<(String, String)> {
    match traces.source() {
        TraceSource::Ingested(meta) => meta.clone(),
        TraceSource::Simulated(cfg) => {
            let mut meta: Vec<(&str, String)> = vec![
                ("source", "simulated".into()),
                ("seed", cfg.seed.to_string()),
                ("n_samples", cfg.n_samples.to_string()),
                ("ac_coupled", cfg.ac_coupled.to_string()),
                ("vx", cfg.state.vx().to_string()),
                ("vy", cfg.state.vy().to_string()),
                ("cxy", cfg.state.cxy().to_string()),
                ("lo_amplitude", cfg.lo.amplitude().to_string()),
                ("lo_v_x", cfg.lo.v_x().to_string()),
                ("phase", cfg.setting.phase().to_string()),
                ("transmission", cfg.setting.transmission().to_string()),
                ("sigma1", cfg.noise.sigma1().to_string()),
                ("sigma2", cfg.noise.sigma2().to_string()),
                ("rho", cfg.noise.rho().to_string()),
            ];
            if let Ok((_, lo)) = cfg.detected() {
                meta.push(("lo_power", lo.power().to_string()));
            }
            meta.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
        }
    }
}

pub fn write_trace<W: Write>(out: W, traces: &TracePair) -> Result<(), std::io::Error> {
    let mut out = BufWriter::new(out);
    for (k, v) in trace_metadata(traces) {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    // `Display` for f64 is the shortest string that parses back to the same bits
    for (a, b) in traces.samples() {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, traces: &TracePair) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_trace(file, traces).map_err(|e| CliError::io(path, e))
}

fn leading_metadata(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let (k, v) = l.trim_start_matches('#').split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Reads a two-column numeric CSV with the given header. Line numbers in
/// errors are 1-based file lines.
fn read_pairs(path: &Path, text: &str, header: [&str; 2]) -> Result<Vec<(f64, f64)>, CliError> {
    let data_err = |line: u64, message: String| CliError::Data {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| data_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        let line = found.position().map_or(1, |p| p.line());
        return Err(data_err(
            line,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| data_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(data_err(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let parse = |k: usize| -> Result<f64, CliError> {
            let cell = &record[k];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(data_err(
                    line,
                    format!("non-finite value `{cell}` in column {}", header[k]),
                )),
                Err(_) => Err(data_err(
                    line,
                    format!("cannot parse `{cell}` in column {} as a number", header[k]),
                )),
            }
        };
        let a = parse(0)?;
        let b = parse(1)?;
        rows.push((a, b));
    }
    Ok(rows)
}

pub fn parse_trace(path: &Path, text: &str) -> Result<TracePair, CliError> {
    let metadata = leading_metadata(text);
    let (ch1, ch2) = read_pairs(path, text, TRACE_HEADER)?.into_iter().unzip();
    Ok(TracePair::new(ch1, ch2, TraceSource::Ingested(metadata))?)
}

pub fn read_trace_file(path: &Path) -> Result<TracePair, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_trace(path, &text)
}

/// Value of `key` in a trace's metadata.
pub fn metadata_value<'a>(traces: &'a TracePair, key: &str) -> Option<&'a str> {
    match traces.source() {
        TraceSource::Ingested(meta) => meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()),
        TraceSource::Simulated(_) => None,
    }
}

/// LO power recorded in a trace file's metadata.
pub fn trace_lo_power(traces: &TracePair) -> Option<f64> {
    metadata_value(traces, "lo_power")?.parse().ok()
}

/// Ladder points from a `power,variance` CSV, or from every `*.csv` trace in
/// a directory (power from the `lo_power` metadata, variance of `i1 − i2`).
pub fn read_ladder(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|file| {
                let traces = read_trace_file(file)?;
                let power = trace_lo_power(&traces).ok_or_else(|| {
                    CliError::Usage(format!("{}: missing `lo_power` metadata", file.display()))
                })?;
                let variance = homodyne_core::difference_variance(&traces)?.value;
                Ok((power, variance))
            })
            .collect()
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        read_pairs(path, &text, LADDER_HEADER)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub fit_points: Vec<[f64; 2]>,
}

impl From<&SnlCalibration> for CalibrationFile {
    fn from(c: &SnlCalibration) -> Self {
        Self {
            slope: c.slope,
            intercept: c.intercept,
            r_squared: c.r_squared,
            fit_points: c.fit_points.iter().map(|&(p, v)| [p, v]).collect(),
        }
    }
}

impl From<CalibrationFile> for SnlCalibration {
    fn from(c: CalibrationFile) -> Self {
        SnlCalibration {
            slope: c.slope,
            intercept: c.intercept,
            fit_points: c.fit_points.into_iter().map(|[p, v]| (p, v)).collect(),
            r_squared: c.r_squared,
        }
    }
}

pub fn write_calibration(path: &Path, cal: &SnlCalibration) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&CalibrationFile::from(cal))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_calibration(path: &Path) -> Result<SnlCalibration, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: CalibrationFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !(file.slope > 0.0) {
        return Err(CliError::Config(format!(
            "{}: slope {} is not positive",
            path.display(),
            file.slope
        )));
    }
    Ok(file.into())
}

/// Writes serializable rows as CSV with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Usage(format!("{}: {other:?}", path.display())),
    }
}
