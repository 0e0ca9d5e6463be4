//! Pipe-separated cohort directories: one .psv file per patient, header row,
//! NaN for missing values.

use std::path::Path;

use crate::data::{Cohort, PatientRecord, SchemaConfig};
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// A loaded cohort plus the number of patients dropped for having fewer than
/// `t_min` visits.
#[derive(Debug)]
pub struct LoadOutcome {
    pub cohort: Cohort,
    pub dropped_short: usize,
}

/// Load every .psv file under `dir`, in lexicographic file-name order. The
/// file stem becomes the patient id. A patient's label is 1 if any visit's
/// label cell is 1. Static values are taken from the first visit where they
/// are observed.
pub fn load_cohort(dir: &Path, schema: &SchemaConfig) -> Result<LoadOutcome> {
    schema.validate()?;
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "psv"))
        .collect();
    paths.sort();

    let mut records = Vec::with_capacity(paths.len());
    let mut dropped_short = 0;
    for path in &paths {
        match load_patient(path, schema)? {
            Some(record) => records.push(record),
            None => dropped_short += 1,
        }
    }
    let cohort = Cohort::new(records, schema.dynamic.clone(), schema.statics.clone())?;
    Ok(LoadOutcome {
        cohort,
        dropped_short,
    })
}

fn load_patient(path: &Path, schema: &SchemaConfig) -> Result<Option<PatientRecord>> {
    let format_err = |line: usize, message: String| Error::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(1, "empty file, expected a header row".into()))?;
    let columns: Vec<&str> = header.split('|').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| format_err(1, format!("header is missing column {name}")))
    };
    let dynamic_cols: Vec<usize> = schema
        .dynamic
        .iter()
        .map(|n| find(n))
        .collect::<Result<_>>()?;
    let static_cols: Vec<usize> = schema
        .statics
        .iter()
        .map(|n| find(n))
        .collect::<Result<_>>()?;
    let label_col = find(&schema.label)?;

    let parse = |cell: &str, line: usize, name: &str| -> Result<f64> {
        cell.trim()
            .parse::<f64>()
            .map_err(|_| format_err(line, format!("column {name} has unparseable cell {cell:?}")))
    };

    let mut visits: Vec<Vec<f64>> = Vec::new();
    let mut statics: Vec<f64> = vec![f64::NAN; schema.statics.len()];
    let mut label = 0u8;
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 2;
        let cells: Vec<&str> = line.split('|').collect();
        if cells.len() != columns.len() {
            return Err(format_err(
                line_no,
                format!("row has {} cells, header has {}", cells.len(), columns.len()),
            ));
        }
        let mut row = Vec::with_capacity(dynamic_cols.len());
        for (&col, name) in dynamic_cols.iter().zip(&schema.dynamic) {
            row.push(parse(cells[col], line_no, name)?);
        }
        visits.push(row);
        for (slot, (&col, name)) in statics.iter_mut().zip(static_cols.iter().zip(&schema.statics))
        {
            if slot.is_nan() {
                let v = parse(cells[col], line_no, name)?;
                if !v.is_nan() {
                    *slot = v;
                }
            }
        }
        let y = parse(cells[label_col], line_no, &schema.label)?;
        if y == 1.0 {
            label = 1;
        } else if y != 0.0 {
            return Err(format_err(
                line_no,
                format!("label column {} has non-binary value {y}", schema.label),
            ));
        }
    }

    if visits.len() < schema.t_min {
        return Ok(None);
    }
    if let Some(t_max) = schema.t_max {
        if visits.len() > t_max {
            visits.drain(..visits.len() - t_max);
        }
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Some(PatientRecord {
        id,
        dynamic: Matrix::from_rows(&visits)?,
        static_features: statics,
        label,
    }))
}

/// Write one `{id}.psv` per record into `dir` (created if absent). Static
/// values and the patient label repeat on every visit row.
pub fn write_cohort(cohort: &Cohort, dir: &Path, label_name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for record in &cohort.records {
        let mut out = String::new();
        for name in &cohort.dynamic_names {
            out.push_str(name);
            out.push('|');
        }
        for name in &cohort.static_names {
            out.push_str(name);
            out.push('|');
        }
        out.push_str(label_name);
        out.push('\n');
        for t in 0..record.visit_count() {
            for v in record.dynamic.row(t) {
                out.push_str(&format_cell(*v));
                out.push('|');
            }
            for v in &record.static_features {
                out.push_str(&format_cell(*v));
                out.push('|');
            }
            out.push_str(&format_cell(record.label as f64));
            out.push('\n');
        }
        std::fs::write(dir.join(format!("{}.psv", record.id)), out)?;
    }
    Ok(())
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        // Display prints the shortest string that parses back to the same bits.
        format!("{v}")
    }
}
