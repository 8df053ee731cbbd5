//! Dataset CSV ingestion and emission.
//!
//! Layout: t1_lower, t1_upper, t2_lower, t2_upper, cens1, cens2, then one
//! column per covariate. An empty upper bound means right-censored; equal
//! bounds mean an exact event time.

use std::collections::BTreeSet;
use std::path::Path;

use brbvs_core::{CensoringStatus, SurvivalDataset};
use nalgebra::DMatrix;

use crate::errors::AppError;

const TIME_COLS: [&str; 6] = ["t1_lower", "t1_upper", "t2_lower", "t2_upper", "cens1", "cens2"];

fn parse_time(field: &str, row: usize, col: &str) -> Result<Option<f64>, AppError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| AppError::Data(format!("row {}: column {} is not numeric: {:?}", row, col, field)))
}

fn status_from(
    code: &str,
    lower: Option<f64>,
    upper: Option<f64>,
    row: usize,
    margin: usize,
) -> Result<CensoringStatus, AppError> {
    let err = |msg: String| Err(AppError::Data(format!("row {}: margin {}: {}", row, margin, msg)));
    let Some(lo) = lower else {
        return err("missing lower bound".into());
    };
    match code.trim() {
        "U" => match upper {
            Some(hi) if hi == lo => Ok(CensoringStatus::Uncensored(lo)),
            _ => err(format!("status U requires equal bounds, got ({}, {:?})", lo, upper)),
        },
        "R" => match upper {
            None => Ok(CensoringStatus::Right(lo)),
            Some(hi) => err(format!("status R requires an empty upper bound, got {}", hi)),
        },
        "I" => match upper {
            Some(hi) if lo > 0.0 && hi > lo => Ok(CensoringStatus::Interval(lo, hi)),
            _ => err(format!("status I requires 0 < lower < upper, got ({}, {:?})", lo, upper)),
        },
        "L" => match upper {
            Some(hi) if lo == 0.0 && hi > 0.0 => Ok(CensoringStatus::left(hi)),
            _ => err(format!("status L requires lower = 0 < upper, got ({}, {:?})", lo, upper)),
        },
        other => err(format!("unknown status code {:?}", other)),
    }
}

/// Read a dataset file, expanding the named categorical columns into
/// reference-coded indicators (first level alphabetically is the
/// reference).
pub fn load_dataset(path: &Path, categorical: &[String]) -> Result<SurvivalDataset, AppError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| AppError::Data(format!("cannot open {}: {}", path.display(), e)))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| AppError::Data(e.to_string()))?.iter().map(String::from).collect();
    for required in TIME_COLS {
        if !headers.iter().any(|h| h == required) {
            return Err(AppError::Data(format!("missing required column {}", required)));
        }
    }
    let col_idx = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let time_idx: Vec<usize> = TIME_COLS.iter().map(|c| col_idx(c)).collect();
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| !time_idx.contains(i) && h.as_str() != "cens")
        .map(|(i, h)| (i, h.clone()))
        .collect();
    for c in categorical {
        if !cov_cols.iter().any(|(_, h)| h == c) {
            return Err(AppError::Config(format!("categorical column {} not in the file", c)));
        }
    }

    let mut status1 = Vec::new();
    let mut status2 = Vec::new();
    let mut raw: Vec<Vec<String>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 2; // 1-based, counting the header line
        let record = record.map_err(|e| AppError::Data(format!("row {}: {}", row, e)))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let t = |k: usize, name: &str| parse_time(field(time_idx[k]), row, name);
        status1.push(status_from(
            field(time_idx[4]),
            t(0, "t1_lower")?,
            t(1, "t1_upper")?,
            row,
            1,
        )?);
        status2.push(status_from(
            field(time_idx[5]),
            t(2, "t2_lower")?,
            t(3, "t2_upper")?,
            row,
            2,
        )?);
        raw.push(cov_cols.iter().map(|(i, _)| field(*i).trim().to_string()).collect());
    }
    let n = status1.len();

    // expand columns: numeric pass through, categorical become indicators
    let mut names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (c, (_, name)) in cov_cols.iter().enumerate() {
        if categorical.contains(name) {
            let levels: BTreeSet<&str> = raw.iter().map(|r| r[c].as_str()).collect();
            for level in levels.iter().skip(1) {
                names.push(format!("{}_{}", name, level));
                columns.push(
                    raw.iter().map(|r| if r[c] == *level { 1.0 } else { 0.0 }).collect(),
                );
            }
        } else {
            let mut col = Vec::with_capacity(n);
            for (r, rowvals) in raw.iter().enumerate() {
                col.push(rowvals[c].parse::<f64>().map_err(|_| {
                    AppError::Data(format!(
                        "row {}: covariate {} is not numeric: {:?} (declare it categorical?)",
                        r + 2,
                        name,
                        rowvals[c]
                    ))
                })?);
            }
            names.push(name.clone());
            columns.push(col);
        }
    }
    let p = columns.len();
    let covariates = DMatrix::from_fn(n, p, |r, c| columns[c][r]);
    SurvivalDataset::new(status1, status2, covariates, names).map_err(AppError::from)
}

fn bounds_of(s: &CensoringStatus) -> (f64, String, &'static str) {
    match *s {
        CensoringStatus::Uncensored(t) => (t, format!("{}", t), "U"),
        CensoringStatus::Right(l) => (l, String::new(), "R"),
        CensoringStatus::Interval(l, r) if l == 0.0 => (l, format!("{}", r), "L"),
        CensoringStatus::Interval(l, r) => (l, format!("{}", r), "I"),
    }
}

/// Write a dataset in the loader's format. Floats use shortest
/// round-trip formatting, so write-then-read is lossless.
pub fn write_dataset(path: &Path, ds: &SurvivalDataset) -> Result<(), AppError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| AppError::Data(format!("cannot write {}: {}", path.display(), e)))?;
    let mut header: Vec<String> = TIME_COLS.iter().map(|s| s.to_string()).collect();
    header.extend(ds.covariate_names.iter().cloned());
    w.write_record(&header).map_err(|e| AppError::Data(e.to_string()))?;
    for i in 0..ds.n() {
        let (l1, u1, c1) = bounds_of(&ds.status1[i]);
        let (l2, u2, c2) = bounds_of(&ds.status2[i]);
        let mut rec = vec![
            format!("{}", l1),
            u1,
            format!("{}", l2),
            u2,
            c1.to_string(),
            c2.to_string(),
        ];
        for j in 0..ds.p() {
            rec.push(format!("{}", ds.covariates[(i, j)]));
        }
        w.write_record(&rec).map_err(|e| AppError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io("flushing dataset", e))
}
