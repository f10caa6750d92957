//! File formats.
//!
//! Cost matrices are CSV (a `k,k_v,p` label row, one row with those values,
//! then `k` rows of costs) or JSON `{"p": ..., "costs": [[...]]}`. Point clouds
//! are CSV (one point per row, optional header) or a JSON array of points.
//! Vectors (input distributions, base measures) are a JSON array, a JSON
//! object with a `nu`, `m`, `mu` or `probs` field, or a single CSV row or column.
//! Files ending in `.json` are read as JSON, everything else as CSV.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn parse_row(record: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line}: `{f}` is not a number")))
        })
        .collect()
}

/// Numeric CSV rows, skipping a leading header row if it does not parse.
fn numeric_rows<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (n, record) in csv_reader(r).records().enumerate() {
        let record = record?;
        match parse_row(&record, n + 1) {
            Ok(row) if !row.is_empty() => rows.push(row),
            Ok(_) => {}
            Err(_) if n == 0 => {}
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

pub fn cost_matrix_from_csv<R: Read>(r: R) -> Result<CostMatrix> {
    let rows = numeric_rows(r)?;
    let (head, body) = rows
        .split_first()
        .ok_or_else(|| Error::Parse("empty cost matrix file".into()))?;
    let [k, k_v, p] = head[..] else {
        return Err(Error::Parse(format!("expected `k,k_v,p`, got {} fields", head.len())));
    };
    if k.fract() != 0.0 || k_v.fract() != 0.0 || k < 1.0 || k_v < 1.0 {
        return Err(Error::Parse(format!("k = {k} and k_v = {k_v} must be positive integers")));
    }
    let (k, k_v) = (k as usize, k_v as usize);
    if body.len() != k {
        return Err(Error::Parse(format!("header says {k} rows, found {}", body.len())));
    }
    if let Some(bad) = body.iter().find(|r| r.len() != k_v) {
        return Err(Error::Parse(format!("header says {k_v} columns, found a row with {}", bad.len())));
    }
    CostMatrix::from_rows(body, p)
}

pub fn cost_matrix_to_csv<W: Write>(c: &CostMatrix, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    out.write_record(["k", "k_v", "p"])?;
    out.write_record([c.rows().to_string(), c.cols().to_string(), c.p().to_string()])?;
    for i in 0..c.rows() {
        out.write_record(c.row(i).iter().map(f64::to_string))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cost_matrix(path: impl AsRef<Path>) -> Result<CostMatrix> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_json(path) {
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    } else {
        cost_matrix_from_csv(file)
    }
}

pub fn write_cost_matrix(path: impl AsRef<Path>, c: &CostMatrix) -> Result<()> {
    let path = path.as_ref();
    if is_json(path) {
        write_json(path, c)
    } else {
        cost_matrix_to_csv(c, File::create(path)?)
    }
}

pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_json(path) {
        let v: Value = serde_json::from_reader(std::io::BufReader::new(file))?;
        let points = v.get("points").cloned().unwrap_or(v);
        Ok(serde_json::from_value(points)?)
    } else {
        numeric_rows(file)
    }
}

/// A JSON array, or the first of `nu`, `m`, `mu`, `probs` in an object, so
/// command outputs can be fed back in.
pub fn vector_from_json(v: Value) -> Result<Vec<f64>> {
    let inner = match v {
        Value::Object(mut map) => ["nu", "m", "mu", "probs"]
            .iter()
            .find_map(|key| map.remove(*key))
            .ok_or_else(|| Error::Parse("expected an array or an object with a `nu`, `m`, `mu` or `probs` field".into()))?,
        other => other,
    };
    Ok(serde_json::from_value(inner)?)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_json(path) {
        vector_from_json(serde_json::from_reader(std::io::BufReader::new(file))?)
    } else {
        let rows = numeric_rows(file)?;
        if rows.len() > 1 && rows.iter().any(|r| r.len() != 1) {
            return Err(Error::Parse("a vector file needs a single row or a single column".into()));
        }
        Ok(rows.concat())
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}
