//! Trial records and the CSV dataset format.
//!
//! A dataset is a list of [`TrialRecord`]s sharing one set of covariate
//! names. Role columns (`r`, `t`, `y`, and optionally `a`, `z`, latent `u`)
//! are typed fields; everything else is a named real covariate.
//!
//! CSV files carry a header row. Binary role columns must hold 0 or 1, reals
//! are decimal. Header names are mapped onto roles through [`ColumnRoles`] so
//! external files need no renaming.

use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` is not present in the dataset")]
    MissingColumn(String),
    #[error("duplicate column `{0}` in header")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` ({reason})")]
    Parse {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One subject's observed tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Randomized arm.
    pub r: u8,
    /// Treatment received (or the intercurrent indicator, depending on use).
    pub t: u8,
    pub y: f64,
    /// Adherence indicator.
    pub a: Option<u8>,
    /// Biomarker response indicator.
    pub z: Option<u8>,
    /// Latent confounder, only present for simulated data.
    pub u: Option<f64>,
    /// Values aligned with [`Dataset::covariate_names`].
    pub covariates: Vec<f64>,
}

impl TrialRecord {
    pub fn new(r: u8, t: u8, y: f64) -> Self {
        Self {
            r,
            t,
            y,
            a: None,
            z: None,
            u: None,
            covariates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    records: Vec<TrialRecord>,
}

const ROLE_NAMES: [&str; 6] = ["r", "t", "y", "a", "z", "u"];

impl Dataset {
    /// Validates binary fields, covariate widths and that optional fields are
    /// either present on every record or on none.
    pub fn new(covariate_names: Vec<String>, records: Vec<TrialRecord>) -> Result<Self, DataError> {
        for (i, name) in covariate_names.iter().enumerate() {
            if ROLE_NAMES.contains(&name.as_str()) || covariate_names[..i].contains(name) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }
        let first = records.first();
        for (i, rec) in records.iter().enumerate() {
            let binary_ok = |v: u8| v <= 1;
            if !binary_ok(rec.r)
                || !binary_ok(rec.t)
                || !rec.a.is_none_or(binary_ok)
                || !rec.z.is_none_or(binary_ok)
            {
                return Err(DataError::Invalid(format!(
                    "record {i}: binary field outside {{0,1}}"
                )));
            }
            if rec.covariates.len() != covariate_names.len() {
                return Err(DataError::Invalid(format!(
                    "record {i}: {} covariates, expected {}",
                    rec.covariates.len(),
                    covariate_names.len()
                )));
            }
            if let Some(f) = first {
                if f.a.is_some() != rec.a.is_some()
                    || f.z.is_some() != rec.z.is_some()
                    || f.u.is_some() != rec.u.is_some()
                {
                    return Err(DataError::Invalid(format!(
                        "record {i}: optional fields differ from record 0"
                    )));
                }
            }
        }
        Ok(Self {
            covariate_names,
            records,
        })
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_column(&self, name: &str) -> bool {
        let first = self.records.first();
        match name {
            "r" | "t" | "y" => true,
            "a" => first.is_some_and(|r| r.a.is_some()),
            "z" => first.is_some_and(|r| r.z.is_some()),
            "u" => first.is_some_and(|r| r.u.is_some()),
            other => self.covariate_names.iter().any(|c| c == other),
        }
    }

    /// Values of a role column or covariate as reals.
    pub fn column(&self, name: &str) -> Result<Vec<f64>, DataError> {
        if !self.has_column(name) {
            return Err(DataError::MissingColumn(name.to_string()));
        }
        let recs = &self.records;
        Ok(match name {
            "r" => recs.iter().map(|r| f64::from(r.r)).collect(),
            "t" => recs.iter().map(|r| f64::from(r.t)).collect(),
            "y" => recs.iter().map(|r| r.y).collect(),
            "a" => recs.iter().map(|r| f64::from(r.a.unwrap_or(0))).collect(),
            "z" => recs.iter().map(|r| f64::from(r.z.unwrap_or(0))).collect(),
            "u" => recs.iter().map(|r| r.u.unwrap_or(0.0)).collect(),
            other => {
                let j = self
                    .covariate_names
                    .iter()
                    .position(|c| c == other)
                    .expect("checked by has_column");
                recs.iter().map(|r| r.covariates[j]).collect()
            }
        })
    }

    /// True when every value of the column is 0 or 1.
    pub fn is_binary(&self, name: &str) -> Result<bool, DataError> {
        Ok(self.column(name)?.iter().all(|&v| v == 0.0 || v == 1.0))
    }

    /// Dataset built from the records at `indices` (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            covariate_names: self.covariate_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn filter(&self, keep: impl Fn(&TrialRecord) -> bool) -> Dataset {
        Dataset {
            covariate_names: self.covariate_names.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

/// Mapping from CSV header names to record roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRoles {
    pub r: String,
    pub t: String,
    pub y: String,
    pub a: String,
    pub z: String,
    pub u: String,
}

impl Default for ColumnRoles {
    fn default() -> Self {
        Self {
            r: "r".into(),
            t: "t".into(),
            y: "y".into(),
            a: "a".into(),
            z: "z".into(),
            u: "u".into(),
        }
    }
}

enum Slot {
    R,
    T,
    Y,
    A,
    Z,
    U,
    Covariate,
}

/// Read a dataset from CSV. `r`, `t` and `y` roles are required; `a`, `z` and
/// `u` are picked up when their header is present; all other columns become
/// covariates in header order.
pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    for required in [&roles.r, &roles.t, &roles.y] {
        if !header.contains(required) {
            return Err(DataError::MissingColumn(required.clone()));
        }
    }

    let slots: Vec<Slot> = header
        .iter()
        .map(|h| match h {
            h if *h == roles.r => Slot::R,
            h if *h == roles.t => Slot::T,
            h if *h == roles.y => Slot::Y,
            h if *h == roles.a => Slot::A,
            h if *h == roles.z => Slot::Z,
            h if *h == roles.u => Slot::U,
            _ => Slot::Covariate,
        })
        .collect();
    let covariate_names: Vec<String> = header
        .iter()
        .zip(&slots)
        .filter(|(_, s)| matches!(s, Slot::Covariate))
        .map(|(h, _)| h.clone())
        .collect();

    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        // 1-based data row number, header excluded.
        let row_no = idx + 1;
        if row.len() != header.len() {
            return Err(DataError::RowLength {
                row: row_no,
                expected: header.len(),
                found: row.len(),
            });
        }
        let mut rec = TrialRecord::new(0, 0, 0.0);
        for ((field, slot), name) in row.iter().zip(&slots).zip(&header) {
            match slot {
                Slot::R => rec.r = parse_binary(field, row_no, name)?,
                Slot::T => rec.t = parse_binary(field, row_no, name)?,
                Slot::A => rec.a = Some(parse_binary(field, row_no, name)?),
                Slot::Z => rec.z = Some(parse_binary(field, row_no, name)?),
                Slot::Y => rec.y = parse_real(field, row_no, name)?,
                Slot::U => rec.u = Some(parse_real(field, row_no, name)?),
                Slot::Covariate => rec.covariates.push(parse_real(field, row_no, name)?),
            }
        }
        records.push(rec);
    }
    Dataset::new(covariate_names, records)
}

fn parse_real(field: &str, row: usize, column: &str) -> Result<f64, DataError> {
    let err = |reason: &str| DataError::Parse {
        row,
        column: column.to_string(),
        value: field.to_string(),
        reason: reason.to_string(),
    };
    let v: f64 = field.parse().map_err(|_| err("not a decimal number"))?;
    if !v.is_finite() {
        return Err(err("not finite"));
    }
    Ok(v)
}

fn parse_binary(field: &str, row: usize, column: &str) -> Result<u8, DataError> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(DataError::Parse {
            row,
            column: column.to_string(),
            value: field.to_string(),
            reason: "binary column must be 0 or 1".into(),
        }),
    }
}

/// Write a dataset as CSV with canonical role names. Reals use the shortest
/// representation that round-trips exactly. The latent column is written only
/// when `emit_latent` is set.
pub fn write_csv<W: Write>(writer: W, data: &Dataset, emit_latent: bool) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let has_a = data.has_column("a");
    let has_z = data.has_column("z");
    let has_u = emit_latent && data.has_column("u");

    let mut header: Vec<&str> = vec!["r", "t"];
    if has_z {
        header.push("z");
    }
    if has_a {
        header.push("a");
    }
    header.push("y");
    header.extend(data.covariate_names.iter().map(String::as_str));
    if has_u {
        header.push("u");
    }
    w.write_record(&header)?;

    for rec in &data.records {
        let mut row: Vec<String> = vec![rec.r.to_string(), rec.t.to_string()];
        if let Some(z) = rec.z.filter(|_| has_z) {
            row.push(z.to_string());
        }
        if let Some(a) = rec.a.filter(|_| has_a) {
            row.push(a.to_string());
        }
        row.push(format_real(rec.y));
        row.extend(rec.covariates.iter().map(|&v| format_real(v)));
        if has_u {
            row.push(format_real(rec.u.unwrap_or(0.0)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn format_real(v: f64) -> String {
    // Display for f64 is the shortest string that parses back to the same bits.
    format!("{v}")
}
