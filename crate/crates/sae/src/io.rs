//! CSV microdata ingestion and output.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};
use sae_core::data::parse_indicator_token;
use sae_core::{Dataset, DomainId, Role, UnitRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the department prefix of a municipality code, used when a file
/// has no department column.
pub const DEPARTMENT_PREFIX: usize = 2;

/// Column mapping of a microdata file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub department: String,
    pub municipality: String,
    pub weight: String,
    pub unit_id: String,
    /// Empty: every header column starting with `x_`, in header order.
    pub covariates: Vec<String>,
    /// Empty: `y_1..y_K`.
    pub indicators: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            department: "domain_dept".into(),
            municipality: "domain_muni".into(),
            weight: "weight".into(),
            unit_id: "unit_id".into(),
            covariates: Vec::new(),
            indicators: Vec::new(),
        }
    }
}

impl Schema {
    pub fn indicator_columns(&self, k: usize) -> Vec<String> {
        if self.indicators.is_empty() {
            (1..=k).map(|i| format!("y_{i}")).collect()
        } else {
            self.indicators.clone()
        }
    }

    pub fn covariate_columns(&self, p: usize) -> Vec<String> {
        if self.covariates.is_empty() {
            (1..=p).map(|i| format!("x_{i}")).collect()
        } else {
            self.covariates.clone()
        }
    }
}

fn position(header: &StringRecord, name: &str) -> Option<usize> {
    header.iter().position(|h| h.trim() == name)
}

fn required(header: &StringRecord, name: &str) -> Result<usize> {
    position(header, name).ok_or_else(|| sae_core::Error::MissingColumn(name.to_string()).into())
}

/// Read a dataset. Columns for indicators in `optional` may be absent, in
/// which case they are missing for every record. Department, weight and unit
/// id columns are used when present. Error rows are 0-based data rows.
pub fn read_dataset<R: Read>(
    reader: R,
    role: Role,
    schema: &Schema,
    k: usize,
    optional: &BTreeSet<usize>,
) -> Result<Dataset> {
    let mut rdr = ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let muni_col = required(&header, &schema.municipality)?;
    let dept_col = position(&header, &schema.department);
    let weight_col = position(&header, &schema.weight);
    let id_col = position(&header, &schema.unit_id);
    let covariate_names: Vec<String> = if schema.covariates.is_empty() {
        header.iter().filter(|h| h.starts_with("x_")).map(str::to_string).collect()
    } else {
        schema.covariates.clone()
    };
    let covariate_cols = covariate_names.iter().map(|c| required(&header, c)).collect::<Result<Vec<_>>>()?;
    let indicator_names = schema.indicator_columns(k);
    let indicator_cols = indicator_names
        .iter()
        .enumerate()
        .map(|(i, c)| match position(&header, c) {
            Some(p) => Ok(Some(p)),
            None if optional.contains(&i) => Ok(None),
            None => required(&header, c).map(Some),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let muni = field(muni_col).to_string();
        let department = match dept_col {
            Some(c) => field(c).to_string(),
            None => muni.chars().take(DEPARTMENT_PREFIX).collect(),
        };
        let covariates = covariate_cols
            .iter()
            .zip(&covariate_names)
            .map(|(&c, name)| {
                field(c)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| sae_core::Error::NonFiniteCovariate { row, column: name.clone() }.into())
            })
            .collect::<Result<Vec<f64>>>()?;
        let indicators = indicator_cols
            .iter()
            .zip(&indicator_names)
            .map(|(c, name)| match c {
                None => Ok(None),
                Some(c) => parse_indicator_token(field(*c)).map_err(|()| {
                    sae_core::Error::NonBinaryIndicator { row, column: name.clone(), value: field(*c).to_string() }
                        .into()
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let design_weight = match weight_col {
            Some(c) if !field(c).is_empty() => {
                field(c).parse::<f64>().map_err(|_| sae_core::Error::InvalidWeight { row })?
            }
            _ => 1.0,
        };
        let unit_id = id_col.map(|c| field(c).to_string()).filter(|s| !s.is_empty());
        records.push(UnitRecord {
            department: DomainId::new(department),
            domain: DomainId::new(muni),
            unit_id,
            covariates,
            indicators,
            design_weight,
        });
    }
    Ok(Dataset::new(role, covariate_names, indicator_names, records)?)
}

pub fn load_dataset(
    path: &Path,
    role: Role,
    schema: &Schema,
    k: usize,
    optional: &BTreeSet<usize>,
) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), role, schema, k, optional)
}

/// Write a dataset with the schema's column names. Indicators listed in
/// `omit` are left out; other missing values are written as `NA`.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset, schema: &Schema, omit: &BTreeSet<usize>) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(writer);
    let with_ids = data.records().iter().any(|r| r.unit_id.is_some());
    let covariates = schema.covariate_columns(data.p());
    let indicators = schema.indicator_columns(data.k());
    let mut header = vec![schema.department.clone(), schema.municipality.clone(), schema.weight.clone()];
    if with_ids {
        header.push(schema.unit_id.clone());
    }
    header.extend(covariates);
    header.extend(indicators.into_iter().enumerate().filter(|(i, _)| !omit.contains(i)).map(|(_, n)| n));
    w.write_record(&header)?;
    for r in data.records() {
        let mut row = vec![r.department.to_string(), r.domain.to_string(), r.design_weight.to_string()];
        if with_ids {
            row.push(r.unit_id.clone().unwrap_or_default());
        }
        row.extend(r.covariates.iter().map(f64::to_string));
        row.extend(r.indicators.iter().enumerate().filter(|(i, _)| !omit.contains(i)).map(|(_, v)| match v {
            Some(true) => "1".to_string(),
            Some(false) => "0".to_string(),
            None => "NA".to_string(),
        }));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
