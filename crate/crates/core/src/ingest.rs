//! CSV ingestion driven by a small TOML schema.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{standardize, Dataset, ModelKind};

/// How the response column becomes a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResponseEncoding {
    /// Parse the field as a number.
    Numeric,
    /// Map labels to 1 or 0. Labels are compared after trimming.
    Labels {
        positive: Vec<String>,
        negative: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub covariates: Vec<String>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default = "default_encoding")]
    pub encoding: ResponseEncoding,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "yes")]
    pub has_header: bool,
    /// Column names for files without a header row.
    #[serde(default)]
    pub columns: Vec<String>,
    /// Lines starting with this character are skipped.
    #[serde(default)]
    pub comment: Option<char>,
}

fn default_encoding() -> ResponseEncoding {
    ResponseEncoding::Numeric
}

fn default_model() -> ModelKind {
    ModelKind::Linear
}

fn yes() -> bool {
    true
}

impl CsvSchema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: CsvSchema = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(Error::Config("schema lists no covariates".into()));
        }
        if self.model != ModelKind::Mean && self.response.is_none() {
            return Err(Error::Config(format!(
                "{} model needs a response column",
                self.model
            )));
        }
        if !self.has_header && self.columns.is_empty() {
            return Err(Error::Config("headerless files need `columns`".into()));
        }
        Ok(())
    }
}

/// A loaded dataset and the bookkeeping needed to check it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub dataset: Dataset,
    /// Data records seen across all files.
    pub rows_read: usize,
    /// Records dropped for missing or unparseable required fields.
    pub dropped: usize,
}

impl LoadReport {
    /// Share of responses equal to 1, if there is a response.
    pub fn event_rate(&self) -> Option<f64> {
        self.dataset
            .y()
            .map(|y| y.iter().filter(|&&v| v == 1.0).count() as f64 / y.len() as f64)
    }
}

fn parse_number(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Columns {
    covariates: Vec<usize>,
    response: Option<usize>,
}

fn locate(names: &[String], schema: &CsvSchema) -> Result<Columns> {
    let find = |name: &String| {
        names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))
    };
    Ok(Columns {
        covariates: schema.covariates.iter().map(find).collect::<Result<_>>()?,
        response: schema.response.as_ref().map(find).transpose()?,
    })
}

/// Loads one CSV file. See [`load_csv_files`].
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadReport> {
    load_csv_files(&[path], schema)
}

/// Loads and stacks several files with the same layout, then adds the
/// intercept and standardizes as the schema asks. Standardization uses the
/// moments of the combined data.
pub fn load_csv_files<P: AsRef<Path>>(paths: &[P], schema: &CsvSchema) -> Result<LoadReport> {
    schema.validate()?;
    if paths.is_empty() {
        return Err(Error::InvalidInput("no input files".into()));
    }
    let q = schema.covariates.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut rows_read = 0;
    let mut dropped = 0;

    for path in paths {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(schema.has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(schema.comment.map(|c| c as u8))
            .from_path(path.as_ref())?;
        let names: Vec<String> = if schema.has_header {
            reader.headers()?.iter().map(str::to_string).collect()
        } else {
            schema.columns.clone()
        };
        let cols = locate(&names, schema)?;

        for record in reader.records() {
            let record = record?;
            rows_read += 1;
            let values: Option<Vec<f64>> = cols
                .covariates
                .iter()
                .map(|&c| record.get(c).and_then(parse_number))
                .collect();
            let response = match cols.response {
                None => Some(None),
                Some(c) => match record.get(c).filter(|f| !f.is_empty() && *f != "?") {
                    None => None,
                    Some(field) => Some(Some(encode(field, schema, rows_read)?)),
                },
            };
            match (values, response) {
                (Some(v), Some(r)) => {
                    x.extend(v);
                    if let Some(r) = r {
                        y.push(r);
                    }
                }
                _ => dropped += 1,
            }
        }
    }

    let n = x.len() / q;
    if n == 0 {
        return Err(Error::EmptyAfterFiltering { dropped });
    }
    let x = DMatrix::from_row_slice(n, q, &x);
    let y = schema.response.is_some().then(|| DVector::from_vec(y));
    let mut data = Dataset::new(x, y, schema.model, schema.covariates.clone())?;
    if schema.intercept {
        data = data.with_intercept();
    }
    if schema.standardize {
        data = standardize(&data)?;
    }
    Ok(LoadReport {
        dataset: data,
        rows_read,
        dropped,
    })
}

fn encode(field: &str, schema: &CsvSchema, row: usize) -> Result<f64> {
    let unmappable = || Error::UnmappableLabel {
        row,
        label: field.to_string(),
    };
    let value = match &schema.encoding {
        ResponseEncoding::Numeric => parse_number(field).ok_or_else(unmappable)?,
        ResponseEncoding::Labels { positive, negative } => {
            if positive.iter().any(|l| l == field) {
                1.0
            } else if negative.iter().any(|l| l == field) {
                0.0
            } else {
                return Err(unmappable());
            }
        }
    };
    if schema.model == ModelKind::Logistic && value != 0.0 && value != 1.0 {
        return Err(unmappable());
    }
    Ok(value)
}
