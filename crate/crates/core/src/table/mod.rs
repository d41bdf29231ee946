//! Column-typed tabular datasets.
//!
//! A [`Table`] is a dense row-major matrix of `f64` cells. Numeric columns hold
//! their values, categorical columns hold non-negative integer codes and a
//! missing cell is `NaN`. Textual labels only exist in a [`RawTable`]; encoding
//! turns them into codes and records the mapping in a [`CodeBook`].

mod csv_io;
mod preprocess;
mod split;

use std::collections::{BTreeMap, HashSet};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, load_csv_with, read_csv_raw, SchemaHint};
pub use preprocess::{impute, inverse_zscore, zscore, ColumnStats, PreprocessStats};
pub use split::{split_sizes, stratified_split, SplitBundle};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error on {path}: {message}")]
    Csv { path: String, message: String },
    #[error("{path} is empty")]
    EmptyFile { path: String },
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{column}` is declared numeric but cell `{cell}` does not parse")]
    NotNumeric { column: String, cell: String },
    #[error("target column `{0}` must be categorical")]
    TargetNotCategorical(String),
    #[error("target index {index} out of range for {width} columns")]
    TargetOutOfRange { index: usize, width: usize },
    #[error("table has {found} columns, schema expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("column `{column}` holds invalid categorical code {value}")]
    InvalidCode { column: String, value: f64 },
    #[error("class `{class}` has {count} rows; at least 3 are needed to split")]
    ClassTooSmall { class: String, count: usize },
    #[error("column `{0}` has no observed values to fit statistics on")]
    AllMissing(String),
    #[error("column `{0}` contains missing cells")]
    MissingCells(String),
    #[error("target column contains missing cells")]
    MissingTarget,
    #[error("preprocessing statistics cover {found} columns, table has {expected}")]
    StatsMismatch { expected: usize, found: usize },
}

pub type Result<T, E = TableError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered column list plus the index of the (categorical) target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
    target_index: usize,
}

impl Schema {
    pub fn new(columns: Vec<Column>, target_index: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
        }
        if target_index >= columns.len() {
            return Err(TableError::TargetOutOfRange {
                index: target_index,
                width: columns.len(),
            });
        }
        if columns[target_index].kind != ColumnKind::Categorical {
            return Err(TableError::TargetNotCategorical(
                columns[target_index].name.clone(),
            ));
        }
        Ok(Self {
            columns,
            target_index,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target(&self) -> &Column {
        &self.columns[self.target_index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    /// Column indices of every non-target column, in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| i != self.target_index)
            .collect()
    }

    pub fn feature_kinds(&self) -> Vec<ColumnKind> {
        self.feature_indices()
            .into_iter()
            .map(|i| self.columns[i].kind)
            .collect()
    }
}

/// Per-column label tables for categorical columns; code `k` is `labels[k]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBook {
    labels: BTreeMap<usize, Vec<String>>,
}

impl CodeBook {
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self, column: usize) -> Option<&[String]> {
        self.labels.get(&column).map(Vec::as_slice)
    }

    pub fn set_labels(&mut self, column: usize, labels: Vec<String>) {
        self.labels.insert(column, labels);
    }

    pub fn encode(&self, column: usize, label: &str) -> Option<usize> {
        self.labels
            .get(&column)
            .and_then(|l| l.iter().position(|s| s == label))
    }

    pub fn decode(&self, column: usize, code: usize) -> Option<&str> {
        self.labels
            .get(&column)
            .and_then(|l| l.get(code))
            .map(String::as_str)
    }

    /// Code for `label`, appending it when unseen.
    pub fn encode_or_insert(&mut self, column: usize, label: &str) -> usize {
        let entry = self.labels.entry(column).or_default();
        match entry.iter().position(|s| s == label) {
            Some(code) => code,
            None => {
                entry.push(label.to_string());
                entry.len() - 1
            }
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.keys().copied()
    }
}

/// Table with textual cells, prior to categorical encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: Schema,
    /// Row-major cells; `None` marks a missing value.
    pub rows: Vec<Vec<Option<String>>>,
}

/// Ordinal-encode categorical columns in first-appearance order.
///
/// Numeric columns are parsed as decimal floats; missing cells stay missing.
pub fn encode_categoricals(raw: &RawTable) -> Result<(Table, CodeBook)> {
    encode_with(raw, &CodeBook::default())
}

/// Like [`encode_categoricals`] but extends an existing codebook, so files
/// that share a schema also share codes.
pub fn encode_with(raw: &RawTable, base: &CodeBook) -> Result<(Table, CodeBook)> {
    let width = raw.schema.width();
    let mut book = base.clone();
    let mut data = Array2::from_elem((raw.rows.len(), width), f64::NAN);
    for (r, row) in raw.rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let Some(text) = cell else { continue };
            let column = raw.schema.column(c);
            data[[r, c]] = match column.kind {
                ColumnKind::Numeric => parse_number(text).ok_or_else(|| TableError::NotNumeric {
                    column: column.name.clone(),
                    cell: text.clone(),
                })?,
                ColumnKind::Categorical => book.encode_or_insert(c, text) as f64,
            };
        }
    }
    // Categorical columns with no observed value still get an (empty) entry.
    for (c, column) in raw.schema.columns().iter().enumerate() {
        if column.kind == ColumnKind::Categorical && book.labels(c).is_none() {
            book.set_labels(c, Vec::new());
        }
    }
    let table = Table::new(raw.schema.clone(), data, book.clone())?;
    Ok((table, book))
}

pub(crate) fn parse_number(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Dense encoded table. Missing cells are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    data: Array2<f64>,
    codebook: CodeBook,
}

impl Table {
    pub fn new(schema: Schema, data: Array2<f64>, codebook: CodeBook) -> Result<Self> {
        if data.ncols() != schema.width() {
            return Err(TableError::WidthMismatch {
                expected: schema.width(),
                found: data.ncols(),
            });
        }
        for (c, column) in schema.columns().iter().enumerate() {
            if column.kind != ColumnKind::Categorical {
                continue;
            }
            for &v in data.column(c) {
                if !v.is_nan() && (v < 0.0 || v.fract() != 0.0 || !v.is_finite()) {
                    return Err(TableError::InvalidCode {
                        column: column.name.clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            schema,
            data,
            codebook,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn codebook(&self) -> &CodeBook {
        &self.codebook
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[[row, col]]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.data[[row, col]].is_nan()
    }

    pub fn column(&self, col: usize) -> ArrayView1<'_, f64> {
        self.data.column(col)
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    /// Same schema and codebook, new cells.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Table::new(self.schema.clone(), data, self.codebook.clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            data: self.data.select(Axis(0), rows),
            codebook: self.codebook.clone(),
        }
    }

    /// Row-wise concatenation of tables sharing this table's schema.
    pub fn concat(tables: &[Table]) -> Result<Table> {
        let first = tables.first().expect("concat needs at least one table");
        let views: Vec<_> = tables.iter().map(|t| t.data.view()).collect();
        for t in tables {
            if t.schema.width() != first.schema.width() {
                return Err(TableError::WidthMismatch {
                    expected: first.schema.width(),
                    found: t.schema.width(),
                });
            }
        }
        let data = ndarray::concatenate(Axis(0), &views).expect("widths checked");
        first.with_data(data)
    }

    /// Non-target columns, in schema order.
    pub fn features(&self) -> Array2<f64> {
        self.data.select(Axis(1), &self.schema.feature_indices())
    }

    /// Target codes; fails when a target cell is missing.
    pub fn target_codes(&self) -> Result<Vec<usize>> {
        self.data
            .column(self.schema.target_index())
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    Err(TableError::MissingTarget)
                } else {
                    Ok(v as usize)
                }
            })
            .collect()
    }

    /// Number of target classes: the larger of the codebook size and the
    /// highest observed code plus one.
    pub fn n_classes(&self) -> usize {
        let t = self.schema.target_index();
        let observed = self
            .data
            .column(t)
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0usize, |m, &v| m.max(v as usize + 1));
        observed.max(self.codebook.labels(t).map_or(0, <[String]>::len))
    }

    /// Distinct observed codes of a categorical column, ascending.
    pub fn observed_codes(&self, col: usize) -> Vec<usize> {
        let mut codes: Vec<usize> = self
            .data
            .column(col)
            .iter()
            .filter(|v| !v.is_nan())
            .map(|&v| v as usize)
            .collect();
        codes.sort_unstable();
        codes.dedup();
        codes
    }

    /// Per-class row counts of the target column.
    pub fn class_counts(&self) -> Result<BTreeMap<usize, usize>> {
        let mut counts = BTreeMap::new();
        for c in self.target_codes()? {
            *counts.entry(c).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// Human-readable label of a category code, falling back to the code.
    pub fn label(&self, col: usize, code: usize) -> String {
        self.codebook
            .decode(col, code)
            .map_or_else(|| code.to_string(), str::to_string)
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        csv_io::write_csv(self, path.as_ref())
    }
}
