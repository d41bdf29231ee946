use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    encode_categoricals, encode_with, parse_number, Column, ColumnKind, RawTable, Result, Schema,
    Table, TableError,
};

/// Partial schema supplied next to a CSV file: column kinds to force and the
/// name of the target column. Unlisted columns are inferred; without a
/// target the last column is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaHint {
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn csv_err(path: &Path, e: csv::Error) -> TableError {
    TableError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Parse a CSV file into textual cells and infer column kinds.
pub fn read_csv_raw(path: &Path, hint: Option<&SchemaHint>) -> Result<RawTable> {
    let file = File::open(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if file.metadata().map(|m| m.len() == 0).unwrap_or(false) {
        return Err(TableError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(TableError::EmptyFile {
            path: path.display().to_string(),
        });
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != header.len() {
            return Err(TableError::RaggedRow {
                row: i + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        rows.push(
            record
                .iter()
                .map(|c| (!is_missing(c)).then(|| c.to_string()))
                .collect::<Vec<_>>(),
        );
    }

    let default_hint = SchemaHint::default();
    let hint = hint.unwrap_or(&default_hint);
    for name in hint.columns.keys().chain(hint.target.iter()) {
        if !header.contains(name) {
            return Err(TableError::UnknownColumn(name.clone()));
        }
    }
    let target_index = match &hint.target {
        Some(name) => header.iter().position(|h| h == name).expect("checked above"),
        None => header.len() - 1,
    };

    let mut columns = Vec::with_capacity(header.len());
    for (c, name) in header.iter().enumerate() {
        let kind = if c == target_index {
            ColumnKind::Categorical
        } else if let Some(kind) = hint.columns.get(name) {
            *kind
        } else {
            let numeric = rows
                .iter()
                .filter_map(|r| r[c].as_deref())
                .all(|cell| parse_number(cell).is_some());
            if numeric {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            }
        };
        if kind == ColumnKind::Numeric {
            if let Some(bad) = rows
                .iter()
                .filter_map(|r| r[c].as_deref())
                .find(|cell| parse_number(cell).is_none())
            {
                return Err(TableError::NotNumeric {
                    column: name.clone(),
                    cell: bad.to_string(),
                });
            }
        }
        columns.push(Column::new(name.clone(), kind));
    }
    let schema = Schema::new(columns, target_index)?;
    Ok(RawTable { schema, rows })
}

/// Read and encode a CSV file.
pub fn load_csv(path: impl AsRef<Path>, hint: Option<&SchemaHint>) -> Result<Table> {
    let raw = read_csv_raw(path.as_ref(), hint)?;
    Ok(encode_categoricals(&raw)?.0)
}

/// Read a CSV file against the schema and codebook of `reference`, so that
/// categorical codes agree between the two tables.
pub fn load_csv_with(path: impl AsRef<Path>, reference: &Table) -> Result<Table> {
    let path = path.as_ref();
    let schema = reference.schema();
    let hint = SchemaHint {
        target: Some(schema.target().name.clone()),
        columns: schema
            .columns()
            .iter()
            .map(|c| (c.name.clone(), c.kind))
            .collect(),
    };
    let mut raw = read_csv_raw(path, Some(&hint))?;
    let header = raw.schema.names();
    if header != schema.names() {
        // Reorder columns into the reference order.
        let positions = schema
            .names()
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| TableError::UnknownColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        if header.len() != positions.len() {
            return Err(TableError::WidthMismatch {
                expected: positions.len(),
                found: header.len(),
            });
        }
        raw.rows = raw
            .rows
            .into_iter()
            .map(|row| positions.iter().map(|&p| row[p].clone()).collect())
            .collect();
    }
    raw.schema = schema.clone();
    Ok(encode_with(&raw, reference.codebook())?.0)
}

pub(super) fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let io_err = |e: csv::Error| TableError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    writer
        .write_record(table.schema().names())
        .map_err(io_err)?;
    let kinds = table.schema().kinds();
    for row in table.data().rows() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                if v.is_nan() {
                    String::new()
                } else if kinds[c] == ColumnKind::Categorical {
                    table.label(c, v as usize)
                } else {
                    format!("{v}")
                }
            })
            .collect();
        writer.write_record(&cells).map_err(io_err)?;
    }
    writer.flush().map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })
}
