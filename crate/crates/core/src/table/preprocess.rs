//! Mean/mode imputation and z-score normalization.

use serde::{Deserialize, Serialize};

use super::{ColumnKind, Result, Table, TableError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnStats {
    /// Population mean and standard deviation.
    Numeric { mean: f64, std: f64 },
    Categorical { mode: f64 },
}

/// Statistics fitted on one table and reusable to transform others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub columns: Vec<ColumnStats>,
    pub zscored: bool,
}

impl PreprocessStats {
    pub fn fit(table: &Table) -> Result<Self> {
        let columns = table
            .schema()
            .columns()
            .iter()
            .enumerate()
            .map(|(c, column)| {
                let observed: Vec<f64> = table
                    .column(c)
                    .iter()
                    .copied()
                    .filter(|v| !v.is_nan())
                    .collect();
                if observed.is_empty() {
                    return Err(TableError::AllMissing(column.name.clone()));
                }
                Ok(match column.kind {
                    ColumnKind::Numeric => {
                        let n = observed.len() as f64;
                        let mean = observed.iter().sum::<f64>() / n;
                        let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        ColumnStats::Numeric {
                            mean,
                            std: var.sqrt(),
                        }
                    }
                    ColumnKind::Categorical => ColumnStats::Categorical {
                        mode: mode_smallest(&observed),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            columns,
            zscored: false,
        })
    }

    fn check_width(&self, table: &Table) -> Result<()> {
        if self.columns.len() != table.n_cols() {
            return Err(TableError::StatsMismatch {
                expected: table.n_cols(),
                found: self.columns.len(),
            });
        }
        Ok(())
    }
}

/// Most frequent code; ties go to the smallest.
fn mode_smallest(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut best, mut best_count) = (sorted[0], 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if j > best_count {
            best = sorted[i];
            best_count = j;
        }
        i += j;
    }
    best
}

/// Fill numeric gaps with the column mean and categorical gaps with the mode.
///
/// With `stats` the supplied statistics are applied instead of refitting.
pub fn impute(table: &Table, stats: Option<&PreprocessStats>) -> Result<(Table, PreprocessStats)> {
    let stats = match stats {
        Some(s) => {
            s.check_width(table)?;
            s.clone()
        }
        None => PreprocessStats::fit(table)?,
    };
    let mut data = table.data().to_owned();
    for (c, col_stats) in stats.columns.iter().enumerate() {
        let fill = match *col_stats {
            ColumnStats::Numeric { mean, .. } => mean,
            ColumnStats::Categorical { mode } => mode,
        };
        data.column_mut(c).mapv_inplace(|v| if v.is_nan() { fill } else { v });
    }
    Ok((table.with_data(data)?, stats))
}

/// Standardize numeric columns to `(x − μ)/σ`; a zero σ is treated as one.
pub fn zscore(table: &Table, stats: Option<&PreprocessStats>) -> Result<(Table, PreprocessStats)> {
    for (c, column) in table.schema().columns().iter().enumerate() {
        if column.kind == ColumnKind::Numeric && table.column(c).iter().any(|v| v.is_nan()) {
            return Err(TableError::MissingCells(column.name.clone()));
        }
    }
    let mut stats = match stats {
        Some(s) => {
            s.check_width(table)?;
            s.clone()
        }
        None => PreprocessStats::fit(table)?,
    };
    let mut data = table.data().to_owned();
    for (c, col_stats) in stats.columns.iter().enumerate() {
        if let ColumnStats::Numeric { mean, std } = *col_stats {
            let scale = if std > 0.0 { std } else { 1.0 };
            data.column_mut(c).mapv_inplace(|v| (v - mean) / scale);
        }
    }
    stats.zscored = true;
    Ok((table.with_data(data)?, stats))
}

/// Map z-scored numeric columns back to their original units.
pub fn inverse_zscore(table: &Table, stats: &PreprocessStats) -> Result<Table> {
    stats.check_width(table)?;
    let mut data = table.data().to_owned();
    for (c, col_stats) in stats.columns.iter().enumerate() {
        if let ColumnStats::Numeric { mean, std } = *col_stats {
            let scale = if std > 0.0 { std } else { 1.0 };
            data.column_mut(c).mapv_inplace(|v| v * scale + mean);
        }
    }
    table.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{CodeBook, Column, Schema};
    use ndarray::{array, Array2};

    fn table(data: Array2<f64>, kinds: &[ColumnKind]) -> Table {
        let mut cols: Vec<Column> = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| Column::new(format!("c{i}"), k))
            .collect();
        cols.push(Column::new("y", ColumnKind::Categorical));
        let n = data.nrows();
        let mut full = Array2::zeros((n, kinds.len() + 1));
        full.slice_mut(ndarray::s![.., ..kinds.len()]).assign(&data);
        Table::new(Schema::new(cols, kinds.len()).unwrap(), full, CodeBook::default()).unwrap()
    }

    #[test]
    fn mean_fill() {
        let t = table(array![[1.0], [f64::NAN], [3.0]], &[ColumnKind::Numeric]);
        let (out, _) = impute(&t, None).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mode_fill_and_tie_break() {
        let t = table(
            array![[0.0], [0.0], [1.0], [f64::NAN]],
            &[ColumnKind::Categorical],
        );
        let (out, _) = impute(&t, None).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![0.0, 0.0, 1.0, 0.0]);

        let t = table(array![[1.0], [0.0], [f64::NAN]], &[ColumnKind::Categorical]);
        let (out, _) = impute(&t, None).unwrap();
        assert_eq!(out.get(2, 0), 0.0);
    }

    #[test]
    fn all_missing_without_stats_fails() {
        let t = table(array![[f64::NAN], [f64::NAN]], &[ColumnKind::Numeric]);
        assert!(matches!(impute(&t, None), Err(TableError::AllMissing(_))));
    }

    #[test]
    fn imputation_is_idempotent() {
        let t = table(
            array![[1.0, 2.0], [f64::NAN, 1.0], [4.0, f64::NAN]],
            &[ColumnKind::Numeric, ColumnKind::Categorical],
        );
        let (once, _) = impute(&t, None).unwrap();
        let (twice, _) = impute(&once, None).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn zscore_rules() {
        let t = table(
            array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
            &[ColumnKind::Numeric, ColumnKind::Numeric],
        );
        let (z, stats) = zscore(&t, None).unwrap();
        let col: Vec<f64> = z.column(0).to_vec();
        let mean = col.iter().sum::<f64>() / 3.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-12);
        assert_eq!(z.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        let back = inverse_zscore(&z, &stats).unwrap();
        for (a, b) in back.data().iter().zip(t.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_with_supplied_stats() {
        let t = table(array![[2.0], [4.0]], &[ColumnKind::Numeric]);
        let stats = PreprocessStats {
            columns: vec![
                ColumnStats::Numeric {
                    mean: 0.0,
                    std: 2.0,
                },
                ColumnStats::Categorical { mode: 0.0 },
            ],
            zscored: false,
        };
        let (z, _) = zscore(&t, Some(&stats)).unwrap();
        assert_eq!(z.column(0).to_vec(), vec![1.0, 2.0]);
    }
}
