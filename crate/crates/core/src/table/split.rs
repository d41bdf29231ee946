//! Capped, stratified train/validation/test splitting.

use rand::seq::SliceRandom;

use super::{Result, Table, TableError};
use crate::rng;

/// Train, validation and test partitions of one fold.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub train: Table,
    pub val: Table,
    pub test: Table,
    pub fold_seed: u64,
    /// Source row indices of each partition, ascending.
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// `(train, val, test)` sizes for `n` rows: train is `min(⌊0.6n⌋, 600)`,
/// validation `min(⌊0.2n⌋, 200)` and test takes the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (6 * n / 10).min(600);
    let val = (n / 5).min(200);
    (train, val, n - train - val)
}

/// Stratified two-stage split: test rows are drawn first, then the remainder
/// is divided into train and validation.
///
/// Per-class quotas are the exact proportional counts rounded up or down so
/// that row totals (class sizes) and column totals (split sizes) both hold;
/// every per-class count is therefore within one of proportional.
pub fn stratified_split(table: &Table, fold_seed: u64) -> Result<SplitBundle> {
    let labels = table.target_codes()?;
    let n = labels.len();
    let counts = table.class_counts()?;
    for (&class, &count) in &counts {
        if count < 3 {
            return Err(TableError::ClassTooSmall {
                class: table.label(table.schema().target_index(), class),
                count,
            });
        }
    }
    let (n_train, n_val, n_test) = split_sizes(n);
    let classes: Vec<usize> = counts.keys().copied().collect();
    let class_sizes: Vec<usize> = counts.values().copied().collect();
    // Column order: test, train, val.
    let quotas = round_quotas(&class_sizes, &[n_test, n_train, n_val]);

    let mut rng = rng::seeded(fold_seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (ci, &class) in classes.iter().enumerate() {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let q = &quotas[ci];
        test.extend_from_slice(&members[..q[0]]);
        let mut rest = members[q[0]..].to_vec();
        rest.shuffle(&mut rng);
        train.extend_from_slice(&rest[..q[1]]);
        val.extend_from_slice(&rest[q[1]..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitBundle {
        train: table.select_rows(&train),
        val: table.select_rows(&val),
        test: table.select_rows(&test),
        fold_seed,
        train_rows: train,
        val_rows: val,
        test_rows: test,
    })
}

/// Integer matrix `q[c][s]` with `Σ_s q = rows[c]`, `Σ_c q = cols[s]` and each
/// entry equal to the floor or ceiling of `rows[c]·cols[s]/N`.
///
/// Floors are fixed first; the leftover units form a bipartite b-matching
/// between classes and splits that is solved as a max-flow. The fractional
/// remainders are a feasible fractional flow, so an integral saturating flow
/// always exists.
fn round_quotas(rows: &[usize], cols: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = rows.iter().sum();
    let mut q: Vec<Vec<usize>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| r * c / total).collect())
        .collect();
    let rem: Vec<Vec<usize>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| r * c % total).collect())
        .collect();
    let mut row_need: Vec<usize> = rows
        .iter()
        .zip(&q)
        .map(|(&r, qr)| r - qr.iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(s, &c)| c - q.iter().map(|qr| qr[s]).sum::<usize>())
        .collect();
    // Augmenting paths alternate class→split (unused bump) and split→class
    // (reversal of a used bump). Larger remainders are tried first.
    let mut bumped = vec![vec![false; cols.len()]; rows.len()];
    loop {
        let Some(start) = (0..rows.len()).find(|&c| row_need[c] > 0) else {
            break;
        };
        let mut seen_cols = vec![false; cols.len()];
        let mut path = Vec::new();
        if !augment(start, &rem, &bumped, &col_need, &mut seen_cols, &mut path) {
            // Cannot happen for consistent totals; give up on this class.
            row_need[start] = 0;
            continue;
        }
        for &(c, s, forward) in &path {
            bumped[c][s] = forward;
        }
        let last_col = path.last().expect("non-empty path").1;
        row_need[start] -= 1;
        col_need[last_col] -= 1;
    }
    for (c, row) in bumped.iter().enumerate() {
        for (s, &b) in row.iter().enumerate() {
            if b {
                q[c][s] += 1;
            }
        }
    }
    q
}

fn augment(
    class: usize,
    rem: &[Vec<usize>],
    bumped: &[Vec<bool>],
    col_need: &[usize],
    seen_cols: &mut [bool],
    path: &mut Vec<(usize, usize, bool)>,
) -> bool {
    let mut order: Vec<usize> = (0..rem[class].len()).collect();
    order.sort_by(|&a, &b| rem[class][b].cmp(&rem[class][a]).then(a.cmp(&b)));
    for s in order {
        if seen_cols[s] || rem[class][s] == 0 || bumped[class][s] {
            continue;
        }
        seen_cols[s] = true;
        path.push((class, s, true));
        if col_need[s] > 0 {
            return true;
        }
        // Split s is full: try to move one of its bumps to another class.
        for other in 0..rem.len() {
            if other != class && bumped[other][s] {
                path.push((other, s, false));
                if augment(other, rem, bumped, col_need, seen_cols, path) {
                    return true;
                }
                path.pop();
            }
        }
        path.pop();
    }
    false
}
