//! Classification metrics and the Pearson correlation.

use ndarray::ArrayView2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no rows to score")]
    Empty,
    #[error("{scores} score rows for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {label} is outside the {classes} predicted classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("probability row {row} sums to {sum}")]
    NotNormalized { row: usize, sum: f64 },
    /// The metric has no value on this input (one class only, or zero
    /// variance).
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
}

pub type Result<T> = std::result::Result<T, MetricError>;

pub const PROB_CLIP: f64 = 1e-15;

fn check_shape(rows: usize, k: usize, labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    if rows != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: rows,
            labels: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(MetricError::LabelOutOfRange { label, classes: k });
    }
    Ok(())
}

/// Mean negative log-probability of the true class, probabilities clipped
/// to `[1e-15, 1 − 1e-15]`.
pub fn log_loss(probs: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    check_shape(probs.nrows(), probs.ncols(), labels)?;
    for (r, row) in probs.rows().into_iter().enumerate() {
        let sum = row.sum();
        if !((sum - 1.0).abs() <= 1e-6) {
            return Err(MetricError::NotNormalized { row: r, sum });
        }
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -probs[[r, l]].clamp(PROB_CLIP, 1.0 - PROB_CLIP).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mann–Whitney AUC: the share of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from average ranks.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined("needs both positive and negative rows"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&o| positive[o]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// ROC-AUC of per-class scores. Two classes use the second column as the
/// positive score; more classes average one-vs-rest AUCs over the classes
/// present in `labels`.
pub fn roc_auc(scores: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let k = scores.ncols();
    check_shape(scores.nrows(), k, labels)?;
    if k == 2 {
        let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        return binary_auc(&scores.column(1).to_vec(), &pos);
    }
    let mut present = vec![false; k];
    for &l in labels {
        present[l] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(MetricError::Undefined("labels hold a single class"));
    }
    let mut total = 0.0;
    let mut count = 0;
    for c in (0..k).filter(|&c| present[c]) {
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        total += binary_auc(&scores.column(c).to_vec(), &pos)?;
        count += 1;
    }
    Ok(total / count as f64)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch {
            scores: xs.len(),
            labels: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(MetricError::Undefined("needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined("zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
