//! Multinomial logistic regression by full-batch gradient descent.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::linear::polynomial_features;
use super::spec::LogisticParams;
use super::FitDiagnostics;

#[derive(Debug, Clone)]
pub struct LogisticModel {
    degree: usize,
    mean: Array1<f64>,
    scale: Array1<f64>,
    /// `(1 + p) × k`; row 0 holds the intercepts.
    weights: Array2<f64>,
}

/// Mean cross-entropy plus `0.5·l2·||W||²` (intercepts unpenalised) and its
/// gradient. `design` must carry a leading bias column.
pub fn logistic_loss_and_grad(
    design: ArrayView2<'_, f64>,
    y: &[usize],
    weights: ArrayView2<'_, f64>,
    l2: f64,
) -> (f64, Array2<f64>) {
    let n = design.nrows() as f64;
    let mut probs = design.dot(&weights);
    let mut loss = 0.0;
    for (mut row, &label) in probs.axis_iter_mut(Axis(0)).zip(y) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        loss += z.ln() + m - (row[label].ln() + m);
        row /= z;
        row[label] -= 1.0;
    }
    let mut grad = design.t().dot(&probs) / n;
    let penal = weights.slice(s![1.., ..]);
    loss = loss / n + 0.5 * l2 * penal.iter().map(|w| w * w).sum::<f64>();
    grad.slice_mut(s![1.., ..]).scaled_add(l2, &penal);
    (loss, grad)
}

impl LogisticModel {
    fn design(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut d = polynomial_features(x, self.degree);
        let mut feats = d.slice_mut(s![.., 1..]);
        feats -= &self.mean;
        feats /= &self.scale;
        d
    }

    pub(crate) fn fit(
        x: ArrayView2<'_, f64>,
        y: &[usize],
        k: usize,
        degree: usize,
        params: &LogisticParams,
    ) -> (Self, FitDiagnostics) {
        let raw = polynomial_features(x, degree);
        let feats = raw.slice(s![.., 1..]);
        let mean = feats.mean_axis(Axis(0)).expect("non-empty");
        let scale = feats
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        let mut model = Self {
            degree,
            mean,
            scale,
            weights: Array2::zeros((raw.ncols(), k)),
        };
        let design = model.design(x);
        let step = 1.0 / (0.5 * design.ncols() as f64 + params.l2);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < params.max_iter {
            let (_, grad) = logistic_loss_and_grad(design.view(), y, model.weights.view(), params.l2);
            iterations += 1;
            if grad.iter().all(|g| g.abs() < params.tol) {
                converged = true;
                break;
            }
            model.weights.scaled_add(-step, &grad);
        }
        let notes = if converged {
            Vec::new()
        } else {
            vec![format!("gradient above tol after {iterations} iterations")]
        };
        (
            model,
            FitDiagnostics {
                converged,
                iterations,
                notes,
            },
        )
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut p = self.design(x).dot(&self.weights);
        for mut row in p.axis_iter_mut(Axis(0)) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let z = row.sum();
            row /= z;
        }
        p
    }
}
