//! Brute-force k nearest neighbours under Euclidean distance.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

#[derive(Debug, Clone)]
pub(crate) struct Knn<T> {
    x: Array2<f64>,
    y: Vec<T>,
    k: usize,
}

impl<T: Copy> Knn<T> {
    pub(crate) fn new(x: ArrayView2<'_, f64>, y: Vec<T>, k: usize) -> Self {
        let k = k.min(x.nrows());
        Self {
            x: x.to_owned(),
            y,
            k,
        }
    }

    /// Indices of the `k` closest training rows; equal distances go to the
    /// lower index.
    fn neighbours(&self, q: ArrayView1<'_, f64>) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .axis_iter(Axis(0))
            .enumerate()
            .map(|(i, r)| {
                let dist: f64 = r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (dist, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }
}

impl Knn<f64> {
    pub(crate) fn predict_values(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.axis_iter(Axis(0))
            .map(|q| {
                let nb = self.neighbours(q);
                nb.iter().map(|&i| self.y[i]).sum::<f64>() / nb.len() as f64
            })
            .collect()
    }
}

impl Knn<usize> {
    pub(crate) fn predict_proba(&self, x: ArrayView2<'_, f64>, n_classes: usize) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), n_classes));
        for (r, q) in x.axis_iter(Axis(0)).enumerate() {
            let nb = self.neighbours(q);
            for &i in &nb {
                out[[r, self.y[i]]] += 1.0 / nb.len() as f64;
            }
        }
        out
    }
}
