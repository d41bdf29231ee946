//! Bagged forests and gradient-boosted trees.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::spec::{BoostParams, ForestParams, MaxFeatures, Splitter, TreeParams};
use super::tree::{Binned, GrowParams, Tree, TreeTarget};
use super::FitDiagnostics;
use crate::rng::{seeded, SeededRng};

fn grow_params(t: &TreeParams) -> GrowParams {
    GrowParams {
        max_depth: t.max_depth,
        min_samples_split: t.min_samples_split,
        min_samples_leaf: t.min_samples_leaf,
        max_features: t.max_features,
        max_leaf_nodes: t.max_leaf_nodes,
        random_split: t.splitter == Splitter::Random,
    }
}

/// Average of independently grown trees; a single unbagged tree is a plain
/// decision tree.
#[derive(Debug, Clone)]
pub(crate) struct Forest {
    trees: Vec<Tree>,
    width: usize,
}

impl Forest {
    fn fit(
        x: ArrayView2<'_, f64>,
        target: &TreeTarget<'_>,
        width: usize,
        params: &ForestParams,
        rng: &mut SeededRng,
    ) -> Self {
        let binned = Binned::new(x, params.tree.max_bins);
        let grow = grow_params(&params.tree);
        let n = x.nrows();
        let seeds: Vec<u64> = (0..params.n_trees).map(|_| rng.next_u64()).collect();
        let trees = seeds
            .into_par_iter()
            .map(|s| {
                let mut r = seeded(s);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| r.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                Tree::grow(&binned, target, rows, &grow, &mut r)
            })
            .collect();
        Self { trees, width }
    }

    pub(crate) fn fit_classification(
        x: ArrayView2<'_, f64>,
        y: &[usize],
        n_classes: usize,
        params: &ForestParams,
        rng: &mut SeededRng,
    ) -> Self {
        let target = TreeTarget::Classes {
            y,
            n_classes,
            criterion: params.tree.criterion,
        };
        Self::fit(x, &target, n_classes, params, rng)
    }

    pub(crate) fn fit_regression(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        params: &ForestParams,
        rng: &mut SeededRng,
    ) -> Self {
        let y = y.to_vec();
        Self::fit(x, &TreeTarget::Values { y: &y }, 1, params, rng)
    }

    /// Mean leaf value per row: class frequencies or a single regression column.
    pub(crate) fn predict(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.width));
        let scale = 1.0 / self.trees.len() as f64;
        for (r, row) in x.axis_iter(Axis(0)).enumerate() {
            for t in &self.trees {
                for (o, v) in out.row_mut(r).iter_mut().zip(t.predict_row(row)) {
                    *o += v * scale;
                }
            }
        }
        out
    }
}

fn boost_grow(b: &BoostParams) -> GrowParams {
    GrowParams {
        max_depth: b.max_depth,
        min_samples_split: 2,
        min_samples_leaf: b.min_samples_leaf,
        max_features: MaxFeatures::All,
        max_leaf_nodes: b.max_leaf_nodes,
        random_split: false,
    }
}

/// Fit one residual tree and overwrite its leaves with Newton steps
/// `lr · scale · Σg / (Σh + l2)`; returns the per-row update.
#[allow(clippy::too_many_arguments)]
fn newton_tree(
    x: ArrayView2<'_, f64>,
    binned: &Binned,
    grad: &[f64],
    hess: &[f64],
    scale: f64,
    b: &BoostParams,
    grow: &GrowParams,
    rng: &mut SeededRng,
) -> (Tree, Vec<f64>) {
    let n = x.nrows();
    let mut tree = Tree::grow(binned, &TreeTarget::Values { y: grad }, (0..n).collect(), grow, rng);
    let leaf_of: Vec<usize> = x.axis_iter(Axis(0)).map(|r| tree.apply(r)).collect();
    let mut update = vec![0.0; n];
    for leaf in tree.leaf_ids() {
        let (mut g, mut h) = (0.0, 0.0);
        for i in (0..n).filter(|&i| leaf_of[i] == leaf) {
            g += grad[i];
            h += hess[i];
        }
        let v = if h + b.l2_regularization > 1e-12 {
            b.learning_rate * scale * g / (h + b.l2_regularization)
        } else {
            0.0
        };
        tree.set_leaf_value(leaf, vec![v]);
        for i in (0..n).filter(|&i| leaf_of[i] == leaf) {
            update[i] = v;
        }
    }
    (tree, update)
}

fn tree_sum(trees: &[Tree], row: ArrayView1<'_, f64>) -> f64 {
    trees.iter().map(|t| t.predict_row(row)[0]).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct BoostRegressor {
    base: f64,
    trees: Vec<Tree>,
}

impl BoostRegressor {
    pub(crate) fn fit(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        b: &BoostParams,
        rng: &mut SeededRng,
    ) -> (Self, FitDiagnostics) {
        let n = x.nrows();
        let binned = Binned::new(x, Some(b.max_bins));
        let grow = boost_grow(b);
        let base = y.mean().expect("non-empty");
        let mut f = vec![base; n];
        let hess = vec![1.0; n];
        let mut trees = Vec::with_capacity(b.n_estimators);
        for _ in 0..b.n_estimators {
            let resid: Vec<f64> = y.iter().zip(&f).map(|(y, f)| y - f).collect();
            let (tree, upd) = newton_tree(x, &binned, &resid, &hess, 1.0, b, &grow, rng);
            for (fi, u) in f.iter_mut().zip(upd) {
                *fi += u;
            }
            trees.push(tree);
        }
        (
            Self { base, trees },
            FitDiagnostics {
                converged: true,
                iterations: b.n_estimators,
                notes: Vec::new(),
            },
        )
    }

    pub(crate) fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.axis_iter(Axis(0))
            .map(|r| self.base + tree_sum(&self.trees, r))
            .collect()
    }
}

/// Multinomial boosting: one tree per class per round on softmax residuals.
#[derive(Debug, Clone)]
pub(crate) struct BoostClassifier {
    base: Vec<f64>,
    /// `trees[k]` are the rounds for class `k`.
    trees: Vec<Vec<Tree>>,
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

impl BoostClassifier {
    pub(crate) fn fit(
        x: ArrayView2<'_, f64>,
        y: &[usize],
        k: usize,
        b: &BoostParams,
        rng: &mut SeededRng,
    ) -> (Self, FitDiagnostics) {
        let n = x.nrows();
        let binned = Binned::new(x, Some(b.max_bins));
        let grow = boost_grow(b);
        let mut counts = vec![0.0; k];
        for &c in y {
            counts[c] += 1.0;
        }
        let base: Vec<f64> = counts
            .iter()
            .map(|c| ((c + 1e-3) / (n as f64 + 1e-3 * k as f64)).ln())
            .collect();
        let mut raw: Vec<Vec<f64>> = vec![base.clone(); n];
        let mut trees = vec![Vec::with_capacity(b.n_estimators); k];
        let scale = (k as f64 - 1.0) / k as f64;
        for _ in 0..b.n_estimators {
            let probs: Vec<Vec<f64>> = raw
                .iter()
                .map(|r| {
                    let mut p = r.clone();
                    softmax_in_place(&mut p);
                    p
                })
                .collect();
            for (class, class_trees) in trees.iter_mut().enumerate() {
                let grad: Vec<f64> = (0..n)
                    .map(|i| f64::from(u8::from(y[i] == class)) - probs[i][class])
                    .collect();
                let hess: Vec<f64> = (0..n).map(|i| probs[i][class] * (1.0 - probs[i][class])).collect();
                let (tree, upd) = newton_tree(x, &binned, &grad, &hess, scale, b, &grow, rng);
                for (r, u) in raw.iter_mut().zip(upd) {
                    r[class] += u;
                }
                class_trees.push(tree);
            }
        }
        (
            Self { base, trees },
            FitDiagnostics {
                converged: true,
                iterations: b.n_estimators,
                notes: Vec::new(),
            },
        )
    }

    pub(crate) fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let k = self.base.len();
        let mut out = Array2::zeros((x.nrows(), k));
        for (r, row) in x.axis_iter(Axis(0)).enumerate() {
            let mut v: Vec<f64> = (0..k)
                .map(|c| self.base[c] + tree_sum(&self.trees[c], row))
                .collect();
            softmax_in_place(&mut v);
            out.row_mut(r).assign(&Array1::from(v));
        }
        out
    }
}
