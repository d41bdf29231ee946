//! CART trees grown best-first over binned features.
//!
//! Features are quantised once per fit into ordered bins whose edges are
//! midpoints between observed values. With `max_bins = None` every distinct
//! value gets its own bin, which makes split search exact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;

use super::spec::{Criterion, MaxFeatures};

pub(crate) struct Binned {
    /// `bins[f][row]`.
    bins: Vec<Vec<u32>>,
    /// Upper edges: a value `v` falls in the first bin `b` with `v <= edges[b]`.
    edges: Vec<Vec<f64>>,
}

impl Binned {
    pub(crate) fn new(x: ArrayView2<'_, f64>, max_bins: Option<usize>) -> Self {
        let mut bins = Vec::with_capacity(x.ncols());
        let mut edges = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mut values: Vec<f64> = col.to_vec();
            values.sort_by(f64::total_cmp);
            let mut distinct = values.clone();
            distinct.dedup();
            let e: Vec<f64> = match max_bins {
                Some(b) if distinct.len() > b => {
                    let n = values.len();
                    let mut e: Vec<f64> = (1..b)
                        .filter_map(|q| {
                            let idx = q * n / b;
                            (idx > 0 && values[idx - 1] < values[idx])
                                .then(|| 0.5 * (values[idx - 1] + values[idx]))
                        })
                        .collect();
                    e.dedup();
                    e
                }
                _ => distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
            };
            bins.push(
                col.iter()
                    .map(|&v| e.partition_point(|&t| t < v) as u32)
                    .collect(),
            );
            edges.push(e);
        }
        Self { bins, edges }
    }

    fn n_features(&self) -> usize {
        self.bins.len()
    }

    fn n_bins(&self, f: usize) -> usize {
        self.edges[f].len() + 1
    }
}

pub(crate) enum TreeTarget<'a> {
    Classes {
        y: &'a [usize],
        n_classes: usize,
        criterion: Criterion,
    },
    Values {
        y: &'a [f64],
    },
}

impl TreeTarget<'_> {
    fn width(&self) -> usize {
        match self {
            TreeTarget::Classes { n_classes, .. } => *n_classes,
            // count-weighted sum and sum of squares
            TreeTarget::Values { .. } => 2,
        }
    }

    fn accumulate(&self, row: usize, into: &mut [f64]) {
        match self {
            TreeTarget::Classes { y, .. } => into[y[row]] += 1.0,
            TreeTarget::Values { y } => {
                into[0] += y[row];
                into[1] += y[row] * y[row];
            }
        }
    }

    /// `n · impurity` of a node with accumulated statistics `s` over `n` rows.
    fn total_impurity(&self, s: &[f64], n: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        match self {
            TreeTarget::Classes { criterion, .. } => match criterion {
                Criterion::Gini => n - s.iter().map(|c| c * c).sum::<f64>() / n,
                Criterion::Entropy => -s
                    .iter()
                    .filter(|&&c| c > 0.0)
                    .map(|&c| c * (c / n).ln())
                    .sum::<f64>(),
            },
            TreeTarget::Values { .. } => (s[1] - s[0] * s[0] / n).max(0.0),
        }
    }

    fn leaf_value(&self, s: &[f64], n: f64) -> Vec<f64> {
        match self {
            TreeTarget::Classes { .. } => s.iter().map(|c| c / n).collect(),
            TreeTarget::Values { .. } => vec![s[0] / n],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub max_leaf_nodes: Option<usize>,
    pub random_split: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    bin: u32,
    gain: f64,
}

struct Pending {
    id: usize,
    rows: Vec<usize>,
    depth: usize,
    split: Option<SplitChoice>,
}

struct Ranked(f64, usize);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    // Highest gain first, then lowest node id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl Tree {
    /// Grow a tree on `rows` (repeats allowed, e.g. bootstrap samples).
    pub(crate) fn grow<R: Rng + ?Sized>(
        binned: &Binned,
        target: &TreeTarget<'_>,
        rows: Vec<usize>,
        params: &GrowParams,
        rng: &mut R,
    ) -> Tree {
        let mut slots: Vec<Option<Node>> = vec![None];
        let mut pending: Vec<Option<Pending>> = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut leaves = 1usize;

        let root = Pending {
            id: 0,
            split: find_split(binned, target, &rows, 0, params, rng),
            rows,
            depth: 0,
        };
        let push = |p: Pending,
                    slots: &mut Vec<Option<Node>>,
                    pending: &mut Vec<Option<Pending>>,
                    heap: &mut BinaryHeap<Ranked>| {
            match p.split {
                Some(s) => {
                    heap.push(Ranked(s.gain, pending.len()));
                    pending.push(Some(p));
                }
                None => slots[p.id] = Some(make_leaf(target, &p.rows)),
            }
        };
        push(root, &mut slots, &mut pending, &mut heap);

        while let Some(Ranked(_, idx)) = heap.pop() {
            let p = pending[idx].take().expect("each pending node is popped once");
            if params.max_leaf_nodes.is_some_and(|m| leaves >= m) {
                slots[p.id] = Some(make_leaf(target, &p.rows));
                continue;
            }
            let s = p.split.expect("only splittable nodes are queued");
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = p
                .rows
                .iter()
                .partition(|&&r| binned.bins[s.feature][r] <= s.bin);
            let left_id = slots.len();
            let right_id = left_id + 1;
            slots.push(None);
            slots.push(None);
            slots[p.id] = Some(Node::Split {
                feature: s.feature,
                threshold: binned.edges[s.feature][s.bin as usize],
                left: left_id,
                right: right_id,
            });
            leaves += 1;
            for (id, rows) in [(left_id, left_rows), (right_id, right_rows)] {
                let split = find_split(binned, target, &rows, p.depth + 1, params, rng);
                push(
                    Pending {
                        id,
                        rows,
                        depth: p.depth + 1,
                        split,
                    },
                    &mut slots,
                    &mut pending,
                    &mut heap,
                );
            }
        }
        Tree {
            nodes: slots
                .into_iter()
                .map(|n| n.expect("every slot is filled"))
                .collect(),
        }
    }

    fn leaf_index(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub(crate) fn predict_row(&self, x: ArrayView1<'_, f64>) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Leaf id reached by `x`, for callers that re-fit leaf values.
    pub(crate) fn apply(&self, x: ArrayView1<'_, f64>) -> usize {
        self.leaf_index(x)
    }

    pub(crate) fn set_leaf_value(&mut self, leaf: usize, value: Vec<f64>) {
        if let Node::Leaf { value: v } = &mut self.nodes[leaf] {
            *v = value;
        }
    }

    pub(crate) fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], Node::Leaf { .. }))
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn make_leaf(target: &TreeTarget<'_>, rows: &[usize]) -> Node {
    let mut s = vec![0.0; target.width()];
    for &r in rows {
        target.accumulate(r, &mut s);
    }
    Node::Leaf {
        value: target.leaf_value(&s, rows.len() as f64),
    }
}

fn find_split<R: Rng + ?Sized>(
    binned: &Binned,
    target: &TreeTarget<'_>,
    rows: &[usize],
    depth: usize,
    params: &GrowParams,
    rng: &mut R,
) -> Option<SplitChoice> {
    let n = rows.len();
    if params.max_depth.is_some_and(|d| depth >= d)
        || n < params.min_samples_split
        || n < 2 * params.min_samples_leaf
    {
        return None;
    }
    let w = target.width();
    let mut parent = vec![0.0; w];
    for &r in rows {
        target.accumulate(r, &mut parent);
    }
    let parent_total = target.total_impurity(&parent, n as f64);
    if parent_total <= 1e-12 {
        return None;
    }

    let d = binned.n_features();
    let m = params.max_features.resolve(d);
    let features: Vec<usize> = if m < d {
        let mut f = rand::seq::index::sample(rng, d, m).into_vec();
        f.sort_unstable();
        f
    } else {
        (0..d).collect()
    };

    let min_leaf = params.min_samples_leaf;
    let mut best: Option<SplitChoice> = None;
    let mut left = vec![0.0; w];
    let mut right = vec![0.0; w];
    for f in features {
        let nb = binned.n_bins(f);
        let mut hist = vec![0.0; nb * w];
        let mut counts = vec![0usize; nb];
        for &r in rows {
            let b = binned.bins[f][r] as usize;
            counts[b] += 1;
            target.accumulate(r, &mut hist[b * w..(b + 1) * w]);
        }
        let lo = counts.iter().position(|&c| c > 0).expect("node is non-empty");
        let hi = counts.iter().rposition(|&c| c > 0).expect("node is non-empty");
        if lo == hi {
            continue;
        }
        let candidates: Box<dyn Iterator<Item = usize>> = if params.random_split {
            Box::new(std::iter::once(rng.random_range(lo..hi)))
        } else {
            Box::new(lo..hi)
        };
        left.iter_mut().for_each(|v| *v = 0.0);
        let mut n_left = 0usize;
        let mut upto = lo;
        for b in candidates {
            // Accumulate bins lo..=b into `left`.
            while upto <= b {
                n_left += counts[upto];
                for k in 0..w {
                    left[k] += hist[upto * w + k];
                }
                upto += 1;
            }
            if counts[b] == 0 {
                continue;
            }
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            for k in 0..w {
                right[k] = parent[k] - left[k];
            }
            let gain = parent_total
                - target.total_impurity(&left, n_left as f64)
                - target.total_impurity(&right, n_right as f64);
            if gain > -1e-12 && best.is_none_or(|s| gain > s.gain + 1e-12) {
                best = Some(SplitChoice {
                    feature: f,
                    bin: b as u32,
                    gain,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params() -> GrowParams {
        GrowParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            max_leaf_nodes: None,
            random_split: false,
        }
    }

    #[test]
    fn exact_bins_separate_values() {
        let x = array![[1.0], [3.0], [2.0], [3.0]];
        let b = Binned::new(x.view(), None);
        assert_eq!(b.bins[0], vec![0, 2, 1, 2]);
        assert_eq!(b.edges[0], vec![1.5, 2.5]);
    }

    #[test]
    fn pure_leaves_on_separable_data() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0usize, 0, 1, 1];
        let b = Binned::new(x.view(), None);
        let target = TreeTarget::Classes {
            y: &y,
            n_classes: 2,
            criterion: Criterion::Gini,
        };
        let mut rng = crate::rng::seeded(0);
        let t = Tree::grow(&b, &target, (0..4).collect(), &params(), &mut rng);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict_row(x.row(3)), &[0.0, 1.0]);
    }

    #[test]
    fn leaf_limit_is_respected() {
        let x = ndarray::Array2::from_shape_fn((64, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
        let b = Binned::new(x.view(), None);
        let mut p = params();
        p.max_leaf_nodes = Some(5);
        let mut rng = crate::rng::seeded(0);
        let t = Tree::grow(&b, &TreeTarget::Values { y: &y }, (0..64).collect(), &p, &mut rng);
        assert_eq!(t.leaf_ids().len(), 5);
    }
}
