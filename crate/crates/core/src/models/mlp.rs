//! Fully connected softmax networks and the minibatch trainer behind the
//! MLP classifier.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::spec::{Activation, LearningRateSchedule, MlpParams, Solver};
use super::FitDiagnostics;
use crate::rng::SeededRng;

/// Affine layer `a · W + b` with `W` of shape `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Hidden layers share one activation; the last layer feeds a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

fn activate(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::Logistic => 1.0 / (1.0 + (-v).exp()),
        Activation::Tanh => v.tanh(),
    }
}

/// Derivative expressed through the activated output.
fn activate_grad(a: Activation, out: f64) -> f64 {
    match a {
        Activation::Relu => f64::from(u8::from(out > 0.0)),
        Activation::Logistic => out * (1.0 - out),
        Activation::Tanh => 1.0 - out * out,
    }
}

pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let z = row.sum();
        row /= z;
    }
}

impl Network {
    /// Glorot-uniform weights and zero biases for layer widths `sizes`.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut SeededRng) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output widths");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-limit..limit)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers, activation }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.nrows()];
        s.extend(self.layers.iter().map(|l| l.weights.ncols()));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Layer inputs followed by the final logits.
    fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weights) + &layer.bias;
            if l < last {
                z.mapv_inplace(|v| activate(self.activation, v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(x).pop().expect("non-empty")
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut p = self.logits(x);
        softmax_rows(&mut p);
        p
    }

    /// `Σ_i w_i · (−ln p_i[y_i])` and its gradient with respect to every layer.
    pub fn weighted_loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        y: &[usize],
        row_weights: &[f64],
    ) -> (f64, Vec<Dense>) {
        let acts = self.forward(x);
        let mut delta = acts.last().expect("non-empty").clone();
        let mut loss = 0.0;
        for ((mut row, &label), &w) in delta.axis_iter_mut(Axis(0)).zip(y).zip(row_weights) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
            loss += w * (lse - row[label]);
            row.mapv_inplace(|v| (v - lse).exp());
            row[label] -= 1.0;
            row *= w;
        }
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            grads[l].weights = acts[l].t().dot(&delta);
            grads[l].bias = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                back.zip_mut_with(&acts[l], |d, &a| *d *= activate_grad(self.activation, a));
                delta = back;
            }
        }
        (loss, grads)
    }

    /// Mean cross-entropy over rows.
    pub fn mean_loss(&self, x: ArrayView2<'_, f64>, y: &[usize]) -> f64 {
        let w = vec![1.0 / y.len() as f64; y.len()];
        self.weighted_loss_and_grad(x, y, &w).0
    }
}

/// Train a one-hidden-layer classifier with minibatches, L2 penalty `alpha`
/// and early termination after ten epochs without a `1e-4` improvement.
pub(crate) fn train_classifier(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    k: usize,
    p: &MlpParams,
    rng: &mut SeededRng,
) -> (Network, FitDiagnostics) {
    const TOL: f64 = 1e-4;
    const NO_CHANGE: usize = 10;
    let n = x.nrows();
    let mut net = Network::new(&[x.ncols(), p.hidden, k], p.activation, rng);
    let batch = p.batch_size.unwrap_or(200).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut opt = Optimiser::new(&net, p);
    let mut lr = p.learning_rate_init;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut converged = false;
    let mut epochs = 0;
    let mut notes = Vec::new();
    while epochs < p.max_iter {
        epochs += 1;
        order.shuffle(rng);
        if p.learning_rate == LearningRateSchedule::InvScaling {
            lr = p.learning_rate_init / (epochs as f64).sqrt();
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let b = chunk.len() as f64;
            let w = vec![1.0 / b; chunk.len()];
            let (mut loss, mut grads) = net.weighted_loss_and_grad(xb.view(), &yb, &w);
            for (g, l) in grads.iter_mut().zip(&net.layers) {
                g.weights.scaled_add(p.alpha / b, &l.weights);
                loss += 0.5 * p.alpha / b * l.weights.iter().map(|v| v * v).sum::<f64>();
            }
            epoch_loss += loss * b;
            opt.step(&mut net, &grads, lr);
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() {
            notes.push(format!("non-finite loss at epoch {epochs}"));
            break;
        }
        if epoch_loss > best - TOL {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
        if stale > NO_CHANGE {
            if p.learning_rate == LearningRateSchedule::Adaptive && p.solver == Solver::Sgd && lr > 1e-6 {
                lr /= 5.0;
                stale = 0;
            } else {
                converged = true;
                break;
            }
        }
    }
    (
        net,
        FitDiagnostics {
            converged,
            iterations: epochs,
            notes,
        },
    )
}

enum Optimiser {
    Adam {
        m: Vec<Dense>,
        v: Vec<Dense>,
        t: i32,
    },
    Sgd {
        velocity: Vec<Dense>,
        momentum: f64,
        nesterov: bool,
    },
}

impl Optimiser {
    fn new(net: &Network, p: &MlpParams) -> Self {
        let zeros = || net.layers.iter().map(Dense::zeros_like).collect::<Vec<_>>();
        match p.solver {
            Solver::Adam => Optimiser::Adam {
                m: zeros(),
                v: zeros(),
                t: 0,
            },
            Solver::Sgd => Optimiser::Sgd {
                velocity: zeros(),
                momentum: p.momentum,
                nesterov: p.nesterov,
            },
        }
    }

    fn step(&mut self, net: &mut Network, grads: &[Dense], lr: f64) {
        match self {
            Optimiser::Adam { m, v, t } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let a = lr * (1.0 - B2.powi(*t)).sqrt() / (1.0 - B1.powi(*t));
                for (((layer, g), m), v) in net.layers.iter_mut().zip(grads).zip(m).zip(v) {
                    let update = |param: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                        *m = B1 * *m + (1.0 - B1) * g;
                        *v = B2 * *v + (1.0 - B2) * g * g;
                        *param -= a * *m / (v.sqrt() + EPS);
                    };
                    ndarray::Zip::from(&mut layer.weights)
                        .and(&g.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                    ndarray::Zip::from(&mut layer.bias)
                        .and(&g.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                }
            }
            Optimiser::Sgd {
                velocity,
                momentum,
                nesterov,
            } => {
                let (mu, nest) = (*momentum, *nesterov);
                for ((layer, g), vel) in net.layers.iter_mut().zip(grads).zip(velocity) {
                    let update = |param: &mut f64, g: f64, vel: &mut f64| {
                        *vel = mu * *vel - lr * g;
                        *param += if nest { mu * *vel - lr * g } else { *vel };
                    };
                    ndarray::Zip::from(&mut layer.weights)
                        .and(&g.weights)
                        .and(&mut vel.weights)
                        .for_each(|p, &g, v| update(p, g, v));
                    ndarray::Zip::from(&mut layer.bias)
                        .and(&g.bias)
                        .and(&mut vel.bias)
                        .for_each(|p, &g, v| update(p, g, v));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = seeded(21);
        for activation in [Activation::Relu, Activation::Tanh, Activation::Logistic] {
            let net = Network::new(&[3, 5, 4, 3], activation, &mut rng);
            let x = Array2::from_shape_fn((6, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
            let y: Vec<usize> = (0..6).map(|i| i % 3).collect();
            let w: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let (_, grads) = net.weighted_loss_and_grad(x.view(), &y, &w);
            let h = 1e-6;
            for l in 0..net.layers.len() {
                for idx in 0..net.layers[l].weights.len() {
                    let (r, c) = (idx / net.layers[l].weights.ncols(), idx % net.layers[l].weights.ncols());
                    let mut plus = net.clone();
                    plus.layers[l].weights[[r, c]] += h;
                    let mut minus = net.clone();
                    minus.layers[l].weights[[r, c]] -= h;
                    let fd = (plus.weighted_loss_and_grad(x.view(), &y, &w).0
                        - minus.weighted_loss_and_grad(x.view(), &y, &w).0)
                        / (2.0 * h);
                    let a = grads[l].weights[[r, c]];
                    assert!(
                        (a - fd).abs() <= 1e-6 * a.abs().max(fd.abs()).max(1e-3),
                        "{activation:?} layer {l}: {a} vs {fd}"
                    );
                }
            }
        }
    }
}
