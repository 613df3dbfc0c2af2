use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Fully connected layer; `weights` is (fan_in, fan_out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Self {
        Dense { weights, bias }
    }

    fn zeros_like(&self) -> Dense {
        Dense {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// ReLU hidden layers with a tanh output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Gradients with the same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Mlp> {
        let net = Mlp { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("network has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].weights.ncols() != w[1].weights.nrows() {
                return Err(Error::InvalidConfig("layer shapes do not chain".into()));
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::InvalidConfig("bias length mismatch".into()));
            }
        }
        if self.layers.last().map(|l| l.weights.ncols()) != Some(1) {
            return Err(Error::InvalidConfig("output layer must have one unit".into()));
        }
        Ok(())
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn zeros(sizes: &[usize]) -> Result<Mlp> {
        Self::check_sizes(sizes)?;
        Mlp::from_layers(
            sizes
                .windows(2)
                .map(|w| Dense::new(Array2::zeros((w[0], w[1])), Array1::zeros(w[1])))
                .collect(),
        )
    }

    /// He-uniform hidden layers, Glorot-uniform output, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Mlp> {
        Self::check_sizes(sizes)?;
        let mut r = rng::seeded(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let limit = if i == last {
                    (6.0 / (w[0] + w[1]) as f64).sqrt()
                } else {
                    (6.0 / w[0] as f64).sqrt()
                };
                let weights = Array2::from_shape_fn((w[0], w[1]), |_| r.random_range(-limit..limit));
                Dense::new(weights, Array1::zeros(w[1]))
            })
            .collect();
        Mlp::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weights.ncols()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if idx < nw {
                let cols = l.weights.ncols();
                return &mut l.weights[[idx / cols, idx % cols]];
            }
            idx -= nw;
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `idx` in the order of [`Gradients::flatten`].
    pub fn param(&self, idx: usize) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .nth(idx)
            .copied()
            .expect("parameter index out of range")
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        *self.param_mut(idx) = value;
    }

    /// Layer activations; the last entry is the tanh output column.
    fn activations(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weights) + &l.bias;
            if i == last {
                z.mapv_inplace(f64::tanh);
            } else {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Scores for each row of `x`.
    pub fn forward(&self, x: &Array2<f64>) -> Array1<f64> {
        let out = self.activations(x).pop().expect("at least one layer");
        out.column(0).to_owned()
    }

    /// Mean squared regression error on (x, y) plus mean squared score gap
    /// between generated and public rows.
    pub fn loss(&self, x: &Array2<f64>, y: &Array1<f64>, gen: Option<&Array2<f64>>, public: Option<&Array2<f64>>) -> f64 {
        let s = self.forward(x);
        let reg = (y - &s).mapv(|e| e * e).mean().unwrap_or(0.0);
        reg + match (gen, public) {
            (Some(g), Some(p)) if g.nrows() > 0 => {
                let gap = self.forward(g) - self.forward(p);
                gap.mapv(|e| e * e).mean().unwrap_or(0.0)
            }
            _ => 0.0,
        }
    }

    /// Loss and analytic gradient by backpropagation through one stacked
    /// forward pass over `[x; gen; public]`.
    pub fn loss_and_grad(
        &self,
        x: &Array2<f64>,
        y: ArrayView1<f64>,
        gen: Option<&Array2<f64>>,
        public: Option<&Array2<f64>>,
    ) -> (f64, Gradients) {
        let b = x.nrows();
        let pairs = match (gen, public) {
            (Some(g), Some(p)) if g.nrows() > 0 => Some((g, p)),
            _ => None,
        };
        let n_pairs = pairs.map(|(g, _)| g.nrows()).unwrap_or(0);
        let stacked = match pairs {
            Some((g, p)) => concatenate(Axis(0), &[x.view(), g.view(), p.view()]).expect("same width"),
            None => x.clone(),
        };
        let acts = self.activations(&stacked);
        let s = acts.last().expect("output").column(0).to_owned();

        let mut ds = Array1::<f64>::zeros(s.len());
        let mut total = 0.0;
        for i in 0..b {
            let e = y[i] - s[i];
            total += e * e / b as f64;
            ds[i] = -2.0 * e / b as f64;
        }
        for k in 0..n_pairs {
            let gap = s[b + k] - s[b + n_pairs + k];
            total += gap * gap / n_pairs as f64;
            ds[b + k] = 2.0 * gap / n_pairs as f64;
            ds[b + n_pairs + k] = -2.0 * gap / n_pairs as f64;
        }

        // through tanh
        let mut delta: Array2<f64> = (&ds * &s.mapv(|v| 1.0 - v * v)).insert_axis(Axis(1));
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        for li in (0..self.layers.len()).rev() {
            let input = &acts[li];
            grads[li].weights = input.t().dot(&delta);
            grads[li].bias = delta.sum_axis(Axis(0));
            if li > 0 {
                let mut back = delta.dot(&self.layers[li].weights.t());
                // ReLU mask of the previous layer's output
                back.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (total, Gradients { layers: grads })
    }

    /// Applies `f(param, grad)` elementwise across parameters and a
    /// same-shaped set of tensors.
    pub(crate) fn zip_apply(&mut self, grads: &Gradients, mut f: impl FnMut(usize, &mut f64, f64)) {
        let mut idx = 0;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, &gv) in l.weights.iter_mut().zip(g.weights.iter()) {
                f(idx, p, gv);
                idx += 1;
            }
            for (p, &gv) in l.bias.iter_mut().zip(g.bias.iter()) {
                f(idx, p, gv);
                idx += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((rows, cols), |_| n.sample(&mut r))
    }

    #[test]
    fn scores_are_bounded() {
        let mut net = Mlp::init(&[5, 7, 1], 1).unwrap();
        for l in net.layers_mut() {
            l.weights.mapv_inplace(|w| w * 50.0);
        }
        let x = random_matrix(20, 5, 2) * 100.0;
        assert!(net.forward(&x).iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn loss_matches_loss_and_grad() {
        let net = Mlp::init(&[6, 5, 4, 1], 3).unwrap();
        let x = random_matrix(9, 6, 4);
        let y = Array1::from_iter((0..9).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }));
        let g = random_matrix(3, 6, 5);
        let p = random_matrix(3, 6, 6);
        let a = net.loss(&x, &y, Some(&g), Some(&p));
        let (b, _) = net.loss_and_grad(&x, y.view(), Some(&g), Some(&p));
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5u64 {
            let net = Mlp::init(&[4, 6, 3, 1], seed).unwrap();
            let x = random_matrix(7, 4, seed + 100);
            let y = Array1::from_iter((0..7).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }));
            let g = random_matrix(2, 4, seed + 200);
            let p = random_matrix(2, 4, seed + 300);
            let (_, grads) = net.loss_and_grad(&x, y.view(), Some(&g), Some(&p));
            let analytic = grads.flatten();
            let h = 1e-6;
            let numeric: Vec<f64> = (0..net.param_count())
                .map(|i| {
                    let mut a = net.clone();
                    a.set_param(i, net.param(i) + h);
                    let mut b = net.clone();
                    b.set_param(i, net.param(i) - h);
                    (a.loss(&x, &y, Some(&g), Some(&p)) - b.loss(&x, &y, Some(&g), Some(&p))) / (2.0 * h)
                })
                .collect();
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
            assert!(diff / norm < 1e-4, "seed {seed}: {}", diff / norm);
        }
    }

    #[test]
    fn param_indexing_matches_flatten_order() {
        let mut net = Mlp::init(&[3, 2, 1], 9).unwrap();
        let n = net.param_count();
        assert_eq!(n, 3 * 2 + 2 + 2 + 1);
        let flat: Vec<f64> = Gradients {
            layers: net.layers().to_vec(),
        }
        .flatten();
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(net.param(i), *v);
        }
        net.set_param(n - 1, 42.0);
        assert_eq!(net.layers()[1].bias[0], 42.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 2]).is_err());
        assert!(Mlp::from_layers(vec![
            Dense::new(Array2::zeros((3, 2)), Array1::zeros(2)),
            Dense::new(Array2::zeros((4, 1)), Array1::zeros(1)),
        ])
        .is_err());
    }
}
