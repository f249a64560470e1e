//! Fully connected networks with manual backpropagation and an Adam optimizer.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Softplus,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation and the activation output.
    #[inline]
    fn derivative(self, pre: f32, post: f32) -> f32 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(pre),
            Activation::Tanh => 1.0 - post * post,
            Activation::Sigmoid => post * (1.0 - post),
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y = act(x · W + b)` with `W` stored `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| {
            rng.random_range(-limit..limit) as f32
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn pre_activation(&self, x: ArrayView2<f32>) -> Array2<f32> {
        let mut pre = x.dot(&self.weight);
        pre += &self.bias;
        pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Values retained from a forward pass for backpropagation.
#[derive(Debug)]
pub struct ForwardCache {
    inputs: Vec<Array2<f32>>,
    pre: Vec<Array2<f32>>,
    pub output: Array2<f32>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weight: Vec<Array2<f32>>,
    pub bias: Vec<Array1<f32>>,
}

impl Mlp {
    /// `sizes = [in, h1, …, out]`; hidden layers use `hidden`, the last layer `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::new(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: ArrayView2<f32>) -> Array2<f32> {
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut pre = layer.pre_activation(h.view());
            let act = layer.activation;
            if act != Activation::Identity {
                pre.mapv_inplace(|v| act.apply(v));
            }
            h = pre;
        }
        h
    }

    pub fn forward_cached(&self, x: Array2<f32>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let pre = layer.pre_activation(h.view());
            let act = layer.activation;
            let post = if act == Activation::Identity {
                pre.clone()
            } else {
                pre.mapv(|v| act.apply(v))
            };
            inputs.push(h);
            pres.push(pre);
            h = post;
        }
        ForwardCache {
            inputs,
            pre: pres,
            output: h,
        }
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weight: self.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            bias: self.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    /// Accumulates parameter gradients into `grads` given `d loss / d output`.
    /// Returns `d loss / d input` when requested.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: Array2<f32>,
        grads: &mut MlpGrads,
        want_input_grad: bool,
    ) -> Option<Array2<f32>> {
        let mut grad = grad_output;
        let post_of = |i: usize| -> &Array2<f32> {
            if i + 1 < self.layers.len() {
                &cache.inputs[i + 1]
            } else {
                &cache.output
            }
        };
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = layer.activation;
            if act != Activation::Identity {
                Zip::from(&mut grad)
                    .and(&cache.pre[i])
                    .and(post_of(i))
                    .for_each(|g, &pre, &post| *g *= act.derivative(pre, post));
            }
            ndarray::linalg::general_mat_mul(1.0, &cache.inputs[i].t(), &grad, 1.0, &mut grads.weight[i]);
            grads.bias[i] += &grad.sum_axis(Axis(0));
            if i > 0 || want_input_grad {
                grad = grad.dot(&layer.weight.t());
            }
        }
        want_input_grad.then_some(grad)
    }
}

/// Adam over any number of parameter slices, visited in a fixed order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update; `params` and `grads` must pair up slot by slot on every call.
    pub fn update<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a mut [f32], &'a [f32])>) {
        self.step += 1;
        let b1 = self.beta1 as f32;
        let b2 = self.beta2 as f32;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let lr = (self.learning_rate * c2.sqrt() / c1) as f32;
        let eps = (self.epsilon * c2.sqrt()) as f32;
        for (slot, (param, grad)) in pairs.into_iter().enumerate() {
            if slot == self.first.len() {
                self.first.push(vec![0.0; param.len()]);
                self.second.push(vec![0.0; param.len()]);
            }
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            debug_assert_eq!(m.len(), param.len());
            for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * *m / (v.sqrt() + eps);
            }
        }
    }
}

/// Pairs every parameter tensor of `net` with its gradient, in layer order.
pub fn param_grad_pairs<'a>(
    net: &'a mut Mlp,
    grads: &'a MlpGrads,
) -> impl Iterator<Item = (&'a mut [f32], &'a [f32])> + 'a {
    net.layers
        .iter_mut()
        .zip(grads.weight.iter().zip(&grads.bias))
        .flat_map(|(layer, (gw, gb))| {
            [
                (
                    layer.weight.as_slice_mut().expect("standard layout"),
                    gw.as_slice().expect("standard layout"),
                ),
                (
                    layer.bias.as_slice_mut().expect("standard layout"),
                    gb.as_slice().expect("standard layout"),
                ),
            ]
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(net: &Mlp, x: &Array2<f32>) -> f64 {
        net.forward(x.view()).iter().map(|&v| 0.5 * (v as f64) * (v as f64)).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for act in [Activation::Softplus, Activation::Tanh, Activation::Sigmoid] {
            let net = Mlp::new(&[3, 4, 2], act, Activation::Identity, &mut rng);
            let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0f32));
            let cache = net.forward_cached(x.clone());
            let mut grads = net.zero_grads();
            let gin = net
                .backward(&cache, cache.output.clone(), &mut grads, true)
                .unwrap();
            let h = 1e-2f32;
            for (layer, gw) in grads.weight.iter().enumerate() {
                for idx in [(0, 0), (1, 1), (2, 0)] {
                    if idx.0 >= gw.nrows() || idx.1 >= gw.ncols() {
                        continue;
                    }
                    let mut plus = net.clone();
                    plus.layers[layer].weight[idx] += h;
                    let mut minus = net.clone();
                    minus.layers[layer].weight[idx] -= h;
                    let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h as f64);
                    let an = gw[idx] as f64;
                    assert!((fd - an).abs() < 1e-2 * (1.0 + an.abs()), "{act:?} layer {layer}: fd {fd} vs {an}");
                }
            }
            let mut xp = x.clone();
            xp[[1, 2]] += h;
            let mut xm = x.clone();
            xm[[1, 2]] -= h;
            let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h as f64);
            assert!((fd - gin[[1, 2]] as f64).abs() < 1e-2 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0f32, -2.0];
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let g: Vec<f32> = p.iter().map(|v| 2.0 * v).collect();
            opt.update([(p.as_mut_slice(), g.as_slice())]);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2), "{p:?}");
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(Activation::Softplus.apply(100.0), 100.0);
        assert!(Activation::Softplus.apply(-100.0) >= 0.0);
        assert!((Activation::Softplus.apply(0.0) - 2f32.ln()).abs() < 1e-6);
    }
}
