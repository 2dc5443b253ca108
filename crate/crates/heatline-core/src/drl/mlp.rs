//! Fixed-topology multilayer perceptron with analytic backpropagation.
//!
//! Two rectified hidden layers, a linear output layer, 64-bit parameters
//! throughout. Training uses plain stochastic gradient descent; gradients
//! are checked against central finite differences in the test suite.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::DrlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        Layer { in_dim, out_dim, weights, biases: vec![0.0; out_dim] }
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Post-activation values cached by `forward_cached`, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    hidden: [Vec<f64>; 2],
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

impl Mlp {
    /// A `input -> hidden1 -> hidden2 -> output` network with rectified
    /// hidden layers, weights uniform in +-1/sqrt(fan_in), zero biases.
    pub fn new(input: usize, hidden1: usize, hidden2: usize, output: usize, rng: &mut ChaCha12Rng) -> Self {
        assert!(input > 0 && hidden1 > 0 && hidden2 > 0 && output > 0);
        Mlp {
            layers: vec![
                Layer::new(input, hidden1, rng),
                Layer::new(hidden1, hidden2, rng),
                Layer::new(hidden2, output, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].out_dim
    }

    pub fn dims(&self) -> [usize; 4] {
        [
            self.layers[0].in_dim,
            self.layers[0].out_dim,
            self.layers[1].out_dim,
            self.layers[2].out_dim,
        ]
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let (out, _) = self.forward_cached(input);
        out
    }

    /// Forward pass keeping the post-activation values needed by `backward`.
    pub fn forward_cached(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        assert_eq!(input.len(), self.input_dim(), "input dimension mismatch");
        let mut h1 = Vec::new();
        self.layers[0].forward_into(input, &mut h1);
        relu_inplace(&mut h1);
        let mut h2 = Vec::new();
        self.layers[1].forward_into(&h1, &mut h2);
        relu_inplace(&mut h2);
        let mut out = Vec::new();
        self.layers[2].forward_into(&h2, &mut out);
        let cache = ForwardCache { input: input.to_vec(), hidden: [h1, h2] };
        (out, cache)
    }

    /// Analytic gradients of a scalar loss with respect to every parameter,
    /// given `dL/dy` for the cached forward pass. Accumulates into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut MlpGradients) {
        assert_eq!(upstream.len(), self.output_dim(), "upstream dimension mismatch");
        let h1 = &cache.hidden[0];
        let h2 = &cache.hidden[1];

        // Output layer.
        let l2 = &self.layers[2];
        let mut dh2 = vec![0.0; l2.in_dim];
        for o in 0..l2.out_dim {
            let g = upstream[o];
            grads.biases[2][o] += g;
            let row = o * l2.in_dim;
            for i in 0..l2.in_dim {
                grads.weights[2][row + i] += g * h2[i];
                dh2[i] += g * l2.weights[row + i];
            }
        }
        // Rectifier gate: pre-activation sign matches post-activation > 0.
        for (d, h) in dh2.iter_mut().zip(h2) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }

        let l1 = &self.layers[1];
        let mut dh1 = vec![0.0; l1.in_dim];
        for o in 0..l1.out_dim {
            let g = dh2[o];
            if g == 0.0 {
                continue;
            }
            grads.biases[1][o] += g;
            let row = o * l1.in_dim;
            for i in 0..l1.in_dim {
                grads.weights[1][row + i] += g * h1[i];
                dh1[i] += g * l1.weights[row + i];
            }
        }
        for (d, h) in dh1.iter_mut().zip(h1) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }

        let l0 = &self.layers[0];
        for o in 0..l0.out_dim {
            let g = dh1[o];
            if g == 0.0 {
                continue;
            }
            grads.biases[0][o] += g;
            let row = o * l0.in_dim;
            for i in 0..l0.in_dim {
                grads.weights[0][row + i] += g * cache.input[i];
            }
        }
    }

    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> MlpGradients {
        let mut grads = MlpGradients::zeros_like(self);
        self.backward_into(cache, upstream, &mut grads);
        grads
    }

    /// Plain gradient descent: `theta -= lr * grad`.
    pub fn sgd_step(&mut self, grads: &MlpGradients, learning_rate: f64) {
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= learning_rate * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b -= learning_rate * g;
            }
        }
    }

    /// One optimizer step through an [`AdamState`] bound to this network.
    pub fn adam_step(&mut self, adam: &mut AdamState, grads: &MlpGradients, learning_rate: f64) {
        adam.step(self, grads, learning_rate);
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flatten parameters layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), DrlError> {
        if params.len() != self.param_count() {
            return Err(DrlError::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut cursor = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[cursor..cursor + nw]);
            cursor += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[cursor..cursor + nb]);
            cursor += nb;
        }
        Ok(())
    }

    pub fn from_flat(dims: [usize; 4], params: &[f64]) -> Result<Self, DrlError> {
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        let mut net = Mlp::new(dims[0], dims[1], dims[2], dims[3], &mut rng);
        net.set_params_flat(params)?;
        Ok(net)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|p| p.is_finite()))
    }

    /// Zero every parameter (tests use this for bias pass-through checks).
    pub fn zero_params(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn set_bias(&mut self, layer: usize, values: &[f64]) {
        self.layers[layer].biases.copy_from_slice(values);
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Adam optimizer state: per-parameter first/second moment estimates.
/// Descends `theta -= lr * m_hat / (sqrt(v_hat) + eps)` with the standard
/// bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            v_biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn step(&mut self, net: &mut Mlp, grads: &MlpGradients, learning_rate: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (li, layer) in net.layers.iter_mut().enumerate() {
            update_slice(
                &mut layer.weights,
                &grads.weights[li],
                &mut self.m_weights[li],
                &mut self.v_weights[li],
                (self.beta1, self.beta2, self.epsilon, learning_rate, bc1, bc2),
            );
            update_slice(
                &mut layer.biases,
                &grads.biases[li],
                &mut self.m_biases[li],
                &mut self.v_biases[li],
                (self.beta1, self.beta2, self.epsilon, learning_rate, bc1, bc2),
            );
        }
    }
}

fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    (beta1, beta2, epsilon, lr, bc1, bc2): (f64, f64, f64, f64, f64, f64),
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    /// Independent straight-line reimplementation used as the forward oracle.
    fn reference_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let params = net.params_flat();
        let [n_in, n_h1, n_h2, n_out] = net.dims();
        let mut cursor = 0;
        let mut take = |n: usize| {
            let s = params[cursor..cursor + n].to_vec();
            cursor += n;
            s
        };
        let w1 = take(n_in * n_h1);
        let b1 = take(n_h1);
        let w2 = take(n_h1 * n_h2);
        let b2 = take(n_h2);
        let w3 = take(n_h2 * n_out);
        let b3 = take(n_out);

        let dense = |w: &[f64], b: &[f64], x: &[f64], n_in: usize, n_out: usize, relu: bool| {
            (0..n_out)
                .map(|o| {
                    let mut acc = b[o];
                    for i in 0..n_in {
                        acc += w[o * n_in + i] * x[i];
                    }
                    if relu && acc < 0.0 {
                        0.0
                    } else {
                        acc
                    }
                })
                .collect::<Vec<f64>>()
        };
        let h1 = dense(&w1, &b1, input, n_in, n_h1, true);
        let h2 = dense(&w2, &b2, &h1, n_h1, n_h2, true);
        dense(&w3, &b3, &h2, n_h2, n_out, false)
    }

    #[test]
    fn zero_weights_pass_output_bias_through() {
        let mut net = Mlp::new(4, 8, 8, 3, &mut rng(1));
        net.zero_params();
        net.set_bias(2, &[1.0, 2.0, 3.0]);
        assert_eq!(net.forward(&[0.5, -0.5, 2.0, 0.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn negative_hidden_units_contribute_nothing() {
        let mut net = Mlp::new(1, 1, 1, 1, &mut rng(2));
        net.zero_params();
        // h1 = relu(-5 * x), so a positive input shuts the whole path down.
        net.layers[0].weights[0] = -5.0;
        net.layers[1].weights[0] = 1.0;
        net.layers[2].weights[0] = 1.0;
        assert_eq!(net.forward(&[1.0]), vec![0.0]);
        assert_eq!(net.forward(&[-1.0]), vec![5.0]);
    }

    #[test]
    fn forward_matches_reference_reimplementation() {
        let mut r = rng(3);
        for _ in 0..10 {
            let net = Mlp::new(7, 11, 9, 4, &mut r);
            let input: Vec<f64> = (0..7).map(|_| r.random_range(-3.0..3.0)).collect();
            let ours = net.forward(&input);
            let reference = reference_forward(&net, &input);
            for (a, b) in ours.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    /// Central finite differences over every parameter of a scalar loss.
    fn finite_difference_grads(net: &Mlp, input: &[f64], upstream: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        let loss = |n: &Mlp| -> f64 {
            n.forward(input).iter().zip(upstream).map(|(y, u)| y * u).sum()
        };
        let base = net.params_flat();
        let mut grads = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = net.clone();
            let mut p = base.clone();
            p[i] += h;
            plus.set_params_flat(&p).unwrap();
            let mut minus = net.clone();
            p[i] -= 2.0 * h;
            minus.set_params_flat(&p).unwrap();
            grads.push((loss(&plus) - loss(&minus)) / (2.0 * h));
        }
        grads
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut r = rng(4);
        let net = Mlp::new(5, 6, 6, 3, &mut r);
        let input: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();

        let (_, cache) = net.forward_cached(&input);
        let analytic = net.backward(&cache, &upstream);
        let mut flat = Vec::new();
        for (w, b) in analytic.weights.iter().zip(&analytic.biases) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        let numeric = finite_difference_grads(&net, &input, &upstream);
        for (a, n) in flat.iter().zip(&numeric) {
            let denom = n.abs().max(1e-8);
            assert!(
                (a - n).abs() / denom < 1e-4,
                "analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut r = rng(5);
        let net = Mlp::new(3, 4, 4, 2, &mut r);
        let (_, cache) = net.forward_cached(&[1.0, -2.0, 0.5]);
        let grads = net.backward(&cache, &[0.0, 0.0]);
        assert!(grads.weights.iter().flatten().all(|g| *g == 0.0));
        assert!(grads.biases.iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn duplicated_sample_doubles_the_gradient() {
        let mut r = rng(6);
        let net = Mlp::new(3, 4, 4, 2, &mut r);
        let input = [0.3, -0.7, 1.1];
        let upstream = [0.5, -0.25];
        let (_, cache) = net.forward_cached(&input);

        let mut once = MlpGradients::zeros_like(&net);
        net.backward_into(&cache, &upstream, &mut once);
        let mut twice = MlpGradients::zeros_like(&net);
        net.backward_into(&cache, &upstream, &mut twice);
        net.backward_into(&cache, &upstream, &mut twice);

        for (a, b) in once.weights.iter().flatten().zip(twice.weights.iter().flatten()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_round_trip_preserves_network() {
        let mut r = rng(7);
        let net = Mlp::new(4, 5, 6, 2, &mut r);
        let flat = net.params_flat();
        let back = Mlp::from_flat(net.dims(), &flat).unwrap();
        assert_eq!(net, back);
    }
}
