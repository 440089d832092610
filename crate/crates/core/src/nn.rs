//! Small dense feed-forward networks with analytic gradients.
//!
//! Everything here is `f64` and allocation-light. A [`Network`] is a chain of
//! affine layers, each followed by either a ReLU or the identity. Forward
//! passes return a [`ForwardCache`] that [`Network::backward`] consumes; the
//! cache remembers the network revision it was produced from so a cache that
//! outlived a parameter update is refused.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default lower bound on vector norms accepted by [`cosine_similarity`].
pub const NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("layer {layer} takes {input} inputs but the previous layer emits {previous}")]
    Chain {
        layer: usize,
        input: usize,
        previous: usize,
    },
    #[error("layer {layer} holds a non-finite parameter")]
    NonFiniteParameter { layer: usize },
    #[error("network has no layers")]
    Empty,
    #[error("activation cache is stale or belongs to another network")]
    StaleCache,
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("gradient set is not shape-congruent with the network")]
    GradientShape,
    #[error("vector norm {norm:e} is at or below the floor {floor:e}")]
    DegenerateNorm { norm: f64, floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative at `z`. ReLU uses 0 at the kink.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One affine layer. `weights` is row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(
        n_in: usize,
        n_out: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        if weights.len() != n_in * n_out {
            return Err(NnError::Shape {
                expected: n_in * n_out,
                got: weights.len(),
            });
        }
        if biases.len() != n_out {
            return Err(NnError::Shape {
                expected: n_out,
                got: biases.len(),
            });
        }
        Ok(Layer {
            n_in,
            n_out,
            weights,
            biases,
            activation,
        })
    }

    /// Uniform init in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        n_in: usize,
        n_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Layer {
            n_in,
            n_out,
            weights,
            biases: vec![0.0; n_out],
            activation,
        }
    }

    #[inline]
    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.n_in..(o + 1) * self.n_in]
    }
}

/// Ordered chain of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    /// Bumped on every parameter mutation; caches carry the value they saw.
    revision: u64,
}

/// Per-layer record of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    /// `inputs[k]` is the input fed to layer k; `inputs[len]` is the final output.
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Post-activation output of layer `k`.
    pub fn layer_output(&self, k: usize) -> &[f64] {
        &self.inputs[k + 1]
    }

    /// Pre-activation values of layer `k`.
    pub fn pre_activation(&self, k: usize) -> &[f64] {
        &self.pre_activations[k]
    }

    pub fn output(&self) -> &[f64] {
        self.inputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients shape-congruent with one [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn is_congruent(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().for_each(|w| *w *= factor);
            g.biases.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (g, o) in self.layers.iter_mut().zip(&other.layers) {
            g.weights
                .iter_mut()
                .zip(&o.weights)
                .for_each(|(a, b)| *a += b);
            g.biases.iter_mut().zip(&o.biases).for_each(|(a, b)| *a += b);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }

    /// Index of the first layer containing a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|g| g.weights.iter().chain(&g.biases).any(|v| !v.is_finite()))
    }

    /// All values, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.biases.iter()).copied())
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Empty);
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].n_in != pair[0].n_out {
                return Err(NnError::Chain {
                    layer: k + 1,
                    input: pair[1].n_in,
                    previous: pair[0].n_out,
                });
            }
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteParameter { layer: k });
            }
        }
        Ok(Network {
            layers,
            revision: 0,
        })
    }

    /// Builds a randomly initialised network through `sizes` (input first).
    /// Hidden layers use ReLU, the last layer uses `output_activation`.
    pub fn random<R: Rng + ?Sized>(
        sizes: &[usize],
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::Empty);
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n {
                    output_activation
                } else {
                    Activation::Relu
                };
                Layer::glorot(sizes[k], sizes[k + 1], act, rng)
            })
            .collect();
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat view of the parameters in [`Gradients::values`] order.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    /// Overwrites parameter `index` (flat order). Test and gradient-check helper.
    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let mut i = index;
        for l in &mut self.layers {
            if i < l.weights.len() {
                l.weights[i] = value;
                self.revision += 1;
                return;
            }
            i -= l.weights.len();
            if i < l.biases.len() {
                l.biases[i] = value;
                self.revision += 1;
                return;
            }
            i -= l.biases.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        if input.len() != self.input_len() {
            return Err(NnError::Shape {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        inputs.push(input.to_vec());
        for layer in &self.layers {
            let x = inputs.last().expect("non-empty");
            let z: Vec<f64> = (0..layer.n_out)
                .map(|o| dot(layer.row(o), x) + layer.biases[o])
                .collect();
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre_activations.push(z);
            inputs.push(a);
        }
        let cache = ForwardCache {
            revision: self.revision,
            inputs,
            pre_activations,
        };
        Ok((cache.output().to_vec(), cache))
    }

    /// Output only, no cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.input_len() {
            return Err(NnError::Shape {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = (0..layer.n_out)
                .map(|o| layer.activation.apply(dot(layer.row(o), &x) + layer.biases[o]))
                .collect();
        }
        Ok(x)
    }

    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
    ) -> Result<(Vec<f64>, Gradients), NnError> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(cache, output_grad, &[], &mut grads)?;
        Ok((input_grad, grads))
    }

    /// Backpropagates `output_grad` plus any extra gradients injected at
    /// intermediate layer outputs (`(layer index, d loss / d post-activation)`),
    /// accumulating parameter gradients into `grads`. Returns the gradient
    /// with respect to the network input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        injections: &[(usize, &[f64])],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>, NnError> {
        if cache.revision != self.revision
            || cache.pre_activations.len() != self.layers.len()
            || cache
                .pre_activations
                .iter()
                .zip(&self.layers)
                .any(|(z, l)| z.len() != l.n_out)
            || cache.inputs[0].len() != self.input_len()
        {
            return Err(NnError::StaleCache);
        }
        if output_grad.len() != self.output_len() {
            return Err(NnError::Shape {
                expected: self.output_len(),
                got: output_grad.len(),
            });
        }
        if !grads.is_congruent(self) {
            return Err(NnError::GradientShape);
        }
        for &(k, g) in injections {
            if k >= self.layers.len() || g.len() != self.layers[k].n_out {
                return Err(NnError::Shape {
                    expected: self.layers.get(k).map_or(0, |l| l.n_out),
                    got: g.len(),
                });
            }
        }

        let mut upstream = output_grad.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            for &(_, g) in injections.iter().filter(|(idx, _)| *idx == k) {
                upstream.iter_mut().zip(g).for_each(|(u, v)| *u += v);
            }
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&cache.pre_activations[k])
                .map(|(&u, &z)| u * layer.activation.derivative(z))
                .collect();
            let x = &cache.inputs[k];
            let lg = &mut grads.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                lg.biases[o] += d;
                let row = &mut lg.weights[o * layer.n_in..(o + 1) * layer.n_in];
                row.iter_mut().zip(x).for_each(|(w, &xi)| *w += d * xi);
            }
            let mut next = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                next.iter_mut()
                    .zip(layer.row(o))
                    .for_each(|(n, &w)| *n += d * w);
            }
            upstream = next;
        }
        Ok(upstream)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step: u64,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        OptimizerState {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam step.
///
/// Entries whose gradient is exactly zero keep their value; their moments
/// still decay. Non-finite gradients are refused before anything changes.
pub fn adam_update(
    net: &mut Network,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<(), NnError> {
    if !grads.is_congruent(net)
        || !state.first_moment.is_congruent(net)
        || !state.second_moment.is_congruent(net)
    {
        return Err(NnError::GradientShape);
    }
    if let Some(layer) = grads.first_non_finite() {
        return Err(NnError::NonFiniteGradient { layer });
    }
    state.step += 1;
    let AdamConfig {
        step_size,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            if gi != 0.0 {
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= step_size * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    };

    for (k, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[k];
        let m = &mut state.first_moment.layers[k];
        let v = &mut state.second_moment.layers[k];
        update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
        update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases);
    }
    net.revision += 1;
    Ok(())
}

/// Cosine similarity with exact partials `(d/du, d/dv)`.
///
/// Fails with [`NnError::DegenerateNorm`] when either norm is at or below
/// `norm_floor`. The returned value is clamped to [-1, 1]; the gradients are
/// those of the unclamped expression.
pub fn cosine_similarity(
    u: &[f64],
    v: &[f64],
    norm_floor: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), NnError> {
    if u.len() != v.len() {
        return Err(NnError::Shape {
            expected: u.len(),
            got: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    for n in [nu, nv] {
        if n <= norm_floor || !n.is_finite() {
            return Err(NnError::DegenerateNorm {
                norm: n,
                floor: norm_floor,
            });
        }
    }
    let cos = dot(u, v) / (nu * nv);
    let inv = 1.0 / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| vi * inv - cos * ui / (nu * nu))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| ui * inv - cos * vi / (nv * nv))
        .collect();
    Ok((cos.clamp(-1.0, 1.0), du, dv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize, act: Activation) -> Network {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Network::new(vec![Layer::new(n, n, w, vec![0.0; n], act).unwrap()]).unwrap()
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let net = identity(2, Activation::Linear);
        let (out, _) = net.forward(&[0.5, -0.25]).unwrap();
        assert_eq!(out, vec![0.5, -0.25]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let net = identity(2, Activation::Relu);
        let (out, _) = net.forward(&[-1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = identity(2, Activation::Linear);
        assert_eq!(
            net.forward(&[1.0]).unwrap_err(),
            NnError::Shape {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn new_rejects_broken_chain() {
        let a = Layer::new(2, 3, vec![0.0; 6], vec![0.0; 3], Activation::Relu).unwrap();
        let b = Layer::new(2, 1, vec![0.0; 2], vec![0.0; 1], Activation::Linear).unwrap();
        assert!(matches!(
            Network::new(vec![a, b]),
            Err(NnError::Chain { layer: 1, .. })
        ));
    }

    #[test]
    fn new_rejects_non_finite_parameters() {
        let a = Layer::new(1, 1, vec![f64::NAN], vec![0.0], Activation::Relu).unwrap();
        assert!(matches!(
            Network::new(vec![a]),
            Err(NnError::NonFiniteParameter { layer: 0 })
        ));
    }

    #[test]
    fn linear_weight_gradient_row_equals_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::random(&[3, 2], Activation::Linear, &mut rng).unwrap();
        let x = [0.3, -1.2, 2.0];
        let (_, cache) = net.forward(&x).unwrap();
        let (_, grads) = net.backward(&cache, &[1.0, 0.0]).unwrap();
        assert_eq!(&grads.layers[0].weights[0..3], &x);
        assert!(grads.layers[0].weights[3..6].iter().all(|&g| g == 0.0));
        assert_eq!(grads.layers[0].biases, vec![1.0, 0.0]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let layer = Layer::new(1, 1, vec![1.0], vec![-5.0], Activation::Relu).unwrap();
        let net = Network::new(vec![layer]).unwrap();
        let (_, cache) = net.forward(&[1.0]).unwrap();
        let (dx, grads) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(dx, vec![0.0]);
        assert!(grads.is_zero());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::random(&[2, 2], Activation::Linear, &mut rng).unwrap();
        let (_, cache) = net.forward(&[1.0, 1.0]).unwrap();
        let (_, grads) = net.backward(&cache, &[1.0, 1.0]).unwrap();
        let mut opt = OptimizerState::new(&net, AdamConfig::default());
        adam_update(&mut net, &grads, &mut opt).unwrap();
        assert_eq!(
            net.backward(&cache, &[1.0, 1.0]).unwrap_err(),
            NnError::StaleCache
        );

        let other = Network::random(&[3, 2], Activation::Linear, &mut rng).unwrap();
        let (_, foreign) = other.forward(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            net.backward(&foreign, &[1.0, 1.0]).unwrap_err(),
            NnError::StaleCache
        );
    }

    #[test]
    fn zero_gradient_only_decays_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Network::random(&[2, 3, 1], Activation::Linear, &mut rng).unwrap();
        let mut opt = OptimizerState::new(&net, AdamConfig::default());
        let (_, cache) = net.forward(&[0.4, 0.9]).unwrap();
        let (_, g) = net.backward(&cache, &[1.0]).unwrap();
        adam_update(&mut net, &g, &mut opt).unwrap();

        let before = net.parameters();
        let m_before: Vec<f64> = opt.first_moment.values().collect();
        let zero = Gradients::zeros_like(&net);
        adam_update(&mut net, &zero, &mut opt).unwrap();
        assert_eq!(net.parameters(), before);
        assert_eq!(opt.step, 2);
        for (after, prior) in opt.first_moment.values().zip(m_before) {
            assert_eq!(after, 0.9 * prior);
        }
    }

    #[test]
    fn first_step_moves_by_step_size() {
        let layer = Layer::new(1, 1, vec![0.0], vec![0.0], Activation::Linear).unwrap();
        let mut net = Network::new(vec![layer]).unwrap();
        let mut opt = OptimizerState::new(&net, AdamConfig::default());
        let grads = Gradients {
            layers: vec![LayerGradient {
                weights: vec![0.37],
                biases: vec![-2.5],
            }],
        };
        adam_update(&mut net, &grads, &mut opt).unwrap();
        // m_hat = g, v_hat = g², so the step is lr·g/(|g|+eps).
        let w = net.layers()[0].weights[0];
        let b = net.layers()[0].biases[0];
        assert!((w + 1e-3 * 0.37 / (0.37 + 1e-8)).abs() < 1e-15);
        assert!((b - 1e-3 * 2.5 / (2.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let layer = Layer::new(1, 1, vec![1.0], vec![0.0], Activation::Linear).unwrap();
        let mut net = Network::new(vec![layer]).unwrap();
        let mut opt = OptimizerState::new(&net, AdamConfig::default());
        let grads = Gradients {
            layers: vec![LayerGradient {
                weights: vec![f64::INFINITY],
                biases: vec![0.0],
            }],
        };
        let before = net.clone();
        assert_eq!(
            adam_update(&mut net, &grads, &mut opt).unwrap_err(),
            NnError::NonFiniteGradient { layer: 0 }
        );
        assert_eq!(net, before);
        assert_eq!(opt.step, 0);
    }

    /// Scalar Adam written out independently of `adam_update`.
    fn scalar_adam_quadratic(steps: usize, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        let (mut w, mut m, mut v) = (0.0_f64, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * (w - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn adam_minimises_quadratic_like_scalar_reference() {
        let layer = Layer::new(1, 1, vec![0.0], vec![0.0], Activation::Linear).unwrap();
        let mut net = Network::new(vec![layer]).unwrap();
        let config = AdamConfig {
            step_size: 0.1,
            ..AdamConfig::default()
        };
        let mut opt = OptimizerState::new(&net, config);
        for _ in 0..100 {
            let w = net.layers()[0].weights[0];
            let grads = Gradients {
                layers: vec![LayerGradient {
                    weights: vec![2.0 * (w - 3.0)],
                    biases: vec![0.0],
                }],
            };
            adam_update(&mut net, &grads, &mut opt).unwrap();
        }
        let w = net.layers()[0].weights[0];
        let reference = scalar_adam_quadratic(100, 0.1);
        assert!((w - reference).abs() < 1e-12);
        assert!((w - 3.0).abs() < 0.1, "w = {w}");
    }

    #[test]
    fn cosine_reference_cases() {
        let (c, _, _) = cosine_similarity(&[1.0, 0.0], &[0.0, 1.0], NORM_FLOOR).unwrap();
        assert_eq!(c, 0.0);
        let (c, _, _) = cosine_similarity(&[1.0, 0.0], &[-1.0, 0.0], NORM_FLOOR).unwrap();
        assert_eq!(c, -1.0);
        let (c, du, dv) = cosine_similarity(&[2.0, 1.0], &[2.0, 1.0], NORM_FLOOR).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        // d/du cos(u, u) with the second argument held fixed is zero at u = v.
        assert!(du.iter().chain(&dv).all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn cosine_degenerate_norm() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0], NORM_FLOOR),
            Err(NnError::DegenerateNorm { .. })
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0], NORM_FLOOR),
            Err(NnError::Shape { .. })
        ));
    }
}
