//! Small dense networks with hand-written reverse mode, and the AdamW
//! optimizer used by every training stage.
//!
//! Parameters live in caller-owned flat `f64` slices so models can be
//! checkpointed, perturbed for finite differences, and optimized as one
//! vector.

use rand::Rng;

/// Multi-layer perceptron: `tanh` on hidden layers, linear output.
///
/// Parameter layout, per layer: weight matrix `out x in` row-major, then
/// the `out` biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Per-layer activations recorded by [`Mlp::forward`]; `layers[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub layers: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace has at least the input")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0));
        Self { sizes }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform Glorot initialization with zero biases.
    pub fn init(&self, rng: &mut impl Rng, params: &mut [f64]) {
        assert_eq!(params.len(), self.num_params());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for p in &mut params[off..off + n_in * n_out] {
                *p = rng.gen_range(-limit..limit);
            }
            off += n_in * n_out;
            params[off..off + n_out].fill(0.0);
            off += n_out;
        }
    }

    /// Offset of the output layer's bias vector inside the parameter slice.
    pub fn output_bias_offset(&self) -> usize {
        self.num_params() - self.output_dim()
    }

    /// Offset of the output layer's weight matrix inside the parameter slice.
    pub fn output_weight_offset(&self) -> usize {
        let n = self.sizes.len();
        self.output_bias_offset() - self.sizes[n - 2] * self.sizes[n - 1]
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> MlpTrace {
        debug_assert_eq!(params.len(), self.num_params());
        assert_eq!(input.len(), self.input_dim(), "MLP input size");
        let n_layers = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(input.to_vec());
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let x = layers.last().unwrap();
            let mut y: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(y);
            off += n_in * n_out + n_out;
        }
        MlpTrace { layers }
    }

    pub fn apply(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        self.forward(params, input).layers.pop().unwrap()
    }

    /// Accumulates parameter gradients into `grad_params` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, params: &[f64], trace: &MlpTrace, grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.output_dim());
        assert_eq!(grad_params.len(), self.num_params());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut g = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < n_layers {
                // d tanh = 1 - y^2
                for (gi, y) in g.iter_mut().zip(&trace.layers[l + 1]) {
                    *gi *= 1.0 - y * y;
                }
            }
            let x = &trace.layers[l];
            let o = offsets[l];
            let weights = &params[o..o + n_in * n_out];
            let (gw, gb) = grad_params[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut gx = vec![0.0; n_in];
            for (j, &gj) in g.iter().enumerate() {
                if gj == 0.0 {
                    continue;
                }
                gb[j] += gj;
                let row = &weights[j * n_in..(j + 1) * n_in];
                let grow = &mut gw[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += gj * x[i];
                    gx[i] += gj * row[i];
                }
            }
            g = gx;
        }
        g
    }
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamW {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * self.weight_decay * params[i];
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Scales `grads` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
