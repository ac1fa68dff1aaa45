//! Fully connected network over row-major batches with manual backprop.
//!
//! Parameters live in one flat buffer: for each layer, the `out × in`
//! weight matrix row-major, then the bias vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    acts: Vec<Activation>,
    pub(crate) params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    batch: usize,
    /// Layer inputs; `inputs[i]` feeds layer `i`, the last entry is the output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().unwrap()
    }
}

/// `C = A·Bᵀ` style products through matrixmultiply with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the callers size every buffer for the stated extents and
    // strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Zero-initialized network with layer widths `sizes`.
    pub fn zeros(sizes: &[usize], acts: &[Activation]) -> Self {
        assert_eq!(sizes.len(), acts.len() + 1, "one activation per layer");
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self { sizes: sizes.to_vec(), acts: acts.to_vec(), params: vec![0.0; n] }
    }

    /// Uniform `±1/√fan_in` initialization of weights and biases.
    pub fn init(sizes: &[usize], acts: &[Activation], rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros(sizes, acts);
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1] + w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            off += w[0] * w[1] + w[1];
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.acts
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.sizes.len());
        let mut o = 0;
        offs.push(0);
        for w in self.sizes.windows(2) {
            o += w[0] * w[1] + w[1];
            offs.push(o);
        }
        offs
    }

    /// Forward pass over `batch` rows of `x`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Trace {
        assert_eq!(x.len(), batch * self.n_in(), "input batch shape");
        let offs = self.offsets();
        let mut inputs = Vec::with_capacity(self.sizes.len());
        let mut pre = Vec::with_capacity(self.acts.len());
        inputs.push(x.to_vec());
        for (i, act) in self.acts.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[i], self.sizes[i + 1]);
            let w = &self.params[offs[i]..offs[i] + n_in * n_out];
            let b = &self.params[offs[i] + n_in * n_out..offs[i + 1]];
            let mut z = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            // z += X · Wᵀ
            gemm(batch, n_in, n_out, &inputs[i], n_in, 1, w, 1, n_in, 1.0, &mut z);
            let y: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            inputs.push(y);
        }
        Trace { batch, inputs, pre }
    }

    /// Accumulates parameter gradients into `grad` given `d_out = ∂loss/∂output`
    /// and returns `∂loss/∂input`.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        let batch = trace.batch;
        let offs = self.offsets();
        let mut delta = d_out.to_vec();
        for i in (0..self.acts.len()).rev() {
            let (n_in, n_out) = (self.sizes[i], self.sizes[i + 1]);
            let act = self.acts[i];
            for ((d, &z), &y) in delta.iter_mut().zip(&trace.pre[i]).zip(&trace.inputs[i + 1]) {
                *d *= act.derivative(z, y);
            }
            let (gw, gb) = grad[offs[i]..offs[i + 1]].split_at_mut(n_in * n_out);
            // dW += δᵀ · X
            gemm(n_out, batch, n_in, &delta, 1, n_out, &trace.inputs[i], n_in, 1, 1.0, gw);
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            // δ_prev = δ · W
            let w = &self.params[offs[i]..offs[i] + n_in * n_out];
            let mut prev = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, &delta, n_out, 1, w, n_in, 1, 0.0, &mut prev);
            delta = prev;
        }
        delta
    }
}
