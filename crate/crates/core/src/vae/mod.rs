//! Per-rank variational autoencoders over SVD precoders.
//!
//! A rank-`r` precoder `V` (`N_tx × r`) is flattened column by column with
//! interleaved real and imaginary parts, giving `2·N_tx·r` reals. Inputs are
//! divided by a per-dataset max-abs scale so they fit the decoder's `tanh`
//! output range.

mod dataset;
mod fixing;
mod io;
pub mod mlp;

pub use dataset::{build_precoder_dataset, precoder_index, PrecoderDataset, PrecoderIndex};
pub use fixing::{
    fix_cqi_vae, fix_rank, kl_gaussian, orthogonalize, representative_kl, representative_mean, RankFixing,
};
pub use io::{load_vae, read_vae, save_vae, write_latent_csv, write_vae, LatentRow, VAE_MAGIC};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::CMatrix;
use crate::C64;
use mlp::{Activation, Mlp};

/// Diagonal Gaussian over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl LatentGaussian {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn var(&self) -> Vec<f64> {
        self.logvar.iter().map(|v| v.exp()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub hidden: (usize, usize),
    /// Latent size per layer of precoder rank.
    pub latent_per_rank: usize,
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub leaky_slope: f64,
    /// Encoder log-variance outputs are clamped to `±logvar_clamp`.
    pub logvar_clamp: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden: (400, 128),
            latent_per_rank: 10,
            beta: 0.01,
            batch_size: 128,
            epochs: 100,
            learning_rate: 1e-3,
            leaky_slope: 0.01,
            logvar_clamp: 10.0,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.0 == 0 || self.hidden.1 == 0 || self.latent_per_rank == 0 {
            return Err(invalid("layer sizes must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(invalid("beta must be non-negative"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(invalid("batch size and epochs must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Encoder, decoder and the input scale of one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub rank: usize,
    pub scale: f64,
    pub leaky_slope: f64,
    pub logvar_clamp: f64,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

fn layer_plan(n_in: usize, hidden: (usize, usize), n_lv: usize, slope: f64) -> ([usize; 4], [usize; 4], [Activation; 3], [Activation; 3]) {
    let leaky = Activation::LeakyRelu(slope);
    (
        [n_in, hidden.0, hidden.1, 2 * n_lv],
        [n_lv, hidden.1, hidden.0, n_in],
        [leaky, leaky, Activation::Identity],
        [leaky, leaky, Activation::Tanh],
    )
}

impl Vae {
    /// Randomly initialized model for flattened inputs of length `n_in`.
    pub fn new(rank: usize, n_in: usize, scale: f64, cfg: &VaeConfig) -> Result<Self> {
        cfg.validate()?;
        if rank == 0 || n_in == 0 || !(scale > 0.0) {
            return Err(invalid("rank, input size and scale must be positive"));
        }
        let n_lv = cfg.latent_per_rank * rank;
        let (es, ds, ea, da) = layer_plan(n_in, cfg.hidden, n_lv, cfg.leaky_slope);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            rank,
            scale,
            leaky_slope: cfg.leaky_slope,
            logvar_clamp: cfg.logvar_clamp,
            encoder: Mlp::init(&es, &ea, &mut rng),
            decoder: Mlp::init(&ds, &da, &mut rng),
        })
    }

    /// All-zero weights and biases.
    pub fn zeroed(rank: usize, n_in: usize, cfg: &VaeConfig) -> Self {
        let n_lv = cfg.latent_per_rank * rank;
        let (es, ds, ea, da) = layer_plan(n_in, cfg.hidden, n_lv, cfg.leaky_slope);
        Self {
            rank,
            scale: 1.0,
            leaky_slope: cfg.leaky_slope,
            logvar_clamp: cfg.logvar_clamp,
            encoder: Mlp::zeros(&es, &ea),
            decoder: Mlp::zeros(&ds, &da),
        }
    }

    pub fn n_in(&self) -> usize {
        self.encoder.n_in()
    }

    pub fn n_lv(&self) -> usize {
        self.decoder.n_in()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.params().len() + self.decoder.params().len()
    }

    fn split_latent(&self, out: &[f64]) -> LatentGaussian {
        let n = self.n_lv();
        LatentGaussian {
            mu: out[..n].to_vec(),
            logvar: out[n..2 * n].iter().map(|v| v.clamp(-self.logvar_clamp, self.logvar_clamp)).collect(),
        }
    }

    /// Latent Gaussian of an unscaled flattened precoder.
    pub fn encode(&self, sample: &[f64]) -> Result<LatentGaussian> {
        if sample.len() != self.n_in() {
            return Err(Error::DimensionMismatch(format!("sample length {} for input size {}", sample.len(), self.n_in())));
        }
        let x: Vec<f64> = sample.iter().map(|v| v / self.scale).collect();
        let tr = self.encoder.forward(&x, 1);
        Ok(self.split_latent(tr.output()))
    }

    /// Unscaled flattened precoder for latent point `z`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_lv() {
            return Err(Error::DimensionMismatch(format!("latent length {} for size {}", z.len(), self.n_lv())));
        }
        let tr = self.decoder.forward(z, 1);
        Ok(tr.output().iter().map(|v| v * self.scale).collect())
    }

    /// Mean loss over a batch of scaled samples with fixed noise `eps`
    /// (`batch × n_lv`), plus encoder and decoder gradients.
    pub fn loss_and_grad(&self, x: &[f64], eps: &[f64], beta: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (n_in, n_lv) = (self.n_in(), self.n_lv());
        if x.len() % n_in != 0 || eps.len() != x.len() / n_in * n_lv {
            return Err(Error::DimensionMismatch("batch and noise shapes disagree".into()));
        }
        let batch = x.len() / n_in;
        let inv = 1.0 / batch as f64;
        let enc = self.encoder.forward(x, batch);
        let eo = enc.output();
        let mut z = vec![0.0; batch * n_lv];
        let mut kl = 0.0;
        for b in 0..batch {
            for j in 0..n_lv {
                let mu = eo[b * 2 * n_lv + j];
                let lv = eo[b * 2 * n_lv + n_lv + j].clamp(-self.logvar_clamp, self.logvar_clamp);
                z[b * n_lv + j] = mu + (lv / 2.0).exp() * eps[b * n_lv + j];
                kl += mu * mu + lv.exp() - lv - 1.0;
            }
        }
        let dec = self.decoder.forward(&z, batch);
        let recon: f64 = dec.output().iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
        let loss = (recon + beta / 2.0 * kl) * inv;
        if !loss.is_finite() {
            return Err(Error::Numerical("non-finite loss".into()));
        }

        let d_out: Vec<f64> = dec.output().iter().zip(x).map(|(a, b)| 2.0 * (a - b) * inv).collect();
        let mut g_dec = vec![0.0; self.decoder.params().len()];
        let dz = self.decoder.backward(&dec, &d_out, &mut g_dec);
        let mut d_enc = vec![0.0; batch * 2 * n_lv];
        for b in 0..batch {
            for j in 0..n_lv {
                let mu = eo[b * 2 * n_lv + j];
                let raw = eo[b * 2 * n_lv + n_lv + j];
                let lv = raw.clamp(-self.logvar_clamp, self.logvar_clamp);
                let g = dz[b * n_lv + j];
                d_enc[b * 2 * n_lv + j] = g + beta * mu * inv;
                let in_range = raw > -self.logvar_clamp && raw < self.logvar_clamp;
                d_enc[b * 2 * n_lv + n_lv + j] = if in_range {
                    g * eps[b * n_lv + j] * 0.5 * (lv / 2.0).exp() + beta / 2.0 * (lv.exp() - 1.0) * inv
                } else {
                    0.0
                };
            }
        }
        let mut g_enc = vec![0.0; self.encoder.params().len()];
        self.encoder.backward(&enc, &d_enc, &mut g_enc);
        Ok((loss, g_enc, g_dec))
    }
}

/// Negative ELBO of one sample: squared error plus the β-weighted KL
/// divergence from the standard normal prior.
pub fn loss(sample: &[f64], reconstruction: &[f64], g: &LatentGaussian, beta: f64) -> Result<f64> {
    if sample.len() != reconstruction.len() {
        return Err(Error::DimensionMismatch("sample and reconstruction lengths differ".into()));
    }
    let se: f64 = sample.iter().zip(reconstruction).map(|(a, b)| (a - b).powi(2)).sum();
    let kl: f64 = g.mu.iter().zip(&g.logvar).map(|(m, lv)| m * m + lv.exp() - lv - 1.0).sum();
    Ok(se + beta / 2.0 * kl)
}

/// `z = μ + σ ⊙ ε` with `ε` from a seeded standard-normal stream.
pub fn reparameterize(g: &LatentGaussian, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    g.mu.iter()
        .zip(&g.logvar)
        .map(|(m, lv)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            m + (lv / 2.0).exp() * e
        })
        .collect()
}

/// Flattens `N_tx × r` columns as `[re, im]` pairs, column by column.
pub fn flatten_precoder(v: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.nrows() * v.ncols());
    for c in 0..v.ncols() {
        for r in 0..v.nrows() {
            out.push(v[(r, c)].re);
            out.push(v[(r, c)].im);
        }
    }
    out
}

pub fn unflatten_precoder(x: &[f64], n_tx: usize) -> Result<CMatrix> {
    if n_tx == 0 || x.len() % (2 * n_tx) != 0 {
        return Err(Error::DimensionMismatch(format!("{} reals do not hold {n_tx}-row columns", x.len())));
    }
    let cols = x.len() / (2 * n_tx);
    Ok(CMatrix::from_fn(n_tx, cols, |r, c| {
        let i = 2 * (c * n_tx + r);
        C64::new(x[i], x[i + 1])
    }))
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Vae,
    /// Mean per-sample loss of each epoch.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains a rank-`rank` VAE on unscaled flattened samples with Adam.
pub fn train(samples: &[Vec<f64>], rank: usize, cfg: &VaeConfig) -> Result<Trained> {
    cfg.validate()?;
    let first = samples.first().ok_or(Error::Empty("training samples"))?;
    let n_in = first.len();
    if samples.iter().any(|s| s.len() != n_in) {
        return Err(Error::DimensionMismatch("training samples differ in length".into()));
    }
    let max_abs = samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    // Guard the all-zero dataset; any positive scale reproduces it.
    let scale = if max_abs > 0.0 { max_abs } else { 1.0 };
    let mut model = Vae::new(rank, n_in, scale, cfg)?;
    let n_lv = model.n_lv();
    let data: Vec<f64> = samples.iter().flatten().map(|v| v / scale).collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4e4f_4953);
    let mut adam_enc = Adam::new(model.encoder.params().len());
    let mut adam_dec = Adam::new(model.decoder.params().len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut batch_x = Vec::with_capacity(cfg.batch_size * n_in);
    let mut eps = Vec::with_capacity(cfg.batch_size * n_lv);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            for &i in chunk {
                batch_x.extend_from_slice(&data[i * n_in..(i + 1) * n_in]);
            }
            eps.clear();
            eps.extend((0..chunk.len() * n_lv).map(|_| -> f64 { StandardNormal.sample(&mut noise_rng) }));
            let (l, ge, gd) = match model.loss_and_grad(&batch_x, &eps, cfg.beta) {
                Ok(v) => v,
                Err(_) => {
                    trace.push(f64::NAN);
                    return Err(Error::Diverged { epoch, trace });
                }
            };
            total += l * chunk.len() as f64;
            adam_enc.step(model.encoder.params_mut(), &ge, cfg.learning_rate);
            adam_dec.step(model.decoder.params_mut(), &gd, cfg.learning_rate);
        }
        let mean = total / samples.len() as f64;
        log::debug!("rank {rank} epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
        if !mean.is_finite() || model.encoder.params().iter().chain(model.decoder.params()).any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, trace });
        }
    }
    Ok(Trained { model, loss_trace: trace })
}

/// Reconstruction mean squared error of `model` on unscaled samples, using
/// the latent means.
pub fn reconstruction_mse(model: &Vae, samples: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in samples {
        let g = model.encode(s)?;
        let r = model.decode(&g.mu)?;
        total += s.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        n += s.len();
    }
    if n == 0 {
        return Err(Error::Empty("samples"));
    }
    Ok(total / n as f64)
}
