//! Zero-mean Gaussian-process regression with an RBF kernel shared across
//! output dimensions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{invalid, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `γ²·exp(−‖a − b‖² / (2ζ²))`.
pub fn rbf_kernel(a: &[f64; 3], b: &[f64; 3], gamma: f64, zeta: f64) -> Result<f64> {
    if !(gamma > 0.0 && zeta > 0.0) {
        return Err(invalid("kernel hyperparameters must be positive"));
    }
    Ok(rbf(a, b, gamma, zeta))
}

fn rbf(a: &[f64; 3], b: &[f64; 3], gamma: f64, zeta: f64) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
    gamma * gamma * (-d2 / (2.0 * zeta * zeta)).exp()
}

/// Diagonal regularization added to the kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jitter {
    /// `σ_j² = factor·γ²`.
    Relative(f64),
    Absolute(f64),
}

impl Jitter {
    fn variance(self, gamma: f64) -> f64 {
        match self {
            Jitter::Relative(f) => f * gamma * gamma,
            Jitter::Absolute(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprConfig {
    pub jitter: Jitter,
    /// Points per axis of the initial log-spaced search grid.
    pub grid_points: usize,
    /// Halvings of the pattern-search step after the grid search.
    pub refine_steps: usize,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self { jitter: Jitter::Relative(1e-8), grid_points: 16, refine_steps: 24 }
    }
}

/// Fitted regressor: hyperparameters, training data and cached factor.
#[derive(Debug, Clone)]
pub struct GprModel {
    pub gamma: f64,
    pub zeta: f64,
    pub jitter_variance: f64,
    inputs: Vec<[f64; 3]>,
    /// `n × D` training outputs.
    outputs: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `(K + σ_j²I)⁻¹Δ`.
    alpha: DMatrix<f64>,
}

fn check_data(inputs: &[[f64; 3]], outputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if inputs.len() < 2 {
        return Err(invalid(format!("GPR needs at least 2 training points, got {}", inputs.len())));
    }
    if outputs.len() != inputs.len() {
        return Err(Error::DimensionMismatch("inputs and outputs differ in count".into()));
    }
    let d = outputs[0].len();
    if d == 0 || outputs.iter().any(|o| o.len() != d) {
        return Err(Error::DimensionMismatch("outputs differ in dimension".into()));
    }
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i] == inputs[j] {
                return Err(invalid(format!("duplicate training location at points {j} and {i}")));
            }
        }
    }
    Ok(DMatrix::from_fn(inputs.len(), d, |i, j| outputs[i][j]))
}

fn factor(inputs: &[[f64; 3]], gamma: f64, zeta: f64, jitter: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = inputs.len();
    let k = DMatrix::from_fn(n, n, |i, j| rbf(&inputs[i], &inputs[j], gamma, zeta) + if i == j { jitter } else { 0.0 });
    Cholesky::new(k).ok_or_else(|| {
        Error::Numerical(format!(
            "kernel matrix not positive definite at γ={gamma:.3e}, ζ={zeta:.3e}, jitter {jitter:.1e}; increase the jitter"
        ))
    })
}

fn lml_from(chol: &Cholesky<f64, Dyn>, y: &DMatrix<f64>) -> f64 {
    let (n, d) = (y.nrows() as f64, y.ncols() as f64);
    let alpha = chol.solve(y);
    let fit: f64 = y.iter().zip(alpha.iter()).map(|(a, b)| a * b).sum();
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (fit + d * logdet + n * d * LN_2PI)
}

/// Log marginal likelihood of all output dimensions under one kernel.
pub fn log_marginal_likelihood(
    inputs: &[[f64; 3]],
    outputs: &[Vec<f64>],
    gamma: f64,
    zeta: f64,
    jitter: Jitter,
) -> Result<f64> {
    let y = check_data(inputs, outputs)?;
    if !(gamma > 0.0 && zeta > 0.0) {
        return Err(invalid("kernel hyperparameters must be positive"));
    }
    let chol = factor(inputs, gamma, zeta, jitter.variance(gamma))?;
    Ok(lml_from(&chol, &y))
}

/// Fits at fixed hyperparameters.
pub fn gpr_fit_fixed(inputs: &[[f64; 3]], outputs: &[Vec<f64>], gamma: f64, zeta: f64, jitter: Jitter) -> Result<GprModel> {
    let y = check_data(inputs, outputs)?;
    if !(gamma > 0.0 && zeta > 0.0) {
        return Err(invalid("kernel hyperparameters must be positive"));
    }
    let jv = jitter.variance(gamma);
    let chol = factor(inputs, gamma, zeta, jv)?;
    let alpha = chol.solve(&y);
    Ok(GprModel { gamma, zeta, jitter_variance: jv, inputs: inputs.to_vec(), outputs: y, chol, alpha })
}

/// Maximizes the marginal likelihood over `(γ, ζ)`: a log-spaced grid,
/// then a coordinate pattern search in log space.
pub fn gpr_fit(inputs: &[[f64; 3]], outputs: &[Vec<f64>], cfg: &GprConfig) -> Result<GprModel> {
    let y = check_data(inputs, outputs)?;
    let n = inputs.len();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        for j in 0..i {
            let d = ((inputs[i][0] - inputs[j][0]).powi(2)
                + (inputs[i][1] - inputs[j][1]).powi(2)
                + (inputs[i][2] - inputs[j][2]).powi(2))
            .sqrt();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
    }
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt().max(1e-12);
    let bounds = [((rms / 30.0).ln(), (rms * 30.0).ln()), ((dmin / 4.0).ln(), (dmax * 10.0).ln())];

    let eval = |lg: f64, lz: f64| -> f64 {
        let (g, z) = (lg.exp(), lz.exp());
        match factor(inputs, g, z, cfg.jitter.variance(g)) {
            Ok(c) => lml_from(&c, &y),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let m = cfg.grid_points.max(2);
    let at = |b: (f64, f64), i: usize| b.0 + (b.1 - b.0) * i as f64 / (m - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let (lg, lz) = (at(bounds[0], i), at(bounds[1], j));
            let v = eval(lg, lz);
            if v > best.0 {
                best = (v, lg, lz);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Numerical("kernel matrix not positive definite anywhere on the search grid".into()));
    }
    let mut step = [(bounds[0].1 - bounds[0].0) / (m - 1) as f64, (bounds[1].1 - bounds[1].0) / (m - 1) as f64];
    for _ in 0..cfg.refine_steps {
        let mut moved = true;
        while moved {
            moved = false;
            for (dg, dz) in [(step[0], 0.0), (-step[0], 0.0), (0.0, step[1]), (0.0, -step[1])] {
                let v = eval(best.1 + dg, best.2 + dz);
                if v > best.0 + 1e-12 * best.0.abs() {
                    best = (v, best.1 + dg, best.2 + dz);
                    moved = true;
                }
            }
        }
        step = [step[0] / 2.0, step[1] / 2.0];
    }
    log::debug!("GPR fit: γ={:.4e} ζ={:.4e} lml={:.4}", best.1.exp(), best.2.exp(), best.0);
    gpr_fit_fixed(inputs, outputs, best.1.exp(), best.2.exp(), cfg.jitter)
}

impl GprModel {
    pub fn num_points(&self) -> usize {
        self.inputs.len()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.ncols()
    }

    pub fn inputs(&self) -> &[[f64; 3]] {
        &self.inputs
    }

    /// Posterior means `Ξ(Γ̂, Γ)(Ξ + σ_j²I)⁻¹Δ`, one row per query.
    pub fn predict(&self, queries: &[[f64; 3]]) -> Vec<Vec<f64>> {
        queries
            .iter()
            .map(|q| {
                let kv: Vec<f64> = self.inputs.iter().map(|p| rbf(q, p, self.gamma, self.zeta)).collect();
                (0..self.alpha.ncols())
                    .map(|c| kv.iter().enumerate().map(|(i, k)| k * self.alpha[(i, c)]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from(&self.chol, &self.outputs)
    }

    /// Smallest diagonal entry of the Cholesky factor.
    pub fn min_pivot(&self) -> f64 {
        self.chol.l_dirty().diagonal().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub const GPR_MAGIC: &[u8; 8] = b"FDMGPR01";

/// Layout: magic, `u32` rank, `f64` γ, ζ, σ_j², `u32` point count and
/// output dimension, then inputs (`n × 3`) and outputs (`n × D`) row-major.
pub fn write_gpr<W: Write>(model: &GprModel, rank: usize, w: &mut W) -> Result<()> {
    w.write_all(GPR_MAGIC)?;
    w.write_all(&(rank as u32).to_le_bytes())?;
    for v in [model.gamma, model.zeta, model.jitter_variance] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(model.num_points() as u32).to_le_bytes())?;
    w.write_all(&(model.output_dim() as u32).to_le_bytes())?;
    for p in &model.inputs {
        for v in p {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for i in 0..model.num_points() {
        for j in 0..model.output_dim() {
            w.write_all(&model.outputs[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns the rank tag and the model, refactorized from the stored data.
pub fn read_gpr<R: Read>(r: &mut R) -> Result<(usize, GprModel)> {
    let mut head = [0u8; 8 + 4 + 24 + 8];
    r.read_exact(&mut head).map_err(|_| Error::Truncated { expected: head.len(), found: 0 })?;
    if &head[..8] != GPR_MAGIC {
        return Err(Error::Format("not a GPR model file".into()));
    }
    let u = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap()) as usize;
    let f = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    let rank = u(8);
    let (gamma, zeta, jv) = (f(12), f(20), f(28));
    let (n, d) = (u(36), u(40));
    let mut body = vec![0u8; 8 * n * (3 + d)];
    r.read_exact(&mut body).map_err(|_| Error::Truncated { expected: body.len(), found: 0 })?;
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let inputs: Vec<[f64; 3]> = vals[..3 * n].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let outputs: Vec<Vec<f64>> = vals[3 * n..].chunks_exact(d.max(1)).map(|c| c.to_vec()).collect();
    let model = gpr_fit_fixed(&inputs, &outputs, gamma, zeta, Jitter::Absolute(jv))?;
    Ok((rank, model))
}

pub fn save_gpr(model: &GprModel, rank: usize, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_gpr(model, rank, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_gpr(path: impl AsRef<Path>) -> Result<(usize, GprModel)> {
    read_gpr(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_identities() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(rbf_kernel(&a, &a, 1.5, 2.0).unwrap(), 2.25);
        let b = [1.0 + 2.0 * 2f64.sqrt(), 2.0, 3.0];
        assert!((rbf_kernel(&a, &b, 1.0, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((rbf_kernel(&a, &[50.0, -9.0, 3.0], 1.2, 1e9).unwrap() - 1.44).abs() < 1e-9);
        assert!(rbf_kernel(&a, &a, 0.0, 1.0).is_err());
    }

    #[test]
    fn interpolates_training_points() {
        let x: Vec<[f64; 3]> = (0..6).map(|i| [i as f64 * 1.5, (i % 2) as f64, 0.0]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![p[0].sin(), p[1] - 0.3]).collect();
        let m = gpr_fit_fixed(&x, &y, 1.0, 1.0, Jitter::Absolute(1e-12)).unwrap();
        for (p, t) in m.predict(&x).iter().zip(&y) {
            for (a, b) in p.iter().zip(t) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let far = m.predict(&[[1e4, 0.0, 0.0]]);
        assert!(far[0].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_duplicates_and_too_few_points() {
        let x = [[0.0; 3], [0.0; 3]];
        assert!(gpr_fit(&x, &[vec![1.0], vec![2.0]], &GprConfig::default()).is_err());
        assert!(gpr_fit(&x[..1], &[vec![1.0]], &GprConfig::default()).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let x: Vec<[f64; 3]> = (0..4).map(|i| [i as f64, 0.0, 2.0]).collect();
        let y: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0]).collect();
        let m = gpr_fit_fixed(&x, &y, 1.3, 2.1, Jitter::Relative(1e-8)).unwrap();
        let mut buf = Vec::new();
        write_gpr(&m, 3, &mut buf).unwrap();
        let (rank, back) = read_gpr(&mut buf.as_slice()).unwrap();
        assert_eq!(rank, 3);
        assert_eq!(back.predict(&[[0.5, 0.1, 2.0]]), m.predict(&[[0.5, 0.1, 2.0]]));
    }
}
