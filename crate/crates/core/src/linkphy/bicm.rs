//! BICM capacity of Gray-mapped square QAM over AWGN and its inverse.
//!
//! A Gray square QAM splits into two independent Gray PAM streams, so the
//! capacity is twice the per-dimension PAM value. The expectation over noise
//! uses Gauss-Hermite quadrature and is tabulated once per modulation.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Result};

const DB_MIN: f64 = -30.0;
const DB_MAX: f64 = 40.0;
const DB_STEP: f64 = 0.05;
const QUAD_ORDER: usize = 48;

/// Modulation orders (bits per symbol) with a tabulated capacity curve.
pub const SUPPORTED_ORDERS: [u32; 3] = [2, 4, 6];

/// Gauss-Hermite nodes and weights for `∫ e^{-x²} g(x) dx` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// BICM capacity of unit-energy Gray PAM with `bits` bits at per-dimension
/// SNR `snr` (noise variance `1/snr`).
fn pam_capacity(bits: u32, snr: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let p = 1usize << bits;
    let scale = (3.0 / ((p * p - 1) as f64)).sqrt();
    let levels: Vec<f64> = (0..p).map(|i| (2.0 * i as f64 - (p as f64 - 1.0)) * scale).collect();
    let labels: Vec<usize> = (0..p).map(|i| i ^ (i >> 1)).collect();
    let sigma = (1.0 / snr).sqrt();
    let mut loss = 0.0;
    let mut logp = vec![0.0; p];
    for (x_idx, &x) in levels.iter().enumerate() {
        for (z, w) in nodes.iter().zip(weights) {
            let y = x + std::f64::consts::SQRT_2 * sigma * z;
            for (lp, &xp) in logp.iter_mut().zip(&levels) {
                *lp = -(y - xp).powi(2) * snr / 2.0;
            }
            let all = log_sum_exp(logp.iter().copied());
            for bit in 0..bits {
                let b = (labels[x_idx] >> bit) & 1;
                let same = log_sum_exp(
                    logp.iter().zip(&labels).filter(|(_, &l)| (l >> bit) & 1 == b).map(|(v, _)| *v),
                );
                loss += w / PI.sqrt() * (all - same) / std::f64::consts::LN_2;
            }
        }
    }
    (bits as f64 - loss / p as f64).clamp(0.0, bits as f64)
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Capacity of Gray QAM with `m` bits per symbol at linear SNR `snr`,
/// evaluated directly by quadrature (no table).
pub fn bicm_capacity_exact(snr: f64, m: u32) -> Result<f64> {
    check_order(m)?;
    if !(snr > 0.0) {
        return Ok(0.0);
    }
    let (nodes, weights) = gauss_hermite(QUAD_ORDER);
    Ok(2.0 * pam_capacity(m / 2, snr, &nodes, &weights))
}

fn check_order(m: u32) -> Result<()> {
    if SUPPORTED_ORDERS.contains(&m) {
        Ok(())
    } else {
        Err(invalid(format!("unsupported modulation order {m}")))
    }
}

/// Monotone capacity table on a uniform dB grid.
#[derive(Debug)]
pub struct BicmTable {
    m: u32,
    values: Vec<f64>,
}

impl BicmTable {
    fn build(m: u32) -> Self {
        let (nodes, weights) = gauss_hermite(QUAD_ORDER);
        let n = ((DB_MAX - DB_MIN) / DB_STEP).round() as usize + 1;
        let mut values: Vec<f64> = (0..n)
            .map(|i| {
                let snr = 10f64.powf((DB_MIN + i as f64 * DB_STEP) / 10.0);
                2.0 * pam_capacity(m / 2, snr, &nodes, &weights)
            })
            .collect();
        // Quadrature noise can produce tiny non-monotone wiggles at saturation.
        for i in 1..n {
            if values[i] < values[i - 1] {
                values[i] = values[i - 1];
            }
        }
        Self { m, values }
    }

    fn db(i: usize) -> f64 {
        DB_MIN + i as f64 * DB_STEP
    }

    pub fn capacity(&self, snr: f64) -> f64 {
        if !(snr > 0.0) {
            return 0.0;
        }
        let db = 10.0 * snr.log10();
        if db <= DB_MIN {
            // Capacity is linear in SNR at the bottom of the range.
            return self.values[0] * snr / 10f64.powf(DB_MIN / 10.0);
        }
        if db >= DB_MAX {
            return self.m as f64;
        }
        let pos = (db - DB_MIN) / DB_STEP;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Inverse of [`capacity`](Self::capacity) for values in `(0, m)`.
    /// Values at or beyond saturation map to the top of the table.
    pub fn inverse(&self, c: f64) -> f64 {
        if !(c > 0.0) {
            return 0.0;
        }
        let lin0 = 10f64.powf(DB_MIN / 10.0);
        if c <= self.values[0] {
            return lin0 * c / self.values[0];
        }
        let last = *self.values.last().unwrap();
        if c >= last {
            return 10f64.powf(DB_MAX / 10.0);
        }
        // First index whose value reaches c.
        let hi = self.values.partition_point(|&v| v < c);
        let lo = hi - 1;
        let (a, b) = (self.values[lo], self.values[hi]);
        let frac = if b > a { (c - a) / (b - a) } else { 0.0 };
        10f64.powf((Self::db(lo) + frac * DB_STEP) / 10.0)
    }

    pub fn order(&self) -> u32 {
        self.m
    }
}

/// Shared table for modulation order `m` (built on first use).
pub fn bicm_table(m: u32) -> Result<&'static BicmTable> {
    static TABLES: [OnceLock<BicmTable>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    check_order(m)?;
    let slot = (m / 2 - 1) as usize;
    Ok(TABLES[slot].get_or_init(|| BicmTable::build(m)))
}

/// Tabulated BICM capacity in bits per symbol.
pub fn bicm_capacity(snr: f64, m: u32) -> Result<f64> {
    Ok(bicm_table(m)?.capacity(snr))
}

/// Linear SNR achieving capacity `c` bits per symbol.
pub fn bicm_capacity_inverse(c: f64, m: u32) -> Result<f64> {
    Ok(bicm_table(m)?.inverse(c))
}
