//! Time-domain fixing: rank threshold rule, representative latent choice,
//! QR orthogonalization and the fixed CQI.

use std::collections::BTreeMap;

use super::LatentGaussian;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::statfix::mode;
use crate::C64;

/// QR-orthogonalizes `v` and scales to unit Frobenius norm (`Q/√L`).
pub fn orthogonalize(v: &CMatrix) -> Result<CMatrix> {
    let l = v.ncols();
    if l == 0 || v.nrows() < l {
        return Err(Error::DimensionMismatch(format!("cannot orthogonalize a {}×{l} matrix", v.nrows())));
    }
    if !crate::linalg::all_finite(v) {
        return Err(Error::Numerical("non-finite precoder".into()));
    }
    let qr = v.clone().qr();
    let r = qr.r();
    let min_diag = (0..l).map(|i| r[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(min_diag > 1e-9) {
        return Err(Error::RankDeficient(min_diag));
    }
    Ok(qr.q() / C64::new((l as f64).sqrt(), 0.0))
}

/// Fixed RI per location with the bookkeeping needed downstream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RankFixing {
    /// Location index to fixed RI.
    pub fixed: BTreeMap<usize, usize>,
}

impl RankFixing {
    /// Locations whose fixed RI equals `rank`, ascending.
    pub fn locations_of(&self, rank: usize) -> Vec<usize> {
        self.fixed.iter().filter(|(_, &r)| r == rank).map(|(&q, _)| q).collect()
    }
}

/// With `r` the mode of a history: keeps `r` when at least `cthold` percent
/// of the history has rank `≥ r`, otherwise uses `r − 1` (never below 1).
pub fn fix_rank(histories: &[(usize, Vec<usize>)], cthold: f64) -> Result<RankFixing> {
    if !(cthold > 0.0 && cthold <= 100.0) {
        return Err(crate::error::invalid(format!("threshold {cthold} outside (0, 100]")));
    }
    let mut out = RankFixing::default();
    for (q, h) in histories {
        let r = mode(h).ok_or(Error::Empty("rank history"))?;
        let share = h.iter().filter(|&&x| x >= r).count() as f64 / h.len() as f64;
        let fixed = if share * 100.0 >= cthold - 1e-9 { r } else { (r - 1).max(1) };
        out.fixed.insert(*q, fixed);
    }
    Ok(out)
}

/// Index minimizing the squared distance of mean and variance vectors to
/// their averages; ties go to the first.
pub fn representative_mean(latents: &[LatentGaussian]) -> Result<usize> {
    let first = latents.first().ok_or(Error::Empty("latent set"))?;
    let n = first.dim();
    if latents.iter().any(|g| g.dim() != n) {
        return Err(Error::DimensionMismatch("latents differ in dimension".into()));
    }
    let cnt = latents.len() as f64;
    let vars: Vec<Vec<f64>> = latents.iter().map(|g| g.var()).collect();
    let mut mu_bar = vec![0.0; n];
    let mut var_bar = vec![0.0; n];
    for (g, v) in latents.iter().zip(&vars) {
        for j in 0..n {
            mu_bar[j] += g.mu[j] / cnt;
            var_bar[j] += v[j] / cnt;
        }
    }
    let score = |i: usize| -> f64 {
        (0..n).map(|j| (latents[i].mu[j] - mu_bar[j]).powi(2) + (vars[i][j] - var_bar[j]).powi(2)).sum()
    };
    Ok(argmin_first((0..latents.len()).map(score)))
}

fn argmin_first(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in it.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// `KL(g1 ‖ g2)` between diagonal Gaussians.
pub fn kl_gaussian(g1: &LatentGaussian, g2: &LatentGaussian) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch("latent dimensions differ".into()));
    }
    let mut s = 0.0;
    for j in 0..g1.dim() {
        let v2 = g2.logvar[j].exp();
        s += g2.logvar[j] + ((g1.mu[j] - g2.mu[j]).powi(2) + g1.logvar[j].exp()) / v2 - g1.logvar[j] - 1.0;
    }
    Ok(0.5 * s)
}

/// Index minimizing the summed divergence to all others, where each pair is
/// measured from the lower index to the higher one.
pub fn representative_kl(latents: &[LatentGaussian]) -> Result<usize> {
    if latents.is_empty() {
        return Err(Error::Empty("latent set"));
    }
    let n = latents.len();
    let mut sums = vec![0.0; n];
    for a in 0..n {
        for b in a + 1..n {
            let d = kl_gaussian(&latents[a], &latents[b])?;
            sums[a] += d;
            sums[b] += d;
        }
    }
    Ok(argmin_first(sums.into_iter()))
}

/// Floor of the mean CQI, clamped to `1..=15`.
pub fn fix_cqi_vae(history: &[u8]) -> Result<u8> {
    if history.is_empty() {
        return Err(Error::Empty("CQI history"));
    }
    let mean = history.iter().map(|&c| c as f64).sum::<f64>() / history.len() as f64;
    Ok(mean.floor().clamp(1.0, 15.0) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gram_deviation;

    fn g(mu: &[f64], lv: &[f64]) -> LatentGaussian {
        LatentGaussian { mu: mu.to_vec(), logvar: lv.to_vec() }
    }

    #[test]
    fn orthonormal_input_is_phase_scaled() {
        let mut v = CMatrix::zeros(4, 2);
        v[(0, 0)] = C64::new(1.0, 0.0);
        v[(2, 1)] = C64::new(0.0, 1.0);
        let w = orthogonalize(&v).unwrap();
        assert!(gram_deviation(&w) < 1e-12);
        for c in 0..2 {
            let ratio: Vec<C64> = (0..4).filter(|&r| v[(r, c)].norm() > 0.0).map(|r| w[(r, c)] / v[(r, c)]).collect();
            assert!((ratio[0].norm() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_column_rejected() {
        let v = CMatrix::from_fn(4, 2, |r, _| C64::new(r as f64 + 1.0, 0.5));
        assert!(matches!(orthogonalize(&v), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn rank_rule() {
        let f = fix_rank(&[(0, vec![4; 10])], 100.0).unwrap();
        assert_eq!(f.fixed[&0], 4);
        let h = vec![4, 4, 4, 4, 4, 4, 4, 3, 2, 1];
        assert_eq!(fix_rank(&[(1, h.clone())], 80.0).unwrap().fixed[&1], 3);
        assert_eq!(fix_rank(&[(1, h)], 70.0).unwrap().fixed[&1], 4);
        assert_eq!(fix_rank(&[(2, vec![1, 1, 2])], 100.0).unwrap().fixed[&2], 1);
        assert!(fix_rank(&[(3, vec![])], 100.0).is_err());
        assert!(fix_rank(&[(3, vec![1])], 0.0).is_err());
    }

    #[test]
    fn representatives_tie_break() {
        let same = vec![g(&[1.0, 2.0], &[0.1, 0.2]); 4];
        assert_eq!(representative_mean(&same).unwrap(), 0);
        assert_eq!(representative_kl(&same).unwrap(), 0);
        let sym = vec![g(&[1.0], &[0.0]), g(&[-1.0], &[0.0])];
        assert_eq!(representative_mean(&sym).unwrap(), 0);
        let pair = vec![g(&[1.0], &[0.3]), g(&[-2.0], &[-0.4])];
        assert_eq!(representative_kl(&pair).unwrap(), 0);
        assert!(representative_mean(&[]).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        let a = g(&[0.3, -1.2], &[0.0, 0.0]);
        assert_eq!(kl_gaussian(&a, &a).unwrap(), 0.0);
        let std = g(&[0.0, 0.0], &[0.0, 0.0]);
        assert!((kl_gaussian(&a, &std).unwrap() - 0.5 * (0.09 + 1.44)).abs() < 1e-12);
    }

    #[test]
    fn cqi_floor() {
        assert_eq!(fix_cqi_vae(&[5, 5, 5]).unwrap(), 5);
        assert_eq!(fix_cqi_vae(&[4, 5, 5, 5]).unwrap(), 4);
        assert!(fix_cqi_vae(&[]).is_err());
    }
}
