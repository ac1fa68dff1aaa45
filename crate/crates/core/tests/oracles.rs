//! Library results against independently computed references.

mod common;

use std::f64::consts::PI;

use fdmimo::codebook::{build_codebook, dft_beam, BeamConfig};
use fdmimo::linalg::CMatrix;
use fdmimo::linkphy::{bicm_capacity_exact, slice_sinrs, LinkConfig};
use fdmimo::selection::{clsm_select, svd_select};
use fdmimo::spatial::{gpr_fit, gpr_fit_fixed, log_marginal_likelihood, GprConfig, Jitter, NaturalNeighbor, NniOutcome};
use fdmimo::vae::{kl_gaussian, LatentGaussian, Vae, VaeConfig};
use fdmimo::C64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::*;

#[test]
fn clsm_search_agrees_with_brute_force() {
    let ds = desk_dataset(11, 3, 6);
    let cfg = LinkConfig::default();
    let cb = build_codebook(&BeamConfig::new(8, 1, 4, 1), 4).unwrap();
    for (t, q) in random_slots(&ds, 8, 1) {
        let s = ds.slice(t, q);
        let rec = clsm_select(&s, &cb, &cfg, t, q).unwrap();
        assert_eq!(rec.params.pmi, Some(brute_force_clsm(&s, &cb, cfg.noise_variance)), "slot ({t}, {q})");
    }
}

#[test]
fn svd_search_agrees_with_brute_force() {
    let ds = desk_dataset(12, 3, 6);
    let cfg = LinkConfig::default();
    for (t, q) in random_slots(&ds, 8, 2) {
        let s = ds.slice(t, q);
        let rec = svd_select(&s, &cfg, None, t, q).unwrap();
        let (k, l) = brute_force_svd(&s, cfg.noise_variance, 4);
        assert_eq!((rec.svd_subcarrier, rec.params.rank), (Some(k), l), "slot ({t}, {q})");
    }
}

#[test]
fn slice_sinrs_match_explicit_inverse() {
    let ds = desk_dataset(13, 2, 4);
    let cfg = LinkConfig::default();
    let cb = build_codebook(&BeamConfig::new(8, 1, 4, 1), 4).unwrap();
    for (t, q) in random_slots(&ds, 5, 3) {
        let s = ds.slice(t, q);
        for pmi in [0, 77, 200, 300] {
            let w = &cb.entries()[pmi].w;
            let got = slice_sinrs(&s, w, &cfg).unwrap();
            let want: Vec<f64> = (0..4).flat_map(|k| mmse_sinrs(&s.matrix(k), w, cfg.noise_variance)).collect();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
            }
        }
    }
}

/// BICM capacity of Gray square QAM by Monte Carlo over the full complex
/// constellation.
fn bicm_monte_carlo(snr: f64, m: u32, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let side = 1usize << (m / 2);
    let gray = |i: usize| i ^ (i >> 1);
    let norm = (2.0 * ((side * side - 1) as f64) / 3.0).sqrt();
    let pts: Vec<(C64, usize)> = (0..side * side)
        .map(|idx| {
            let (i, j) = (idx / side, idx % side);
            let re = (2.0 * i as f64 - (side as f64 - 1.0)) / norm;
            let im = (2.0 * j as f64 - (side as f64 - 1.0)) / norm;
            (C64::new(re, im), (gray(i) << (m / 2)) | gray(j))
        })
        .collect();
    let sigma = (0.5 / snr).sqrt();
    let mut loss = 0.0;
    let mut lp = vec![0.0; pts.len()];
    for _ in 0..n {
        let (x, label) = pts[rng.random_range(0..pts.len())];
        let nr: f64 = StandardNormal.sample(rng);
        let ni: f64 = StandardNormal.sample(rng);
        let y = x + C64::new(nr, ni) * sigma;
        for (v, (p, _)) in lp.iter_mut().zip(&pts) {
            *v = -(y - p).norm_sqr() * snr;
        }
        let mx = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let all: f64 = lp.iter().map(|v| (v - mx).exp()).sum();
        for bit in 0..m {
            let b = (label >> bit) & 1;
            let same: f64 = lp.iter().zip(&pts).filter(|(_, (_, l))| (l >> bit) & 1 == b).map(|(v, _)| (v - mx).exp()).sum();
            loss += (all / same).log2();
        }
    }
    m as f64 - loss / n as f64
}

#[test]
fn bicm_capacity_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (m, db) in [(2, 0.0), (4, 8.0), (6, 15.0), (6, 5.0)] {
        let snr = 10f64.powf(db / 10.0);
        let exact = bicm_capacity_exact(snr, m).unwrap();
        let mc = bicm_monte_carlo(snr, m, 60_000, &mut rng);
        assert!((exact - mc).abs() < 0.02, "m={m} at {db} dB: {exact} vs {mc}");
    }
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g1 = LatentGaussian { mu: vec![0.3, -1.0, 0.8], logvar: vec![-0.5, 0.2, 0.0] };
    let g2 = LatentGaussian { mu: vec![-0.4, 0.1, 0.5], logvar: vec![0.3, -0.4, 0.6] };
    let log_density = |g: &LatentGaussian, x: &[f64]| -> f64 {
        x.iter()
            .zip(g.mu.iter().zip(&g.logvar))
            .map(|(xi, (m, lv))| -0.5 * ((xi - m).powi(2) / lv.exp() + lv + (2.0 * PI).ln()))
            .sum()
    };
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let x: Vec<f64> = g1
            .mu
            .iter()
            .zip(&g1.logvar)
            .map(|(m, lv)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                m + (lv / 2.0).exp() * e
            })
            .collect();
        acc += log_density(&g1, &x) - log_density(&g2, &x);
    }
    let mc = acc / n as f64;
    let exact = kl_gaussian(&g1, &g2).unwrap();
    assert!(((mc - exact) / exact).abs() < 0.01, "{mc} vs {exact}");
}

fn tiny_vae() -> Vae {
    let cfg = VaeConfig { hidden: (6, 4), latent_per_rank: 1, seed: 9, ..VaeConfig::default() };
    Vae::new(1, 8, 1.0, &cfg).unwrap()
}

#[test]
fn vae_gradients_match_central_differences() {
    let mut model = tiny_vae();
    assert!(model.num_params() <= 200, "{} parameters", model.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let batch = 3;
    let x: Vec<f64> = (0..batch * model.n_in()).map(|_| rng.random_range(-0.9..0.9)).collect();
    let eps: Vec<f64> = (0..batch * model.n_lv()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let beta = 0.5;
    let (_, g_enc, g_dec) = model.loss_and_grad(&x, &eps, beta).unwrap();
    let h = 1e-5;
    let check = |analytic: f64, numeric: f64, what: &str| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(rel < 1e-4, "{what}: analytic {analytic} numeric {numeric}");
    };
    for i in 0..g_enc.len() {
        let p0 = model.encoder.params()[i];
        model.encoder.params_mut()[i] = p0 + h;
        let up = model.loss_and_grad(&x, &eps, beta).unwrap().0;
        model.encoder.params_mut()[i] = p0 - h;
        let dn = model.loss_and_grad(&x, &eps, beta).unwrap().0;
        model.encoder.params_mut()[i] = p0;
        check(g_enc[i], (up - dn) / (2.0 * h), &format!("encoder parameter {i}"));
    }
    for i in 0..g_dec.len() {
        let p0 = model.decoder.params()[i];
        model.decoder.params_mut()[i] = p0 + h;
        let up = model.loss_and_grad(&x, &eps, beta).unwrap().0;
        model.decoder.params_mut()[i] = p0 - h;
        let dn = model.loss_and_grad(&x, &eps, beta).unwrap().0;
        model.decoder.params_mut()[i] = p0;
        check(g_dec[i], (up - dn) / (2.0 * h), &format!("decoder parameter {i}"));
    }
}

/// Sibson weights as pixel counts: each pixel the query would capture from
/// the existing diagram is credited to the sample that owned it.
fn raster_weights(points: &[[f64; 2]], q: [f64; 2], lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / n as f64;
    let mut counts = vec![0usize; points.len()];
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    for i in 0..n {
        for j in 0..n {
            let p = [lo + (i as f64 + 0.5) * step, lo + (j as f64 + 0.5) * step];
            let (owner, dmin) = points
                .iter()
                .enumerate()
                .map(|(k, s)| (k, d2(p, *s)))
                .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            if d2(p, q) < dmin {
                counts[owner] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

#[test]
fn nni_weights_match_raster_areas() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pts: Vec<[f64; 2]> = (0..9).map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
    let nn = NaturalNeighbor::new(&pts).unwrap();
    let mut checked = 0;
    for _ in 0..6 {
        let q = [rng.random_range(3.0..7.0), rng.random_range(3.0..7.0)];
        let NniOutcome::Interior(w) = nn.weights(q) else { continue };
        let raster = raster_weights(&pts, q, -20.0, 30.0, 1600);
        let mut dense = vec![0.0; pts.len()];
        for (i, wi) in &w.weights {
            dense[*i] = *wi;
        }
        for (a, b) in dense.iter().zip(&raster) {
            assert!((a - b).abs() < 0.01, "query {q:?}: {dense:?} vs {raster:?}");
        }
        checked += 1;
    }
    assert!(checked >= 3);
}

fn kernel(a: &[f64; 3], b: &[f64; 3], gamma: f64, zeta: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    gamma * gamma * (-d2 / (2.0 * zeta * zeta)).exp()
}

#[test]
fn gpr_posterior_mean_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let xs: Vec<[f64; 3]> =
        (0..25).map(|_| [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 2.0]).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(x[0] / 9.0).sin(), (x[1] / 7.0).cos() + 0.1 * x[0] / 40.0]).collect();
    let (gamma, zeta, jit) = (1.3, 6.0, 1e-6);
    let model = gpr_fit_fixed(&xs, &ys, gamma, zeta, Jitter::Absolute(jit)).unwrap();
    let n = xs.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel(&xs[i], &xs[j], gamma, zeta) + if i == j { jit } else { 0.0 });
    let y = DMatrix::from_fn(n, 2, |i, j| ys[i][j]);
    let alpha = k.lu().solve(&y).unwrap();
    let queries: Vec<[f64; 3]> =
        (0..10).map(|_| [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 2.0]).collect();
    let got = model.predict(&queries);
    for (qi, q) in queries.iter().enumerate() {
        let ks = DVector::from_fn(n, |i, _| kernel(q, &xs[i], gamma, zeta));
        for d in 0..2 {
            let want = ks.dot(&alpha.column(d));
            assert!((got[qi][d] - want).abs() < 1e-8, "{} vs {want}", got[qi][d]);
        }
    }
}

#[test]
fn two_point_marginal_likelihood_closed_form() {
    let xs = [[0.0, 0.0, 2.0], [3.0, 4.0, 2.0]];
    let ys = vec![vec![0.7], vec![-0.2]];
    let (gamma, zeta, jit): (f64, f64, f64) = (1.5, 4.0, 1e-3);
    let a = gamma * gamma + jit;
    let b = gamma * gamma * (-25.0 / (2.0 * zeta * zeta)).exp();
    let det = a * a - b * b;
    let quad = (a * 0.7 * 0.7 - 2.0 * b * 0.7 * -0.2 + a * 0.2 * 0.2) / det;
    let want = -0.5 * quad - 0.5 * det.ln() - (2.0 * PI).ln();
    let got = log_marginal_likelihood(&xs, &ys, gamma, zeta, Jitter::Absolute(jit)).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn gpr_recovers_length_scale_of_sampled_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let xs: Vec<[f64; 3]> = (0..10).flat_map(|i| (0..8).map(move |j| [i as f64 * 4.0, j as f64 * 4.0, 2.0])).collect();
    let (gamma, zeta) = (1.0, 9.0);
    let n = xs.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel(&xs[i], &xs[j], gamma, zeta) + if i == j { 1e-8 } else { 0.0 });
    let l = k.cholesky().unwrap().l();
    let dims = 6;
    let z = DMatrix::from_fn(n, dims, |_, _| StandardNormal.sample(&mut rng));
    let f = l * z;
    let ys: Vec<Vec<f64>> = (0..n).map(|i| (0..dims).map(|d| f[(i, d)]).collect()).collect();
    let model = gpr_fit(&xs, &ys, &GprConfig::default()).unwrap();
    assert!((model.zeta / zeta).ln().abs() < 0.4_f64, "ζ fitted {} for {zeta}", model.zeta);
}

#[test]
fn dft_beams_follow_closed_form() {
    let cfg = BeamConfig::new(8, 1, 4, 1);
    for t1 in 0..32 {
        let b = dft_beam(t1, 0, &cfg).unwrap();
        for (i, v) in b.iter().enumerate() {
            let want = C64::from_polar(1.0, 2.0 * PI * (t1 * i) as f64 / 32.0);
            assert!((v - want).norm() < 1e-12);
        }
    }
    let cb = build_codebook(&cfg, 4).unwrap();
    for t1 in 0..28 {
        let a = &cb.beams()[t1];
        let b = &cb.beams()[t1 + 4];
        let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        assert!(ip.norm() < 1e-10);
    }
}

#[test]
fn svd_precoder_reaches_channel_capacity_bound_per_layer() {
    // With W = V_L/√L and an MMSE receiver, each layer's SINR is σᵢ²/(L·σ²).
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let h = gaussian_matrix(4, 16, &mut rng);
        let dec = fdmimo::selection::svd(&h).unwrap();
        for l in 1..=4 {
            let w: CMatrix = dec.v_cols(l) / C64::new((l as f64).sqrt(), 0.0);
            let s = mmse_sinrs(&h, &w, 1e-2);
            for (i, si) in s.iter().enumerate() {
                let want = dec.singular_values[i].powi(2) / (l as f64 * 1e-2);
                assert!((si - want).abs() < 1e-8 * want, "{si} vs {want}");
            }
        }
    }
}
