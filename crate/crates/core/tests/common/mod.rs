//! Reference computations shared by the integration tests. Everything here is
//! written against nalgebra directly and does not call the library's SINR,
//! SVD or search code.

#![allow(dead_code)]

use fdmimo::channel::{generate_dataset, ChannelDataset, ChannelSlice, Extents, SceneConfig};
use fdmimo::codebook::Codebook;
use fdmimo::linalg::CMatrix;
use fdmimo::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// MMSE per-layer SINRs with squared magnitudes, by explicit inversion.
pub fn mmse_sinrs(h: &CMatrix, w: &CMatrix, noise: f64) -> Vec<f64> {
    let hw = h * w;
    let l = w.ncols();
    let a = hw.adjoint() * &hw + CMatrix::identity(l, l) * C64::new(noise, 0.0);
    let e = a.try_inverse().expect("MMSE system is singular") * hw.adjoint();
    let g = &e * &hw;
    (0..l)
        .map(|i| {
            let sig = g[(i, i)].norm_sqr();
            let interf: f64 = (0..l).filter(|&j| j != i).map(|j| g[(i, j)].norm_sqr()).sum();
            let n: f64 = e.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() * noise;
            sig / (interf + n)
        })
        .collect()
}

pub fn slice_mi(slice: &ChannelSlice, w: &CMatrix, noise: f64) -> f64 {
    (0..slice.num_subcarriers())
        .map(|k| mmse_sinrs(&slice.matrix(k), w, noise).iter().map(|s| (1.0 + s).log2()).sum::<f64>())
        .sum()
}

/// Codebook index with the largest summed mutual information; the first
/// of equal scores wins.
pub fn brute_force_clsm(slice: &ChannelSlice, codebook: &Codebook, noise: f64) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for e in codebook.entries() {
        if e.rank > slice.n_rx {
            continue;
        }
        let mi = slice_mi(slice, &e.w, noise);
        if mi > best.1 {
            best = (e.pmi, mi);
        }
    }
    best.0
}

/// Leading `l` right singular vectors of `h`, ordered by singular value.
pub fn right_singular(h: &CMatrix, l: usize) -> CMatrix {
    let dec = h.clone().svd(false, true);
    let vt = dec.v_t.unwrap();
    let mut idx: Vec<usize> = (0..dec.singular_values.len()).collect();
    idx.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let cols: Vec<_> = idx[..l].iter().map(|&i| vt.row(i).adjoint()).collect();
    CMatrix::from_columns(&cols)
}

/// `(subcarrier, rank)` of the best normalized SVD precoder, scanning
/// subcarriers in the outer loop.
pub fn brute_force_svd(slice: &ChannelSlice, noise: f64, max_rank: usize) -> (usize, usize) {
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for k in 0..slice.num_subcarriers() {
        let h = slice.matrix(k);
        for l in 1..=max_rank {
            let w = right_singular(&h, l) / C64::new((l as f64).sqrt(), 0.0);
            let mi = slice_mi(slice, &w, noise);
            if mi > best.1 {
                best = ((k, l), mi);
            }
        }
    }
    best.0
}

/// Default scene with `t` samples and `k` subcarriers.
pub fn desk_dataset(seed: u64, t: usize, k: usize) -> ChannelDataset {
    let scene = SceneConfig::default();
    let q = scene.num_locations();
    generate_dataset(&scene, seed, Extents { t, k, q }).unwrap()
}

/// `n` distinct-ish random `(t, q)` slots of a dataset.
pub fn random_slots(ds: &ChannelDataset, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = ds.extents();
    (0..n).map(|_| (rng.random_range(0..e.t), rng.random_range(0..e.q))).collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) / C64::new(2f64.sqrt(), 0.0)
    })
}
