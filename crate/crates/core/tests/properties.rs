//! Invariants of each module, checked over generated inputs.

mod common;

use fdmimo::channel::{generate_dataset, read_dataset, write_dataset, Extents, Location, SceneConfig};
use fdmimo::codebook::{build_codebook, BeamConfig};
use fdmimo::harness::MetricsReport;
use fdmimo::linalg::{frobenius_norm, gram_deviation, numerical_rank, CMatrix};
use fdmimo::linkphy::{
    bicm_capacity, bicm_capacity_inverse, effective_sinr, mmse_equalizer, sinr_per_layer, LinkConfig,
};
use fdmimo::selection::{clsm_select, svd, svd_select, Provenance, TransmissionParams};
use fdmimo::spatial::{gpr_fit_fixed, infer_ri, read_gpr, write_gpr, Jitter, NaturalNeighbor, NniOutcome};
use fdmimo::statfix::{fix_codebook_params, nearest_neighbor_infer, CqiVariant, ParamHistory};
use fdmimo::vae::{fix_rank, kl_gaussian, orthogonalize, read_vae, write_vae, LatentGaussian, Vae, VaeConfig};
use fdmimo::C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

fn latent(dim: usize) -> impl Strategy<Value = LatentGaussian> {
    (prop::collection::vec(-3.0..3.0f64, dim), prop::collection::vec(-4.0..4.0f64, dim))
        .prop_map(|(mu, logvar)| LatentGaussian { mu, logvar })
}

fn small_scene() -> SceneConfig {
    SceneConfig { grid_rows: 3, grid_cols: 4, ..SceneConfig::default() }
}

// --- channel ---

#[test]
fn dataset_is_deterministic_and_finite() {
    let scene = small_scene();
    let e = Extents { t: 3, k: 4, q: 12 };
    let a = generate_dataset(&scene, 21, e).unwrap();
    let b = generate_dataset(&scene, 21, e).unwrap();
    assert_eq!(a, b);
    assert!(a.tensor().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    let c = generate_dataset(&scene, 22, e).unwrap();
    assert_ne!(a.tensor(), c.tensor());
}

#[test]
fn dataset_file_round_trips() {
    let ds = generate_dataset(&small_scene(), 4, Extents { t: 2, k: 3, q: 12 }).unwrap();
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).unwrap();
    assert_eq!(&buf[..8], b"FDMIMO01");
    assert_eq!(read_dataset(&mut buf.as_slice()).unwrap(), ds);
}

#[test]
fn nearby_locations_are_more_correlated_than_distant_ones() {
    let scene = SceneConfig::default();
    let ds = generate_dataset(&scene, 3, Extents { t: 1, k: 1, q: scene.num_locations() }).unwrap();
    let cols = scene.grid_cols;
    let vec_of = |q: usize| -> Vec<C64> { ds.raw(0, 0, q).iter().map(|z| C64::new(z.re as f64, z.im as f64)).collect() };
    let corr = |a: usize, b: usize| -> f64 {
        let (x, y) = (vec_of(a), vec_of(b));
        let ip: C64 = x.iter().zip(&y).map(|(u, v)| u.conj() * v).sum();
        let nx: f64 = x.iter().map(|u| u.norm_sqr()).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|u| u.norm_sqr()).sum::<f64>().sqrt();
        ip.norm() / (nx * ny)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    use rand::Rng;
    let (mut near, mut far) = (0.0, 0.0);
    let n = 150;
    for _ in 0..n {
        let r = rng.random_range(0..scene.grid_rows - 10);
        let c = rng.random_range(0..cols - 1);
        let q = r * cols + c;
        near += corr(q, q + 1);
        far += corr(q, q + 10 * cols);
    }
    assert!(near / n as f64 > far / n as f64, "adjacent {near} vs distant {far}");
}

// --- codebook ---

#[test]
fn every_codebook_entry_has_declared_rank_and_scaled_identity_gram() {
    let cb = build_codebook(&BeamConfig::new(8, 1, 4, 1), 4).unwrap();
    for (i, e) in cb.entries().iter().enumerate() {
        assert_eq!(e.pmi, i);
        assert_eq!(e.w.ncols(), e.rank);
        assert_eq!(numerical_rank(&e.w, 1e-9), e.rank);
        assert!((frobenius_norm(&e.w) - 1.0).abs() < 1e-12);
        assert!(gram_deviation(&e.w) < 1e-10, "pmi {i}");
    }
    let again = build_codebook(&BeamConfig::new(8, 1, 4, 1), 4).unwrap();
    assert!(cb.entries().iter().zip(again.entries()).all(|(a, b)| a == b));
}

// --- linkphy ---

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn more_noise_lowers_every_sinr(seed in 0u64..1000, l in 1usize..=4, noise in 1e-4..1.0f64, factor in 1.01..10.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = gaussian_matrix(4, 16, &mut rng);
        let w = orthogonalize(&gaussian_matrix(16, l, &mut rng)).unwrap();
        let e1 = mmse_equalizer(&h, &w, noise).unwrap();
        let e2 = mmse_equalizer(&h, &w, noise * factor).unwrap();
        let s1 = sinr_per_layer(&h, &w, &e1, noise).unwrap();
        let s2 = sinr_per_layer(&h, &w, &e2, noise * factor).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            prop_assert!(b < a && *b >= 0.0 && a.is_finite());
        }
    }

    #[test]
    fn miesm_of_constant_field_is_that_constant(frac in 0.0..1.0f64, n in 1usize..50, m in prop::sample::select(vec![2u32, 4, 6])) {
        // Below the dB point where each constellation saturates.
        let top = [0.0, 10.0, 0.0, 17.0, 0.0, 23.0][m as usize - 1];
        let s = 10f64.powf((-10.0 + frac * (top + 10.0)) / 10.0);
        prop_assume!(bicm_capacity(s, m).unwrap() < m as f64 - 1e-3);
        let eff = effective_sinr(&vec![s; n], 1.0, m).unwrap();
        prop_assert!((eff - s).abs() <= 1e-3 * s, "{} vs {}", eff, s);
    }

    #[test]
    fn capacity_inverse_round_trips(db in -20.0..30.0f64, m in prop::sample::select(vec![2u32, 4, 6])) {
        let s = 10f64.powf(db / 10.0);
        let c = bicm_capacity(s, m).unwrap();
        prop_assume!(c < m as f64 - 1e-6);
        let back = bicm_capacity_inverse(c, m).unwrap();
        prop_assert!(((back - s) / s).abs() < 1e-6, "{} vs {}", back, s);
    }

    #[test]
    fn svd_precoder_with_matched_receiver_has_no_interlayer_leakage(seed in 0u64..1000, l in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = gaussian_matrix(4, 16, &mut rng);
        let d = svd(&h).unwrap();
        let w = d.v_cols(l) / C64::new((l as f64).sqrt(), 0.0);
        let e = d.u.columns(0, l).adjoint();
        let g = e * &h * &w;
        let leak: f64 = (0..l).flat_map(|i| (0..l).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| g[(i, j)].norm_sqr()).sum();
        prop_assert!(leak < 1e-10);
    }
}

// --- selection ---

fn unit_params(p: &TransmissionParams) {
    assert!((frobenius_norm(&p.w) - 1.0).abs() < 1e-10);
    assert_eq!(numerical_rank(&p.w, 1e-9), p.rank);
    assert!((1..=15).contains(&p.cqi));
}

#[test]
fn svd_winner_beats_codebook_winner() {
    let ds = desk_dataset(31, 5, 4);
    let link = LinkConfig::default();
    let cb = build_codebook(&BeamConfig::new(8, 1, 4, 1), 4).unwrap();
    for (t, q) in random_slots(&ds, 50, 4) {
        let s = ds.slice(t, q);
        let c = clsm_select(&s, &cb, &link, t, q).unwrap();
        let v = svd_select(&s, &link, None, t, q).unwrap();
        unit_params(&c.params);
        unit_params(&v.params);
        assert!(v.sum_mi >= c.sum_mi, "slot ({t}, {q}): {} < {}", v.sum_mi, c.sum_mi);
    }
}

#[test]
fn constrained_svd_search_is_downward_compatible() {
    let ds = desk_dataset(32, 3, 4);
    let link = LinkConfig::default();
    for (t, q) in random_slots(&ds, 15, 5) {
        let s = ds.slice(t, q);
        let free = svd_select(&s, &link, None, t, q).unwrap();
        for r in 1..=free.params.rank {
            let p = svd_select(&s, &link, Some(r), t, q).unwrap().params;
            assert_eq!(p.rank, r);
            unit_params(&p);
        }
    }
}

// --- statfix ---

fn history() -> impl Strategy<Value = (Vec<usize>, Vec<u8>, Vec<u8>)> {
    (5usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..40, n),
            prop::collection::vec(1u8..=15, n),
            prop::collection::vec(1u8..=15, n),
        )
    })
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn fixed_codebook_params_ignore_history_order((pmi, cqi, cqi_fixed) in history(), rot in 0usize..30) {
        let cb = build_codebook(&BeamConfig::new(8, 1, 4, 1), 4).unwrap();
        let mk = |pmi: Vec<usize>, c: Vec<u8>, f: Vec<u8>| ParamHistory {
            q: 0,
            rank: vec![1; pmi.len()],
            pmi,
            cqi_clsm: c,
            cqi_fixed: Some(f),
        };
        let n = pmi.len();
        let r = rot % n;
        let rotated = |v: &[u8]| -> Vec<u8> { v[r..].iter().chain(&v[..r]).copied().collect() };
        let mut p2: Vec<usize> = pmi[r..].iter().chain(&pmi[..r]).copied().collect();
        p2.reverse();
        let mut c2 = rotated(&cqi);
        c2.reverse();
        let mut f2 = rotated(&cqi_fixed);
        f2.reverse();
        let a = mk(pmi, cqi, cqi_fixed);
        let b = mk(p2, c2, f2);
        for v in CqiVariant::ALL {
            let pa = fix_codebook_params(&a, v, &cb).unwrap();
            let pb = fix_codebook_params(&b, v, &cb).unwrap();
            prop_assert_eq!(&pa, &pb);
            prop_assert_eq!(pa.provenance, Provenance::Fixed);
            pa.validate().unwrap();
        }
    }
}

#[test]
fn nearest_neighbor_is_identity_on_training_locations() {
    let cb = build_codebook(&BeamConfig::new(8, 1, 4, 1), 4).unwrap();
    let locs = small_scene().locations();
    let map: Vec<(Location, TransmissionParams)> = locs
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let e = &cb.entries()[i * 17 % cb.len()];
            (*l, TransmissionParams { w: e.w.clone(), rank: e.rank, cqi: 3, provenance: Provenance::Fixed, pmi: Some(e.pmi) })
        })
        .collect();
    for (l, p) in &map {
        let got = nearest_neighbor_infer(&map, l).unwrap();
        assert_eq!((&got.w, got.rank, got.cqi, got.pmi), (&p.w, p.rank, p.cqi, p.pmi));
    }
}

// --- vae ---

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn kl_is_nonnegative_and_zero_only_for_equal_gaussians(a in latent(4), b in latent(4)) {
        let d = kl_gaussian(&a, &b).unwrap();
        prop_assert!(d >= -1e-12);
        prop_assert!(kl_gaussian(&a, &a).unwrap().abs() < 1e-12);
        if a != b {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn kl_to_standard_normal_is_half_squared_mean(mu in prop::collection::vec(-5.0..5.0f64, 1..8)) {
        let n = mu.len();
        let g = LatentGaussian { mu: mu.clone(), logvar: vec![0.0; n] };
        let prior = LatentGaussian { mu: vec![0.0; n], logvar: vec![0.0; n] };
        let want = 0.5 * mu.iter().map(|m| m * m).sum::<f64>();
        prop_assert!((kl_gaussian(&g, &prior).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn orthogonalized_precoders_have_scaled_identity_gram(seed in 0u64..1000, l in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = orthogonalize(&gaussian_matrix(16, l, &mut rng)).unwrap();
        prop_assert!((frobenius_norm(&w) - 1.0).abs() < 1e-10);
        prop_assert!(gram_deviation(&w) < 1e-10);
    }

    #[test]
    fn rank_fixing_partitions_all_locations(hist in prop::collection::vec(prop::collection::vec(1usize..=4, 1..20), 1..30), c in 1.0..100.0f64) {
        let h: Vec<(usize, Vec<usize>)> = hist.into_iter().enumerate().collect();
        let fixed = fix_rank(&h, c).unwrap();
        let mut covered: Vec<usize> = (1..=4).flat_map(|r| fixed.locations_of(r)).collect();
        covered.sort();
        prop_assert_eq!(covered, (0..h.len()).collect::<Vec<_>>());
    }
}

#[test]
fn rank_deficient_input_is_rejected() {
    let v = CMatrix::from_fn(16, 2, |i, _| C64::new(i as f64, 0.0));
    assert!(orthogonalize(&v).is_err());
}

#[test]
fn vae_model_file_round_trips() {
    let cfg = VaeConfig { hidden: (12, 6), latent_per_rank: 2, seed: 3, ..VaeConfig::default() };
    let m = Vae::new(2, 64, 0.7, &cfg).unwrap();
    let mut buf = Vec::new();
    write_vae(&m, &mut buf).unwrap();
    assert_eq!(read_vae(&mut buf.as_slice()).unwrap(), m);
}

// --- spatial ---

fn scattered(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0..50.0f64, 0.0..50.0f64).prop_map(|(x, y)| [x, y]), n)
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn sibson_weights_form_a_partition_with_linear_precision(
        pts in scattered(12),
        q in (10.0..40.0f64, 10.0..40.0f64),
        coef in (-3.0..3.0f64, -3.0..3.0f64, -10.0..10.0f64),
    ) {
        let Ok(nn) = NaturalNeighbor::new(&pts) else { return Ok(()) };
        let q = [q.0, q.1];
        let NniOutcome::Interior(w) = nn.weights(q) else { return Ok(()) };
        let sum: f64 = w.weights.iter().map(|p| p.1).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(w.weights.iter().all(|p| p.1 > 0.0 && p.1 <= 1.0));
        let f = |p: [f64; 2]| coef.0 * p[0] + coef.1 * p[1] + coef.2;
        let values: Vec<f64> = pts.iter().map(|p| f(*p)).collect();
        let got = nn.interpolate(&values, q).unwrap();
        prop_assert!((got - f(q)).abs() < 1e-6, "{} vs {}", got, f(q));
    }

    #[test]
    fn kernel_matrix_is_positive_definite_after_jitter(
        pts in prop::collection::vec((0.0..60.0f64, 0.0..60.0f64), 3..25),
        gamma in 0.1..5.0f64,
        zeta in 0.5..40.0f64,
    ) {
        let mut xs: Vec<[f64; 3]> = pts.iter().map(|p| [p.0, p.1, 2.0]).collect();
        xs.dedup();
        prop_assume!(xs.iter().enumerate().all(|(i, a)| xs[..i].iter().all(|b| b != a)));
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0].sin()]).collect();
        let m = gpr_fit_fixed(&xs, &ys, gamma, zeta, Jitter::Relative(1e-6)).unwrap();
        prop_assert!(m.min_pivot() > 0.0);
        let k01 = fdmimo::spatial::rbf_kernel(&xs[0], &xs[1], gamma, zeta).unwrap();
        let k10 = fdmimo::spatial::rbf_kernel(&xs[1], &xs[0], gamma, zeta).unwrap();
        prop_assert_eq!(k01, k10);
    }

    #[test]
    fn inferred_rank_never_exceeds_neighbor_ranks(
        ranks in prop::collection::vec(1usize..=4, 12),
        n_ri in 1usize..=6,
        qx in -30.0..30.0f64,
        qy in 10.0..40.0f64,
    ) {
        let locs = small_scene().locations();
        let train: Vec<(Location, usize)> = locs.into_iter().zip(ranks.iter().copied()).collect();
        let query = Location { q: 999, coords: [qx, qy, 2.0] };
        let r = infer_ri(&train, &query, n_ri).unwrap();
        prop_assert!(r <= *ranks.iter().max().unwrap());
        prop_assert!(r >= 1);
    }
}

#[test]
fn gpr_reproduces_training_outputs_with_negligible_jitter() {
    let xs: Vec<[f64; 3]> = (0..6).flat_map(|i| (0..4).map(move |j| [i as f64 * 4.0, j as f64 * 4.0, 2.0])).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(x[0] / 5.0).sin(), x[1] * 0.1 - 1.0, (x[0] * x[1]).cos()]).collect();
    let m = gpr_fit_fixed(&xs, &ys, 1.0, 3.0, Jitter::Absolute(1e-12)).unwrap();
    for (p, y) in m.predict(&xs).iter().zip(&ys) {
        for (a, b) in p.iter().zip(y) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
    let mut buf = Vec::new();
    write_gpr(&m, 2, &mut buf).unwrap();
    let (rank, back) = read_gpr(&mut buf.as_slice()).unwrap();
    assert_eq!(rank, 2);
    assert_eq!(back.predict(&xs), m.predict(&xs));
}

// --- harness ---

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn report_zero_list_matches_per_location_means(vals in prop::collection::vec(prop_oneof![Just(0.0), 0.0..2.0f64, 10.0..5000.0f64], 12)) {
        let locs = small_scene().locations();
        let r = MetricsReport::new("s", locs.clone(), vals.clone()).unwrap();
        let zeros: Vec<u32> = locs.iter().zip(&vals).filter(|(_, v)| **v < 1.0).map(|(l, _)| l.q).collect();
        prop_assert_eq!(&r.zero_locations, &zeros);
        let mut b = MetricsReport::new("b", locs, vals.iter().map(|v| v + 1.0).collect()).unwrap();
        b.compare_to(&r).unwrap();
        let want = (b.overall_mean - r.overall_mean) / r.overall_mean;
        prop_assert!((b.gap_ratio.unwrap() - want).abs() < 1e-12);
    }
}
