//! Channel tensor `H[t][k][q]`: generation, persistence and grid split.
//!
//! The generator is a geometric multipath model. Every location sees a
//! line-of-sight path plus `n_paths - 1` single-bounce clusters off fixed
//! scatterers. Angles follow from geometry, so they vary smoothly with the
//! user position. The LoS term is static in time while the scattered
//! sub-rays get a per-sample phase jitter, which yields Rician small-scale
//! fading around a fixed geometry.

mod io;
mod split;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use split::{split_grid, GridShape, GridSplit};

use std::f64::consts::PI;

use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::CMatrix;
use crate::C64;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A user location on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub q: u32,
    pub coords: [f64; 3],
}

impl Location {
    pub fn distance(&self, other: &Location) -> f64 {
        dist3(&self.coords, &other.coords)
    }

    pub fn distance_to(&self, p: &[f64; 3]) -> f64 {
        dist3(&self.coords, p)
    }
}

pub(crate) fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Tensor extents along the time, subcarrier and location axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extents {
    pub t: usize,
    pub k: usize,
    pub q: usize,
}

/// Scene and generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub spacing_m: f64,
    /// `(x, y)` of the grid location at row 0, column 0.
    pub grid_origin_m: [f64; 2],
    pub ue_height_m: f64,
    pub bs_position_m: [f64; 3],
    pub n_rx: usize,
    /// Horizontal ports per polarization.
    pub n1: usize,
    /// Vertical ports per polarization.
    pub n2: usize,
    pub n_tx: usize,
    /// Number of multipath components, LoS included.
    pub n_paths: usize,
    /// Sub-rays per scattered cluster.
    pub subrays: usize,
    pub angular_spread_deg: f64,
    /// LoS to total scattered power ratio.
    pub rician_k_db: f64,
    /// Per-sample phase jitter of scattered sub-rays, as a fraction of a full
    /// uniform phase draw. 0 freezes the channel in time, 1 is i.i.d.
    pub jitter: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub shadowing_db: f64,
    pub shadowing_scale_m: f64,
    pub noise_variance: f64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            grid_rows: 30,
            grid_cols: 12,
            spacing_m: 4.0,
            grid_origin_m: [-22.0, 15.0],
            ue_height_m: 2.0,
            bs_position_m: [0.0, 0.0, 6.0],
            n_rx: 4,
            n1: 8,
            n2: 1,
            n_tx: 16,
            n_paths: 5,
            subrays: 4,
            angular_spread_deg: 2.0,
            rician_k_db: 3.0,
            jitter: 0.7,
            path_loss_exponent: 3.0,
            reference_distance_m: 10.0,
            shadowing_db: 4.0,
            shadowing_scale_m: 30.0,
            noise_variance: 1e-3,
            carrier_hz: 3.5e9,
            subcarrier_spacing_hz: 15e3,
        }
    }
}

impl SceneConfig {
    pub fn num_locations(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx != 2 * self.n1 * self.n2 {
            return Err(invalid(format!(
                "inconsistent antenna geometry: n_tx = {} but 2·n1·n2 = {}",
                self.n_tx,
                2 * self.n1 * self.n2
            )));
        }
        if self.n_rx == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(invalid("antenna counts must be positive"));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths must be at least 1"));
        }
        if self.subrays == 0 {
            return Err(invalid("subrays must be at least 1"));
        }
        if !(self.spacing_m > 0.0) {
            return Err(invalid("grid spacing must be positive"));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(invalid("grid must have at least one row and column"));
        }
        if !(self.noise_variance > 0.0) {
            return Err(invalid("noise variance must be positive"));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(invalid("jitter must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Grid locations in row-major order (`q = row·cols + col`).
    pub fn locations(&self) -> Vec<Location> {
        let mut out = Vec::with_capacity(self.num_locations());
        for r in 0..self.grid_rows {
            for c in 0..self.grid_cols {
                out.push(Location {
                    q: (r * self.grid_cols + c) as u32,
                    coords: [
                        self.grid_origin_m[0] + c as f64 * self.spacing_m,
                        self.grid_origin_m[1] + r as f64 * self.spacing_m,
                        self.ue_height_m,
                    ],
                });
            }
        }
        out
    }
}

/// Immutable channel tensor with its geometry header.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub(crate) t: usize,
    pub(crate) k: usize,
    pub(crate) q: usize,
    pub(crate) n_rx: usize,
    pub(crate) n_tx: usize,
    pub(crate) carrier_hz: f64,
    pub(crate) subcarrier_spacing_hz: f64,
    pub(crate) seed: u64,
    pub(crate) locations: Vec<Location>,
    /// Index order: t, k, q, receive row, transmit column.
    pub(crate) tensor: Vec<Complex32>,
}

impl ChannelDataset {
    /// Assembles a dataset from raw parts, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        extents: Extents,
        n_rx: usize,
        n_tx: usize,
        carrier_hz: f64,
        subcarrier_spacing_hz: f64,
        seed: u64,
        locations: Vec<Location>,
        tensor: Vec<Complex32>,
    ) -> Result<Self> {
        if extents.t == 0 || extents.k == 0 || extents.q == 0 {
            return Err(invalid("extents must be positive"));
        }
        if locations.len() != extents.q {
            return Err(invalid(format!(
                "{} locations for Q = {}",
                locations.len(),
                extents.q
            )));
        }
        let expected = extents.t * extents.k * extents.q * n_rx * n_tx;
        if tensor.len() != expected {
            return Err(invalid(format!("tensor holds {} entries, expected {expected}", tensor.len())));
        }
        if tensor.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("tensor contains non-finite entries"));
        }
        if locations.iter().any(|l| l.coords.iter().any(|c| !c.is_finite())) {
            return Err(invalid("location coordinates must be finite"));
        }
        let mut seen = std::collections::HashSet::new();
        if !locations.iter().all(|l| seen.insert(l.q)) {
            return Err(invalid("location indices must be unique"));
        }
        Ok(Self {
            t: extents.t,
            k: extents.k,
            q: extents.q,
            n_rx,
            n_tx,
            carrier_hz,
            subcarrier_spacing_hz,
            seed,
            locations,
            tensor,
        })
    }

    pub fn extents(&self) -> Extents {
        Extents { t: self.t, k: self.k, q: self.q }
    }
    pub fn n_rx(&self) -> usize {
        self.n_rx
    }
    pub fn n_tx(&self) -> usize {
        self.n_tx
    }
    /// Maximum number of layers, `min(N_rx, N_tx)`.
    pub fn max_layers(&self) -> usize {
        self.n_rx.min(self.n_tx)
    }
    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }
    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.subcarrier_spacing_hz
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn locations(&self) -> &[Location] {
        &self.locations
    }
    pub fn tensor(&self) -> &[Complex32] {
        &self.tensor
    }

    fn offset(&self, t: usize, k: usize, q: usize) -> usize {
        assert!(t < self.t && k < self.k && q < self.q, "index ({t},{k},{q}) out of range");
        ((t * self.k + k) * self.q + q) * self.n_rx * self.n_tx
    }

    /// Raw single-precision entries of `H[t][k][q]`, row-major.
    pub fn raw(&self, t: usize, k: usize, q: usize) -> &[Complex32] {
        let o = self.offset(t, k, q);
        &self.tensor[o..o + self.n_rx * self.n_tx]
    }

    /// `H[t][k][q]` as a double-precision matrix.
    pub fn matrix(&self, t: usize, k: usize, q: usize) -> CMatrix {
        let raw = self.raw(t, k, q);
        CMatrix::from_fn(self.n_rx, self.n_tx, |r, c| {
            let z = raw[r * self.n_tx + c];
            C64::new(z.re as f64, z.im as f64)
        })
    }

    /// The `K` matrices of one time sample at one location.
    pub fn slice(&self, t: usize, q: usize) -> ChannelSlice {
        let per = self.n_rx * self.n_tx;
        let mut data = Vec::with_capacity(self.k * per);
        for k in 0..self.k {
            data.extend(self.raw(t, k, q).iter().map(|z| C64::new(z.re as f64, z.im as f64)));
        }
        ChannelSlice { n_rx: self.n_rx, n_tx: self.n_tx, data }
    }
}

/// The `K` per-subcarrier channel matrices `H_{t,·,q}` in row-major blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSlice {
    pub n_rx: usize,
    pub n_tx: usize,
    pub data: Vec<C64>,
}

impl ChannelSlice {
    pub fn from_matrices(mats: &[CMatrix]) -> Result<Self> {
        let first = mats.first().ok_or(crate::Error::Empty("channel slice"))?;
        let (n_rx, n_tx) = (first.nrows(), first.ncols());
        let mut data = Vec::with_capacity(mats.len() * n_rx * n_tx);
        for m in mats {
            if m.nrows() != n_rx || m.ncols() != n_tx {
                return Err(crate::Error::DimensionMismatch("slice matrices differ in shape".into()));
            }
            data.extend(crate::linalg::to_row_major(m));
        }
        Ok(Self { n_rx, n_tx, data })
    }

    pub fn num_subcarriers(&self) -> usize {
        self.data.len() / (self.n_rx * self.n_tx)
    }

    /// Row-major entries of subcarrier `k`.
    pub fn block(&self, k: usize) -> &[C64] {
        let per = self.n_rx * self.n_tx;
        &self.data[k * per..(k + 1) * per]
    }

    pub fn matrix(&self, k: usize) -> CMatrix {
        crate::linalg::from_row_major(self.n_rx, self.n_tx, self.block(k))
    }
}

struct Scatterer {
    position: [f64; 3],
    reflection: f64,
    /// Per sub-ray direction-cosine offsets at the BS (x, z) and at the UE.
    tx_offsets: Vec<[f64; 2]>,
    rx_offsets: Vec<f64>,
    phases: Vec<f64>,
    pol_phases: Vec<f64>,
}

struct ShadowWave {
    wavenumber: [f64; 2],
    phase: f64,
}

/// One rank-one ray at a fixed location: `gain · r · tᵀ`.
struct Ray {
    outer: Vec<C64>,
    amplitude: f64,
    phase: f64,
    delay_s: f64,
    jittered: bool,
}

/// Derived per-location seed so locations can be generated independently.
fn location_seed(seed: u64, q: usize) -> u64 {
    let mut z = seed ^ (q as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Transmit response: ports ordered polarization-major, then horizontal
/// index, then vertical index, matching the codebook's `a1 ⊗ a2` layout.
fn tx_response(cfg: &SceneConfig, ux: f64, uz: f64, pol: C64) -> Vec<C64> {
    let mut t = Vec::with_capacity(cfg.n_tx);
    for p in 0..2 {
        let c = if p == 0 { C64::new(1.0, 0.0) } else { pol };
        for n1 in 0..cfg.n1 {
            for n2 in 0..cfg.n2 {
                let ph = -PI * (n1 as f64 * ux + n2 as f64 * uz);
                t.push(c * C64::from_polar(1.0, ph));
            }
        }
    }
    t
}

fn rx_response(cfg: &SceneConfig, vx: f64) -> Vec<C64> {
    (0..cfg.n_rx).map(|m| C64::from_polar(1.0, -PI * m as f64 * vx)).collect()
}

fn outer(r: &[C64], t: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(r.len() * t.len());
    for a in r {
        for b in t {
            out.push(a * b);
        }
    }
    out
}

/// Generates a dataset deterministically from `(cfg, seed, extents)`.
///
/// `extents.q` must equal the grid size of `cfg`.
pub fn generate_dataset(cfg: &SceneConfig, seed: u64, extents: Extents) -> Result<ChannelDataset> {
    cfg.validate()?;
    if extents.t == 0 || extents.k == 0 || extents.q == 0 {
        return Err(invalid("extents must be positive"));
    }
    if extents.q != cfg.num_locations() {
        return Err(invalid(format!(
            "Q = {} does not match the {}×{} grid",
            extents.q, cfg.grid_rows, cfg.grid_cols
        )));
    }

    let locations = cfg.locations();
    let mut scene_rng = ChaCha8Rng::seed_from_u64(seed);
    let scatterers = place_scatterers(cfg, &locations, &mut scene_rng);
    let waves: Vec<ShadowWave> = (0..8)
        .map(|_| {
            let dir = scene_rng.random_range(0.0..2.0 * PI);
            let kmag = 2.0 * PI / (cfg.shadowing_scale_m * scene_rng.random_range(0.7..1.5));
            ShadowWave {
                wavenumber: [kmag * dir.cos(), kmag * dir.sin()],
                phase: scene_rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect();
    let los_pol_offset = scene_rng.random_range(0.0..2.0 * PI);

    let per = cfg.n_rx * cfg.n_tx;
    let block_len = extents.t * extents.k * per;
    let gen_location = |q: usize| -> Vec<Complex32> {
        let rays = location_rays(cfg, &locations[q], &scatterers, &waves, los_pol_offset);
        let mut rng = ChaCha8Rng::seed_from_u64(location_seed(seed, q));
        let mut out = vec![Complex32::new(0.0, 0.0); block_len];
        let mut acc = vec![C64::new(0.0, 0.0); per];
        let mut jitter = vec![0.0; rays.len()];
        for t in 0..extents.t {
            for (j, ray) in jitter.iter_mut().zip(&rays) {
                *j = if ray.jittered { cfg.jitter * rng.random_range(-PI..PI) } else { 0.0 };
            }
            for k in 0..extents.k {
                let fk = (k as f64 - (extents.k as f64 - 1.0) / 2.0) * cfg.subcarrier_spacing_hz;
                acc.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                for (ray, j) in rays.iter().zip(&jitter) {
                    let g = C64::from_polar(ray.amplitude, ray.phase + j - 2.0 * PI * fk * ray.delay_s);
                    for (a, o) in acc.iter_mut().zip(&ray.outer) {
                        *a += g * o;
                    }
                }
                let base = (t * extents.k + k) * per;
                for (dst, z) in out[base..base + per].iter_mut().zip(&acc) {
                    *dst = Complex32::new(z.re as f32, z.im as f32);
                }
            }
        }
        out
    };

    #[cfg(feature = "parallel")]
    let blocks: Vec<Vec<Complex32>> = {
        use rayon::prelude::*;
        (0..extents.q).into_par_iter().map(gen_location).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let blocks: Vec<Vec<Complex32>> = (0..extents.q).map(gen_location).collect();

    // Re-interleave from location-major blocks into t, k, q order.
    let mut tensor = vec![Complex32::new(0.0, 0.0); extents.t * extents.k * extents.q * per];
    for (q, block) in blocks.iter().enumerate() {
        for tk in 0..extents.t * extents.k {
            let dst = (tk * extents.q + q) * per;
            tensor[dst..dst + per].copy_from_slice(&block[tk * per..(tk + 1) * per]);
        }
    }

    ChannelDataset::from_parts(
        extents,
        cfg.n_rx,
        cfg.n_tx,
        cfg.carrier_hz,
        cfg.subcarrier_spacing_hz,
        seed,
        locations,
        tensor,
    )
}

fn place_scatterers(cfg: &SceneConfig, locations: &[Location], rng: &mut ChaCha8Rng) -> Vec<Scatterer> {
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for l in locations {
        xmin = xmin.min(l.coords[0]);
        xmax = xmax.max(l.coords[0]);
        ymin = ymin.min(l.coords[1]);
        ymax = ymax.max(l.coords[1]);
    }
    let margin = 30.0;
    let spread = cfg.angular_spread_deg.to_radians().sin();
    (1..cfg.n_paths)
        .map(|_| {
            // Alternate flanks so clusters arrive from distinct directions.
            let x = rng.random_range(xmin - margin..xmax + margin);
            let y = rng.random_range(ymin.min(cfg.bs_position_m[1] + 5.0)..ymax + margin);
            let z = rng.random_range(1.0..20.0);
            Scatterer {
                position: [x, y, z],
                reflection: rng.random_range(0.4..1.0),
                tx_offsets: (0..cfg.subrays)
                    .map(|_| [rng.random_range(-spread..spread), rng.random_range(-spread..spread)])
                    .collect(),
                rx_offsets: (0..cfg.subrays).map(|_| rng.random_range(-4.0 * spread..4.0 * spread)).collect(),
                phases: (0..cfg.subrays).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
                pol_phases: (0..cfg.subrays).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
            }
        })
        .collect()
}

fn location_rays(
    cfg: &SceneConfig,
    loc: &Location,
    scatterers: &[Scatterer],
    waves: &[ShadowWave],
    los_pol_offset: f64,
) -> Vec<Ray> {
    let bs = cfg.bs_position_m;
    let ue = loc.coords;
    let shadow_db: f64 = cfg.shadowing_db
        * (2.0 / waves.len() as f64).sqrt()
        * waves
            .iter()
            .map(|w| (w.wavenumber[0] * ue[0] + w.wavenumber[1] * ue[1] + w.phase).cos())
            .sum::<f64>();
    let shadow = 10f64.powf(shadow_db / 20.0);
    let amp = |len: f64| (len / cfg.reference_distance_m).powf(-cfg.path_loss_exponent / 2.0);
    let wavelength_phase = |len: f64| -2.0 * PI * cfg.carrier_hz * len / SPEED_OF_LIGHT;

    let mut rays = Vec::new();
    let los_len = dist3(&ue, &bs);
    let u = unit(sub(&ue, &bs));
    let los_amp = shadow * amp(los_len);
    let pol = C64::from_polar(1.0, los_pol_offset + 1.5 * PI * u[0]);
    rays.push(Ray {
        outer: outer(&rx_response(cfg, -u[0]), &tx_response(cfg, u[0], u[2], pol)),
        amplitude: los_amp,
        phase: wavelength_phase(los_len),
        delay_s: los_len / SPEED_OF_LIGHT,
        jittered: false,
    });

    if scatterers.is_empty() {
        return rays;
    }
    let natural: Vec<f64> = scatterers
        .iter()
        .map(|s| {
            let len = dist3(&bs, &s.position) + dist3(&s.position, &ue);
            (s.reflection * amp(len)).powi(2)
        })
        .collect();
    let total: f64 = natural.iter().sum();
    let k_lin = 10f64.powf(cfg.rician_k_db / 10.0);
    let nlos_total = los_amp * los_amp / k_lin;
    for (s, p) in scatterers.iter().zip(&natural) {
        let len = dist3(&bs, &s.position) + dist3(&s.position, &ue);
        let u_tx = unit(sub(&s.position, &bs));
        let v_rx = unit(sub(&s.position, &ue));
        let cluster_amp = (nlos_total * p / total).sqrt();
        let ray_amp = cluster_amp / (cfg.subrays as f64).sqrt();
        for r in 0..cfg.subrays {
            let ux = (u_tx[0] + s.tx_offsets[r][0]).clamp(-1.0, 1.0);
            let uz = (u_tx[2] + s.tx_offsets[r][1]).clamp(-1.0, 1.0);
            let vx = (v_rx[0] + s.rx_offsets[r]).clamp(-1.0, 1.0);
            let pol = C64::from_polar(1.0, s.pol_phases[r]);
            rays.push(Ray {
                outer: outer(&rx_response(cfg, vx), &tx_response(cfg, ux, uz, pol)),
                amplitude: ray_amp,
                phase: wavelength_phase(len) + s.phases[r],
                delay_s: len / SPEED_OF_LIGHT,
                jittered: true,
            });
        }
    }
    rays
}
