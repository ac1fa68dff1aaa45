//! Link abstraction: MMSE equalization, per-layer SINR, MIESM effective
//! SINR, and the logistic BLER / CQI / throughput model.

mod bicm;

pub use bicm::{
    bicm_capacity, bicm_capacity_exact, bicm_capacity_inverse, bicm_table, gauss_hermite, BicmTable,
    SUPPORTED_ORDERS,
};

use std::io::Read;

use crate::channel::ChannelSlice;
use crate::error::{invalid, Error, Result};
use crate::linalg::{solve_in_place, to_row_major, CMatrix};
use crate::selection::TransmissionParams;
use crate::C64;

/// Largest receive-antenna count handled by the stack kernels.
pub const MAX_RX: usize = 8;
/// Target block error rate that bounds CQI selection.
pub const BLER_TARGET: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqiEntry {
    pub cqi: u8,
    pub modulation_order: u32,
    /// Spectral efficiency in bits per resource element.
    pub efficiency: f64,
}

/// CQI levels `1..=15` in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct CqiTable {
    entries: Vec<CqiEntry>,
}

impl Default for CqiTable {
    /// The 64QAM CQI table of NR.
    fn default() -> Self {
        const ROWS: [(u32, f64); 15] = [
            (2, 0.1523),
            (2, 0.2344),
            (2, 0.3770),
            (2, 0.6016),
            (2, 0.8770),
            (2, 1.1758),
            (4, 1.4766),
            (4, 1.9141),
            (4, 2.4063),
            (6, 2.7305),
            (6, 3.3223),
            (6, 3.9023),
            (6, 4.5234),
            (6, 5.1152),
            (6, 5.5547),
        ];
        let entries = ROWS
            .iter()
            .enumerate()
            .map(|(i, &(m, e))| CqiEntry { cqi: i as u8 + 1, modulation_order: m, efficiency: e })
            .collect();
        Self { entries }
    }
}

impl CqiTable {
    pub fn new(entries: Vec<CqiEntry>) -> Result<Self> {
        if entries.len() != 15 {
            return Err(invalid(format!("CQI table needs 15 rows, got {}", entries.len())));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.cqi as usize != i + 1 {
                return Err(invalid("CQI table rows must be 1..15 in order"));
            }
            if !SUPPORTED_ORDERS.contains(&e.modulation_order) {
                return Err(invalid(format!("CQI {}: unsupported modulation order", e.cqi)));
            }
            if !(e.efficiency > 0.0) {
                return Err(invalid(format!("CQI {}: efficiency must be positive", e.cqi)));
            }
        }
        if entries.windows(2).any(|w| w[1].efficiency <= w[0].efficiency) {
            return Err(invalid("CQI efficiencies must increase strictly"));
        }
        Ok(Self { entries })
    }

    /// Reads `cqi, modulation_order, efficiency` rows with a header line.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut entries = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::Format(format!("CQI row has {} fields", rec.len())))
            };
            let parse_err = |e: &dyn std::fmt::Display| Error::Format(format!("CQI table: {e}"));
            entries.push(CqiEntry {
                cqi: field(0)?.parse().map_err(|e| parse_err(&e))?,
                modulation_order: field(1)?.parse().map_err(|e| parse_err(&e))?,
                efficiency: field(2)?.parse().map_err(|e| parse_err(&e))?,
            });
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[CqiEntry] {
        &self.entries
    }

    pub fn get(&self, cqi: u8) -> Result<&CqiEntry> {
        if !(1..=15).contains(&cqi) {
            return Err(invalid(format!("CQI {cqi} outside 1..15")));
        }
        Ok(&self.entries[cqi as usize - 1])
    }
}

/// How the per-layer SINR ratio treats magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinrForm {
    /// Power ratio with squared magnitudes.
    #[default]
    Squared,
    /// Ratio of plain magnitudes.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub noise_variance: f64,
    /// MIESM adjustment factor.
    pub alpha: f64,
    /// Logistic BLER slope per dB.
    pub bler_slope: f64,
    pub snr_gap_db: f64,
    /// Resource elements per TTI.
    pub n_re: usize,
    pub cqi_table: CqiTable,
    pub sinr_form: SinrForm,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            noise_variance: 1e-3,
            alpha: 1.0,
            bler_slope: 2.0,
            snr_gap_db: 2.0,
            n_re: 72 * 12,
            cqi_table: CqiTable::default(),
            sinr_form: SinrForm::Squared,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance > 0.0) {
            return Err(invalid("noise variance must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(invalid("alpha must be positive"));
        }
        if !(self.bler_slope > 0.0) {
            return Err(invalid("BLER slope must be positive"));
        }
        Ok(())
    }

    /// SINR in dB at which CQI `cqi` reaches 50 % BLER.
    pub fn threshold_db(&self, cqi: u8) -> Result<f64> {
        let eta = self.cqi_table.get(cqi)?.efficiency;
        Ok(10.0 * (2f64.powf(eta) - 1.0).log10() + self.snr_gap_db)
    }
}

/// `E = (WᴴHᴴHW + σ²I)⁻¹ WᴴHᴴ`, shape `L × N_rx`.
pub fn mmse_equalizer(h: &CMatrix, w: &CMatrix, noise_variance: f64) -> Result<CMatrix> {
    if h.ncols() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "H is {}×{}, W is {}×{}",
            h.nrows(),
            h.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    if !(noise_variance > 0.0) {
        return Err(invalid("noise variance must be positive"));
    }
    let hw = h * w;
    let l = w.ncols();
    let gram = hw.adjoint() * &hw + CMatrix::identity(l, l) * C64::new(noise_variance, 0.0);
    gram.lu()
        .solve(&hw.adjoint())
        .filter(|e| crate::linalg::all_finite(e))
        .ok_or_else(|| Error::Numerical("singular regularized Gram matrix".into()))
}

/// Per-layer SINR after equalization with `E`. The noise term sums over all
/// `N_rx` entries of each row of `E`.
pub fn sinr_per_layer(h: &CMatrix, w: &CMatrix, e: &CMatrix, noise_variance: f64) -> Result<Vec<f64>> {
    sinr_per_layer_with(h, w, e, noise_variance, SinrForm::Squared)
}

pub fn sinr_per_layer_with(
    h: &CMatrix,
    w: &CMatrix,
    e: &CMatrix,
    noise_variance: f64,
    form: SinrForm,
) -> Result<Vec<f64>> {
    if e.ncols() != h.nrows() || e.nrows() != w.ncols() || h.ncols() != w.nrows() {
        return Err(Error::DimensionMismatch("E·H·W is not computable".into()));
    }
    let g = e * h * w;
    let mag = |z: C64| match form {
        SinrForm::Squared => z.norm_sqr(),
        SinrForm::Literal => z.norm(),
    };
    let l = w.ncols();
    let mut out = Vec::with_capacity(l);
    for row in 0..l {
        let interf: f64 = (0..l).filter(|&i| i != row).map(|i| mag(g[(row, i)])).sum();
        let noise: f64 = (0..e.ncols()).map(|i| mag(e[(row, i)])).sum::<f64>() * noise_variance;
        let den = interf + noise;
        if !(den > 0.0) {
            return Err(Error::Numerical("zero SINR denominator".into()));
        }
        out.push(mag(g[(row, row)]) / den);
    }
    Ok(out)
}

/// Allocation-free MMSE SINR for `HW` given row-major (`n_rx × l`).
/// Writes `l` SINRs into `out`; returns `false` on a singular system.
pub(crate) fn sinr_from_hw(hw: &[C64], n_rx: usize, l: usize, noise: f64, form: SinrForm, out: &mut [f64]) -> bool {
    debug_assert!(n_rx <= MAX_RX && l <= crate::codebook::MAX_LAYERS);
    let zero = C64::new(0.0, 0.0);
    // A = (HW)ᴴ(HW) + σ²I and B = (HW)ᴴ, both row-major.
    let mut a = [zero; 16];
    let mut b = [zero; 4 * MAX_RX];
    for i in 0..l {
        for j in i..l {
            let mut s = zero;
            for r in 0..n_rx {
                s += hw[r * l + i].conj() * hw[r * l + j];
            }
            a[i * l + j] = s;
            a[j * l + i] = s.conj();
        }
        a[i * l + i] += C64::new(noise, 0.0);
        for r in 0..n_rx {
            b[i * n_rx + r] = hw[r * l + i].conj();
        }
    }
    if !solve_in_place(&mut a[..l * l], &mut b[..l * n_rx], l, n_rx) {
        return false;
    }
    let e = &b;
    for row in 0..l {
        let mut sig = 0.0;
        let mut interf = 0.0;
        for col in 0..l {
            let mut g = zero;
            for r in 0..n_rx {
                g += e[row * n_rx + r] * hw[r * l + col];
            }
            let m = match form {
                SinrForm::Squared => g.norm_sqr(),
                SinrForm::Literal => g.norm(),
            };
            if col == row {
                sig = m;
            } else {
                interf += m;
            }
        }
        let en: f64 = (0..n_rx)
            .map(|r| match form {
                SinrForm::Squared => e[row * n_rx + r].norm_sqr(),
                SinrForm::Literal => e[row * n_rx + r].norm(),
            })
            .sum();
        let den = interf + noise * en;
        if !(den > 0.0) || !sig.is_finite() {
            return false;
        }
        out[row] = sig / den;
    }
    true
}

/// Per-subcarrier, per-layer SINRs of precoder `w` over a slice, flattened
/// as `k·L + ℓ`.
pub fn slice_sinrs(slice: &ChannelSlice, w: &CMatrix, cfg: &LinkConfig) -> Result<Vec<f64>> {
    let (n_rx, n_tx, l) = (slice.n_rx, slice.n_tx, w.ncols());
    if w.nrows() != n_tx {
        return Err(Error::DimensionMismatch(format!("W has {} rows for {n_tx} ports", w.nrows())));
    }
    if n_rx > MAX_RX || l > crate::codebook::MAX_LAYERS || l == 0 {
        return Err(invalid(format!("unsupported shape: {n_rx} receive antennas, {l} layers")));
    }
    let w_rm = to_row_major(w);
    let k_count = slice.num_subcarriers();
    let mut out = vec![0.0; k_count * l];
    let mut hw = vec![C64::new(0.0, 0.0); n_rx * l];
    for k in 0..k_count {
        let h = slice.block(k);
        for r in 0..n_rx {
            for c in 0..l {
                let mut s = C64::new(0.0, 0.0);
                for i in 0..n_tx {
                    s += h[r * n_tx + i] * w_rm[i * l + c];
                }
                hw[r * l + c] = s;
            }
        }
        if !sinr_from_hw(&hw, n_rx, l, cfg.noise_variance, cfg.sinr_form, &mut out[k * l..(k + 1) * l]) {
            return Err(Error::Numerical(format!("singular MMSE system on subcarrier {k}")));
        }
    }
    Ok(out)
}

/// Per-layer SINRs, effective SINR and equivalent channels of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    /// Indexed `[k][ℓ]`.
    pub per_layer: Vec<Vec<f64>>,
    pub effective: f64,
    pub equivalent: Vec<CMatrix>,
}

/// Full-precision report using the nalgebra route (for inspection and tests).
pub fn sinr_report(slice: &ChannelSlice, w: &CMatrix, cfg: &LinkConfig, m: u32) -> Result<SinrReport> {
    let mut per_layer = Vec::new();
    let mut equivalent = Vec::new();
    for k in 0..slice.num_subcarriers() {
        let h = slice.matrix(k);
        let e = mmse_equalizer(&h, w, cfg.noise_variance)?;
        per_layer.push(sinr_per_layer_with(&h, w, &e, cfg.noise_variance, cfg.sinr_form)?);
        equivalent.push(&e * &h * w);
    }
    let flat: Vec<f64> = per_layer.iter().flatten().copied().collect();
    let effective = effective_sinr(&flat, cfg.alpha, m)?;
    Ok(SinrReport { per_layer, effective, equivalent })
}

/// MIESM: `α·f⁻¹(mean f(SINR/α))` with `f` the BICM capacity of order `m`.
pub fn effective_sinr(sinrs: &[f64], alpha: f64, m: u32) -> Result<f64> {
    if sinrs.is_empty() {
        return Err(Error::Empty("SINR set"));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let table = bicm_table(m)?;
    let mean = sinrs.iter().map(|s| table.capacity(s / alpha)).sum::<f64>() / sinrs.len() as f64;
    Ok(alpha * table.inverse(mean))
}

/// Logistic BLER in dB around the CQI threshold.
pub fn bler(eff_sinr: f64, cqi: u8, cfg: &LinkConfig) -> Result<f64> {
    let thr = cfg.threshold_db(cqi)?;
    let db = if eff_sinr > 0.0 { 10.0 * eff_sinr.log10() } else { f64::NEG_INFINITY };
    Ok(1.0 / (1.0 + (cfg.bler_slope * (db - thr)).exp()))
}

/// Largest CQI whose BLER stays within the target, or 1 when none does.
pub fn cqi_from_sinr(eff_sinr: f64, cfg: &LinkConfig) -> u8 {
    (1..=15u8)
        .rev()
        .find(|&c| bler(eff_sinr, c, cfg).map(|b| b <= BLER_TARGET).unwrap_or(false))
        .unwrap_or(1)
}

/// CQI for a set of per-layer SINRs, evaluating each level's effective SINR
/// with that level's own modulation.
pub fn select_cqi(sinrs: &[f64], cfg: &LinkConfig) -> Result<u8> {
    let mut eff = [0.0f64; 3];
    for (slot, &m) in SUPPORTED_ORDERS.iter().enumerate() {
        eff[slot] = effective_sinr(sinrs, cfg.alpha, m)?;
    }
    for c in (1..=15u8).rev() {
        let m = cfg.cqi_table.get(c)?.modulation_order;
        if bler(eff[(m / 2 - 1) as usize], c, cfg)? <= BLER_TARGET {
            return Ok(c);
        }
    }
    Ok(1)
}

/// Throughput in bits per TTI from per-layer SINRs of a rank-`l` precoder.
pub fn throughput_from_sinrs(sinrs: &[f64], rank: usize, cqi: u8, cfg: &LinkConfig) -> Result<f64> {
    let entry = cfg.cqi_table.get(cqi)?;
    let eff = effective_sinr(sinrs, cfg.alpha, entry.modulation_order)?;
    let p = bler(eff, cqi, cfg)?;
    Ok(cfg.n_re as f64 * entry.efficiency * rank as f64 * (1.0 - p))
}

/// `N_RE · η(CQI) · L · (1 − BLER)` for fixed parameters over one slice.
pub fn throughput(slice: &ChannelSlice, params: &TransmissionParams, cfg: &LinkConfig) -> Result<f64> {
    if params.w.ncols() != params.rank {
        return Err(invalid(format!(
            "precoder has {} columns but rank is {}",
            params.w.ncols(),
            params.rank
        )));
    }
    let sinrs = slice_sinrs(slice, &params.w, cfg)?;
    throughput_from_sinrs(&sinrs, params.rank, params.cqi, cfg)
}
