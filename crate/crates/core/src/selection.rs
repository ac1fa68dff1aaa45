//! Per-slot parameter selection: exhaustive codebook search (CLSM) and
//! SVD-based precoders.
//!
//! Both searches maximize the sum over subcarriers and layers of
//! `log2(1 + SINR)` and break ties towards the smallest candidate index.

use std::io::Write;

use crate::channel::ChannelSlice;
use crate::codebook::{Codebook, MAX_LAYERS};
use crate::error::{invalid, Error, Result};
use crate::linalg::{frobenius_norm, CMatrix};
use crate::linkphy::{select_cqi, sinr_from_hw, slice_sinrs, LinkConfig, MAX_RX};
use crate::C64;

/// Where a parameter triple came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Clsm,
    Svd,
    Fixed,
    Inferred,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Clsm => "clsm",
            Provenance::Svd => "svd",
            Provenance::Fixed => "fixed",
            Provenance::Inferred => "inferred",
        }
    }
}

/// Precoder, rank and CQI applied to every subcarrier at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionParams {
    pub w: CMatrix,
    pub rank: usize,
    pub cqi: u8,
    pub provenance: Provenance,
    pub pmi: Option<usize>,
}

impl TransmissionParams {
    /// Checks unit norm, column count, numerical rank and CQI range.
    pub fn validate(&self) -> Result<()> {
        if self.w.ncols() != self.rank || self.rank == 0 || self.rank > MAX_LAYERS {
            return Err(invalid(format!("rank {} with {} precoder columns", self.rank, self.w.ncols())));
        }
        if (frobenius_norm(&self.w) - 1.0).abs() > 1e-10 {
            return Err(invalid("precoder is not unit-norm"));
        }
        if crate::linalg::numerical_rank(&self.w, 1e-9) != self.rank {
            return Err(invalid("precoder rank differs from the declared rank"));
        }
        if !(1..=15).contains(&self.cqi) {
            return Err(invalid(format!("CQI {} outside 1..15", self.cqi)));
        }
        Ok(())
    }
}

/// Outcome of one per-slot search.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub t: usize,
    pub q: usize,
    pub params: TransmissionParams,
    /// Sum over subcarriers and layers of `log2(1 + SINR)`.
    pub sum_mi: f64,
    /// Subcarrier whose SVD produced the winner (SVD search only).
    pub svd_subcarrier: Option<usize>,
    /// Winner's SINRs flattened as `k·L + ℓ`.
    pub sinrs: Vec<f64>,
}

fn sum_mi(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| (1.0 + s).log2()).sum()
}

/// Exhaustive codebook search at slot `(t, q)`.
pub fn clsm_select(
    slice: &ChannelSlice,
    codebook: &Codebook,
    cfg: &LinkConfig,
    t: usize,
    q: usize,
) -> Result<SelectionRecord> {
    if codebook.is_empty() {
        return Err(Error::Empty("codebook"));
    }
    let (n_rx, n_tx) = (slice.n_rx, slice.n_tx);
    if n_tx != codebook.config().n_tx() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {n_tx} ports, codebook {}",
            codebook.config().n_tx()
        )));
    }
    if n_rx > MAX_RX {
        return Err(invalid(format!("{n_rx} receive antennas exceed {MAX_RX}")));
    }
    let half = n_tx / 2;
    let k_count = slice.num_subcarriers();
    let beams = codebook.beams();
    let zero = C64::new(0.0, 0.0);

    // Per subcarrier and beam: H₁b and H₂b for the two polarization halves.
    let stride = 2 * n_rx;
    let mut hb = vec![zero; k_count * beams.len() * stride];
    for k in 0..k_count {
        let h = slice.block(k);
        for (bi, b) in beams.iter().enumerate() {
            let base = (k * beams.len() + bi) * stride;
            for r in 0..n_rx {
                let row = &h[r * n_tx..(r + 1) * n_tx];
                let (mut s1, mut s2) = (zero, zero);
                for (i, v) in b.iter().enumerate() {
                    s1 += row[i] * v;
                    s2 += row[half + i] * v;
                }
                hb[base + r] = s1;
                hb[base + n_rx + r] = s2;
            }
        }
    }

    let mut best: Option<(usize, f64)> = None;
    let mut hw = [zero; MAX_RX * MAX_LAYERS];
    let mut layer = [0.0f64; MAX_LAYERS];
    for entry in codebook.entries() {
        let l = entry.rank;
        if l > n_rx {
            continue;
        }
        let mut total = 0.0;
        let mut ok = true;
        for k in 0..k_count {
            for (c, col) in entry.columns.iter().enumerate() {
                let base = (k * beams.len() + col.beam) * stride;
                for r in 0..n_rx {
                    hw[r * l + c] = (hb[base + r] + col.cophase * hb[base + n_rx + r]) * entry.scale;
                }
            }
            if !sinr_from_hw(&hw[..n_rx * l], n_rx, l, cfg.noise_variance, cfg.sinr_form, &mut layer[..l]) {
                ok = false;
                break;
            }
            total += layer[..l].iter().map(|s| (1.0 + s).log2()).sum::<f64>();
        }
        if ok && best.is_none_or(|(_, b)| total > b) {
            best = Some((entry.pmi, total));
        }
    }
    let (pmi, total) = best.ok_or_else(|| Error::Numerical("no codebook entry could be evaluated".into()))?;
    let entry = &codebook.entries()[pmi];
    let sinrs = slice_sinrs(slice, &entry.w, cfg)?;
    let cqi = select_cqi(&sinrs, cfg)?;
    Ok(SelectionRecord {
        t,
        q,
        params: TransmissionParams {
            w: entry.w.clone(),
            rank: entry.rank,
            cqi,
            provenance: Provenance::Clsm,
            pmi: Some(pmi),
        },
        sum_mi: total,
        svd_subcarrier: None,
        sinrs,
    })
}

/// Singular value decomposition `H = U·Λ·Vᴴ` with descending singular
/// values. Each column of `V` has a real non-negative first entry, with
/// `U` rotated to match.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    /// `N_rx × N_rx` unitary.
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    /// `N_tx × N_tx` unitary; the first `min(N_rx, N_tx)` columns are the
    /// right singular vectors.
    pub v: CMatrix,
}

impl Svd {
    /// Rectangular `N_rx × N_tx` singular-value matrix.
    pub fn lambda(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.u.nrows(), self.v.nrows());
        for (i, s) in self.singular_values.iter().enumerate() {
            m[(i, i)] = C64::new(*s, 0.0);
        }
        m
    }

    /// First `l` right singular vectors.
    pub fn v_cols(&self, l: usize) -> CMatrix {
        self.v.columns(0, l).into_owned()
    }
}

pub fn svd(h: &CMatrix) -> Result<Svd> {
    if !crate::linalg::all_finite(h) {
        return Err(invalid("channel matrix has non-finite entries"));
    }
    let (n_rx, n_tx) = (h.nrows(), h.ncols());
    let n = n_rx.min(n_tx);
    let dec = h.clone().svd(true, true);
    let u_thin = dec.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = dec.v_t.ok_or_else(|| Error::Numerical("SVD did not return Vᴴ".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]).then(a.cmp(&b)));

    let mut u = CMatrix::zeros(n_rx, n);
    let mut v = CMatrix::zeros(n_tx, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut vc = v_t.row(src).adjoint();
        let mut uc = u_thin.column(src).into_owned();
        let lead = vc[0];
        if lead.norm() > 1e-300 {
            let rot = lead.conj() / lead.norm();
            vc *= rot;
            uc *= rot;
        }
        v.set_column(dst, &vc);
        u.set_column(dst, &uc);
        s.push(dec.singular_values[src]);
    }
    Ok(Svd { u: complete_basis(&u), singular_values: s, v: complete_basis(&v) })
}

/// Extends orthonormal columns to a square unitary matrix by
/// Gram-Schmidt against the standard basis.
fn complete_basis(cols: &CMatrix) -> CMatrix {
    let n = cols.nrows();
    let mut basis: Vec<nalgebra::DVector<C64>> = (0..cols.ncols()).map(|j| cols.column(j).into_owned()).collect();
    let mut e = 0;
    while basis.len() < n && e < n {
        let mut cand = nalgebra::DVector::<C64>::zeros(n);
        cand[e] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&cand);
                cand -= b * p;
            }
        }
        let norm = cand.norm();
        if norm > 1e-6 {
            basis.push(cand / C64::new(norm, 0.0));
        }
        e += 1;
    }
    CMatrix::from_columns(&basis)
}

/// Best SVD-derived precoder `V_k^L/‖V_k^L‖_F` over subcarriers `k` and
/// ranks `L` (pinned to `rank_constraint` when given).
pub fn svd_select(
    slice: &ChannelSlice,
    cfg: &LinkConfig,
    rank_constraint: Option<usize>,
    t: usize,
    q: usize,
) -> Result<SelectionRecord> {
    let max_rank = slice.n_rx.min(slice.n_tx).min(MAX_LAYERS);
    let ranks: Vec<usize> = match rank_constraint {
        Some(r) if r == 0 || r > max_rank => {
            return Err(invalid(format!("rank constraint {r} outside 1..={max_rank}")));
        }
        Some(r) => vec![r],
        None => (1..=max_rank).collect(),
    };
    let mut best: Option<(f64, usize, CMatrix, Vec<f64>)> = None;
    for k in 0..slice.num_subcarriers() {
        let dec = svd(&slice.matrix(k))?;
        for &l in &ranks {
            let w = dec.v_cols(l) / C64::new((l as f64).sqrt(), 0.0);
            let sinrs = slice_sinrs(slice, &w, cfg)?;
            let total = sum_mi(&sinrs);
            if best.as_ref().is_none_or(|b| total > b.0) {
                best = Some((total, k, w, sinrs));
            }
        }
    }
    let (total, k, w, sinrs) = best.ok_or(Error::Empty("channel slice"))?;
    let rank = w.ncols();
    let cqi = select_cqi(&sinrs, cfg)?;
    Ok(SelectionRecord {
        t,
        q,
        params: TransmissionParams { w, rank, cqi, provenance: Provenance::Svd, pmi: None },
        sum_mi: total,
        svd_subcarrier: Some(k),
        sinrs,
    })
}

/// Writes `t, q, pmi_or_kL, rank, cqi, sum_mi` rows. SVD winners are
/// labelled `k<subcarrier>L<rank>`.
pub fn write_selection_csv<W: Write>(records: &[SelectionRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "q", "pmi_or_kL", "rank", "cqi", "sum_mi"])?;
    for r in records {
        let id = match (r.params.pmi, r.svd_subcarrier) {
            (Some(p), _) => p.to_string(),
            (None, Some(k)) => format!("k{k}L{}", r.params.rank),
            (None, None) => String::new(),
        };
        out.write_record([
            r.t.to_string(),
            r.q.to_string(),
            id,
            r.params.rank.to_string(),
            r.params.cqi.to_string(),
            format!("{:.9}", r.sum_mi),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{build_codebook, BeamConfig};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_svd() {
        let d = svd(&CMatrix::identity(4, 4)).unwrap();
        assert!(d.singular_values.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn diagonal_svd_sorted() {
        let mut h = CMatrix::zeros(2, 4);
        h[(0, 0)] = c(1.0, 0.0);
        h[(1, 1)] = c(3.0, 0.0);
        let d = svd(&h).unwrap();
        assert!((d.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((d.singular_values[1] - 1.0).abs() < 1e-12);
        assert_eq!((d.u.nrows(), d.u.ncols(), d.v.nrows(), d.v.ncols()), (2, 2, 4, 4));
    }

    #[test]
    fn canonical_phase() {
        let h = CMatrix::from_fn(3, 5, |r, cc| c((r * 7 + cc * 3) as f64 % 5.0 - 2.0, (r + 2 * cc) as f64 % 3.0 - 1.0));
        let d = svd(&h).unwrap();
        for j in 0..3 {
            assert!(d.v[(0, j)].im.abs() < 1e-12 && d.v[(0, j)].re >= 0.0);
        }
        let rec = &d.u * d.lambda() * d.v.adjoint();
        assert!(frobenius_norm(&(rec - h)) < 1e-10);
    }

    #[test]
    fn nan_rejected() {
        let mut h = CMatrix::identity(2, 2);
        h[(0, 1)] = c(f64::NAN, 0.0);
        assert!(svd(&h).is_err());
    }

    #[test]
    fn rank_constraint_bounds() {
        let s = ChannelSlice::from_matrices(&[CMatrix::identity(4, 16)]).unwrap();
        let cfg = LinkConfig::default();
        assert!(svd_select(&s, &cfg, Some(5), 0, 0).is_err());
        assert!(svd_select(&s, &cfg, Some(0), 0, 0).is_err());
        assert_eq!(svd_select(&s, &cfg, Some(3), 0, 0).unwrap().params.rank, 3);
    }

    #[test]
    fn empty_codebook_rejected_by_builder() {
        assert!(build_codebook(&BeamConfig::default(), 0).is_err());
    }
}
