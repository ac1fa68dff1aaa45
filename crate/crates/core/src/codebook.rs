//! Type-I single-panel codebook built from oversampled 2D-DFT beams.
//!
//! PMIs are dense and ordered by rank, then `θ1`, then `θ2`, then the
//! co-phasing index. Rank 1 co-phases with `φ ∈ {1, j, -1, -j}`; higher ranks
//! take the first `L` columns of the four-column pattern
//! `[b, b', b, b'; φb, φb', -φb, -φb']` with `φ ∈ {1, j}`, where `b'` is the
//! beam offset by `(ε1, ε2)`.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;

use crate::error::{invalid, Result};
use crate::linalg::CMatrix;
use crate::C64;

/// Largest supported number of layers.
pub const MAX_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub n1: usize,
    pub n2: usize,
    pub o1: usize,
    pub o2: usize,
    /// Beam offset of the paired beam `b'` along each dimension.
    pub eps1: usize,
    pub eps2: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self::new(8, 1, 4, 1)
    }
}

impl BeamConfig {
    /// Uses the default pairing rule: offset by one orthogonal beam along
    /// the horizontal axis, or along the vertical axis when `n1 = 1`.
    pub fn new(n1: usize, n2: usize, o1: usize, o2: usize) -> Self {
        let (eps1, eps2) = if n1 > 1 { (o1, 0) } else { (0, o2) };
        Self { n1, n2, o1, o2, eps1, eps2 }
    }

    pub fn n_tx(&self) -> usize {
        2 * self.n1 * self.n2
    }

    pub fn num_beams(&self) -> usize {
        self.n1 * self.o1 * self.n2 * self.o2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(invalid("N1 and N2 must be positive"));
        }
        if self.o1 == 0 || self.o2 == 0 {
            return Err(invalid("oversampling factors must be at least 1"));
        }
        if self.n_tx() > 16 {
            return Err(invalid(format!("{} ports exceed the supported 16", self.n_tx())));
        }
        Ok(())
    }

    fn beam_id(&self, theta1: usize, theta2: usize) -> usize {
        theta1 * self.n2 * self.o2 + theta2
    }
}

fn axis(theta: usize, n: usize, o: usize) -> Vec<C64> {
    (0..n)
        .map(|i| C64::from_polar(1.0, 2.0 * PI * (theta * i) as f64 / (n * o) as f64))
        .collect()
}

/// The 2D-DFT beam `a1 ⊗ a2` of length `N1·N2`.
pub fn dft_beam(theta1: usize, theta2: usize, cfg: &BeamConfig) -> Result<Vec<C64>> {
    cfg.validate()?;
    if theta1 >= cfg.n1 * cfg.o1 || theta2 >= cfg.n2 * cfg.o2 {
        return Err(invalid(format!(
            "beam ({theta1}, {theta2}) outside {}×{}",
            cfg.n1 * cfg.o1,
            cfg.n2 * cfg.o2
        )));
    }
    let a1 = axis(theta1, cfg.n1, cfg.o1);
    let a2 = axis(theta2, cfg.n2, cfg.o2);
    Ok(a1.iter().flat_map(|x| a2.iter().map(move |y| x * y)).collect())
}

/// One column `scale · [b; c·b]` of a codebook precoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnSpec {
    pub beam: usize,
    pub cophase: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub pmi: usize,
    pub rank: usize,
    pub theta1: usize,
    pub theta2: usize,
    /// Co-phasing `φ = jⁿ`.
    pub phi_index: usize,
    pub w: CMatrix,
    pub columns: Vec<ColumnSpec>,
    /// Common column scale `1/√(L·N_tx)`.
    pub scale: f64,
}

impl CodebookEntry {
    pub fn phi(&self) -> C64 {
        j_pow(self.phi_index)
    }
}

fn j_pow(n: usize) -> C64 {
    [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][n % 4]
}

#[derive(Debug, Clone)]
pub struct Codebook {
    cfg: BeamConfig,
    beams: Vec<Vec<C64>>,
    entries: Vec<CodebookEntry>,
    rank_ranges: Vec<Range<usize>>,
}

/// Builds every entry for ranks `1..=max_rank`.
pub fn build_codebook(cfg: &BeamConfig, max_rank: usize) -> Result<Codebook> {
    cfg.validate()?;
    if max_rank == 0 || max_rank > MAX_LAYERS {
        return Err(invalid(format!("max rank {max_rank} outside 1..={MAX_LAYERS}")));
    }
    if max_rank > cfg.n_tx() {
        return Err(invalid("rank exceeds the number of ports"));
    }
    let (g1, g2) = (cfg.n1 * cfg.o1, cfg.n2 * cfg.o2);
    let mut beams = Vec::with_capacity(cfg.num_beams());
    for t1 in 0..g1 {
        for t2 in 0..g2 {
            beams.push(dft_beam(t1, t2, cfg)?);
        }
    }
    let n_tx = cfg.n_tx();
    let half = n_tx / 2;
    let mut entries = Vec::new();
    let mut rank_ranges = Vec::new();
    for rank in 1..=max_rank {
        let start = entries.len();
        let phis: &[usize] = if rank == 1 { &[0, 1, 2, 3] } else { &[0, 1] };
        let scale = 1.0 / ((rank * n_tx) as f64).sqrt();
        for t1 in 0..g1 {
            for t2 in 0..g2 {
                let b = cfg.beam_id(t1, t2);
                let bp = cfg.beam_id((t1 + cfg.eps1) % g1, (t2 + cfg.eps2) % g2);
                for &pi in phis {
                    let phi = j_pow(pi);
                    let pattern = [(b, phi), (bp, phi), (b, -phi), (bp, -phi)];
                    let columns: Vec<ColumnSpec> = pattern[..rank]
                        .iter()
                        .map(|&(beam, cophase)| ColumnSpec { beam, cophase })
                        .collect();
                    let mut w = CMatrix::zeros(n_tx, rank);
                    for (l, col) in columns.iter().enumerate() {
                        for (i, v) in beams[col.beam].iter().enumerate() {
                            w[(i, l)] = v * scale;
                            w[(half + i, l)] = col.cophase * v * scale;
                        }
                    }
                    entries.push(CodebookEntry {
                        pmi: entries.len(),
                        rank,
                        theta1: t1,
                        theta2: t2,
                        phi_index: pi,
                        w,
                        columns,
                        scale,
                    });
                }
            }
        }
        rank_ranges.push(start..entries.len());
    }
    Ok(Codebook { cfg: *cfg, beams, entries, rank_ranges })
}

impl Codebook {
    pub fn config(&self) -> &BeamConfig {
        &self.cfg
    }
    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn max_rank(&self) -> usize {
        self.rank_ranges.len()
    }
    pub fn get(&self, pmi: usize) -> Option<&CodebookEntry> {
        self.entries.get(pmi)
    }
    pub fn beams(&self) -> &[Vec<C64>] {
        &self.beams
    }
    /// Entries of one rank; empty for ranks that were not built.
    pub fn of_rank(&self, rank: usize) -> &[CodebookEntry] {
        match rank.checked_sub(1).and_then(|r| self.rank_ranges.get(r)) {
            Some(r) => &self.entries[r.clone()],
            None => &[],
        }
    }

    /// CSV dump: `pmi, rank, theta1, theta2, phi, w0_re, w0_im, ...` with W
    /// flattened row-major.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
        out.write_record(["pmi", "rank", "theta1", "theta2", "phi", "w_re_im..."])?;
        for e in &self.entries {
            let mut rec = vec![
                e.pmi.to_string(),
                e.rank.to_string(),
                e.theta1.to_string(),
                e.theta2.to_string(),
                e.phi_index.to_string(),
            ];
            for r in 0..e.w.nrows() {
                for c in 0..e.w.ncols() {
                    rec.push(format!("{:e}", e.w[(r, c)].re));
                    rec.push(format!("{:e}", e.w[(r, c)].im));
                }
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, gram_deviation, numerical_rank};

    #[test]
    fn zero_beam_is_all_ones() {
        let b = dft_beam(0, 0, &BeamConfig::default()).unwrap();
        assert!(b.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn half_turn_beam() {
        let cfg = BeamConfig::new(2, 1, 1, 1);
        let b = dft_beam(1, 0, &cfg).unwrap();
        assert!((b[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((b[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn scalar_vertical_axis_reduces_to_horizontal() {
        let cfg = BeamConfig::default();
        let b = dft_beam(5, 0, &cfg).unwrap();
        assert_eq!(b, axis(5, 8, 4));
    }

    #[test]
    fn out_of_range_beam_rejected() {
        assert!(dft_beam(32, 0, &BeamConfig::default()).is_err());
        assert!(dft_beam(0, 1, &BeamConfig::default()).is_err());
    }

    #[test]
    fn default_geometry_has_32_beams_and_320_entries() {
        let cb = build_codebook(&BeamConfig::default(), 4).unwrap();
        assert_eq!(cb.beams().len(), 8 * 4);
        let distinct: std::collections::HashSet<_> = cb
            .beams()
            .iter()
            .map(|b| b.iter().map(|z| ((z.re * 1e9) as i64, (z.im * 1e9) as i64)).collect::<Vec<_>>())
            .collect();
        assert_eq!(distinct.len(), 32);
        assert_eq!(
            (1..=4).map(|r| cb.of_rank(r).len()).collect::<Vec<_>>(),
            vec![128, 64, 64, 64]
        );
        assert_eq!(cb.len(), 320);
    }

    #[test]
    fn every_entry_normalized_and_orthogonal() {
        let cb = build_codebook(&BeamConfig::default(), 4).unwrap();
        for (i, e) in cb.entries().iter().enumerate() {
            assert_eq!(e.pmi, i);
            assert!((frobenius_norm(&e.w) - 1.0).abs() < 1e-12);
            assert!(gram_deviation(&e.w) < 1e-10, "pmi {}", e.pmi);
            assert_eq!(numerical_rank(&e.w, 1e-9), e.rank);
        }
    }

    #[test]
    fn rank4_zero_beam_first_column() {
        let cb = build_codebook(&BeamConfig::default(), 4).unwrap();
        let e = cb.of_rank(4).iter().find(|e| e.theta1 == 0 && e.phi_index == 0).unwrap();
        let expect = 1.0 / (4.0f64 * 16.0).sqrt();
        for i in 0..16 {
            assert!((e.w[(i, 0)] - C64::new(expect, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn beams_offset_by_oversampling_are_orthogonal() {
        let cfg = BeamConfig::default();
        for t in 0..32 {
            let a = dft_beam(t, 0, &cfg).unwrap();
            let b = dft_beam((t + 4) % 32, 0, &cfg).unwrap();
            let ip: C64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
            assert!(ip.norm() < 1e-10);
        }
    }

    #[test]
    fn vertical_pairing_when_single_column() {
        let cfg = BeamConfig::new(1, 4, 1, 4);
        let cb = build_codebook(&cfg, 4).unwrap();
        for e in cb.entries() {
            assert!(gram_deviation(&e.w) < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_rank() {
        assert!(build_codebook(&BeamConfig::default(), 5).is_err());
        assert!(build_codebook(&BeamConfig::default(), 0).is_err());
    }

    #[test]
    fn deterministic() {
        let a = build_codebook(&BeamConfig::default(), 4).unwrap();
        let b = build_codebook(&BeamConfig::default(), 4).unwrap();
        assert_eq!(a.entries(), b.entries());
    }
}
