//! Rank-`r` training sets with downward compatibility: any slot whose
//! optimal rank is at least `r` contributes its rank-`r` SVD precoder.

use super::flatten_precoder;
use crate::error::{invalid, Error, Result};
use crate::linalg::CMatrix;
use crate::statfix::mode;

/// Which locations and samples feed the rank-`r` model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecoderIndex {
    pub rank: usize,
    pub max_rank: usize,
    /// Locations whose modal optimal rank lies in `rank..=max_rank`.
    pub locations: Vec<usize>,
    /// Per entry of `locations`, the samples whose optimal rank lies in
    /// `rank..=max_rank`.
    pub times: Vec<Vec<usize>>,
}

impl PrecoderIndex {
    pub fn num_samples(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }

    pub fn times_of(&self, q: usize) -> Option<&[usize]> {
        self.locations.iter().position(|&l| l == q).map(|i| self.times[i].as_slice())
    }
}

/// Builds the location and sample sets from per-location optimal-rank
/// histories `(q, ranks over t)`.
pub fn precoder_index(histories: &[(usize, Vec<usize>)], rank: usize, max_rank: usize) -> Result<PrecoderIndex> {
    if rank == 0 || rank > max_rank {
        return Err(invalid(format!("rank {rank} outside 1..={max_rank}")));
    }
    let compatible = |r: usize| (rank..=max_rank).contains(&r);
    let mut locations = Vec::new();
    let mut times = Vec::new();
    for (q, h) in histories {
        let m = mode(h).ok_or(Error::Empty("rank history"))?;
        if compatible(m) {
            locations.push(*q);
            times.push(h.iter().enumerate().filter(|(_, &r)| compatible(r)).map(|(t, _)| t).collect());
        }
    }
    if locations.is_empty() {
        return Err(Error::Empty("no location supports the requested rank"));
    }
    Ok(PrecoderIndex { rank, max_rank, locations, times })
}

/// Flattened rank-`r` precoders gathered for one index.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderDataset {
    pub index: PrecoderIndex,
    pub samples: Vec<Vec<f64>>,
    /// `(q, t)` of each sample.
    pub ids: Vec<(usize, usize)>,
}

/// Gathers samples through `source(t, q)`, which returns the un-normalized
/// rank-constrained precoder of that slot.
pub fn build_precoder_dataset(
    histories: &[(usize, Vec<usize>)],
    rank: usize,
    max_rank: usize,
    mut source: impl FnMut(usize, usize) -> Result<CMatrix>,
) -> Result<PrecoderDataset> {
    let index = precoder_index(histories, rank, max_rank)?;
    let mut samples = Vec::with_capacity(index.num_samples());
    let mut ids = Vec::with_capacity(index.num_samples());
    for (q, ts) in index.locations.iter().zip(&index.times) {
        for &t in ts {
            let v = source(t, *q)?;
            if v.ncols() != rank {
                return Err(Error::DimensionMismatch(format!("source returned {} columns for rank {rank}", v.ncols())));
            }
            samples.push(flatten_precoder(&v));
            ids.push((*q, t));
        }
    }
    Ok(PrecoderDataset { index, samples, ids })
}
