//! Codebook parameters fixed in time by history statistics, and inferred
//! in space by nearest neighbour.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::channel::Location;
use crate::codebook::Codebook;
use crate::error::{invalid, Error, Result};
use crate::selection::{Provenance, TransmissionParams};

/// Most frequent value; ties go to the smallest.
pub fn mode<T: Ord + Copy>(xs: &[T]) -> Option<T> {
    let mut counts = BTreeMap::new();
    for &x in xs {
        *counts.entry(x).or_insert(0usize) += 1;
    }
    // Keys arrive in ascending order, so only a strictly larger count wins.
    counts.into_iter().fold(None, |best: Option<(T, usize)>, (k, c)| match best {
        Some((_, bc)) if bc >= c => best,
        _ => Some((k, c)),
    })
    .map(|(k, _)| k)
}

/// How the fixed CQI is derived from the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CqiVariant {
    /// Mode of the per-slot CLSM CQIs.
    ClsmMode = 1,
    /// Mode of the CQIs re-evaluated under the fixed precoder.
    FixedMode = 2,
    /// Rounded mean of the CQIs re-evaluated under the fixed precoder.
    FixedRoundedMean = 3,
}

impl CqiVariant {
    pub const ALL: [CqiVariant; 3] = [CqiVariant::ClsmMode, CqiVariant::FixedMode, CqiVariant::FixedRoundedMean];

    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            1 => Ok(CqiVariant::ClsmMode),
            2 => Ok(CqiVariant::FixedMode),
            3 => Ok(CqiVariant::FixedRoundedMean),
            _ => Err(invalid(format!("statistics variant {i} is not one of 1, 2, 3"))),
        }
    }

    /// Whether the variant needs CQIs re-evaluated under the fixed precoder.
    pub fn needs_fixed_history(self) -> bool {
        self != CqiVariant::ClsmMode
    }
}

/// Per-location history of CLSM decisions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamHistory {
    pub q: usize,
    pub pmi: Vec<usize>,
    pub rank: Vec<usize>,
    pub cqi_clsm: Vec<u8>,
    /// CQIs obtained when the mode PMI is applied at every sample.
    pub cqi_fixed: Option<Vec<u8>>,
}

impl ParamHistory {
    pub fn len(&self) -> usize {
        self.pmi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmi.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.pmi.is_empty() {
            return Err(Error::Empty("parameter history"));
        }
        let t = self.pmi.len();
        if self.rank.len() != t || self.cqi_clsm.len() != t || self.cqi_fixed.as_ref().is_some_and(|c| c.len() != t) {
            return Err(invalid("history sequences differ in length"));
        }
        Ok(())
    }

    /// Most frequent PMI.
    pub fn mode_pmi(&self) -> Result<usize> {
        mode(&self.pmi).ok_or(Error::Empty("parameter history"))
    }
}

/// Fixes `W_q`, `L_q` from the mode PMI and the CQI per `variant`.
pub fn fix_codebook_params(hist: &ParamHistory, variant: CqiVariant, codebook: &Codebook) -> Result<TransmissionParams> {
    hist.check()?;
    let pmi = hist.mode_pmi()?;
    let entry = codebook
        .get(pmi)
        .ok_or_else(|| invalid(format!("PMI {pmi} not in the codebook")))?;
    let fixed = || hist.cqi_fixed.as_deref().ok_or_else(|| invalid("variant needs CQIs under the fixed precoder"));
    let cqi = match variant {
        CqiVariant::ClsmMode => mode(&hist.cqi_clsm).unwrap(),
        CqiVariant::FixedMode => mode(fixed()?).unwrap(),
        CqiVariant::FixedRoundedMean => {
            let xs = fixed()?;
            let mean = xs.iter().map(|&c| c as f64).sum::<f64>() / xs.len() as f64;
            mean.round().clamp(1.0, 15.0) as u8
        }
    };
    Ok(TransmissionParams { w: entry.w.clone(), rank: entry.rank, cqi, provenance: Provenance::Fixed, pmi: Some(pmi) })
}

/// Index of the training location nearest to `query`; distance ties go to
/// the smallest location index.
pub fn nearest_index(train: &[Location], query: &[f64; 3]) -> Option<usize> {
    let mut best: Option<(f64, u32, usize)> = None;
    for (i, l) in train.iter().enumerate() {
        let d = l.distance_to(query);
        let better = match best {
            None => true,
            Some((bd, bq, _)) => d < bd * (1.0 - 1e-12) || ((d - bd).abs() <= bd * 1e-12 && l.q < bq),
        };
        if better {
            best = Some((d, l.q, i));
        }
    }
    best.map(|(_, _, i)| i)
}

/// Copies the parameters of the nearest training location.
pub fn nearest_neighbor_infer(train: &[(Location, TransmissionParams)], query: &Location) -> Result<TransmissionParams> {
    let locs: Vec<Location> = train.iter().map(|(l, _)| *l).collect();
    let i = nearest_index(&locs, &query.coords).ok_or(Error::Empty("training map"))?;
    let mut p = train[i].1.clone();
    p.provenance = Provenance::Inferred;
    Ok(p)
}

/// One row of the fixed-parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedRow {
    pub q: usize,
    pub pmi: usize,
    pub rank: usize,
    pub cqi: u8,
}

pub fn write_fixed_csv<W: Write>(rows: &[FixedRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["q", "pmi", "rank", "cqi"])?;
    for r in rows {
        out.write_record([r.q.to_string(), r.pmi.to_string(), r.rank.to_string(), r.cqi.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_fixed_csv<R: Read>(r: R) -> Result<Vec<FixedRow>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<usize> {
            rec.get(i)
                .ok_or_else(|| Error::Format("fixed-parameter row is too short".into()))?
                .parse()
                .map_err(|e| Error::Format(format!("fixed-parameter table: {e}")))
        };
        rows.push(FixedRow { q: num(0)?, pmi: num(1)?, rank: num(2)?, cqi: num(3)? as u8 });
    }
    Ok(rows)
}

/// Rebuilds parameters from a table row, checking it against the codebook.
pub fn params_from_row(row: &FixedRow, codebook: &Codebook) -> Result<TransmissionParams> {
    let e = codebook.get(row.pmi).ok_or_else(|| invalid(format!("PMI {} not in the codebook", row.pmi)))?;
    if e.rank != row.rank {
        return Err(invalid(format!("PMI {} has rank {}, table says {}", row.pmi, e.rank, row.rank)));
    }
    let p = TransmissionParams { w: e.w.clone(), rank: e.rank, cqi: row.cqi, provenance: Provenance::Fixed, pmi: Some(row.pmi) };
    p.validate()?;
    Ok(p)
}
