//! Parameter inference at locations with no channel observations: GPR over
//! latent means, natural-neighbour CQI and a conservative rank rule.

mod gpr;
mod nni;
mod ri;

use std::io::Write;

pub use gpr::{
    gpr_fit, gpr_fit_fixed, load_gpr, log_marginal_likelihood, rbf_kernel, read_gpr, save_gpr, write_gpr, GprConfig,
    GprModel, Jitter, GPR_MAGIC,
};
pub use nni::{nni_cqi, nni_cqi_with, NaturalNeighbor, NniOutcome, NniWeights};
pub use ri::infer_ri;

use crate::error::Result;

/// How an inferred precoder was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferredSource {
    SvdGpr,
    CodebookNn,
}

impl InferredSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SvdGpr => "svd-gpr",
            Self::CodebookNn => "codebook-nn",
        }
    }
}

/// One row of the inferred-parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferredRow {
    pub q: usize,
    pub rank: usize,
    pub cqi: u8,
    pub source: InferredSource,
}

pub fn write_inferred_csv<W: Write>(rows: &[InferredRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["q", "rank", "cqi", "source"])?;
    for r in rows {
        out.write_record([r.q.to_string(), r.rank.to_string(), r.cqi.to_string(), r.source.as_str().to_string()])?;
    }
    out.flush()?;
    Ok(())
}
