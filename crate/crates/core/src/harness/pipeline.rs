//! Fitting, inference and evaluation stages shared by the schemes.

use std::collections::{BTreeMap, BTreeSet};

use super::access::TrackedDataset;
use super::config::{GprSubset, Representative};
use crate::channel::{ChannelSlice, Location};
use crate::codebook::{Codebook, MAX_LAYERS};
use crate::error::{invalid, Error, Result};
use crate::linalg::CMatrix;
use crate::linkphy::{select_cqi, slice_sinrs, throughput, throughput_from_sinrs, LinkConfig};
use crate::selection::{clsm_select, svd, Provenance, SelectionRecord, TransmissionParams};
use crate::spatial::{gpr_fit, infer_ri, nni_cqi_with, GprConfig, InferredRow, InferredSource, NaturalNeighbor};
use crate::statfix::{mode, nearest_index, ParamHistory};
use crate::vae::{
    build_precoder_dataset, fix_cqi_vae, fix_rank, orthogonalize, representative_kl, representative_mean,
    unflatten_precoder, LatentGaussian, RankFixing, Trained, Vae, VaeConfig,
};
use crate::C64;

/// Maps `0..n` in parallel when enabled; results keep index order.
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Mean over time of `[location][t]` values.
pub fn time_means(x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect()
}

/// CLSM decisions `[location][t]` at each listed location.
pub fn clsm_histories(
    data: &TrackedDataset,
    codebook: &Codebook,
    link: &LinkConfig,
    locs: &[usize],
) -> Result<Vec<Vec<SelectionRecord>>> {
    let t = data.extents().t;
    par_map(locs.len(), |i| {
        let q = locs[i];
        (0..t).map(|s| clsm_select(&data.slice(s, q), codebook, link, s, q)).collect()
    })
}

/// Throughput `[location][t]` when the decision applied at `t` is the one
/// made at `max(t − delay, 0)`.
pub fn clsm_throughput(
    data: &TrackedDataset,
    link: &LinkConfig,
    locs: &[usize],
    histories: &[Vec<SelectionRecord>],
    delay: usize,
) -> Result<Vec<Vec<f64>>> {
    par_map(locs.len(), |i| {
        let h = &histories[i];
        (0..h.len())
            .map(|s| {
                let src = &h[s.saturating_sub(delay)];
                if src.t == s {
                    throughput_from_sinrs(&src.sinrs, src.params.rank, src.params.cqi, link)
                } else {
                    throughput(&data.slice(s, locs[i]), &src.params, link)
                }
            })
            .collect()
    })
}

/// Throughput `[location][t]` of fixed per-location parameters.
pub fn fixed_throughput(
    data: &TrackedDataset,
    link: &LinkConfig,
    locs: &[usize],
    params: &[TransmissionParams],
) -> Result<Vec<Vec<f64>>> {
    if params.len() != locs.len() {
        return Err(Error::DimensionMismatch("one parameter set per location required".into()));
    }
    let t = data.extents().t;
    par_map(locs.len(), |i| (0..t).map(|s| throughput(&data.slice(s, locs[i]), &params[i], link)).collect())
}

fn cqi_history(data: &TrackedDataset, link: &LinkConfig, q: usize, w: &CMatrix) -> Result<Vec<u8>> {
    (0..data.extents().t).map(|s| select_cqi(&slice_sinrs(&data.slice(s, q), w, link)?, link)).collect()
}

/// Statistics histories from CLSM decisions, with CQIs re-evaluated under
/// the mode-PMI precoder when `with_fixed`.
pub fn statfix_histories(
    data: &TrackedDataset,
    codebook: &Codebook,
    link: &LinkConfig,
    locs: &[usize],
    histories: &[Vec<SelectionRecord>],
    with_fixed: bool,
) -> Result<Vec<ParamHistory>> {
    par_map(locs.len(), |i| {
        let h = &histories[i];
        let pmi = h.iter().map(|r| r.params.pmi.ok_or_else(|| invalid("CLSM record without a PMI"))).collect::<Result<_>>()?;
        let mut ph = ParamHistory {
            q: locs[i],
            pmi,
            rank: h.iter().map(|r| r.params.rank).collect(),
            cqi_clsm: h.iter().map(|r| r.params.cqi).collect(),
            cqi_fixed: None,
        };
        if with_fixed {
            let w = &codebook.get(ph.mode_pmi()?).ok_or_else(|| invalid("PMI outside the codebook"))?.w;
            ph.cqi_fixed = Some(cqi_history(data, link, locs[i], w)?);
        }
        Ok(ph)
    })
}

/// Mode PMI of the CLSM decisions at `q` and its precoder.
fn mode_pmi_precoder(
    data: &TrackedDataset,
    codebook: &Codebook,
    link: &LinkConfig,
    q: usize,
) -> Result<(usize, CMatrix)> {
    let pmis = (0..data.extents().t)
        .map(|s| clsm_select(&data.slice(s, q), codebook, link, s, q).map(|r| r.params.pmi.unwrap_or(0)))
        .collect::<Result<Vec<_>>>()?;
    let pmi = mode(&pmis).ok_or(Error::Empty("sample axis"))?;
    Ok((pmi, codebook.get(pmi).ok_or_else(|| invalid("PMI outside the codebook"))?.w.clone()))
}

/// Rank-wise best SVD precoders of one slot.
#[derive(Debug, Clone)]
pub struct SvdSlot {
    /// Rank of the unconstrained winner.
    pub best_rank: usize,
    /// Un-normalized `V_k^L` of the best subcarrier for `L = 1..`.
    pub per_rank: Vec<CMatrix>,
}

/// One pass over subcarriers and ranks yielding both the unconstrained and
/// every rank-constrained SVD winner.
pub fn svd_slot(slice: &ChannelSlice, link: &LinkConfig) -> Result<SvdSlot> {
    let max_rank = slice.n_rx.min(slice.n_tx).min(MAX_LAYERS);
    let mut per: Vec<Option<(f64, CMatrix)>> = vec![None; max_rank];
    let mut best: Option<(f64, usize)> = None;
    for k in 0..slice.num_subcarriers() {
        let dec = svd(&slice.matrix(k))?;
        for l in 1..=max_rank {
            let v = dec.v_cols(l);
            let w = &v / C64::new((l as f64).sqrt(), 0.0);
            let total: f64 = slice_sinrs(slice, &w, link)?.iter().map(|s| (1.0 + s).log2()).sum();
            if per[l - 1].as_ref().is_none_or(|b| total > b.0) {
                per[l - 1] = Some((total, v));
            }
            if best.is_none_or(|b| total > b.0) {
                best = Some((total, l));
            }
        }
    }
    let best_rank = best.ok_or(Error::Empty("channel slice"))?.1;
    Ok(SvdSlot { best_rank, per_rank: per.into_iter().map(|p| p.unwrap().1).collect() })
}

/// SVD winners `[location][t]` at each listed location.
pub fn svd_slots(data: &TrackedDataset, link: &LinkConfig, locs: &[usize]) -> Result<Vec<Vec<SvdSlot>>> {
    let t = data.extents().t;
    par_map(locs.len(), |i| (0..t).map(|s| svd_slot(&data.slice(s, locs[i]), link)).collect())
}

/// Trained per-rank models and latent representations of the training
/// samples.
#[derive(Debug, Clone)]
pub struct VaeStage {
    pub train: Vec<usize>,
    /// `(location, optimal SVD rank over t)`.
    pub rank_histories: Vec<(usize, Vec<usize>)>,
    pub rank_fix: RankFixing,
    pub models: BTreeMap<usize, Trained>,
    /// Per rank: location to `(t, latent)` of its samples.
    pub latents: BTreeMap<usize, BTreeMap<usize, Vec<(usize, LatentGaussian)>>>,
}

/// Builds the SVD datasets, fixes ranks and trains one model per rank that
/// occurs among the fixed ranks.
pub fn fit_vae_stage(
    data: &TrackedDataset,
    link: &LinkConfig,
    train: &[usize],
    cfg: &VaeConfig,
    cthold: f64,
) -> Result<VaeStage> {
    let slots = svd_slots(data, link, train)?;
    let pos: BTreeMap<usize, usize> = train.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    let rank_histories: Vec<(usize, Vec<usize>)> =
        train.iter().zip(&slots).map(|(&q, s)| (q, s.iter().map(|x| x.best_rank).collect())).collect();
    let rank_fix = fix_rank(&rank_histories, cthold)?;
    let max_rank = data.max_layers().min(MAX_LAYERS);
    let ranks: BTreeSet<usize> = rank_fix.fixed.values().copied().collect();
    let mut models = BTreeMap::new();
    let mut latents = BTreeMap::new();
    for r in ranks {
        let ds = build_precoder_dataset(&rank_histories, r, max_rank, |s, q| Ok(slots[pos[&q]][s].per_rank[r - 1].clone()))?;
        let rcfg = VaeConfig { seed: cfg.seed.wrapping_add(r as u64), ..cfg.clone() };
        let trained = crate::vae::train(&ds.samples, r, &rcfg)?;
        log::info!(
            "rank {r}: {} samples at {} locations, final loss {:.4e}",
            ds.samples.len(),
            ds.index.locations.len(),
            trained.loss_trace.last().copied().unwrap_or(f64::NAN)
        );
        let enc = par_map(ds.samples.len(), |i| trained.model.encode(&ds.samples[i]))?;
        let mut by_q: BTreeMap<usize, Vec<(usize, LatentGaussian)>> = BTreeMap::new();
        for ((q, s), g) in ds.ids.iter().zip(enc) {
            by_q.entry(*q).or_default().push((*s, g));
        }
        latents.insert(r, by_q);
        models.insert(r, trained);
    }
    Ok(VaeStage { train: train.to_vec(), rank_histories, rank_fix, models, latents })
}

/// Fixed parameters of the SVD approach at the training locations.
#[derive(Debug, Clone)]
pub struct VaeFix {
    pub method: Representative,
    /// In training-location order.
    pub params: Vec<TransmissionParams>,
    /// Per rank, `(location, representative latent mean)` at every location
    /// holding rank-compatible samples, ascending by location.
    pub mu_star: BTreeMap<usize, Vec<(usize, Vec<f64>)>>,
    /// Locations that fell back to their mode-PMI codebook precoder.
    pub fallbacks: Vec<usize>,
}

fn representative(method: Representative, lat: &[(usize, LatentGaussian)]) -> Result<usize> {
    let gs: Vec<LatentGaussian> = lat.iter().map(|x| x.1.clone()).collect();
    match method {
        Representative::Mean => representative_mean(&gs),
        Representative::Kl => representative_kl(&gs),
    }
}

fn decode_precoder(model: &Vae, mu: &[f64], n_tx: usize) -> Result<CMatrix> {
    orthogonalize(&unflatten_precoder(&model.decode(mu)?, n_tx)?)
}

pub fn fix_vae(
    stage: &VaeStage,
    data: &TrackedDataset,
    codebook: &Codebook,
    link: &LinkConfig,
    method: Representative,
) -> Result<VaeFix> {
    let mut mu_star = BTreeMap::new();
    for (r, by_q) in &stage.latents {
        let v = by_q
            .iter()
            .map(|(q, lat)| Ok((*q, lat[representative(method, lat)?].1.mu.clone())))
            .collect::<Result<Vec<_>>>()?;
        mu_star.insert(*r, v);
    }
    let n_tx = data.n_tx();
    let fitted = par_map(stage.train.len(), |i| {
        let q = stage.train[i];
        let r = stage.rank_fix.fixed[&q];
        let reps = &mu_star[&r];
        let mu = &reps[reps.binary_search_by_key(&q, |x| x.0).map_err(|_| invalid("location missing its latent"))?].1;
        let (w, pmi, fell_back) = match decode_precoder(&stage.models[&r].model, mu, n_tx) {
            Ok(w) => (w, None, false),
            Err(e) => {
                log::warn!("location {q}: decoded precoder unusable ({e}); using the mode-PMI codebook precoder");
                let (pmi, w) = mode_pmi_precoder(data, codebook, link, q)?;
                (w, Some(pmi), true)
            }
        };
        let cqi = fix_cqi_vae(&cqi_history(data, link, q, &w)?)?;
        let rank = w.ncols();
        Ok((TransmissionParams { w, rank, cqi, provenance: Provenance::Fixed, pmi }, fell_back))
    })?;
    let fallbacks = stage.train.iter().zip(&fitted).filter(|(_, f)| f.1).map(|(q, _)| *q).collect();
    Ok(VaeFix { method, params: fitted.into_iter().map(|f| f.0).collect(), mu_star, fallbacks })
}

/// Parameters inferred at withheld locations.
#[derive(Debug, Clone)]
pub struct Inference {
    pub params: Vec<TransmissionParams>,
    pub rows: Vec<InferredRow>,
}

/// Rank by the nearest fixed ranks, precoder by regression over the
/// representative latent means, CQI by natural-neighbour interpolation of
/// the fixed CQIs. Only training channels are read, and only on fallback.
#[allow(clippy::too_many_arguments)]
pub fn infer_vae(
    stage: &VaeStage,
    fix: &VaeFix,
    data: &TrackedDataset,
    codebook: &Codebook,
    link: &LinkConfig,
    test: &[usize],
    gpr_cfg: &GprConfig,
    subset: GprSubset,
    n_ri: usize,
) -> Result<Inference> {
    let locs = data.locations();
    let train_locs: Vec<Location> = stage.train.iter().map(|&q| locs[q]).collect();
    let train_ranks: Vec<(Location, usize)> =
        stage.train.iter().map(|&q| (locs[q], stage.rank_fix.fixed[&q])).collect();
    let ranks = test.iter().map(|&q| infer_ri(&train_ranks, &locs[q], n_ri)).collect::<Result<Vec<_>>>()?;
    let nn = NaturalNeighbor::new(&train_locs.iter().map(|l| [l.coords[0], l.coords[1]]).collect::<Vec<_>>())?;
    let train_cqis: Vec<u8> = fix.params.iter().map(|p| p.cqi).collect();
    let mut out: Vec<Option<(TransmissionParams, InferredRow)>> = vec![None; test.len()];
    for r in ranks.iter().copied().collect::<BTreeSet<_>>() {
        let idx: Vec<usize> = (0..test.len()).filter(|&i| ranks[i] == r).collect();
        let pick = |only_fixed: bool| -> Vec<&(usize, Vec<f64>)> {
            fix.mu_star
                .get(&r)
                .into_iter()
                .flatten()
                .filter(|(q, _)| !only_fixed || stage.rank_fix.fixed.get(q) == Some(&r))
                .collect()
        };
        let mut set = pick(subset == GprSubset::FixedRank);
        if set.len() < 2 && subset == GprSubset::FixedRank {
            set = pick(false);
        }
        let model = if set.len() >= 2 {
            let inputs: Vec<[f64; 3]> = set.iter().map(|(q, _)| locs[*q].coords).collect();
            let outputs: Vec<Vec<f64>> = set.iter().map(|(_, m)| m.clone()).collect();
            match gpr_fit(&inputs, &outputs, gpr_cfg) {
                Ok(m) => {
                    log::info!("rank {r} regressor: {} points, γ={:.3e}, ζ={:.3e}", set.len(), m.gamma, m.zeta);
                    Some(m)
                }
                Err(e) => {
                    log::warn!("rank {r} regressor failed: {e}");
                    None
                }
            }
        } else {
            log::warn!("rank {r}: fewer than 2 regression points");
            None
        };
        let preds = model.as_ref().map(|m| m.predict(&idx.iter().map(|&i| locs[test[i]].coords).collect::<Vec<_>>()));
        for (j, &i) in idx.iter().enumerate() {
            let q = test[i];
            let cqi = nni_cqi_with(&nn, &train_cqis, [locs[q].coords[0], locs[q].coords[1]])?;
            let decoded = preds.as_ref().map(|p| decode_precoder(&stage.models[&r].model, &p[j], data.n_tx()));
            let (w, pmi, source) = match decoded {
                Some(Ok(w)) => (w, None, InferredSource::SvdGpr),
                other => {
                    if let Some(Err(e)) = other {
                        log::warn!("location {q}: inferred precoder unusable ({e}); copying the nearest codebook precoder");
                    }
                    let near = stage.train[nearest_index(&train_locs, &locs[q].coords).ok_or(Error::Empty("training set"))?];
                    let (pmi, w) = mode_pmi_precoder(data, codebook, link, near)?;
                    (w, Some(pmi), InferredSource::CodebookNn)
                }
            };
            let rank = w.ncols();
            out[i] = Some((
                TransmissionParams { w, rank, cqi, provenance: Provenance::Inferred, pmi },
                InferredRow { q, rank, cqi, source },
            ));
        }
    }
    let (params, rows) = out.into_iter().map(|o| o.expect("every query has a rank")).unzip();
    Ok(Inference { params, rows })
}
