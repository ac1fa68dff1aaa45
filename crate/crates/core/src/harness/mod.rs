//! Experiment orchestration: runs each scheme on the training and withheld
//! locations of one dataset and summarizes throughput against CLSM.
//!
//! A [`Study`] caches the expensive stages (CLSM search, SVD search, model
//! training) so several schemes can be compared on one dataset. Every
//! channel read passes through [`TrackedDataset`], which records whether it
//! happened while fitting or while evaluating.

mod access;
mod config;
mod metrics;
mod pipeline;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use access::{AccessRecord, Phase, TrackedDataset};
pub use config::{ExperimentConfig, GprSubset, Representative, Scheme};
pub use metrics::{gap_ratio, mbps, report, Comparison, MetricsReport, RowStats, ZERO_THRESHOLD_BITS};
pub use pipeline::{
    clsm_histories, clsm_throughput, fit_vae_stage, fix_vae, fixed_throughput, infer_vae, statfix_histories, svd_slot,
    svd_slots, time_means, Inference, SvdSlot, VaeFix, VaeStage,
};

use crate::channel::{generate_dataset, load_dataset, split_grid, ChannelDataset, GridSplit};
use crate::codebook::{build_codebook, BeamConfig, Codebook, MAX_LAYERS};
use crate::error::{invalid, Error, Result};
use crate::selection::{SelectionRecord, TransmissionParams};
use crate::spatial::{write_inferred_csv, InferredRow};
use crate::statfix::{fix_codebook_params, nearest_neighbor_infer, ParamHistory};

/// Loads the configured dataset, or generates it from the scene settings.
pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<ChannelDataset> {
    match &cfg.dataset {
        Some(p) => load_dataset(p),
        None => generate_dataset(&cfg.scene, cfg.seed, cfg.extents()),
    }
}

/// Outcome of one scheme.
#[derive(Debug, Clone)]
pub struct SchemeOutput {
    pub scheme: Scheme,
    pub train: MetricsReport,
    pub test: Option<MetricsReport>,
    /// Fixed parameters at the training locations (empty for CLSM).
    pub train_params: Vec<TransmissionParams>,
    /// Parameters inferred at the withheld locations (empty for CLSM).
    pub test_params: Vec<TransmissionParams>,
    /// Provenance of the inferred parameters (VAE pipeline only).
    pub inferred: Vec<InferredRow>,
    /// Training locations whose decoded precoder was replaced.
    pub fallbacks: Vec<usize>,
}

/// Scheme runner over one dataset and split.
pub struct Study<'a> {
    cfg: ExperimentConfig,
    data: TrackedDataset<'a>,
    split: GridSplit,
    codebook: Codebook,
    clsm_train: Option<Vec<Vec<SelectionRecord>>>,
    clsm_test: Option<Vec<Vec<SelectionRecord>>>,
    statfix_hist: Option<Vec<ParamHistory>>,
    vae_stage: Option<VaeStage>,
    baseline: Option<(MetricsReport, Option<MetricsReport>)>,
}

impl<'a> Study<'a> {
    /// Splits the grid per `cfg.split_ratio`.
    pub fn new(ds: &'a ChannelDataset, cfg: &ExperimentConfig) -> Result<Self> {
        let split = split_grid(ds, cfg.split_ratio)?;
        Self::with_split(ds, cfg, split)
    }

    /// Uses an explicit split; `test` may be empty.
    pub fn with_split(ds: &'a ChannelDataset, cfg: &ExperimentConfig, split: GridSplit) -> Result<Self> {
        cfg.validate()?;
        if split.train.is_empty() {
            return Err(Error::Empty("training locations"));
        }
        let n = ds.locations().len();
        if split.train.iter().chain(&split.test).any(|&q| q >= n) {
            return Err(invalid("split refers to a location outside the dataset"));
        }
        let (n1, n2) = (cfg.scene.n1, cfg.scene.n2);
        let beams = BeamConfig::new(n1, n2, 4, if n2 > 1 { 4 } else { 1 });
        if beams.n_tx() != ds.n_tx() {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} ports, configured panel {}",
                ds.n_tx(),
                beams.n_tx()
            )));
        }
        let codebook = build_codebook(&beams, ds.max_layers().min(MAX_LAYERS))?;
        Ok(Self {
            cfg: cfg.clone(),
            data: TrackedDataset::new(ds, &split.test),
            split,
            codebook,
            clsm_train: None,
            clsm_test: None,
            statfix_hist: None,
            vae_stage: None,
            baseline: None,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn split(&self) -> &GridSplit {
        &self.split
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn access(&self) -> &TrackedDataset<'a> {
        &self.data
    }

    pub fn vae_stage(&self) -> Option<&VaeStage> {
        self.vae_stage.as_ref()
    }

    /// CLSM decisions at the training locations, computed while fitting.
    pub fn clsm_train_records(&mut self) -> Result<&[Vec<SelectionRecord>]> {
        if self.clsm_train.is_none() {
            self.data.set_phase(Phase::Fitting);
            self.clsm_train = Some(clsm_histories(&self.data, &self.codebook, &self.cfg.link, &self.split.train)?);
        }
        Ok(self.clsm_train.as_deref().unwrap())
    }

    fn clsm_test_records(&mut self) -> Result<&[Vec<SelectionRecord>]> {
        if self.clsm_test.is_none() {
            self.data.set_phase(Phase::Evaluation);
            self.clsm_test = Some(clsm_histories(&self.data, &self.codebook, &self.cfg.link, &self.split.test)?);
        }
        Ok(self.clsm_test.as_deref().unwrap())
    }

    fn report_for(&self, name: &str, locs: &[usize], per_slot: &[Vec<f64>]) -> Result<MetricsReport> {
        let l = locs.iter().map(|&q| self.data.locations()[q]).collect();
        MetricsReport::new(name, l, time_means(per_slot))
    }

    fn clsm_reports(&mut self, delay: usize) -> Result<(MetricsReport, Option<MetricsReport>)> {
        let name = if delay == 0 { Scheme::Clsm } else { Scheme::ClsmDelayed(delay) }.to_string();
        self.clsm_train_records()?;
        self.data.set_phase(Phase::Evaluation);
        let link = self.cfg.link.clone();
        let tr = clsm_throughput(&self.data, &link, &self.split.train, self.clsm_train.as_ref().unwrap(), delay)?;
        let train = self.report_for(&name, &self.split.train, &tr)?;
        let test = if self.split.test.is_empty() {
            None
        } else {
            self.clsm_test_records()?;
            let te = clsm_throughput(&self.data, &link, &self.split.test, self.clsm_test.as_ref().unwrap(), delay)?;
            Some(self.report_for(&name, &self.split.test, &te)?)
        };
        Ok((train, test))
    }

    /// Zero-delay CLSM reports on both location sets.
    pub fn baseline(&mut self) -> Result<(MetricsReport, Option<MetricsReport>)> {
        if self.baseline.is_none() {
            self.baseline = Some(self.clsm_reports(0)?);
        }
        Ok(self.baseline.clone().unwrap())
    }

    fn ensure_vae_stage(&mut self) -> Result<()> {
        if self.vae_stage.is_none() {
            self.data.set_phase(Phase::Fitting);
            let vcfg = self.cfg.vae_config();
            self.vae_stage = Some(fit_vae_stage(&self.data, &self.cfg.link, &self.split.train, &vcfg, self.cfg.cthold)?);
        }
        Ok(())
    }

    fn evaluate_fixed(
        &mut self,
        scheme: Scheme,
        train_params: Vec<TransmissionParams>,
        test_params: Vec<TransmissionParams>,
        inferred: Vec<InferredRow>,
        fallbacks: Vec<usize>,
    ) -> Result<SchemeOutput> {
        let (base_train, base_test) = self.baseline()?;
        let name = scheme.to_string();
        self.data.set_phase(Phase::Evaluation);
        let tr = fixed_throughput(&self.data, &self.cfg.link, &self.split.train, &train_params)?;
        let mut train = self.report_for(&name, &self.split.train, &tr)?;
        train.compare_to(&base_train)?;
        let test = match base_test {
            Some(bt) => {
                let te = fixed_throughput(&self.data, &self.cfg.link, &self.split.test, &test_params)?;
                let mut r = self.report_for(&name, &self.split.test, &te)?;
                r.compare_to(&bt)?;
                Some(r)
            }
            None => None,
        };
        Ok(SchemeOutput { scheme, train, test, train_params, test_params, inferred, fallbacks })
    }

    /// Runs one scheme; reports carry gap ratios against zero-delay CLSM.
    pub fn run(&mut self, scheme: Scheme) -> Result<SchemeOutput> {
        match scheme {
            Scheme::Clsm | Scheme::ClsmDelayed(_) => {
                let delay = if let Scheme::ClsmDelayed(d) = scheme { d } else { 0 };
                let (base_train, base_test) = self.baseline()?;
                let (mut train, mut test) = self.clsm_reports(delay)?;
                train.compare_to(&base_train)?;
                if let (Some(t), Some(b)) = (test.as_mut(), base_test.as_ref()) {
                    t.compare_to(b)?;
                }
                Ok(SchemeOutput {
                    scheme,
                    train,
                    test,
                    train_params: vec![],
                    test_params: vec![],
                    inferred: vec![],
                    fallbacks: vec![],
                })
            }
            Scheme::Statfix(variant) => {
                if self.statfix_hist.is_none() {
                    self.clsm_train_records()?;
                    self.data.set_phase(Phase::Fitting);
                    self.statfix_hist = Some(statfix_histories(
                        &self.data,
                        &self.codebook,
                        &self.cfg.link,
                        &self.split.train,
                        self.clsm_train.as_ref().unwrap(),
                        true,
                    )?);
                }
                let train_params = self
                    .statfix_hist
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|h| fix_codebook_params(h, variant, &self.codebook))
                    .collect::<Result<Vec<_>>>()?;
                let locs = self.data.locations();
                let map: Vec<_> = self.split.train.iter().map(|&q| locs[q]).zip(train_params.iter().cloned()).collect();
                let test_params =
                    self.split.test.iter().map(|&q| nearest_neighbor_infer(&map, &locs[q])).collect::<Result<Vec<_>>>()?;
                self.evaluate_fixed(scheme, train_params, test_params, vec![], vec![])
            }
            Scheme::Vae(method) => {
                let (fix, inf) = self.vae_infer(method)?;
                self.evaluate_fixed(scheme, fix.params, inf.params, inf.rows, fix.fallbacks)
            }
        }
    }

    /// Fixed SVD-approach parameters at the training locations.
    pub fn vae_fix(&mut self, method: Representative) -> Result<VaeFix> {
        self.ensure_vae_stage()?;
        self.data.set_phase(Phase::Fitting);
        fix_vae(self.vae_stage.as_ref().unwrap(), &self.data, &self.codebook, &self.cfg.link, method)
    }

    /// Fixed parameters plus those inferred at the withheld locations.
    pub fn vae_infer(&mut self, method: Representative) -> Result<(VaeFix, Inference)> {
        let fix = self.vae_fix(method)?;
        let inf = if self.split.test.is_empty() {
            Inference { params: vec![], rows: vec![] }
        } else {
            infer_vae(
                self.vae_stage.as_ref().unwrap(),
                &fix,
                &self.data,
                &self.codebook,
                &self.cfg.link,
                &self.split.test,
                &self.cfg.gpr,
                self.cfg.gpr_subset,
                self.cfg.n_ri,
            )?
        };
        Ok((fix, inf))
    }
}

/// File-name form of a scheme (`:` replaced).
pub fn scheme_slug(s: Scheme) -> String {
    s.to_string().replace(':', "_")
}

/// Writes `q, rank, cqi, pmi, provenance` rows.
pub fn write_params_csv<W: Write>(locs: &[u32], params: &[TransmissionParams], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["q", "rank", "cqi", "pmi", "provenance"])?;
    for (q, p) in locs.iter().zip(params) {
        let pmi = p.pmi.map_or(String::new(), |v| v.to_string());
        out.write_record([q.to_string(), p.rank.to_string(), p.cqi.to_string(), pmi, p.provenance.as_str().to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes the metrics, parameter and provenance tables of one scheme into
/// `dir`, returning the file names.
pub fn write_scheme_outputs(dir: &Path, out: &SchemeOutput) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let slug = scheme_slug(out.scheme);
    let mut names = vec![];
    let name = format!("{slug}_train.csv");
    out.train.write_csv(create(dir, &name)?)?;
    names.push(name);
    if let Some(t) = &out.test {
        let name = format!("{slug}_test.csv");
        t.write_csv(create(dir, &name)?)?;
        names.push(name);
    }
    if !out.train_params.is_empty() {
        let name = format!("{slug}_train_params.csv");
        let qs: Vec<u32> = out.train.locations.iter().map(|l| l.q).collect();
        write_params_csv(&qs, &out.train_params, create(dir, &name)?)?;
        names.push(name);
    }
    if let (Some(t), false) = (&out.test, out.test_params.is_empty()) {
        let name = format!("{slug}_test_params.csv");
        let qs: Vec<u32> = t.locations.iter().map(|l| l.q).collect();
        write_params_csv(&qs, &out.test_params, create(dir, &name)?)?;
        names.push(name);
    }
    if !out.inferred.is_empty() {
        let name = format!("{slug}_inferred.csv");
        write_inferred_csv(&out.inferred, create(dir, &name)?)?;
        names.push(name);
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Extents, SceneConfig};

    fn tiny() -> (ChannelDataset, ExperimentConfig) {
        let mut cfg = ExperimentConfig { t: 4, k: 2, ..ExperimentConfig::default() };
        cfg.scene = SceneConfig { grid_rows: 1, grid_cols: 1, ..SceneConfig::default() };
        let ds = generate_dataset(&cfg.scene, 3, Extents { t: 4, k: 2, q: 1 }).unwrap();
        (ds, cfg)
    }

    #[test]
    fn single_location_statfix_equals_direct_evaluation() {
        let (ds, cfg) = tiny();
        let split = GridSplit { train: vec![0], test: vec![] };
        let mut st = Study::with_split(&ds, &cfg, split).unwrap();
        let out = st.run(Scheme::Statfix(crate::statfix::CqiVariant::ClsmMode)).unwrap();
        assert!(out.test.is_none());
        let p = &out.train_params[0];
        let direct: f64 =
            (0..4).map(|t| crate::linkphy::throughput(&ds.slice(t, 0), p, &cfg.link).unwrap()).sum::<f64>() / 4.0;
        assert_eq!(out.train.per_location[0], direct);
        assert_eq!(st.access().test_reads_while_fitting(), 0);
    }

    #[test]
    fn zero_delay_equals_plain_clsm() {
        let (ds, cfg) = tiny();
        let mut st = Study::with_split(&ds, &cfg, GridSplit { train: vec![0], test: vec![] }).unwrap();
        let a = st.run(Scheme::Clsm).unwrap();
        let b = st.run(Scheme::ClsmDelayed(0)).unwrap();
        assert_eq!(a.train.per_location, b.train.per_location);
        assert_eq!(a.train.gap_ratio, Some(0.0));
    }
}
