//! Experiment configuration with a `key = value` file format.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::{Extents, SceneConfig};
use crate::error::{invalid, Error, Result};
use crate::linkphy::{LinkConfig, SinrForm};
use crate::spatial::{GprConfig, Jitter};
use crate::statfix::CqiVariant;
use crate::vae::VaeConfig;

/// How the representative latent of a location is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representative {
    /// Closest to the average mean and variance vectors.
    Mean,
    /// Smallest summed divergence to the other latents.
    Kl,
}

/// One transmission scheme under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Clsm,
    /// CLSM applying the parameters selected `d` TTIs earlier.
    ClsmDelayed(usize),
    Statfix(CqiVariant),
    Vae(Representative),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Clsm => write!(f, "clsm"),
            Scheme::ClsmDelayed(d) => write!(f, "clsm-delayed:{d}"),
            Scheme::Statfix(v) => write!(f, "statfix:{}", *v as u32),
            Scheme::Vae(Representative::Mean) => write!(f, "vae:mean"),
            Scheme::Vae(Representative::Kl) => write!(f, "vae:kl"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        match (head, arg) {
            ("clsm", "") => Ok(Scheme::Clsm),
            ("clsm-delayed", d) => {
                let d = d.parse().map_err(|_| invalid(format!("bad delay in scheme `{s}`")))?;
                Ok(Scheme::ClsmDelayed(d))
            }
            ("statfix", v) => {
                let v = v.parse().map_err(|_| invalid(format!("bad variant in scheme `{s}`")))?;
                Ok(Scheme::Statfix(CqiVariant::from_index(v)?))
            }
            ("vae", "mean") => Ok(Scheme::Vae(Representative::Mean)),
            ("vae", "kl") => Ok(Scheme::Vae(Representative::Kl)),
            _ => Err(invalid(format!(
                "unknown scheme `{s}` (expected clsm, clsm-delayed:D, statfix:1|2|3, vae:mean, vae:kl)"
            ))),
        }
    }
}

/// Which locations train the per-rank regressors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GprSubset {
    /// Locations whose fixed rank equals the regressor's rank, widened to
    /// all rank-compatible locations when fewer than two qualify.
    #[default]
    FixedRank,
    /// All locations whose modal rank supports the regressor's rank.
    RankCompatible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Dataset file; generated from `scene` when absent.
    pub dataset: Option<PathBuf>,
    pub scheme: Scheme,
    pub link: LinkConfig,
    pub vae: VaeConfig,
    pub gpr: GprConfig,
    pub gpr_subset: GprSubset,
    /// Rank-fixing threshold in percent.
    pub cthold: f64,
    /// Neighbours consulted for the inferred rank.
    pub n_ri: usize,
    /// Training share of the kept grid locations.
    pub split_ratio: f64,
    pub out_dir: PathBuf,
    /// Seeds the channel generator and the VAE training streams.
    pub seed: u64,
    pub scene: SceneConfig,
    pub t: usize,
    pub k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            scheme: Scheme::Clsm,
            link: LinkConfig::default(),
            vae: VaeConfig::default(),
            gpr: GprConfig::default(),
            gpr_subset: GprSubset::FixedRank,
            cthold: 100.0,
            n_ri: 4,
            split_ratio: 0.8,
            out_dir: PathBuf::from("out"),
            seed: 0,
            scene: SceneConfig::default(),
            t: 50,
            k: 24,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| invalid(format!("`{key}`: cannot parse `{v}`")))
}

fn pair<T: FromStr>(key: &str, v: &str) -> Result<(T, T)> {
    let (a, b) = v.split_once(['x', ',']).ok_or_else(|| invalid(format!("`{key}`: expected AxB, got `{v}`")))?;
    Ok((num(key, a.trim())?, num(key, b.trim())?))
}

impl ExperimentConfig {
    pub fn extents(&self) -> Extents {
        Extents { t: self.t, k: self.k, q: self.scene.num_locations() }
    }

    /// VAE settings with the experiment seed applied.
    pub fn vae_config(&self) -> VaeConfig {
        VaeConfig { seed: self.seed, ..self.vae.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.vae.validate()?;
        self.scene.validate()?;
        if !(self.cthold > 0.0 && self.cthold <= 100.0) {
            return Err(invalid(format!("cthold {} outside (0, 100]", self.cthold)));
        }
        if self.n_ri == 0 {
            return Err(invalid("n_ri must be positive"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(invalid(format!("split ratio {} outside (0, 1)", self.split_ratio)));
        }
        if self.t == 0 || self.k == 0 {
            return Err(invalid("t and k must be positive"));
        }
        Ok(())
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "scheme" => self.scheme = v.parse()?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            "cthold" => self.cthold = num(key, v)?,
            "n_ri" => self.n_ri = num(key, v)?,
            "split_ratio" => self.split_ratio = num(key, v)?,
            "t" => self.t = num(key, v)?,
            "k" => self.k = num(key, v)?,
            "gpr_subset" => {
                self.gpr_subset = match v {
                    "fixed" => GprSubset::FixedRank,
                    "compatible" => GprSubset::RankCompatible,
                    _ => return Err(invalid(format!("`{key}`: expected fixed or compatible"))),
                }
            }
            "link.noise_variance" => self.link.noise_variance = num(key, v)?,
            "link.alpha" => self.link.alpha = num(key, v)?,
            "link.bler_slope" => self.link.bler_slope = num(key, v)?,
            "link.snr_gap_db" => self.link.snr_gap_db = num(key, v)?,
            "link.n_re" => self.link.n_re = num(key, v)?,
            "link.sinr_form" => {
                self.link.sinr_form = match v {
                    "squared" => SinrForm::Squared,
                    "literal" => SinrForm::Literal,
                    _ => return Err(invalid(format!("`{key}`: expected squared or literal"))),
                }
            }
            "vae.hidden" => self.vae.hidden = pair(key, v)?,
            "vae.latent_per_rank" => self.vae.latent_per_rank = num(key, v)?,
            "vae.beta" => self.vae.beta = num(key, v)?,
            "vae.batch_size" => self.vae.batch_size = num(key, v)?,
            "vae.epochs" => self.vae.epochs = num(key, v)?,
            "vae.learning_rate" => self.vae.learning_rate = num(key, v)?,
            "vae.leaky_slope" => self.vae.leaky_slope = num(key, v)?,
            "vae.logvar_clamp" => self.vae.logvar_clamp = num(key, v)?,
            "gpr.grid_points" => self.gpr.grid_points = num(key, v)?,
            "gpr.refine_steps" => self.gpr.refine_steps = num(key, v)?,
            "gpr.jitter" => {
                self.gpr.jitter = match v.split_once(':') {
                    Some(("rel", f)) => Jitter::Relative(num(key, f)?),
                    Some(("abs", f)) => Jitter::Absolute(num(key, f)?),
                    _ => return Err(invalid(format!("`{key}`: expected rel:F or abs:V"))),
                }
            }
            "scene.grid" => (self.scene.grid_rows, self.scene.grid_cols) = pair(key, v)?,
            "scene.spacing_m" => self.scene.spacing_m = num(key, v)?,
            "scene.jitter" => self.scene.jitter = num(key, v)?,
            "scene.n_paths" => self.scene.n_paths = num(key, v)?,
            "scene.subrays" => self.scene.subrays = num(key, v)?,
            "scene.angular_spread_deg" => self.scene.angular_spread_deg = num(key, v)?,
            "scene.rician_k_db" => self.scene.rician_k_db = num(key, v)?,
            "scene.path_loss_exponent" => self.scene.path_loss_exponent = num(key, v)?,
            "scene.shadowing_db" => self.scene.shadowing_db = num(key, v)?,
            "scene.noise_variance" => self.scene.noise_variance = num(key, v)?,
            _ => return Err(invalid(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }
}
