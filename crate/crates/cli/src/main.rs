use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fdmimo::channel::save_dataset;
use fdmimo::harness::{
    load_or_generate, report, scheme_slug, svd_slots, write_params_csv, write_scheme_outputs, ExperimentConfig,
    MetricsReport, Phase, Representative, Scheme, Study, TrackedDataset,
};
use fdmimo::selection::write_selection_csv;
use fdmimo::spatial::write_inferred_csv;
use fdmimo::statfix::{write_fixed_csv, CqiVariant, FixedRow};
use fdmimo::vae::{build_precoder_dataset, save_vae, train, write_latent_csv, LatentRow};

#[derive(Parser)]
#[command(name = "fdmimo", version, about = "Transmission-parameter fixing and inference from channel history")]
struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset file; generated from the scene settings when absent.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic channel dataset.
    Gen {
        /// Defaults to `<out>/dataset.fdm`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the codebook table.
    Codebook,
    /// Closed-loop selection, optionally applied with a feedback delay.
    Clsm {
        #[arg(long, default_value_t = 0)]
        delay: usize,
    },
    /// Codebook parameters fixed by history statistics.
    Statfix {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        variant: u32,
    },
    /// Train the model of one rank and export its latents.
    VaeTrain {
        #[arg(long)]
        rank: usize,
    },
    /// Fix SVD-approach parameters at the training locations.
    VaeFix {
        #[arg(long, default_value = "mean")]
        method: String,
        #[arg(long)]
        cthold: Option<f64>,
    },
    /// Infer parameters at the withheld locations.
    Infer {
        #[arg(long)]
        nri: Option<usize>,
        #[arg(long, default_value = "mean")]
        method: String,
    },
    /// Evaluate one scheme on both location sets.
    Eval {
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Compare schemes against zero-delay CLSM.
    Report {
        /// Comma-separated schemes run on one dataset.
        #[arg(long, default_value = "clsm,clsm-delayed:1,statfix:1,statfix:2,statfix:3,vae:mean,vae:kl")]
        schemes: String,
        /// Compare existing `<scheme>_train.csv`-style tables instead.
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

fn method(s: &str) -> Result<Representative> {
    Ok(match s {
        "mean" => Representative::Mean,
        "kl" => Representative::Kl,
        _ => bail!("method must be mean or kl, got `{s}`"),
    })
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    for kv in &cli.sets {
        let (k, v) = kv.split_once('=').with_context(|| format!("`--set {kv}`: expected KEY=VALUE"))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn writer(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn print_report(r: &MetricsReport, set: &str) {
    let gap = r.gap_ratio.map_or(String::new(), |g| format!("  gap vs clsm {:+.2}%", 100.0 * g));
    println!(
        "{:<16} {set:<5} {:>4} locations  mean {:>9.1} bits/TTI ({:.3} Mbit/s){gap}",
        r.scheme,
        r.locations.len(),
        r.overall_mean,
        fdmimo::harness::mbps(r.overall_mean)
    );
}

/// Reads a `q, x, y, bits_per_tti, ...` table written by `eval`.
fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut locs, mut vals) = (vec![], vec![]);
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> { Ok(rec.get(i).context("short row")?.parse()?) };
        locs.push(fdmimo::channel::Location { q: rec.get(0).context("short row")?.parse()?, coords: [f(1)?, f(2)?, 0.0] });
        vals.push(f(3)?);
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report").to_string();
    Ok(MetricsReport::new(name, locs, vals)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    let started = Instant::now();

    if let Cmd::Report { inputs, .. } = &cli.cmd {
        if !inputs.is_empty() {
            let reports = inputs.iter().map(|p| read_metrics(p)).collect::<Result<Vec<_>>>()?;
            return write_comparison(&out, "compare", &reports);
        }
    }
    if let Cmd::Codebook = cli.cmd {
        let beams = fdmimo::codebook::BeamConfig::new(cfg.scene.n1, cfg.scene.n2, 4, if cfg.scene.n2 > 1 { 4 } else { 1 });
        let cb = fdmimo::codebook::build_codebook(&beams, cfg.scene.n_rx.min(fdmimo::codebook::MAX_LAYERS))?;
        cb.write_csv(writer(&out, "codebook.csv")?)?;
        println!("{} entries, {} beams -> {}", cb.len(), cb.beams().len(), out.join("codebook.csv").display());
        return Ok(());
    }

    let ds = load_or_generate(&cfg)?;
    log::info!("dataset ready in {:.1?}", started.elapsed());
    match &cli.cmd {
        Cmd::Gen { output } => {
            let path = output.clone().unwrap_or_else(|| out.join("dataset.fdm"));
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            save_dataset(&ds, &path)?;
            let e = ds.extents();
            println!("{} samples × {} subcarriers × {} locations -> {}", e.t, e.k, e.q, path.display());
        }
        Cmd::Clsm { delay } => {
            let mut st = Study::new(&ds, &cfg)?;
            let scheme = if *delay == 0 { Scheme::Clsm } else { Scheme::ClsmDelayed(*delay) };
            let res = st.run(scheme)?;
            let recs: Vec<_> = st.clsm_train_records()?.iter().flatten().cloned().collect();
            write_selection_csv(&recs, writer(&out, "clsm_train_selection.csv")?)?;
            finish(&out, &res)?;
        }
        Cmd::Statfix { variant } => {
            let v = CqiVariant::from_index(*variant)?;
            let mut st = Study::new(&ds, &cfg)?;
            let res = st.run(Scheme::Statfix(v))?;
            let rows: Vec<FixedRow> = res
                .train
                .locations
                .iter()
                .zip(&res.train_params)
                .map(|(l, p)| FixedRow { q: l.q as usize, pmi: p.pmi.unwrap_or(0), rank: p.rank, cqi: p.cqi })
                .collect();
            write_fixed_csv(&rows, writer(&out, &format!("statfix_{variant}_fixed.csv"))?)?;
            finish(&out, &res)?;
        }
        Cmd::VaeTrain { rank } => {
            let st = Study::new(&ds, &cfg)?;
            let train_locs = st.split().train.clone();
            let data = TrackedDataset::new(&ds, &st.split().test);
            data.set_phase(Phase::Fitting);
            let slots = svd_slots(&data, &cfg.link, &train_locs)?;
            let pos: BTreeMap<usize, usize> = train_locs.iter().enumerate().map(|(i, &q)| (q, i)).collect();
            let hist: Vec<(usize, Vec<usize>)> =
                train_locs.iter().zip(&slots).map(|(&q, s)| (q, s.iter().map(|x| x.best_rank).collect())).collect();
            let max_rank = ds.max_layers().min(fdmimo::codebook::MAX_LAYERS);
            let pds = build_precoder_dataset(&hist, *rank, max_rank, |t, q| Ok(slots[pos[&q]][t].per_rank[rank - 1].clone()))?;
            let mut vcfg = cfg.vae_config();
            vcfg.seed = vcfg.seed.wrapping_add(*rank as u64);
            let trained = train(&pds.samples, *rank, &vcfg)?;
            fs::create_dir_all(&out)?;
            save_vae(&trained.model, out.join(format!("vae_rank{rank}.fdmvae")))?;
            let rows = pds
                .ids
                .iter()
                .zip(&pds.samples)
                .map(|(&(q, t), s)| Ok(LatentRow { q, t, latent: trained.model.encode(s)? }))
                .collect::<Result<Vec<_>>>()?;
            write_latent_csv(&rows, writer(&out, &format!("latents_rank{rank}.csv"))?)?;
            println!(
                "rank {rank}: {} samples, loss {:.4e} -> {:.4e} over {} epochs",
                pds.samples.len(),
                trained.loss_trace.first().copied().unwrap_or(f64::NAN),
                trained.loss_trace.last().copied().unwrap_or(f64::NAN),
                trained.loss_trace.len()
            );
        }
        Cmd::VaeFix { method: m, cthold } => {
            let mut cfg = cfg.clone();
            if let Some(c) = cthold {
                cfg.cthold = *c;
            }
            let m = method(m)?;
            let mut st = Study::new(&ds, &cfg)?;
            let fix = st.vae_fix(m)?;
            let qs: Vec<u32> = st.split().train.iter().map(|&q| ds.locations()[q].q).collect();
            let name = format!("{}_fixed.csv", scheme_slug(Scheme::Vae(m)));
            write_params_csv(&qs, &fix.params, writer(&out, &name)?)?;
            println!("{} locations fixed, {} fallbacks -> {}", fix.params.len(), fix.fallbacks.len(), out.join(name).display());
        }
        Cmd::Infer { nri, method: m } => {
            let mut cfg = cfg.clone();
            if let Some(n) = nri {
                cfg.n_ri = *n;
            }
            let m = method(m)?;
            let mut st = Study::new(&ds, &cfg)?;
            let (_, inf) = st.vae_infer(m)?;
            let name = format!("{}_inferred.csv", scheme_slug(Scheme::Vae(m)));
            write_inferred_csv(&inf.rows, writer(&out, &name)?)?;
            println!("{} locations inferred -> {}", inf.rows.len(), out.join(name).display());
        }
        Cmd::Eval { scheme } => {
            let scheme: Scheme = match scheme {
                Some(s) => s.parse()?,
                None => cfg.scheme,
            };
            let mut st = Study::new(&ds, &cfg)?;
            let res = st.run(scheme)?;
            println!("test-location reads while fitting: {}", st.access().test_reads_while_fitting());
            finish(&out, &res)?;
        }
        Cmd::Report { schemes, .. } => {
            let list = schemes.split(',').map(|s| s.parse::<Scheme>()).collect::<Result<Vec<_>, _>>()?;
            if list.first() != Some(&Scheme::Clsm) {
                bail!("the first scheme must be clsm (the baseline)");
            }
            let mut st = Study::new(&ds, &cfg)?;
            let (mut train_r, mut test_r) = (vec![], vec![]);
            for s in list {
                let t0 = Instant::now();
                let res = st.run(s)?;
                log::info!("{s} done in {:.1?}", t0.elapsed());
                write_scheme_outputs(&out, &res)?;
                print_report(&res.train, "train");
                train_r.push(res.train);
                if let Some(t) = res.test {
                    print_report(&t, "test");
                    test_r.push(t);
                }
            }
            let reads = st.access().test_reads_while_fitting();
            println!("test-location reads while fitting: {reads}");
            write_comparison(&out, "train", &train_r)?;
            if !test_r.is_empty() {
                write_comparison(&out, "test", &test_r)?;
            }
        }
        Cmd::Codebook => unreachable!(),
    }
    log::info!("finished in {:.1?}", started.elapsed());
    Ok(())
}

fn finish(out: &Path, res: &fdmimo::harness::SchemeOutput) -> Result<()> {
    let files = write_scheme_outputs(out, res)?;
    print_report(&res.train, "train");
    if let Some(t) = &res.test {
        print_report(t, "test");
    }
    println!("wrote {} to {}", files.join(", "), out.display());
    Ok(())
}

fn write_comparison(out: &Path, tag: &str, reports: &[MetricsReport]) -> Result<()> {
    let c = report(reports)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(format!("comparison_{tag}.csv")), &c.csv)?;
    fs::write(out.join(format!("rows_{tag}.csv")), &c.rows_csv)?;
    fs::write(out.join(format!("summary_{tag}.txt")), &c.summary)?;
    print!("{}", c.summary);
    Ok(())
}
