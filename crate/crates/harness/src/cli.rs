//! `hebm` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hebm_core::generator::{infer_mean, ObservationKind};
use hebm_core::rng::{phase, RngStream};
use hebm_core::synthesis::{hierarchical_resample, StepTrajectory};
use hebm_core::tasks::{auroc, controllable_sample, ood_score_inference, ood_scores_diffusion, SymbolVector};
use hebm_core::uspace::{to_base, to_latent};

use crate::checkpoint::{inspect_checkpoint, load_checkpoint, save_checkpoint, ModelBundle, FORMAT_VERSION};
use crate::config::RunConfig;
use crate::data::{gen_synthetic, nearest_ring_mode, read_csv, write_csv, Dataset, DatasetKind};
use crate::error::{HarnessError, Result};
use crate::metrics::MetricsLog;
use crate::pgm::write_grid;
use crate::pipeline::{self, AblationParam, Backbone};

pub const THREADS_ENV: &str = "HEBM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hebm", about = "Two-stage hierarchical latent EBM: train, sample, control and score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct FromCheckpoint {
    #[command(flatten)]
    common: Common,
    /// Input checkpoint; defaults to the stage's file in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scheme {
    Diffusion,
    Inference,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured dataset as CSV.
    GenData(Common),
    /// Train the first-stage generator and inference nets.
    TrainGenerator(Common),
    /// Train the conditional EBM prior on a trained generator.
    TrainPrior(FromCheckpoint),
    /// Train the label-coupled prior on a trained generator.
    TrainCoupled(FromCheckpoint),
    /// Draw samples from the EBM prior (or the Gaussian prior).
    Sample {
        #[command(flatten)]
        input: FromCheckpoint,
        #[arg(long)]
        n: Option<usize>,
        /// Use the first-stage Gaussian prior instead of the EBM.
        #[arg(long)]
        gaussian: bool,
        /// Also write per-step log densities along the chains.
        #[arg(long)]
        trajectory: bool,
    },
    /// Resample chosen layers of one encoded data point.
    Hsample {
        #[command(flatten)]
        input: FromCheckpoint,
        /// Layers to resample, bottom layer = 0.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
        /// Index of the reference point in the configured dataset.
        #[arg(long, default_value_t = 0)]
        reference: usize,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Sample conditioned on symbols; `-` leaves a block free.
    Control {
        #[command(flatten)]
        input: FromCheckpoint,
        #[arg(long, value_delimiter = ',', required = true)]
        label: Vec<String>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Score held-out data against an OOD set and report AUROC.
    Ood {
        #[command(flatten)]
        input: FromCheckpoint,
        /// Config whose dataset is the OOD set.
        #[arg(long, conflicts_with = "ood_data")]
        ood_config: Option<PathBuf>,
        /// CSV file holding the OOD set.
        #[arg(long)]
        ood_data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Scheme::Diffusion)]
        scheme: Scheme,
        /// First scored layer; defaults to `ood_k` from the config.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 500)]
        n: usize,
    },
    /// Retrain the prior for each value of one sampler setting.
    Ablate {
        #[command(flatten)]
        input: FromCheckpoint,
        /// K, T or a.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Print a checkpoint's manifest.
    Inspect {
        checkpoint: PathBuf,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Sizes the global thread pool from `HEBM_THREADS` (unset or 0 = automatic).
pub fn configure_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| HarnessError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    // a pool that already exists (repeated calls in one process) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// The checkpoint's config with the keys of `--config` applied on top.
fn load_bundle(input: &FromCheckpoint, default_name: &str) -> Result<(ModelBundle, RunConfig)> {
    let base = load_config(&input.common)?;
    let path = input
        .checkpoint
        .clone()
        .unwrap_or_else(|| base.output_dir.join(default_name));
    let bundle = load_checkpoint(&path)?;
    let mut cfg = match &input.common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| crate::config::usage(p, e))?;
            bundle.config.merged(&v, p)?
        }
        None => bundle.config.clone(),
    };
    if let Some(out) = &input.common.out {
        cfg.output_dir = out.clone();
    }
    Ok((bundle, cfg))
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    Ok(cfg.output_dir.join(name))
}

fn write_points(path: &Path, points: Vec<Vec<f64>>) -> Result<()> {
    write_csv(path, &Dataset { points, labels: None })
}

fn is_image(cfg: &RunConfig) -> bool {
    cfg.dataset == DatasetKind::IdxImages
}

fn image_side(dim: usize) -> Option<usize> {
    let s = (dim as f64).sqrt().round() as usize;
    (s * s == dim).then_some(s)
}

fn write_image_grid(cfg: &RunConfig, name: &str, data: &[Vec<f64>]) -> Result<Option<PathBuf>> {
    if !is_image(cfg) || data.is_empty() {
        return Ok(None);
    }
    let Some(side) = image_side(data[0].len()) else {
        return Ok(None);
    };
    let path = out_path(cfg, name)?;
    let shown = &data[..data.len().min(64)];
    write_grid(&path, shown, side, side, 8)?;
    Ok(Some(path))
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::GenData(common) => {
            let cfg = load_config(&common)?;
            let ds = pipeline::load_dataset(&cfg)?;
            let path = out_path(&cfg, "data.csv")?;
            write_csv(&path, &ds)?;
            Ok(format!("gen-data: {} points of dim {} -> {}", ds.len(), ds.dim(), path.display()))
        }
        Command::TrainGenerator(common) => {
            let cfg = load_config(&common)?;
            let ds = pipeline::load_dataset(&cfg)?;
            let (backbone, log) = pipeline::train_generator(&cfg, &ds.points, |_| {})?;
            let csv = out_path(&cfg, "generator_metrics.csv")?;
            MetricsLog::from_generator(&cfg.run_id, &log)?.write_csv(&csv)?;
            let ckpt = out_path(&cfg, "generator.hebm")?;
            save_checkpoint(&ModelBundle::new(cfg.clone(), backbone), &ckpt)?;
            Ok(format!(
                "train-generator: {} iterations, final ELBO {:.4} -> {}",
                log.len(),
                log.last().map_or(f64::NAN, |m| m.elbo),
                ckpt.display()
            ))
        }
        Command::TrainPrior(input) => {
            let (bundle, cfg) = load_bundle(&input, "generator.hebm")?;
            let ds = pipeline::load_dataset(&cfg)?;
            let (omega, log) = pipeline::train_energy(&cfg, &bundle.backbone, &ds.points, |_| {})?;
            let csv = out_path(&cfg, "prior_metrics.csv")?;
            MetricsLog::from_prior(&cfg.run_id, &log)?.write_csv(&csv)?;
            let mut out = ModelBundle::new(cfg.clone(), bundle.backbone);
            out.energy = Some(omega);
            let ckpt = out_path(&cfg, "prior.hebm")?;
            save_checkpoint(&out, &ckpt)?;
            let last = log.last();
            Ok(format!(
                "train-prior: {} iterations, final E_pos {:.4} E_neg {:.4} -> {}",
                log.len(),
                last.map_or(f64::NAN, |m| m.e_pos),
                last.map_or(f64::NAN, |m| m.e_neg),
                ckpt.display()
            ))
        }
        Command::TrainCoupled(input) => {
            let (bundle, cfg) = load_bundle(&input, "generator.hebm")?;
            let ds = pipeline::load_dataset(&cfg)?;
            let (coupled, base, log) = pipeline::train_coupled_stage(&cfg, &bundle.backbone, &ds, |_| {})?;
            let csv = out_path(&cfg, "coupled_metrics.csv")?;
            MetricsLog::from_coupled(&cfg.run_id, &log)?.write_csv(&csv)?;
            let mut out = ModelBundle::new(cfg.clone(), bundle.backbone);
            out.energy = Some(base);
            out.coupled = Some(coupled);
            let ckpt = out_path(&cfg, "coupled.hebm")?;
            save_checkpoint(&out, &ckpt)?;
            Ok(format!(
                "train-coupled: {} iterations, final cross-entropy {:.4} -> {}",
                log.len(),
                log.last().map_or(f64::NAN, |m| m.cross_entropy),
                ckpt.display()
            ))
        }
        Command::Sample {
            input,
            n,
            gaussian,
            trajectory,
        } => {
            let (bundle, cfg) = load_bundle(&input, "prior.hebm")?;
            let n = n.unwrap_or(cfg.samples);
            let s = if gaussian {
                pipeline::sample_gaussian(&cfg, &bundle.backbone, n)?
            } else {
                let omega = bundle
                    .energy
                    .as_ref()
                    .ok_or_else(|| HarnessError::Usage("checkpoint holds no EBM prior; use --gaussian".into()))?;
                pipeline::sample_prior(&cfg, &bundle.backbone, omega, n, trajectory)?
            };
            let path = out_path(&cfg, "samples.csv")?;
            write_points(&path, s.data.clone())?;
            if let Some(t) = &s.trajectories {
                write_trajectories(&out_path(&cfg, "trajectory.csv")?, t)?;
            }
            let grid = write_image_grid(&cfg, "samples.pgm", &s.data)?;
            Ok(format!(
                "sample: {n} {} samples -> {}{}",
                if gaussian { "Gaussian-prior" } else { "EBM-prior" },
                path.display(),
                grid.map_or(String::new(), |g| format!(", {}", g.display()))
            ))
        }
        Command::Hsample {
            input,
            layers,
            reference,
            n,
        } => {
            let (bundle, cfg) = load_bundle(&input, "prior.hebm")?;
            let omega = bundle
                .energy
                .as_ref()
                .ok_or_else(|| HarnessError::Usage("checkpoint holds no EBM prior".into()))?;
            let ds = pipeline::load_dataset(&cfg)?;
            let x = ds.points.get(reference).ok_or_else(|| {
                HarnessError::Usage(format!("reference index {reference} outside dataset of {}", ds.len()))
            })?;
            let Backbone { gen, inf } = &bundle.backbone;
            let u_ref = to_base(gen, &infer_mean(inf, x)?.sample)?;
            let n = n.unwrap_or(cfg.samples);
            let us = hierarchical_resample(
                omega,
                gen,
                &cfg.schedule()?,
                &cfg.langevin(),
                &u_ref,
                &layers,
                n,
                &RngStream::new(cfg.seed).with_phase(phase::REVERSE),
            )?;
            let data = us
                .iter()
                .map(|u| Ok(gen.decode(&to_latent(gen, u)?)?.mean))
                .collect::<Result<Vec<_>>>()?;
            let path = out_path(&cfg, "hsample.csv")?;
            write_points(&path, data.clone())?;
            write_image_grid(&cfg, "hsample.pgm", &data)?;
            Ok(format!(
                "hsample: {n} variants of point {reference} resampling layers {layers:?} -> {}",
                path.display()
            ))
        }
        Command::Control { input, label, n } => {
            let (bundle, cfg) = load_bundle(&input, "coupled.hebm")?;
            let (coupled, base) = match (&bundle.coupled, &bundle.energy) {
                (Some(c), Some(b)) => (c, b),
                _ => return Err(HarnessError::Usage("checkpoint holds no coupled prior".into())),
            };
            let choices = label
                .iter()
                .map(|s| match s.trim() {
                    "-" => Ok(None),
                    v => v
                        .parse::<usize>()
                        .map(Some)
                        .map_err(|_| HarnessError::Usage(format!("bad label '{v}'"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let target = SymbolVector { choices };
            let prior = pipeline::coupled_prior(coupled, base)?;
            let n = n.unwrap_or(cfg.samples);
            let out = controllable_sample(
                &prior,
                &bundle.backbone.gen,
                &target,
                &cfg.schedule()?,
                &cfg.langevin(),
                n,
                cfg.temperature,
                None,
                &RngStream::new(cfg.seed).with_phase(phase::COUPLED),
            )?;
            let path = out_path(&cfg, "control.csv")?;
            write_points(&path, out.data.clone())?;
            write_image_grid(&cfg, "control.pgm", &out.data)?;
            let purity = match (cfg.dataset, target.choices.first()) {
                (DatasetKind::Ring8, Some(Some(c))) => {
                    let hit = out.data.iter().filter(|p| nearest_ring_mode(p) == *c).count();
                    format!(", mode purity {:.3}", hit as f64 / n as f64)
                }
                _ => String::new(),
            };
            Ok(format!("control: {n} samples for {label:?}{purity} -> {}", path.display()))
        }
        Command::Ood {
            input,
            ood_config,
            ood_data,
            scheme,
            k,
            n,
        } => {
            let (bundle, cfg) = load_bundle(&input, "prior.hebm")?;
            let omega = bundle
                .energy
                .as_ref()
                .ok_or_else(|| HarnessError::Usage("checkpoint holds no EBM prior".into()))?;
            let k = k.unwrap_or(cfg.ood_k);
            let id = pipeline::held_out(&cfg, n)?.points;
            let mut ood = match (ood_config, ood_data) {
                (Some(p), _) => gen_synthetic(&RunConfig::load(&p)?.dataset_spec())?.points,
                (None, Some(p)) => read_csv(&p, 0)?.points,
                (None, None) => return Err(HarnessError::Usage("ood needs --ood-config or --ood-data".into())),
            };
            ood.truncate(n);
            let Backbone { gen, inf } = &bundle.backbone;
            let score = |xs: &[Vec<f64>], tag: u64| -> Result<Vec<f64>> {
                match scheme {
                    Scheme::Inference => xs.iter().map(|x| Ok(ood_score_inference(omega, gen, inf, x, k)?)).collect(),
                    Scheme::Diffusion => Ok(ood_scores_diffusion(
                        omega,
                        gen,
                        inf,
                        xs,
                        k,
                        &cfg.schedule()?,
                        &cfg.langevin(),
                        cfg.ood_source,
                        &RngStream::new(cfg.seed).with_phase(phase::OOD).fork(tag),
                    )?),
                }
            };
            let (s_id, s_ood) = (score(&id, 0)?, score(&ood, 1)?);
            let a = auroc(&s_id, &s_ood)?;
            let path = out_path(&cfg, "ood_scores.csv")?;
            let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::io(&path, e))?;
            w.write_record(["set", "score"]).map_err(|e| HarnessError::io(&path, e))?;
            for (set, scores) in [("id", &s_id), ("ood", &s_ood)] {
                for v in scores {
                    w.write_record([set, &v.to_string()]).map_err(|e| HarnessError::io(&path, e))?;
                }
            }
            w.flush().map_err(|e| HarnessError::io(&path, e))?;
            Ok(format!("ood: AUROC {a:.4} ({scheme:?} scheme, k = {k}) -> {}", path.display()))
        }
        Command::Ablate { input, param, values } => {
            let param: AblationParam = param.parse()?;
            let (bundle, cfg) = load_bundle(&input, "generator.hebm")?;
            let ds = pipeline::load_dataset(&cfg)?;
            let rows = pipeline::ablate(&cfg, &bundle.backbone, &ds.points, param, &values)?;
            let path = out_path(&cfg, "ablate.csv")?;
            let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::io(&path, e))?;
            for r in &rows {
                w.serialize(r).map_err(|e| HarnessError::io(&path, e))?;
            }
            w.flush().map_err(|e| HarnessError::io(&path, e))?;
            let summary: Vec<String> = rows.iter().map(|r| format!("{}={}: {:.3e}", r.param, r.value, r.data_mmd)).collect();
            Ok(format!("ablate: {} -> {}", summary.join(", "), path.display()))
        }
        Command::Inspect { checkpoint } => {
            let m = inspect_checkpoint(&checkpoint)?;
            let mut lines = vec![format!(
                "{}: HEBM1 version {}, layers {:?}, {} tensors, {} bytes of weights, seed {}, T = {}, energy: {}, coupled: {}",
                checkpoint.display(),
                FORMAT_VERSION,
                m.config.latent_dims,
                m.tensors.len(),
                m.blob_len(),
                m.seed,
                m.schedule.steps(),
                m.has_energy,
                m.symbols.is_some()
            )];
            lines.extend(m.tensors.iter().map(|t| format!("  {} {:?} @{}", t.name, t.shape, t.offset)));
            if m.config.observation == Some(ObservationKind::Bernoulli) || is_image(&m.config) {
                lines.push("  observation: bernoulli".into());
            }
            Ok(lines.join("\n"))
        }
    }
}

fn write_trajectories(path: &Path, trajs: &[Vec<StepTrajectory>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    w.write_record(["chain", "t", "step", "log_density"])
        .map_err(|e| HarnessError::io(path, e))?;
    for (c, chain) in trajs.iter().enumerate() {
        for st in chain {
            for (k, v) in st.log_density.iter().enumerate() {
                w.write_record([c.to_string(), st.t.to_string(), k.to_string(), v.to_string()])
                    .map_err(|e| HarnessError::io(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}
