//! End-to-end training and evaluation steps shared by the CLI and tests.

use std::time::Instant;

use hebm_core::adam::{AdamConfig, AdamState};
use hebm_core::ebm::{train_prior, EnergyParams, PriorMetrics};
use hebm_core::generator::{elbo_step, infer, ElboOptimizer, GeneratorParams, InferenceParams};
use hebm_core::rng::{phase, RngStream};
use hebm_core::synthesis::{synthesize, synthesize_gaussian, ReverseRunConfig, Synthesis};
use hebm_core::tasks::{train_coupled, CoupledEnergyParams, CoupledPrior, SymbolSpec};
use hebm_core::tasks::coupling::CoupledMetrics;
use hebm_core::uspace::to_base;
use hebm_core::UStack;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{gen_synthetic, Dataset};
use crate::error::{HarnessError, Result};
use crate::mmd::mmd;

const INIT_GENERATOR: u64 = 1;
const INIT_INFERENCE: u64 = 2;
const INIT_ENERGY: u64 = 3;
const INIT_COUPLED: u64 = 4;
const HELD_OUT: u64 = 0x5eed;
const SHUFFLE: u64 = 0x5affe;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMetrics {
    pub iteration: usize,
    pub elbo: f64,
    pub wall_ms: f64,
}

/// Frozen first stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub gen: GeneratorParams,
    pub inf: InferenceParams,
}

/// Training data for `cfg`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut ds = gen_synthetic(&cfg.dataset_spec())?;
    if cfg.shuffle_labels {
        if let Some(labels) = ds.labels.as_mut() {
            let mut r = RngStream::new(cfg.seed).with_phase(phase::DATA).fork(SHUFFLE);
            for i in (1..labels.len()).rev() {
                let j = r.below(i + 1);
                labels.swap(i, j);
            }
        }
    }
    Ok(ds)
}

/// An independent draw of the same distribution, used for evaluation.
pub fn held_out(cfg: &RunConfig, size: usize) -> Result<Dataset> {
    let mut spec = cfg.dataset_spec();
    spec.seed ^= HELD_OUT;
    spec.size = size;
    gen_synthetic(&spec)
}

pub fn train_generator(
    cfg: &RunConfig,
    data: &[Vec<f64>],
    mut on_iteration: impl FnMut(&GeneratorMetrics),
) -> Result<(Backbone, Vec<GeneratorMetrics>)> {
    if data.is_empty() {
        return Err(HarnessError::Usage("training data is empty".into()));
    }
    let gcfg = cfg.generator_config(data[0].len());
    let init = RngStream::new(cfg.seed).with_phase(phase::INIT);
    let mut gen = GeneratorParams::new(gcfg.clone(), &mut init.fork(INIT_GENERATOR))?;
    let mut inf = InferenceParams::new(&gcfg, &mut init.fork(INIT_INFERENCE))?;
    if let Some(lv) = gen.log_var.as_mut() {
        lv.data_mut()[0] = cfg.init_log_var;
    }
    let adam = AdamConfig::with_lr(cfg.generator_lr);
    let mut opt = ElboOptimizer {
        generator: AdamState::new(&gen, adam),
        inference: AdamState::new(&inf, adam),
    };
    let stream = RngStream::new(cfg.seed).with_phase(phase::GENERATOR);
    let mut log = Vec::with_capacity(cfg.generator_iters);
    for it in 0..cfg.generator_iters {
        let start = Instant::now();
        let s = stream.at_iteration(it as u64);
        let mut b = s.fork(1);
        let batch: Vec<&[f64]> = (0..cfg.generator_batch)
            .map(|_| data[b.below(data.len())].as_slice())
            .collect();
        let elbo = elbo_step(&mut gen, &mut inf, &batch, &mut opt, &s.fork(2), it)?;
        let m = GeneratorMetrics {
            iteration: it,
            elbo,
            wall_ms: if cfg.log_wall_clock {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        };
        on_iteration(&m);
        log.push(m);
    }
    Ok((Backbone { gen, inf }, log))
}

pub fn train_energy(
    cfg: &RunConfig,
    backbone: &Backbone,
    data: &[Vec<f64>],
    on_iteration: impl FnMut(&PriorMetrics),
) -> Result<(EnergyParams, Vec<PriorMetrics>)> {
    let sched = cfg.schedule()?;
    let mut omega = EnergyParams::new(
        backbone.gen.spec(),
        sched.steps(),
        cfg.energy_width,
        &mut RngStream::new(cfg.seed).with_phase(phase::INIT).fork(INIT_ENERGY),
    )?;
    omega.zero_output();
    let stream = RngStream::new(cfg.seed).with_phase(phase::PRIOR);
    let log = train_prior(
        &mut omega,
        &backbone.gen,
        &backbone.inf,
        data,
        &sched,
        &cfg.prior_train(),
        &stream,
        on_iteration,
    )?;
    Ok((omega, log))
}

pub fn symbol_spec(cfg: &RunConfig, data: &Dataset) -> Result<SymbolSpec> {
    let arity = match (cfg.label_arity, data.classes()) {
        (Some(a), _) => a,
        (None, Some(c)) => c.iter().max().map_or(1, |m| m + 1),
        (None, None) => return Err(HarnessError::Usage("coupled training needs labelled data".into())),
    };
    Ok(SymbolSpec::categorical(arity, cfg.symbol_layers.clone()))
}

pub fn train_coupled_stage(
    cfg: &RunConfig,
    backbone: &Backbone,
    data: &Dataset,
    on_iteration: impl FnMut(&CoupledMetrics),
) -> Result<(CoupledEnergyParams, EnergyParams, Vec<CoupledMetrics>)> {
    let sched = cfg.schedule()?;
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("coupled training needs labelled data".into()))?;
    let spec = backbone.gen.spec();
    let init = RngStream::new(cfg.seed).with_phase(phase::INIT);
    let mut base = EnergyParams::new(spec, sched.steps(), cfg.energy_width, &mut init.fork(INIT_ENERGY))?;
    base.zero_output();
    let mut coupled = CoupledEnergyParams::new(
        symbol_spec(cfg, data)?,
        spec,
        sched.steps(),
        cfg.energy_width,
        &mut init.fork(INIT_COUPLED),
    )?;
    let log = train_coupled(
        &mut coupled,
        &mut base,
        &backbone.gen,
        &backbone.inf,
        &data.points,
        labels,
        &sched,
        &cfg.coupled_train(),
        &RngStream::new(cfg.seed).with_phase(phase::COUPLED),
        on_iteration,
    )?;
    Ok((coupled, base, log))
}

/// `ũ_0` of posterior samples for `data`: draws from the aggregate posterior.
pub fn aggregate_posterior(backbone: &Backbone, data: &[Vec<f64>], stream: &RngStream) -> Result<Vec<UStack>> {
    data.iter()
        .enumerate()
        .map(|(i, x)| {
            let post = infer(&backbone.inf, x, &mut stream.for_sample(i as u64))?;
            Ok(to_base(&backbone.gen, &post.sample)?)
        })
        .collect()
}

pub fn sample_prior(
    cfg: &RunConfig,
    backbone: &Backbone,
    omega: &EnergyParams,
    samples: usize,
    record: bool,
) -> Result<Synthesis> {
    let sched = cfg.schedule()?;
    let rcfg = ReverseRunConfig {
        samples,
        temperature: cfg.temperature,
        record_trajectory: record,
        clamp: None,
    };
    Ok(synthesize(
        omega,
        &backbone.gen,
        &sched,
        &cfg.langevin(),
        &rcfg,
        &RngStream::new(cfg.seed).with_phase(phase::REVERSE),
    )?)
}

pub fn sample_gaussian(cfg: &RunConfig, backbone: &Backbone, samples: usize) -> Result<Synthesis> {
    Ok(synthesize_gaussian(
        &backbone.gen,
        samples,
        &RngStream::new(cfg.seed).with_phase(phase::REVERSE).fork(1),
    )?)
}

fn flat(us: &[UStack]) -> Vec<Vec<f64>> {
    us.iter().map(|u| u.flatten()).collect()
}

/// Latent- and data-space discrepancies of the learned and Gaussian priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEvaluation {
    pub latent_mmd_ebm: f64,
    pub latent_mmd_gaussian: f64,
    pub data_mmd_ebm: f64,
    pub data_mmd_gaussian: f64,
}

pub fn evaluate_prior(cfg: &RunConfig, backbone: &Backbone, omega: &EnergyParams) -> Result<PriorEvaluation> {
    let eval = held_out(cfg, cfg.eval_size)?;
    let posterior = aggregate_posterior(
        backbone,
        &eval.points,
        &RngStream::new(cfg.seed).with_phase(phase::EVAL),
    )?;
    let ebm = sample_prior(cfg, backbone, omega, cfg.samples, false)?;
    let gauss = sample_gaussian(cfg, backbone, cfg.samples)?;
    let post = flat(&posterior);
    Ok(PriorEvaluation {
        latent_mmd_ebm: mmd(&flat(&ebm.base), &post, None)?,
        latent_mmd_gaussian: mmd(&flat(&gauss.base), &post, None)?,
        data_mmd_ebm: mmd(&ebm.data, &eval.points, None)?,
        data_mmd_gaussian: mmd(&gauss.data, &eval.points, None)?,
    })
}

/// The prior view used by label-coupled sampling.
pub fn coupled_prior<'a>(coupled: &'a CoupledEnergyParams, base: &'a EnergyParams) -> Result<CoupledPrior<'a>> {
    Ok(CoupledPrior::new(coupled, base)?)
}

/// Sampler settings swept by `ablate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationParam {
    /// Langevin steps per diffusion step.
    K,
    /// Number of diffusion steps.
    T,
    /// Langevin step coefficient.
    A,
}

impl std::str::FromStr for AblationParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(AblationParam::K),
            "T" => Ok(AblationParam::T),
            "a" => Ok(AblationParam::A),
            _ => Err(HarnessError::Usage(format!("unknown ablation parameter '{s}' (expected K, T or a)"))),
        }
    }
}

impl AblationParam {
    pub fn name(self) -> &'static str {
        match self {
            AblationParam::K => "K",
            AblationParam::T => "T",
            AblationParam::A => "a",
        }
    }

    pub fn apply(self, cfg: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = cfg.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(HarnessError::Usage(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            AblationParam::K => c.langevin_steps = count()?,
            AblationParam::T => c.steps = count()?,
            AblationParam::A => c.step_coeff = value,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub param: String,
    pub value: f64,
    pub data_mmd: f64,
    pub latent_mmd: f64,
}

/// Retrains the prior on a shared first stage for every value and scores
/// the samples against held-out data.
pub fn ablate(
    cfg: &RunConfig,
    backbone: &Backbone,
    data: &[Vec<f64>],
    param: AblationParam,
    values: &[f64],
) -> Result<Vec<AblationRow>> {
    values
        .iter()
        .map(|&v| {
            let c = param.apply(cfg, v)?;
            let (omega, _) = train_energy(&c, backbone, data, |_| {})?;
            let ev = evaluate_prior(&c, backbone, &omega)?;
            Ok(AblationRow {
                param: param.name().to_string(),
                value: v,
                data_mmd: ev.data_mmd_ebm,
                latent_mmd: ev.latent_mmd_ebm,
            })
        })
        .collect()
}
