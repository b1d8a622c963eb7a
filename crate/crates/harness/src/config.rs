//! Flat JSON run configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use hebm_core::adam::AdamConfig;
use hebm_core::ebm::{LangevinConfig, PriorTrainConfig};
use hebm_core::generator::{GeneratorConfig, ObservationKind};
use hebm_core::nn::Activation;
use hebm_core::tasks::{CoupledTrainConfig, ReverseSource};
use hebm_core::uspace::{make_schedule, DiffusionSchedule};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetKind, DatasetSpec};
use crate::error::{HarnessError, Result};

/// Keys a checkpoint's architecture depends on.
pub const ARCHITECTURE_KEYS: &[&str] = &[
    "latent_dims",
    "hidden_width",
    "hidden_layers",
    "observation",
    "activation",
    "steps",
    "alpha_bar_final",
    "energy_width",
    "symbol_layers",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub output_dir: PathBuf,

    pub dataset: DatasetKind,
    pub data_size: usize,
    pub data_noise: f64,
    pub data_seed: u64,
    pub data_path: Option<PathBuf>,
    pub label_arity: Option<usize>,
    pub data_offset: [f64; 2],

    /// Bottom layer first.
    pub latent_dims: Vec<usize>,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub observation: Option<ObservationKind>,
    pub activation: Activation,

    pub generator_iters: usize,
    pub generator_batch: usize,
    pub generator_lr: f64,
    /// Starting value of the Gaussian observation log-variance.
    pub init_log_var: f64,

    pub steps: usize,
    pub alpha_bar_final: f64,
    pub langevin_steps: usize,
    pub step_coeff: f64,
    pub temperature: f64,

    pub energy_width: usize,
    pub prior_iters: usize,
    pub prior_batch: usize,
    pub prior_lr: f64,
    pub prior_beta1: f64,
    pub clip: Option<f64>,
    pub log_wall_clock: bool,

    pub ce_weight: f64,
    /// Layers coupled to the label at `t = 0`.
    pub symbol_layers: Vec<usize>,
    pub shuffle_labels: bool,

    pub samples: usize,
    pub eval_size: usize,
    pub ood_k: usize,
    pub ood_source: ReverseSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: "run".into(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            dataset: DatasetKind::Pinwheel,
            data_size: 5000,
            data_noise: 0.1,
            data_seed: 0,
            data_path: None,
            label_arity: None,
            data_offset: [0.0, 0.0],
            latent_dims: vec![8, 4, 2],
            hidden_width: 64,
            hidden_layers: 2,
            observation: None,
            activation: Activation::Softplus,
            generator_iters: 6000,
            generator_batch: 128,
            generator_lr: 5e-3,
            init_log_var: -2.0,
            steps: 3,
            alpha_bar_final: 0.01,
            langevin_steps: 50,
            step_coeff: 0.05,
            temperature: 1.0,
            energy_width: 32,
            prior_iters: 1500,
            prior_batch: 50,
            prior_lr: 1e-3,
            prior_beta1: 0.5,
            clip: None,
            log_wall_clock: false,
            ce_weight: 1.0,
            symbol_layers: vec![2],
            shuffle_labels: false,
            samples: 1000,
            eval_size: 1000,
            ood_k: 0,
            ood_source: ReverseSource::PerInput,
        }
    }
}

pub(crate) fn usage(origin: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Usage(format!("{}: {e}", origin.display()))
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| usage(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Applies the keys of `overrides` on top of `self`. Keys that fix the
    /// trained architecture must agree with `self`.
    pub fn merged(&self, overrides: &serde_json::Value, origin: &Path) -> Result<Self> {
        let obj = overrides
            .as_object()
            .ok_or_else(|| usage(origin, "config must be a JSON object"))?;
        let mut v = serde_json::to_value(self).expect("config serializes");
        for (k, x) in obj {
            if ARCHITECTURE_KEYS.contains(&k.as_str()) && v.get(k) != Some(x) {
                return Err(HarnessError::Usage(format!(
                    "config key '{k}' = {x} conflicts with the checkpoint value {}",
                    v.get(k).unwrap_or(&serde_json::Value::Null)
                )));
            }
            v[k] = x.clone();
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| usage(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_spec().validate()?;
        self.generator_config(2).validate()?;
        self.schedule()?;
        self.langevin().validate()?;
        let positive = [
            ("generator_batch", self.generator_batch),
            ("prior_batch", self.prior_batch),
            ("energy_width", self.energy_width),
            ("samples", self.samples),
            ("eval_size", self.eval_size),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(HarnessError::Usage(format!("config key '{k}' must be positive")));
        }
        if self.ood_k >= self.latent_dims.len() {
            return Err(HarnessError::Usage(format!(
                "ood_k = {} must be below the number of layers {}",
                self.ood_k,
                self.latent_dims.len()
            )));
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            kind: self.dataset,
            size: self.data_size,
            noise: self.data_noise,
            label_arity: self.label_arity,
            seed: self.data_seed,
            offset: self.data_offset,
            path: self.data_path.clone(),
        }
    }

    pub fn generator_config(&self, data_dim: usize) -> GeneratorConfig {
        let observation = self.observation.unwrap_or(match self.dataset {
            DatasetKind::IdxImages => ObservationKind::Bernoulli,
            _ => ObservationKind::Gaussian,
        });
        GeneratorConfig {
            latent_dims: self.latent_dims.clone(),
            data_dim,
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            observation,
            activation: self.activation,
        }
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        Ok(make_schedule(self.steps, self.alpha_bar_final)?)
    }

    pub fn langevin(&self) -> LangevinConfig {
        LangevinConfig {
            steps: self.langevin_steps,
            step_coeff: self.step_coeff,
            temperature: 1.0,
        }
    }

    pub fn prior_train(&self) -> PriorTrainConfig {
        PriorTrainConfig {
            iterations: self.prior_iters,
            batch_size: self.prior_batch,
            adam: AdamConfig {
                lr: self.prior_lr,
                beta1: self.prior_beta1,
                ..AdamConfig::default()
            },
            langevin: self.langevin(),
            clip: self.clip,
            log_wall_clock: self.log_wall_clock,
        }
    }

    pub fn coupled_train(&self) -> CoupledTrainConfig {
        CoupledTrainConfig {
            prior: self.prior_train(),
            ce_weight: self.ce_weight,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let p = Path::new("cfg.json");
        assert!(RunConfig::from_json(r#"{"seed": 3, "steps": 6}"#, p).is_ok());
        assert!(RunConfig::from_json(r#"{"sed": 3}"#, p).is_err());
        assert!(RunConfig::from_json(r#"{"steps": 0}"#, p).is_err());
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_json(), p).unwrap(), cfg);
        let m = cfg.merged(&serde_json::json!({"langevin_steps": 7, "steps": 3}), p).unwrap();
        assert_eq!(m.langevin_steps, 7);
        assert!(matches!(cfg.merged(&serde_json::json!({"steps": 4}), p), Err(HarnessError::Usage(_))));
        assert!(cfg.merged(&serde_json::json!({"nope": 1}), p).is_err());
    }
}
