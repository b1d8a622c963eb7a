//! `HEBM1` checkpoints: magic, version, JSON manifest, then a little-endian
//! `f32` blob in manifest order.

use std::io::Write;
use std::path::Path;

use hebm_core::ebm::EnergyParams;
use hebm_core::generator::{GeneratorParams, InferenceParams};
use hebm_core::tasks::{CoupledEnergyParams, SymbolSpec};
use hebm_core::uspace::DiffusionSchedule;
use hebm_core::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::pipeline::Backbone;

pub const MAGIC: &[u8; 5] = b"HEBM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub config: RunConfig,
    pub backbone: Backbone,
    pub energy: Option<EnergyParams>,
    pub coupled: Option<CoupledEnergyParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub data_dim: usize,
    pub seed: u64,
    pub schedule: DiffusionSchedule,
    pub has_energy: bool,
    pub symbols: Option<SymbolSpec>,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn blob_len(&self) -> usize {
        self.tensors.iter().map(|t| 4 * t.shape.iter().product::<usize>()).sum()
    }
}

impl ModelBundle {
    pub fn new(config: RunConfig, backbone: Backbone) -> Self {
        ModelBundle {
            config,
            backbone,
            energy: None,
            coupled: None,
        }
    }

    fn parts(&self) -> Vec<(Vec<String>, Vec<&Tensor>)> {
        let mut v = vec![
            (self.backbone.gen.tensor_names(), self.backbone.gen.tensors()),
            (self.backbone.inf.tensor_names(), self.backbone.inf.tensors()),
        ];
        if let Some(e) = &self.energy {
            v.push((e.tensor_names(), e.tensors()));
        }
        if let Some(c) = &self.coupled {
            v.push((c.tensor_names(), c.tensors()));
        }
        v
    }

    fn parts_mut(&mut self) -> Vec<(Vec<String>, Vec<&mut Tensor>)> {
        let mut v = vec![
            (self.backbone.gen.tensor_names(), self.backbone.gen.tensors_mut()),
            (self.backbone.inf.tensor_names(), self.backbone.inf.tensors_mut()),
        ];
        if let Some(e) = self.energy.as_mut() {
            v.push((e.tensor_names(), e.tensors_mut()));
        }
        if let Some(c) = self.coupled.as_mut() {
            v.push((c.tensor_names(), c.tensors_mut()));
        }
        v
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        for (names, ts) in self.parts() {
            for (name, t) in names.into_iter().zip(ts) {
                tensors.push(TensorEntry {
                    name,
                    shape: t.shape().to_vec(),
                    offset,
                });
                offset += 4 * t.numel();
            }
        }
        Ok(Manifest {
            config: self.config.clone(),
            data_dim: self.backbone.gen.data_dim(),
            seed: self.config.seed,
            schedule: self.config.schedule()?,
            has_energy: self.energy.is_some(),
            symbols: self.coupled.as_ref().map(|c| c.symbols.clone()),
            tensors,
        })
    }

    /// Applies the `f64 → f32 → f64` rounding that saving performs.
    pub fn round_to_f32(&mut self) {
        self.backbone.gen.round_to_f32();
        self.backbone.inf.round_to_f32();
        if let Some(e) = self.energy.as_mut() {
            e.round_to_f32();
        }
        if let Some(c) = self.coupled.as_mut() {
            c.round_to_f32();
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest()?).expect("manifest serializes");
        let mut out = Vec::with_capacity(17 + manifest.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, ts) in self.parts() {
            for t in ts {
                for &v in t.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    /// Builds an empty bundle with the manifest's architecture.
    fn skeleton(m: &Manifest) -> Result<Self> {
        let cfg = &m.config;
        let gcfg = cfg.generator_config(m.data_dim);
        let gen = GeneratorParams::zeros(gcfg.clone())?;
        let inf = InferenceParams::zeros(&gcfg)?;
        let steps = m.schedule.steps();
        let energy = if m.has_energy {
            Some(EnergyParams::zeros(gen.spec(), steps, cfg.energy_width)?)
        } else {
            None
        };
        let coupled = match &m.symbols {
            Some(s) => Some(CoupledEnergyParams::zeros(s.clone(), gen.spec(), steps, cfg.energy_width)?),
            None => None,
        };
        Ok(ModelBundle {
            config: cfg.clone(),
            backbone: Backbone { gen, inf },
            energy,
            coupled,
        })
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let (manifest, blob) = split(bytes, origin)?;
        let expected = manifest.blob_len();
        if blob.len() != expected {
            return Err(HarnessError::BlobLength {
                path: origin.to_path_buf(),
                expected,
                actual: blob.len(),
            });
        }
        let mut bundle = Self::skeleton(&manifest)?;
        let mut entries = manifest.tensors.iter();
        for (names, ts) in bundle.parts_mut() {
            for (name, t) in names.into_iter().zip(ts) {
                let e = entries
                    .next()
                    .ok_or_else(|| HarnessError::parse(origin, "manifest lists too few tensors"))?;
                if e.name != name || e.shape != t.shape() {
                    return Err(HarnessError::parse(
                        origin,
                        format!("tensor {} {:?} does not match expected {name} {:?}", e.name, e.shape, t.shape()),
                    ));
                }
                for (k, v) in t.data_mut().iter_mut().enumerate() {
                    let at = e.offset + 4 * k;
                    *v = f32::from_le_bytes(blob[at..at + 4].try_into().unwrap()) as f64;
                }
            }
        }
        if entries.next().is_some() {
            return Err(HarnessError::parse(origin, "manifest lists extra tensors"));
        }
        Ok(bundle)
    }
}

fn split<'a>(bytes: &'a [u8], origin: &Path) -> Result<(Manifest, &'a [u8])> {
    if bytes.len() < 17 || &bytes[..5] != MAGIC {
        return Err(HarnessError::parse(origin, "not an HEBM1 checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(HarnessError::Version {
            path: origin.to_path_buf(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let end = 17usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| HarnessError::parse(origin, "manifest extends past end of file"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[17..end])
        .map_err(|e| HarnessError::parse(origin, format!("corrupt manifest: {e}")))?;
    Ok((manifest, &bytes[end..]))
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let bytes = bundle.to_bytes()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    ModelBundle::from_bytes(&bytes, path)
}

/// Reads only the manifest.
pub fn inspect_checkpoint(path: &Path) -> Result<Manifest> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(split(&bytes, path)?.0)
}
