//! Out-of-distribution scores from the energies of the upper latent layers.

use serde::{Deserialize, Serialize};

use crate::ebm::{label, langevin_sample, EnergyParams, LangevinConfig};
use crate::error::{Error, Result};
use crate::generator::{infer_mean, GeneratorParams, InferenceParams};
use crate::par;
use crate::rng::RngStream;
use crate::stack::{LatentStack, UStack};
use crate::synthesis::{reverse_with, Energies, ReverseRunConfig};
use crate::uspace::{self, perturb_to, DiffusionSchedule};

fn check_k(k: usize, layers: usize) -> Result<()> {
    if k >= layers {
        return Err(Error::invalid(format!("layer index k = {k} must be below L = {layers}")));
    }
    Ok(())
}

/// Energy `−Σ_{i ≥ k} f_i(z_i, 0)`; higher means less typical of the
/// training data.
pub fn upper_energy(omega: &EnergyParams, z: &LatentStack, k: usize) -> Result<f64> {
    check_k(k, z.num_layers())?;
    Ok(-omega.layer_values(z, 0)?[k..].iter().sum::<f64>())
}

/// Scores the posterior-mean latents of `x`.
pub fn ood_score_inference(
    omega: &EnergyParams,
    gen: &GeneratorParams,
    inf: &InferenceParams,
    x: &[f64],
    k: usize,
) -> Result<f64> {
    check_k(k, gen.spec().len())?;
    let post = infer_mean(inf, x)?;
    let u0 = uspace::to_base(gen, &post.sample)?;
    upper_energy(omega, &uspace::to_latent(gen, &u0)?, k)
}

/// Where the lower layers of the `t = 1` state come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseSource {
    /// A fresh model chain from `T` down to `t = 1` for every input.
    PerInput,
    /// One model chain shared by all inputs.
    Shared,
}

/// Diffusion scheme: layers `≥ k` of `ũ_1` come from forward-perturbing the
/// inferred `ũ_0`, layers `< k` from the model's reverse chain at `t = 1`;
/// `ũ_0` is then sampled at `t = 0` and its upper layers scored.
#[allow(clippy::too_many_arguments)]
pub fn ood_scores_diffusion(
    omega: &EnergyParams,
    gen: &GeneratorParams,
    inf: &InferenceParams,
    xs: &[Vec<f64>],
    k: usize,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    source: ReverseSource,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    let l = gen.spec().len();
    check_k(k, l)?;
    let chains = match source {
        ReverseSource::PerInput => xs.len(),
        ReverseSource::Shared => 1,
    };
    let model_t1 = if k > 0 {
        reverse_with(
            Energies::uniform(omega),
            gen,
            sched,
            lcfg,
            &ReverseRunConfig::new(chains),
            1,
            &stream.fork(label::LANGEVIN),
        )?
        .samples
    } else {
        Vec::new()
    };
    par::map(xs.len(), |j| {
        let s = stream.for_sample(j as u64);
        let post = infer_mean(inf, &xs[j])?;
        let u0 = uspace::to_base(gen, &post.sample)?;
        let mut u1: UStack = perturb_to(&u0, 1, sched, &mut s.fork(label::FORWARD))?;
        if k > 0 {
            let m = &model_t1[j % chains];
            for i in 0..k {
                u1.layers_mut()[i] = m.layer(i).to_vec();
            }
        }
        let run = langevin_sample(omega, gen, &u1, &u1, 0, sched, lcfg, &mut s.fork(label::CLAMP), false)?;
        upper_energy(omega, &uspace::to_latent(gen, &run.state)?, k)
    })
}

/// Mann–Whitney estimate of `P(score_ood > score_id)`, ties counted half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::invalid("AUROC needs non-empty score lists"));
    }
    if id_scores.iter().chain(ood_scores).any(|v| v.is_nan()) {
        return Err(Error::invalid("AUROC scores must not be NaN"));
    }
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&v| (v, false))
        .chain(ood_scores.iter().map(|&v| (v, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average ranks over ties, 1-based
    let mut rank_sum_ood = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_ood += all[i..=j].iter().filter(|e| e.1).count() as f64 * avg;
        i = j + 1;
    }
    let (n_id, n_ood) = (id_scores.len() as f64, ood_scores.len() as f64);
    Ok((rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0) / (n_id * n_ood))
}
