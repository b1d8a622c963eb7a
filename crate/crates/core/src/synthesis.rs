//! Reverse-chain sampling from the learned prior, synthesis, and
//! hierarchical resampling by layer clamping.

use crate::ebm::{label, langevin_sample, LangevinConfig, LatentEnergy};
use crate::error::{Error, Result};
use crate::generator::{draw_base, GeneratorParams};
use crate::par;
use crate::rng::RngStream;
use crate::stack::{LatentStack, UStack};
use crate::uspace::{self, perturb_to, DiffusionSchedule};

/// Keeps the layers outside `resample` on the forward marginal of a
/// reference while the remaining layers are sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerClamp {
    /// Chain `i` uses `references[i % references.len()]`.
    pub references: Vec<UStack>,
    /// Layers that are sampled; all other layers are clamped.
    pub resample: Vec<usize>,
}

impl LayerClamp {
    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::invalid("layer clamp needs at least one reference"));
        }
        if self.resample.is_empty() {
            return Err(Error::invalid("the set of resampled layers must be non-empty"));
        }
        let mut seen = vec![false; layers];
        for &i in &self.resample {
            if i >= layers {
                return Err(Error::invalid(format!("layer {i} does not exist (L = {layers})")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("layer {i} listed twice")));
            }
        }
        if let Some(r) = self.references.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite {
                context: "clamp reference".into(),
                detail: format!("norm {}", r.norm()),
            });
        }
        Ok(())
    }

    fn clamped(&self, layers: usize) -> Vec<usize> {
        (0..layers).filter(|i| !self.resample.contains(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReverseRunConfig {
    pub samples: usize,
    /// Scales the initial draw and the Langevin noise.
    pub temperature: f64,
    pub record_trajectory: bool,
    pub clamp: Option<LayerClamp>,
}

impl ReverseRunConfig {
    pub fn new(samples: usize) -> Self {
        ReverseRunConfig {
            samples,
            temperature: 1.0,
            record_trajectory: false,
            clamp: None,
        }
    }
}

/// Log densities recorded during one Langevin run.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrajectory {
    pub t: usize,
    pub log_density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReverseOutput {
    pub samples: Vec<UStack>,
    /// Per chain, one entry per diffusion step in the order visited.
    pub trajectories: Option<Vec<Vec<StepTrajectory>>>,
}

/// Energies used along the chain: `rest` for `t ≥ 1` and `final_step` at `t = 0`.
#[derive(Clone, Copy)]
pub(crate) struct Energies<'a> {
    pub rest: &'a dyn LatentEnergy,
    pub final_step: &'a dyn LatentEnergy,
}

impl<'a> Energies<'a> {
    pub fn uniform(f: &'a dyn LatentEnergy) -> Self {
        Energies { rest: f, final_step: f }
    }

    fn at(&self, t: usize) -> &'a dyn LatentEnergy {
        if t == 0 {
            self.final_step
        } else {
            self.rest
        }
    }
}

fn step_label(base: u64, t: usize) -> u64 {
    base * 1_000_003 + t as u64
}

fn apply_clamp(
    u: &mut UStack,
    reference: &UStack,
    clamped: &[usize],
    t: usize,
    sched: &DiffusionSchedule,
    stream: &RngStream,
) -> Result<()> {
    let src = if t == 0 {
        reference.clone()
    } else {
        perturb_to(reference, t, sched, &mut stream.fork(step_label(label::CLAMP, t)))?
    };
    for &i in clamped {
        u.layers_mut()[i] = src.layer(i).to_vec();
    }
    Ok(())
}

/// Runs one chain from `start` (state at `from`) down to time `to`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_chain(
    energies: Energies<'_>,
    gen: &GeneratorParams,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    start: UStack,
    from: usize,
    to: usize,
    record: bool,
    clamp: Option<(&UStack, &[usize])>,
    stream: &RngStream,
) -> Result<(UStack, Vec<StepTrajectory>)> {
    let mut u = start;
    let mut traj = Vec::new();
    for t in (to..from).rev() {
        let run = langevin_sample(
            energies.at(t),
            gen,
            &u,
            &u,
            t,
            sched,
            lcfg,
            &mut stream.fork(step_label(label::LANGEVIN, t)),
            record,
        )?;
        u = run.state;
        if let Some(ld) = run.log_density {
            traj.push(StepTrajectory { t, log_density: ld });
        }
        if let Some((reference, clamped)) = clamp {
            apply_clamp(&mut u, reference, clamped, t, sched, stream)?;
        }
    }
    Ok((u, traj))
}

pub(crate) fn reverse_with(
    energies: Energies<'_>,
    gen: &GeneratorParams,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    rcfg: &ReverseRunConfig,
    to: usize,
    stream: &RngStream,
) -> Result<ReverseOutput> {
    if !(rcfg.temperature >= 0.0 && rcfg.temperature.is_finite()) {
        return Err(Error::invalid("temperature must be finite and non-negative"));
    }
    if energies.rest.steps() != sched.steps() || energies.final_step.steps() != sched.steps() {
        return Err(Error::shape("energy time embedding", sched.steps(), energies.rest.steps()));
    }
    let spec = gen.spec();
    let clamped = match &rcfg.clamp {
        Some(c) => {
            c.validate(spec.len())?;
            for r in &c.references {
                r.check(spec)?;
            }
            c.clamped(spec.len())
        }
        None => Vec::new(),
    };
    let lcfg = LangevinConfig {
        temperature: rcfg.temperature,
        ..*lcfg
    };
    let steps = sched.steps();
    let results = par::map(rcfg.samples, |i| {
        let s = stream.for_sample(i as u64);
        let mut u = draw_base(spec, &mut s.fork(label::FORWARD));
        for v in u.layers_mut().iter_mut().flatten() {
            *v *= rcfg.temperature;
        }
        let clamp = rcfg.clamp.as_ref().map(|c| {
            let r = &c.references[i % c.references.len()];
            (r, clamped.as_slice())
        });
        if let Some((r, cl)) = clamp {
            apply_clamp(&mut u, r, cl, steps, sched, &s)?;
        }
        run_chain(energies, gen, sched, &lcfg, u, steps, to, rcfg.record_trajectory, clamp, &s)
    })?;
    let (samples, trajs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(ReverseOutput {
        samples,
        trajectories: rcfg.record_trajectory.then_some(trajs),
    })
}

/// `ũ_T = τ ε`, then Langevin on `p(ũ_t | ũ_{t+1})` for `t = T−1, …, 0`.
pub fn reverse_chain<E: LatentEnergy>(
    f: &E,
    gen: &GeneratorParams,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    rcfg: &ReverseRunConfig,
    stream: &RngStream,
) -> Result<ReverseOutput> {
    reverse_with(Energies::uniform(f), gen, sched, lcfg, rcfg, 0, stream)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    /// Observation means, one row per sample.
    pub data: Vec<Vec<f64>>,
    pub latents: Vec<LatentStack>,
    pub base: Vec<UStack>,
    pub trajectories: Option<Vec<Vec<StepTrajectory>>>,
}

pub(crate) fn decode_batch(gen: &GeneratorParams, base: Vec<UStack>) -> Result<(Vec<Vec<f64>>, Vec<LatentStack>)> {
    let latents = par::map(base.len(), |i| uspace::to_latent(gen, &base[i]))?;
    let data = par::map(latents.len(), |i| Ok(gen.decode(&latents[i])?.mean))?;
    Ok((data, latents))
}

/// Reverse chain, `z̃ = to_latent(ũ_0)`, then decode.
pub fn synthesize<E: LatentEnergy>(
    f: &E,
    gen: &GeneratorParams,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    rcfg: &ReverseRunConfig,
    stream: &RngStream,
) -> Result<Synthesis> {
    let out = reverse_chain(f, gen, sched, lcfg, rcfg, stream)?;
    let (data, latents) = decode_batch(gen, out.samples.clone())?;
    Ok(Synthesis {
        data,
        latents,
        base: out.samples,
        trajectories: out.trajectories,
    })
}

/// Samples with the Gaussian prior `ũ ~ N(0, I)` for comparison.
pub fn synthesize_gaussian(gen: &GeneratorParams, samples: usize, stream: &RngStream) -> Result<Synthesis> {
    let base: Vec<UStack> = (0..samples)
        .map(|i| draw_base(gen.spec(), &mut stream.for_sample(i as u64)))
        .collect();
    let (data, latents) = decode_batch(gen, base.clone())?;
    Ok(Synthesis {
        data,
        latents,
        base,
        trajectories: None,
    })
}

/// Resamples the layers in `resample` while the others follow `reference`.
#[allow(clippy::too_many_arguments)]
pub fn hierarchical_resample<E: LatentEnergy>(
    f: &E,
    gen: &GeneratorParams,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    reference: &UStack,
    resample: &[usize],
    samples: usize,
    stream: &RngStream,
) -> Result<Vec<UStack>> {
    let rcfg = ReverseRunConfig {
        clamp: Some(LayerClamp {
            references: vec![reference.clone()],
            resample: resample.to_vec(),
        }),
        ..ReverseRunConfig::new(samples)
    };
    Ok(reverse_chain(f, gen, sched, lcfg, &rcfg, stream)?.samples)
}

/// Median over chains of the mean log density in the first and last
/// `window` recorded points of the run at time `t`.
pub fn trajectory_trend(trajectories: &[Vec<StepTrajectory>], t: usize, window: usize) -> Result<(f64, f64)> {
    let mut first = Vec::new();
    let mut last = Vec::new();
    for chain in trajectories {
        if let Some(st) = chain.iter().find(|s| s.t == t) {
            let ld = &st.log_density;
            if ld.len() < window || window == 0 {
                return Err(Error::invalid(format!(
                    "trajectory of length {} is shorter than window {window}",
                    ld.len()
                )));
            }
            first.push(ld[..window].iter().sum::<f64>() / window as f64);
            last.push(ld[ld.len() - window..].iter().sum::<f64>() / window as f64);
        }
    }
    if first.is_empty() {
        return Err(Error::invalid(format!("no trajectory recorded at t = {t}")));
    }
    Ok((median(&mut first), median(&mut last)))
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ebm::EnergyParams;
    use crate::generator::{GeneratorConfig, ObservationKind};
    use crate::nn::Activation;
    use crate::uspace::make_schedule;

    fn model() -> (GeneratorParams, EnergyParams, DiffusionSchedule) {
        let cfg = GeneratorConfig {
            latent_dims: vec![2, 1],
            data_dim: 2,
            hidden_width: 4,
            hidden_layers: 1,
            observation: ObservationKind::Gaussian,
            activation: Activation::Tanh,
        };
        let gen = GeneratorParams::new(cfg, &mut RngStream::new(3)).unwrap();
        let f = EnergyParams::new(gen.spec(), 3, 4, &mut RngStream::new(4)).unwrap();
        (gen, f, make_schedule(3, 0.01).unwrap())
    }

    fn lcfg() -> LangevinConfig {
        LangevinConfig {
            steps: 10,
            ..Default::default()
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (gen, f, sched) = model();
        let s = RngStream::new(1);
        let a = reverse_chain(&f, &gen, &sched, &lcfg(), &ReverseRunConfig::new(6), &s).unwrap();
        let b = reverse_chain(&f, &gen, &sched, &lcfg(), &ReverseRunConfig::new(6), &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_temperature_with_zero_energy_collapses() {
        let (gen, _, sched) = model();
        let f = EnergyParams::zeros(gen.spec(), 3, 4).unwrap();
        let rcfg = ReverseRunConfig {
            temperature: 0.0,
            ..ReverseRunConfig::new(4)
        };
        let out = reverse_chain(&f, &gen, &sched, &lcfg(), &rcfg, &RngStream::new(2)).unwrap();
        for u in out.samples {
            assert_eq!(u.norm(), 0.0);
        }
    }

    #[test]
    fn clamp_validation_and_exactness() {
        let (gen, f, sched) = model();
        let reference = UStack::new(vec![vec![0.5, -0.25], vec![1.5]]);
        let s = RngStream::new(8);
        assert!(hierarchical_resample(&f, &gen, &sched, &lcfg(), &reference, &[], 3, &s).is_err());
        assert!(hierarchical_resample(&f, &gen, &sched, &lcfg(), &reference, &[2], 3, &s).is_err());
        let out = hierarchical_resample(&f, &gen, &sched, &lcfg(), &reference, &[0], 3, &s).unwrap();
        for u in &out {
            assert_eq!(u.layer(1), reference.layer(1));
            assert_ne!(u.layer(0), reference.layer(0));
        }
        let all = hierarchical_resample(&f, &gen, &sched, &lcfg(), &reference, &[0, 1], 3, &s).unwrap();
        let plain = reverse_chain(&f, &gen, &sched, &lcfg(), &ReverseRunConfig::new(3), &s).unwrap();
        assert_eq!(all, plain.samples);
    }

    #[test]
    fn synthesis_shapes() {
        let (gen, f, sched) = model();
        for n in [1, 5] {
            let out = synthesize(&f, &gen, &sched, &lcfg(), &ReverseRunConfig::new(n), &RngStream::new(0)).unwrap();
            assert_eq!(out.data.len(), n);
            assert!(out.data.iter().all(|x| x.len() == 2));
        }
    }
}
