//! Time-conditioned energy priors on `ũ`-space, Langevin sampling of the
//! conditional `p(ũ_t | ũ_{t+1})`, and maximum-likelihood training.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::generator::{infer, GeneratorParams, InferenceParams};
use crate::nn::{prefixed_names, Activation, FeedForwardNet};
use crate::par;
use crate::rng::RngStream;
use crate::stack::{LatentStack, LayerSpec, UStack};
use crate::tensor::{dot, sq_norm, ParamSet, Tensor};
use crate::uspace::{self, forward_pair, DiffusionSchedule};

/// Fork labels for sub-streams used inside one training iteration.
pub(crate) mod label {
    pub const BATCH: u64 = 1;
    pub const TIME: u64 = 2;
    pub const LANGEVIN: u64 = 3;
    pub const FORWARD: u64 = 4;
    pub const INFER: u64 = 5;
    pub const CLAMP: u64 = 6;
}

/// A scalar energy `F(z̃, t)` on latent stacks; densities are `∝ exp(F)`.
pub trait LatentEnergy: Sync {
    fn spec(&self) -> &LayerSpec;
    fn steps(&self) -> usize;
    fn value(&self, z: &LatentStack, t: usize) -> Result<f64>;
    fn value_and_grad(&self, z: &LatentStack, t: usize) -> Result<(f64, LatentStack)>;
}

/// `F(z̃, t) = Σ_i f_i([z_i, onehot(t)])` with one independent net per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyParams {
    spec: LayerSpec,
    steps: usize,
    pub nets: Vec<FeedForwardNet>,
}

pub const DEFAULT_ENERGY_WIDTH: usize = 32;

pub(crate) fn with_time(z: &[f64], t: usize, steps: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(z.len() + steps);
    v.extend_from_slice(z);
    v.extend((0..steps).map(|s| if s == t { 1.0 } else { 0.0 }));
    v
}

impl EnergyParams {
    pub fn new(spec: &LayerSpec, steps: usize, width: usize, rng: &mut RngStream) -> Result<Self> {
        Self::build(spec, steps, width, |d| {
            FeedForwardNet::init(d, Activation::Softplus, Activation::Identity, rng)
        })
    }

    pub fn zeros(spec: &LayerSpec, steps: usize, width: usize) -> Result<Self> {
        Self::build(spec, steps, width, |d| {
            FeedForwardNet::zeros(d, Activation::Softplus, Activation::Identity)
        })
    }

    /// Clears every output layer so that `F ≡ 0` while the hidden layers keep
    /// their values.
    pub fn zero_output(&mut self) {
        for net in &mut self.nets {
            if let Some(last) = net.layers_mut().last_mut() {
                last.weight.fill(0.0);
                last.bias.fill(0.0);
            }
        }
    }

    fn build(
        spec: &LayerSpec,
        steps: usize,
        width: usize,
        mut make: impl FnMut(&[usize]) -> FeedForwardNet,
    ) -> Result<Self> {
        if steps == 0 || width == 0 {
            return Err(Error::invalid("energy nets need steps >= 1 and a positive width"));
        }
        let nets = spec
            .dims()
            .iter()
            .map(|&d| make(&[d + steps, width, width, 1]))
            .collect();
        Ok(EnergyParams {
            spec: spec.clone(),
            steps,
            nets,
        })
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t >= self.steps {
            return Err(Error::TimeOutOfRange {
                t,
                lo: 0,
                hi: self.steps - 1,
            });
        }
        Ok(())
    }

    /// Per-layer terms `f_i(z_i, t)`, bottom first.
    pub fn layer_values(&self, z: &LatentStack, t: usize) -> Result<Vec<f64>> {
        self.check_time(t)?;
        z.check(&self.spec)?;
        self.nets
            .iter()
            .zip(z.layers())
            .map(|(net, zi)| Ok(net.forward(&with_time(zi, t, self.steps))?[0]))
            .collect()
    }

    /// Adds `scale · ∇_ω F(z̃, t)` into `grads`.
    pub fn accumulate_param_grad(&self, z: &LatentStack, t: usize, scale: f64, grads: &mut EnergyParams) -> Result<()> {
        self.check_time(t)?;
        z.check(&self.spec)?;
        for (i, net) in self.nets.iter().enumerate() {
            let trace = net.forward_traced(&with_time(z.layer(i), t, self.steps))?;
            net.backward(&trace, &[scale], Some(&mut grads.nets[i]))?;
        }
        Ok(())
    }

    /// Adds a constant to every layer's output bias.
    pub fn shift(&mut self, c: f64) {
        for net in &mut self.nets {
            net.layers_mut().last_mut().unwrap().bias.data_mut()[0] += c;
        }
    }

    pub fn round_to_f32(&mut self) {
        for n in &mut self.nets {
            n.round_to_f32();
        }
    }
}

impl LatentEnergy for EnergyParams {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn value(&self, z: &LatentStack, t: usize) -> Result<f64> {
        Ok(self.layer_values(z, t)?.iter().sum())
    }

    fn value_and_grad(&self, z: &LatentStack, t: usize) -> Result<(f64, LatentStack)> {
        self.check_time(t)?;
        z.check(&self.spec)?;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(self.nets.len());
        for (net, zi) in self.nets.iter().zip(z.layers()) {
            let trace = net.forward_traced(&with_time(zi, t, self.steps))?;
            total += trace.output()[0];
            let mut g = net.backward(&trace, &[1.0], None)?;
            g.truncate(zi.len());
            grads.push(g);
        }
        Ok((total, LatentStack::new(grads)))
    }
}

impl ParamSet for EnergyParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.nets.iter().flat_map(|n| n.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.nets.iter_mut().flat_map(|n| n.tensors_mut()).collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        prefixed_names(
            self.nets
                .iter()
                .enumerate()
                .map(|(i, n)| (format!("energy.layer{i}"), n)),
        )
    }
}

/// Energy total and per-layer decomposition at `z̃ = to_latent(ũ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyEval {
    pub total: f64,
    pub per_layer: Vec<f64>,
}

pub fn energy(omega: &EnergyParams, gen: &GeneratorParams, u: &UStack, t: usize) -> Result<EnergyEval> {
    let z = uspace::to_latent(gen, u)?;
    let per_layer = omega.layer_values(&z, t)?;
    Ok(EnergyEval {
        total: per_layer.iter().sum(),
        per_layer,
    })
}

fn check_pair(spec: &LayerSpec, ut: &UStack, next: &UStack, t: usize, sched: &DiffusionSchedule) -> Result<()> {
    ut.check(spec)?;
    next.check(spec)?;
    if t >= sched.steps() {
        return Err(Error::TimeOutOfRange {
            t,
            lo: 0,
            hi: sched.steps() - 1,
        });
    }
    Ok(())
}

fn localization(ut: &UStack, next: &UStack, alpha: f64, sigma2: f64) -> f64 {
    let r: f64 = ut
        .flatten()
        .iter()
        .zip(next.flatten())
        .map(|(a, b)| (alpha * a - b).powi(2))
        .sum();
    r / (2.0 * sigma2)
}

/// `F(T(ũ_t), t) − ‖ũ_t‖²/2 − ‖α_{t+1} ũ_t − ũ_{t+1}‖² / (2σ²_{t+1})`.
pub fn cond_log_density_unnorm<E: LatentEnergy + ?Sized>(
    f: &E,
    gen: &GeneratorParams,
    ut: &UStack,
    next: &UStack,
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<f64> {
    check_pair(gen.spec(), ut, next, t, sched)?;
    let z = uspace::to_latent(gen, ut)?;
    let fv = f.value(&z, t)?;
    let (a, s) = (sched.alpha(t + 1), sched.sigma(t + 1));
    Ok(fv - 0.5 * sq_norm(&ut.flatten()) - localization(ut, next, a, s * s))
}

/// Log density and its exact gradient with respect to `ũ_t`.
pub fn cond_value_and_grad<E: LatentEnergy + ?Sized>(
    f: &E,
    gen: &GeneratorParams,
    ut: &UStack,
    next: &UStack,
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<(f64, UStack)> {
    check_pair(gen.spec(), ut, next, t, sched)?;
    let trace = uspace::to_latent_traced(gen, ut)?;
    let (fv, gz) = f.value_and_grad(&trace.latent, t)?;
    let mut g = uspace::latent_vjp(gen, &trace, &gz)?;
    let (a, s) = (sched.alpha(t + 1), sched.sigma(t + 1));
    let s2 = s * s;
    let mut quad = 0.0;
    for (i, gl) in g.layers_mut().iter_mut().enumerate() {
        let (u, v) = (ut.layer(i), next.layer(i));
        for j in 0..gl.len() {
            let r = a * u[j] - v[j];
            gl[j] -= u[j] + a * r / s2;
            quad += 0.5 * u[j] * u[j] + r * r / (2.0 * s2);
        }
    }
    if let Some((layer, _)) = g.layers().iter().enumerate().find(|(_, l)| l.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite {
            context: "conditional gradient".into(),
            detail: format!("layer {layer} has non-finite entries at t = {t}"),
        });
    }
    Ok((fv - quad, g))
}

pub fn cond_grad<E: LatentEnergy + ?Sized>(
    f: &E,
    gen: &GeneratorParams,
    ut: &UStack,
    next: &UStack,
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<UStack> {
    Ok(cond_value_and_grad(f, gen, ut, next, t, sched)?.1)
}

/// `∇_ũ [F(T(ũ), 0) − ‖ũ‖²/2]`, the score of the unconditioned `ũ`-space EBM.
pub fn marginal_grad_baseline<E: LatentEnergy + ?Sized>(f: &E, gen: &GeneratorParams, u: &UStack) -> Result<UStack> {
    u.check(gen.spec())?;
    let trace = uspace::to_latent_traced(gen, u)?;
    let (_, gz) = f.value_and_grad(&trace.latent, 0)?;
    let mut g = uspace::latent_vjp(gen, &trace, &gz)?;
    for (gl, ul) in g.layers_mut().iter_mut().zip(u.layers()) {
        for (a, b) in gl.iter_mut().zip(ul) {
            *a -= b;
        }
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    pub steps: usize,
    /// Step size is `step_coeff · σ²_{t+1}`.
    pub step_coeff: f64,
    pub temperature: f64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        LangevinConfig {
            steps: 50,
            step_coeff: 0.05,
            temperature: 1.0,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("Langevin needs at least one step"));
        }
        if !(self.step_coeff >= 0.0 && self.step_coeff.is_finite()) {
            return Err(Error::invalid("Langevin step coefficient must be finite and non-negative"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("Langevin temperature must be finite and non-negative"));
        }
        Ok(())
    }
}

pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct LangevinRun {
    pub state: UStack,
    /// Unnormalized log density before each step and after the last one.
    pub log_density: Option<Vec<f64>>,
}

/// Short-run Langevin on `p(ũ_t | ũ_{t+1})` starting from `init`.
#[allow(clippy::too_many_arguments)]
pub fn langevin_sample<E: LatentEnergy + ?Sized>(
    f: &E,
    gen: &GeneratorParams,
    init: &UStack,
    next: &UStack,
    t: usize,
    sched: &DiffusionSchedule,
    cfg: &LangevinConfig,
    stream: &mut RngStream,
    record: bool,
) -> Result<LangevinRun> {
    cfg.validate()?;
    check_pair(gen.spec(), init, next, t, sched)?;
    let sigma = sched.sigma(t + 1);
    let s = cfg.step_coeff * sigma * sigma;
    let noise = cfg.temperature * (2.0 * s).sqrt();
    let mut u = init.clone();
    let mut trace = record.then(|| Vec::with_capacity(cfg.steps + 1));
    for k in 0..cfg.steps {
        let (lp, g) = cond_value_and_grad(f, gen, &u, next, t, sched)?;
        if let Some(tr) = trace.as_mut() {
            tr.push(lp);
        }
        for (ul, gl) in u.layers_mut().iter_mut().zip(g.layers()).rev() {
            for (a, b) in ul.iter_mut().zip(gl) {
                *a += s * b + noise * stream.next_normal();
            }
        }
        let norm = u.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { step: k, norm });
        }
    }
    if let Some(tr) = trace.as_mut() {
        tr.push(cond_log_density_unnorm(f, gen, &u, next, t, sched)?);
    }
    Ok(LangevinRun { state: u, log_density: trace })
}

/// `∇_ω` of the loss `−mean_j [F(pos_j) − F(neg_j)]` at time `t`.
///
/// Each sample's difference is formed before it is accumulated, so coinciding
/// positive and negative sets give an exactly zero gradient.
pub fn prior_gradient(
    omega: &EnergyParams,
    gen: &GeneratorParams,
    pos: &[UStack],
    neg: &[UStack],
    t: usize,
) -> Result<EnergyParams> {
    if pos.len() != neg.len() || pos.is_empty() {
        return Err(Error::invalid("positive and negative batches must be non-empty and equal in size"));
    }
    let scale = 1.0 / pos.len() as f64;
    let (accs, _) = par::chunked(
        pos.len(),
        || omega.zeros_like(),
        |j, acc| {
            let zp = uspace::to_latent(gen, &pos[j])?;
            let zn = uspace::to_latent(gen, &neg[j])?;
            let mut gp = omega.zeros_like();
            let mut gn = omega.zeros_like();
            omega.accumulate_param_grad(&zp, t, 1.0, &mut gp)?;
            omega.accumulate_param_grad(&zn, t, 1.0, &mut gn)?;
            gn.accumulate(&gp, -1.0);
            acc.accumulate(&gn, scale);
            Ok(())
        },
    )?;
    let mut total = omega.zeros_like();
    for a in &accs {
        total.accumulate(a, 1.0);
    }
    Ok(total)
}

impl EnergyParams {
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero_grad();
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub langevin: LangevinConfig,
    /// Optional cap on the global gradient norm.
    pub clip: Option<f64>,
    /// Record elapsed milliseconds per iteration; otherwise `wall_ms` is 0.
    pub log_wall_clock: bool,
}

impl Default for PriorTrainConfig {
    fn default() -> Self {
        PriorTrainConfig {
            iterations: 1000,
            batch_size: 100,
            adam: AdamConfig {
                lr: 1e-3,
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
            },
            langevin: LangevinConfig::default(),
            clip: None,
            log_wall_clock: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorMetrics {
    pub iteration: usize,
    pub t: usize,
    pub e_pos: f64,
    pub e_neg: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

/// Positive/negative pair for one sample of one iteration.
pub(crate) struct TrainingPair {
    pub clean: UStack,
    pub pos: UStack,
    pub neg: UStack,
}

/// Infers `ũ_0` for `x`, draws the forward pair at `t`, and samples the
/// negative with Langevin initialized at `ũ_{t+1}`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn training_pair<E: LatentEnergy + ?Sized>(
    f: &E,
    gen: &GeneratorParams,
    inf: &InferenceParams,
    x: &[f64],
    t: usize,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    stream: &RngStream,
) -> Result<TrainingPair> {
    let post = infer(inf, x, &mut stream.fork(label::INFER))?;
    let clean = uspace::to_base(gen, &post.sample)?;
    let (pos, next) = forward_pair(&clean, t, sched, &mut stream.fork(label::FORWARD))?;
    let run = langevin_sample(f, gen, &next, &next, t, sched, lcfg, &mut stream.fork(label::LANGEVIN), false)?;
    Ok(TrainingPair {
        clean,
        pos,
        neg: run.state,
    })
}

/// Minibatch indices and the time step of one iteration.
pub(crate) fn iteration_draws(stream: &RngStream, n: usize, batch: usize, steps: usize) -> (Vec<usize>, usize) {
    let mut b = stream.fork(label::BATCH);
    let idx = (0..batch).map(|_| b.below(n)).collect();
    let t = stream.fork(label::TIME).below(steps);
    (idx, t)
}

pub(crate) fn clip_grad<P: ParamSet>(g: &mut P, clip: Option<f64>) -> f64 {
    let norm = g.grad_norm();
    if let Some(c) = clip {
        if norm > c {
            g.scale(c / norm);
        }
    }
    norm
}

/// Learns `ω` against a frozen first stage by maximum likelihood on random
/// diffusion steps, with negatives from short-run Langevin.
#[allow(clippy::too_many_arguments)]
pub fn train_prior(
    omega: &mut EnergyParams,
    gen: &GeneratorParams,
    inf: &InferenceParams,
    data: &[Vec<f64>],
    sched: &DiffusionSchedule,
    cfg: &PriorTrainConfig,
    stream: &RngStream,
    mut on_iteration: impl FnMut(&PriorMetrics),
) -> Result<Vec<PriorMetrics>> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(Error::invalid("training needs data and a positive batch size"));
    }
    if omega.steps != sched.steps() {
        return Err(Error::shape("energy time embedding", sched.steps(), omega.steps));
    }
    let mut adam = AdamState::new(omega, cfg.adam);
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let start = Instant::now();
        let s = stream.at_iteration(it as u64);
        let (idx, t) = iteration_draws(&s, data.len(), cfg.batch_size, sched.steps());
        let (_, pairs) = par::chunked(
            idx.len(),
            || (),
            |j, _| training_pair(&*omega, gen, inf, &data[idx[j]], t, sched, &cfg.langevin, &s.for_sample(j as u64)),
        )
        .map_err(|e| Error::NonFiniteLoss {
            iteration: it,
            detail: e.to_string(),
        })?;
        let pos: Vec<UStack> = pairs.iter().map(|p| p.pos.clone()).collect();
        let neg: Vec<UStack> = pairs.into_iter().map(|p| p.neg).collect();
        let (e_pos, e_neg) = mean_energies(omega, gen, &pos, &neg, t)?;
        if !(e_pos.is_finite() && e_neg.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                detail: format!("e_pos {e_pos}, e_neg {e_neg}"),
            });
        }
        let mut g = prior_gradient(omega, gen, &pos, &neg, t)?;
        let grad_norm = clip_grad(&mut g, cfg.clip);
        adam.step(omega, &g)?;
        let m = PriorMetrics {
            iteration: it,
            t,
            e_pos,
            e_neg,
            grad_norm,
            wall_ms: if cfg.log_wall_clock {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        };
        on_iteration(&m);
        log.push(m);
    }
    Ok(log)
}

/// Batch-mean energies of positives and negatives.
pub(crate) fn mean_energies<E: LatentEnergy + ?Sized>(
    f: &E,
    gen: &GeneratorParams,
    pos: &[UStack],
    neg: &[UStack],
    t: usize,
) -> Result<(f64, f64)> {
    let vals = par::map(pos.len(), |j| {
        let p = f.value(&uspace::to_latent(gen, &pos[j])?, t)?;
        let n = f.value(&uspace::to_latent(gen, &neg[j])?, t)?;
        Ok((p, n))
    })?;
    let k = vals.len() as f64;
    Ok((
        vals.iter().map(|v| v.0).sum::<f64>() / k,
        vals.iter().map(|v| v.1).sum::<f64>() / k,
    ))
}

/// Inner product of two stacks, used by directional derivative checks.
pub fn stack_dot(a: &UStack, b: &UStack) -> f64 {
    dot(&a.flatten(), &b.flatten())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{GeneratorConfig, ObservationKind};

    fn scalar_model() -> (GeneratorParams, EnergyParams, DiffusionSchedule) {
        let cfg = GeneratorConfig {
            latent_dims: vec![1, 1],
            data_dim: 1,
            hidden_width: 2,
            hidden_layers: 1,
            observation: ObservationKind::Gaussian,
            activation: Activation::Tanh,
        };
        let gen = GeneratorParams::zeros(cfg).unwrap();
        let sched = DiffusionSchedule::from_sigmas(vec![0.6]).unwrap();
        let f = EnergyParams::zeros(gen.spec(), 1, 3).unwrap();
        (gen, f, sched)
    }

    #[test]
    fn zero_energy_is_sum_of_biases() {
        let (gen, mut f, _) = scalar_model();
        let u = UStack::new(vec![vec![0.3], vec![-1.0]]);
        assert_eq!(energy(&f, &gen, &u, 0).unwrap().total, 0.0);
        f.nets[0].layers_mut()[2].bias.data_mut()[0] = 0.25;
        f.nets[1].layers_mut()[2].bias.data_mut()[0] = -1.0;
        let e = energy(&f, &gen, &u, 0).unwrap();
        assert_eq!(e.per_layer, vec![0.25, -1.0]);
        assert_eq!(e.total, -0.75);
        assert!(energy(&f, &gen, &u, 1).is_err());
    }

    #[test]
    fn zero_gradient_when_batches_coincide() {
        let spec = LayerSpec::new(vec![3, 2]).unwrap();
        let f = EnergyParams::new(&spec, 3, 8, &mut RngStream::new(5)).unwrap();
        let cfg = GeneratorConfig {
            latent_dims: vec![3, 2],
            data_dim: 2,
            hidden_width: 4,
            hidden_layers: 1,
            observation: ObservationKind::Gaussian,
            activation: Activation::Softplus,
        };
        let gen = GeneratorParams::new(cfg, &mut RngStream::new(6)).unwrap();
        let pos: Vec<UStack> = (0..10)
            .map(|i| UStack::from_flat(&spec, &RngStream::new(7).for_sample(i).normal_vec(5)).unwrap())
            .collect();
        let g = prior_gradient(&f, &gen, &pos, &pos, 1).unwrap();
        assert_eq!(g.grad_norm(), 0.0);
    }

    #[test]
    fn langevin_with_zero_step_returns_init() {
        let (gen, f, sched) = scalar_model();
        let u = UStack::new(vec![vec![0.7], vec![-0.2]]);
        let cfg = LangevinConfig {
            steps: 5,
            step_coeff: 0.0,
            temperature: 1.0,
        };
        let run = langevin_sample(&f, &gen, &u, &u, 0, &sched, &cfg, &mut RngStream::new(1), true).unwrap();
        assert_eq!(run.state, u);
        assert_eq!(run.log_density.unwrap().len(), 6);
    }

    #[test]
    fn divergence_is_reported() {
        let (gen, mut f, sched) = scalar_model();
        // a huge output weight pushes the chain away without bound
        f.nets[0].layers_mut()[0].weight.data_mut()[0] = 1.0;
        f.nets[0].layers_mut()[1].weight.data_mut()[0] = 1.0;
        f.nets[0].layers_mut()[2].weight.data_mut()[0] = 1e12;
        let u = UStack::new(vec![vec![0.0], vec![0.0]]);
        let cfg = LangevinConfig::default();
        match langevin_sample(&f, &gen, &u, &u, 0, &sched, &cfg, &mut RngStream::new(1), false) {
            Err(Error::Divergence { step, .. }) => assert_eq!(step, 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
