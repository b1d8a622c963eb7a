//! The layer-triangular map between base noise `ũ` and latents `z̃`, and the
//! forward noising process on `ũ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{GeneratorParams, Gaussian};
use crate::nn::{sigmoid, NetTrace};
use crate::rng::RngStream;
use crate::stack::{LatentStack, UStack};

/// Recorded evaluation of [`to_latent`], reused by [`latent_vjp`].
pub struct LatentTrace {
    pub latent: LatentStack,
    base: UStack,
    /// Per lower layer: prior net trace and raw std outputs.
    priors: Vec<(NetTrace, Vec<f64>, Vec<f64>)>,
}

/// `z_L = u_L`, then `z_i = μ_i(z_{i+1}) + σ_i(z_{i+1}) · u_i` top-down.
pub fn to_latent(gen: &GeneratorParams, u: &UStack) -> Result<LatentStack> {
    u.check(gen.spec())?;
    let l = u.num_layers();
    let mut z = vec![Vec::new(); l];
    z[l - 1] = u.layer(l - 1).to_vec();
    for i in (0..l - 1).rev() {
        let g = gen.prior_layer(i, &z[i + 1])?;
        z[i] = affine(&g, u.layer(i));
    }
    Ok(LatentStack::new(z))
}

pub fn to_latent_traced(gen: &GeneratorParams, u: &UStack) -> Result<LatentTrace> {
    u.check(gen.spec())?;
    let l = u.num_layers();
    let mut z = vec![Vec::new(); l];
    let mut priors: Vec<Option<(NetTrace, Vec<f64>, Vec<f64>)>> = (0..l - 1).map(|_| None).collect();
    z[l - 1] = u.layer(l - 1).to_vec();
    for i in (0..l - 1).rev() {
        let (g, raw, trace) = gen.prior_layer_traced(i, &z[i + 1])?;
        z[i] = affine(&g, u.layer(i));
        priors[i] = Some((trace, raw, g.std));
    }
    Ok(LatentTrace {
        latent: LatentStack::new(z),
        base: u.clone(),
        priors: priors.into_iter().map(Option::unwrap).collect(),
    })
}

fn affine(g: &Gaussian, u: &[f64]) -> Vec<f64> {
    g.mean
        .iter()
        .zip(&g.std)
        .zip(u)
        .map(|((m, s), u)| m + s * u)
        .collect()
}

/// Pulls a gradient with respect to `z̃` back to `ũ` through a recorded
/// [`to_latent`] evaluation.
pub fn latent_vjp(gen: &GeneratorParams, trace: &LatentTrace, grad_z: &LatentStack) -> Result<UStack> {
    grad_z.check(gen.spec())?;
    let l = grad_z.num_layers();
    let mut gz: Vec<Vec<f64>> = grad_z.layers().to_vec();
    let mut gu = vec![Vec::new(); l];
    for i in 0..l - 1 {
        let (net_trace, raw, std) = &trace.priors[i];
        let u = trace.base.layer(i);
        let d = u.len();
        gu[i] = gz[i].iter().zip(std).map(|(g, s)| g * s).collect();
        let mut up = vec![0.0; 2 * d];
        for j in 0..d {
            up[j] = gz[i][j];
            up[d + j] = gz[i][j] * u[j] * sigmoid(raw[j]);
        }
        let back = gen.prior[i].backward(net_trace, &up, None)?;
        for (a, b) in gz[i + 1].iter_mut().zip(&back) {
            *a += b;
        }
    }
    gu[l - 1] = std::mem::take(&mut gz[l - 1]);
    Ok(UStack::new(gu))
}

/// `u_L = z_L`, then `u_i = (z_i − μ_i(z_{i+1})) / σ_i(z_{i+1})`.
pub fn to_base(gen: &GeneratorParams, z: &LatentStack) -> Result<UStack> {
    z.check(gen.spec())?;
    let l = z.num_layers();
    let mut u = vec![Vec::new(); l];
    u[l - 1] = z.layer(l - 1).to_vec();
    for i in 0..l - 1 {
        let g = gen.prior_layer(i, z.layer(i + 1))?;
        u[i] = z
            .layer(i)
            .iter()
            .zip(g.mean.iter().zip(&g.std))
            .map(|(z, (m, s))| (z - m) / s)
            .collect();
    }
    Ok(UStack::new(u))
}

/// Per-step noise levels. Index `t` in methods is 1-based, as in the
/// forward kernel `q(ũ_t | ũ_{t-1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Geometric schedule with `ᾱ_t = ᾱ_T^{t/T}`.
pub fn make_schedule(steps: usize, alpha_bar_final: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(Error::invalid("diffusion steps must be at least 1"));
    }
    if !(alpha_bar_final > 0.0 && alpha_bar_final < 1.0) {
        return Err(Error::invalid(format!(
            "final alpha-bar must lie in (0, 1), got {alpha_bar_final}"
        )));
    }
    let alpha = alpha_bar_final.powf(1.0 / steps as f64);
    DiffusionSchedule::from_alphas(vec![alpha; steps])
}

impl DiffusionSchedule {
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::invalid("every alpha must lie in (0, 1)"));
        }
        let sigmas = alphas.iter().map(|a| (1.0 - a * a).sqrt()).collect();
        Ok(Self::assemble(alphas, sigmas))
    }

    /// Builds a schedule from per-step noise stds in (0, 1).
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() || sigmas.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(Error::invalid("every sigma must lie in (0, 1)"));
        }
        let alphas = sigmas.iter().map(|s| (1.0 - s * s).sqrt()).collect();
        Ok(Self::assemble(alphas, sigmas))
    }

    fn assemble(alphas: Vec<f64>, sigmas: Vec<f64>) -> Self {
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        DiffusionSchedule {
            alphas,
            sigmas,
            alpha_bars,
        }
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    fn index(&self, t: usize) -> usize {
        assert!(t >= 1 && t <= self.steps(), "schedule index {t} outside 1..={}", self.steps());
        t - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[self.index(t)]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[self.index(t)]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[self.index(t)]
        }
    }
}

fn noisy(u: &UStack, mean_scale: f64, noise_scale: f64, stream: &mut RngStream) -> UStack {
    let mut out = u.clone();
    for l in out.layers_mut().iter_mut().rev() {
        for v in l.iter_mut() {
            *v = mean_scale * *v + noise_scale * stream.next_normal();
        }
    }
    out
}

/// One forward kernel step `ũ_{t+1} = α_{t+1} ũ_t + σ_{t+1} ε`, `0 ≤ t < T`.
pub fn perturb_step(u: &UStack, t: usize, sched: &DiffusionSchedule, stream: &mut RngStream) -> Result<UStack> {
    if t >= sched.steps() {
        return Err(Error::TimeOutOfRange {
            t,
            lo: 0,
            hi: sched.steps() - 1,
        });
    }
    Ok(noisy(u, sched.alpha(t + 1), sched.sigma(t + 1), stream))
}

/// Draw from the `t`-step marginal `N(ᾱ_t ũ_0, (1 − ᾱ_t²) I)`, `1 ≤ t ≤ T`.
pub fn perturb_to(u0: &UStack, t: usize, sched: &DiffusionSchedule, stream: &mut RngStream) -> Result<UStack> {
    if t == 0 || t > sched.steps() {
        return Err(Error::TimeOutOfRange {
            t,
            lo: 1,
            hi: sched.steps(),
        });
    }
    let ab = sched.alpha_bar(t);
    Ok(noisy(u0, ab, (1.0 - ab * ab).sqrt(), stream))
}

/// Joint forward draw `(ũ_t, ũ_{t+1})` for `0 ≤ t < T`.
pub fn forward_pair(
    u0: &UStack,
    t: usize,
    sched: &DiffusionSchedule,
    stream: &mut RngStream,
) -> Result<(UStack, UStack)> {
    let ut = if t == 0 {
        u0.clone()
    } else {
        perturb_to(u0, t, sched, stream)?
    };
    let next = perturb_step(&ut, t, sched, stream)?;
    Ok((ut, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{GeneratorConfig, ObservationKind};
    use crate::nn::Activation;
    use crate::stack::LayerSpec;

    #[test]
    fn schedule_arithmetic() {
        let s = make_schedule(1, 0.01).unwrap();
        assert!((s.alpha(1) - 0.01).abs() < 1e-15);
        assert!((s.sigma(1) - 0.9999f64.sqrt()).abs() < 1e-15);
        let s = make_schedule(3, 0.01).unwrap();
        let a = 0.01f64.powf(1.0 / 3.0);
        assert!((s.alpha(2) - 0.215_443_469_003_188_4).abs() < 1e-12);
        for t in 1..=3 {
            assert!((s.alpha_bar(t) - 0.01f64.powf(t as f64 / 3.0)).abs() < 1e-15);
            assert!((s.alpha(t) - a).abs() < 1e-15);
            assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-15);
        }
        assert!(make_schedule(0, 0.01).is_err());
        assert!(make_schedule(3, 1.0).is_err());
        assert!(make_schedule(3, 0.0).is_err());
    }

    #[test]
    fn time_bounds_are_enforced() {
        let s = make_schedule(3, 0.01).unwrap();
        let spec = LayerSpec::new(vec![1, 1]).unwrap();
        let u = UStack::zeros(&spec);
        let mut r = RngStream::new(0);
        assert!(perturb_step(&u, 3, &s, &mut r).is_err());
        assert!(perturb_to(&u, 0, &s, &mut r).is_err());
        assert!(perturb_to(&u, 4, &s, &mut r).is_err());
        assert!(perturb_to(&u, 3, &s, &mut r).is_ok());
    }

    #[test]
    fn fixed_noise_step_matches_formula() {
        let s = DiffusionSchedule::from_sigmas(vec![0.6]).unwrap();
        let spec = LayerSpec::new(vec![2, 1]).unwrap();
        let u = UStack::from_flat(&spec, &[1.0, -2.0, 0.5]).unwrap();
        let stream = RngStream::new(5);
        let out = perturb_step(&u, 0, &s, &mut stream.clone()).unwrap();
        // noise is consumed top layer first
        let mut r = stream.clone();
        let e_top = r.next_normal();
        let e0 = r.next_normal();
        let e1 = r.next_normal();
        assert_eq!(out.layer(1)[0], 0.8 * 0.5 + 0.6 * e_top);
        assert_eq!(out.layer(0), &[0.8 * 1.0 + 0.6 * e0, 0.8 * -2.0 + 0.6 * e1]);
    }

    #[test]
    fn identity_transform_when_prior_is_standard() {
        let cfg = GeneratorConfig {
            latent_dims: vec![3, 2],
            data_dim: 2,
            hidden_width: 4,
            hidden_layers: 1,
            observation: ObservationKind::Gaussian,
            activation: Activation::Tanh,
        };
        let mut gen = GeneratorParams::zeros(cfg).unwrap();
        // raw std with softplus(raw) + floor = 1
        let raw = (1.0f64 - 1e-3).exp_m1().ln();
        let out = gen.prior[0].layers_mut().last_mut().unwrap();
        for j in 3..6 {
            out.bias.data_mut()[j] = raw;
        }
        let u = UStack::new(vec![vec![0.1, -0.4, 2.0], vec![1.5, -0.2]]);
        let z = to_latent(&gen, &u).unwrap();
        assert!(z.flatten().iter().zip(u.flatten()).all(|(a, b)| (a - b).abs() < 1e-12));
        let back = to_base(&gen, &z).unwrap();
        assert!(back.max_abs_diff(&u) < 1e-12);
    }
}
