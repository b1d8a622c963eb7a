//! Label-coupled energies at `t = 0`: a softmax classifier on `ũ_0`, the
//! label-marginal energy, and label-guided sampling.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::ebm::{
    clip_grad, iteration_draws, mean_energies, prior_gradient, training_pair, with_time, EnergyParams,
    LangevinConfig, LatentEnergy, PriorTrainConfig,
};
use crate::error::{Error, Result};
use crate::generator::{GeneratorParams, InferenceParams};
use crate::nn::{prefixed_names, Activation, FeedForwardNet, NetTrace};
use crate::par;
use crate::rng::RngStream;
use crate::stack::{LatentStack, LayerSpec, UStack};
use crate::synthesis::{decode_batch, reverse_with, Energies, LayerClamp, ReverseRunConfig};
use crate::tensor::{ParamSet, Tensor};
use crate::uspace::{self, DiffusionSchedule};

/// One categorical attribute and the layers whose heads score it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolBlock {
    pub arity: usize,
    pub layers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSpec {
    pub blocks: Vec<SymbolBlock>,
}

impl SymbolSpec {
    /// A single `classes`-way label coupled to `layers`.
    pub fn categorical(classes: usize, layers: Vec<usize>) -> Self {
        SymbolSpec {
            blocks: vec![SymbolBlock { arity: classes, layers }],
        }
    }

    pub fn validate(&self, spec: &LayerSpec) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::invalid("symbol spec needs at least one block"));
        }
        let mut owner = vec![None; spec.len()];
        for (b, block) in self.blocks.iter().enumerate() {
            if block.arity == 0 || block.layers.is_empty() {
                return Err(Error::invalid(format!("block {b} needs a positive arity and assigned layers")));
            }
            for &l in &block.layers {
                if l >= spec.len() {
                    return Err(Error::invalid(format!("block {b} assigned to missing layer {l}")));
                }
                if let Some(o) = owner[l].replace(b) {
                    return Err(Error::invalid(format!("layer {l} assigned to blocks {o} and {b}")));
                }
            }
        }
        Ok(())
    }

    fn assigned(&self, layer: usize) -> bool {
        self.blocks.iter().any(|b| b.layers.contains(&layer))
    }
}

/// Requested value per block; `None` leaves the block unconstrained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolVector {
    pub choices: Vec<Option<usize>>,
}

impl SymbolVector {
    pub fn single(class: usize) -> Self {
        SymbolVector {
            choices: vec![Some(class)],
        }
    }

    /// Reads a one-hot vector; anything else is rejected.
    pub fn from_one_hot(one_hot: &[f64]) -> Result<Self> {
        let hot: Vec<usize> = one_hot
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        if hot.len() != 1 || one_hot[hot[0]] != 1.0 {
            return Err(Error::invalid("one-hot vector must contain exactly one 1"));
        }
        Ok(Self::single(hot[0]))
    }

    fn check(&self, symbols: &SymbolSpec) -> Result<()> {
        if self.choices.len() != symbols.blocks.len() {
            return Err(Error::shape("symbol blocks", symbols.blocks.len(), self.choices.len()));
        }
        for (b, (c, block)) in self.choices.iter().zip(&symbols.blocks).enumerate() {
            if let Some(y) = *c {
                if y >= block.arity {
                    return Err(Error::invalid(format!(
                        "unknown symbol {y} for block {b} of arity {}",
                        block.arity
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Logit heads `h_{b,i}([z_i, onehot(0)])` for every assigned layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledEnergyParams {
    pub symbols: SymbolSpec,
    spec: LayerSpec,
    steps: usize,
    /// `heads[b][j]` scores block `b` from layer `symbols.blocks[b].layers[j]`.
    pub heads: Vec<Vec<FeedForwardNet>>,
}

impl CoupledEnergyParams {
    pub fn new(symbols: SymbolSpec, spec: &LayerSpec, steps: usize, width: usize, rng: &mut RngStream) -> Result<Self> {
        Self::build(symbols, spec, steps, width, |d| {
            FeedForwardNet::init(d, Activation::Softplus, Activation::Identity, rng)
        })
    }

    pub fn zeros(symbols: SymbolSpec, spec: &LayerSpec, steps: usize, width: usize) -> Result<Self> {
        Self::build(symbols, spec, steps, width, |d| {
            FeedForwardNet::zeros(d, Activation::Softplus, Activation::Identity)
        })
    }

    fn build(
        symbols: SymbolSpec,
        spec: &LayerSpec,
        steps: usize,
        width: usize,
        mut make: impl FnMut(&[usize]) -> FeedForwardNet,
    ) -> Result<Self> {
        symbols.validate(spec)?;
        if steps == 0 || width == 0 {
            return Err(Error::invalid("coupled heads need steps >= 1 and a positive width"));
        }
        let heads = symbols
            .blocks
            .iter()
            .map(|b| {
                b.layers
                    .iter()
                    .map(|&l| make(&[spec.dim(l) + steps, width, width, b.arity]))
                    .collect()
            })
            .collect();
        Ok(CoupledEnergyParams {
            symbols,
            spec: spec.clone(),
            steps,
            heads,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero_grad();
        g
    }

    pub fn round_to_f32(&mut self) {
        for n in self.heads.iter_mut().flatten() {
            n.round_to_f32();
        }
    }

    fn traced_logits(&self, z: &LatentStack) -> Result<Vec<(Vec<f64>, Vec<NetTrace>)>> {
        z.check(&self.spec)?;
        self.symbols
            .blocks
            .iter()
            .zip(&self.heads)
            .map(|(block, heads)| {
                let mut logits = vec![0.0; block.arity];
                let mut traces = Vec::with_capacity(heads.len());
                for (&l, net) in block.layers.iter().zip(heads) {
                    let tr = net.forward_traced(&with_time(z.layer(l), 0, self.steps))?;
                    for (a, b) in logits.iter_mut().zip(tr.output()) {
                        *a += b;
                    }
                    traces.push(tr);
                }
                Ok((logits, traces))
            })
            .collect()
    }

    /// Summed logits per block.
    pub fn logits(&self, z: &LatentStack) -> Result<Vec<Vec<f64>>> {
        Ok(self.traced_logits(z)?.into_iter().map(|(l, _)| l).collect())
    }

    /// Backpropagates `upstream[b]` (d value / d logits of block `b`),
    /// accumulating input gradients into `gz` and parameter gradients into
    /// `grads` when given.
    fn backprop(
        &self,
        traced: &[(Vec<f64>, Vec<NetTrace>)],
        upstream: &[Vec<f64>],
        gz: Option<&mut LatentStack>,
        mut grads: Option<&mut CoupledEnergyParams>,
    ) -> Result<()> {
        let mut gz = gz;
        for (b, block) in self.symbols.blocks.iter().enumerate() {
            for (j, &l) in block.layers.iter().enumerate() {
                let g = grads.as_deref_mut().map(|g| &mut g.heads[b][j]);
                let gin = self.heads[b][j].backward(&traced[b].1[j], &upstream[b], g)?;
                if let Some(gz) = gz.as_deref_mut() {
                    for (a, v) in gz.layers_mut()[l].iter_mut().zip(&gin) {
                        *a += v;
                    }
                }
            }
        }
        Ok(())
    }
}

impl ParamSet for CoupledEnergyParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.heads.iter().flatten().flat_map(|n| n.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.heads.iter_mut().flatten().flat_map(|n| n.tensors_mut()).collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        prefixed_names(self.heads.iter().enumerate().flat_map(|(b, hs)| {
            hs.iter()
                .enumerate()
                .map(move |(j, n)| (format!("coupled.block{b}.head{j}"), n))
        }))
    }
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(x);
    x.iter().map(|v| (v - lse).exp()).collect()
}

/// How each block contributes to the `t = 0` energy.
#[derive(Clone, Copy)]
enum Readout<'a> {
    /// `log Σ_y exp(logit_y)` for every block.
    Marginal,
    /// `logit_y` for requested blocks, log-sum-exp for the rest.
    Guided(&'a SymbolVector),
}

fn readout(logits: &[f64], choice: Option<usize>) -> (f64, Vec<f64>) {
    match choice {
        Some(y) => {
            let mut w = vec![0.0; logits.len()];
            w[y] = 1.0;
            (logits[y], w)
        }
        None => (log_sum_exp(logits), softmax(logits)),
    }
}

/// The full prior with label-coupled heads at `t = 0`.
#[derive(Clone, Copy)]
pub struct CoupledPrior<'a> {
    pub coupled: &'a CoupledEnergyParams,
    pub base: &'a EnergyParams,
}

/// [`CoupledPrior`] steered towards a requested symbol at `t = 0`.
#[derive(Clone, Copy)]
pub struct GuidedPrior<'a> {
    pub prior: CoupledPrior<'a>,
    pub target: &'a SymbolVector,
}

impl<'a> CoupledPrior<'a> {
    pub fn new(coupled: &'a CoupledEnergyParams, base: &'a EnergyParams) -> Result<Self> {
        if coupled.spec != *base.spec() || coupled.steps != base.steps() {
            return Err(Error::invalid("coupled heads and base energy disagree on layers or steps"));
        }
        Ok(CoupledPrior { coupled, base })
    }

    fn unassigned(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.coupled.spec.len()).filter(|&l| !self.coupled.symbols.assigned(l))
    }

    fn t0(&self, z: &LatentStack, mode: Readout<'_>, want_grad: bool) -> Result<(f64, Option<LatentStack>)> {
        let traced = self.coupled.traced_logits(z)?;
        let mut value = 0.0;
        let mut upstream = Vec::with_capacity(traced.len());
        for (b, (logits, _)) in traced.iter().enumerate() {
            let choice = match mode {
                Readout::Marginal => None,
                Readout::Guided(y) => y.choices[b],
            };
            let (v, w) = readout(logits, choice);
            value += v;
            upstream.push(w);
        }
        let mut gz = want_grad.then(|| LatentStack::zeros(&self.coupled.spec));
        for l in self.unassigned() {
            let net = &self.base.nets[l];
            let tr = net.forward_traced(&with_time(z.layer(l), 0, self.coupled.steps))?;
            value += tr.output()[0];
            if let Some(gz) = gz.as_mut() {
                let g = net.backward(&tr, &[1.0], None)?;
                for (a, v) in gz.layers_mut()[l].iter_mut().zip(&g) {
                    *a += v;
                }
            }
        }
        if let Some(gz) = gz.as_mut() {
            self.coupled.backprop(&traced, &upstream, Some(gz), None)?;
        }
        Ok((value, gz))
    }

    /// Parameter gradient of `scale · F̂(z̃, 0)`.
    fn accumulate_t0_grad(
        &self,
        z: &LatentStack,
        scale: f64,
        gc: &mut CoupledEnergyParams,
        gb: &mut EnergyParams,
    ) -> Result<()> {
        let traced = self.coupled.traced_logits(z)?;
        let upstream: Vec<Vec<f64>> = traced
            .iter()
            .map(|(l, _)| softmax(l).into_iter().map(|p| p * scale).collect())
            .collect();
        self.coupled.backprop(&traced, &upstream, None, Some(gc))?;
        for l in self.unassigned() {
            let net = &self.base.nets[l];
            let tr = net.forward_traced(&with_time(z.layer(l), 0, self.coupled.steps))?;
            net.backward(&tr, &[scale], Some(&mut gb.nets[l]))?;
        }
        Ok(())
    }
}

impl LatentEnergy for CoupledPrior<'_> {
    fn spec(&self) -> &LayerSpec {
        &self.coupled.spec
    }

    fn steps(&self) -> usize {
        self.coupled.steps
    }

    fn value(&self, z: &LatentStack, t: usize) -> Result<f64> {
        if t == 0 {
            Ok(self.t0(z, Readout::Marginal, false)?.0)
        } else {
            self.base.value(z, t)
        }
    }

    fn value_and_grad(&self, z: &LatentStack, t: usize) -> Result<(f64, LatentStack)> {
        if t == 0 {
            let (v, g) = self.t0(z, Readout::Marginal, true)?;
            Ok((v, g.expect("gradient requested")))
        } else {
            self.base.value_and_grad(z, t)
        }
    }
}

impl<'a> GuidedPrior<'a> {
    pub fn new(prior: CoupledPrior<'a>, target: &'a SymbolVector) -> Result<Self> {
        target.check(&prior.coupled.symbols)?;
        Ok(GuidedPrior { prior, target })
    }
}

impl LatentEnergy for GuidedPrior<'_> {
    fn spec(&self) -> &LayerSpec {
        self.prior.spec()
    }

    fn steps(&self) -> usize {
        self.prior.steps()
    }

    fn value(&self, z: &LatentStack, t: usize) -> Result<f64> {
        if t == 0 {
            Ok(self.prior.t0(z, Readout::Guided(self.target), false)?.0)
        } else {
            self.prior.base.value(z, t)
        }
    }

    fn value_and_grad(&self, z: &LatentStack, t: usize) -> Result<(f64, LatentStack)> {
        if t == 0 {
            let (v, g) = self.prior.t0(z, Readout::Guided(self.target), true)?;
            Ok((v, g.expect("gradient requested")))
        } else {
            self.prior.base.value_and_grad(z, t)
        }
    }
}

/// `p(y_b | ũ_0)` per block. The conditioning state `ũ_1` only enters the
/// label-independent base terms, so it does not appear here.
pub fn classify(coupled: &CoupledEnergyParams, gen: &GeneratorParams, u0: &UStack) -> Result<Vec<Vec<f64>>> {
    let z = uspace::to_latent(gen, u0)?;
    Ok(coupled.logits(&z)?.iter().map(|l| softmax(l)).collect())
}

/// `F̂(T(ũ_0), 0)`: log-sum-exp over symbols plus unassigned scalar energies.
pub fn coupled_marginal_energy(prior: &CoupledPrior<'_>, gen: &GeneratorParams, u0: &UStack) -> Result<f64> {
    prior.value(&uspace::to_latent(gen, u0)?, 0)
}

/// Cross-entropy `−Σ_b log p(y_b | ũ_0)` and its logit gradient per block.
fn cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| {
            let mut p = softmax(l);
            loss -= p[y].ln();
            p[y] -= 1.0;
            p
        })
        .collect();
    (loss, grads)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledTrainConfig {
    pub prior: PriorTrainConfig,
    /// Weight of the cross-entropy term, applied every iteration.
    pub ce_weight: f64,
}

impl Default for CoupledTrainConfig {
    fn default() -> Self {
        CoupledTrainConfig {
            prior: PriorTrainConfig::default(),
            ce_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledMetrics {
    pub iteration: usize,
    pub t: usize,
    pub e_pos: f64,
    pub e_neg: f64,
    pub cross_entropy: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

/// Joint training of the coupled heads and the base energy. Steps `t ≥ 1`
/// update the base energy as in [`crate::ebm::train_prior`]; `t = 0` uses
/// the label-marginal energy. Cross-entropy on the clean `ũ_0` is added
/// every iteration.
#[allow(clippy::too_many_arguments)]
pub fn train_coupled(
    coupled: &mut CoupledEnergyParams,
    base: &mut EnergyParams,
    gen: &GeneratorParams,
    inf: &InferenceParams,
    data: &[Vec<f64>],
    labels: &[Vec<usize>],
    sched: &DiffusionSchedule,
    cfg: &CoupledTrainConfig,
    stream: &RngStream,
    mut on_iteration: impl FnMut(&CoupledMetrics),
) -> Result<Vec<CoupledMetrics>> {
    let pcfg = &cfg.prior;
    if data.is_empty() || pcfg.batch_size == 0 {
        return Err(Error::invalid("training needs data and a positive batch size"));
    }
    if labels.len() != data.len() {
        return Err(Error::shape("labels", data.len(), labels.len()));
    }
    for (i, y) in labels.iter().enumerate() {
        let sv = SymbolVector {
            choices: y.iter().map(|&v| Some(v)).collect(),
        };
        sv.check(&coupled.symbols)
            .map_err(|e| Error::invalid(format!("label row {i}: {e}")))?;
    }
    CoupledPrior::new(coupled, base)?;
    if base.steps() != sched.steps() {
        return Err(Error::shape("energy time embedding", sched.steps(), base.steps()));
    }
    let mut adam_c = AdamState::new(&*coupled, pcfg.adam);
    let mut adam_b = AdamState::new(&*base, pcfg.adam);
    let mut log = Vec::with_capacity(pcfg.iterations);
    for it in 0..pcfg.iterations {
        let start = Instant::now();
        let s = stream.at_iteration(it as u64);
        let (idx, t) = iteration_draws(&s, data.len(), pcfg.batch_size, sched.steps());
        let prior = CoupledPrior::new(coupled, base)?;
        let (_, pairs) = par::chunked(
            idx.len(),
            || (),
            |j, _| training_pair(&prior, gen, inf, &data[idx[j]], t, sched, &pcfg.langevin, &s.for_sample(j as u64)),
        )
        .map_err(|e| Error::NonFiniteLoss {
            iteration: it,
            detail: e.to_string(),
        })?;
        let pos: Vec<UStack> = pairs.iter().map(|p| p.pos.clone()).collect();
        let neg: Vec<UStack> = pairs.iter().map(|p| p.neg.clone()).collect();
        let (e_pos, e_neg) = mean_energies(&prior, gen, &pos, &neg, t)?;
        let scale = 1.0 / idx.len() as f64;

        let mut gc = coupled.zeros_like();
        let mut gb = if t == 0 {
            let (accs, _) = par::chunked(
                idx.len(),
                || (coupled.zeros_like(), base.zeros_like()),
                |j, (ac, ab)| {
                    let zp = uspace::to_latent(gen, &pos[j])?;
                    let zn = uspace::to_latent(gen, &neg[j])?;
                    let (mut pc, mut pb) = (coupled.zeros_like(), base.zeros_like());
                    let (mut nc, mut nb) = (coupled.zeros_like(), base.zeros_like());
                    prior.accumulate_t0_grad(&zp, 1.0, &mut pc, &mut pb)?;
                    prior.accumulate_t0_grad(&zn, 1.0, &mut nc, &mut nb)?;
                    nc.accumulate(&pc, -1.0);
                    nb.accumulate(&pb, -1.0);
                    ac.accumulate(&nc, scale);
                    ab.accumulate(&nb, scale);
                    Ok(())
                },
            )?;
            let mut gb = base.zeros_like();
            for (ac, ab) in &accs {
                gc.accumulate(ac, 1.0);
                gb.accumulate(ab, 1.0);
            }
            gb
        } else {
            prior_gradient(base, gen, &pos, &neg, t)?
        };

        let (accs, losses) = par::chunked(
            idx.len(),
            || coupled.zeros_like(),
            |j, acc| {
                let z = uspace::to_latent(gen, &pairs[j].clean)?;
                let traced = coupled.traced_logits(&z)?;
                let logits: Vec<Vec<f64>> = traced.iter().map(|(l, _)| l.clone()).collect();
                let (loss, g) = cross_entropy(&logits, &labels[idx[j]]);
                let up: Vec<Vec<f64>> = g
                    .into_iter()
                    .map(|v| v.into_iter().map(|x| x * scale * cfg.ce_weight).collect())
                    .collect();
                coupled.backprop(&traced, &up, None, Some(acc))?;
                Ok(loss)
            },
        )?;
        for a in &accs {
            gc.accumulate(a, 1.0);
        }
        let ce = losses.iter().sum::<f64>() * scale;
        if !(ce.is_finite() && e_pos.is_finite() && e_neg.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                detail: format!("cross-entropy {ce}, e_pos {e_pos}, e_neg {e_neg}"),
            });
        }
        let norm_c = clip_grad(&mut gc, pcfg.clip);
        let norm_b = clip_grad(&mut gb, pcfg.clip);
        adam_c.step(coupled, &gc)?;
        adam_b.step(base, &gb)?;
        let m = CoupledMetrics {
            iteration: it,
            t,
            e_pos,
            e_neg,
            cross_entropy: ce,
            grad_norm: (norm_c * norm_c + norm_b * norm_b).sqrt(),
            wall_ms: if pcfg.log_wall_clock {
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

#[derive(Clone, Debug, PartialEq)]
pub struct ControlledSamples {
    pub base: Vec<UStack>,
    pub latents: Vec<LatentStack>,
    pub data: Vec<Vec<f64>>,
}

/// Reverse chain `T → 1` unconditionally, then the `t = 0` step on the
/// label-guided energy. With `clamp`, the layers outside its resample set
/// follow the given references throughout.
#[allow(clippy::too_many_arguments)]
pub fn controllable_sample(
    prior: &CoupledPrior<'_>,
    gen: &GeneratorParams,
    target: &SymbolVector,
    sched: &DiffusionSchedule,
    lcfg: &LangevinConfig,
    samples: usize,
    temperature: f64,
    clamp: Option<LayerClamp>,
    stream: &RngStream,
) -> Result<ControlledSamples> {
    let guided = GuidedPrior::new(*prior, target)?;
    let rcfg = ReverseRunConfig {
        samples,
        temperature,
        record_trajectory: false,
        clamp,
    };
    let energies = Energies {
        rest: prior.base,
        final_step: &guided,
    };
    let out = reverse_with(energies, gen, sched, lcfg, &rcfg, 0, stream)?;
    let (data, latents) = decode_batch(gen, out.samples.clone())?;
    Ok(ControlledSamples {
        base: out.samples,
        latents,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_arithmetic() {
        let p = softmax(&[2.0, 0.0]);
        assert!((p[0] - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!((p[1] - 0.119_202_922_022_117_6).abs() < 1e-15);
        assert!((log_sum_exp(&[0.7, 0.7]) - (0.7 + 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn perfectly_predicted_label_has_vanishing_gradient() {
        let (loss, g) = cross_entropy(&[vec![800.0, 0.0, 0.0]], &[0]);
        assert_eq!(loss, 0.0);
        assert!(g[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symbol_validation() {
        let spec = LayerSpec::new(vec![2, 2, 1]).unwrap();
        assert!(SymbolSpec::categorical(3, vec![3]).validate(&spec).is_err());
        assert!(SymbolSpec::categorical(0, vec![1]).validate(&spec).is_err());
        let two = SymbolSpec {
            blocks: vec![
                SymbolBlock { arity: 2, layers: vec![2] },
                SymbolBlock { arity: 2, layers: vec![2] },
            ],
        };
        assert!(two.validate(&spec).is_err());
        assert!(SymbolVector::from_one_hot(&[0.0, 1.0, 0.0]).unwrap() == SymbolVector::single(1));
        assert!(SymbolVector::from_one_hot(&[0.5, 0.5]).is_err());
        assert!(SymbolVector::single(3).check(&SymbolSpec::categorical(3, vec![2])).is_err());
    }
}
