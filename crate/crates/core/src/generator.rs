//! First-stage hierarchical generator with conditional-Gaussian layers and
//! ladder-style top-down inference, trained on the ELBO.

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::nn::{prefixed_names, sigmoid, softplus, Activation, FeedForwardNet, NetTrace};
use crate::par;
use crate::rng::RngStream;
use crate::stack::{LatentStack, LayerSpec, UStack};
use crate::tensor::{ParamSet, Tensor};
use crate::uspace;

/// Lower bound added to every softplus standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-3;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationKind {
    /// Gaussian with one learned global log-variance.
    Gaussian,
    /// Factorized Bernoulli on intensities in [0, 1].
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Latent widths, bottom layer first.
    pub latent_dims: Vec<usize>,
    pub data_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub observation: ObservationKind,
    pub activation: Activation,
}

impl GeneratorConfig {
    pub fn toy_2d() -> Self {
        GeneratorConfig {
            latent_dims: vec![8, 4, 2],
            data_dim: 2,
            hidden_width: 64,
            hidden_layers: 2,
            observation: ObservationKind::Gaussian,
            activation: Activation::Softplus,
        }
    }

    pub fn images(pixels: usize) -> Self {
        GeneratorConfig {
            latent_dims: vec![32, 16, 8],
            data_dim: pixels,
            hidden_width: 64,
            hidden_layers: 2,
            observation: ObservationKind::Bernoulli,
            activation: Activation::Softplus,
        }
    }

    pub fn layer_spec(&self) -> Result<LayerSpec> {
        LayerSpec::new(self.latent_dims.clone())
    }

    fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_spec()?;
        if self.data_dim == 0 || self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::invalid("data_dim, hidden_width and hidden_layers must be positive"));
        }
        Ok(())
    }
}

fn chain(first: usize, middle: &[usize], last: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(middle.len() + 2);
    d.push(first);
    d.extend_from_slice(middle);
    d.push(last);
    d
}

/// Mean and standard deviation of a diagonal Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Splits a `[mean, raw]` net output and applies the softplus floor.
fn split_gaussian(out: &[f64]) -> (Gaussian, Vec<f64>) {
    let d = out.len() / 2;
    let raw = out[d..].to_vec();
    let std = raw.iter().map(|&r| softplus(r) + SIGMA_FLOOR).collect();
    (
        Gaussian {
            mean: out[..d].to_vec(),
            std,
        },
        raw,
    )
}

/// `KL(N(qm, qs²) || N(pm, ps²))` summed over coordinates.
pub fn gaussian_kl(q: &Gaussian, p: &Gaussian) -> f64 {
    q.mean
        .iter()
        .zip(&q.std)
        .zip(p.mean.iter().zip(&p.std))
        .map(|((&qm, &qs), (&pm, &ps))| {
            (ps / qs).ln() + (qs * qs + (qm - pm).powi(2)) / (2.0 * ps * ps) - 0.5
        })
        .sum()
}

fn standard_normal(d: usize) -> Gaussian {
    Gaussian {
        mean: vec![0.0; d],
        std: vec![1.0; d],
    }
}

/// Parameters of `p(z_L) p(z_i | z_{i+1}) p(x | z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub config: GeneratorConfig,
    spec: LayerSpec,
    /// `prior[i]` maps `z_{i+1}` to `(mean, raw std)` of layer `i`.
    pub prior: Vec<FeedForwardNet>,
    /// Maps the flattened stack (bottom first) to observation parameters.
    pub decoder: FeedForwardNet,
    /// Global observation log-variance, present for Gaussian observations.
    pub log_var: Option<Tensor>,
}

/// Observation distribution emitted by the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub mean: Vec<f64>,
    /// Shared variance for Gaussian observations.
    pub variance: Option<f64>,
}

impl GeneratorParams {
    pub fn new(config: GeneratorConfig, rng: &mut RngStream) -> Result<Self> {
        Self::build(config, |dims, hidden, out| FeedForwardNet::init(dims, hidden, out, rng))
    }

    pub fn zeros(config: GeneratorConfig) -> Result<Self> {
        Self::build(config, FeedForwardNet::zeros)
    }

    fn build(
        config: GeneratorConfig,
        mut make: impl FnMut(&[usize], Activation, Activation) -> FeedForwardNet,
    ) -> Result<Self> {
        config.validate()?;
        let spec = config.layer_spec()?;
        let hidden = config.hidden();
        let act = config.activation;
        let prior = (0..spec.len() - 1)
            .map(|i| make(&chain(spec.dim(i + 1), &hidden, 2 * spec.dim(i)), act, Activation::Identity))
            .collect();
        let decoder = make(&chain(spec.total(), &hidden, config.data_dim), act, Activation::Identity);
        let log_var = match config.observation {
            ObservationKind::Gaussian => Some(Tensor::zeros(vec![1])),
            ObservationKind::Bernoulli => None,
        };
        Ok(GeneratorParams {
            config,
            spec,
            prior,
            decoder,
            log_var,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn data_dim(&self) -> usize {
        self.config.data_dim
    }

    /// `p(z_i | z_{i+1})` for layer `i < L - 1`.
    pub fn prior_layer(&self, i: usize, above: &[f64]) -> Result<Gaussian> {
        Ok(split_gaussian(&self.prior[i].forward(above)?).0)
    }

    pub(crate) fn prior_layer_traced(&self, i: usize, above: &[f64]) -> Result<(Gaussian, Vec<f64>, NetTrace)> {
        let trace = self.prior[i].forward_traced(above)?;
        let (g, raw) = split_gaussian(trace.output());
        Ok((g, raw, trace))
    }

    pub fn decode(&self, z: &LatentStack) -> Result<Observation> {
        z.check(&self.spec)?;
        let out = self.decoder.forward(&z.flatten())?;
        Ok(match self.config.observation {
            ObservationKind::Gaussian => Observation {
                mean: out,
                variance: Some(self.log_var.as_ref().map_or(1.0, |t| t.data()[0].exp())),
            },
            ObservationKind::Bernoulli => Observation {
                mean: out.into_iter().map(sigmoid).collect(),
                variance: None,
            },
        })
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

impl ParamSet for GeneratorParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.prior.iter().flat_map(|n| n.tensors()).collect();
        v.extend(self.decoder.tensors());
        v.extend(self.log_var.iter());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.prior.iter_mut().flat_map(|n| n.tensors_mut()).collect();
        v.extend(self.decoder.tensors_mut());
        v.extend(self.log_var.iter_mut());
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut names = prefixed_names(
            self.prior
                .iter()
                .enumerate()
                .map(|(i, n)| (format!("generator.prior{i}"), n))
                .chain(std::iter::once(("generator.decoder".to_string(), &self.decoder))),
        );
        if self.log_var.is_some() {
            names.push("generator.log_var".into());
        }
        names
    }
}

/// Draws `z_L ~ N(0, I)` and then each `z_i ~ p(z_i | z_{i+1})`, top-down.
pub fn prior_ancestral_sample(gen: &GeneratorParams, stream: &mut RngStream) -> Result<LatentStack> {
    let u = draw_base(gen.spec(), stream);
    uspace::to_latent(gen, &u)
}

pub(crate) fn draw_base(spec: &LayerSpec, stream: &mut RngStream) -> UStack {
    let mut u = UStack::zeros(spec);
    // top layer first, matching the order in which noise is consumed top-down
    for l in u.layers_mut().iter_mut().rev() {
        stream.fill_normal(l);
    }
    u
}

/// Ladder inference network `q(z_L | x) q(z_i | z_{i+1}, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceParams {
    spec: LayerSpec,
    data_dim: usize,
    /// Bottom-up features of `x`.
    pub feature: FeedForwardNet,
    /// Features to `(mean, raw std)` of the top layer.
    pub top: FeedForwardNet,
    /// `layers[i]` maps `[features, z_{i+1}]` to `(mean, raw std)` of layer `i`.
    pub layers: Vec<FeedForwardNet>,
}

/// Posterior parameters per layer and the reparameterized sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Inferred {
    pub posterior: Vec<Gaussian>,
    pub sample: LatentStack,
}

impl InferenceParams {
    pub fn new(config: &GeneratorConfig, rng: &mut RngStream) -> Result<Self> {
        Self::build(config, |dims, hidden, out| FeedForwardNet::init(dims, hidden, out, rng))
    }

    pub fn zeros(config: &GeneratorConfig) -> Result<Self> {
        Self::build(config, FeedForwardNet::zeros)
    }

    fn build(
        config: &GeneratorConfig,
        mut make: impl FnMut(&[usize], Activation, Activation) -> FeedForwardNet,
    ) -> Result<Self> {
        config.validate()?;
        let spec = config.layer_spec()?;
        let h = config.hidden_width;
        let act = config.activation;
        let feature = make(&chain(config.data_dim, &config.hidden()[1..], h), act, act);
        let top = make(&[h, h, 2 * spec.dim(spec.top())], act, Activation::Identity);
        let layers = (0..spec.len() - 1)
            .map(|i| make(&[h + spec.dim(i + 1), h, 2 * spec.dim(i)], act, Activation::Identity))
            .collect();
        Ok(InferenceParams {
            spec,
            data_dim: config.data_dim,
            feature,
            top,
            layers,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

impl ParamSet for InferenceParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.feature.tensors();
        v.extend(self.top.tensors());
        v.extend(self.layers.iter().flat_map(|n| n.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.feature.tensors_mut();
        v.extend(self.top.tensors_mut());
        v.extend(self.layers.iter_mut().flat_map(|n| n.tensors_mut()));
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        prefixed_names(
            [
                ("inference.feature".to_string(), &self.feature),
                ("inference.top".to_string(), &self.top),
            ]
            .into_iter()
            .chain(self.layers.iter().enumerate().map(|(i, n)| (format!("inference.layer{i}"), n))),
        )
    }
}

fn check_finite(v: &[f64], context: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: context.into(),
            detail: format!("entry {i} is {}", v[i]),
        });
    }
    Ok(())
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Forward pass of the ladder posterior, keeping everything backward needs.
struct PosteriorTrace {
    feature: NetTrace,
    top: NetTrace,
    top_raw: Vec<f64>,
    layers: Vec<Option<(NetTrace, Vec<f64>)>>,
    posterior: Vec<Gaussian>,
    sample: LatentStack,
}

fn posterior_traced(inf: &InferenceParams, x: &[f64], eps: &[Vec<f64>]) -> Result<PosteriorTrace> {
    if x.len() != inf.data_dim {
        return Err(Error::shape("inference input", inf.data_dim, x.len()));
    }
    let spec = &inf.spec;
    let l = spec.len();
    if eps.len() != l {
        return Err(Error::shape("inference noise layers", l, eps.len()));
    }
    let feature = inf.feature.forward_traced(x)?;
    let h = feature.output().to_vec();
    check_finite(&h, "inference features")?;
    let top = inf.top.forward_traced(&h)?;
    let (g_top, top_raw) = split_gaussian(top.output());
    let mut z = vec![Vec::new(); l];
    let mut posterior: Vec<Option<Gaussian>> = vec![None; l];
    let mut layers = vec![None; l];
    z[l - 1] = reparam(&g_top, &eps[l - 1])?;
    posterior[l - 1] = Some(g_top);
    for i in (0..l - 1).rev() {
        let tr = inf.layers[i].forward_traced(&concat(&h, &z[i + 1]))?;
        let (g, raw) = split_gaussian(tr.output());
        z[i] = reparam(&g, &eps[i])?;
        posterior[i] = Some(g);
        layers[i] = Some((tr, raw));
    }
    for (i, zi) in z.iter().enumerate() {
        check_finite(zi, &format!("posterior sample layer {i}"))?;
    }
    Ok(PosteriorTrace {
        feature,
        top,
        top_raw,
        layers,
        posterior: posterior.into_iter().map(Option::unwrap).collect(),
        sample: LatentStack::new(z),
    })
}

fn reparam(g: &Gaussian, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != g.mean.len() {
        return Err(Error::shape("reparameterization noise", g.mean.len(), eps.len()));
    }
    Ok(g.mean
        .iter()
        .zip(&g.std)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// Posterior with explicit noise `eps` (bottom layer first).
pub fn infer_with_noise(inf: &InferenceParams, x: &[f64], eps: &[Vec<f64>]) -> Result<Inferred> {
    let t = posterior_traced(inf, x, eps)?;
    Ok(Inferred {
        posterior: t.posterior,
        sample: t.sample,
    })
}

/// Posterior with fresh noise from `stream`.
pub fn infer(inf: &InferenceParams, x: &[f64], stream: &mut RngStream) -> Result<Inferred> {
    let eps = draw_base(&inf.spec, stream).into_layers();
    infer_with_noise(inf, x, &eps)
}

/// Posterior evaluated along its means (zero noise).
pub fn infer_mean(inf: &InferenceParams, x: &[f64]) -> Result<Inferred> {
    let eps = UStack::zeros(&inf.spec).into_layers();
    infer_with_noise(inf, x, &eps)
}

/// Single-sample ELBO decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboTerms {
    pub elbo: f64,
    pub log_likelihood: f64,
    /// Per-layer KL, bottom first.
    pub kl: Vec<f64>,
}

/// Gradient buffers for one ELBO evaluation.
pub struct ElboGrads {
    pub generator: GeneratorParams,
    pub inference: InferenceParams,
}

impl ElboGrads {
    pub fn zeros_like(gen: &GeneratorParams, inf: &InferenceParams) -> Self {
        let mut generator = gen.clone();
        generator.zero_grad();
        let mut inference = inf.clone();
        inference.zero_grad();
        ElboGrads { generator, inference }
    }
}

/// ELBO of one example with analytic per-layer KL conditioned on the sampled
/// parent layer. When `grads` is given, `scale · ∇(−ELBO)` is accumulated.
pub fn elbo_sample(
    gen: &GeneratorParams,
    inf: &InferenceParams,
    x: &[f64],
    eps: &[Vec<f64>],
    grads: Option<(&mut ElboGrads, f64)>,
) -> Result<ElboTerms> {
    let spec = gen.spec();
    let l = spec.len();
    let post = posterior_traced(inf, x, eps)?;
    let z = post.sample.layers();

    // priors
    let mut priors = Vec::with_capacity(l - 1);
    for i in 0..l - 1 {
        priors.push(gen.prior_layer_traced(i, &z[i + 1])?);
    }
    let mut kl = vec![0.0; l];
    for i in 0..l - 1 {
        kl[i] = gaussian_kl(&post.posterior[i], &priors[i].0);
    }
    kl[l - 1] = gaussian_kl(&post.posterior[l - 1], &standard_normal(spec.dim(l - 1)));

    let dec = gen.decoder.forward_traced(&post.sample.flatten())?;
    let out = dec.output();
    let (log_likelihood, g_out, g_log_var) = match gen.config.observation {
        ObservationKind::Gaussian => {
            let lv = gen.log_var.as_ref().map_or(0.0, |t| t.data()[0]);
            let inv = (-lv).exp();
            let mut ll = 0.0;
            let mut g = vec![0.0; out.len()];
            let mut glv = 0.0;
            for j in 0..out.len() {
                let r = x[j] - out[j];
                ll -= 0.5 * (r * r * inv + lv + LN_2PI);
                g[j] = -r * inv;
                glv += 0.5 * (1.0 - r * r * inv);
            }
            (ll, g, glv)
        }
        ObservationKind::Bernoulli => {
            let mut ll = 0.0;
            let mut g = vec![0.0; out.len()];
            for j in 0..out.len() {
                ll += x[j] * out[j] - softplus(out[j]);
                g[j] = sigmoid(out[j]) - x[j];
            }
            (ll, g, 0.0)
        }
    };
    let elbo = log_likelihood - kl.iter().sum::<f64>();
    if !elbo.is_finite() {
        return Err(Error::NonFinite {
            context: "elbo".into(),
            detail: format!("log-likelihood {log_likelihood}, kl {kl:?}"),
        });
    }

    if let Some((g, scale)) = grads {
        let g_out: Vec<f64> = g_out.iter().map(|v| v * scale).collect();
        if let Some(t) = g.generator.log_var.as_mut() {
            t.data_mut()[0] += scale * g_log_var;
        }
        let gz_flat = gen.decoder.backward(&dec, &g_out, Some(&mut g.generator.decoder))?;
        let mut gz = LatentStack::from_flat(spec, &gz_flat)?.into_layers();
        let hdim = post.feature.output().len();
        let mut g_h = vec![0.0; hdim];

        for i in 0..l - 1 {
            let q = &post.posterior[i];
            let (p, p_raw, p_trace) = &priors[i];
            let (q_trace, q_raw) = post.layers[i].as_ref().expect("lower layer trace");
            let d = spec.dim(i);
            let mut up_q = vec![0.0; 2 * d];
            let mut up_p = vec![0.0; 2 * d];
            for j in 0..d {
                let (qm, qs, pm, ps) = (q.mean[j], q.std[j], p.mean[j], p.std[j]);
                let diff = qm - pm;
                let ps2 = ps * ps;
                let g_qm = gz[i][j] + scale * diff / ps2;
                let g_qs = gz[i][j] * eps[i][j] + scale * (-1.0 / qs + qs / ps2);
                let g_pm = -scale * diff / ps2;
                let g_ps = scale * (1.0 / ps - (qs * qs + diff * diff) / (ps2 * ps));
                up_q[j] = g_qm;
                up_q[d + j] = g_qs * sigmoid(q_raw[j]);
                up_p[j] = g_pm;
                up_p[d + j] = g_ps * sigmoid(p_raw[j]);
            }
            let gin = inf.layers[i].backward(q_trace, &up_q, Some(&mut g.inference.layers[i]))?;
            for (a, b) in g_h.iter_mut().zip(&gin[..hdim]) {
                *a += b;
            }
            let above = &mut gz[i + 1];
            for (a, b) in above.iter_mut().zip(&gin[hdim..]) {
                *a += b;
            }
            let gin_p = gen.prior[i].backward(p_trace, &up_p, Some(&mut g.generator.prior[i]))?;
            for (a, b) in above.iter_mut().zip(&gin_p) {
                *a += b;
            }
        }

        let top = &post.posterior[l - 1];
        let d = spec.dim(l - 1);
        let mut up = vec![0.0; 2 * d];
        for j in 0..d {
            let (m, s) = (top.mean[j], top.std[j]);
            up[j] = gz[l - 1][j] + scale * m;
            let g_s = gz[l - 1][j] * eps[l - 1][j] + scale * (s - 1.0 / s);
            up[d + j] = g_s * sigmoid(post.top_raw[j]);
        }
        let gin = inf.top.backward(&post.top, &up, Some(&mut g.inference.top))?;
        for (a, b) in g_h.iter_mut().zip(&gin) {
            *a += b;
        }
        inf.feature.backward(&post.feature, &g_h, Some(&mut g.inference.feature))?;
    }

    Ok(ElboTerms {
        elbo,
        log_likelihood,
        kl,
    })
}

/// Optimizer state for the first stage.
pub struct ElboOptimizer {
    pub generator: AdamState,
    pub inference: AdamState,
}

/// One Adam ascent step on the batch-mean Monte-Carlo ELBO. Returns the
/// batch-mean ELBO at the pre-update parameters.
pub fn elbo_step(
    gen: &mut GeneratorParams,
    inf: &mut InferenceParams,
    batch: &[&[f64]],
    opt: &mut ElboOptimizer,
    stream: &RngStream,
    iteration: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("elbo_step needs a non-empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let spec = gen.spec().clone();
    let (gen_ref, inf_ref) = (&*gen, &*inf);
    let (accs, elbos) = par::chunked(
        batch.len(),
        || ElboGrads::zeros_like(gen_ref, inf_ref),
        |j, acc| {
            let eps = draw_base(&spec, &mut stream.for_sample(j as u64)).into_layers();
            elbo_sample(gen_ref, inf_ref, batch[j], &eps, Some((acc, scale))).map(|t| t.elbo)
        },
    )
    .map_err(|e| Error::NonFiniteLoss {
        iteration,
        detail: format!("{e}; {}", norm_report(gen_ref, inf_ref)),
    })?;
    let mut total = ElboGrads::zeros_like(gen, inf);
    for a in &accs {
        total.generator.accumulate(&a.generator, 1.0);
        total.inference.accumulate(&a.inference, 1.0);
    }
    let mean = elbos.iter().sum::<f64>() * scale;
    if !mean.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration,
            detail: norm_report(gen, inf),
        });
    }
    opt.generator.step(gen, &total.generator)?;
    opt.inference.step(inf, &total.inference)?;
    Ok(mean)
}

fn norm_report(gen: &GeneratorParams, inf: &InferenceParams) -> String {
    let mut parts: Vec<String> = gen
        .prior
        .iter()
        .enumerate()
        .map(|(i, n)| format!("prior{i}={:.3e}", n.grad_norm()))
        .collect();
    parts.push(format!("decoder={:.3e}", gen.decoder.grad_norm()));
    parts.push(format!("feature={:.3e}", inf.feature.grad_norm()));
    parts.push(format!("top={:.3e}", inf.top.grad_norm()));
    parts.join(", ")
}
