#![allow(dead_code)]

use hebm_core::generator::{GeneratorConfig, GeneratorParams, ObservationKind};
use hebm_core::nn::Activation;
use hebm_core::rng::RngStream;
use hebm_core::{LayerSpec, UStack};

pub fn small_config(dims: Vec<usize>, data_dim: usize, activation: Activation) -> GeneratorConfig {
    GeneratorConfig {
        latent_dims: dims,
        data_dim,
        hidden_width: 6,
        hidden_layers: 2,
        observation: ObservationKind::Gaussian,
        activation,
    }
}

/// A random generator with weights scaled by `scale`.
pub fn random_generator(seed: u64, dims: Vec<usize>, scale: f64) -> GeneratorParams {
    use hebm_core::ParamSet;
    let act = if seed % 2 == 0 { Activation::Softplus } else { Activation::Tanh };
    let mut gen = GeneratorParams::new(small_config(dims, 2, act), &mut RngStream::new(seed)).unwrap();
    let mut r = RngStream::new(seed).fork(99);
    for t in gen.tensors_mut() {
        for v in t.data_mut() {
            *v = *v * scale + 0.1 * r.next_normal();
        }
    }
    gen
}

pub fn random_stack(spec: &LayerSpec, stream: &mut RngStream, scale: f64) -> UStack {
    let flat: Vec<f64> = stream.normal_vec(spec.total()).into_iter().map(|v| v * scale).collect();
    UStack::from_flat(spec, &flat).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = na.max(nb);
    if d == 0.0 {
        0.0
    } else {
        diff / d
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Mean and variance with the standard errors of each.
pub fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m, v, (v / n).sqrt(), ((m4 - v * v) / n).sqrt())
}

/// Pre-activation giving standard deviation `std` after the softplus floor.
pub fn raw_for(std: f64) -> f64 {
    (std - hebm_core::generator::SIGMA_FLOOR).exp_m1().ln()
}

/// Two scalar layers with `p(z_1 | z_2) = N(a z_2, s²)`.
pub fn linear_generator(a: f64, s: f64) -> GeneratorParams {
    use hebm_core::nn::{Dense, FeedForwardNet};
    use hebm_core::Tensor;
    let mut gen = GeneratorParams::zeros(small_config(vec![1, 1], 2, Activation::Identity)).unwrap();
    let w = Tensor::new(vec![2, 1], vec![a, 0.0]).unwrap();
    let b = Tensor::new(vec![2], vec![0.0, raw_for(s)]).unwrap();
    gen.prior[0] = FeedForwardNet::from_layers(vec![Dense::new(w, b, Activation::Identity).unwrap()]).unwrap();
    gen
}
