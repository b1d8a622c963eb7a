//! Hand-built factorized model: the top layer carries a coarse class, the
//! bottom layer a binary style, the middle layer is pure noise. Prior nets
//! give `μ ≡ 0, σ ≡ 1`, the decoder is the identity on `[z_1, z_2, z_3]` and
//! the encoder reads each layer back from its slice of `x`.

use std::f64::consts::PI;

use hebm_core::generator::{GeneratorConfig, GeneratorParams, InferenceParams, ObservationKind, SIGMA_FLOOR};
use hebm_core::nn::{Activation, Dense, FeedForwardNet};
use hebm_core::rng::{phase, RngStream};
use hebm_core::{LatentStack, Tensor};

use crate::data::Dataset;
use crate::error::Result;
use crate::pipeline::Backbone;

pub const LAYER_DIM: usize = 2;
pub const CLASSES: usize = 4;
pub const STYLES: usize = 2;
pub const CLASS_RADIUS: f64 = 2.0;
pub const CLASS_SPREAD: f64 = 0.25;
pub const STYLE_OFFSET: f64 = 1.5;
pub const STYLE_SPREAD: f64 = 0.25;
pub const POSTERIOR_STD: f64 = 0.05;

const DATA_DIM: usize = 3 * LAYER_DIM;

pub fn config() -> GeneratorConfig {
    GeneratorConfig {
        latent_dims: vec![LAYER_DIM; 3],
        data_dim: DATA_DIM,
        hidden_width: DATA_DIM,
        hidden_layers: 1,
        observation: ObservationKind::Gaussian,
        activation: Activation::Identity,
    }
}

/// Pre-activation that maps to standard deviation `std`.
fn raw_for(std: f64) -> f64 {
    (std - SIGMA_FLOOR).exp_m1().ln()
}

fn linear(weight: Vec<Vec<f64>>, bias: Vec<f64>) -> FeedForwardNet {
    let (rows, cols) = (weight.len(), weight[0].len());
    let w = Tensor::new(vec![rows, cols], weight.concat()).unwrap();
    let b = Tensor::new(vec![rows], bias).unwrap();
    FeedForwardNet::from_layers(vec![Dense::new(w, b, Activation::Identity).unwrap()]).unwrap()
}

/// Rows copying `x[from..from + n]` into the mean half, then `n` constant
/// raw-std rows.
fn read_slice(in_dim: usize, from: usize, n: usize, std: f64) -> FeedForwardNet {
    let mut w = vec![vec![0.0; in_dim]; 2 * n];
    for k in 0..n {
        w[k][from + k] = 1.0;
    }
    let mut b = vec![0.0; 2 * n];
    b[n..].iter_mut().for_each(|v| *v = raw_for(std));
    linear(w, b)
}

pub fn backbone() -> Backbone {
    let cfg = config();
    let mut gen = GeneratorParams::zeros(cfg.clone()).unwrap();
    for net in &mut gen.prior {
        *net = read_slice(LAYER_DIM, 0, LAYER_DIM, 1.0);
        net.layers_mut()[0].weight.fill(0.0);
    }
    let eye: Vec<Vec<f64>> = (0..DATA_DIM)
        .map(|r| (0..DATA_DIM).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    gen.decoder = linear(eye.clone(), vec![0.0; DATA_DIM]);
    if let Some(lv) = gen.log_var.as_mut() {
        lv.data_mut()[0] = (POSTERIOR_STD * POSTERIOR_STD).ln();
    }
    let mut inf = InferenceParams::zeros(&cfg).unwrap();
    inf.feature = linear(eye, vec![0.0; DATA_DIM]);
    inf.top = read_slice(DATA_DIM, 2 * LAYER_DIM, LAYER_DIM, POSTERIOR_STD);
    for (i, net) in inf.layers.iter_mut().enumerate() {
        *net = read_slice(DATA_DIM + LAYER_DIM, i * LAYER_DIM, LAYER_DIM, POSTERIOR_STD);
    }
    Backbone { gen, inf }
}

fn class_angle(c: f64) -> f64 {
    2.0 * PI * c / CLASSES as f64 + PI / 4.0
}

pub fn class_center(class: usize) -> [f64; 2] {
    let a = class_angle(class as f64);
    [CLASS_RADIUS * a.cos(), CLASS_RADIUS * a.sin()]
}

pub fn style_center(style: usize) -> [f64; 2] {
    [if style == 0 { -STYLE_OFFSET } else { STYLE_OFFSET }, 0.0]
}

/// Nearest class centre to the top layer.
pub fn class_of(z: &LatentStack) -> usize {
    let top = z.layer(2);
    (0..CLASSES)
        .min_by(|&a, &b| {
            let d = |c: usize| {
                let m = class_center(c);
                (top[0] - m[0]).powi(2) + (top[1] - m[1]).powi(2)
            };
            d(a).total_cmp(&d(b))
        })
        .unwrap()
}

pub fn style_of(z: &LatentStack) -> usize {
    usize::from(z.layer(0)[0] > 0.0)
}

/// Points `[z_1, z_2, z_3]` with labels `[class, style]`. `between_classes`
/// rotates the class centres half a sector, giving a set that differs from
/// the training data only in the top layer.
pub fn dataset(size: usize, seed: u64, between_classes: bool) -> Result<Dataset> {
    let base = RngStream::new(seed).with_phase(phase::DATA);
    let mut points = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let mut r = base.for_sample(i as u64);
        let class = i % CLASSES;
        let style = (i / CLASSES) % STYLES;
        let shift = if between_classes { 0.5 } else { 0.0 };
        let a = class_angle(class as f64 + shift);
        let s = style_center(style);
        let mut x = vec![0.0; DATA_DIM];
        x[0] = s[0] + STYLE_SPREAD * r.next_normal();
        x[1] = s[1] + STYLE_SPREAD * r.next_normal();
        x[2] = r.next_normal();
        x[3] = r.next_normal();
        x[4] = CLASS_RADIUS * a.cos() + CLASS_SPREAD * r.next_normal();
        x[5] = CLASS_RADIUS * a.sin() + CLASS_SPREAD * r.next_normal();
        points.push(x);
        labels.push(vec![class, style]);
    }
    Ok(Dataset {
        points,
        labels: Some(labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hebm_core::generator::infer_mean;
    use hebm_core::uspace::{to_base, to_latent};

    #[test]
    fn encoder_reads_layers_and_transform_is_identity() {
        let bb = backbone();
        let ds = dataset(16, 1, false).unwrap();
        for (x, l) in ds.points.iter().zip(ds.labels.as_ref().unwrap()) {
            let post = infer_mean(&bb.inf, x).unwrap();
            assert_eq!(post.sample.flatten(), *x);
            for g in &post.posterior {
                assert!(g.std.iter().all(|s| (s - POSTERIOR_STD).abs() < 1e-12));
            }
            let u = to_base(&bb.gen, &post.sample).unwrap();
            assert!(u.max_abs_diff(&hebm_core::UStack::from_flat(bb.gen.spec(), x).unwrap()) < 1e-12);
            let z = to_latent(&bb.gen, &u).unwrap();
            assert_eq!(bb.gen.decode(&z).unwrap().mean, *x);
            assert_eq!((class_of(&z), style_of(&z)), (l[0], l[1]));
        }
    }
}
