mod common;

use common::moments;
use hebm_core::rng::RngStream;
use hebm_core::uspace::{forward_pair, make_schedule, perturb_step, perturb_to};
use hebm_core::{LayerSpec, UStack};
use proptest::prelude::*;

fn column(xs: &[UStack], d: usize) -> Vec<f64> {
    xs.iter().map(|u| u.flatten()[d]).collect()
}

proptest! {
    #[test]
    fn schedules_are_exact(steps in 1usize..12, target in 1e-4f64..0.99) {
        let s = make_schedule(steps, target).unwrap();
        let mut prod = 1.0;
        for t in 1..=steps {
            prop_assert!(s.sigma(t) > 0.0 && s.sigma(t) < 1.0);
            prop_assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-15);
            prod *= s.alpha(t);
            prop_assert!((s.alpha_bar(t) - prod).abs() < 1e-14);
        }
        prop_assert!((s.alpha_bar(steps) - target).abs() < 1e-14);
    }
}

#[test]
fn marginal_from_zero() {
    let s = make_schedule(3, 0.01).unwrap();
    let spec = LayerSpec::new(vec![2, 1]).unwrap();
    let zero = UStack::zeros(&spec);
    let base = RngStream::new(1);
    for t in 1..=3 {
        let xs: Vec<UStack> = (0..10_000)
            .map(|i| perturb_to(&zero, t, &s, &mut base.for_sample(i)).unwrap())
            .collect();
        let want = 1.0 - s.alpha_bar(t).powi(2);
        for d in 0..3 {
            let (m, v, se_m, se_v) = moments(&column(&xs, d));
            assert!(m.abs() < 3.0 * se_m, "t {t} mean {m}");
            assert!((v - want).abs() < 3.0 * se_v, "t {t} var {v} vs {want}");
        }
    }
}

#[test]
fn stationarity_from_bounded_inputs() {
    let s = make_schedule(3, 0.01).unwrap();
    let spec = LayerSpec::new(vec![8, 4, 2]).unwrap();
    for (k, fill) in [-2.0, 0.0, 2.0].into_iter().enumerate() {
        let u0 = UStack::from_flat(&spec, &vec![fill; 14]).unwrap();
        let base = RngStream::new(40 + k as u64);
        let xs: Vec<UStack> = (0..10_000)
            .map(|i| perturb_to(&u0, 3, &s, &mut base.for_sample(i)).unwrap())
            .collect();
        for d in 0..14 {
            let (m, v, _, _) = moments(&column(&xs, d));
            assert!(m.abs() < 0.05, "input {fill} dim {d} mean {m}");
            assert!((0.9..=1.1).contains(&v), "input {fill} dim {d} var {v}");
        }
    }
}

#[test]
fn composed_steps_match_one_shot_marginal() {
    let s = make_schedule(3, 0.01).unwrap();
    let spec = LayerSpec::new(vec![1, 1]).unwrap();
    let u0 = UStack::new(vec![vec![2.0], vec![-1.0]]);
    let base = RngStream::new(9);
    let stepped: Vec<UStack> = (0..10_000)
        .map(|i| {
            let mut r = base.for_sample(i);
            let mut u = u0.clone();
            for t in 0..3 {
                u = perturb_step(&u, t, &s, &mut r).unwrap();
            }
            u
        })
        .collect();
    let shot: Vec<UStack> = (0..10_000)
        .map(|i| perturb_to(&u0, 3, &s, &mut base.fork(1).for_sample(i)).unwrap())
        .collect();
    for d in 0..spec.total() {
        let (m1, v1, se_m1, se_v1) = moments(&column(&stepped, d));
        let (m2, v2, se_m2, se_v2) = moments(&column(&shot, d));
        assert!((m1 - m2).abs() < 3.0 * (se_m1.hypot(se_m2)), "dim {d}: {m1} vs {m2}");
        assert!((v1 - v2).abs() < 3.0 * (se_v1.hypot(se_v2)), "dim {d}: {v1} vs {v2}");
    }
}

#[test]
fn vanishing_noise_step_is_identity() {
    let s = hebm_core::uspace::DiffusionSchedule::from_sigmas(vec![1e-12]).unwrap();
    let u = UStack::new(vec![vec![0.3, -2.0], vec![1.0]]);
    let out = perturb_step(&u, 0, &s, &mut RngStream::new(0)).unwrap();
    assert!(out.max_abs_diff(&u) < 1e-10);
}

#[test]
fn one_shot_with_fixed_noise() {
    let s = make_schedule(3, 0.01).unwrap();
    let spec = LayerSpec::new(vec![2, 1]).unwrap();
    let u0 = UStack::from_flat(&spec, &[1.0, -0.5, 2.0]).unwrap();
    let stream = RngStream::new(21);
    // noise is consumed top layer first
    let mut e = stream.clone().normal_vec(3);
    e.rotate_left(1);
    let eps = e;
    let out = perturb_to(&u0, 2, &s, &mut stream.clone()).unwrap();
    let ab = s.alpha_bar(2);
    for ((o, u), e) in out.flatten().iter().zip(u0.flatten()).zip(eps) {
        assert!((o - (ab * u + (1.0 - ab * ab).sqrt() * e)).abs() < 1e-15);
    }
}

#[test]
fn forward_pair_has_the_joint_law() {
    let s = make_schedule(3, 0.01).unwrap();
    let u0 = UStack::new(vec![vec![1.5], vec![0.0]]);
    let base = RngStream::new(17);
    let pairs: Vec<(f64, f64)> = (0..20_000)
        .map(|i| {
            let (a, b) = forward_pair(&u0, 1, &s, &mut base.for_sample(i)).unwrap();
            (a.layer(0)[0], b.layer(0)[0])
        })
        .collect();
    let n = pairs.len() as f64;
    let (ma, mb) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / (n - 1.0);
    let va = 1.0 - s.alpha_bar(1).powi(2);
    assert!((mb - s.alpha_bar(2) * 1.5).abs() < 0.03);
    assert!((cov - s.alpha(2) * va).abs() < 0.03, "cov {cov}");
}
