mod common;

use common::{central_diff, random_generator, random_stack, rel_err};
use hebm_core::adam::{AdamConfig, AdamState};
use hebm_core::ebm::{
    cond_grad, cond_log_density_unnorm, marginal_grad_baseline, prior_gradient, EnergyParams, LatentEnergy,
};
use hebm_core::generator::{elbo_sample, ElboGrads, GeneratorParams, InferenceParams, ObservationKind};
use hebm_core::nn::{Activation, FeedForwardNet};
use hebm_core::rng::RngStream;
use hebm_core::tasks::{CoupledEnergyParams, CoupledPrior, GuidedPrior, SymbolBlock, SymbolSpec, SymbolVector};
use hebm_core::uspace::{latent_vjp, make_schedule, to_latent, to_latent_traced};
use hebm_core::{LatentStack, LayerSpec, ParamSet, Tensor, UStack};

fn flat_params<P: ParamSet>(p: &P) -> Vec<f64> {
    p.tensors().iter().flat_map(|t| t.data().to_vec()).collect()
}

fn set_params<P: ParamSet>(p: &mut P, flat: &[f64]) {
    let mut off = 0;
    for t in p.tensors_mut() {
        let n = t.numel();
        t.data_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
    }
}

fn param_fd<P: ParamSet + Clone>(p: &P, h: f64, f: impl Fn(&P) -> f64) -> Vec<f64> {
    let x = flat_params(p);
    let mut q = p.clone();
    central_diff(&x, h, |v| {
        set_params(&mut q, v);
        f(&q)
    })
}

#[test]
fn net_gradients_match_finite_differences() {
    let acts = [Activation::Softplus, Activation::Tanh, Activation::Identity];
    for case in 0..100u64 {
        let mut r = RngStream::new(case).fork(1);
        let depth = 1 + r.below(3);
        let dims: Vec<usize> = (0..=depth).map(|_| 1 + r.below(5)).collect();
        let net = FeedForwardNet::init(&dims, acts[case as usize % 3], acts[(case as usize / 3) % 3], &mut r);
        let x = r.normal_vec(dims[0]);
        let up = r.normal_vec(*dims.last().unwrap());
        let (g, gx) = net.gradients(&x, &up).unwrap();
        let obj = |n: &FeedForwardNet, x: &[f64]| -> f64 {
            n.forward(x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let fd_x = central_diff(&x, 1e-5, |v| obj(&net, v));
        let fd_p = param_fd(&net, 1e-5, |n| obj(n, &x));
        assert!(rel_err(&gx, &fd_x) < 1e-5, "case {case} input {}", rel_err(&gx, &fd_x));
        let gp = flat_params(&g);
        assert!(rel_err(&gp, &fd_p) < 1e-5, "case {case} params {}", rel_err(&gp, &fd_p));
    }
}

#[test]
fn adam_two_steps_match_scalar_reference() {
    // reference traces from a standalone scalar implementation
    let cases = [
        (1.0, [0.5, 0.5], 0.1, [0.900000002, 0.8000000040000006]),
        (0.3, [2.0, -1.0], 0.01, [0.29000000005, 0.28733662967024315]),
    ];
    for (w0, gs, lr, expected) in cases {
        let net = |w: f64| {
            FeedForwardNet::from_layers(vec![hebm_core::nn::Dense::new(
                Tensor::new(vec![1, 1], vec![w]).unwrap(),
                Tensor::zeros(vec![1]),
                Activation::Identity,
            )
            .unwrap()])
            .unwrap()
        };
        let mut p = net(w0);
        let mut adam = AdamState::new(&p, AdamConfig::with_lr(lr));
        for (g, want) in gs.iter().zip(expected) {
            let grad = net(*g);
            adam.step(&mut p, &grad).unwrap();
            let w = p.layers()[0].weight.data()[0];
            assert!((w - want).abs() < 1e-14, "{w} vs {want}");
        }
    }
}

fn elbo_models(obs: ObservationKind, seed: u64) -> (GeneratorParams, InferenceParams) {
    let mut cfg = common::small_config(vec![3, 2, 2], 3, Activation::Tanh);
    cfg.hidden_width = 5;
    cfg.observation = obs;
    let mut gen = GeneratorParams::new(cfg.clone(), &mut RngStream::new(seed)).unwrap();
    if let Some(lv) = gen.log_var.as_mut() {
        lv.data_mut()[0] = -0.4;
    }
    let inf = InferenceParams::new(&cfg, &mut RngStream::new(seed + 100)).unwrap();
    (gen, inf)
}

#[test]
fn elbo_gradients_match_finite_differences() {
    for (case, obs) in [ObservationKind::Gaussian, ObservationKind::Bernoulli].into_iter().enumerate() {
        let (gen, inf) = elbo_models(obs, case as u64);
        let mut r = RngStream::new(40 + case as u64);
        let x: Vec<f64> = match obs {
            ObservationKind::Gaussian => r.normal_vec(3),
            ObservationKind::Bernoulli => vec![0.0, 1.0, 0.3],
        };
        let eps: Vec<Vec<f64>> = [3, 2, 2].iter().map(|&d| r.normal_vec(d)).collect();
        let mut g = ElboGrads::zeros_like(&gen, &inf);
        elbo_sample(&gen, &inf, &x, &eps, Some((&mut g, 1.0))).unwrap();
        let neg_elbo = |gp: &GeneratorParams, ip: &InferenceParams| -elbo_sample(gp, ip, &x, &eps, None).unwrap().elbo;
        let fd_gen = param_fd(&gen, 1e-5, |gp| neg_elbo(gp, &inf));
        let fd_inf = param_fd(&inf, 1e-5, |ip| neg_elbo(&gen, ip));
        let e_gen = rel_err(&flat_params(&g.generator), &fd_gen);
        let e_inf = rel_err(&flat_params(&g.inference), &fd_inf);
        assert!(e_gen < 1e-4, "{obs:?} generator {e_gen}");
        assert!(e_inf < 1e-4, "{obs:?} inference {e_inf}");
    }
}

#[test]
fn latent_vjp_matches_finite_differences() {
    for case in 0..30u64 {
        let gen = random_generator(case, vec![3, 2, 2], 1.0);
        let spec = gen.spec().clone();
        let mut r = RngStream::new(case).fork(3);
        let u = random_stack(&spec, &mut r, 1.0);
        let w = random_stack(&spec, &mut r, 1.0).flatten();
        let trace = to_latent_traced(&gen, &u).unwrap();
        let gz = LatentStack::from_flat(&spec, &w).unwrap();
        let gu = latent_vjp(&gen, &trace, &gz).unwrap().flatten();
        let fd = central_diff(&u.flatten(), 1e-5, |v| {
            let z = to_latent(&gen, &UStack::from_flat(&spec, v).unwrap()).unwrap();
            z.flatten().iter().zip(&w).map(|(a, b)| a * b).sum()
        });
        assert!(rel_err(&gu, &fd) < 1e-7, "case {case}: {}", rel_err(&gu, &fd));
    }
}

#[test]
fn conditional_gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let steps = 1 + (case as usize % 4);
        let gen = random_generator(case, vec![4, 3, 2], 1.0);
        let spec = gen.spec().clone();
        let f = EnergyParams::new(&spec, steps, 8, &mut RngStream::new(case + 7)).unwrap();
        let sched = make_schedule(steps, 0.01 + 0.2 * (case % 3) as f64).unwrap();
        let t = case as usize % steps;
        let mut r = RngStream::new(case).fork(5);
        let ut = random_stack(&spec, &mut r, 1.0);
        let next = random_stack(&spec, &mut r, 1.0);
        let g = cond_grad(&f, &gen, &ut, &next, t, &sched).unwrap().flatten();
        let fd = central_diff(&ut.flatten(), 1e-5, |v| {
            cond_log_density_unnorm(&f, &gen, &UStack::from_flat(&spec, v).unwrap(), &next, t, &sched).unwrap()
        });
        worst = worst.max(rel_err(&g, &fd));
    }
    assert!(worst < 1e-6, "worst relative error {worst}");
}

#[test]
fn marginal_gradient_is_conditional_minus_localization() {
    for case in 0..30u64 {
        let gen = random_generator(case, vec![2, 2], 1.0);
        let spec = gen.spec().clone();
        let f = EnergyParams::new(&spec, 3, 6, &mut RngStream::new(case)).unwrap();
        let sched = make_schedule(3, 0.01).unwrap();
        let mut r = RngStream::new(case).fork(8);
        let u = random_stack(&spec, &mut r, 1.0);
        let next = random_stack(&spec, &mut r, 1.0);
        let gm = marginal_grad_baseline(&f, &gen, &u).unwrap().flatten();
        let fd = central_diff(&u.flatten(), 1e-5, |v| {
            let uu = UStack::from_flat(&spec, v).unwrap();
            let z = to_latent(&gen, &uu).unwrap();
            f.value(&z, 0).unwrap() - 0.5 * v.iter().map(|x| x * x).sum::<f64>()
        });
        assert!(rel_err(&gm, &fd) < 1e-6);
        let gc = cond_grad(&f, &gen, &u, &next, 0, &sched).unwrap().flatten();
        let (a, s2) = (sched.alpha(1), sched.sigma(1).powi(2));
        for ((m, c), (uv, nv)) in gm.iter().zip(&gc).zip(u.flatten().iter().zip(next.flatten())) {
            let local = -a * (a * uv - nv) / s2;
            assert!((c - (m + local)).abs() < 1e-12);
        }
    }
    let gen = random_generator(0, vec![2, 2], 1.0);
    let f = EnergyParams::zeros(gen.spec(), 2, 4).unwrap();
    let u = UStack::new(vec![vec![0.5, -1.0], vec![2.0, 0.1]]);
    let g = marginal_grad_baseline(&f, &gen, &u).unwrap();
    assert_eq!(g.flatten(), vec![-0.5, 1.0, -2.0, -0.1]);
}

#[test]
fn prior_gradient_matches_finite_differences() {
    let gen = random_generator(3, vec![3, 2], 1.0);
    let spec = gen.spec().clone();
    let f = EnergyParams::new(&spec, 2, 5, &mut RngStream::new(11)).unwrap();
    let mut r = RngStream::new(12);
    let pos: Vec<UStack> = (0..4).map(|_| random_stack(&spec, &mut r, 1.0)).collect();
    let neg: Vec<UStack> = (0..4).map(|_| random_stack(&spec, &mut r, 1.5)).collect();
    let g = prior_gradient(&f, &gen, &pos, &neg, 1).unwrap();
    let loss = |e: &EnergyParams| {
        let m = |b: &[UStack]| {
            b.iter().map(|u| e.value(&to_latent(&gen, u).unwrap(), 1).unwrap()).sum::<f64>() / b.len() as f64
        };
        -(m(&pos) - m(&neg))
    };
    let fd = param_fd(&f, 1e-5, loss);
    assert!(rel_err(&flat_params(&g), &fd) < 1e-6);
}

#[test]
fn coupled_energies_have_exact_gradients() {
    let spec = LayerSpec::new(vec![3, 2, 2]).unwrap();
    let symbols = SymbolSpec {
        blocks: vec![
            SymbolBlock { arity: 4, layers: vec![2, 1] },
            SymbolBlock { arity: 2, layers: vec![0] },
        ],
    };
    let base = EnergyParams::new(&spec, 3, 5, &mut RngStream::new(1)).unwrap();
    let coupled = CoupledEnergyParams::new(symbols.clone(), &spec, 3, 5, &mut RngStream::new(2)).unwrap();
    let prior = CoupledPrior::new(&coupled, &base).unwrap();
    let target = SymbolVector {
        choices: vec![Some(3), None],
    };
    let guided = GuidedPrior::new(prior, &target).unwrap();
    let mut r = RngStream::new(3);
    for _ in 0..20 {
        let z = random_stack(&spec, &mut r, 1.0).flatten();
        let zs = LatentStack::from_flat(&spec, &z).unwrap();
        for t in 0..3 {
            let energies: [&dyn LatentEnergy; 2] = [&prior, &guided];
            for e in energies {
                let (v, g) = e.value_and_grad(&zs, t).unwrap();
                assert_eq!(v, e.value(&zs, t).unwrap());
                let fd = central_diff(&z, 1e-5, |p| e.value(&LatentStack::from_flat(&spec, p).unwrap(), t).unwrap());
                assert!(rel_err(&g.flatten(), &fd) < 1e-6);
            }
        }
    }
}
