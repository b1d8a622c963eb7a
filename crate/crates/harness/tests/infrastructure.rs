mod common;

use std::path::Path;

use common::{fixture, hebm_with_env, ok, write_config, TINY};
use hebm_core::ebm::EnergyParams;
use hebm_core::generator::{GeneratorParams, InferenceParams};
use hebm_core::rng::RngStream;
use hebm_harness::checkpoint::{inspect_checkpoint, load_checkpoint, save_checkpoint, ModelBundle};
use hebm_harness::config::RunConfig;
use hebm_harness::data::{gen_synthetic, DatasetKind, DatasetSpec};
use hebm_harness::idx::{load_idx, load_idx_labels, parse_images};
use hebm_harness::mmd::mmd;
use hebm_harness::pipeline::Backbone;
use hebm_harness::HarnessError;
use proptest::prelude::*;

fn default_bundle(seed: u64) -> ModelBundle {
    let cfg = RunConfig::default();
    let gcfg = cfg.generator_config(2);
    let mut r = RngStream::new(seed);
    let gen = GeneratorParams::new(gcfg.clone(), &mut r).unwrap();
    let inf = InferenceParams::new(&gcfg, &mut r).unwrap();
    let energy = EnergyParams::new(gen.spec(), cfg.steps, cfg.energy_width, &mut r).unwrap();
    let mut b = ModelBundle::new(cfg, Backbone { gen, inf });
    b.energy = Some(energy);
    b
}

#[test]
fn idx_fixture_parses_to_exact_pixels() {
    let batch = load_idx(&fixture("two_images.idx")).unwrap();
    assert_eq!((batch.count, batch.rows, batch.cols), (2, 2, 2));
    let want: Vec<f64> = [0u8, 64, 128, 255, 255, 1, 2, 3].iter().map(|&b| b as f64 / 255.0).collect();
    assert_eq!(batch.pixels, want);
    assert_eq!(batch.image(1), &want[4..]);
    assert_eq!(load_idx_labels(&fixture("two_labels.idx")).unwrap(), vec![7, 3]);
}

#[test]
fn malformed_idx_is_a_parse_error() {
    let p = Path::new("x.idx");
    assert!(matches!(parse_images(p, &[]), Err(HarnessError::Parse { .. })));
    let mut bytes = std::fs::read(fixture("two_images.idx")).unwrap();
    bytes.pop();
    assert!(matches!(parse_images(p, &bytes), Err(HarnessError::Parse { .. })));
    bytes[3] = 0x01;
    assert!(parse_images(p, &bytes).is_err());
    assert!(load_idx(&fixture("two_labels.idx")).is_err());
}

#[test]
fn checkpoint_file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.hebm"), dir.path().join("nested/b.hebm"));
    save_checkpoint(&default_bundle(1), &a).unwrap();
    let loaded = load_checkpoint(&a).unwrap();
    save_checkpoint(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_checkpoint(&b).unwrap(), loaded);
}

#[test]
fn truncated_blob_reports_both_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.hebm");
    save_checkpoint(&default_bundle(2), &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
    let err = load_checkpoint(&p).unwrap_err();
    let expected = inspect_checkpoint(&p).unwrap().blob_len();
    let msg = err.to_string();
    assert!(msg.contains(&expected.to_string()) && msg.contains(&(expected - 8).to_string()), "{msg}");
}

#[test]
fn manifest_lists_every_tensor_of_the_default_model() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.hebm");
    let bundle = default_bundle(3);
    save_checkpoint(&bundle, &p).unwrap();
    let m = inspect_checkpoint(&p).unwrap();
    let cfg = &bundle.config;
    let (layers, h) = (cfg.latent_dims.len(), cfg.hidden_layers);
    // weight and bias per dense layer
    let generator = 2 * (layers - 1) * (h + 1) + 2 * (h + 1) + 1;
    let inference = 2 * (h + 2 + 2 * (layers - 1));
    let energy = 2 * layers * 3;
    assert_eq!((generator, inference, energy), (19, 16, 18));
    assert_eq!(m.tensors.len(), generator + inference + energy);
    assert_eq!(m.blob_len(), m.tensors.iter().map(|t| 4 * t.shape.iter().product::<usize>()).sum::<usize>());
    let mut offset = 0;
    for t in &m.tensors {
        assert_eq!(t.offset, offset, "{}", t.name);
        offset += 4 * t.shape.iter().product::<usize>();
    }
}

#[test]
fn same_config_and_seed_reproduce_metric_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let runs: Vec<_> = ["1", "3"]
        .iter()
        .map(|threads| {
            let (c, o) = (cfg.to_str().unwrap(), dir.path().to_str().unwrap());
            let env = [("HEBM_THREADS", *threads)];
            ok(&hebm_with_env(&["train-generator", "--config", c, "--out", o], &env));
            ok(&hebm_with_env(&["train-prior", "--config", c, "--out", o], &env));
            let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
            (read("generator_metrics.csv"), read("prior_metrics.csv"), read("prior.hebm"))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn synthetic_data_is_deterministic() {
    for kind in [DatasetKind::Pinwheel, DatasetKind::Ring8, DatasetKind::Checkerboard, DatasetKind::TwoMoons] {
        let spec = DatasetSpec::synthetic(kind, 300, 0.1, 4);
        let (a, b) = (gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
        assert_eq!(a, b);
        assert!(a.points.iter().flatten().all(|v| v.abs() <= 4.5), "{kind:?}");
    }
}

fn gaussian_set(n: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = RngStream::new(seed);
    (0..n).map(|_| vec![shift + r.next_normal(), shift + r.next_normal()]).collect()
}

#[test]
fn mmd_null_and_separated_cases() {
    let a = gaussian_set(2000, 0.0, 1);
    let b = gaussian_set(2000, 0.0, 2);
    let c = gaussian_set(2000, 3.0, 3);
    assert!(mmd(&a, &b, None).unwrap().abs() < 0.01);
    assert!(mmd(&a, &c, None).unwrap() > 0.1);
    assert!(mmd(&a, &[vec![0.0; 3], vec![1.0; 3]], None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mmd_is_symmetric_and_scale_free(seed in any::<u64>(), shift in 0.0f64..2.0, scale in 0.1f64..10.0) {
        let a = gaussian_set(60, 0.0, seed);
        let b = gaussian_set(50, shift, seed ^ 1);
        let ab = mmd(&a, &b, None).unwrap();
        prop_assert!((ab - mmd(&b, &a, None).unwrap()).abs() < 1e-12);
        let sc = |s: &[Vec<f64>]| s.iter().map(|p| p.iter().map(|v| v * scale).collect()).collect::<Vec<Vec<f64>>>();
        prop_assert!((ab - mmd(&sc(&a), &sc(&b), None).unwrap()).abs() < 1e-9);
    }
}
