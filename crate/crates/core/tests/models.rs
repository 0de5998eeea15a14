use igcn_core::graph_conv::AdjacencyConfig;
use igcn_core::models::{
    AuClassifier, ClassifierConfig, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, GeneratorKind,
};
use igcn_core::nn::{Bound, ParamStore};
use igcn_core::tensor::{grad_check_at, GradCheckConfig};
use igcn_core::{Graph, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn images(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::rand_uniform(shape, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn small_generator_config() -> GeneratorConfig {
    GeneratorConfig {
        base_channels: 8,
        n_rrmb: 1,
        upsample_stages: 2,
        input_side: 8,
        adjacency: AdjacencyConfig { sim_threshold: None, ..AdjacencyConfig::default() },
        ..GeneratorConfig::default()
    }
}

fn zero_all(store: &mut ParamStore<f64>) {
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

#[test]
fn generator_maps_16_pixel_input_to_128() {
    let cfg = GeneratorConfig {
        input_side: 16,
        adjacency: AdjacencyConfig { sim_threshold: None, ..AdjacencyConfig::default() },
        ..GeneratorConfig::default()
    };
    let gen = Generator::<f32>::new(&cfg, GeneratorKind::Igcn, None, 0).unwrap();
    let out = gen.restore(&images(&[8, 3, 16, 16], 1).cast()).unwrap();
    assert_eq!(out.shape(), &[8, 3, 128, 128]);
    assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn generator_similarity_rule_uses_mean_image() {
    let cfg = GeneratorConfig { base_channels: 8, ..GeneratorConfig::default() };
    assert!(Generator::<f64>::new(&cfg, GeneratorKind::Igcn, None, 0).is_err());
    let mean = images(&[3, 64, 64], 2);
    let gen = Generator::<f64>::new(&cfg, GeneratorKind::Igcn, Some(&mean), 0).unwrap();
    assert_eq!(gen.restore(&images(&[2, 3, 8, 8], 3)).unwrap().shape(), &[2, 3, 64, 64]);
}

#[test]
fn zero_output_conv_gives_half_grey() {
    let mut gen = Generator::<f64>::new(&small_generator_config(), GeneratorKind::Igcn, None, 4).unwrap();
    for name in ["out.weight", "out.bias"] {
        let id = gen.params.id(name).unwrap();
        gen.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let out = gen.restore(&images(&[2, 3, 8, 8], 5)).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.5));
}

#[test]
fn generator_rejects_bad_input_sizes() {
    let bad = GeneratorConfig { input_side: 12, ..small_generator_config() };
    assert!(Generator::<f64>::new(&bad, GeneratorKind::Igcn, None, 0).is_err());
    let even = GeneratorConfig { kernel_size: 4, ..small_generator_config() };
    assert!(Generator::<f64>::new(&even, GeneratorKind::Residual, None, 0).is_err());
    let gen = Generator::<f64>::new(&small_generator_config(), GeneratorKind::Igcn, None, 0).unwrap();
    assert!(gen.restore(&images(&[1, 3, 16, 16], 0)).is_err());
    assert!(gen.restore(&images(&[1, 1, 8, 8], 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn output_is_upscaled_by_two_per_stage(side_mult in 1usize..3, stages in 0usize..4, residual in any::<bool>()) {
        let cfg = GeneratorConfig { input_side: 8 * side_mult, upsample_stages: stages, ..small_generator_config() };
        let kind = if residual { GeneratorKind::Residual } else { GeneratorKind::Igcn };
        let gen = Generator::<f32>::new(&cfg, kind, None, 0).unwrap();
        let out = gen.restore(&images(&[1, 3, cfg.input_side, cfg.input_side], 1).cast()).unwrap();
        prop_assert_eq!(out.shape(), &[1, 3, cfg.input_side << stages, cfg.input_side << stages]);
        prop_assert_eq!(cfg.output_side(), cfg.input_side << stages);
    }
}

#[test]
fn desk_scale_output_is_eight_times_input() {
    let cfg = GeneratorConfig::default();
    assert_eq!(cfg.upsample_stages, 3);
    assert_eq!(GeneratorConfig { input_side: 16, ..cfg }.output_side(), 128);
}

#[test]
fn residual_baseline_is_smaller() {
    for base in [8, 16, 32] {
        let cfg = GeneratorConfig { base_channels: base, ..small_generator_config() };
        let full = Generator::<f32>::new(&cfg, GeneratorKind::Igcn, None, 0).unwrap();
        let base_gen = Generator::<f32>::new(&cfg, GeneratorKind::Residual, None, 0).unwrap();
        assert!(base_gen.num_params() < full.num_params());
        let x = images(&[1, 3, 8, 8], 0).cast();
        assert_eq!(base_gen.restore(&x).unwrap().shape(), full.restore(&x).unwrap().shape());
    }
}

#[test]
fn baseline_equals_generator_with_only_single_patch_branches() {
    let cfg = GeneratorConfig { n_rrmb: 2, ..small_generator_config() };
    let mut full = Generator::<f64>::new(&cfg, GeneratorKind::Igcn, None, 7).unwrap();
    let mut base = Generator::<f64>::new(&cfg, GeneratorKind::Residual, None, 8).unwrap();
    for block in full.rrmb_blocks().cloned().collect::<Vec<_>>() {
        assert_eq!(block.branch_1x1.adjacency.normalized(), &[1.0]);
        for b in [&block.branch_2x2, &block.branch_8x8] {
            for id in [b.weight, b.bias] {
                full.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    for name in base.params.names().to_vec() {
        let mapped = if name.starts_with("body") { name.replace(".conv.", ".split1.") } else { name.clone() };
        let src = full.params.id(&mapped).unwrap();
        let dst = base.params.id(&name).unwrap();
        *base.params.get_mut(dst) = full.params.get(src).clone();
    }
    let x = images(&[2, 3, 8, 8], 9);
    assert!(base.restore(&x).unwrap().max_abs_diff(&full.restore(&x).unwrap()) < 1e-12);
}

#[test]
fn discriminator_emits_one_logit_per_image() {
    let cfg = DiscriminatorConfig { input_side: 128, ..DiscriminatorConfig::default() };
    let mut d = Discriminator::<f64>::new(&cfg, 0).unwrap();
    let x = images(&[2, 3, 128, 128], 1);
    assert_eq!(d.logits(&x).unwrap().shape(), &[2, 1]);
    zero_all(&mut d.params);
    assert!(d.logits(&x).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(Discriminator::<f64>::new(&DiscriminatorConfig { input_side: 48, ..cfg }, 0).is_err());
}

#[test]
fn classifier_logit_count_follows_config() {
    for n_au in [8, 12] {
        let cfg = ClassifierConfig { n_au, adjacency: AdjacencyConfig::symmetry_only(), ..ClassifierConfig::default() };
        let c = AuClassifier::<f64>::new(&cfg, None, 0).unwrap();
        let x = images(&[3, 3, 64, 64], 1);
        let logits = c.logits(&x).unwrap();
        assert_eq!(logits.shape(), &[3, n_au]);
        let probs = c.probabilities(&x).unwrap();
        for (&z, &p) in logits.data().iter().zip(probs.data()) {
            assert!((z - (p / (1.0 - p)).ln()).abs() < 1e-6);
        }
        let preds = c.predict(&x).unwrap();
        for (row, prow) in preds.iter().zip(probs.data().chunks(n_au)) {
            for (&b, &p) in row.iter().zip(prow) {
                assert_eq!(b, p >= 0.5);
            }
        }
    }
    let bad = ClassifierConfig { input_side: 48, ..ClassifierConfig::default() };
    assert!(AuClassifier::<f64>::new(&bad, None, 0).is_err());
}

#[test]
fn classifier_runs_at_trunk_resolution() {
    let cfg = ClassifierConfig { input_side: 8, adjacency: AdjacencyConfig::symmetry_only(), ..ClassifierConfig::default() };
    let c = AuClassifier::<f64>::new(&cfg, None, 0).unwrap();
    assert_eq!(c.logits(&images(&[1, 3, 8, 8], 0)).unwrap().shape(), &[1, 8]);
}

#[test]
fn classifier_freeze_flag_round_trips() {
    let cfg = ClassifierConfig { input_side: 16, adjacency: AdjacencyConfig::symmetry_only(), ..ClassifierConfig::default() };
    let mut c = AuClassifier::<f32>::new(&cfg, None, 0).unwrap();
    assert!(!c.is_frozen());
    c.freeze();
    assert!(c.is_frozen());
    c.unfreeze();
    assert!(!c.is_frozen());
}

/// Gradient check w.r.t. the input and every parameter. Zero-initialized
/// biases are replaced by random ones so that no pre-activation sits exactly
/// on a ReLU kink.
fn check_network<F>(name: &str, input: Tensor<f64>, params: &ParamStore<f64>, seed: u64, f: F)
where
    F: Fn(&mut igcn_core::Graph<f64>, &Bound, igcn_core::Var) -> igcn_core::Result<igcn_core::Var>,
{
    let cfg = GradCheckConfig { max_probes: Some(12), ..GradCheckConfig::default() };
    let rng = &mut ChaCha8Rng::seed_from_u64(seed + 1000);
    let mut inputs = vec![input];
    inputs.extend(params.tensors().iter().map(|t| {
        if t.shape().len() == 1 {
            Tensor::rand_uniform(t.shape(), -0.2, 0.2, rng)
        } else {
            t.clone()
        }
    }));
    let report = grad_check_at(name, |g, v| f(g, &Bound::from_vars(v[1..].to_vec()), v[0]), inputs, &cfg, seed);
    assert!(report.passed, "{name} seed {seed}: {report:?}");
}

#[test]
fn networks_pass_gradient_checks() {
    for seed in 0..5u64 {
        let cfg = small_generator_config();
        for kind in [GeneratorKind::Igcn, GeneratorKind::Residual] {
            let gen = Generator::<f64>::new(&cfg, kind, None, seed).unwrap();
            check_network(&format!("{kind:?}"), images(&[2, 3, 8, 8], seed), &gen.params, seed, |g, p, x| {
                gen.forward(g, p, x)
            });
        }
        let d = Discriminator::<f64>::new(&DiscriminatorConfig { input_side: 16, ..Default::default() }, seed).unwrap();
        check_network("discriminator", images(&[2, 3, 16, 16], seed), &d.params, seed, |g, p, x| d.forward(g, p, x));
        let ccfg = ClassifierConfig { input_side: 16, adjacency: AdjacencyConfig::symmetry_only(), ..Default::default() };
        let c = AuClassifier::<f64>::new(&ccfg, None, seed).unwrap();
        check_network("classifier", images(&[2, 3, 16, 16], seed), &c.params, seed, |g, p, x| {
            Ok(c.forward(g, p, x)?.logits)
        });
    }
}

#[test]
fn calibrated_taps_have_unit_rms_and_leave_logits_alone() {
    let cfg = ClassifierConfig { input_side: 32, adjacency: AdjacencyConfig::symmetry_only(), ..ClassifierConfig::default() };
    let mut c = AuClassifier::<f64>::new(&cfg, None, 3).unwrap();
    let x = images(&[4, 3, 32, 32], 5);
    let before = c.logits(&x).unwrap();
    c.calibrate_taps(&x).unwrap();
    assert!(c.config.tap_scales.iter().all(|&s| s > 0.0 && s != 1.0));
    assert_eq!(c.logits(&x).unwrap(), before);

    let mut g = Graph::new();
    let p = c.params.bind(&mut g, false);
    let v = g.constant(x);
    let taps = c.forward(&mut g, &p, v).unwrap();
    for tap in [taps.shallow, taps.deep] {
        let t = g.value(tap);
        let rms = (t.data().iter().map(|v| v * v).sum::<f64>() / t.numel() as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-9, "tap RMS {rms}");
    }
}

#[test]
fn calibration_rejects_dead_taps() {
    let cfg = ClassifierConfig { input_side: 16, adjacency: AdjacencyConfig::symmetry_only(), ..ClassifierConfig::default() };
    let mut c = AuClassifier::<f64>::new(&cfg, None, 0).unwrap();
    zero_all(&mut c.params);
    assert!(c.calibrate_taps(&images(&[2, 3, 16, 16], 1)).is_err());
}
