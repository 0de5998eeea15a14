use igcn_core::graph_conv::AdjacencyConfig;
use igcn_core::losses::{
    adversarial_losses, au_consistency_loss, classifier_losses, classifier_pretrain_loss, discriminator_loss,
    generator_adversarial_loss, perceptual_loss, pixel_loss, total_generator_loss, LossParts, LossValues, LossWeights,
    ReferenceFeatures,
};
use igcn_core::models::{
    AuClassifier, ClassifierConfig, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, GeneratorKind,
};
use igcn_core::nn::{Bound, ParamStore};
use igcn_core::tensor::{grad_check_at, Adam, AdamConfig, GradCheckConfig};
use igcn_core::{Error, Graph, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN2: f64 = std::f64::consts::LN_2;

fn images(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::rand_uniform(shape, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn frozen_classifier(side: usize, n_au: usize, seed: u64) -> AuClassifier<f64> {
    let cfg = ClassifierConfig { n_au, input_side: side, adjacency: AdjacencyConfig::symmetry_only(), ..Default::default() };
    let mut c = AuClassifier::new(&cfg, None, seed).unwrap();
    // Random biases keep features away from exact ReLU kinks.
    let rng = &mut ChaCha8Rng::seed_from_u64(seed + 77);
    for t in c.params.tensors_mut() {
        if t.shape().len() == 1 {
            *t = Tensor::rand_uniform(t.shape(), -0.1, 0.1, rng);
        }
    }
    c.freeze();
    c
}

fn small_discriminator(side: usize, seed: u64) -> Discriminator<f64> {
    Discriminator::new(&DiscriminatorConfig { input_side: side, ..Default::default() }, seed).unwrap()
}

fn scalar(g: &Graph<f64>, v: igcn_core::Var) -> f64 {
    g.value(v).item()
}

fn feature_mse(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.numel() as f64
}

// ---- pixel ----

#[test]
fn pixel_loss_examples() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(images(&[2, 3, 4, 4], 0));
    let zero = pixel_loss(&mut g, a, a).unwrap();
    assert_eq!(scalar(&g, zero), 0.0);
    let zeros = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
    let ones = g.constant(Tensor::full(&[1, 3, 4, 4], 1.0));
    let one = pixel_loss(&mut g, zeros, ones).unwrap();
    assert_eq!(scalar(&g, one), 1.0);
    let other = g.constant(Tensor::zeros(&[1, 3, 4, 5]));
    assert!(pixel_loss(&mut g, zeros, other).is_err());
}

#[test]
fn pixel_loss_gradient_is_scaled_residual() {
    let out = images(&[2, 3, 4, 4], 1);
    let gt = images(&[2, 3, 4, 4], 2);
    let mut g = Graph::new();
    let (o, t) = (g.param(out.clone()), g.constant(gt.clone()));
    let l = pixel_loss(&mut g, o, t).unwrap();
    g.backward(l).unwrap();
    let n = out.numel() as f64;
    let want = out.zip_map(&gt, |a, b| 2.0 * (a - b) / n).unwrap();
    assert!(g.grad(o).unwrap().max_abs_diff(&want) < 1e-15);
}

// ---- perceptual / AU consistency ----

#[test]
fn perceptual_loss_is_zero_on_identical_images_and_symmetric() {
    let c = frozen_classifier(16, 8, 0);
    let (a, b) = (images(&[2, 3, 16, 16], 1), images(&[2, 3, 16, 16], 2));
    let run = |x: &Tensor<f64>, y: &Tensor<f64>| {
        let mut g = Graph::new();
        let p = c.params.bind(&mut g, false);
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        let l = perceptual_loss(&mut g, &c, &p, xv, yv).unwrap();
        scalar(&g, l)
    };
    assert_eq!(run(&a, &a), 0.0);
    let (ab, ba) = (run(&a, &b), run(&b, &a));
    assert!(ab > 0.0);
    assert!((ab - ba).abs() < 1e-15);
}

#[test]
fn perceptual_loss_sums_independent_tap_errors() {
    for seed in 0..3 {
        let c = frozen_classifier(16, 8, seed);
        let (a, b) = (images(&[2, 3, 16, 16], seed + 10), images(&[2, 3, 16, 16], seed + 20));
        let taps = |x: &Tensor<f64>| {
            let mut g = Graph::new();
            let p = c.params.bind(&mut g, false);
            let xv = g.constant(x.clone());
            let t = c.forward(&mut g, &p, xv).unwrap();
            (g.value(t.shallow).clone(), g.value(t.deep).clone(), g.value(t.logits).clone())
        };
        let (sa, da, la) = taps(&a);
        let (sb, db, lb) = taps(&b);
        let mut g = Graph::new();
        let p = c.params.bind(&mut g, false);
        let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
        let per = perceptual_loss(&mut g, &c, &p, av, bv).unwrap();
        let au = au_consistency_loss(&mut g, &c, &p, av, bv).unwrap();
        assert!((scalar(&g, per) - (feature_mse(&sa, &sb) + feature_mse(&da, &db))).abs() < 1e-12);
        assert!((scalar(&g, au) - feature_mse(&la, &lb)).abs() < 1e-12);
    }
}

#[test]
fn au_consistency_matches_logit_formula() {
    let mut c = frozen_classifier(8, 2, 0);
    for t in c.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let bias = c.params.id("fc.bias").unwrap();
    c.params.get_mut(bias).data_mut().copy_from_slice(&[1.0, 2.0]);
    let mut g = Graph::new();
    let p = c.params.bind(&mut g, false);
    let img = g.constant(images(&[1, 3, 8, 8], 0));
    let reference = ReferenceFeatures {
        logits: g.constant(Tensor::from_f64(&[1, 2], &[1.0, 0.0]).unwrap()),
        shallow: g.constant(Tensor::zeros(&[1, 16, 8, 8])),
        deep: g.constant(Tensor::zeros(&[1, 16, 8, 8])),
    };
    let (au, per) = classifier_losses(&mut g, &c, &p, img, &reference).unwrap();
    assert_eq!(scalar(&g, au), 2.0);
    assert_eq!(scalar(&g, per), 0.0);
}

#[test]
fn unfrozen_classifier_is_rejected() {
    let mut c = frozen_classifier(8, 8, 0);
    c.unfreeze();
    let mut g = Graph::new();
    let p = c.params.bind(&mut g, false);
    let x = g.constant(images(&[1, 3, 8, 8], 0));
    assert!(matches!(perceptual_loss(&mut g, &c, &p, x, x), Err(Error::NotFrozen(_))));
    assert!(matches!(au_consistency_loss(&mut g, &c, &p, x, x), Err(Error::NotFrozen(_))));
    c.freeze();
    let trainable = c.params.bind(&mut g, true);
    assert!(perceptual_loss(&mut g, &c, &trainable, x, x).is_err());
}

// ---- adversarial ----

#[test]
fn zero_logit_discriminator_gives_log_two_losses() {
    let mut d = small_discriminator(16, 0);
    for t in d.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new();
    let p = d.params.bind(&mut g, false);
    let (fake, real) = (g.constant(images(&[3, 3, 16, 16], 1)), g.constant(images(&[3, 3, 16, 16], 2)));
    let (gen, dl) = adversarial_losses(&mut g, &d, &p, fake, real).unwrap();
    assert!((scalar(&g, dl) - 2.0 * LN2).abs() < 1e-12);
    assert!((scalar(&g, gen) - LN2).abs() < 1e-12);
    assert!((scalar(&g, dl) - 1.3863).abs() < 1e-4);
}

#[test]
fn confident_discriminator_has_vanishing_loss() {
    let mut d = small_discriminator(16, 0);
    for (name, t) in d.params.names().to_vec().iter().zip(d.params.tensors_mut()) {
        let v = if name.ends_with("bias") { 0.0 } else { 0.5 };
        t.data_mut().iter_mut().for_each(|x| *x = v);
    }
    let fc_bias = d.params.id("fc.bias").unwrap();
    d.params.get_mut(fc_bias).data_mut()[0] = -200.0;
    let mut g = Graph::new();
    let p = d.params.bind(&mut g, false);
    let fake = g.constant(Tensor::zeros(&[2, 3, 16, 16]));
    let real = g.constant(Tensor::full(&[2, 3, 16, 16], 1.0));
    let logits = d.forward(&mut g, &p, real).unwrap();
    assert!(g.value(logits).data().iter().all(|&z| z > 200.0));
    let dl = discriminator_loss(&mut g, &d, &p, fake, real).unwrap();
    assert!(scalar(&g, dl) < 1e-20);
    assert!(scalar(&g, dl).is_finite());
}

#[test]
fn generator_step_raises_discriminator_score() {
    let gcfg = GeneratorConfig {
        base_channels: 8,
        n_rrmb: 1,
        upsample_stages: 1,
        adjacency: AdjacencyConfig::symmetry_only(),
        ..GeneratorConfig::default()
    };
    for seed in 0..5 {
        let mut gen = Generator::<f64>::new(&gcfg, GeneratorKind::Igcn, None, seed).unwrap();
        let d = small_discriminator(16, seed + 1);
        let x = images(&[2, 3, 8, 8], seed + 2);
        let score = |gen: &Generator<f64>| d.logits(&gen.restore(&x).unwrap()).unwrap().sum();
        let before = score(&gen);
        let mut g = Graph::new();
        let gp = gen.params.bind(&mut g, true);
        let dp = d.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = gen.forward(&mut g, &gp, xv).unwrap();
        let adv = generator_adversarial_loss(&mut g, &d, &dp, out).unwrap();
        g.backward(adv).unwrap();
        let grads = gp.grads(&g);
        for (t, gr) in gen.params.tensors_mut().iter_mut().zip(&grads) {
            *t = t.zip_map(gr, |w, dw| w - 1e-3 * dw).unwrap();
        }
        assert!(score(&gen) > before, "seed {seed}");
    }
}

#[test]
fn discriminator_loss_does_not_reach_the_generator() {
    let d = small_discriminator(16, 0);
    let mut g = Graph::new();
    let dp = d.params.bind(&mut g, true);
    let fake = g.param(images(&[1, 3, 16, 16], 1));
    let real = g.constant(images(&[1, 3, 16, 16], 2));
    let dl = discriminator_loss(&mut g, &d, &dp, fake, real).unwrap();
    g.backward(dl).unwrap();
    assert!(g.grad(fake).map_or(true, |t| t.data().iter().all(|&v| v == 0.0)));
    assert!(dp.grads(&g).iter().any(|t| t.data().iter().any(|&v| v != 0.0)));
}

#[test]
fn discriminator_only_training_reduces_its_loss() {
    let gcfg = GeneratorConfig {
        base_channels: 8,
        n_rrmb: 1,
        upsample_stages: 1,
        adjacency: AdjacencyConfig::symmetry_only(),
        ..GeneratorConfig::default()
    };
    let gen = Generator::<f32>::new(&gcfg, GeneratorKind::Igcn, None, 0).unwrap();
    let mut d = Discriminator::<f32>::new(&DiscriminatorConfig { input_side: 16, ..Default::default() }, 1).unwrap();
    let mut opt = Adam::new(AdamConfig { lr: 1e-3, ..Default::default() }, d.params.tensors());
    let mut losses = Vec::new();
    for step in 0..50u64 {
        let x = images(&[4, 3, 8, 8], 100 + step).cast::<f32>();
        let fake = gen.restore(&x).unwrap();
        let real = images(&[4, 3, 16, 16], 200 + step).cast::<f32>();
        let mut g = Graph::new();
        let dp = d.params.bind(&mut g, true);
        let (f, r) = (g.constant(fake), g.constant(real));
        let dl = discriminator_loss(&mut g, &d, &dp, f, r).unwrap();
        g.backward(dl).unwrap();
        losses.push(g.value(dl).item());
        opt.step(d.params.tensors_mut(), &dp.grads(&g)).unwrap();
    }
    let head: f32 = losses[..5].iter().sum::<f32>() / 5.0;
    let tail: f32 = losses[45..].iter().sum::<f32>() / 5.0;
    assert!(tail < head, "first {head}, last {tail}");
}

// ---- classifier pretraining ----

#[test]
fn pretrain_loss_examples() {
    let mut g = Graph::<f64>::new();
    let zero = g.constant(Tensor::zeros(&[2, 4]));
    let labels = Tensor::from_f64(&[2, 4], &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
    let l = classifier_pretrain_loss(&mut g, zero, &labels).unwrap();
    assert!((scalar(&g, l) - LN2).abs() < 1e-15);

    let huge = g.constant(Tensor::from_f64(&[1, 1], &[1e4]).unwrap());
    let l = classifier_pretrain_loss(&mut g, huge, &Tensor::scalar(1.0).reshape(&[1, 1]).unwrap()).unwrap();
    assert!(scalar(&g, l).is_finite() && scalar(&g, l) < 1e-12);

    let mut prev = f64::INFINITY;
    for z in [-3.0, -1.0, 0.0, 0.5, 2.0, 6.0] {
        let v = g.constant(Tensor::from_f64(&[1, 1], &[z]).unwrap());
        let l = classifier_pretrain_loss(&mut g, v, &Tensor::from_f64(&[1, 1], &[1.0]).unwrap()).unwrap();
        assert!(scalar(&g, l) < prev);
        prev = scalar(&g, l);
    }
    let bad = Tensor::from_f64(&[2, 4], &[1.0, 0.5, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
    assert!(classifier_pretrain_loss(&mut g, zero, &bad).is_err());
}

// ---- total ----

fn constant_parts(g: &mut Graph<f64>, v: [f64; 4]) -> LossParts {
    let mut c = |x: f64| g.param(Tensor::scalar(x));
    LossParts { pixel: c(v[0]), adversarial: c(v[1]), au: c(v[2]), perceptual: c(v[3]) }
}

#[test]
fn total_loss_examples() {
    let w = LossWeights::default();
    assert_eq!((w.lambda1, w.lambda2, w.lambda3), (0.001, 0.001, 0.5));
    let mut g = Graph::new();
    let zero = constant_parts(&mut g, [0.0; 4]);
    let t = total_generator_loss(&mut g, &zero, &w).unwrap();
    assert_eq!(scalar(&g, t), 0.0);
    let ones = constant_parts(&mut g, [1.0; 4]);
    let t = total_generator_loss(&mut g, &ones, &w).unwrap();
    assert!((scalar(&g, t) - 1.502).abs() < 1e-12);
    let vals = LossValues { pixel: 1.0, adversarial: 1.0, au: 1.0, perceptual: 1.0 };
    assert!((w.combine(&vals).unwrap() - 1.502).abs() < 1e-12);
    let negative = LossWeights { lambda2: -0.1, ..w };
    assert!(total_generator_loss(&mut g, &ones, &negative).is_err());
    assert!(negative.combine(&vals).is_err());
    assert!(LossWeights { lambda1: f64::NAN, ..w }.validate().is_err());
}

proptest! {
    #[test]
    fn total_loss_is_linear_with_unit_pixel_weight(
        parts in prop::array::uniform4(0.0f64..10.0),
        l1 in 0.0f64..2.0, l2 in 0.0f64..2.0, l3 in 0.0f64..2.0,
    ) {
        let w = LossWeights { lambda1: l1, lambda2: l2, lambda3: l3 };
        let mut g = Graph::new();
        let p = constant_parts(&mut g, parts);
        let t = total_generator_loss(&mut g, &p, &w).unwrap();
        let want = parts[0] + l1 * parts[1] + l2 * parts[2] + l3 * parts[3];
        prop_assert!((g.value(t).item() - want).abs() < 1e-12);
        g.backward(t).unwrap();
        let coeff = |v| g.grad(v).unwrap().item();
        prop_assert_eq!(coeff(p.pixel), 1.0);
        prop_assert_eq!(coeff(p.adversarial), l1);
        prop_assert_eq!(coeff(p.au), l2);
        prop_assert_eq!(coeff(p.perceptual), l3);
    }
}

// ---- gradients ----

#[test]
fn every_loss_passes_gradient_checks() {
    let cfg = GradCheckConfig { max_probes: Some(24), ..GradCheckConfig::default() };
    for seed in 0..5u64 {
        let (a, b) = (images(&[2, 3, 16, 16], seed), images(&[2, 3, 16, 16], seed + 50));
        let check = |name: &str, r: igcn_core::tensor::GradCheckReport| assert!(r.passed, "{name} seed {seed}: {r:?}");
        check("pixel", grad_check_at("pixel", |g, v| pixel_loss(g, v[0], v[1]), vec![a.clone(), b.clone()], &cfg, seed));

        let c = frozen_classifier(16, 8, seed);
        let bind = |g: &mut Graph<f64>, c: &AuClassifier<f64>| c.params.bind(g, false);
        check(
            "perceptual",
            grad_check_at("perceptual", |g, v| { let p = bind(g, &c); let t = g.constant(b.clone()); perceptual_loss(g, &c, &p, v[0], t) }, vec![a.clone()], &cfg, seed),
        );
        check(
            "au",
            grad_check_at("au", |g, v| { let p = bind(g, &c); let t = g.constant(b.clone()); au_consistency_loss(g, &c, &p, v[0], t) }, vec![a.clone()], &cfg, seed),
        );

        let d = small_discriminator(16, seed);
        let mut dparams = vec![a.clone()];
        dparams.extend(d.params.tensors().iter().cloned());
        check(
            "g_adv",
            grad_check_at("g_adv", |g, v| generator_adversarial_loss(g, &d, &Bound::from_vars(v[1..].to_vec()), v[0]), dparams.clone(), &cfg, seed),
        );
        // The generated image is detached inside the discriminator loss, so it stays a constant here.
        let mut dinputs = vec![b.clone()];
        dinputs.extend(d.params.tensors().iter().cloned());
        check(
            "d_loss",
            grad_check_at(
                "d_loss",
                |g, v| {
                    let fake = g.constant(a.clone());
                    discriminator_loss(g, &d, &Bound::from_vars(v[1..].to_vec()), fake, v[0])
                },
                dinputs,
                &cfg,
                seed,
            ),
        );

        let labels = images(&[3, 8], seed).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
        check(
            "pretrain",
            grad_check_at("pretrain", |g, v| classifier_pretrain_loss(g, v[0], &labels), vec![images(&[3, 8], seed + 9).map(|v| 4.0 * v - 2.0)], &cfg, seed),
        );

        let w = LossWeights::default();
        check(
            "total",
            grad_check_at(
                "total",
                |g, v| {
                    let p = LossParts { pixel: v[0], adversarial: v[1], au: v[2], perceptual: v[3] };
                    total_generator_loss(g, &p, &w)
                },
                (0..4).map(|i| images(&[1], seed * 4 + i)).collect(),
                &cfg,
                seed,
            ),
        );
    }
}

// ---- gradient flow ----

fn live_tensors(store: &ParamStore<f32>, grads: &[Vec<Tensor<f32>>]) -> Vec<String> {
    store
        .names()
        .iter()
        .enumerate()
        .filter(|(i, _)| grads.iter().all(|batch| batch[*i].data().iter().all(|&v| v == 0.0)))
        .map(|(_, n)| n.clone())
        .collect()
}

#[test]
fn every_parameter_receives_gradient() {
    let gcfg = GeneratorConfig {
        base_channels: 16,
        n_rrmb: 2,
        adjacency: AdjacencyConfig { sim_threshold: None, ..Default::default() },
        ..GeneratorConfig::default()
    };
    let gen = Generator::<f32>::new(&gcfg, GeneratorKind::Igcn, None, 0).unwrap();
    let d = Discriminator::<f32>::new(&DiscriminatorConfig::default(), 1).unwrap();
    let ccfg = ClassifierConfig { adjacency: AdjacencyConfig { sim_threshold: None, ..Default::default() }, ..Default::default() };
    let mut c = AuClassifier::<f32>::new(&ccfg, None, 2).unwrap();
    let (mut gg, mut dg, mut cg) = (Vec::new(), Vec::new(), Vec::new());
    for batch in 0..10u64 {
        let x = images(&[2, 3, 8, 8], batch).cast::<f32>();
        let gt = images(&[2, 3, 64, 64], batch + 100).cast::<f32>();
        let labels = images(&[2, 8], batch + 200).map(|v| if v > 0.5 { 1.0 } else { 0.0 }).cast::<f32>();

        c.unfreeze();
        let mut g = Graph::new();
        let cp = c.params.bind(&mut g, true);
        let gv = g.constant(gt.clone());
        let taps = c.forward(&mut g, &cp, gv).unwrap();
        let l = classifier_pretrain_loss(&mut g, taps.logits, &labels).unwrap();
        g.backward(l).unwrap();
        cg.push(cp.grads(&g));
        c.freeze();

        let mut g = Graph::new();
        let gp = gen.params.bind(&mut g, true);
        let dp = d.params.bind(&mut g, false);
        let cp = c.params.bind(&mut g, false);
        let (xv, gv) = (g.constant(x), g.constant(gt.clone()));
        let out = gen.forward(&mut g, &gp, xv).unwrap();
        let reference = ReferenceFeatures::compute(&mut g, &c, &cp, gv).unwrap();
        let (au, perceptual) = classifier_losses(&mut g, &c, &cp, out, &reference).unwrap();
        let parts = LossParts {
            pixel: pixel_loss(&mut g, out, gv).unwrap(),
            adversarial: generator_adversarial_loss(&mut g, &d, &dp, out).unwrap(),
            au,
            perceptual,
        };
        let total = total_generator_loss(&mut g, &parts, &LossWeights::default()).unwrap();
        g.backward(total).unwrap();
        gg.push(gp.grads(&g));
        assert!(dp.vars().iter().all(|&v| g.grad(v).is_none()));
        assert!(cp.vars().iter().all(|&v| g.grad(v).is_none()));

        let mut g = Graph::new();
        let dp = d.params.bind(&mut g, true);
        let fake = gen.restore(&images(&[2, 3, 8, 8], batch + 300).cast()).unwrap();
        let (fv, gv) = (g.constant(fake), g.constant(gt));
        let dl = discriminator_loss(&mut g, &d, &dp, fv, gv).unwrap();
        g.backward(dl).unwrap();
        dg.push(dp.grads(&g));
    }
    assert_eq!(live_tensors(&gen.params, &gg), Vec::<String>::new());
    assert_eq!(live_tensors(&d.params, &dg), Vec::<String>::new());
    assert_eq!(live_tensors(&c.params, &cg), Vec::<String>::new());
}
