//! Finite-difference gradient checks over every differentiable op, layer, loss and network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph_conv::{build_adjacency, AdjacencyConfig, IgcnLayer, IgcnMode, PatchSplitSpec, RrmbBlock};
use crate::losses::{
    au_consistency_loss, classifier_pretrain_loss, discriminator_loss, generator_adversarial_loss, perceptual_loss,
    pixel_loss, total_generator_loss, LossParts, LossWeights,
};
use crate::models::{
    AuClassifier, ClassifierConfig, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, GeneratorKind,
};
use crate::nn::{Bound, ParamStore};
use crate::tensor::{grad_check, grad_check_at, GradCheckConfig, GradCheckReport, Graph, Tensor, Var};
use crate::Result;

fn uniform(shape: &[usize], low: f64, high: f64, seed: u64) -> Tensor<f64> {
    Tensor::rand_uniform(shape, low, high, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Input followed by the parameters, with 1-D tensors (biases) redrawn so
/// that no pre-activation sits exactly on a ReLU kink.
fn with_params(input: Tensor<f64>, params: &ParamStore<f64>, seed: u64) -> Vec<Tensor<f64>> {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let mut out = vec![input];
    out.extend(params.tensors().iter().map(|t| {
        if t.shape().len() == 1 {
            Tensor::rand_uniform(t.shape(), -0.2, 0.2, rng)
        } else {
            t.clone()
        }
    }));
    out
}

fn network<F>(name: &str, input: Tensor<f64>, params: &ParamStore<f64>, cfg: &GradCheckConfig, seed: u64, f: F) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>, &Bound, Var) -> Result<Var>,
{
    grad_check_at(name, |g, v| f(g, &Bound::from_vars(v[1..].to_vec()), v[0]), with_params(input, params, seed), cfg, seed)
}

fn primitive_ops(seed: u64, out: &mut Vec<GradCheckReport>) {
    let cfg = GradCheckConfig::default();
    let kinkless = GradCheckConfig { min_abs: 0.1, ..GradCheckConfig::default() };
    out.push(grad_check("conv2d", |g, v| g.conv2d(v[0], v[1], v[2], 1, 1), &[vec![2, 2, 5, 4], vec![3, 2, 3, 3], vec![3]], &cfg, seed));
    out.push(grad_check(
        "conv2d/stride2",
        |g, v| g.conv2d(v[0], v[1], v[2], 2, 1),
        &[vec![1, 2, 6, 6], vec![2, 2, 3, 3], vec![2]],
        &cfg,
        seed,
    ));
    out.push(grad_check(
        "deconv2d",
        |g, v| g.deconv2d(v[0], v[1], v[2], 2, 0),
        &[vec![2, 3, 3, 2], vec![3, 2, 2, 2], vec![2]],
        &cfg,
        seed,
    ));
    out.push(grad_check("relu", |g, v| Ok(g.relu(v[0])), &[vec![3, 7]], &kinkless, seed));
    out.push(grad_check("sigmoid", |g, v| Ok(g.sigmoid(v[0])), &[vec![3, 7]], &cfg, seed));
    out.push(grad_check("add", |g, v| g.add(v[0], v[1]), &[vec![4], vec![4]], &cfg, seed));
    out.push(grad_check("sub", |g, v| g.sub(v[0], v[1]), &[vec![4], vec![4]], &cfg, seed));
    out.push(grad_check("mul", |g, v| g.mul(v[0], v[1]), &[vec![4], vec![4]], &cfg, seed));
    out.push(grad_check("mse", |g, v| g.mse(v[0], v[1]), &[vec![2, 5], vec![2, 5]], &cfg, seed));
    out.push(grad_check("linear", |g, v| g.linear(v[0], v[1], v[2]), &[vec![3, 4], vec![2, 4], vec![2]], &cfg, seed));
    out.push(grad_check("global_avg_pool", |g, v| g.global_avg_pool(v[0]), &[vec![2, 3, 2, 2]], &cfg, seed));
    out.push(grad_check("avg_pool2", |g, v| g.avg_pool2(v[0]), &[vec![2, 2, 4, 6]], &cfg, seed));
    let targets = uniform(&[2, 3], 0.0, 1.0, seed).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    out.push(grad_check("bce_with_logits", |g, v| g.bce_with_logits(v[0], &targets), &[vec![2, 3]], &cfg, seed));
    out.push(grad_check(
        "mean",
        |g, v| {
            let sq = g.mul(v[0], v[0])?;
            Ok(g.mean(sq))
        },
        &[vec![5]],
        &cfg,
        seed,
    ));
}

fn graph_layers(seed: u64, out: &mut Vec<GradCheckReport>) -> Result<()> {
    let cfg = GradCheckConfig::default();
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    for (k, mode, cin, cout, side) in [
        (1, IgcnMode::Conv { kernel: 3 }, 2, 3, 4),
        (2, IgcnMode::Conv { kernel: 3 }, 2, 2, 4),
        (4, IgcnMode::Conv { kernel: 3 }, 1, 2, 8),
        (2, IgcnMode::Deconv { kernel: 2, stride: 2 }, 2, 2, 4),
    ] {
        let spec = PatchSplitSpec::new(k, side, side)?;
        let adj = build_adjacency::<f64>(&spec, None, None, true, &[(0, k * k - 1)])?;
        let mut store = ParamStore::new();
        let layer = IgcnLayer::new(&mut store, "l", spec, adj, mode, cin, cout, rng)?;
        let name = format!("igcn k={k} {}", if matches!(mode, IgcnMode::Conv { .. }) { "conv" } else { "deconv" });
        let input = uniform(&[2, cin, side, side], -1.0, 1.0, seed);
        out.push(network(&name, input, &store, &cfg, seed, |g, p, x| layer.forward(g, p, x)));
    }
    let mut store = ParamStore::new();
    let block = RrmbBlock::new(&mut store, "r", 2, 8, 8, 3, &AdjacencyConfig::symmetry_only(), None, rng)?;
    out.push(network("rrmb", uniform(&[1, 2, 8, 8], -1.0, 1.0, seed), &store, &cfg, seed, |g, p, x| block.forward(g, p, x)));
    Ok(())
}

fn losses(seed: u64, out: &mut Vec<GradCheckReport>) -> Result<()> {
    let cfg = GradCheckConfig { max_probes: Some(24), ..GradCheckConfig::default() };
    let (a, b) = (uniform(&[2, 3, 16, 16], 0.0, 1.0, seed), uniform(&[2, 3, 16, 16], 0.0, 1.0, seed + 50));
    out.push(grad_check_at("pixel_loss", |g, v| pixel_loss(g, v[0], v[1]), vec![a.clone(), b.clone()], &cfg, seed));

    let ccfg = ClassifierConfig { input_side: 16, adjacency: AdjacencyConfig::symmetry_only(), ..ClassifierConfig::default() };
    let mut c = AuClassifier::<f64>::new(&ccfg, None, seed)?;
    let biases = with_params(Tensor::zeros(&[1]), &c.params, seed);
    for (t, r) in c.params.tensors_mut().iter_mut().zip(&biases[1..]) {
        *t = r.clone();
    }
    c.freeze();
    let target = |g: &mut Graph<f64>| g.constant(b.clone());
    out.push(grad_check_at(
        "perceptual_loss",
        |g, v| {
            let p = c.params.bind(g, false);
            let t = target(g);
            perceptual_loss(g, &c, &p, v[0], t)
        },
        vec![a.clone()],
        &cfg,
        seed,
    ));
    out.push(grad_check_at(
        "au_consistency_loss",
        |g, v| {
            let p = c.params.bind(g, false);
            let t = target(g);
            au_consistency_loss(g, &c, &p, v[0], t)
        },
        vec![a.clone()],
        &cfg,
        seed,
    ));

    let d = Discriminator::<f64>::new(&DiscriminatorConfig { input_side: 16, ..DiscriminatorConfig::default() }, seed)?;
    out.push(grad_check_at(
        "generator_adversarial_loss",
        |g, v| generator_adversarial_loss(g, &d, &Bound::from_vars(v[1..].to_vec()), v[0]),
        with_params(a.clone(), &d.params, seed),
        &cfg,
        seed,
    ));
    // The generated image is detached inside the discriminator loss, so it stays a constant.
    out.push(grad_check_at(
        "discriminator_loss",
        |g, v| {
            let fake = g.constant(a.clone());
            discriminator_loss(g, &d, &Bound::from_vars(v[1..].to_vec()), fake, v[0])
        },
        with_params(b.clone(), &d.params, seed),
        &cfg,
        seed,
    ));

    let labels = uniform(&[3, 8], 0.0, 1.0, seed).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    out.push(grad_check_at(
        "classifier_pretrain_loss",
        |g, v| classifier_pretrain_loss(g, v[0], &labels),
        vec![uniform(&[3, 8], -2.0, 2.0, seed + 9)],
        &cfg,
        seed,
    ));
    let w = LossWeights::default();
    out.push(grad_check_at(
        "total_generator_loss",
        |g, v| total_generator_loss(g, &LossParts { pixel: v[0], adversarial: v[1], au: v[2], perceptual: v[3] }, &w),
        (0..4).map(|i| uniform(&[1], 0.0, 1.0, seed * 4 + i)).collect(),
        &cfg,
        seed,
    ));
    Ok(())
}

fn networks(seed: u64, out: &mut Vec<GradCheckReport>) -> Result<()> {
    let cfg = GradCheckConfig { max_probes: Some(12), ..GradCheckConfig::default() };
    let gcfg = GeneratorConfig {
        base_channels: 8,
        n_rrmb: 1,
        upsample_stages: 2,
        input_side: 8,
        adjacency: AdjacencyConfig { sim_threshold: None, ..AdjacencyConfig::default() },
        ..GeneratorConfig::default()
    };
    for (name, kind) in [("generator/igcn", GeneratorKind::Igcn), ("generator/residual", GeneratorKind::Residual)] {
        let gen = Generator::<f64>::new(&gcfg, kind, None, seed)?;
        let x = uniform(&[2, 3, 8, 8], 0.0, 1.0, seed);
        out.push(network(name, x, &gen.params, &cfg, seed, |g, p, x| gen.forward(g, p, x)));
    }
    let d = Discriminator::<f64>::new(&DiscriminatorConfig { input_side: 16, ..DiscriminatorConfig::default() }, seed)?;
    out.push(network("discriminator", uniform(&[2, 3, 16, 16], 0.0, 1.0, seed), &d.params, &cfg, seed, |g, p, x| {
        d.forward(g, p, x)
    }));
    let ccfg = ClassifierConfig { input_side: 16, adjacency: AdjacencyConfig::symmetry_only(), ..ClassifierConfig::default() };
    let c = AuClassifier::<f64>::new(&ccfg, None, seed)?;
    out.push(network("classifier", uniform(&[2, 3, 16, 16], 0.0, 1.0, seed), &c.params, &cfg, seed, |g, p, x| {
        Ok(c.forward(g, p, x)?.logits)
    }));
    Ok(())
}

/// Checks every primitive op, graph layer, loss and network in f64 at one seed.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::new();
    primitive_ops(seed, &mut out);
    graph_layers(seed, &mut out)?;
    losses(seed, &mut out)?;
    networks(seed, &mut out)?;
    Ok(out)
}
