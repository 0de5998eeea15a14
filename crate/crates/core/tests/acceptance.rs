//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use igcn_core::diagnostics::gradient_suite;
use igcn_core::graph_conv::{
    merge_patches, normalize_adjacency, split_patches, AdjacencyConfig, AdjacencyMatrix, IgcnLayer, IgcnMode,
    PatchSplitSpec, RrmbBlock,
};
use igcn_core::losses::{total_generator_loss, LossParts, LossWeights};
use igcn_core::models::{AuClassifier, ClassifierConfig, GeneratorKind};
use igcn_core::nn::ParamStore;
use igcn_core::synthdata::{
    apply_mask, degrade, encode_png, render_face, synthesize_splits, DatasetConfig, DegradationSpec, FaceStyle, SplitData,
    SyntheticFaceParams,
};
use igcn_core::train_eval::{
    au_metrics, au_metrics_from_predictions, evaluate_pipeline, pretrain_classifier, psnr, ssim, train_gan, Confusion,
    GanOptions, MetricsReport, TrainConfig,
};
use igcn_core::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, message: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message.into())
    }
}

struct Ledger {
    failures: usize,
}

impl Ledger {
    fn run(&mut self, id: &str, title: &str, check: impl FnOnce() -> Check) {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS [{id}] {title}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL [{id}] {title}: {detail}");
            }
        }
    }
}

fn random(shape: &[usize], low: f64, high: f64, seed: u64) -> Tensor<f64> {
    Tensor::rand_uniform(shape, low, high, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn flip_w(t: &Tensor<f64>) -> Tensor<f64> {
    let w = *t.shape().last().unwrap();
    Tensor::new(t.shape(), t.data().chunks(w).flat_map(|r| r.iter().rev().copied()).collect()).unwrap()
}

// ---- 1 ----

fn gradient_checks() -> Check {
    let start = Instant::now();
    let mut count = 0;
    for seed in 0..5 {
        for r in gradient_suite(seed).map_err(|e| e.to_string())? {
            ensure(r.passed, format!("{} seed {seed}: abs {:.2e} rel {:.2e} {:?}", r.op_name, r.max_abs_err, r.max_rel_err, r.error))?;
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!("{count} checks over 5 seeds in {:.1}s", elapsed.as_secs_f64()))
}

// ---- 2 ----

fn single_patch_identity() -> Check {
    for seed in 0..5 {
        let mut store = ParamStore::<f64>::new();
        let split = PatchSplitSpec::new(1, 8, 8).map_err(|e| e.to_string())?;
        let layer = IgcnLayer::new(
            &mut store,
            "l",
            split,
            AdjacencyMatrix::unlinked(1),
            IgcnMode::Conv { kernel: 3 },
            3,
            4,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .map_err(|e| e.to_string())?;
        ensure(layer.adjacency.normalized() == [1.0], "normalized 1×1 adjacency is not [[1]]")?;
        let x = random(&[2, 3, 8, 8], -1.0, 1.0, seed + 10);
        let got = layer.apply(&store, &x).map_err(|e| e.to_string())?;
        let mut g = Graph::new();
        let (xv, w, b) = (g.constant(x), g.constant(store.get(layer.weight).clone()), g.constant(store.get(layer.bias).clone()));
        let z = g.conv2d(xv, w, b, 1, 1).map_err(|e| e.to_string())?;
        let r = g.relu(z);
        let same = got.data().iter().zip(g.value(r).data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, format!("seed {seed}: outputs differ"))?;
    }
    Ok("bit-identical on 5 seeds".into())
}

fn split_merge_identity() -> Check {
    for k in [1, 2, 4, 8] {
        for seed in 0..5 {
            let x = random(&[2, 3, 16, 16], -1.0, 1.0, seed);
            let spec = PatchSplitSpec::new(k, 16, 16).map_err(|e| e.to_string())?;
            let back = merge_patches(&split_patches(&x, &spec).map_err(|e| e.to_string())?, &spec).map_err(|e| e.to_string())?;
            ensure(back == x, format!("k={k} seed {seed}"))?;
        }
    }
    Ok("exact for k ∈ {1, 2, 4, 8}".into())
}

fn normalization_fixtures() -> Check {
    let s6 = 1.0 / 6f64.sqrt();
    let fixtures: [(usize, Vec<f64>, Vec<f64>); 3] = [
        (1, vec![0.0], vec![1.0]),
        (2, vec![0.0, 1.0, 1.0, 0.0], vec![0.5; 4]),
        (
            3,
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            vec![0.5, s6, 0.0, s6, 1.0 / 3.0, s6, 0.0, s6, 0.5],
        ),
    ];
    let mut worst = 0f64;
    for (n, raw, expected) in fixtures {
        let got = normalize_adjacency(n, &raw).map_err(|e| e.to_string())?;
        for (a, b) in got.iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-12, format!("max error {worst:e}"))?;
    Ok(format!("max error {worst:.1e}"))
}

fn unit_total_loss() -> Check {
    let mut g = Graph::<f64>::new();
    let mut one = || g.param(Tensor::scalar(1.0));
    let parts = LossParts { pixel: one(), adversarial: one(), au: one(), perceptual: one() };
    let t = total_generator_loss(&mut g, &parts, &LossWeights::default()).map_err(|e| e.to_string())?;
    let v = g.value(t).item();
    ensure((v - 1.502).abs() < 1e-12, format!("got {v}"))?;
    Ok(format!("{v}"))
}

// ---- 3 ----

fn ssim_oracle(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let k = 8.min(h).min(w);
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let idx: Vec<usize> = (r..r + k).flat_map(|i| (c..c + k).map(move |j| i * w + j)).collect();
            let n = idx.len() as f64;
            let mx = idx.iter().map(|&i| x[i]).sum::<f64>() / n;
            let my = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
            let vx = idx.iter().map(|&i| (x[i] - mx).powi(2)).sum::<f64>() / n;
            let vy = idx.iter().map(|&i| (y[i] - my).powi(2)).sum::<f64>() / n;
            let cov = idx.iter().map(|&i| (x[i] - mx) * (y[i] - my)).sum::<f64>() / n;
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    total / ((h - k + 1) * (w - k + 1)) as f64
}

fn image_metrics_match_oracle() -> Check {
    let rng = &mut ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_p, mut worst_s) = (0f64, 0f64);
    for _ in 0..100 {
        let (h, w) = (rng.gen_range(8..24), rng.gen_range(8..24));
        let a: Tensor<f64> = Tensor::rand_uniform(&[3, h, w], 0.0, 1.0, rng);
        let noise: Tensor<f64> = Tensor::rand_uniform(&[3, h, w], -0.2, 0.2, rng);
        let b = Tensor::new(&[3, h, w], a.data().iter().zip(noise.data()).map(|(x, n)| (x + n).clamp(0.0, 1.0)).collect())
            .map_err(|e| e.to_string())?;
        let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.numel() as f64;
        worst_p = worst_p.max((psnr(&a, &b).map_err(|e| e.to_string())? - 10.0 * (1.0 / mse).log10()).abs());
        let plane = h * w;
        let expected = (0..3)
            .map(|c| ssim_oracle(&a.data()[c * plane..(c + 1) * plane], &b.data()[c * plane..(c + 1) * plane], h, w))
            .sum::<f64>()
            / 3.0;
        worst_s = worst_s.max((ssim(&a, &b).map_err(|e| e.to_string())? - expected).abs());
    }
    ensure(worst_p < 1e-6 && worst_s < 1e-6, format!("PSNR error {worst_p:e}, SSIM error {worst_s:e}"))?;
    Ok(format!("100 pairs, PSNR error {worst_p:.1e}, SSIM error {worst_s:.1e}"))
}

fn au_metric_fixtures() -> Check {
    let c = Confusion { tp: 1, fp: 1, fn_: 0, tn: 0 };
    ensure(c.f1() == 2.0 / 3.0 && c.accuracy() == 0.5, format!("tp1 fp1: F1 {} acc {}", c.f1(), c.accuracy()))?;
    let negative = vec![vec![false]; 4];
    let m = au_metrics_from_predictions(&negative, &negative).map_err(|e| e.to_string())?;
    ensure(m.f1 == [0.0] && m.accuracy == [1.0], format!("all-negative: {m:?}"))?;
    let perfect = vec![vec![true, false], vec![false, true]];
    let m = au_metrics_from_predictions(&perfect, &perfect).map_err(|e| e.to_string())?;
    ensure(m.mean_f1 == 1.0 && m.mean_accuracy == 1.0, format!("perfect: {m:?}"))?;
    Ok("F1 2/3, 0, 1 and accuracy 1/2, 1, 1".into())
}

// ---- 4 ----

fn mask_and_degradation() -> Check {
    let x = Tensor::<f32>::full(&[3, 16, 16], 1.0);
    let m = apply_mask(&x, &DegradationSpec::default(), &mut ChaCha8Rng::seed_from_u64(5)).map_err(|e| e.to_string())?;
    ensure(m.mask.sum() == 64.0, format!("mask covers {} px", m.mask.sum()))?;
    let params = SyntheticFaceParams { attributes: vec![true; 8], style: FaceStyle::default(), seed: 3 };
    let gt = render_face::<f32>(&params, 64).map_err(|e| e.to_string())?;
    let spec = DegradationSpec { target_side: 16, mask_fraction: 0.25, seed: 41 };
    let a = degrade(&gt, &spec).map_err(|e| e.to_string())?;
    let b = degrade(&gt, &spec).map_err(|e| e.to_string())?;
    ensure(a.mask.sum() == 64.0, "degraded 16×16 mask is not 64 px")?;
    ensure(encode_png(&a.image).map_err(|e| e.to_string())? == encode_png(&b.image).map_err(|e| e.to_string())?, "PNG bytes differ")?;
    Ok("64 px mask, identical PNG bytes".into())
}

// ---- 5 ----

fn step_ratio_and_frozen_classifier() -> Check {
    let data = DatasetConfig { n: 40, gt_side: 32, test_fraction: 0.25, ..DatasetConfig::default() };
    let (train, _) = synthesize_splits(&data).map_err(|e| e.to_string())?;
    let ccfg = ClassifierConfig { input_side: 32, ..ClassifierConfig::default() };
    let mut cls = AuClassifier::new(&ccfg, Some(&train.mean_gt()), 0).map_err(|e| e.to_string())?;
    cls.freeze();
    let before = cls.params.hash();
    let cfg = TrainConfig { batch_size: 1, epochs: 30, base_channels: 4, n_rrmb: 1, ..TrainConfig::default() };
    let run = train_gan(&cfg, &train, None, &cls, GeneratorKind::Igcn, &GanOptions::default()).map_err(|e| e.to_string())?;
    let c = run.state.counters;
    ensure(c.g_steps == 3 * c.d_steps && c.iterations == 300, format!("{c:?}"))?;
    ensure(run.history.iter().all(|r| r.g_steps == 3 * r.d_steps), "ratio broken mid-run")?;
    ensure(cls.params.hash() == before && run.classifier_hash_after == before, "classifier hash changed")?;
    Ok(format!("{} G / {} D steps after {} iterations, hash {}", c.g_steps, c.d_steps, c.iterations, &before[..12]))
}

// ---- 6 ----

struct Desk {
    gt_f1: f64,
    bicubic: MetricsReport,
    default_run: MetricsReport,
    /// `(seed, F1 with λ2 = 0.001, F1 with λ2 = 0)`.
    ablation: Vec<(u64, f64, f64)>,
    pipeline_time: Duration,
    total_time: Duration,
}

fn restored_report(cfg: &TrainConfig, train: &SplitData, test: &SplitData, cls: &AuClassifier<f32>) -> Result<MetricsReport, String> {
    let run = train_gan(cfg, train, None, cls, GeneratorKind::Igcn, &GanOptions::default()).map_err(|e| e.to_string())?;
    let rows = evaluate_pipeline(cls, test, None, Some(&run.state.generator)).map_err(|e| e.to_string())?;
    Ok(rows.into_iter().last().expect("full row"))
}

fn desk_run() -> Result<Desk, String> {
    let start = Instant::now();
    let data = DatasetConfig::default();
    let (train, test) = synthesize_splits(&data).map_err(|e| e.to_string())?;
    ensure(train.len() == 2000 && test.len() == 500, format!("split sizes {} / {}", train.len(), test.len()))?;
    ensure(train.gt.shape()[2] == 64 && train.degraded.shape()[2] == 8, "wrong image sides")?;
    let cfg = TrainConfig::default();
    let mean = train.mean_gt();
    let pre = pretrain_classifier(&cfg, &train, Some(&mean)).map_err(|e| e.to_string())?;
    let cls = pre.classifier;
    let gt_f1 = au_metrics(&cls, &test.gt, &test.labels, 64).map_err(|e| e.to_string())?.mean_f1;
    let rows = evaluate_pipeline(&cls, &test, None, None).map_err(|e| e.to_string())?;
    let bicubic = rows[1].clone();
    let default_run = restored_report(&cfg, &train, &test, &cls)?;
    let pipeline_time = start.elapsed();

    let mut ablation = vec![(cfg.seed, default_run.au.mean_f1, 0.0)];
    for seed in [1, 2] {
        let with = restored_report(&TrainConfig { seed, ..cfg.clone() }, &train, &test, &cls)?;
        ablation.push((seed, with.au.mean_f1, 0.0));
    }
    for entry in ablation.iter_mut() {
        let without = restored_report(&TrainConfig { seed: entry.0, lambda2: 0.0, ..cfg.clone() }, &train, &test, &cls)?;
        entry.2 = without.au.mean_f1;
    }
    Ok(Desk { gt_f1, bicubic, default_run, ablation, pipeline_time, total_time: start.elapsed() })
}

// ---- 7 ----

fn symmetric_features() -> Check {
    let params = SyntheticFaceParams { attributes: vec![false; 8], style: FaceStyle::default(), seed: 8 };
    ensure(params.mirrored().map_err(|e| e.to_string())? == params, "face parameters are not self-mirrored")?;
    let face = render_face::<f64>(&params, 64).map_err(|e| e.to_string())?;
    let face = face.reshape(&[1, 3, 64, 64]).map_err(|e| e.to_string())?;
    let asymmetry = face.max_abs_diff(&flip_w(&face));
    let rng = &mut ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::<f64>::new();
    let block = RrmbBlock::new(&mut store, "r", 3, 64, 64, 3, &AdjacencyConfig::symmetry_only(), None, rng).map_err(|e| e.to_string())?;
    // Kernels mirrored onto themselves so a flip commutes with each convolution.
    for t in store.tensors_mut() {
        if t.shape().len() == 4 {
            let k = t.shape()[3];
            for row in t.data_mut().chunks_mut(k) {
                for j in 0..k / 2 {
                    let avg = 0.5 * (row[j] + row[k - 1 - j]);
                    row[j] = avg;
                    row[k - 1 - j] = avg;
                }
            }
        }
    }
    let mut worst = 0f64;
    for branch in block.branches() {
        let y = branch.apply(&store, &face).map_err(|e| e.to_string())?;
        worst = worst.max(y.max_abs_diff(&flip_w(&y)));
    }
    let y = block.apply(&store, &face).map_err(|e| e.to_string())?;
    worst = worst.max(y.max_abs_diff(&flip_w(&y)));
    ensure(asymmetry < 1e-9, format!("rendered face asymmetry {asymmetry:e}"))?;
    ensure(worst < 1e-5, format!("feature asymmetry {worst:e}"))?;
    Ok(format!("max feature asymmetry {worst:.1e}"))
}

fn main() {
    let mut ledger = Ledger { failures: 0 };
    ledger.run("1", "finite-difference gradients of ops, losses and networks", gradient_checks);
    ledger.run("2a", "single-patch IGCN equals conv + ReLU", single_patch_identity);
    ledger.run("2b", "merge after split is the identity", split_merge_identity);
    ledger.run("2c", "adjacency normalization fixtures", normalization_fixtures);
    ledger.run("2d", "total loss on unit parts", unit_total_loss);
    ledger.run("3a", "PSNR and SSIM against brute force", image_metrics_match_oracle);
    ledger.run("3b", "F1 and accuracy fixtures", au_metric_fixtures);
    ledger.run("4", "mask size and deterministic degradation", mask_and_degradation);
    ledger.run("5", "three G steps per D step, classifier untouched", step_ratio_and_frozen_classifier);
    ledger.run("7", "mirror-symmetric face gives mirror-symmetric IGCN features", symmetric_features);

    let desk = catch_unwind(AssertUnwindSafe(desk_run)).unwrap_or_else(|_| Err("desk run panicked".into()));
    match desk {
        Ok(d) => {
            let (r, b) = (&d.default_run, &d.bicubic);
            ledger.run("6", "desk run within 30 minutes on one CPU", || {
                ensure(d.pipeline_time < Duration::from_secs(1800), format!("{:?}", d.pipeline_time))?;
                Ok(format!(
                    "data + pretraining + training + evaluation {:.0}s; with the ablation runs {:.0}s",
                    d.pipeline_time.as_secs_f64(),
                    d.total_time.as_secs_f64()
                ))
            });
            ledger.run("6a", "restoration beats bicubic by 2 dB PSNR and 0.05 SSIM", || {
                let detail = format!("PSNR {:.3} vs {:.3}, SSIM {:.4} vs {:.4}", r.psnr, b.psnr, r.ssim, b.ssim);
                ensure(r.psnr >= b.psnr + 2.0 && r.ssim >= b.ssim + 0.05, detail.clone())?;
                Ok(detail)
            });
            ledger.run("6b", "AU-consistency term helps F1 on a majority of seeds", || {
                let wins = d.ablation.iter().filter(|(_, with, without)| with >= without).count();
                let detail = d
                    .ablation
                    .iter()
                    .map(|(s, a, b)| format!("seed {s}: {a:.4} vs {b:.4}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                ensure(2 * wins > d.ablation.len(), detail.clone())?;
                Ok(format!("{wins}/3 ({detail})"))
            });
            ledger.run("6c", "restored F1 at least 0.8 × ground-truth F1", || {
                let ratio = r.au.mean_f1 / d.gt_f1;
                let detail = format!("{:.4} / {:.4} = {ratio:.3}", r.au.mean_f1, d.gt_f1);
                ensure(ratio >= 0.8, detail.clone())?;
                Ok(detail)
            });
        }
        Err(e) => {
            for id in ["6", "6a", "6b", "6c"] {
                ledger.run(id, "desk run", || Err(e.clone()));
            }
        }
    }
    println!("{} criteria failed", ledger.failures);
    if ledger.failures > 0 {
        std::process::exit(1);
    }
}
