use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use igcn_core::diagnostics::gradient_suite;
use igcn_core::models::GeneratorKind;
use igcn_core::synthdata::{generate_dataset, Dataset, DatasetConfig};
use igcn_core::train_eval::{
    checkpoint_path, evaluate_pipeline, load_classifier, load_generator, metrics_log_path, pretrain_classifier,
    restore_pngs, save_classifier, train_gan, write_report_csv, write_report_json, GanOptions, TrainConfig,
};

const CLASSIFIER_FILE: &str = "classifier.ckpt";
const REPORT_CSV: &str = "report.csv";
const REPORT_JSON: &str = "report.json";

/// Facial-expression restoration with patch-graph convolutions and an AU-supervised GAN.
#[derive(Debug, Parser)]
#[command(name = "igcn", version)]
struct Cli {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic face corpus into `data_dir`.
    GenData(GenDataArgs),
    /// Pretrain the AU classifier on ground-truth images.
    PretrainCls(Overrides),
    /// Train generator and discriminator against the frozen classifier.
    Train(TrainArgs),
    /// Restore every PNG in a directory with a trained generator.
    Restore(RestoreArgs),
    /// Write the evaluation report for the test split.
    Eval(EvalArgs),
    /// Run finite-difference gradient checks on every op, loss and network.
    Gradcheck(GradcheckArgs),
}

/// One flag per run-config key.
#[derive(Debug, Clone, Default, Args)]
#[command(rename_all = "snake_case")]
struct Overrides {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    g_steps_per_d_step: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    n_au: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    n_rrmb: Option<usize>,
    #[arg(long)]
    sim_threshold: Option<f64>,
    #[arg(long)]
    cls_epochs: Option<usize>,
    #[arg(long)]
    cls_lr: Option<f64>,
    #[arg(long)]
    cls_batch_size: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
}

macro_rules! apply {
    ($cfg:expr, $o:expr, $($field:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl Overrides {
    fn resolve(&self, config: Option<&Path>) -> Result<TrainConfig> {
        let mut cfg = match config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        apply!(
            cfg, self, lr, batch_size, kernel_size, g_steps_per_d_step, lambda1, lambda2, lambda3, epochs, seed,
            data_dir, out_dir, n_au, base_channels, n_rrmb, sim_threshold, cls_epochs, cls_lr, cls_batch_size,
            val_fraction, eval_samples, eval_every
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
struct GenDataArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Number of samples, train and test together.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    gt_side: Option<usize>,
    #[arg(long)]
    input_side: Option<usize>,
    #[arg(long)]
    mask_fraction: Option<f64>,
    #[arg(long)]
    train_subjects: Option<usize>,
    #[arg(long)]
    test_subjects: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Full,
    Baseline,
    Both,
}

impl Which {
    fn kinds(self) -> Vec<GeneratorKind> {
        match self {
            Which::Full => vec![GeneratorKind::Igcn],
            Which::Baseline => vec![GeneratorKind::Residual],
            Which::Both => vec![GeneratorKind::Igcn, GeneratorKind::Residual],
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Generator bodies to train.
    #[arg(long, value_enum, default_value_t = Which::Full)]
    generator: Which,
    /// Classifier checkpoint; defaults to `<out_dir>/classifier.ckpt`.
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Continue from an existing checkpoint in `out_dir`.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct RestoreArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Directory of degraded PNGs.
    #[arg(long)]
    input: PathBuf,
    /// Where restored PNGs are written; defaults to `input`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Generator checkpoint; defaults to the full model in `out_dir`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Full-model checkpoint; defaults to the one in `out_dir`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Baseline checkpoint; its row is skipped when the file is absent.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Seeds to check; each runs the whole suite.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} not found at {}", path.display());
    }
    Ok(())
}

fn load_data(cfg: &TrainConfig) -> Result<Dataset> {
    Dataset::load(&cfg.data_dir).with_context(|| format!("loading corpus from {}", cfg.data_dir.display()))
}

fn gen_data(args: &GenDataArgs, config: Option<&Path>) -> Result<()> {
    let cfg = args.overrides.resolve(config)?;
    let d = DatasetConfig::default();
    let data = DatasetConfig {
        n: args.n.unwrap_or(d.n),
        test_fraction: args.test_fraction.unwrap_or(d.test_fraction),
        gt_side: args.gt_side.unwrap_or(d.gt_side),
        input_side: args.input_side.unwrap_or(d.input_side),
        mask_fraction: args.mask_fraction.unwrap_or(d.mask_fraction),
        train_subjects: args.train_subjects.unwrap_or(d.train_subjects),
        test_subjects: args.test_subjects.unwrap_or(d.test_subjects),
        n_au: cfg.n_au,
        seed: cfg.seed,
        au_probabilities: None,
    };
    let records = generate_dataset(&data, &cfg.data_dir)?;
    println!("wrote {} samples to {}", records.len(), cfg.data_dir.display());
    Ok(())
}

fn pretrain(overrides: &Overrides, config: Option<&Path>) -> Result<()> {
    let cfg = overrides.resolve(config)?;
    let data = load_data(&cfg)?;
    let mean = data.train.mean_gt();
    let outcome = pretrain_classifier(&cfg, &data.train, Some(&mean))?;
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(CLASSIFIER_FILE);
    save_classifier(&path, &outcome)?;
    println!(
        "classifier saved to {} (best epoch {}, validation F1 {:.4})",
        path.display(),
        outcome.best_epoch,
        outcome.best_val_f1
    );
    Ok(())
}

fn train(args: &TrainArgs, config: Option<&Path>) -> Result<()> {
    let cfg = args.overrides.resolve(config)?;
    let cls_path = args.classifier.clone().unwrap_or_else(|| cfg.out_dir.join(CLASSIFIER_FILE));
    require(&cls_path, "classifier checkpoint")?;
    let (classifier, _) = load_classifier(&cls_path)?;
    let data = load_data(&cfg)?;
    let options = GanOptions { out_dir: Some(cfg.out_dir.clone()), resume: args.resume };
    for kind in args.generator.kinds() {
        let run = train_gan(&cfg, &data.train, Some(&data.test), &classifier, kind, &options)?;
        let c = run.state.counters;
        println!(
            "{kind:?}: {} iterations, {} generator / {} discriminator steps; checkpoint {}, log {}",
            c.iterations,
            c.g_steps,
            c.d_steps,
            checkpoint_path(&cfg.out_dir, kind).display(),
            metrics_log_path(&cfg.out_dir, kind).display()
        );
        if let Some(e) = run.evals.last() {
            println!("  held-out PSNR {:.3} dB, SSIM {:.4}, F1 {:.4}", e.psnr, e.ssim, e.f1);
        }
    }
    Ok(())
}

fn restore(args: &RestoreArgs, config: Option<&Path>) -> Result<()> {
    let cfg = args.overrides.resolve(config)?;
    let ckpt = args.checkpoint.clone().unwrap_or_else(|| checkpoint_path(&cfg.out_dir, GeneratorKind::Igcn));
    require(&ckpt, "generator checkpoint")?;
    if !args.input.is_dir() {
        bail!("input directory not found at {}", args.input.display());
    }
    let generator = load_generator(&ckpt)?;
    let out = args.output.as_deref().unwrap_or(&args.input);
    let written = restore_pngs(&generator, &args.input, out)?;
    println!("restored {} images into {}", written.len(), out.display());
    Ok(())
}

fn eval(args: &EvalArgs, config: Option<&Path>) -> Result<()> {
    let cfg = args.overrides.resolve(config)?;
    let cls_path = args.classifier.clone().unwrap_or_else(|| cfg.out_dir.join(CLASSIFIER_FILE));
    let full_path = args.checkpoint.clone().unwrap_or_else(|| checkpoint_path(&cfg.out_dir, GeneratorKind::Igcn));
    let base_path = args.baseline.clone().unwrap_or_else(|| checkpoint_path(&cfg.out_dir, GeneratorKind::Residual));
    require(&cls_path, "classifier checkpoint")?;
    require(&full_path, "generator checkpoint")?;
    let (classifier, _) = load_classifier(&cls_path)?;
    let full = load_generator(&full_path)?;
    let baseline = if base_path.is_file() { Some(load_generator(&base_path)?) } else { None };
    let data = load_data(&cfg)?;
    let rows = evaluate_pipeline(&classifier, &data.test, baseline.as_ref(), Some(&full))?;
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let csv = cfg.out_dir.join(REPORT_CSV);
    write_report_csv(&csv, &rows)?;
    write_report_json(&cfg.out_dir.join(REPORT_JSON), &rows)?;
    println!("{:<14} {:>8} {:>8} {:>8} {:>8}", "method", "F1", "acc", "PSNR", "SSIM");
    for r in &rows {
        println!("{:<14} {:>8.4} {:>8.4} {:>8.3} {:>8.4}", r.method, r.au.mean_f1, r.au.mean_accuracy, r.psnr, r.ssim);
    }
    println!("report written to {}", csv.display());
    Ok(())
}

/// Prints the report table; returns whether every check passed.
fn gradcheck(args: &GradcheckArgs) -> Result<bool> {
    println!("{:<28} {:>5} {:>12} {:>12}  result", "check", "seed", "max abs", "max rel");
    let mut all = true;
    for &seed in &args.seeds {
        for r in gradient_suite(seed)? {
            all &= r.passed;
            let verdict = match (&r.error, r.passed) {
                (Some(e), _) => format!("ERROR {e}"),
                (None, true) => "PASS".into(),
                (None, false) => "FAIL".into(),
            };
            println!("{:<28} {:>5} {:>12.3e} {:>12.3e}  {verdict}", r.op_name, seed, r.max_abs_err, r.max_rel_err);
        }
    }
    Ok(all)
}

fn run(cli: &Cli) -> Result<bool> {
    let config = cli.config.as_deref();
    if let Some(path) = config {
        require(path, "config file")?;
    }
    match &cli.command {
        Command::GenData(a) => gen_data(a, config)?,
        Command::PretrainCls(o) => pretrain(o, config)?,
        Command::Train(a) => train(a, config)?,
        Command::Restore(a) => restore(a, config)?,
        Command::Eval(a) => eval(a, config)?,
        Command::Gradcheck(a) => return gradcheck(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some gradient checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
