//! Classifier pretraining, the alternating GAN loop, checkpoints and evaluation metrics.

mod config;
mod evaluate;
mod gan;
mod metrics;
mod pretrain;

pub use config::TrainConfig;
pub use evaluate::{
    bicubic_baseline, evaluate_pipeline, read_report_csv, read_report_json, restore_pngs, write_report_csv,
    write_report_json, MetricsReport, BASELINE, BICUBIC, FULL, GROUND_TRUTH,
};
pub use gan::{
    checkpoint_path, evaluate_generator, iterations_per_epoch, kind_name, load_generator, metrics_log_path,
    restore_batched, train_gan, train_gan_from, EvalRecord, GanOptions, GanRun, GanState, IterationRecord, LogEvent,
    StepCounters,
};
pub use metrics::{
    au_metrics_from_predictions, confusions, label_rows, psnr, psnr_per_image, ssim, ssim_per_image, AuMetrics,
    Confusion, PSNR_CAP, SSIM_C1, SSIM_C2, SSIM_WINDOW,
};
pub use pretrain::{au_metrics, load_classifier, pretrain_classifier, save_classifier, PretrainOutcome};
