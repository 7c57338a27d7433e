//! Pre-training losses, the training pipeline, evaluation and sweeps.

mod config;
mod losses;
mod pipeline;
mod pretrain;
mod sweep;

pub use config::TrainConfig;
pub use losses::{npl_loss, npl_probabilities, ntl_loss, sample_triplets, TripletSample, DEFAULT_TRIPLETS};
pub use pipeline::{
    augmented_questions, evaluate, finish_stages, pretrain_stages, producing_stage, run_pipeline, train_full, Corpus,
    CoverageCounts, Curve, CurvePoint, EvalReport, Example, FullTrainReport, MetricsReport, Model, Pretrained, Timings,
    TrainingCurves, STAGE_BASIC, STAGE_CLASSIFIER, STAGE_NT, STAGE_TRAIN,
};
pub use pretrain::{
    evaluate_pretrain, instance_loss, pretrain_nt, pretrain_probabilities, PretrainReport, StageReport,
};
pub use sweep::{
    ablation_variants, pretrain_only, run_pretrain_ablation, run_sweep, sweep_csv, AblationRow, SweepAxis, SweepResult,
    SweepRow,
};
