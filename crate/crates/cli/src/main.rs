mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use numkbqa::datagen::{
    gen_qa_corpus, gen_qgnd, gen_qind, gen_synthetic_kb, hubs_of, read_pretrain, read_qa, split_pretrain,
    verify_pretrain_labels, write_pretrain, write_qa, PretrainInstance, QaCorpusConfig, QaSplits, SynthConfig,
};
use numkbqa::kb::{load_kb_with_units, KnowledgeBase, Tail, UnitTable};
use numkbqa::train::{
    augmented_questions, evaluate, evaluate_pretrain, finish_stages, pretrain_stages, run_pretrain_ablation, run_sweep,
    sweep_csv, train_full, Corpus, MetricsReport, Model, SweepAxis, Timings, TrainConfig,
};

use config::{check_architecture, ConfigArgs};

const TRIPLES: &str = "triples.tsv";
const RELATIONS: &str = "relations.jsonl";
const UNITS: &str = "units.json";
const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Parser)]
#[command(
    name = "numkbqa",
    version,
    about = "Ordinal-aware KBQA: data generation, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or check a knowledge base directory.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Build pre-training and augmentation datasets.
    #[command(subcommand)]
    Data(DataCommand),
    /// Run one pre-training stage on a model directory.
    #[command(subcommand)]
    Pretrain(PretrainCommand),
    /// Train end to end (or only the final stage with --resume) and report test Hits@1.
    Train(TrainArgs),
    /// Hits@1 of a trained model on a QA split.
    Eval(EvalArgs),
    /// Accuracy of the numerical transformer on held-out pre-training instances.
    EvalPretrain(EvalPretrainArgs),
    /// Retrain across a grid of one hyperparameter.
    Sweep(SweepArgs),
    /// Direct pre-training accuracy with SAM, NPL, NTL or SNE removed.
    Ablate(AblateArgs),
}

#[derive(Subcommand)]
enum KbCommand {
    /// Write a synthetic KB plus templated QA splits.
    Gen(KbGenArgs),
    /// Load a KB directory and print its statistics.
    LoadCheck(KbDir),
}

#[derive(Args)]
struct KbDir {
    /// Directory with triples.tsv, relations.jsonl and optionally units.json and qa_*.jsonl.
    #[arg(long)]
    kb: PathBuf,
}

#[derive(Args)]
struct KbGenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    entities: usize,
    #[arg(long, default_value_t = 0)]
    kb_seed: u64,
    /// Cap on numerical relation types.
    #[arg(long, default_value_t = 10)]
    relations: usize,
    /// Probability that a member holds a value for each numerical relation.
    #[arg(long, default_value_t = 0.8)]
    numeric_fraction: f64,
    /// Ordinal questions per (hub, relation) slot.
    #[arg(long, default_value_t = 2)]
    ordinal_per_slot: usize,
}

#[derive(Subcommand)]
enum DataCommand {
    /// Question-irrelevant instances, split 60/20/20 into qind_{train,val,test}.jsonl.
    Qind(QindArgs),
    /// Question-guided instances from annotated ordinal questions.
    Qgnd(QgndArgs),
    /// Templated ordinal QA pairs over the training hubs.
    Augment(AugmentArgs),
}

#[derive(Args)]
struct QindArgs {
    #[command(flatten)]
    kb: KbDir,
    #[arg(long, default_value_t = 40_000)]
    instances: usize,
    #[arg(long, default_value_t = 2)]
    n_min: usize,
    #[arg(long, default_value_t = 50)]
    n_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to the KB directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QgndArgs {
    #[command(flatten)]
    kb: KbDir,
    /// QA file; defaults to qa_train.jsonl in the KB directory.
    #[arg(long)]
    qa: Option<PathBuf>,
    #[arg(long, default_value_t = 9)]
    distractors: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    kb: KbDir,
    /// Pairs as a fraction of the real training questions.
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    kb: KbDir,
    /// Model directory (per-group checkpoints and manifest.json).
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Subcommand)]
enum PretrainCommand {
    /// Fresh model: question-type classifier, then the basic reasoner.
    Basic(ModelArgs),
    /// Numerical transformer on QIND then QGND; needs `data qind` output.
    Nt(NtArgs),
}

#[derive(Args)]
struct NtArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory with qind_{train,val,test}.jsonl; defaults to the KB directory.
    #[arg(long)]
    qind_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory with qind_{train,val,test}.jsonl; defaults to the KB directory.
    #[arg(long)]
    qind_dir: Option<PathBuf>,
    /// Continue from a model whose pre-training stages already ran.
    #[arg(long)]
    resume: bool,
    /// MetricsReport JSON output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-stage wall-clock JSON output.
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    kb: KbDir,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct EvalPretrainArgs {
    #[command(flatten)]
    kb: KbDir,
    #[arg(long)]
    model: PathBuf,
    /// Pre-training instances (JSON lines); defaults to qind_test.jsonl in the KB directory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    kb: KbDir,
    #[arg(long)]
    qind_dir: Option<PathBuf>,
    /// mu, theta, qind_size or n_numbers.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// MetricsReport JSON holding the curve.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    kb: KbDir,
    #[arg(long)]
    qind_dir: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Kb(KbCommand::Gen(a)) => kb_gen(&a),
        Command::Kb(KbCommand::LoadCheck(a)) => kb_load_check(&a.kb),
        Command::Data(DataCommand::Qind(a)) => data_qind(&a),
        Command::Data(DataCommand::Qgnd(a)) => data_qgnd(&a),
        Command::Data(DataCommand::Augment(a)) => data_augment(&a),
        Command::Pretrain(PretrainCommand::Basic(a)) => pretrain_basic(&a),
        Command::Pretrain(PretrainCommand::Nt(a)) => pretrain_nt(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::EvalPretrain(a) => eval_pretrain(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Ablate(a) => ablate(&a),
    }
}

fn load_kb(dir: &Path) -> Result<KnowledgeBase> {
    let units_path = dir.join(UNITS);
    let units = if units_path.is_file() {
        UnitTable::load(&units_path)?
    } else {
        UnitTable::default()
    };
    load_kb_with_units(&dir.join(TRIPLES), &dir.join(RELATIONS), units)
        .with_context(|| format!("loading the KB in {}", dir.display()))
}

fn load_split(dir: &Path, split: &str) -> Result<Vec<numkbqa::datagen::QaInstance>> {
    let path = dir.join(format!("qa_{split}.jsonl"));
    read_qa(&path).with_context(|| format!("reading {}", path.display()))
}

fn load_splits(kb: &KnowledgeBase, dir: &Path) -> Result<QaSplits> {
    let train = load_split(dir, "train")?;
    Ok(QaSplits {
        train_hubs: hubs_of(kb, &train)?,
        train,
        val: load_split(dir, "val")?,
        test: load_split(dir, "test")?,
    })
}

fn load_qind(kb: &KnowledgeBase, dir: &Path) -> Result<[Vec<PretrainInstance>; 3]> {
    let read = |split: &str| {
        let path = dir.join(format!("qind_{split}.jsonl"));
        read_pretrain(&path, kb).with_context(|| format!("reading {} (run `numkbqa data qind` first)", path.display()))
    };
    Ok([read("train")?, read("val")?, read("test")?])
}

fn load_corpus(kb_dir: &Path, qind_dir: Option<&Path>) -> Result<Corpus> {
    let kb = load_kb(kb_dir)?;
    let qa = load_splits(&kb, kb_dir)?;
    let [qind_train, qind_val, qind_test] = load_qind(&kb, qind_dir.unwrap_or(kb_dir))?;
    Ok(Corpus {
        kb,
        qa,
        qind_train,
        qind_val,
        qind_test,
    })
}

fn write_json(path: &Path, json: &str) -> Result<()> {
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn kb_gen(a: &KbGenArgs) -> Result<()> {
    let kb = gen_synthetic_kb(&SynthConfig {
        seed: a.kb_seed,
        n_entities: a.entities,
        n_relations: a.relations,
        numeric_fraction: a.numeric_fraction,
    })?;
    let qa = gen_qa_corpus(
        &kb,
        &QaCorpusConfig {
            seed: a.kb_seed,
            ordinal_per_slot: a.ordinal_per_slot,
            ..QaCorpusConfig::default()
        },
    )?;
    std::fs::create_dir_all(&a.out)?;
    kb.write_triples(&a.out.join(TRIPLES))?;
    kb.write_relation_meta(&a.out.join(RELATIONS))?;
    kb.units().save(&a.out.join(UNITS))?;
    for (split, items) in SPLITS.iter().zip([&qa.train, &qa.val, &qa.test]) {
        write_qa(&a.out.join(format!("qa_{split}.jsonl")), items)?;
    }
    println!(
        "{} entities, {} triples; QA train/val/test {}/{}/{} -> {}",
        kb.num_entities(),
        kb.triples().len(),
        qa.train.len(),
        qa.val.len(),
        qa.test.len(),
        a.out.display()
    );
    Ok(())
}

fn kb_load_check(dir: &Path) -> Result<()> {
    let kb = load_kb(dir)?;
    let values = kb.triples().iter().filter(|t| matches!(t.tail, Tail::Value(_))).count();
    let numerical = kb.relations().filter(|(_, m)| m.is_numerical).count();
    println!("entities   {}", kb.num_entities());
    println!("relations  {} ({numerical} numerical)", kb.num_relations());
    println!("triples    {} ({values} numeric values)", kb.triples().len());
    for split in SPLITS {
        let path = dir.join(format!("qa_{split}.jsonl"));
        if path.is_file() {
            let qa = read_qa(&path)?;
            for q in &qa {
                numkbqa::datagen::resolve_qa(&kb, q)?;
            }
            let ordinal = qa.iter().filter(|q| q.ordinal).count();
            println!("qa_{split:<6} {} questions ({ordinal} ordinal)", qa.len());
        }
    }
    Ok(())
}

fn data_qind(a: &QindArgs) -> Result<()> {
    let kb = load_kb(&a.kb.kb)?;
    let all = gen_qind(&kb, a.instances, (a.n_min, a.n_max), a.seed)?;
    let mismatches = verify_pretrain_labels(&all)?;
    if mismatches > 0 {
        bail!("{mismatches} QIND labels disagree with the ordinal oracle");
    }
    let out = a.out.as_deref().unwrap_or(&a.kb.kb);
    std::fs::create_dir_all(out)?;
    let (train, val, test) = split_pretrain(&all);
    for (split, items) in SPLITS.iter().zip([&train, &val, &test]) {
        write_pretrain(&out.join(format!("qind_{split}.jsonl")), items)?;
    }
    println!(
        "{} QIND instances (train/val/test {}/{}/{}), labels verified -> {}",
        all.len(),
        train.len(),
        val.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn data_qgnd(a: &QgndArgs) -> Result<()> {
    let kb = load_kb(&a.kb.kb)?;
    let qa_path = a.qa.clone().unwrap_or_else(|| a.kb.kb.join("qa_train.jsonl"));
    let qa = read_qa(&qa_path).with_context(|| format!("reading {}", qa_path.display()))?;
    let (instances, report) = gen_qgnd(&qa, &kb, a.distractors, a.seed)?;
    write_pretrain(&a.out, &instances)?;
    println!(
        "{} QGND instances, {} skipped, {} with a non-extremal gold -> {}",
        report.emitted,
        report.skipped.len(),
        report.non_extremal.len(),
        a.out.display()
    );
    for (id, why) in &report.skipped {
        eprintln!("skipped {id}: {why}");
    }
    Ok(())
}

fn data_augment(a: &AugmentArgs) -> Result<()> {
    let kb = load_kb(&a.kb.kb)?;
    let splits = load_splits(&kb, &a.kb.kb)?;
    let cfg = TrainConfig {
        theta: a.theta,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let qa = augmented_questions(&kb, &cfg, &splits.train, &splits.train_hubs)?;
    for q in &qa {
        let (_, answers) = numkbqa::datagen::resolve_qa(&kb, q)?;
        let oracle_ok = q.relation.as_ref().and_then(|r| kb.relation_id(r)).is_some() && !answers.is_empty();
        if !oracle_ok {
            bail!("augmented question {} has no resolvable answer", q.id);
        }
    }
    write_qa(&a.out, &qa)?;
    println!(
        "{} augmented pairs over {} training hubs -> {}",
        qa.len(),
        splits.train_hubs.len(),
        a.out.display()
    );
    Ok(())
}

fn pretrain_basic(a: &ModelArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let kb = load_kb(&a.kb.kb)?;
    let splits = load_splits(&kb, &a.kb.kb)?;
    let mut model = Model::init(&kb, &cfg)?;
    let cls_acc = model.train_classifier(&splits.train)?;
    let train = model.prepare_all(&kb, &splits.train)?;
    let report = model.pretrain_basic(&train)?;
    model.save(&a.model)?;
    println!(
        "classifier train accuracy {cls_acc:.3}; basic reasoner {} usable of {} questions, final loss {:.4}, train Hits@1 {:.3} -> {}",
        report.coverage.usable,
        report.coverage.total,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        report.train_hits1,
        a.model.display()
    );
    Ok(())
}

/// Loads a saved model and layers command-line overrides on its config.
fn load_model(kb: &KnowledgeBase, a: &ModelArgs) -> Result<Model> {
    let mut model = Model::load(kb, &a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let cfg = a.config.apply_to(model.config.clone())?;
    check_architecture(&model.config, &cfg)?;
    model.config = cfg;
    Ok(model)
}

fn pretrain_nt(a: &NtArgs) -> Result<()> {
    let kb = load_kb(&a.model.kb.kb)?;
    let splits = load_splits(&kb, &a.model.kb.kb)?;
    let [train, val, test] = load_qind(&kb, a.qind_dir.as_deref().unwrap_or(&a.model.kb.kb))?;
    let mut model = load_model(&kb, &a.model)?;
    let (report, qgnd) = model.pretrain_numerical(&kb, &train, &val, &splits.train, &splits.val)?;
    model.save(&a.model.model)?;
    for s in &report.stages {
        println!(
            "{}: {} instances, best epoch {:?}, val accuracy {:?}",
            s.stage, s.instances, s.best_epoch, s.val_accuracy
        );
    }
    println!("QGND: {} instances, {} skipped", qgnd.emitted, qgnd.skipped.len());
    println!(
        "held-out QIND accuracy {:.4}",
        evaluate_pretrain(&model.params, &model.nt, &model.featurizer, &test)?
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    if a.model.config.seed.is_none() {
        bail!("`train` needs an explicit --seed");
    }
    let kb_dir = &a.model.kb.kb;
    let (model, report, timings) = if a.resume {
        let kb = load_kb(kb_dir)?;
        let splits = load_splits(&kb, kb_dir)?;
        let mut model = load_model(&kb, &a.model)?;
        let mut timings = Timings::default();
        let mut train = timings.time("prepare", || model.prepare_all(&kb, &splits.train))?;
        let val = model.prepare_all(&kb, &splits.val)?;
        let test = model.prepare_all(&kb, &splits.test)?;
        let mut augmented = 0;
        if model.config.augment && model.config.numerical {
            let qas = augmented_questions(&kb, &model.config, &splits.train, &splits.train_hubs)?;
            augmented = qas.len();
            train.extend(model.prepare_all(&kb, &qas)?);
        }
        let full = timings.time("train", || train_full(&mut model, &kb, &train, &val))?;
        let eval = timings.time("evaluate", || evaluate(&model, &kb, &test))?;
        let mut report = MetricsReport {
            config_hash: model.config.hash(),
            hits_at_1_all: eval.hits_at_1_all,
            hits_at_1_ordinal: eval.hits_at_1_ordinal,
            hits_at_1_non_ordinal: eval.hits_at_1_non_ordinal,
            test: eval,
            ..MetricsReport::default()
        };
        report.coverage.augmented = augmented;
        report.training.full = full;
        (model, report, timings)
    } else {
        let cfg = a.model.config.resolve()?;
        let corpus = load_corpus(kb_dir, a.qind_dir.as_deref())?;
        let mut timings = Timings::default();
        let stage = pretrain_stages(&corpus, &cfg, &mut timings)?;
        let (model, report) = finish_stages(&corpus, stage, &cfg, &mut timings)?;
        (model, report, timings)
    };
    model.save(&a.model.model)?;
    print_metrics(&report);
    eprintln!("total {:.1}s", timings.total());
    if let Some(path) = &a.report {
        write_json(path, &report.to_json())?;
    }
    if let Some(path) = &a.timings {
        write_json(path, &serde_json::to_string_pretty(&timings)?)?;
    }
    Ok(())
}

fn print_metrics(r: &MetricsReport) {
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("hits@1 all          {:.4}", r.hits_at_1_all);
    println!("hits@1 ordinal      {}", show(r.hits_at_1_ordinal));
    println!("hits@1 non-ordinal  {}", show(r.hits_at_1_non_ordinal));
    println!("pretrain accuracy   {}", show(r.pretrain_accuracy));
}

fn eval(a: &EvalArgs) -> Result<()> {
    if !SPLITS.contains(&a.split.as_str()) {
        bail!("unknown split `{}` (train, val, test)", a.split);
    }
    let kb = load_kb(&a.kb.kb)?;
    let model = Model::load(&kb, &a.model).with_context(|| format!("loading {}", a.model.display()))?;
    model.require(numkbqa::train::STAGE_TRAIN)?;
    let qa = load_split(&a.kb.kb, &a.split)?;
    let report = evaluate(&model, &kb, &model.prepare_all(&kb, &qa)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn eval_pretrain(a: &EvalPretrainArgs) -> Result<()> {
    let kb = load_kb(&a.kb.kb)?;
    let model = Model::load(&kb, &a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let path = a.data.clone().unwrap_or_else(|| a.kb.kb.join("qind_test.jsonl"));
    let data = read_pretrain(&path, &kb).with_context(|| format!("reading {}", path.display()))?;
    let acc = evaluate_pretrain(&model.params, &model.nt, &model.featurizer, &data)?;
    println!("{acc:.4} over {} instances", data.len());
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let corpus = load_corpus(&a.kb.kb, a.qind_dir.as_deref())?;
    let result = run_sweep(&corpus, a.axis, &a.grid, &cfg)?;
    let csv = sweep_csv(&result.rows);
    print!("{csv}");
    if let Some(path) = &a.csv {
        write_json(path, &csv)?;
    }
    if let Some(path) = &a.report {
        let report = MetricsReport {
            config_hash: cfg.hash(),
            curves: vec![result.curve],
            ..MetricsReport::default()
        };
        write_json(path, &report.to_json())?;
    }
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let kb = load_kb(&a.kb.kb)?;
    let [train, val, test] = load_qind(&kb, a.qind_dir.as_deref().unwrap_or(&a.kb.kb))?;
    let rows = run_pretrain_ablation(&train, &val, &test, &cfg)?;
    let full = rows[0].accuracy;
    for r in &rows {
        println!(
            "{:<6} accuracy {:.4}  delta {:+.1} pts  ({:.1}s)",
            r.variant,
            r.accuracy,
            100.0 * (r.accuracy - full),
            r.seconds
        );
    }
    if let Some(path) = &a.report {
        write_json(path, &serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}
