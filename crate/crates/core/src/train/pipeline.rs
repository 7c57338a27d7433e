//! The end-to-end pipeline: classifier, basic pre-training, transformer
//! pre-training, joint training of Φ and Ψ with Θ frozen, and evaluation.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::pretrain::{evaluate_pretrain, pretrain_nt, PretrainReport};
use crate::datagen::{gen_augmented, gen_qgnd, resolve_qa, PretrainInstance, QaInstance, QaSplits, QgndReport};
use crate::encoders::{ClassifierTrainConfig, FrozenEncoder, QuestionTypeClassifier};
use crate::error::{Error, Result};
use crate::fusion::{comprehensive_forward, number_batches, prune_entities, select_numerical_relations, Fusion};
use crate::kb::{EntityId, KnowledgeBase, RelationId};
use crate::nn::checkpoint::{load_group, save_group};
use crate::nn::{optimize_step, Gradients, OptimizerState, ParamGroup, ParameterSet, Tape};
use crate::numerical::{NtFeaturizer, NumericalTransformer};
use crate::reasoner::{
    hits_at_1, nsm_forward, predict_basic, prepare_question, pretrain_basic, BasicTrainReport, Nsm, PreparedQuestion,
    RelationTable,
};

pub const STAGE_CLASSIFIER: &str = "classifier";
pub const STAGE_BASIC: &str = "pretrain basic";
pub const STAGE_NT: &str = "pretrain nt";
pub const STAGE_TRAIN: &str = "train";

/// All trained and frozen pieces of the model.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub encoder: FrozenEncoder,
    pub featurizer: NtFeaturizer,
    pub relations: RelationTable,
    /// Φ, Θ and Ψ.
    pub params: ParameterSet,
    pub classifier: QuestionTypeClassifier,
    pub nsm: Nsm,
    pub nt: NumericalTransformer,
    pub fusion: Fusion,
    /// Stages already run on this model, in order.
    pub completed: Vec<String>,
}

impl Model {
    pub fn init(kb: &KnowledgeBase, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let encoder = FrozenEncoder::new(config.encoder_config())?;
        let featurizer = NtFeaturizer::new(config.encoder_config(), config.sne_mode())?;
        let relations = RelationTable::build(kb, &encoder)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParameterSet::new();
        let nsm = Nsm::init(&mut params, config.nsm_config(), &mut rng)?;
        let nt = NumericalTransformer::init(
            &mut params,
            config.nt_config(),
            config.d_enc,
            featurizer.numbers.feature_dim(),
            &mut rng,
        )?;
        let fusion = Fusion::init(&mut params, config.d_enc, config.d_h, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            classifier: QuestionTypeClassifier::new(config.d_enc),
            encoder,
            featurizer,
            relations,
            params,
            nsm,
            nt,
            fusion,
            completed: Vec::new(),
        })
    }

    fn mark(&mut self, stage: &str) {
        if !self.completed.iter().any(|s| s == stage) {
            self.completed.push(stage.to_string());
        }
    }

    pub fn has_completed(&self, stage: &str) -> bool {
        self.completed.iter().any(|s| s == stage)
    }

    /// Fails with a pipeline error naming `stage` when it has not run.
    pub fn require(&self, stage: &str) -> Result<()> {
        if self.has_completed(stage) {
            Ok(())
        } else {
            Err(Error::Pipeline {
                stage: stage.to_string(),
                msg: "this stage has not been run on the model".into(),
            })
        }
    }

    /// Fits the question-type classifier on ordinal labels of real training questions;
    /// returns its training accuracy.
    pub fn train_classifier(&mut self, qa_train: &[QaInstance]) -> Result<f64> {
        let examples: Vec<(String, bool)> = qa_train.iter().map(|q| (q.question.clone(), q.ordinal)).collect();
        let acc = self.classifier.train(
            &self.encoder,
            &examples,
            &ClassifierTrainConfig {
                seed: self.config.seed,
                ..ClassifierTrainConfig::default()
            },
        )?;
        self.mark(STAGE_CLASSIFIER);
        Ok(acc)
    }

    /// Trains Φ with the basic reasoner's own loss.
    pub fn pretrain_basic(&mut self, train: &[Example]) -> Result<BasicTrainReport> {
        let questions: Vec<PreparedQuestion> = train.iter().map(|e| e.question.clone()).collect();
        let report = pretrain_basic(&self.nsm, &mut self.params, &questions, &self.config.basic_train())?;
        self.mark(STAGE_BASIC);
        Ok(report)
    }

    /// Trains Θ on QIND and then on QGND built from the annotated ordinal questions.
    pub fn pretrain_numerical(
        &mut self,
        kb: &KnowledgeBase,
        qind_train: &[PretrainInstance],
        qind_val: &[PretrainInstance],
        qa_train: &[QaInstance],
        qa_val: &[QaInstance],
    ) -> Result<(PretrainReport, QgndReport)> {
        let config = &self.config;
        let (qgnd, qgnd_report) = if config.qgnd {
            gen_qgnd(qa_train, kb, config.distractors, config.seed)?
        } else {
            Default::default()
        };
        let qgnd_val = if config.qgnd {
            gen_qgnd(qa_val, kb, config.distractors, config.seed ^ 1)?.0
        } else {
            Vec::new()
        };
        let report = pretrain_nt(
            &mut self.params,
            &self.nt,
            &self.featurizer,
            qind_train,
            &qgnd,
            qind_val,
            &qgnd_val,
            config,
        )?;
        self.mark(STAGE_NT);
        Ok((report, qgnd_report))
    }

    /// Writes one checkpoint per group plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut groups = Vec::new();
        for g in ParamGroup::ALL {
            let file = format!("{}.nkbq", g.tag());
            let (set, hash) = if g == ParamGroup::Classifier {
                (self.classifier.params(), self.classifier.params().group_hash(g))
            } else {
                (&self.params, self.params.group_hash(g))
            };
            save_group(set, g, &dir.join(&file))?;
            groups.push(ManifestEntry {
                group: g.tag().to_string(),
                file,
                hash,
            });
        }
        let manifest = Manifest {
            config_hash: self.config.hash(),
            config: self.config.to_toml(),
            groups,
            completed: self.completed.clone(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Rebuilds a model from [`Model::save`] output; the config comes from the manifest.
    pub fn load(kb: &KnowledgeBase, dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let config = TrainConfig::from_toml(&manifest.config)?;
        if config.hash() != manifest.config_hash {
            return Err(Error::Checkpoint(
                "manifest config hash does not match its config".into(),
            ));
        }
        let mut model = Self::init(kb, &config)?;
        let mut cls = model.classifier.params().clone();
        for g in ParamGroup::ALL {
            let present = manifest
                .groups
                .iter()
                .any(|e| e.group == g.tag() && dir.join(&e.file).is_file());
            if !present {
                return Err(Error::Pipeline {
                    stage: producing_stage(g).into(),
                    msg: format!("no {g} checkpoint in {}", dir.display()),
                });
            }
        }
        for entry in &manifest.groups {
            let path = dir.join(&entry.file);
            let group = if entry.group == ParamGroup::Classifier.tag() {
                load_group(&mut cls, &path)?
            } else {
                load_group(&mut model.params, &path)?
            };
            let got = if group == ParamGroup::Classifier {
                cls.group_hash(group)
            } else {
                model.params.group_hash(group)
            };
            if got != entry.hash || group.tag() != entry.group {
                return Err(Error::Checkpoint(format!("{} does not match the manifest", entry.file)));
            }
        }
        if manifest.completed.iter().any(|s| s == STAGE_CLASSIFIER) {
            model.classifier = QuestionTypeClassifier::from_params(cls)?;
        }
        model.completed = manifest.completed;
        Ok(model)
    }

    /// Retrieval, encoding, ordinal probability and ℛ_q for one question.
    pub fn prepare(&self, kb: &KnowledgeBase, qa: &QaInstance) -> Result<Example> {
        let (topics, answers) = resolve_qa(kb, qa)?;
        let question = prepare_question(
            kb,
            &self.encoder,
            &self.relations,
            &qa.question,
            &topics,
            &answers,
            &self.config.retrieval(),
        )?;
        let p_ordinal = if self.classifier.is_trained() {
            self.classifier.probability(&self.encoder, &qa.question)?
        } else {
            0.0
        };
        let relations = select_numerical_relations(
            kb,
            &self.relations,
            &question.subgraph,
            &question.encoding.pooled,
            self.config.k,
        );
        Ok(Example {
            id: qa.id.clone(),
            ordinal: qa.ordinal,
            question,
            p_ordinal,
            relations,
        })
    }

    pub fn prepare_all(&self, kb: &KnowledgeBase, qas: &[QaInstance]) -> Result<Vec<Example>> {
        qas.iter().map(|qa| self.prepare(kb, qa)).collect()
    }

    /// Loss and gradients of per-entity BCE through the mixture; Θ and the classifier stay fixed.
    pub fn example_loss(&self, kb: &KnowledgeBase, ex: &Example) -> Result<(f64, Gradients)> {
        let mut tape = Tape::with_frozen(&self.params, &[ParamGroup::Numerical, ParamGroup::Classifier]);
        let (p, _) = self.forward(kb, &mut tape, ex)?;
        let loss = tape.bce(p, &ex.question.answer_targets());
        Ok((tape.scalar(loss), tape.backward(loss)))
    }

    fn forward(&self, kb: &KnowledgeBase, tape: &mut Tape, ex: &Example) -> Result<(crate::nn::Var, bool)> {
        let out = nsm_forward(&self.nsm, tape, &ex.question)?;
        let p_basic = predict_basic(&self.nsm, tape, out.entities);
        if !self.config.numerical {
            return Ok((p_basic, true));
        }
        let probs = tape.value(p_basic).data().to_vec();
        let candidates = prune_entities(&probs, self.config.mu);
        let batches = if candidates.is_empty() || ex.relations.is_empty() {
            Vec::new()
        } else {
            number_batches(
                kb,
                &self.params,
                &self.nt,
                &self.featurizer,
                &ex.question,
                &ex.relations,
                &candidates,
                &probs,
                self.config.n_max,
            )?
        };
        let out = comprehensive_forward(
            &self.fusion,
            tape,
            &self.relations,
            &ex.question.encoding.pooled,
            out.entities,
            p_basic,
            &batches,
            &candidates,
            ex.p_ordinal,
        )?;
        Ok((out.probabilities, out.fallback))
    }

    /// Final per-entity probabilities and whether the question fell back to the basic prediction.
    pub fn predict(&self, kb: &KnowledgeBase, ex: &Example) -> Result<(Vec<f64>, bool)> {
        let mut tape = Tape::with_frozen(&self.params, &ParamGroup::ALL);
        let (p, fallback) = self.forward(kb, &mut tape, ex)?;
        Ok((tape.value(p).data().to_vec(), fallback))
    }

    /// Best entity for a question, by name; ties go to the lowest entity id.
    pub fn answer(&self, kb: &KnowledgeBase, ex: &Example) -> Result<Option<String>> {
        let (p, _) = self.predict(kb, ex)?;
        Ok(crate::reasoner::argmax_lowest(&p).map(|i| kb.entity_name(ex.question.subgraph.entities[i]).to_string()))
    }
}

/// The pipeline stage that writes a group's checkpoint.
pub fn producing_stage(group: ParamGroup) -> &'static str {
    match group {
        ParamGroup::Basic => STAGE_BASIC,
        ParamGroup::Numerical => STAGE_NT,
        ParamGroup::Comprehensive => STAGE_TRAIN,
        ParamGroup::Classifier => STAGE_CLASSIFIER,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    group: String,
    file: String,
    hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    config: String,
    groups: Vec<ManifestEntry>,
    #[serde(default)]
    completed: Vec<String>,
}

/// A question with its retrieval and fixed features.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub ordinal: bool,
    pub question: PreparedQuestion,
    pub p_ordinal: f64,
    /// Selected numerical relations ℛ_q.
    pub relations: Vec<RelationId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FullTrainReport {
    pub examples: usize,
    pub epoch_losses: Vec<f64>,
    pub val_hits_at_1: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub theta_hash_before: String,
    pub theta_hash_after: String,
}

/// Trains Φ and Ψ through the mixture on `train`, keeping the epoch with the best validation Hits@1.
///
/// Examples whose answers fell outside the subgraph carry no signal and are skipped.
pub fn train_full(
    model: &mut Model,
    kb: &KnowledgeBase,
    train: &[Example],
    val: &[Example],
) -> Result<FullTrainReport> {
    let config = model.config.clone();
    model.require(STAGE_CLASSIFIER)?;
    model.require(STAGE_BASIC)?;
    if config.numerical && config.pretrain {
        model.require(STAGE_NT)?;
    }
    let usable: Vec<&Example> = train.iter().filter(|e| !e.question.answers.is_empty()).collect();
    if usable.is_empty() {
        return Err(Error::Pipeline {
            stage: STAGE_TRAIN.into(),
            msg: "no training question has an answer inside its subgraph".into(),
        });
    }
    let mut report = FullTrainReport {
        examples: usable.len(),
        theta_hash_before: model.params.group_hash(ParamGroup::Numerical),
        ..FullTrainReport::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5452);
    let mut opt =
        OptimizerState::adam(config.train_learning_rate).with_frozen(&[ParamGroup::Numerical, ParamGroup::Classifier]);
    if config.clip_norm > 0.0 {
        opt = opt.with_clip_norm(config.clip_norm);
    }
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut best: Option<(f64, ParameterSet)> = None;
    let mut since_best = 0;
    for epoch in 0..config.train_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.train_batch) {
            let mut grads = Gradients::new();
            for &i in chunk {
                let (l, g) = model.example_loss(kb, usable[i])?;
                total += l;
                grads.merge(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            optimize_step(&mut model.params, &grads, &mut opt)?;
        }
        report.epoch_losses.push(total / usable.len() as f64);
        if val.is_empty() {
            continue;
        }
        let acc = evaluate(model, kb, val)?.hits_at_1_all;
        report.val_hits_at_1.push(acc);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model.params.clone()));
            report.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        for g in [ParamGroup::Basic, ParamGroup::Comprehensive] {
            model.params.copy_group_from(&snapshot, g)?;
        }
    }
    report.theta_hash_after = model.params.group_hash(ParamGroup::Numerical);
    if report.theta_hash_after != report.theta_hash_before {
        return Err(Error::Pipeline {
            stage: STAGE_TRAIN.into(),
            msg: "the numerical transformer changed during training".into(),
        });
    }
    model.mark(STAGE_TRAIN);
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub questions: usize,
    pub ordinal_questions: usize,
    /// Questions with at least one gold answer inside the retrieved subgraph.
    pub answerable: usize,
    pub fallbacks: usize,
    pub hits_at_1_all: f64,
    pub hits_at_1_ordinal: Option<f64>,
    pub hits_at_1_non_ordinal: Option<f64>,
}

fn rate(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

/// Hits@1 over all questions and over the ordinal and non-ordinal subsets.
pub fn evaluate(model: &Model, kb: &KnowledgeBase, examples: &[Example]) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::data("evaluation set is empty"));
    }
    let mut r = EvalReport {
        questions: examples.len(),
        ..EvalReport::default()
    };
    let (mut hits, mut hits_ord, mut hits_non) = (0, 0, 0);
    for ex in examples {
        let (p, fallback) = model.predict(kb, ex)?;
        let hit = hits_at_1(&p, &ex.question.answers);
        r.fallbacks += usize::from(fallback && model.config.numerical);
        r.answerable += usize::from(!ex.question.answers.is_empty());
        hits += usize::from(hit);
        if ex.ordinal {
            r.ordinal_questions += 1;
            hits_ord += usize::from(hit);
        } else {
            hits_non += usize::from(hit);
        }
    }
    r.hits_at_1_all = hits as f64 / examples.len() as f64;
    r.hits_at_1_ordinal = rate(hits_ord, r.ordinal_questions);
    r.hits_at_1_non_ordinal = rate(hits_non, examples.len() - r.ordinal_questions);
    Ok(r)
}

/// Inputs of one pipeline run.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub kb: KnowledgeBase,
    pub qa: QaSplits,
    pub qind_train: Vec<PretrainInstance>,
    pub qind_val: Vec<PretrainInstance>,
    pub qind_test: Vec<PretrainInstance>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub train_questions: usize,
    pub train_answerable: usize,
    pub augmented: usize,
    pub val_questions: usize,
    pub test_questions: usize,
    pub test_answerable: usize,
    pub qgnd: QgndReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub metric: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub axis: String,
    pub metric: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub classifier_accuracy: Option<f64>,
    pub basic_losses: Vec<f64>,
    pub pretrain: PretrainReport,
    pub full: FullTrainReport,
}

/// Everything a run reports, free of wall-clock data so equal seeds give equal bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_hash: String,
    pub hits_at_1_all: f64,
    pub hits_at_1_ordinal: Option<f64>,
    pub hits_at_1_non_ordinal: Option<f64>,
    pub pretrain_accuracy: Option<f64>,
    pub test: EvalReport,
    pub coverage: CoverageCounts,
    pub curves: Vec<Curve>,
    pub training: TrainingCurves,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Wall-clock seconds per stage, kept out of [`MetricsReport`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| match e {
            e @ Error::Pipeline { .. } => e,
            e => Error::Pipeline {
                stage: stage.to_string(),
                msg: e.to_string(),
            },
        })?;
        self.stages.push((stage.to_string(), t.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|(_, s)| s).sum()
    }
}

/// State after every stage that does not depend on μ or θ.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub model: Model,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub coverage: CoverageCounts,
    pub training: TrainingCurves,
    pub pretrain_accuracy: Option<f64>,
}

/// Classifier, basic pre-training and transformer pre-training.
pub fn pretrain_stages(corpus: &Corpus, config: &TrainConfig, timings: &mut Timings) -> Result<Pretrained> {
    let kb = &corpus.kb;
    let mut model = timings.time("init", || Model::init(kb, config))?;
    let classifier_accuracy = Some(timings.time(STAGE_CLASSIFIER, || model.train_classifier(&corpus.qa.train))?);
    let mut training = TrainingCurves {
        classifier_accuracy,
        ..TrainingCurves::default()
    };

    let (train, val, test) = timings.time("prepare", || {
        Ok((
            model.prepare_all(kb, &corpus.qa.train)?,
            model.prepare_all(kb, &corpus.qa.val)?,
            model.prepare_all(kb, &corpus.qa.test)?,
        ))
    })?;
    let answerable = |xs: &[Example]| xs.iter().filter(|e| !e.question.answers.is_empty()).count();
    let mut coverage = CoverageCounts {
        train_questions: train.len(),
        train_answerable: answerable(&train),
        val_questions: val.len(),
        test_questions: test.len(),
        test_answerable: answerable(&test),
        ..CoverageCounts::default()
    };

    training.basic_losses = timings.time(STAGE_BASIC, || model.pretrain_basic(&train))?.epoch_losses;

    let mut pretrain_accuracy = None;
    if config.numerical {
        let (report, qgnd) = timings.time(STAGE_NT, || {
            model.pretrain_numerical(
                kb,
                &corpus.qind_train,
                &corpus.qind_val,
                &corpus.qa.train,
                &corpus.qa.val,
            )
        })?;
        training.pretrain = report;
        coverage.qgnd = qgnd;
        if !corpus.qind_test.is_empty() {
            pretrain_accuracy = Some(timings.time("eval-pretrain", || {
                evaluate_pretrain(&model.params, &model.nt, &model.featurizer, &corpus.qind_test)
            })?);
        }
    }
    Ok(Pretrained {
        model,
        train,
        val,
        test,
        coverage,
        training,
        pretrain_accuracy,
    })
}

/// Augmented pairs (θ of the real training size, train hubs only), joint training and test evaluation.
pub fn finish_stages(
    corpus: &Corpus,
    mut stage: Pretrained,
    config: &TrainConfig,
    timings: &mut Timings,
) -> Result<(Model, MetricsReport)> {
    let kb = &corpus.kb;
    // μ and θ may differ from the pre-training config; nothing upstream depends on them.
    stage.model.config.mu = config.mu;
    stage.model.config.theta = config.theta;
    stage.model.config.augment = config.augment;
    let mut train = stage.train;
    if config.augment && config.numerical {
        let qas = augmented_questions(kb, config, &corpus.qa.train, &corpus.qa.train_hubs)?;
        stage.coverage.augmented = qas.len();
        train.extend(timings.time("prepare-augmented", || stage.model.prepare_all(kb, &qas))?);
    }
    let mut model = stage.model;
    stage.training.full = timings.time(STAGE_TRAIN, || train_full(&mut model, kb, &train, &stage.val))?;
    let test = timings.time("evaluate", || evaluate(&model, kb, &stage.test))?;
    let report = MetricsReport {
        config_hash: config.hash(),
        hits_at_1_all: test.hits_at_1_all,
        hits_at_1_ordinal: test.hits_at_1_ordinal,
        hits_at_1_non_ordinal: test.hits_at_1_non_ordinal,
        pretrain_accuracy: stage.pretrain_accuracy,
        test,
        coverage: stage.coverage,
        curves: Vec::new(),
        training: stage.training,
    };
    Ok((model, report))
}

/// θ·|real train| templated ordinal questions over the training hubs, ids `aug-<i>`.
pub fn augmented_questions(
    kb: &KnowledgeBase,
    config: &TrainConfig,
    qa_train: &[QaInstance],
    train_hubs: &BTreeSet<EntityId>,
) -> Result<Vec<QaInstance>> {
    let n = (config.theta * qa_train.len() as f64).round() as usize;
    let pairs = gen_augmented(kb, n, config.seed ^ 0x4155, Some(train_hubs))?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, p)| p.to_qa(kb, format!("aug-{i}")))
        .collect())
}

/// Runs every stage in order.
pub fn run_pipeline(corpus: &Corpus, config: &TrainConfig) -> Result<(Model, MetricsReport, Timings)> {
    let mut timings = Timings::default();
    let stage = pretrain_stages(corpus, config, &mut timings)?;
    let (model, report) = finish_stages(corpus, stage, config, &mut timings)?;
    Ok((model, report, timings))
}

impl Corpus {
    /// Generated KB, QA splits and QIND instances split 60/20/20.
    pub fn synthetic(
        kb_config: &crate::datagen::SynthConfig,
        qa_config: &crate::datagen::QaCorpusConfig,
        qind_instances: usize,
        n_range: (usize, usize),
    ) -> Result<Self> {
        let kb = crate::datagen::gen_synthetic_kb(kb_config)?;
        let qa = crate::datagen::gen_qa_corpus(&kb, qa_config)?;
        let qind = crate::datagen::gen_qind(&kb, qind_instances, n_range, kb_config.seed ^ 0x5149)?;
        let (qind_train, qind_val, qind_test) = crate::datagen::split_pretrain(&qind);
        Ok(Self {
            kb,
            qa,
            qind_train,
            qind_val,
            qind_test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{QaCorpusConfig, SynthConfig};

    fn tiny() -> (Corpus, TrainConfig) {
        let corpus = Corpus::synthetic(
            &SynthConfig {
                n_entities: 150,
                ..SynthConfig::default()
            },
            &QaCorpusConfig::default(),
            300,
            (2, 5),
        )
        .unwrap();
        let cfg = TrainConfig {
            d_h: 8,
            d_enc: 16,
            nt_heads: 2,
            pretrain_epochs: 2,
            train_epochs: 2,
            basic_epochs: 2,
            pretrain_batch: 32,
            seed: 7,
            ..TrainConfig::default()
        };
        (corpus, cfg)
    }

    #[test]
    fn same_seed_same_report_bytes() {
        let (corpus, cfg) = tiny();
        let (_, a, ta) = run_pipeline(&corpus, &cfg).unwrap();
        let (_, b, _) = run_pipeline(&corpus, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(!a.to_json().contains("seconds"));
        assert!(ta.stages.iter().any(|(s, _)| s == "train"));
        for r in [
            a.hits_at_1_all,
            a.hits_at_1_ordinal.unwrap(),
            a.hits_at_1_non_ordinal.unwrap(),
        ] {
            assert!((0.0..=1.0).contains(&r));
        }
        let full = &a.training.full;
        assert_eq!(full.theta_hash_before, full.theta_hash_after);
    }

    #[test]
    fn ablated_pretraining_still_runs() {
        let (corpus, cfg) = tiny();
        let cfg = TrainConfig {
            pretrain: false,
            augment: false,
            ..cfg
        };
        let (_, rep, _) = run_pipeline(&corpus, &cfg).unwrap();
        assert!(rep.training.pretrain.stages.is_empty());
        assert_eq!(rep.coverage.augmented, 0);
    }

    #[test]
    fn save_load_gives_identical_predictions() {
        let (corpus, cfg) = tiny();
        let (model, _, _) = run_pipeline(&corpus, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = Model::load(&corpus.kb, dir.path()).unwrap();
        for qa in corpus.qa.test.iter().take(10) {
            let a = model.prepare(&corpus.kb, qa).unwrap();
            let b = back.prepare(&corpus.kb, qa).unwrap();
            assert_eq!(
                model.predict(&corpus.kb, &a).unwrap(),
                back.predict(&corpus.kb, &b).unwrap()
            );
        }
        std::fs::remove_file(dir.path().join("theta.nkbq")).unwrap();
        match Model::load(&corpus.kb, dir.path()) {
            Err(Error::Pipeline { stage, .. }) => assert_eq!(stage, "pretrain nt"),
            other => panic!("expected a pipeline error, got {other:?}"),
        }
    }

    #[test]
    fn training_names_the_missing_stage() {
        let (corpus, cfg) = tiny();
        let mut model = Model::init(&corpus.kb, &cfg).unwrap();
        let ex = model.prepare_all(&corpus.kb, &corpus.qa.train).unwrap();
        let stage_of = |r: Result<FullTrainReport>| match r {
            Err(Error::Pipeline { stage, .. }) => stage,
            other => panic!("expected a pipeline error, got {other:?}"),
        };
        assert_eq!(stage_of(train_full(&mut model, &corpus.kb, &ex, &[])), STAGE_CLASSIFIER);
        model.train_classifier(&corpus.qa.train).unwrap();
        model.pretrain_basic(&ex).unwrap();
        assert_eq!(stage_of(train_full(&mut model, &corpus.kb, &ex, &[])), STAGE_NT);
        model.config.pretrain = false;
        train_full(&mut model, &corpus.kb, &ex, &[]).unwrap();
        assert!(model.has_completed(STAGE_TRAIN));
    }

    #[test]
    fn evaluate_rejects_empty_and_counts_splits() {
        let (corpus, cfg) = tiny();
        let model = Model::init(&corpus.kb, &cfg).unwrap();
        assert!(evaluate(&model, &corpus.kb, &[]).is_err());
        let ex = model.prepare_all(&corpus.kb, &corpus.qa.test).unwrap();
        let r = evaluate(&model, &corpus.kb, &ex).unwrap();
        assert_eq!(r.questions, ex.len());
        assert_eq!(r.ordinal_questions, corpus.qa.test.iter().filter(|q| q.ordinal).count());
    }

    #[test]
    fn untrained_classifier_means_basic_prediction() {
        let (corpus, cfg) = tiny();
        let model = Model::init(&corpus.kb, &cfg).unwrap();
        let ex = model.prepare(&corpus.kb, &corpus.qa.test[0]).unwrap();
        assert_eq!(ex.p_ordinal, 0.0);
        let (p, _) = model.predict(&corpus.kb, &ex).unwrap();
        let basic = crate::reasoner::basic_probabilities(&model.nsm, &model.params, &ex.question).unwrap();
        for (a, b) in p.iter().zip(&basic) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
