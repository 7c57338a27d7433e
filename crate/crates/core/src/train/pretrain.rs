//! Transformer pre-training on QIND then QGND, and direct evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::losses::{npl_loss, npl_probabilities, ntl_loss, sample_triplets};
use crate::datagen::PretrainInstance;
use crate::error::{Error, Result};
use crate::nn::{optimize_step, Gradients, OptimizerState, ParamGroup, ParameterSet, Tape};
use crate::numerical::{nt_forward, NtFeaturizer, NtInput, NumericalTransformer};
use crate::reasoner::argmax_lowest;

/// Everything but Θ stays fixed here.
const FROZEN: [ParamGroup; 3] = [ParamGroup::Basic, ParamGroup::Comprehensive, ParamGroup::Classifier];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub instances: usize,
    pub epoch_losses: Vec<f64>,
    /// Validation accuracy per epoch, when a validation set was given.
    pub val_accuracy: Vec<f64>,
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub stages: Vec<StageReport>,
}

fn nt_input(feat: &NtFeaturizer, inst: &PretrainInstance) -> Result<NtInput> {
    inst.validate()?;
    let q = feat.words.encode_question(&inst.q)?;
    let (input, _) = feat.build_input(&q, &inst.values, None, usize::MAX)?;
    Ok(input)
}

/// Joint loss `npl + lambda * ntl` on one instance, honoring the ablation flags.
pub fn instance_loss(
    params: &ParameterSet,
    nt: &NumericalTransformer,
    feat: &NtFeaturizer,
    inst: &PretrainInstance,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(f64, Gradients)> {
    let input = nt_input(feat, inst)?;
    let mask = nt.mask_for(&input);
    let mut tape = Tape::with_frozen(params, &FROZEN);
    let out = nt_forward(nt, &mut tape, &input, &mask)?;
    let mut terms = Vec::new();
    if config.npl {
        terms.push(npl_loss(&mut tape, nt, out.numbers, inst.answer_index)?);
    }
    if config.ntl {
        let trip = sample_triplets(&input.sort_keys, config.triplets_per_instance, rng);
        if let Some(l) = ntl_loss(&mut tape, out.numbers, &trip, config.margin) {
            terms.push(tape.scale(l, config.ntl_weight));
        }
    }
    let Some(&first) = terms.first() else {
        return Ok((0.0, Gradients::new()));
    };
    let loss = terms[1..].iter().fold(first, |acc, &t| tape.add(acc, t));
    Ok((tape.scalar(loss), tape.backward(loss)))
}

/// NPL distribution over the instance's numbers.
pub fn pretrain_probabilities(
    params: &ParameterSet,
    nt: &NumericalTransformer,
    feat: &NtFeaturizer,
    inst: &PretrainInstance,
) -> Result<Vec<f64>> {
    let input = nt_input(feat, inst)?;
    let mask = nt.mask_for(&input);
    let mut tape = Tape::with_frozen(params, &ParamGroup::ALL);
    let out = nt_forward(nt, &mut tape, &input, &mask)?;
    Ok(npl_probabilities(&mut tape, nt, out.numbers))
}

/// Fraction of instances whose top number holds the gold value.
///
/// A prediction tied in value with the gold number counts as correct.
pub fn evaluate_pretrain(
    params: &ParameterSet,
    nt: &NumericalTransformer,
    feat: &NtFeaturizer,
    instances: &[PretrainInstance],
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::data("no pre-training instances to evaluate"));
    }
    let mut hits = 0usize;
    for inst in instances {
        let p = pretrain_probabilities(params, nt, feat, inst)?;
        let top = argmax_lowest(&p).expect("instance has numbers");
        if inst.values[top].sort_key == inst.values[inst.answer_index].sort_key {
            hits += 1;
        }
    }
    Ok(hits as f64 / instances.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    name: &str,
    params: &mut ParameterSet,
    nt: &NumericalTransformer,
    feat: &NtFeaturizer,
    data: &[PretrainInstance],
    val: Option<&[PretrainInstance]>,
    keep_entry: bool,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    // A fresh optimizer per stage; Θ carries over.
    let mut opt = OptimizerState::adam(config.learning_rate).with_frozen(&FROZEN);
    if config.clip_norm > 0.0 {
        opt = opt.with_clip_norm(config.clip_norm);
    }
    let mut report = StageReport {
        stage: name.to_string(),
        instances: data.len(),
        ..StageReport::default()
    };
    // A later stage competes against the weights it was handed.
    let mut best: Option<(f64, ParameterSet)> = match (val, keep_entry) {
        (Some(val), true) => Some((evaluate_pretrain(params, nt, feat, val)?, params.clone())),
        _ => None,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.pretrain_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.pretrain_batch) {
            let mut grads = Gradients::new();
            for &i in chunk {
                let (l, g) = instance_loss(params, nt, feat, &data[i], config, rng)?;
                total += l;
                grads.merge(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            optimize_step(params, &grads, &mut opt)?;
        }
        report.epoch_losses.push(total / data.len() as f64);
        if let Some(val) = val {
            let acc = evaluate_pretrain(params, nt, feat, val)?;
            report.val_accuracy.push(acc);
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                report.best_epoch = Some(epoch);
                best = Some((acc, params.clone()));
            }
        }
    }
    if let Some((_, snapshot)) = best {
        params.copy_group_from(&snapshot, ParamGroup::Numerical)?;
    }
    Ok(report)
}

/// Trains Θ (with the prediction head) on QIND first and then QGND.
///
/// Each stage with validation data keeps its epoch with the best validation accuracy. The
/// QGND stage is scored on both validation sets and may keep the QIND weights unchanged
/// (`best_epoch == None`), so fine-tuning on fixed-size QGND sets cannot silently erase
/// what QIND taught.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_nt(
    params: &mut ParameterSet,
    nt: &NumericalTransformer,
    feat: &NtFeaturizer,
    qind: &[PretrainInstance],
    qgnd: &[PretrainInstance],
    val_qind: &[PretrainInstance],
    val_qgnd: &[PretrainInstance],
    config: &TrainConfig,
) -> Result<PretrainReport> {
    config.validate()?;
    if !config.pretrain {
        return Ok(PretrainReport::default());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x4e54);
    let mut report = PretrainReport::default();
    let mut seen_val: Vec<PretrainInstance> = Vec::new();
    for (name, enabled, data, val) in [
        ("qind", config.qind, qind, val_qind),
        ("qgnd", config.qgnd, qgnd, val_qgnd),
    ] {
        if !enabled {
            continue;
        }
        if data.is_empty() {
            return Err(Error::config(format!("{name} is enabled but the dataset is empty")));
        }
        let keep_entry = !report.stages.is_empty();
        seen_val.extend_from_slice(val);
        let v = (!seen_val.is_empty()).then_some(seen_val.as_slice());
        report.stages.push(run_stage(
            name, params, nt, feat, data, v, keep_entry, config, &mut rng,
        )?);
    }
    Ok(report)
}
