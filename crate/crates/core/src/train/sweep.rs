//! Hyperparameter sweeps and pre-training ablations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::pipeline::{finish_stages, pretrain_stages, Corpus, Curve, CurvePoint, Timings};
use super::pretrain::{evaluate_pretrain, pretrain_nt};
use crate::datagen::{gen_qind, split_pretrain, PretrainInstance};
use crate::error::{Error, Result};
use crate::nn::ParameterSet;
use crate::numerical::{NtFeaturizer, NumericalTransformer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Entity pruning threshold; metric is test Hits@1.
    Mu,
    /// Augmentation proportion; metric is test Hits@1.
    Theta,
    /// Number of QIND training instances; metric is held-out pre-training accuracy.
    QindSize,
    /// Upper end of the QIND number range; metric is held-out pre-training accuracy.
    NNumbers,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::Mu,
        SweepAxis::Theta,
        SweepAxis::QindSize,
        SweepAxis::NNumbers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Mu => "mu",
            SweepAxis::Theta => "theta",
            SweepAxis::QindSize => "qind_size",
            SweepAxis::NNumbers => "n_numbers",
        }
    }

    pub fn metric(self) -> &'static str {
        match self {
            SweepAxis::Mu | SweepAxis::Theta => "hits_at_1",
            SweepAxis::QindSize | SweepAxis::NNumbers => "pretrain_accuracy",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown sweep axis `{s}` (mu, theta, qind_size, n_numbers)")))
    }
}

/// One grid point. `seconds` is the whole point for μ and θ and one pre-training epoch otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub x: f64,
    pub metric: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub curve: Curve,
    pub rows: Vec<SweepRow>,
}

/// Flat CSV with a header line.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,x,metric,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:.3}\n", r.axis, r.x, r.metric, r.seconds));
    }
    out
}

fn check_grid(axis: SweepAxis, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config(format!("{axis} sweep needs a non-empty grid")));
    }
    let ok = |x: &f64| match axis {
        SweepAxis::Mu => (0.0..1.0).contains(x),
        SweepAxis::Theta => *x >= 0.0,
        SweepAxis::QindSize => *x >= 1.0 && x.fract() == 0.0,
        SweepAxis::NNumbers => *x >= 2.0 && x.fract() == 0.0,
    };
    match grid.iter().find(|x| !ok(x)) {
        Some(x) => Err(Error::config(format!("{x} is not a valid {axis} grid value"))),
        None => Ok(()),
    }
}

/// Fresh Θ trained on QIND only; returns held-out accuracy and mean seconds per epoch.
pub fn pretrain_only(
    train: &[PretrainInstance],
    val: &[PretrainInstance],
    test: &[PretrainInstance],
    config: &TrainConfig,
) -> Result<(f64, f64)> {
    let config = TrainConfig {
        qgnd: false,
        qind: true,
        pretrain: true,
        ..config.clone()
    };
    let feat = NtFeaturizer::new(config.encoder_config(), config.sne_mode())?;
    let mut params = ParameterSet::new();
    let nt = NumericalTransformer::init(
        &mut params,
        config.nt_config(),
        config.d_enc,
        feat.numbers.feature_dim(),
        &mut ChaCha8Rng::seed_from_u64(config.seed),
    )?;
    let t = Instant::now();
    pretrain_nt(&mut params, &nt, &feat, train, &[], val, &[], &config)?;
    let per_epoch = t.elapsed().as_secs_f64() / config.pretrain_epochs.max(1) as f64;
    Ok((evaluate_pretrain(&params, &nt, &feat, test)?, per_epoch))
}

/// Retrains and evaluates once per grid value with everything else fixed.
///
/// μ and θ reuse one pre-trained model since no earlier stage depends on them.
pub fn run_sweep(corpus: &Corpus, axis: SweepAxis, grid: &[f64], config: &TrainConfig) -> Result<SweepResult> {
    check_grid(axis, grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    match axis {
        SweepAxis::Mu | SweepAxis::Theta => {
            let base = pretrain_stages(corpus, config, &mut Timings::default())?;
            for &x in grid {
                let mut cfg = config.clone();
                match axis {
                    SweepAxis::Mu => cfg.mu = x,
                    _ => cfg.theta = x,
                }
                cfg.validate()?;
                let mut timings = Timings::default();
                let (_, report) = finish_stages(corpus, base.clone(), &cfg, &mut timings)?;
                rows.push(SweepRow {
                    axis,
                    x,
                    metric: report.hits_at_1_all,
                    seconds: timings.total(),
                });
            }
        }
        SweepAxis::QindSize => {
            if corpus.qind_test.is_empty() {
                return Err(Error::data("qind_size sweep needs held-out QIND instances"));
            }
            for &x in grid {
                let n = (x as usize).min(corpus.qind_train.len());
                let (metric, seconds) =
                    pretrain_only(&corpus.qind_train[..n], &corpus.qind_val, &corpus.qind_test, config)?;
                rows.push(SweepRow {
                    axis,
                    x,
                    metric,
                    seconds,
                });
            }
        }
        SweepAxis::NNumbers => {
            let size = corpus.qind_train.len() + corpus.qind_val.len() + corpus.qind_test.len();
            if size == 0 {
                return Err(Error::data("n_numbers sweep needs a QIND size"));
            }
            for &x in grid {
                let hi = x as usize;
                let all = gen_qind(&corpus.kb, size, (config.n_min.min(hi), hi), config.seed ^ 0x5149)?;
                let (train, val, test) = split_pretrain(&all);
                let (metric, seconds) = pretrain_only(&train, &val, &test, config)?;
                rows.push(SweepRow {
                    axis,
                    x,
                    metric,
                    seconds,
                });
            }
        }
    }
    let curve = Curve {
        axis: axis.name().to_string(),
        metric: axis.metric().to_string(),
        points: rows
            .iter()
            .map(|r| CurvePoint {
                x: r.x,
                metric: r.metric,
            })
            .collect(),
    };
    Ok(SweepResult { curve, rows })
}

/// One row of the direct pre-training ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: f64,
    pub seconds: f64,
}

/// Variants of the direct pre-training ablation: full and each of SAM, NPL, NTL and SNE removed.
pub fn ablation_variants(config: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let off = |f: fn(&mut TrainConfig)| {
        let mut c = config.clone();
        f(&mut c);
        c
    };
    vec![
        ("full".into(), config.clone()),
        ("-SAM".into(), off(|c| c.sam = false)),
        ("-NPL".into(), off(|c| c.npl = false)),
        ("-NTL".into(), off(|c| c.ntl = false)),
        ("-SNE".into(), off(|c| c.sne = false)),
    ]
}

/// Held-out QIND accuracy for each ablation variant, each from its own fresh Θ.
pub fn run_pretrain_ablation(
    train: &[PretrainInstance],
    val: &[PretrainInstance],
    test: &[PretrainInstance],
    config: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    ablation_variants(config)
        .into_iter()
        .map(|(variant, cfg)| {
            let t = Instant::now();
            let (accuracy, _) = pretrain_only(train, val, test, &cfg)?;
            Ok(AblationRow {
                variant,
                accuracy,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
