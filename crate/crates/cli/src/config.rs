use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use numkbqa::train::TrainConfig;

macro_rules! config_args {
    ($($field:ident: $ty:ty),* $(,)?) => {
        /// Training configuration: an optional TOML file, then one flag per field.
        #[derive(Args, Clone, Debug, Default)]
        pub struct ConfigArgs {
            /// TOML file holding any subset of the config fields.
            #[arg(long, value_name = "FILE")]
            pub config: Option<PathBuf>,
            $(
                #[arg(long, alias = stringify!($field), help_heading = "Config fields")]
                pub $field: Option<$ty>,
            )*
        }

        impl ConfigArgs {
            fn overlay(&self, cfg: &mut TrainConfig) {
                $(
                    if let Some(v) = self.$field {
                        cfg.$field = v;
                    }
                )*
            }
        }
    };
}

config_args! {
    seed: u64,
    learning_rate: f64,
    train_learning_rate: f64,
    margin: f64,
    mu: f64,
    k: usize,
    nt_layers: usize,
    nt_heads: usize,
    d_h: usize,
    d_enc: usize,
    n_min: usize,
    n_max: usize,
    pretrain_batch: usize,
    train_batch: usize,
    pretrain_epochs: usize,
    train_epochs: usize,
    patience: usize,
    ntl_weight: f64,
    triplets_per_instance: usize,
    distractors: usize,
    theta: f64,
    nsm_steps: usize,
    basic_epochs: usize,
    basic_batch: usize,
    basic_learning_rate: f64,
    damping: f64,
    top_n: usize,
    clip_norm: f64,
    sam: bool,
    sne: bool,
    qind: bool,
    qgnd: bool,
    npl: bool,
    ntl: bool,
    pretrain: bool,
    augment: bool,
    numerical: bool,
}

impl ConfigArgs {
    /// Defaults, then the TOML file, then flags.
    pub fn resolve(&self) -> Result<TrainConfig> {
        self.apply_to(TrainConfig::default())
    }

    /// Flags (and the file, if given) layered over an existing config.
    pub fn apply_to(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => base,
        };
        self.overlay(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Rejects overrides that would change the frozen encoder or parameter shapes of a saved model.
pub fn check_architecture(saved: &TrainConfig, new: &TrainConfig) -> Result<()> {
    let fields = [
        ("seed", saved.seed as usize, new.seed as usize),
        ("d_h", saved.d_h, new.d_h),
        ("d_enc", saved.d_enc, new.d_enc),
        ("nt_layers", saved.nt_layers, new.nt_layers),
        ("nt_heads", saved.nt_heads, new.nt_heads),
        ("nsm_steps", saved.nsm_steps, new.nsm_steps),
        ("sam", saved.sam as usize, new.sam as usize),
        ("sne", saved.sne as usize, new.sne as usize),
    ];
    for (name, a, b) in fields {
        if a != b {
            bail!("`{name}` is fixed by the saved model ({a}); got {b}");
        }
    }
    Ok(())
}
