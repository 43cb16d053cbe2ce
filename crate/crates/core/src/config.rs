//! Training configuration and the flat `key = value` config-file format.

use crate::error::ConfigError;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

type Result<T> = std::result::Result<T, ConfigError>;

/// Every hyperparameter of the pipeline. Defaults follow the published
/// settings: δ = 0.05, p1 = 0.3, p2 = 0.2, τ = 0.5, λ1 = 1, λ2 = 0.005,
/// 2000 pretraining epochs at lr 1e-3, 5000 fine-tuning epochs with the
/// encoder group at 5e-3 and the fusion/distillation group at 3e-3.
/// Architecture sizes are this implementation's own defaults and stay
/// configurable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    /// Similarity threshold δ for graph construction, in [−1, 1].
    pub delta: f64,
    /// View-1 and view-2 feature-mask probabilities.
    pub p1: f64,
    pub p2: f64,
    /// Contrastive temperature τ.
    pub tau: f64,
    /// Loss weights of the total objective.
    pub lambda1: f64,
    pub lambda2: f64,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    /// Learning rate of the encoder (GAT) parameter group.
    pub gat_lr: f64,
    /// Learning rate of the fusion/distillation/head parameter group.
    pub inter_lr: f64,
    pub gat_layers: usize,
    pub gat_heads: usize,
    pub gat_head_dim: usize,
    pub leaky_slope: f64,
    pub d_attn: usize,
    pub d_e: usize,
    pub d_proj: usize,
    pub aux_hidden: usize,
    pub final_hidden: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// When true every random stream derives from `seed`; when false seeds
    /// are drawn from OS entropy (and recorded in the run output).
    pub deterministic: bool,
    /// Train-only graphs with test nodes attached by similarity at inference.
    pub inductive: bool,
    /// Let the distillation distance gradient reach the source logits too.
    pub symmetric_cd_grad: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            p1: 0.3,
            p2: 0.2,
            tau: 0.5,
            lambda1: 1.0,
            lambda2: 0.005,
            pretrain_epochs: 2000,
            pretrain_lr: 1e-3,
            finetune_epochs: 5000,
            gat_lr: 5e-3,
            inter_lr: 3e-3,
            gat_layers: 2,
            gat_heads: 4,
            gat_head_dim: 64,
            leaky_slope: 0.2,
            d_attn: 64,
            d_e: 16,
            d_proj: 128,
            aux_hidden: 64,
            final_hidden: 64,
            seed: 0,
            test_fraction: 0.3,
            deterministic: true,
            inductive: false,
            symmetric_cd_grad: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(-1.0..=1.0).contains(&self.delta) {
            problems.push(format!("delta {} outside [-1,1]", self.delta));
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} {p} outside [0,1]"));
            }
        }
        if self.tau <= 0.0 {
            problems.push(format!("tau {} must be positive", self.tau));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            problems.push("loss weights must be nonnegative".to_string());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            problems.push(format!("test_fraction {} outside (0,1)", self.test_fraction));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            problems.push(format!("leaky_slope {} outside (0,1)", self.leaky_slope));
        }
        for (name, v) in [
            ("gat_layers", self.gat_layers),
            ("gat_heads", self.gat_heads),
            ("gat_head_dim", self.gat_head_dim),
            ("d_attn", self.d_attn),
            ("d_e", self.d_e),
            ("d_proj", self.d_proj),
            ("aux_hidden", self.aux_hidden),
            ("final_hidden", self.final_hidden),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems.join("; ")))
        }
    }

    /// Canonical flat `key = value` rendering; also the config-hash input.
    pub fn to_flat_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.flat_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn config_hash(&self) -> u64 {
        crate::params::fnv1a64(self.to_flat_string().as_bytes())
    }

    fn flat_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("delta", self.delta.to_string()),
            ("p1", self.p1.to_string()),
            ("p2", self.p2.to_string()),
            ("tau", self.tau.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("pretrain_lr", self.pretrain_lr.to_string()),
            ("finetune_epochs", self.finetune_epochs.to_string()),
            ("gat_lr", self.gat_lr.to_string()),
            ("inter_lr", self.inter_lr.to_string()),
            ("gat_layers", self.gat_layers.to_string()),
            ("gat_heads", self.gat_heads.to_string()),
            ("gat_head_dim", self.gat_head_dim.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("d_attn", self.d_attn.to_string()),
            ("d_e", self.d_e.to_string()),
            ("d_proj", self.d_proj.to_string()),
            ("aux_hidden", self.aux_hidden.to_string()),
            ("final_hidden", self.final_hidden.to_string()),
            ("seed", self.seed.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("inductive", self.inductive.to_string()),
            ("symmetric_cd_grad", self.symmetric_cd_grad.to_string()),
        ]
    }

    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            file: file.clone(),
            source: e,
        })?;
        let mut cfg = TrainConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::BadLine {
                    file,
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            cfg.set_key(&file, line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_key(&mut self, file: &str, line: usize, key: &str, value: &str) -> Result<()> {
        macro_rules! parse {
            ($field:ident) => {
                self.$field = value.parse().map_err(|e| ConfigError::BadValue {
                    file: file.to_string(),
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: format!("{e}"),
                })?
            };
        }
        match key {
            "delta" => parse!(delta),
            "p1" => parse!(p1),
            "p2" => parse!(p2),
            "tau" => parse!(tau),
            "lambda1" => parse!(lambda1),
            "lambda2" => parse!(lambda2),
            "pretrain_epochs" => parse!(pretrain_epochs),
            "pretrain_lr" => parse!(pretrain_lr),
            "finetune_epochs" => parse!(finetune_epochs),
            "gat_lr" => parse!(gat_lr),
            "inter_lr" => parse!(inter_lr),
            "gat_layers" => parse!(gat_layers),
            "gat_heads" => parse!(gat_heads),
            "gat_head_dim" => parse!(gat_head_dim),
            "leaky_slope" => parse!(leaky_slope),
            "d_attn" => parse!(d_attn),
            "d_e" => parse!(d_e),
            "d_proj" => parse!(d_proj),
            "aux_hidden" => parse!(aux_hidden),
            "final_hidden" => parse!(final_hidden),
            "seed" => parse!(seed),
            "test_fraction" => parse!(test_fraction),
            "deterministic" => parse!(deterministic),
            "inductive" => parse!(inductive),
            "symmetric_cd_grad" => parse!(symmetric_cd_grad),
            _ => {
                return Err(ConfigError::UnknownKey {
                    file: file.to_string(),
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}

/// Which pipeline components an experiment arm uses.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AblationSwitches {
    /// Contrastive pretraining on (true) or fresh random encoders (false).
    pub use_gcl: bool,
    /// Adaptive distillation on (true) or the plain fully connected
    /// replacement (false).
    pub use_cd: bool,
    /// Omics subset by name; `None` keeps all.
    pub omics_subset: Option<Vec<String>>,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        Self {
            use_gcl: true,
            use_cd: true,
            omics_subset: None,
        }
    }
}
