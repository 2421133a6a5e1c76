//! Run configuration, read from TOML. Every key is optional; unknown keys are errors.
//!
//! ```toml
//! [run]
//! task = "addition"          # addition | subtraction | sorting | dyck2 | synthclass
//! scheduler = "cedc"         # cedc | static | uniform-sg | standard-cl | spl
//! seeds = [1, 2, 3]
//! initial_size = 5000        # |D_0|
//! # initial_max = 3          # default: the task's initial difficulty cap
//! pretrain_steps = 5000      # steps on D_0 before round 0
//!
//! [model]                    # transformer shape; vocab_size is set from the task
//! [optimizer]                # AdamW
//! [curriculum]               # rounds, pool_size, finetune_steps, diversity_threshold, ngram_n, spl_growth
//! [curriculum.verifier]      # kind = "exact" | "proxy", confidence_threshold, length_quantile
//!
//! [eval]
//! # lengths = [4, 5, 6]      # default: the task's extrapolation grid
//! n_per_length = 200
//! ```

use std::path::{Path, PathBuf};

use cedc_core::curriculum::{CurriculumParams, SchedulerRegistry};
use cedc_core::tasks::TaskKind;
use cedc_nn::{OptimizerConfig, TransformerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub task: TaskKind,
    pub scheduler: String,
    pub seeds: Vec<u64>,
    /// Default: `$CEDC_OUT_DIR/<name>` or `runs/<name>`, chosen by the caller.
    pub out_dir: Option<PathBuf>,
    pub initial_size: usize,
    pub initial_max: Option<usize>,
    pub pretrain_steps: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            task: TaskKind::Addition,
            scheduler: "cedc".into(),
            seeds: vec![1, 2, 3],
            out_dir: None,
            initial_size: 5000,
            initial_max: None,
            pretrain_steps: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub lengths: Option<Vec<usize>>,
    /// Examples per length for the final curve.
    pub n_per_length: usize,
    /// Examples per length for the curves recorded during training.
    pub history_n_per_length: usize,
    /// Fine-tuning is split into this many blocks per round, with a curve after each.
    pub blocks_per_round: usize,
    pub in_distribution_size: usize,
    pub target_le_auc: f64,
    /// Tasks to score the final model on without further training.
    pub zero_shot: Vec<TaskKind>,
    pub zero_shot_size: usize,
    pub checkpoints: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lengths: None,
            n_per_length: 200,
            history_n_per_length: 50,
            blocks_per_round: 1,
            in_distribution_size: 500,
            target_le_auc: 0.25,
            zero_shot: Vec::new(),
            zero_shot_size: 500,
            checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: TransformerConfig,
    pub optimizer: OptimizerConfig,
    pub curriculum: CurriculumParams,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|source| HarnessError::Toml {
            path: origin.into(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn initial_max(&self) -> usize {
        self.run
            .initial_max
            .unwrap_or_else(|| self.run.task.task().initial_max_difficulty())
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.eval
            .lengths
            .clone()
            .unwrap_or_else(|| self.run.task.task().extrapolation_grid())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        SchedulerRegistry::default().create(&self.run.scheduler)?;
        if self.run.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.run.initial_size == 0 {
            return bad("initial_size must be at least 1".into());
        }
        let task = self.run.task.task();
        if self.initial_max() < task.min_difficulty() {
            return bad(format!(
                "initial_max {} is below the task minimum {}",
                self.initial_max(),
                task.min_difficulty()
            ));
        }
        let lengths = self.lengths();
        if lengths.is_empty() {
            return bad("evaluation needs at least one length".into());
        }
        if let Some(&l) = lengths.iter().find(|&&l| l <= self.initial_max()) {
            return bad(format!(
                "evaluation length {l} is not beyond the training maximum {}",
                self.initial_max()
            ));
        }
        if self.eval.n_per_length == 0
            || self.eval.history_n_per_length == 0
            || self.eval.in_distribution_size == 0
        {
            return bad("evaluation sample sizes must be at least 1".into());
        }
        if self.eval.blocks_per_round == 0 {
            return bad("blocks_per_round must be at least 1".into());
        }
        self.model.validate()?;
        self.optimizer.validate()?;
        self.curriculum.validate()?;
        let reach = task
            .generator()
            .difficulty_range(self.curriculum.rounds.saturating_sub(1))
            .1;
        let longest = *lengths.iter().max().expect("non-empty");
        let need =
            cedc_core::tasks::required_seq_len(task, reach.max(longest).max(self.initial_max()));
        if need > self.model.max_seq_len {
            return bad(format!(
                "model.max_seq_len {} is shorter than the {need} tokens the run needs",
                self.model.max_seq_len
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("", "inline").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.lengths(), (4..=13).collect::<Vec<_>>());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.run.scheduler = "spl".into();
        cfg.run.seeds = vec![9];
        cfg.curriculum.pool_size = 70;
        cfg.eval.zero_shot = vec![TaskKind::Subtraction];
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap(), "inline").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[run]\ntaks = \"addition\"", "x"),
            Err(HarnessError::Toml { .. })
        ));
        assert!(matches!(
            RunConfig::from_toml("[bogus]\n", "x"),
            Err(HarnessError::Toml { .. })
        ));
        assert!(RunConfig::from_toml("[run]\nscheduler = \"magic\"", "x").is_err());
        assert!(RunConfig::from_toml("[eval]\nlengths = [2, 5]", "x").is_err());
        assert!(RunConfig::from_toml("[model]\nmax_seq_len = 20", "x").is_err());
        assert!(RunConfig::from_toml("[curriculum]\ndiversity_threshold = 1.5", "x").is_err());
    }
}
