use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

/// How token positions enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosMode {
    Sinusoidal,
    Learnable,
    None,
    Alibi,
}

impl PosMode {
    pub fn name(self) -> &'static str {
        match self {
            PosMode::Sinusoidal => "sinusoidal",
            PosMode::Learnable => "learnable",
            PosMode::None => "none",
            PosMode::Alibi => "alibi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub pos_mode: PosMode,
    pub dropout: f64,
}

impl Default for TransformerConfig {
    /// Desk-scale defaults: small enough to train on a CPU in minutes.
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            vocab_size: 32,
            max_seq_len: 64,
            pos_mode: PosMode::Sinusoidal,
            dropout: 0.0,
        }
    }
}

impl TransformerConfig {
    /// The full-size 12-layer, 8-head, 512-wide decoder.
    pub fn full_scale(vocab_size: usize, max_seq_len: usize) -> Self {
        Self {
            n_layers: 12,
            n_heads: 8,
            d_model: 512,
            d_ff: 2048,
            vocab_size,
            max_seq_len,
            pos_mode: PosMode::Sinusoidal,
            dropout: 0.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NnError::Input(msg));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layer, head and width counts must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.pos_mode == PosMode::Sinusoidal && self.d_model % 2 != 0 {
            return bad(format!(
                "sinusoidal positions need an even d_model, got {}",
                self.d_model
            ));
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 {
            return bad("vocab_size and max_seq_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    /// Global gradient-norm clip applied before the update; `None` disables it.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            betas: (0.9, 0.98),
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_steps: 100,
            batch_size: 32,
            max_grad_norm: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    /// AdamW with LR 1e-4, betas (0.9, 0.98), decay 0.01, batch 64 and 4000 warmup steps.
    pub fn full_scale() -> Self {
        Self {
            learning_rate: 1e-4,
            betas: (0.9, 0.98),
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_steps: 4000,
            batch_size: 64,
            max_grad_norm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.betas;
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return Err(NnError::Input(format!(
                "betas {:?} must lie in (0, 1)",
                self.betas
            )));
        }
        if !(self.learning_rate > 0.0) || self.eps <= 0.0 || self.weight_decay < 0.0 {
            return Err(NnError::Input(
                "learning rate and eps must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(NnError::Input("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate used by the `step`-th update (1-based): linear ramp, then constant.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / self.warmup_steps as f64
        }
    }
}
