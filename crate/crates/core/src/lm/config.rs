use serde::{Deserialize, Serialize};

use super::LmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }
}

/// Model shape and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub vocab_size: usize,
    /// Context window: maximum sequence length including the class-query token.
    pub context: usize,
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Weight of the next-token loss in the combined objective.
    pub lambda: f64,
    /// Threat-probability threshold.
    pub tau: f64,
    pub learning_rate: f64,
    /// Factor applied to the learning rate after an epoch without
    /// validation improvement; 1.0 keeps it constant.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: Optimizer,
    /// Standard deviation of the normal weight initialization.
    pub init_std: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            context: 32,
            layers: 2,
            d_model: 64,
            heads: 4,
            d_ff: 256,
            lambda: 0.5,
            tau: 0.5,
            learning_rate: 5e-5,
            lr_decay: 0.5,
            batch_size: 32,
            max_epochs: 10,
            patience: 2,
            optimizer: Optimizer::Adam,
            init_std: 0.02,
        }
    }
}

impl LmConfig {
    pub fn with_vocab(vocab_size: usize, context: usize) -> Self {
        Self { vocab_size, context, ..Self::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |m: String| Err(LmError::Config(m));
        if self.vocab_size < 5 {
            return bad(format!("vocab_size must cover the 5 reserved tokens, got {}", self.vocab_size));
        }
        if self.context < 2 {
            return bad(format!("context must be >= 2, got {}", self.context));
        }
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!("heads ({}) must divide d_model ({})", self.heads, self.d_model));
        }
        if self.d_ff == 0 {
            return bad("d_ff must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return bad(format!("init_std must be non-negative, got {}", self.init_std));
        }
        Ok(())
    }
}
