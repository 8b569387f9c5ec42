use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledSequence, LanguageModel, LmConfig, LmError, Optimizer};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Decorrelates the batch-order stream from the initialization stream.
const SHUFFLE_STREAM: u64 = 0x5ee_d0fb_a7c4;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_l1: f64,
    pub train_l2: f64,
    pub train_l3: f64,
    pub valid_l3: f64,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned (1-based), if any epoch ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_l1,train_l2,train_l3,valid_l3,learning_rate\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.train_l1, e.train_l2, e.train_l3, e.valid_l3, e.learning_rate
            ));
        }
        out
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

/// Mini-batch training of the combined loss. The learning rate is
/// multiplied by `lr_decay` after every epoch whose validation loss does not
/// improve, training stops after `patience` such epochs in a row, and the
/// parameters from the best validation epoch are returned. With an empty
/// validation set the training loss is monitored instead.
pub fn train(
    train_set: &[LabeledSequence],
    valid_set: &[LabeledSequence],
    config: &LmConfig,
    seed: u64,
) -> Result<(LanguageModel, TrainLog), LmError> {
    let mut model = LanguageModel::init(config.clone(), seed)?;
    let mut log = TrainLog::default();
    if config.max_epochs == 0 {
        return Ok((model, log));
    }
    if train_set.is_empty() {
        return Err(LmError::Argument("empty training set".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_STREAM);
    let mut adam = Adam::new(model.params.data.len());
    let mut lr = config.learning_rate;
    let mut best = (f64::INFINITY, model.params.data.clone());
    let mut bad_epochs = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut s1, mut s2, mut s3, mut seen) = (0.0, 0.0, 0.0, 0usize);
        let steps = order.len().div_ceil(config.batch_size);
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<LabeledSequence> = idx.iter().map(|&i| train_set[i].clone()).collect();
            let (losses, grad) = model
                .loss_and_gradient(&batch)
                .map_err(|e| LmError::Training { epoch, step, message: e.to_string() })?;
            if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
                return Err(LmError::Training {
                    epoch,
                    step,
                    message: format!("non-finite gradient at parameter {pos}"),
                });
            }
            let w = batch.len() as f64;
            s1 += losses.l1 * w;
            s2 += losses.l2 * w;
            s3 += losses.l3 * w;
            seen += batch.len();
            match config.optimizer {
                Optimizer::Adam => adam.update(&mut model.params.data, &grad, lr),
                Optimizer::Sgd => {
                    for (p, g) in model.params.data.iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
            }
            if !model.params.all_finite() {
                return Err(LmError::Training { epoch, step, message: "parameters became non-finite".into() });
            }
        }
        let n = seen as f64;
        let valid_l3 = if valid_set.is_empty() {
            model.loss_l3(train_set)
        } else {
            model.loss_l3(valid_set)
        }
        .map_err(|e| LmError::Training {
            epoch,
            step: steps - 1,
            message: format!("monitored loss after update: {e}"),
        })?;
        log.epochs.push(EpochLog {
            epoch,
            train_l1: s1 / n,
            train_l2: s2 / n,
            train_l3: s3 / n,
            valid_l3,
            learning_rate: lr,
        });
        if valid_l3 < best.0 {
            best = (valid_l3, model.params.data.clone());
            log.best_epoch = Some(epoch);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            lr *= config.lr_decay;
            if bad_epochs >= config.patience {
                log.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    model.params.data = best.1;
    Ok((model, log))
}
