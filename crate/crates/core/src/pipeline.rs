//! End-to-end fitting, evaluation and benchmarking on top of the detector
//! modules. The CLI persists each stage; tests use these directly.

use thiserror::Error;

use crate::anomaly::{AnomalyError, AnomalyProfile};
use crate::dataset::{split, Dataset, DatasetError, PreparedFlow, Preprocessor};
use crate::fusion::{normalized_anomaly, tune_tau, Detectors, FusionError, FusionMode, TuneConfig, TuneResult, TuneSample, Verdict};
use crate::lm::{train, LabeledSequence, LanguageModel, LmConfig, LmError, TrainLog};
use crate::metrics::{latency_bench, roc_curve, DetectorReport, EvalReport, LatencyStats, MetricsError, RocPoint};
use crate::signature::SignatureSet;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("anomaly detector: {0}")]
    Anomaly(#[from] AnomalyError),
    #[error("language model: {0}")]
    Lm(#[from] LmError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Detector names used in reports, in report order.
pub const SBD: &str = "SBD";
pub const ABD: &str = "ABD";
pub const LM: &str = "LM";
pub const TRADITIONAL: &str = "Traditional";
pub const HYBRID: &str = "Hybrid";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub bins: u32,
    /// Context window k, shared by the tokenizer and the model.
    pub context: usize,
    pub quantile: f64,
    /// Share of the training split held out for early stopping and τ tuning.
    pub validation_fraction: f64,
    /// Model hyperparameters; vocabulary size and context are filled in
    /// from the fitted preprocessing state.
    pub lm: LmConfig,
    /// `None` keeps `lm.tau` as given.
    pub tune: Option<TuneConfig>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bins: 16,
            context: 32,
            quantile: crate::anomaly::DEFAULT_QUANTILE,
            validation_fraction: 0.2,
            lm: LmConfig::default(),
            tune: Some(TuneConfig::default()),
            seed: 0,
        }
    }
}

/// Every fitted component.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub preprocessor: Preprocessor,
    pub signatures: SignatureSet,
    pub profile: AnomalyProfile,
    pub lm: LanguageModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub train_log: TrainLog,
    pub tune: Option<TuneResult>,
}

pub fn labeled_sequences(flows: &[PreparedFlow]) -> Vec<LabeledSequence> {
    flows
        .iter()
        .map(|f| LabeledSequence { tokens: f.tokens.clone(), threat: f.raw.is_attack() })
        .collect()
}

/// Profile and threshold from the benign records of an already scaled set.
pub fn fit_profile(scaled: &Dataset, quantile: f64) -> Result<AnomalyProfile> {
    let benign = scaled.benign();
    let mut profile = AnomalyProfile::fit(&benign)?;
    profile.fit_threshold(&benign, quantile)?;
    Ok(profile)
}

/// Model configuration bound to a fitted preprocessor.
pub fn bind_lm_config(base: &LmConfig, pre: &Preprocessor) -> LmConfig {
    LmConfig { vocab_size: pre.vocab.size(), context: pre.context, ..base.clone() }
}

/// Tuning inputs: threat probability, frozen SBD/ABD decision and label.
pub fn tune_samples(det: &Detectors<'_>, flows: &[PreparedFlow]) -> Result<Vec<TuneSample>> {
    flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let v = det.hybrid_detect(i, f, FusionMode::Exhaustive)?;
            let frozen = v.sbd.is_some_and(|s| s.detected) || v.abd.is_some_and(|a| a.detected);
            let probability = v.lm.map(|l| l.probability).unwrap_or(0.0);
            Ok(TuneSample { probability, frozen, threat: f.raw.is_attack() })
        })
        .collect()
}

impl Pipeline {
    /// Fit preprocessing on `train`, hold out a validation share, fit the
    /// anomaly profile on the remaining benign flows, train the model and
    /// optionally tune τ on the held-out flows.
    pub fn fit(train_set: &Dataset, signatures: SignatureSet, cfg: &PipelineConfig) -> Result<(Self, FitReport)> {
        if train_set.is_empty() {
            return Err(PipelineError::Argument("empty training set".into()));
        }
        let preprocessor = Preprocessor::fit(train_set, cfg.bins, cfg.context)?;
        let (fit_part, valid_part) = split(train_set, 1.0 - cfg.validation_fraction, cfg.seed)?;
        let fit_flows = preprocessor.prepare_all(&fit_part)?;
        let valid_flows = preprocessor.prepare_all(&valid_part)?;
        let profile = fit_profile(&preprocessor.apply_dataset(&fit_part)?, cfg.quantile)?;
        let lm_cfg = bind_lm_config(&cfg.lm, &preprocessor);
        let (lm, train_log) = train(&labeled_sequences(&fit_flows), &labeled_sequences(&valid_flows), &lm_cfg, cfg.seed)?;
        let mut pipeline = Self { preprocessor, signatures, profile, lm };
        let tune = match &cfg.tune {
            Some(tc) => {
                let samples = tune_samples(&pipeline.detectors(), &valid_flows)?;
                let r = tune_tau(&samples, tc)?;
                pipeline.lm.config.tau = r.tau;
                Some(r)
            }
            None => None,
        };
        Ok((pipeline, FitReport { train_log, tune }))
    }

    pub fn detectors(&self) -> Detectors<'_> {
        Detectors { schema: &self.preprocessor.schema, signatures: &self.signatures, profile: &self.profile, lm: &self.lm }
    }

    pub fn prepare(&self, data: &Dataset) -> Result<Vec<PreparedFlow>> {
        Ok(self.preprocessor.prepare_all(data)?)
    }
}

/// Every component evaluated on every flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScores {
    pub labels: Vec<bool>,
    pub sbd: Vec<bool>,
    pub abd: Vec<bool>,
    pub abd_score: Vec<f64>,
    pub lm: Vec<bool>,
    pub lm_probability: Vec<f64>,
    pub verdicts: Vec<Verdict>,
}

impl ComponentScores {
    pub fn collect(det: &Detectors<'_>, flows: &[PreparedFlow]) -> Result<Self> {
        let mut s = Self {
            labels: Vec::with_capacity(flows.len()),
            sbd: Vec::new(),
            abd: Vec::new(),
            abd_score: Vec::new(),
            lm: Vec::new(),
            lm_probability: Vec::new(),
            verdicts: Vec::with_capacity(flows.len()),
        };
        for (i, f) in flows.iter().enumerate() {
            let v = det.hybrid_detect(i, f, FusionMode::Exhaustive)?;
            let (sbd, abd, lm) = match (&v.sbd, v.abd, v.lm) {
                (Some(a), Some(b), Some(c)) => (a.detected, b, c),
                _ => unreachable!("exhaustive fusion evaluates every component"),
            };
            s.labels.push(f.raw.is_attack());
            s.sbd.push(sbd);
            s.abd.push(abd.detected);
            s.abd_score.push(abd.score);
            s.lm.push(lm.detected);
            s.lm_probability.push(lm.probability);
            s.verdicts.push(v);
        }
        Ok(s)
    }

    pub fn traditional(&self) -> Vec<bool> {
        self.sbd.iter().zip(&self.abd).map(|(a, b)| *a || *b).collect()
    }

    pub fn hybrid(&self) -> Vec<bool> {
        self.verdicts.iter().map(|v| v.decision).collect()
    }

    /// Per detector: name, decisions, ROC score.
    pub fn systems(&self, theta: f64) -> Vec<(&'static str, Vec<bool>, Vec<f64>)> {
        let bin = |d: &[bool]| d.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        let traditional_score = self
            .sbd
            .iter()
            .zip(&self.abd_score)
            .map(|(&s, &a)| if s { 1.0 } else { normalized_anomaly(a, theta) })
            .collect();
        vec![
            (SBD, self.sbd.clone(), bin(&self.sbd)),
            (ABD, self.abd.clone(), self.abd_score.clone()),
            (LM, self.lm.clone(), self.lm_probability.clone()),
            (TRADITIONAL, self.traditional(), traditional_score),
            (HYBRID, self.hybrid(), self.verdicts.iter().map(|v| v.score).collect()),
        ]
    }
}

/// ROC points per detector name.
pub type RocCurves = Vec<(&'static str, Vec<RocPoint>)>;

/// Report rows for SBD, ABD, LM, Traditional and Hybrid, plus ROC points
/// for each (skipped when the set has a single class).
pub fn evaluate(det: &Detectors<'_>, flows: &[PreparedFlow]) -> Result<(EvalReport, RocCurves)> {
    if flows.iter().any(|f| f.raw.label.is_none()) {
        return Err(PipelineError::Argument("evaluation needs a labeled set".into()));
    }
    let scores = ComponentScores::collect(det, flows)?;
    let theta = det.profile.threshold_value()?;
    let mut report = EvalReport::default();
    let mut curves = Vec::new();
    for (name, decisions, s) in scores.systems(theta) {
        report.rows.push(DetectorReport::new(name, &decisions, &s, &scores.labels)?);
        match roc_curve(&s, &scores.labels) {
            Ok(points) => curves.push((name, points)),
            Err(MetricsError::SingleClass) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok((report, curves))
}

pub const BENCH_ROWS: [&str; 6] = [SBD, ABD, LM, TRADITIONAL, "Hybrid-short-circuit", "Hybrid-exhaustive"];

/// Per-sample latency of each detector configuration over the same flows.
pub fn bench(det: &Detectors<'_>, flows: &[PreparedFlow], warmup: usize, repetitions: usize) -> Result<Vec<LatencyStats>> {
    let mut rows = Vec::with_capacity(BENCH_ROWS.len());
    for name in BENCH_ROWS {
        let stats = latency_bench(name, flows.len(), warmup, repetitions, |i| -> std::result::Result<(), FusionError> {
            let f = &flows[i];
            match name {
                SBD => {
                    std::hint::black_box(det.sbd(f));
                }
                ABD => {
                    std::hint::black_box(det.abd(f)?);
                }
                LM => {
                    std::hint::black_box(det.lm(f)?);
                }
                TRADITIONAL => {
                    std::hint::black_box(det.hybrid_traditional(i, f)?);
                }
                "Hybrid-short-circuit" => {
                    std::hint::black_box(det.hybrid_detect(i, f, FusionMode::ShortCircuit)?);
                }
                _ => {
                    std::hint::black_box(det.hybrid_detect(i, f, FusionMode::Exhaustive)?);
                }
            }
            Ok(())
        })?;
        rows.push(stats);
    }
    Ok(rows)
}
