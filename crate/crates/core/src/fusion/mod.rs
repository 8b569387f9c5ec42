//! Max-fusion of the three detectors and threshold tuning for the
//! language-model path.

mod tune;

pub use tune::{hard_score, midpoint_grid, surrogate, surrogate_gradient, tune_tau, TuneConfig, TuneMetric, TuneResult, TuneSample};

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::anomaly::{AbdVerdict, AnomalyError, AnomalyProfile};
use crate::dataset::{DatasetSchema, PreparedFlow};
use crate::lm::{LanguageModel, LmError, LmVerdict};
use crate::signature::{SbdVerdict, SignatureSet};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("anomaly detector: {0}")]
    Anomaly(#[from] AnomalyError),
    #[error("language model: {0}")]
    Lm(#[from] LmError),
    #[error("tuning: {0}")]
    Tuning(String),
}

/// Whether `hybrid_detect` stops at the first positive component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    #[default]
    ShortCircuit,
    Exhaustive,
}

/// Per-flow outcome. A component that was not evaluated is `None`: either
/// skipped by short-circuiting or, for the two-way fusion, not part of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub flow_id: usize,
    pub sbd: Option<SbdVerdict>,
    pub abd: Option<AbdVerdict>,
    pub lm: Option<LmVerdict>,
    pub decision: bool,
    /// Continuous score in [0, 1] for ROC analysis; see [`hybrid_score`].
    pub score: f64,
}

impl Verdict {
    fn fuse(flow_id: usize, sbd: Option<SbdVerdict>, abd: Option<(AbdVerdict, f64)>, lm: Option<LmVerdict>) -> Self {
        let decision = sbd.as_ref().is_some_and(|v| v.detected)
            || abd.is_some_and(|(v, _)| v.detected)
            || lm.is_some_and(|v| v.detected);
        let score = hybrid_score(
            sbd.as_ref().map(|v| v.detected),
            abd.map(|(v, theta)| (v.score, theta)),
            lm.map(|v| v.probability),
        );
        Self { flow_id, sbd, abd: abd.map(|(v, _)| v), lm, decision, score }
    }

    /// One JSON object; skipped components carry `"skipped": true` and null
    /// decision/score.
    pub fn to_json(&self) -> Json {
        fn part(ran: bool, decision: Option<bool>, score: Option<f64>) -> Json {
            json!({
                "decision": decision.map(u8::from),
                "score": score,
                "skipped": !ran,
            })
        }
        let mut sbd = part(self.sbd.is_some(), self.sbd.as_ref().map(|v| v.detected), None);
        sbd["matched"] = json!(self.sbd.as_ref().map(|v| v.matched.clone()).unwrap_or_default());
        json!({
            "flow": self.flow_id,
            "sbd": sbd,
            "abd": part(self.abd.is_some(), self.abd.map(|v| v.detected), self.abd.map(|v| v.score)),
            "lm": part(self.lm.is_some(), self.lm.map(|v| v.detected), self.lm.map(|v| v.probability)),
            "hybrid": u8::from(self.decision),
            "hybrid_score": self.score,
        })
    }
}

/// Continuous fused score: the maximum over the evaluated components of
/// the signature decision (0 or 1), `clamp(score / 2θ, 0, 1)` for the
/// anomaly score (so θ maps to 0.5), and the threat probability.
pub fn hybrid_score(sbd: Option<bool>, abd: Option<(f64, f64)>, lm: Option<f64>) -> f64 {
    let mut s: f64 = 0.0;
    if let Some(d) = sbd {
        s = s.max(if d { 1.0 } else { 0.0 });
    }
    if let Some((score, theta)) = abd {
        s = s.max(normalized_anomaly(score, theta));
    }
    if let Some(p) = lm {
        s = s.max(p);
    }
    s
}

/// `clamp(score / 2θ, 0, 1)`; with θ = 0 any positive score maps to 1.
pub fn normalized_anomaly(score: f64, theta: f64) -> f64 {
    if theta > 0.0 {
        (score / (2.0 * theta)).clamp(0.0, 1.0)
    } else if score > theta {
        1.0
    } else {
        0.0
    }
}

/// The fitted components, borrowed for the duration of detection.
#[derive(Debug, Clone, Copy)]
pub struct Detectors<'a> {
    pub schema: &'a DatasetSchema,
    pub signatures: &'a SignatureSet,
    pub profile: &'a AnomalyProfile,
    pub lm: &'a LanguageModel,
}

impl Detectors<'_> {
    pub fn sbd(&self, flow: &PreparedFlow) -> SbdVerdict {
        self.signatures.detect_sbd(self.schema, &flow.raw, &flow.tokens)
    }

    pub fn abd(&self, flow: &PreparedFlow) -> Result<AbdVerdict, FusionError> {
        Ok(self.profile.detect_record(&flow.scaled)?)
    }

    pub fn lm(&self, flow: &PreparedFlow) -> Result<LmVerdict, FusionError> {
        Ok(self.lm.detect_gpt2(&flow.tokens)?)
    }

    fn abd_with_theta(&self, flow: &PreparedFlow) -> Result<(AbdVerdict, f64), FusionError> {
        let v = self.abd(flow)?;
        Ok((v, self.profile.threshold_value()?))
    }

    /// Two-way fusion: `max(SBD, ABD)`. Both components always run.
    pub fn hybrid_traditional(&self, flow_id: usize, flow: &PreparedFlow) -> Result<Verdict, FusionError> {
        let sbd = self.sbd(flow);
        let abd = self.abd_with_theta(flow)?;
        Ok(Verdict::fuse(flow_id, Some(sbd), Some(abd), None))
    }

    /// Three-way fusion: `max(SBD, ABD, LM)`, evaluated cheapest first.
    pub fn hybrid_detect(&self, flow_id: usize, flow: &PreparedFlow, mode: FusionMode) -> Result<Verdict, FusionError> {
        let short = mode == FusionMode::ShortCircuit;
        let sbd = self.sbd(flow);
        if short && sbd.detected {
            return Ok(Verdict::fuse(flow_id, Some(sbd), None, None));
        }
        let abd = self.abd_with_theta(flow)?;
        if short && abd.0.detected {
            return Ok(Verdict::fuse(flow_id, Some(sbd), Some(abd), None));
        }
        let lm = self.lm(flow)?;
        Ok(Verdict::fuse(flow_id, Some(sbd), Some(abd), Some(lm)))
    }
}
