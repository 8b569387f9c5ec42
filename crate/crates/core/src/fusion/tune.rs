use serde::{Deserialize, Serialize};

use super::FusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TuneMetric {
    #[default]
    F1,
    Accuracy,
}

impl TuneMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            TuneMetric::F1 => "f1",
            TuneMetric::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    /// Logistic temperature of the smoothed LM decision.
    pub temperature: f64,
    pub step: f64,
    pub iterations: usize,
    /// Starting threshold for the descent.
    pub initial_tau: f64,
    pub metric: TuneMetric,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { temperature: 0.02, step: 0.05, iterations: 500, initial_tau: 0.5, metric: TuneMetric::F1 }
    }
}

/// One validation flow: LM threat probability, whether another component
/// already flagged it (frozen), and its true label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneSample {
    pub probability: f64,
    pub frozen: bool,
    pub threat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    pub tau: f64,
    /// Hard metric value at `tau`.
    pub score: f64,
    /// Where the descent ended, before snapping.
    pub descent_tau: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn metric_value(metric: TuneMetric, tp: f64, predicted: f64, positives: f64, negatives_flagged: f64, n: f64) -> f64 {
    match metric {
        TuneMetric::F1 => {
            let denom = predicted + positives;
            if denom > 0.0 {
                2.0 * tp / denom
            } else {
                0.0
            }
        }
        TuneMetric::Accuracy => (tp + (n - positives - negatives_flagged)) / n,
    }
}

/// Hard metric of the fused decision `frozen || p > tau`.
pub fn hard_score(samples: &[TuneSample], tau: f64, metric: TuneMetric) -> f64 {
    let (mut tp, mut fp, mut pos) = (0.0, 0.0, 0.0);
    for s in samples {
        let d = s.frozen || s.probability > tau;
        if s.threat {
            pos += 1.0;
            if d {
                tp += 1.0;
            }
        } else if d {
            fp += 1.0;
        }
    }
    metric_value(metric, tp, tp + fp, pos, fp, samples.len() as f64)
}

/// Smoothed metric with each LM decision replaced by
/// `σ((p - tau) / T)`, fused as max with the frozen decisions.
pub fn surrogate(samples: &[TuneSample], tau: f64, temperature: f64, metric: TuneMetric) -> f64 {
    let (mut tp, mut fp, mut pos) = (0.0, 0.0, 0.0);
    for s in samples {
        let d = if s.frozen { 1.0 } else { sigmoid((s.probability - tau) / temperature) };
        if s.threat {
            pos += 1.0;
            tp += d;
        } else {
            fp += d;
        }
    }
    metric_value(metric, tp, tp + fp, pos, fp, samples.len() as f64)
}

/// Analytic derivative of [`surrogate`] with respect to `tau`.
pub fn surrogate_gradient(samples: &[TuneSample], tau: f64, temperature: f64, metric: TuneMetric) -> f64 {
    let (mut tp, mut fp, mut pos, mut dtp, mut dfp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let (d, dd) = if s.frozen {
            (1.0, 0.0)
        } else {
            let v = sigmoid((s.probability - tau) / temperature);
            (v, -v * (1.0 - v) / temperature)
        };
        if s.threat {
            pos += 1.0;
            tp += d;
            dtp += dd;
        } else {
            fp += d;
            dfp += dd;
        }
    }
    match metric {
        TuneMetric::F1 => {
            let denom = tp + fp + pos;
            if denom > 0.0 {
                2.0 * (dtp * denom - tp * (dtp + dfp)) / (denom * denom)
            } else {
                0.0
            }
        }
        TuneMetric::Accuracy => (dtp - dfp) / samples.len() as f64,
    }
}

/// Candidate thresholds that realize every distinct hard decision vector:
/// midpoints between adjacent distinct probabilities, the largest
/// probability (nothing above it) and half the smallest (everything above
/// it, when that is positive).
pub fn midpoint_grid(samples: &[TuneSample]) -> Vec<f64> {
    let mut p: Vec<f64> = samples.iter().map(|s| s.probability).collect();
    p.sort_by(f64::total_cmp);
    p.dedup();
    let mut grid: Vec<f64> = p.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if let (Some(&lo), Some(&hi)) = (p.first(), p.last()) {
        if lo > 0.0 {
            grid.push(lo / 2.0);
        }
        grid.push(hi);
    }
    grid
}

/// Gradient ascent on the smoothed metric, then a snap to the best hard
/// metric among the descent result and the midpoint grid. Ties go to the
/// larger threshold.
pub fn tune_tau(samples: &[TuneSample], config: &TuneConfig) -> Result<TuneResult, FusionError> {
    if !samples.iter().any(|s| s.threat) || samples.iter().all(|s| s.threat) {
        return Err(FusionError::Tuning("validation set must contain both classes".into()));
    }
    if let Some(s) = samples.iter().find(|s| !(0.0..=1.0).contains(&s.probability)) {
        return Err(FusionError::Tuning(format!("probability {} outside [0, 1]", s.probability)));
    }
    if !(config.temperature > 0.0 && config.step > 0.0) {
        return Err(FusionError::Tuning("temperature and step must be positive".into()));
    }
    let mut tau = config.initial_tau.clamp(0.0, 1.0);
    for _ in 0..config.iterations {
        let g = surrogate_gradient(samples, tau, config.temperature, config.metric);
        tau = (tau + config.step * g).clamp(0.0, 1.0);
    }
    let descent_tau = tau;
    let mut candidates = midpoint_grid(samples);
    candidates.push(descent_tau);
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &c in &candidates {
        let s = hard_score(samples, c, config.metric);
        if s > best.0 || (s == best.0 && c > best.1) {
            best = (s, c);
        }
    }
    Ok(TuneResult { tau: best.1, score: best.0, descent_tau })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(p: f64, threat: bool) -> TuneSample {
        TuneSample { probability: p, frozen: false, threat }
    }

    #[test]
    fn separable_probabilities_reach_perfect_f1() {
        let samples = [s(0.95, true), s(0.91, true), s(0.05, false), s(0.02, false), s(0.08, false)];
        let r = tune_tau(&samples, &TuneConfig::default()).unwrap();
        assert_eq!(r.score, 1.0);
        assert!(r.tau >= 0.08 && r.tau < 0.91);
    }

    #[test]
    fn plateau_ties_go_to_larger_tau() {
        // LM can only add false positives: every tau >= 0.5 is optimal.
        let mut samples = vec![s(0.5, false); 8];
        samples.push(TuneSample { probability: 0.5, frozen: true, threat: true });
        let r = tune_tau(&samples, &TuneConfig::default()).unwrap();
        assert!(r.tau >= 0.5);
        assert_eq!(r.score, 1.0);
        let with_descent_low = TuneConfig { iterations: 0, initial_tau: 0.0, ..TuneConfig::default() };
        assert_eq!(tune_tau(&samples, &with_descent_low).unwrap().tau, 0.5);
    }

    #[test]
    fn single_class_is_rejected() {
        let samples = [s(0.5, false), s(0.2, false)];
        assert!(matches!(tune_tau(&samples, &TuneConfig::default()), Err(FusionError::Tuning(_))));
        assert!(tune_tau(&[], &TuneConfig::default()).is_err());
    }

    #[test]
    fn grid_covers_both_extremes() {
        let samples = [s(0.2, true), s(0.6, false), s(0.6, true)];
        assert_eq!(midpoint_grid(&samples), vec![0.4, 0.1, 0.6]);
        assert_eq!(hard_score(&samples, 0.6, TuneMetric::F1), 0.0);
        assert_eq!(hard_score(&samples, 0.1, TuneMetric::F1), 0.8);
        assert_eq!(hard_score(&samples, 0.1, TuneMetric::Accuracy), 2.0 / 3.0);
    }

    #[test]
    fn frozen_positives_are_exact() {
        let frozen = TuneSample { probability: 0.0, frozen: true, threat: true };
        assert_eq!(surrogate(&[frozen], 0.9, 0.02, TuneMetric::F1), 1.0);
        assert_eq!(surrogate_gradient(&[frozen], 0.9, 0.02, TuneMetric::F1), 0.0);
    }
}
