//! Confusion-derived metrics, ROC analysis and per-sample latency.

use std::fmt::Display;
use std::time::Instant;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("ROC analysis needs both classes")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("detector failed during benchmark: {0}")]
    Detector(String),
}

/// Counts with attack as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// False-positive rate, 0 when there are no negatives.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_lengths(left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        return Err(MetricsError::Length { left, right });
    }
    if left == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn confusion(decisions: &[bool], labels: &[bool]) -> Result<Confusion, MetricsError> {
    check_lengths(decisions.len(), labels.len())?;
    let mut c = Confusion::default();
    for (&d, &l) in decisions.iter().zip(labels) {
        match (d, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Accuracy, precision, recall and F1; any zero denominator yields 0.
pub fn derive_metrics(c: &Confusion) -> Derived {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Derived {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricsError> {
    check_lengths(scores.len(), labels.len())?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// Pair-count AUC: the fraction of (attack, benign) pairs ordered
/// correctly, ties counting one half. Computed through tie-averaged ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Flows with score >= threshold are flagged.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points from (0, 0) at threshold +inf down to (1, 1), one per
/// distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, MetricsError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == t {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: t, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_curve`].
pub fn roc_auc_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let pts = roc_curve(scores, labels)?;
    Ok(pts.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub detector: String,
    pub flows: usize,
    pub repetitions: usize,
    pub samples: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

/// Time `detect(i)` once per flow index per repetition, after `warmup`
/// untimed calls, on the calling thread.
pub fn latency_bench<E: Display>(
    detector: &str,
    flows: usize,
    warmup: usize,
    repetitions: usize,
    mut detect: impl FnMut(usize) -> Result<(), E>,
) -> Result<LatencyStats, MetricsError> {
    if flows == 0 {
        return Err(MetricsError::Argument("no flows to benchmark".into()));
    }
    if repetitions == 0 {
        return Err(MetricsError::Argument("repetitions must be positive".into()));
    }
    let fail = |e: E| MetricsError::Detector(format!("{detector}: {e}"));
    for i in 0..warmup {
        detect(i % flows).map_err(fail)?;
    }
    let mut us = Vec::with_capacity(flows * repetitions);
    for _ in 0..repetitions {
        for i in 0..flows {
            let start = Instant::now();
            let r = detect(i);
            let elapsed = start.elapsed();
            r.map_err(fail)?;
            us.push(elapsed.as_secs_f64() * 1e6);
        }
    }
    let mean_us = us.iter().sum::<f64>() / us.len() as f64;
    us.sort_by(f64::total_cmp);
    let rank = |q: f64| us[((q * us.len() as f64).ceil() as usize).clamp(1, us.len()) - 1];
    Ok(LatencyStats {
        detector: detector.to_string(),
        flows,
        repetitions,
        samples: us.len(),
        mean_us,
        p50_us: rank(0.5),
        p95_us: rank(0.95),
        min_us: us[0],
        max_us: us[us.len() - 1],
    })
}

/// Quality figures for one detector on a labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorReport {
    pub detector: String,
    pub confusion: Confusion,
    pub metrics: Derived,
    pub auc: Option<f64>,
}

impl DetectorReport {
    pub fn new(detector: &str, decisions: &[bool], scores: &[f64], labels: &[bool]) -> Result<Self, MetricsError> {
        let confusion = confusion(decisions, labels)?;
        let auc = match roc_auc(scores, labels) {
            Ok(a) => Some(a),
            Err(MetricsError::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { detector: detector.to_string(), confusion, metrics: derive_metrics(&confusion), auc })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<DetectorReport>,
    pub latency: Vec<LatencyStats>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn row(&self, detector: &str) -> Option<&DetectorReport> {
        self.rows.iter().find(|r| r.detector == detector)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("detector,samples,tp,fp,tn,fn,accuracy,precision,recall,f1,fpr,auc\n");
        for r in &self.rows {
            let (c, m) = (&r.confusion, &r.metrics);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.detector,
                c.total(),
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                c.fpr(),
                opt(r.auc)
            ));
        }
        out
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let (c, m, d) = (&r.confusion, &r.metrics, &r.detector);
            for (k, v) in [
                ("samples", c.total().to_string()),
                ("tp", c.tp.to_string()),
                ("fp", c.fp.to_string()),
                ("tn", c.tn.to_string()),
                ("fn", c.fn_.to_string()),
                ("accuracy", m.accuracy.to_string()),
                ("precision", m.precision.to_string()),
                ("recall", m.recall.to_string()),
                ("f1", m.f1.to_string()),
                ("fpr", c.fpr().to_string()),
                ("auc", opt(r.auc)),
            ] {
                out.push_str(&format!("{d}.{k} = {v}\n"));
            }
        }
        for l in &self.latency {
            let d = &l.detector;
            for (k, v) in [
                ("latency_mean_us", l.mean_us),
                ("latency_p50_us", l.p50_us),
                ("latency_p95_us", l.p95_us),
            ] {
                out.push_str(&format!("{d}.{k} = {v}\n"));
            }
        }
        out
    }
}

pub fn latency_csv(rows: &[LatencyStats]) -> String {
    let mut out = String::from("detector,flows,repetitions,samples,mean_us,p50_us,p95_us,min_us,max_us\n");
    for l in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            l.detector, l.flows, l.repetitions, l.samples, l.mean_us, l.p50_us, l.p95_us, l.min_us, l.max_us
        ));
    }
    out
}

/// Plot data: `detector,threshold,fpr,tpr`.
pub fn roc_csv(curves: &[(&str, Vec<RocPoint>)]) -> String {
    let mut out = String::from("detector,threshold,fpr,tpr\n");
    for (name, pts) in curves {
        for p in pts {
            out.push_str(&format!("{name},{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
    }
    out
}
