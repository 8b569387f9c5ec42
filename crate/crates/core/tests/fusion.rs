use nids_core::anomaly::{AnomalyProfile, DEFAULT_QUANTILE};
use nids_core::dataset::{default_rules_text, synth_dataset, PreparedFlow, Preprocessor, SynthConfig};
use nids_core::fusion::{
    hard_score, midpoint_grid, surrogate, surrogate_gradient, tune_tau, Detectors, FusionMode, TuneConfig, TuneMetric,
    TuneSample,
};
use nids_core::lm::{LanguageModel, LmConfig};
use nids_core::metrics::{confusion, derive_metrics};
use nids_core::pipeline::{bind_lm_config, fit_profile, ComponentScores};
use nids_core::signature::SignatureSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    pre: Preprocessor,
    rules: SignatureSet,
    profile: AnomalyProfile,
    lm: LanguageModel,
    flows: Vec<PreparedFlow>,
}

impl Fixture {
    /// Untrained small model with τ at the median threat probability, so
    /// the LM path fires on about half the flows.
    fn new(seed: u64, n: usize) -> Self {
        let ds = synth_dataset(&SynthConfig::new(n, n / 10, n / 10, n / 10), seed).unwrap();
        let pre = Preprocessor::fit(&ds, 16, 16).unwrap();
        let profile = fit_profile(&pre.apply_dataset(&ds).unwrap(), DEFAULT_QUANTILE).unwrap();
        let cfg = bind_lm_config(&LmConfig { layers: 1, d_model: 16, heads: 2, d_ff: 32, init_std: 0.5, ..LmConfig::default() }, &pre);
        let mut lm = LanguageModel::init(cfg, seed).unwrap();
        let flows = pre.prepare_all(&ds).unwrap();
        let mut p: Vec<f64> = flows.iter().map(|f| lm.threat_probability(&f.tokens).unwrap()).collect();
        p.sort_by(f64::total_cmp);
        lm.config.tau = p[p.len() / 2];
        let rules = SignatureSet::from_rule_text(default_rules_text()).unwrap();
        Self { pre, rules, profile, lm, flows }
    }

    fn detectors(&self) -> Detectors<'_> {
        Detectors { schema: &self.pre.schema, signatures: &self.rules, profile: &self.profile, lm: &self.lm }
    }
}

#[test]
fn decisions_equal_elementwise_max_of_components() {
    let fx = Fixture::new(1, 800);
    let det = fx.detectors();
    assert!(fx.flows.len() >= 1000);
    for (i, f) in fx.flows.iter().enumerate() {
        let sbd = fx.rules.detect_sbd(&fx.pre.schema, &f.raw, &f.tokens).detected;
        let abd = fx.profile.detect_record(&f.scaled).unwrap().detected;
        let lm = fx.lm.detect_gpt2(&f.tokens).unwrap().detected;
        assert_eq!(det.hybrid_traditional(i, f).unwrap().decision, sbd || abd);
        let full = det.hybrid_detect(i, f, FusionMode::Exhaustive).unwrap();
        assert_eq!(full.decision, sbd || abd || lm);
        let short = det.hybrid_detect(i, f, FusionMode::ShortCircuit).unwrap();
        assert_eq!(short.decision, full.decision);
        if sbd {
            assert!(short.abd.is_none() && short.lm.is_none());
        }
    }
}

#[test]
fn hybrid_dominates_every_component() {
    for seed in 0..5 {
        let fx = Fixture::new(100 + seed, 400);
        let s = ComponentScores::collect(&fx.detectors(), &fx.flows).unwrap();
        let hybrid = confusion(&s.hybrid(), &s.labels).unwrap();
        for component in [&s.sbd, &s.abd, &s.lm] {
            let c = confusion(component, &s.labels).unwrap();
            assert!(derive_metrics(&hybrid).recall >= derive_metrics(&c).recall);
            assert!(hybrid.fpr() >= c.fpr());
        }
    }
}

#[test]
fn raising_tau_never_adds_lm_positives() {
    let mut fx = Fixture::new(3, 300);
    let before: Vec<bool> = fx.flows.iter().map(|f| fx.lm.detect_gpt2(&f.tokens).unwrap().detected).collect();
    fx.lm.config.tau = (fx.lm.config.tau + 0.05).min(1.0);
    for (f, b) in fx.flows.iter().zip(before) {
        assert!(b || !fx.lm.detect_gpt2(&f.tokens).unwrap().detected);
    }
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<TuneSample> {
    loop {
        let s: Vec<TuneSample> = (0..n)
            .map(|_| {
                let threat = rng.random_bool(0.3);
                // threats lean high, with overlap
                let p: f64 = if threat { rng.random_range(0.2..1.0) } else { rng.random_range(0.0..0.8) };
                TuneSample { probability: (p * 1000.0).round() / 1000.0, frozen: rng.random_bool(0.1), threat }
            })
            .collect();
        if s.iter().any(|x| x.threat) && s.iter().any(|x| !x.threat) {
            return s;
        }
    }
}

/// Best hard score over every threshold that changes the decision vector,
/// enumerated independently of the tuner.
fn exhaustive_optimum(samples: &[TuneSample], metric: TuneMetric) -> f64 {
    let mut p: Vec<f64> = samples.iter().map(|s| s.probability).collect();
    p.sort_by(f64::total_cmp);
    p.dedup();
    let mut thresholds = vec![-1.0, 2.0];
    thresholds.extend(p.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    thresholds.iter().map(|&t| hard_score(samples, t, metric)).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn tuned_threshold_reaches_grid_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for metric in [TuneMetric::F1, TuneMetric::Accuracy] {
        let cfg = TuneConfig { metric, ..TuneConfig::default() };
        for _ in 0..10 {
            let samples = random_samples(&mut rng, 200);
            let r = tune_tau(&samples, &cfg).unwrap();
            assert!((0.0..=1.0).contains(&r.tau));
            assert_eq!(r.score, hard_score(&samples, r.tau, metric));
            assert_eq!(r.score, exhaustive_optimum(&samples, metric));
        }
    }
}

#[test]
fn tuning_is_deterministic() {
    let samples = random_samples(&mut ChaCha8Rng::seed_from_u64(4), 150);
    let a = tune_tau(&samples, &TuneConfig::default()).unwrap();
    assert_eq!(a, tune_tau(&samples, &TuneConfig::default()).unwrap());
    assert!(midpoint_grid(&samples).contains(&a.tau) || a.tau == a.descent_tau);
}

#[test]
fn surrogate_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for metric in [TuneMetric::F1, TuneMetric::Accuracy] {
        for _ in 0..50 {
            let samples = random_samples(&mut rng, 60);
            let tau: f64 = rng.random_range(0.05..0.95);
            let t = 0.02;
            let h = 1e-6;
            let fd = (surrogate(&samples, tau + h, t, metric) - surrogate(&samples, tau - h, t, metric)) / (2.0 * h);
            let g = surrogate_gradient(&samples, tau, t, metric);
            assert!((fd - g).abs() < 1e-6, "{metric:?} tau {tau}: {g} vs {fd}");
        }
    }
}

#[test]
fn verdict_json_lines_parse_back() {
    let fx = Fixture::new(9, 100);
    let det = fx.detectors();
    for (i, f) in fx.flows.iter().enumerate().take(50) {
        let v = det.hybrid_detect(i, f, FusionMode::ShortCircuit).unwrap();
        let line = v.to_json().to_string();
        assert!(!line.contains('\n'));
        let back: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(back["hybrid"], u8::from(v.decision));
        assert_eq!(back["flow"], i);
        assert_eq!(back["lm"]["skipped"], v.lm.is_none());
    }
}
