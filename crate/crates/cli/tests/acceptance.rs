//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nids_cli::commands::{self, Overrides, Run};
use nids_cli::RunConfig;
use nids_core::anomaly::DEFAULT_QUANTILE;
use nids_core::dataset::{
    default_rules_text, synth_dataset, Dataset, Label, PreparedFlow, Preprocessor, SynthConfig, TokenSequence,
    TokenVocab, FAMILY_ANOMALY, FAMILY_LM, FAMILY_SIGNATURE,
};
use nids_core::fusion::{hard_score, tune_tau, Detectors, FusionMode, TuneConfig, TuneMetric, TuneSample};
use nids_core::lm::{train, LabeledSequence, LanguageModel, LmConfig};
use nids_core::metrics::{confusion, derive_metrics, f1_score, roc_auc, roc_auc_trapezoid};
use nids_core::pipeline::{bench, bind_lm_config, fit_profile, ComponentScores, Pipeline, PipelineConfig, HYBRID};
use nids_core::signature::SignatureSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DOMINANCE_SETS: usize = 20;
const DOMINANCE_BUDGET: Duration = Duration::from_secs(10);
const BENCHMARK_BUDGET: Duration = Duration::from_secs(300);
const SBD_RECALL_MAX: f64 = 1.0 / 3.0 + 0.05;
const ABD_RECALL_MAX: f64 = 1.0 / 3.0 + 0.10;
const LM_RECALL_MAX: f64 = 1.0 / 3.0 + 0.15;
const HYBRID_RECALL_MIN: f64 = 0.95;
const GRAD_PARAMS: usize = 20;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const MEMO_L1_MAX: f64 = 0.2;
const MEMO_EPOCHS: usize = 200;
const ZERO_LOSS_TOL: f64 = 1e-9;
const MEMO_BUDGET: Duration = Duration::from_secs(120);
const CAUSAL_SEQS: usize = 100;
const CAUSAL_TOL: f64 = 1e-9;
const AUC_SETS: usize = 100;
const AUC_TOL: f64 = 1e-9;
const F1_TOL: f64 = 5e-4;
const TUNER_SETS: usize = 50;
const TUNER_BUDGET: Duration = Duration::from_secs(30);
const EQUIVALENCE_FLOWS: usize = 10_000;
const LATENCY_FLOWS: usize = 1_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(elapsed < budget, || format!("took {:.1}s, budget {}s", elapsed.as_secs_f64(), budget.as_secs()))
}

/// Synthetic set with fitted preprocessing and profile and an untrained
/// model whose τ sits at the median threat probability.
struct Scene {
    pre: Preprocessor,
    rules: SignatureSet,
    profile: nids_core::anomaly::AnomalyProfile,
    lm: LanguageModel,
    flows: Vec<PreparedFlow>,
}

impl Scene {
    fn new(counts: SynthConfig, seed: u64, lm: &LmConfig) -> Result<Self, String> {
        let err = |e: &dyn std::fmt::Display| e.to_string();
        let ds = synth_dataset(&counts, seed).map_err(|e| err(&e))?;
        let pre = Preprocessor::fit(&ds, 16, 16).map_err(|e| err(&e))?;
        let profile = fit_profile(&pre.apply_dataset(&ds).map_err(|e| err(&e))?, DEFAULT_QUANTILE).map_err(|e| err(&e))?;
        let mut lm = LanguageModel::init(bind_lm_config(lm, &pre), seed).map_err(|e| err(&e))?;
        let flows = pre.prepare_all(&ds).map_err(|e| err(&e))?;
        let mut p = flows
            .iter()
            .map(|f| lm.threat_probability(&f.tokens))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| err(&e))?;
        p.sort_by(f64::total_cmp);
        lm.config.tau = p[p.len() / 2];
        let rules = SignatureSet::from_rule_text(default_rules_text()).map_err(|e| err(&e))?;
        Ok(Self { pre, rules, profile, lm, flows })
    }

    fn detectors(&self) -> Detectors<'_> {
        Detectors { schema: &self.pre.schema, signatures: &self.rules, profile: &self.profile, lm: &self.lm }
    }
}

fn small_lm() -> LmConfig {
    LmConfig { layers: 1, d_model: 16, heads: 2, d_ff: 32, init_std: 0.5, ..LmConfig::default() }
}

fn dominance() -> Outcome {
    let start = Instant::now();
    for k in 0..DOMINANCE_SETS as u64 {
        let scene = Scene::new(SynthConfig::new(300, 30, 30, 30), 1000 + k, &small_lm())?;
        let s = ComponentScores::collect(&scene.detectors(), &scene.flows).map_err(|e| e.to_string())?;
        let hybrid = confusion(&s.hybrid(), &s.labels).map_err(|e| e.to_string())?;
        for (name, decisions) in [("SBD", &s.sbd), ("ABD", &s.abd), ("LM", &s.lm)] {
            let c = confusion(decisions, &s.labels).map_err(|e| e.to_string())?;
            let (hr, cr) = (derive_metrics(&hybrid).recall, derive_metrics(&c).recall);
            check(hr >= cr, || format!("set {k}: hybrid recall {hr} < {name} {cr}"))?;
            check(hybrid.fpr() >= c.fpr(), || format!("set {k}: hybrid FPR {} < {name} {}", hybrid.fpr(), c.fpr()))?;
        }
    }
    let t = start.elapsed();
    within(t, DOMINANCE_BUDGET)?;
    Ok(format!("{DOMINANCE_SETS} datasets, recall and FPR dominate exactly ({:.1}s)", t.as_secs_f64()))
}

fn family_recall(flows: &[PreparedFlow], decisions: &[bool], family: &str) -> f64 {
    let idx: Vec<usize> =
        (0..flows.len()).filter(|&i| flows[i].raw.label.as_ref().and_then(Label::family) == Some(family)).collect();
    idx.iter().filter(|&&i| decisions[i]).count() as f64 / idx.len() as f64
}

fn three_family_benchmark() -> Outcome {
    let start = Instant::now();
    let e = |x: &dyn std::fmt::Display| x.to_string();
    let train_set = synth_dataset(&SynthConfig::new(2000, 200, 200, 200), 101).map_err(|x| e(&x))?;
    let test_set = synth_dataset(&SynthConfig::new(2000, 200, 200, 200), 202).map_err(|x| e(&x))?;
    let rules = SignatureSet::from_rule_text(default_rules_text()).map_err(|x| e(&x))?;
    let cfg = PipelineConfig { seed: 7, ..PipelineConfig::default() };
    let (pipeline, _) = Pipeline::fit(&train_set, rules, &cfg).map_err(|x| e(&x))?;
    let flows = pipeline.prepare(&test_set).map_err(|x| e(&x))?;
    let s = ComponentScores::collect(&pipeline.detectors(), &flows).map_err(|x| e(&x))?;
    let metrics = |d: &[bool]| confusion(d, &s.labels).map(|c| derive_metrics(&c)).map_err(|x| e(&x));
    let (sbd, abd, lm, hybrid) = (metrics(&s.sbd)?, metrics(&s.abd)?, metrics(&s.lm)?, metrics(&s.hybrid())?);
    let t = start.elapsed();

    check(sbd.recall <= SBD_RECALL_MAX, || format!("SBD recall {:.4} > {SBD_RECALL_MAX:.4}", sbd.recall))?;
    check(abd.recall <= ABD_RECALL_MAX, || format!("ABD recall {:.4} > {ABD_RECALL_MAX:.4}", abd.recall))?;
    check(lm.recall <= LM_RECALL_MAX, || format!("LM recall {:.4} > {LM_RECALL_MAX:.4}", lm.recall))?;
    check(hybrid.recall >= HYBRID_RECALL_MIN, || format!("hybrid recall {:.4} < {HYBRID_RECALL_MIN}", hybrid.recall))?;
    for (name, m) in [("SBD", &sbd), ("ABD", &abd), ("LM", &lm)] {
        check(hybrid.f1 > m.f1, || format!("hybrid F1 {:.4} does not exceed {name} F1 {:.4}", hybrid.f1, m.f1))?;
    }
    within(t, BENCHMARK_BUDGET)?;
    let hybrid_d = s.hybrid();
    Ok(format!(
        "recall SBD {:.3} ABD {:.3} LM {:.3} {HYBRID} {:.3} (S {:.2} A {:.2} L {:.2}); F1 SBD {:.3} ABD {:.3} LM {:.3} {HYBRID} {:.3} ({:.0}s)",
        sbd.recall,
        abd.recall,
        lm.recall,
        hybrid.recall,
        family_recall(&flows, &hybrid_d, FAMILY_SIGNATURE),
        family_recall(&flows, &hybrid_d, FAMILY_ANOMALY),
        family_recall(&flows, &hybrid_d, FAMILY_LM),
        sbd.f1,
        abd.f1,
        lm.f1,
        hybrid.f1,
        t.as_secs_f64()
    ))
}

fn random_seq(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> TokenSequence {
    let mut t: Vec<u32> = (0..len - 1).map(|_| rng.random_range(TokenVocab::RESERVED..vocab as u32)).collect();
    t.push(TokenVocab::CLASS_QUERY);
    TokenSequence::new(t, vocab).expect("ids in range")
}

fn random_batch(seed: u64, n: usize, vocab: usize, context: usize) -> Vec<LabeledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(2..=context);
            LabeledSequence { tokens: random_seq(&mut rng, vocab, len), threat: rng.random_bool(0.5) }
        })
        .collect()
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let cfg = LmConfig { vocab_size: 12, context: 8, layers: 1, d_model: 16, heads: 2, d_ff: 32, init_std: 0.3, ..LmConfig::default() };
    let mut model = LanguageModel::init(cfg, 31).map_err(|e| e.to_string())?;
    let batch = random_batch(32, 6, 12, 8);
    let (_, grad) = model.loss_and_gradient(&batch).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let h = 1e-5;
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < GRAD_PARAMS {
        let i = rng.random_range(0..model.params.data.len());
        let orig = model.params.data[i];
        model.params.data[i] = orig + h;
        let up = model.loss_l3(&batch).map_err(|e| e.to_string())?;
        model.params.data[i] = orig - h;
        let down = model.loss_l3(&batch).map_err(|e| e.to_string())?;
        model.params.data[i] = orig;
        let fd = (up - down) / (2.0 * h);
        if fd.abs() < 1e-7 && grad[i].abs() < 1e-7 {
            continue; // untouched by this batch
        }
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs());
        check(rel < GRAD_REL_TOL, || format!("param {i}: analytic {} numeric {fd} rel {rel:.2e}", grad[i]))?;
        worst = worst.max(rel);
        checked += 1;
    }
    let t = start.elapsed();
    within(t, GRAD_BUDGET)?;
    Ok(format!("{GRAD_PARAMS} parameters, worst relative error {worst:.2e} < {GRAD_REL_TOL:.0e} ({:.1}s)", t.as_secs_f64()))
}

fn memorization() -> Outcome {
    let start = Instant::now();
    let vocab = 128;
    // zero parameters: uniform next-token and class distributions
    let zero_cfg = LmConfig { vocab_size: vocab, context: 16, d_model: 32, heads: 4, d_ff: 128, ..LmConfig::default() };
    let zero = LanguageModel::zeros(zero_cfg.clone()).map_err(|e| e.to_string())?;
    let probe = random_batch(40, 20, vocab, 16);
    let l = zero.losses(&probe).map_err(|e| e.to_string())?;
    check((l.l1 - (vocab as f64).ln()).abs() < ZERO_LOSS_TOL, || format!("zero L1 {} vs ln {vocab}", l.l1))?;
    check((l.l2 - 2f64.ln()).abs() < ZERO_LOSS_TOL, || format!("zero L2 {} vs ln 2", l.l2))?;

    // 100 sequences, each identified by a distinct first token
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let corpus: Vec<LabeledSequence> = (0..100u32)
        .map(|i| {
            let mut t = vec![TokenVocab::RESERVED + i];
            t.extend((0..7).map(|_| rng.random_range(TokenVocab::RESERVED..vocab as u32)));
            t.push(TokenVocab::CLASS_QUERY);
            LabeledSequence { tokens: TokenSequence::new(t, vocab).expect("ids in range"), threat: i % 2 == 1 }
        })
        .collect();
    let cfg = LmConfig {
        learning_rate: 3e-3,
        lr_decay: 1.0,
        max_epochs: MEMO_EPOCHS,
        patience: MEMO_EPOCHS,
        ..zero_cfg
    };
    let (model, log) = train(&corpus, &[], &cfg, 3).map_err(|e| e.to_string())?;
    let l1 = model.losses(&corpus).map_err(|e| e.to_string())?.l1;
    let t = start.elapsed();
    check(l1 < MEMO_L1_MAX, || format!("L1 {l1:.4} after {} epochs", log.epochs.len()))?;
    within(t, MEMO_BUDGET)?;
    Ok(format!(
        "zero-param L1/L2 match ln {vocab}/ln 2; L1 {l1:.4} < {MEMO_L1_MAX} after {} epochs ({:.0}s)",
        log.epochs.len(),
        t.as_secs_f64()
    ))
}

fn causality() -> Outcome {
    let cfg = LmConfig { vocab_size: 30, context: 12, layers: 2, d_model: 16, heads: 2, d_ff: 32, ..LmConfig::default() };
    let model = LanguageModel::init(cfg, 51).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let mut worst = 0.0f64;
    for n in 0..CAUSAL_SEQS {
        let len = rng.random_range(3..=12);
        let mut toks: Vec<u32> = (0..len).map(|_| rng.random_range(0..30)).collect();
        let cut = rng.random_range(1..len);
        let a = model.forward(&toks).map_err(|e| e.to_string())?;
        for i in (cut + 1..len).rev() {
            let j = rng.random_range(cut..=i);
            toks.swap(i, j);
        }
        let b = model.forward(&toks).map_err(|e| e.to_string())?;
        for pos in 0..cut {
            let rows = a.next_token[pos].iter().zip(&b.next_token[pos]).chain(a.hidden[pos].iter().zip(&b.hidden[pos]));
            for (x, y) in rows {
                worst = worst.max((x - y).abs());
            }
        }
        check(worst < CAUSAL_TOL, || format!("sequence {n}: prefix output moved by {worst:.2e}"))?;
    }
    Ok(format!("{CAUSAL_SEQS} sequences, max prefix deviation {worst:.1e}"))
}

fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0.0f64;
    for k in 0..AUC_SETS {
        let n = 40 + k * 3;
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let s: f64 = rng.random::<f64>() + if l { 0.25 } else { 0.0 };
                // every other set has heavy ties
                if k % 2 == 0 {
                    (s * 8.0).round() / 8.0
                } else {
                    s
                }
            })
            .collect();
        let pc = pair_count_auc(&scores, &labels);
        let trap = roc_auc_trapezoid(&scores, &labels).map_err(|e| e.to_string())?;
        let rank = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((pc - trap).abs()).max((pc - rank).abs());
        check(worst < AUC_TOL, || format!("set {k}: pair count {pc} trapezoid {trap} rank {rank}"))?;
    }
    let f1 = f1_score(0.975, 0.968);
    check((f1 - 0.971).abs() < F1_TOL, || format!("F1(0.975, 0.968) = {f1}"))?;
    let delta = 98.3 - 92.0;
    check((delta - 6.3f64).abs() < 1e-9, || format!("accuracy delta {delta}"))?;
    Ok(format!("{AUC_SETS} sets, max AUC disagreement {worst:.1e}; F1(0.975, 0.968) = {f1:.4}; 98.3 - 92.0 = {delta:.1}"))
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<TuneSample> {
    loop {
        let s: Vec<TuneSample> = (0..n)
            .map(|_| {
                let threat = rng.random_bool(0.3);
                let p: f64 = if threat { rng.random_range(0.15..1.0) } else { rng.random_range(0.0..0.85) };
                TuneSample { probability: (p * 500.0).round() / 500.0, frozen: rng.random_bool(0.1), threat }
            })
            .collect();
        if s.iter().any(|x| x.threat) && s.iter().any(|x| !x.threat) {
            return s;
        }
    }
}

/// Best hard F1 over all thresholds that change the decision vector.
fn grid_optimum(samples: &[TuneSample]) -> f64 {
    let mut p: Vec<f64> = samples.iter().map(|s| s.probability).collect();
    p.sort_by(f64::total_cmp);
    p.dedup();
    let mut thresholds = vec![-1.0, 2.0];
    thresholds.extend(p.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    thresholds.iter().map(|&t| hard_score(samples, t, TuneMetric::F1)).fold(f64::NEG_INFINITY, f64::max)
}

fn tuner_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let cfg = TuneConfig::default();
    for k in 0..TUNER_SETS {
        let samples = random_samples(&mut rng, 100 + 4 * k);
        let r = tune_tau(&samples, &cfg).map_err(|e| e.to_string())?;
        let best = grid_optimum(&samples);
        let got = hard_score(&samples, r.tau, TuneMetric::F1);
        check(got == best && r.score == got, || format!("set {k}: F1 {got} at tau {} vs optimum {best}", r.tau))?;
    }
    let t = start.elapsed();
    within(t, TUNER_BUDGET)?;
    Ok(format!("{TUNER_SETS} sets, tuned F1 equals grid optimum exactly ({:.1}s)", t.as_secs_f64()))
}

fn short_circuit_equivalence() -> Outcome {
    let scene = Scene::new(SynthConfig::new(7000, 1000, 1000, 1000), 81, &small_lm())?;
    check(scene.flows.len() == EQUIVALENCE_FLOWS, || format!("{} flows", scene.flows.len()))?;
    let det = scene.detectors();
    let mut skipped = 0;
    for (i, f) in scene.flows.iter().enumerate() {
        let short = det.hybrid_detect(i, f, FusionMode::ShortCircuit).map_err(|e| e.to_string())?;
        let full = det.hybrid_detect(i, f, FusionMode::Exhaustive).map_err(|e| e.to_string())?;
        check(short.decision == full.decision, || format!("flow {i}: short-circuit {} exhaustive {}", short.decision, full.decision))?;
        skipped += usize::from(short.lm.is_none());
    }
    Ok(format!("{EQUIVALENCE_FLOWS} flows identical; LM skipped on {skipped}"))
}

fn latency_ordering() -> Outcome {
    let scene = Scene::new(SynthConfig::new(700, 100, 100, 100), 91, &LmConfig::default())?;
    let flows = &scene.flows[..LATENCY_FLOWS];
    let rows = bench(&scene.detectors(), flows, 50, 3).map_err(|e| e.to_string())?;
    let mean = |name: &str| rows.iter().find(|r| r.detector == name).map(|r| r.mean_us).unwrap_or(f64::NAN);
    let (sbd, lm, trad, exh) = (mean("SBD"), mean("LM"), mean("Traditional"), mean("Hybrid-exhaustive"));
    check(sbd < lm, || format!("SBD mean {sbd:.1}us not below LM {lm:.1}us"))?;
    check(trad < exh, || format!("Traditional mean {trad:.1}us not below Hybrid-exhaustive {exh:.1}us"))?;
    Ok(format!(
        "{LATENCY_FLOWS} flows: SBD {sbd:.1}us < LM {lm:.1}us; Traditional {trad:.1}us < Hybrid-exhaustive {exh:.1}us"
    ))
}

const DETERMINISM_CONFIG: &str = r#"
[paths]
dataset = "data.csv"
rules = "default.rules"
out_dir = "out"

[dataset]
seed = 13

[preprocess]
context = 16

[lm]
layers = 1
d_model = 16
heads = 2
d_ff = 32
learning_rate = 1e-3
max_epochs = 3
"#;

const DETERMINISM_FILES: [&str; 9] = [
    commands::TRAIN_CSV,
    commands::TEST_CSV,
    commands::TRAIN_PREP_CSV,
    commands::TEST_PREP_CSV,
    "state.txt",
    "model.bin",
    "model.bin.manifest",
    commands::TRAIN_LOG_CSV,
    "state.after_train.txt",
];

fn artifacts(data: &Dataset) -> Result<Vec<Vec<u8>>, String> {
    let e = |x: &dyn std::fmt::Display| x.to_string();
    let dir = tempfile::tempdir().map_err(|x| e(&x))?;
    let file = std::fs::File::create(dir.path().join("data.csv")).map_err(|x| e(&x))?;
    data.write_csv(file).map_err(|x| e(&x))?;
    std::fs::write(dir.path().join("default.rules"), default_rules_text()).map_err(|x| e(&x))?;
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, DETERMINISM_CONFIG).map_err(|x| e(&x))?;
    let run = Run::new(RunConfig::load(&cfg_path).map_err(|x| e(&x))?, Overrides::default());
    let out = dir.path().join("out");
    commands::preprocess(&run).map_err(|x| e(&x))?;
    commands::train_cmd(&run).map_err(|x| e(&x))?;
    std::fs::copy(out.join("state.txt"), out.join("state.after_train.txt")).map_err(|x| e(&x))?;
    commands::tune_cmd(&run).map_err(|x| e(&x))?;
    DETERMINISM_FILES.iter().map(|f| std::fs::read(out.join(f)).map_err(|x| format!("{f}: {x}"))).collect()
}

fn determinism() -> Outcome {
    let data = synth_dataset(&SynthConfig::new(400, 40, 40, 40), 111).map_err(|e| e.to_string())?;
    let a = artifacts(&data)?;
    let b = artifacts(&data)?;
    let mut bytes = 0;
    for ((name, x), y) in DETERMINISM_FILES.iter().zip(&a).zip(&b) {
        check(x == y, || format!("{name} differs between runs"))?;
        bytes += x.len();
    }
    // the final state file carries the tuned threshold
    Ok(format!("{} artifacts ({bytes} bytes) byte-identical across preprocess/train/tune reruns", a.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("fusion dominance", dominance),
        ("three-family benchmark", three_family_benchmark),
        ("LM gradient check", gradient_check),
        ("LM memorization", memorization),
        ("causality", causality),
        ("metric oracles", metric_oracles),
        ("tuner optimality", tuner_optimality),
        ("short-circuit equivalence", short_circuit_equivalence),
        ("latency ordering", latency_ordering),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
