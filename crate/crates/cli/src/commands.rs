//! Subcommand implementations. Each returns the summary line printed on
//! success; files go to the configured output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nids_core::anomaly::AnomalyProfile;
use nids_core::dataset::{
    default_rules_text, load_flow_csv, load_unlabeled_csv, split, synth_dataset, Dataset, DatasetSchema, PreparedFlow,
    Preprocessor, SynthConfig,
};
use nids_core::fusion::{tune_tau, Detectors, FusionMode};
use nids_core::lm::{train, Checkpoint, LanguageModel};
use nids_core::metrics::{latency_csv, roc_csv};
use nids_core::pipeline::{bench, bind_lm_config, evaluate, fit_profile, labeled_sequences, tune_samples};
use nids_core::signature::SignatureSet;

use crate::config::{RunConfig, TauSetting};
use crate::error::CliError;
use crate::state::{State, TunedTau};

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const TRAIN_PREP_CSV: &str = "train.prep.csv";
pub const TEST_PREP_CSV: &str = "test.prep.csv";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";
pub const VERDICTS_JSONL: &str = "verdicts.jsonl";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const ROC_CSV: &str = "roc.csv";
pub const BENCH_CSV: &str = "bench.csv";

/// Flag overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// A loaded configuration plus the `--input` override.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub input: Option<PathBuf>,
}

impl Run {
    pub fn new(mut config: RunConfig, overrides: Overrides) -> Self {
        if let Some(seed) = overrides.seed {
            config.dataset.seed = seed;
        }
        if let Some(out) = overrides.out {
            config.paths.out_dir = Some(out);
        }
        Self { config, input: overrides.input }
    }

    pub fn load(config: &Path, overrides: Overrides) -> Result<Self, CliError> {
        Ok(Self::new(RunConfig::load(config)?, overrides))
    }

    fn out(&self, name: &str) -> Result<PathBuf, CliError> {
        Ok(self.config.out_dir()?.join(name))
    }

    /// `--input`, or the test split written by `preprocess`.
    fn input_or_test(&self) -> Result<PathBuf, CliError> {
        match &self.input {
            Some(p) => Ok(p.clone()),
            None => self.out(TEST_CSV),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::data(path.display(), e))
}

fn write_csv(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::data(path.display(), e))?;
    data.write_csv(BufWriter::new(f)).map_err(|e| CliError::data(path.display(), e))
}

fn load_labeled(path: &Path, schema: &DatasetSchema) -> Result<Dataset, CliError> {
    load_flow_csv(path, schema).map_err(|e| CliError::data(path.display(), e))
}

fn load_rules(path: &Path) -> Result<SignatureSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read rule file {}: {e}", path.display())))?;
    Ok(SignatureSet::from_rule_text(&text)?)
}

fn prepare(pre: &Preprocessor, data: &Dataset, path: &Path) -> Result<Vec<PreparedFlow>, CliError> {
    pre.prepare_all(data).map_err(|e| CliError::data(path.display(), e))
}

/// Split the raw dataset, fit categorical maps, scaler and vocabulary on the
/// training part, and persist both raw and preprocessed splits plus the state.
pub fn preprocess(run: &Run) -> Result<String, CliError> {
    let cfg = &run.config;
    let path = run.input.clone().map_or_else(|| cfg.dataset_path().map(Path::to_path_buf), Ok)?;
    let d = &cfg.dataset;
    let schema = DatasetSchema::infer_from_csv(&path, &d.label_column, &d.benign_label, d.categorical.as_deref())
        .map_err(|e| CliError::data(path.display(), e))?;
    let data = load_labeled(&path, &schema)?;
    let (train_part, test_part) = split(&data, d.split, d.seed).map_err(|e| CliError::data(path.display(), e))?;
    if train_part.is_empty() || test_part.is_empty() {
        return Err(CliError::Data(format!("{}: {} rows are too few to split", path.display(), data.len())));
    }
    let pre = Preprocessor::fit(&train_part, cfg.preprocess.bins, cfg.preprocess.context)
        .map_err(|e| CliError::data(path.display(), e))?;

    let out_dir = cfg.out_dir()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::data(out_dir.display(), e))?;
    write_csv(&run.out(TRAIN_CSV)?, &train_part)?;
    write_csv(&run.out(TEST_CSV)?, &test_part)?;
    write_csv(&run.out(TRAIN_PREP_CSV)?, &pre.apply_dataset(&train_part)?)?;
    write_csv(&run.out(TEST_PREP_CSV)?, &pre.apply_dataset(&test_part)?)?;
    let state = State::new(pre);
    state.save(&cfg.state_path()?)?;
    Ok(format!(
        "preprocess: rows={} train={} test={} vocab={} state_hash={}",
        data.len(),
        train_part.len(),
        test_part.len(),
        state.preprocessor.vocab.size(),
        state.hash()
    ))
}

/// Fit and validation parts of the persisted training split.
fn training_split(run: &Run, state: &State) -> Result<(Dataset, Dataset), CliError> {
    let path = run.out(TRAIN_CSV)?;
    let data = load_labeled(&path, &state.preprocessor.schema)?;
    let d = &run.config.dataset;
    split(&data, 1.0 - d.validation, d.seed).map_err(|e| CliError::data(path.display(), e))
}

/// Train the language model, fit the anomaly profile, check the rule file.
pub fn train_cmd(run: &Run) -> Result<String, CliError> {
    let cfg = &run.config;
    let state_path = cfg.state_path()?;
    let mut state = State::load(&state_path)?;
    let rules = load_rules(cfg.rules_path()?)?;
    let (fit_part, valid_part) = training_split(run, &state)?;
    let pre = &state.preprocessor;
    let train_path = run.out(TRAIN_CSV)?;
    let fit_flows = prepare(pre, &fit_part, &train_path)?;
    let valid_flows = prepare(pre, &valid_part, &train_path)?;

    let profile = fit_profile(&pre.apply_dataset(&fit_part)?, cfg.anomaly.quantile)?;
    let lm_cfg = bind_lm_config(&cfg.lm, pre);
    let (model, log) = train(&labeled_sequences(&fit_flows), &labeled_sequences(&valid_flows), &lm_cfg, cfg.dataset.seed)?;

    let checkpoint = Checkpoint { model, state_hash: state.hash() };
    let ckpt_path = cfg.checkpoint_path()?;
    let mut bytes = Vec::new();
    checkpoint.write(&mut bytes)?;
    write_file(&ckpt_path, &bytes)?;
    write_file(&manifest_path(&ckpt_path), checkpoint.manifest().as_bytes())?;
    write_file(&run.out(TRAIN_LOG_CSV)?, log.to_csv().as_bytes())?;

    let theta = profile.threshold_value()?;
    state.profile = Some(profile);
    // a new model invalidates any earlier tuning
    state.tuned = None;
    state.save(&state_path)?;

    let last = log.epochs.last();
    Ok(format!(
        "train: fit={} valid={} epochs={} best_epoch={} stopped_early={} final_l3={} theta={theta} rules={}",
        fit_flows.len(),
        valid_flows.len(),
        log.epochs.len(),
        log.best_epoch.map_or("none".into(), |e| e.to_string()),
        log.stopped_early,
        last.map_or(f64::NAN, |e| e.train_l3),
        rules.len()
    ))
}

pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Everything detection needs, checked for mutual consistency.
pub struct Loaded {
    pub state: State,
    pub profile: AnomalyProfile,
    pub lm: LanguageModel,
    pub rules: SignatureSet,
}

impl Loaded {
    /// `tau`: use the tuned or configured threshold (false during tuning,
    /// where the value does not matter).
    fn load(run: &Run, tau: bool) -> Result<Self, CliError> {
        let cfg = &run.config;
        let state = State::load(&cfg.state_path()?)?;
        let ckpt_path = cfg.checkpoint_path()?;
        let bytes = std::fs::read(&ckpt_path)
            .map_err(|e| CliError::State(format!("cannot read checkpoint {}: {e}", ckpt_path.display())))?;
        let ckpt = Checkpoint::read(bytes.as_slice()).map_err(|e| CliError::State(e.to_string()))?;
        let hash = state.hash();
        if ckpt.state_hash != hash {
            return Err(CliError::State(format!(
                "checkpoint was trained on preprocessing state {} but the state file is {hash}",
                ckpt.state_hash
            )));
        }
        let profile = state
            .profile
            .clone()
            .ok_or_else(|| CliError::State("state file has no anomaly profile; run `nids train` first".into()))?;
        let mut lm = ckpt.model;
        if tau {
            lm.config.tau = match (cfg.fusion.tau, &state.tuned) {
                (TauSetting::Fixed(t), _) => t,
                (TauSetting::Tune, Some(t)) => t.result.tau,
                (TauSetting::Tune, None) => {
                    return Err(CliError::State(
                        "fusion.tau = \"tune\" but the state file has no tuned value; run `nids tune` first".into(),
                    ))
                }
            };
        }
        let rules = load_rules(cfg.rules_path()?)?;
        Ok(Self { state, profile, lm, rules })
    }

    pub fn detectors(&self) -> Detectors<'_> {
        Detectors { schema: &self.state.preprocessor.schema, signatures: &self.rules, profile: &self.profile, lm: &self.lm }
    }
}

/// Tune τ on the validation part of the training split.
pub fn tune_cmd(run: &Run) -> Result<String, CliError> {
    let cfg = &run.config;
    let loaded = Loaded::load(run, false)?;
    let (_, valid_part) = training_split(run, &loaded.state)?;
    let flows = prepare(&loaded.state.preprocessor, &valid_part, &run.out(TRAIN_CSV)?)?;
    let samples = tune_samples(&loaded.detectors(), &flows)?;
    let settings = cfg.fusion.tune_config();
    let result = tune_tau(&samples, &settings)?;
    let mut state = loaded.state;
    state.tuned = Some(TunedTau { settings: settings.clone(), result });
    state.save(&cfg.state_path()?)?;
    Ok(format!(
        "tune: validation={} tau={} {}={} descent_tau={}",
        flows.len(),
        result.tau,
        settings.metric.as_str(),
        result.score,
        result.descent_tau
    ))
}

fn fusion_mode(run: &Run) -> FusionMode {
    if run.config.fusion.short_circuit {
        FusionMode::ShortCircuit
    } else {
        FusionMode::Exhaustive
    }
}

/// Stream flows through the hybrid detector and write one JSON verdict per line.
pub fn detect(run: &Run) -> Result<String, CliError> {
    let loaded = Loaded::load(run, true)?;
    let input = run.input_or_test()?;
    let data = load_unlabeled_csv(&input, &loaded.state.preprocessor.schema).map_err(|e| CliError::data(input.display(), e))?;
    let flows = prepare(&loaded.state.preprocessor, &data, &input)?;
    let det = loaded.detectors();
    let mode = fusion_mode(run);

    let out_path = run.out(VERDICTS_JSONL)?;
    let file = File::create(&out_path).map_err(|e| CliError::data(out_path.display(), e))?;
    let mut w = BufWriter::new(file);
    let (mut hybrid, mut sbd, mut abd, mut lm) = (0usize, 0usize, 0usize, 0usize);
    for (i, f) in flows.iter().enumerate() {
        let v = det.hybrid_detect(i, f, mode)?;
        hybrid += usize::from(v.decision);
        sbd += usize::from(v.sbd.as_ref().is_some_and(|s| s.detected));
        abd += usize::from(v.abd.is_some_and(|a| a.detected));
        lm += usize::from(v.lm.is_some_and(|l| l.detected));
        writeln!(w, "{}", v.to_json()).map_err(|e| CliError::data(out_path.display(), e))?;
    }
    w.flush().map_err(|e| CliError::data(out_path.display(), e))?;
    Ok(format!(
        "detect: flows={} hybrid={hybrid} sbd={sbd} abd={abd} lm={lm} tau={}",
        flows.len(),
        loaded.lm.config.tau
    ))
}

/// Per-detector reports (SBD, ABD, LM, Traditional, Hybrid) and ROC data.
pub fn evaluate_cmd(run: &Run) -> Result<String, CliError> {
    let loaded = Loaded::load(run, true)?;
    let input = run.input_or_test()?;
    let data = load_labeled(&input, &loaded.state.preprocessor.schema)?;
    if data.is_empty() {
        return Err(CliError::Data(format!("{}: no flows to evaluate", input.display())));
    }
    let flows = prepare(&loaded.state.preprocessor, &data, &input)?;
    let (report, curves) = evaluate(&loaded.detectors(), &flows)?;
    write_file(&run.out(REPORT_CSV)?, report.to_csv().as_bytes())?;
    write_file(&run.out(REPORT_TXT)?, report.to_kv().as_bytes())?;
    write_file(&run.out(ROC_CSV)?, roc_csv(&curves).as_bytes())?;
    let cells: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}:f1={:.4}/recall={:.4}", r.detector, r.metrics.f1, r.metrics.recall))
        .collect();
    Ok(format!("evaluate: flows={} {}", flows.len(), cells.join(" ")))
}

/// Per-sample latency of the six detector configurations.
pub fn bench_cmd(run: &Run) -> Result<String, CliError> {
    let loaded = Loaded::load(run, true)?;
    let input = run.input_or_test()?;
    let data = load_unlabeled_csv(&input, &loaded.state.preprocessor.schema).map_err(|e| CliError::data(input.display(), e))?;
    let mut flows = prepare(&loaded.state.preprocessor, &data, &input)?;
    flows.truncate(run.config.bench.max_flows);
    if flows.is_empty() {
        return Err(CliError::Data(format!("{}: no flows to benchmark", input.display())));
    }
    let b = &run.config.bench;
    let rows = bench(&loaded.detectors(), &flows, b.warmup, b.repetitions)?;
    write_file(&run.out(BENCH_CSV)?, latency_csv(&rows).as_bytes())?;
    let cells: Vec<String> = rows.iter().map(|r| format!("{}={:.1}us", r.detector, r.mean_us)).collect();
    Ok(format!("bench: flows={} repetitions={} {}", flows.len(), b.repetitions, cells.join(" ")))
}

/// Write a synthetic three-family dataset and the rules that match its
/// signature family.
pub fn synth(out_dir: &Path, counts: SynthConfig, seed: u64) -> Result<String, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::data(out_dir.display(), e))?;
    let data = synth_dataset(&counts, seed)?;
    let csv = out_dir.join("synth.csv");
    write_csv(&csv, &data)?;
    write_file(&out_dir.join("default.rules"), default_rules_text().as_bytes())?;
    Ok(format!("synth: rows={} file={}", data.len(), csv.display()))
}
