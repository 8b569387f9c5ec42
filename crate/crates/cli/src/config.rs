//! TOML run configuration. Unknown keys are rejected in every section;
//! relative paths resolve against the configuration file's directory.

use std::path::{Path, PathBuf};

use nids_core::anomaly::DEFAULT_QUANTILE;
use nids_core::dataset::{DEFAULT_BENIGN_LABEL, DEFAULT_LABEL_COLUMN};
use nids_core::fusion::{TuneConfig, TuneMetric};
use nids_core::lm::LmConfig;
use serde::{Deserialize, Deserializer};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub dataset: DatasetKeys,
    pub preprocess: PreprocessKeys,
    pub lm: LmConfig,
    pub anomaly: AnomalyKeys,
    pub fusion: FusionKeys,
    pub bench: BenchKeys,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    /// Defaults to `<out_dir>/state.txt`.
    pub state: Option<PathBuf>,
    /// Defaults to `<out_dir>/model.bin`.
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetKeys {
    pub label_column: String,
    pub benign_label: String,
    /// Columns to treat as categorical; inferred from the data when absent.
    pub categorical: Option<Vec<String>>,
    pub split: f64,
    /// Share of the training split held out for early stopping and tuning.
    pub validation: f64,
    pub seed: u64,
}

impl Default for DatasetKeys {
    fn default() -> Self {
        Self {
            label_column: DEFAULT_LABEL_COLUMN.into(),
            benign_label: DEFAULT_BENIGN_LABEL.into(),
            categorical: None,
            split: 0.7,
            validation: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessKeys {
    pub bins: u32,
    pub context: usize,
}

impl Default for PreprocessKeys {
    fn default() -> Self {
        Self { bins: 16, context: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyKeys {
    pub quantile: f64,
}

impl Default for AnomalyKeys {
    fn default() -> Self {
        Self { quantile: DEFAULT_QUANTILE }
    }
}

/// `tau = "tune"` uses the tuned value from the state file; a number
/// overrides it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSetting {
    Tune,
    Fixed(f64),
}

impl<'de> Deserialize<'de> for TauSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if (0.0..=1.0).contains(&v) => Ok(TauSetting::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("tau must lie in [0, 1], got {v}"))),
            Raw::Text(s) if s == "tune" => Ok(TauSetting::Tune),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("tau must be a number or \"tune\", got \"{s}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionKeys {
    pub tau: TauSetting,
    pub short_circuit: bool,
    pub temperature: f64,
    pub step: f64,
    pub iterations: usize,
    pub initial_tau: f64,
    pub metric: TuneMetric,
}

impl Default for FusionKeys {
    fn default() -> Self {
        let t = TuneConfig::default();
        Self {
            tau: TauSetting::Tune,
            short_circuit: true,
            temperature: t.temperature,
            step: t.step,
            iterations: t.iterations,
            initial_tau: t.initial_tau,
            metric: t.metric,
        }
    }
}

impl FusionKeys {
    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            temperature: self.temperature,
            step: self.step,
            iterations: self.iterations,
            initial_tau: self.initial_tau,
            metric: self.metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchKeys {
    pub warmup: usize,
    pub repetitions: usize,
    /// Benchmark at most this many flows from the input.
    pub max_flows: usize,
}

impl Default for BenchKeys {
    fn default() -> Self {
        Self { warmup: 100, repetitions: 3, max_flows: 1000 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse, resolving relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.dataset;
        if !(d.split > 0.0 && d.split < 1.0) {
            return bad(format!("dataset.split must lie in (0, 1), got {}", d.split));
        }
        if !(d.validation > 0.0 && d.validation < 1.0) {
            return bad(format!("dataset.validation must lie in (0, 1), got {}", d.validation));
        }
        if self.preprocess.bins == 0 {
            return bad("preprocess.bins must be positive".into());
        }
        if self.preprocess.context < 2 {
            return bad(format!("preprocess.context must be >= 2, got {}", self.preprocess.context));
        }
        if !(self.anomaly.quantile > 0.0 && self.anomaly.quantile < 1.0) {
            return bad(format!("anomaly.quantile must lie in (0, 1), got {}", self.anomaly.quantile));
        }
        let f = &self.fusion;
        if !(f.temperature > 0.0 && f.step > 0.0) {
            return bad("fusion.temperature and fusion.step must be positive".into());
        }
        if self.bench.repetitions == 0 || self.bench.max_flows == 0 {
            return bad("bench.repetitions and bench.max_flows must be positive".into());
        }
        // vocab_size and context come from the preprocessing state
        let probe = LmConfig { vocab_size: 5, context: self.preprocess.context, ..self.lm.clone() };
        probe.validate().map_err(|e| CliError::Config(format!("lm: {e}")))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.paths.out_dir.as_deref().ok_or_else(|| CliError::Config("paths.out_dir is required".into()))
    }

    pub fn state_path(&self) -> Result<PathBuf, CliError> {
        match &self.paths.state {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out_dir()?.join("state.txt")),
        }
    }

    pub fn checkpoint_path(&self) -> Result<PathBuf, CliError> {
        match &self.paths.checkpoint {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out_dir()?.join("model.bin")),
        }
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.paths.dataset.as_deref().ok_or_else(|| CliError::Config("paths.dataset is required".into()))
    }

    pub fn rules_path(&self) -> Result<&Path, CliError> {
        self.paths.rules.as_deref().ok_or_else(|| CliError::Config("paths.rules is required".into()))
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.dataset, &mut self.rules, &mut self.state, &mut self.checkpoint, &mut self.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
