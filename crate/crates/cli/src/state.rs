//! Preprocessing-state sidecar.
//!
//! A line-oriented `key = value` text file, one JSON value per line:
//!
//! ```text
//! format = 1
//! label_column = "Label"
//! benign_label = "Benign"
//! columns = [["protocol","categorical"],["dst_port","numeric"],...]
//! categories.0 = ["tcp","udp"]        # per categorical column, id order
//! scaler.1 = [0.0,65535.0]            # per numeric column, min and max
//! bins = 16
//! context = 32
//! vocab = ["<pad>","<unk>",...]       # full listing, checked on load
//! state_hash = "<sha256 hex of every byte above this line>"
//! profile.mean = [...]                # written by `train`
//! profile.scale = [...]
//! profile.threshold = 2.5
//! profile.quantile = 0.995
//! tune.tau = 0.73                     # written by `tune`
//! ...
//! ```
//!
//! Everything above `state_hash` describes preprocessing and is what the hash
//! binds a checkpoint to; the profile and tuning sections may change without
//! invalidating the model.

use std::collections::BTreeMap;
use std::path::Path;

use nids_core::anomaly::{AnomalyProfile, Threshold};
use nids_core::dataset::{
    build_vocab, CategoryMap, Column, ColumnCategories, ColumnKind, DatasetSchema, MinMax, Preprocessor, ScalerParams,
};
use nids_core::fusion::{TuneConfig, TuneMetric, TuneResult};
use serde::de::DeserializeOwned;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::CliError;

const FORMAT: u32 = 1;
const HASH_KEY: &str = "state_hash";

#[derive(Debug, Clone, PartialEq)]
pub struct TunedTau {
    pub settings: TuneConfig,
    pub result: TuneResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub preprocessor: Preprocessor,
    pub profile: Option<AnomalyProfile>,
    pub tuned: Option<TunedTau>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn line(out: &mut String, key: &str, value: serde_json::Value) {
    out.push_str(key);
    out.push_str(" = ");
    out.push_str(&value.to_string());
    out.push('\n');
}

/// The hashed part of the file.
fn render_preprocessing(pre: &Preprocessor) -> String {
    let schema = &pre.schema;
    let mut out = String::from("# nids preprocessing state\n");
    line(&mut out, "format", json!(FORMAT));
    line(&mut out, "label_column", json!(schema.label_column()));
    line(&mut out, "benign_label", json!(schema.benign_label()));
    let columns: Vec<[&str; 2]> = schema.columns().iter().map(|c| [c.name.as_str(), c.kind.as_str()]).collect();
    line(&mut out, "columns", json!(columns));
    for (i, cats) in pre.categories.columns.iter().enumerate() {
        if let Some(c) = cats {
            line(&mut out, &format!("categories.{i}"), json!(c.values()));
        }
    }
    for (i, mm) in pre.scaler.columns.iter().enumerate() {
        if let Some(m) = mm {
            line(&mut out, &format!("scaler.{i}"), json!([m.min, m.max]));
        }
    }
    line(&mut out, "bins", json!(pre.vocab.bins()));
    line(&mut out, "context", json!(pre.context));
    line(&mut out, "vocab", json!(pre.vocab.names()));
    out
}

/// Content hash a checkpoint must carry to be used with this preprocessing.
pub fn state_hash(pre: &Preprocessor) -> String {
    sha256_hex(render_preprocessing(pre).as_bytes())
}

impl State {
    pub fn new(preprocessor: Preprocessor) -> Self {
        Self { preprocessor, profile: None, tuned: None }
    }

    pub fn hash(&self) -> String {
        state_hash(&self.preprocessor)
    }

    pub fn render(&self) -> String {
        let mut out = render_preprocessing(&self.preprocessor);
        let hash = sha256_hex(out.as_bytes());
        line(&mut out, HASH_KEY, json!(hash));
        if let Some(p) = &self.profile {
            line(&mut out, "profile.mean", json!(p.mean));
            line(&mut out, "profile.scale", json!(p.scale));
            if let Some(t) = p.threshold {
                line(&mut out, "profile.threshold", json!(t.value));
                line(&mut out, "profile.quantile", json!(t.quantile));
            }
        }
        if let Some(t) = &self.tuned {
            line(&mut out, "tune.tau", json!(t.result.tau));
            line(&mut out, "tune.score", json!(t.result.score));
            line(&mut out, "tune.descent_tau", json!(t.result.descent_tau));
            line(&mut out, "tune.metric", json!(t.settings.metric));
            line(&mut out, "tune.temperature", json!(t.settings.temperature));
            line(&mut out, "tune.step", json!(t.settings.step));
            line(&mut out, "tune.iterations", json!(t.settings.iterations));
            line(&mut out, "tune.initial_tau", json!(t.settings.initial_tau));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()).map_err(|e| CliError::data(path.display(), e))
    }

    /// Missing file is a state error: the pipeline was not run in order.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::State(format!("cannot read state file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |m: String| CliError::State(format!("state file: {m}"));
        let hash_at = text
            .find(&format!("\n{HASH_KEY} = "))
            .map(|i| i + 1)
            .ok_or_else(|| bad(format!("no `{HASH_KEY}` line")))?;
        let hashed = &text[..hash_at];

        let mut keys = Kv::parse(text)?;
        let stored: String = keys.take(HASH_KEY)?;
        if sha256_hex(hashed.as_bytes()) != stored {
            return Err(bad("preprocessing section does not match its hash".into()));
        }
        let format: u32 = keys.take("format")?;
        if format != FORMAT {
            return Err(bad(format!("unsupported format {format}")));
        }
        let label: String = keys.take("label_column")?;
        let benign: String = keys.take("benign_label")?;
        let raw_columns: Vec<(String, String)> = keys.take("columns")?;
        let mut columns = Vec::with_capacity(raw_columns.len());
        for (name, kind) in raw_columns {
            let kind: ColumnKind = kind.parse().map_err(|e| bad(format!("{e}")))?;
            columns.push(Column { name, kind });
        }
        let schema = DatasetSchema::new(columns, label, benign).map_err(|e| bad(e.to_string()))?;

        let mut cats = Vec::with_capacity(schema.arity());
        let mut scaler = Vec::with_capacity(schema.arity());
        for (i, c) in schema.columns().iter().enumerate() {
            match c.kind {
                ColumnKind::Categorical => {
                    let values: Vec<String> = keys.take(&format!("categories.{i}"))?;
                    cats.push(Some(ColumnCategories::from_values(values).map_err(|e| bad(e.to_string()))?));
                    scaler.push(None);
                }
                ColumnKind::Numeric => {
                    let (min, max): (f64, f64) = keys.take(&format!("scaler.{i}"))?;
                    cats.push(None);
                    scaler.push(Some(MinMax { min, max }));
                }
            }
        }
        let categories = CategoryMap { columns: cats };
        let bins: u32 = keys.take("bins")?;
        let context: usize = keys.take("context")?;
        let listing: Vec<String> = keys.take("vocab")?;
        let vocab = build_vocab(&schema, &categories, bins).map_err(|e| bad(e.to_string()))?;
        if vocab.names() != listing.as_slice() {
            return Err(bad("vocab listing differs from the vocabulary rebuilt from the category maps".into()));
        }
        let preprocessor = Preprocessor { schema, categories, scaler: ScalerParams { columns: scaler }, vocab, context };

        let profile = if keys.has("profile.mean") {
            let threshold = if keys.has("profile.threshold") {
                Some(Threshold { value: keys.take("profile.threshold")?, quantile: keys.take("profile.quantile")? })
            } else {
                None
            };
            Some(AnomalyProfile { mean: keys.take("profile.mean")?, scale: keys.take("profile.scale")?, threshold })
        } else {
            None
        };
        let tuned = if keys.has("tune.tau") {
            let result = TuneResult {
                tau: keys.take("tune.tau")?,
                score: keys.take("tune.score")?,
                descent_tau: keys.take("tune.descent_tau")?,
            };
            let settings = TuneConfig {
                metric: keys.take::<TuneMetric>("tune.metric")?,
                temperature: keys.take("tune.temperature")?,
                step: keys.take("tune.step")?,
                iterations: keys.take("tune.iterations")?,
                initial_tau: keys.take("tune.initial_tau")?,
            };
            Some(TunedTau { settings, result })
        } else {
            None
        };
        keys.finish()?;
        Ok(Self { preprocessor, profile, tuned })
    }
}

struct Kv(BTreeMap<String, (usize, serde_json::Value)>);

impl Kv {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (n, l) in text.lines().enumerate() {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let err = |m: &str| CliError::State(format!("state file line {}: {m}", n + 1));
            let (k, v) = l.split_once(" = ").ok_or_else(|| err("expected `key = value`"))?;
            let v: serde_json::Value = serde_json::from_str(v).map_err(|e| err(&e.to_string()))?;
            if map.insert(k.to_string(), (n + 1, v)).is_some() {
                return Err(err(&format!("duplicate key `{k}`")));
            }
        }
        Ok(Self(map))
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn take<T: DeserializeOwned>(&mut self, key: &str) -> Result<T, CliError> {
        let (n, v) = self.0.remove(key).ok_or_else(|| CliError::State(format!("state file: missing `{key}`")))?;
        serde_json::from_value(v).map_err(|e| CliError::State(format!("state file line {n}: `{key}`: {e}")))
    }

    fn finish(self) -> Result<(), CliError> {
        match self.0.into_iter().next() {
            Some((k, (n, _))) => Err(CliError::State(format!("state file line {n}: unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}
