//! Flow-log ingestion, preprocessing and tokenization.
//!
//! A [`Dataset`] is an ordered list of [`FlowRecord`]s sharing one
//! [`DatasetSchema`]. Raw records carry categorical strings and raw numeric
//! values; after [`Preprocessor::apply`] categorical cells become dense
//! identifiers and numeric cells are min-max scaled, and
//! [`tokenize`] turns the result into a [`TokenSequence`] for the language
//! model.

mod preprocess;
mod synth;
mod vocab;

pub use preprocess::{
    apply_categorical, apply_minmax, fit_categorical, fit_minmax, CategoryMap, ColumnCategories,
    MinMax, PreparedFlow, Preprocessor, ScalerParams,
};
pub use synth::{
    default_rules_text, synth_dataset, synth_schema, SynthConfig, FAMILY_ANOMALY, FAMILY_LM,
    FAMILY_SIGNATURE,
};
pub use vocab::{build_vocab, tokenize, ColumnTokens, TokenSequence, TokenVocab};

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_LABEL_COLUMN: &str = "Label";
pub const DEFAULT_BENIGN_LABEL: &str = "Benign";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("empty dataset")]
    Empty,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("column `{column}`: non-finite value {value}")]
    NonFinite { column: String, value: f64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    /// Attach a data-row index to a cell-level error.
    pub fn at_row(self, row: usize) -> Self {
        match self {
            DatasetError::Row { .. } => self,
            other => DatasetError::Row { row, message: other.to_string() },
        }
    }
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// One cell of a flow record.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// Raw categorical string.
    Text(String),
    /// Encoded categorical identifier.
    Id(u32),
    /// Numeric value, raw or scaled.
    Real(f64),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Id(id) => write!(f, "{id}"),
            Value::Real(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Benign,
    /// Attack with a free-form family tag.
    Attack(String),
}

impl Label {
    pub fn is_attack(&self) -> bool {
        matches!(self, Label::Attack(_))
    }

    pub fn family(&self) -> Option<&str> {
        match self {
            Label::Benign => None,
            Label::Attack(tag) => Some(tag),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub features: Vec<Value>,
    pub label: Option<Label>,
}

impl FlowRecord {
    pub fn new(features: Vec<Value>, label: Option<Label>) -> Self {
        Self { features, label }
    }

    /// Values of every `Real` cell, in column order.
    pub fn numeric_features(&self) -> Vec<f64> {
        self.features.iter().filter_map(Value::as_real).collect()
    }

    pub fn is_attack(&self) -> bool {
        self.label.as_ref().is_some_and(Label::is_attack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Numeric => "numeric",
        }
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "categorical" => Ok(ColumnKind::Categorical),
            "numeric" => Ok(ColumnKind::Numeric),
            other => Err(DatasetError::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Feature columns plus the label column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    columns: Vec<Column>,
    label_column: String,
    benign_label: String,
    index: HashMap<String, usize>,
}

impl DatasetSchema {
    pub fn new(
        columns: Vec<Column>,
        label_column: impl Into<String>,
        benign_label: impl Into<String>,
    ) -> Result<Self> {
        let label_column = label_column.into();
        if columns.is_empty() {
            return Err(DatasetError::Schema("at least one feature column is required".into()));
        }
        let mut index = HashMap::with_capacity(columns.len());
        for (i, c) in columns.iter().enumerate() {
            if c.name == label_column {
                return Err(DatasetError::Schema(format!(
                    "label column `{label_column}` is also listed as a feature"
                )));
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(DatasetError::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        Ok(Self { columns, label_column, benign_label: benign_label.into(), index })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn benign_label(&self) -> &str {
        &self.benign_label
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn numeric_arity(&self) -> usize {
        self.columns.iter().filter(|c| c.kind == ColumnKind::Numeric).count()
    }

    pub fn parse_label(&self, cell: &str) -> Option<Label> {
        let cell = cell.trim();
        if cell.is_empty() {
            None
        } else if cell == self.benign_label {
            Some(Label::Benign)
        } else {
            Some(Label::Attack(cell.to_string()))
        }
    }

    pub fn label_text<'a>(&'a self, label: &'a Option<Label>) -> &'a str {
        match label {
            None => "",
            Some(Label::Benign) => &self.benign_label,
            Some(Label::Attack(tag)) => tag,
        }
    }

    /// Infer column kinds from a CSV file: a column is numeric when every
    /// non-empty cell parses as a number, unless it is named in
    /// `categorical`. All non-label header columns become features.
    pub fn infer_from_csv(
        path: &Path,
        label_column: &str,
        benign_label: &str,
        categorical: Option<&[String]>,
    ) -> Result<Self> {
        let mut reader = csv_reader(std::fs::File::open(path)?);
        let headers = reader.headers()?.clone();
        if headers.is_empty() {
            return Err(DatasetError::Empty);
        }
        if !headers.iter().any(|h| h.trim() == label_column) {
            return Err(DatasetError::MissingColumn(label_column.to_string()));
        }
        let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        let mut numeric = vec![true; names.len()];
        if let Some(cats) = categorical {
            for c in cats {
                if !names.contains(c) {
                    return Err(DatasetError::MissingColumn(c.clone()));
                }
            }
            for (i, n) in names.iter().enumerate() {
                numeric[i] = !cats.contains(n);
            }
        } else {
            for row in reader.records() {
                let row = row?;
                for (i, cell) in row.iter().enumerate() {
                    if i < numeric.len() && numeric[i] && cell.trim().parse::<f64>().is_err() {
                        numeric[i] = false;
                    }
                }
            }
        }
        let columns = names
            .iter()
            .zip(&numeric)
            .filter(|(n, _)| n.as_str() != label_column)
            .map(|(n, &num)| Column {
                name: n.clone(),
                kind: if num { ColumnKind::Numeric } else { ColumnKind::Categorical },
            })
            .collect();
        Self::new(columns, label_column, benign_label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub records: Vec<FlowRecord>,
}

impl Dataset {
    pub fn new(schema: DatasetSchema, records: Vec<FlowRecord>) -> Self {
        Self { schema, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Counts per label string (benign label or attack family tag).
    pub fn label_histogram(&self) -> std::collections::BTreeMap<String, usize> {
        let mut hist = std::collections::BTreeMap::new();
        for r in &self.records {
            *hist.entry(self.schema.label_text(&r.label).to_string()).or_insert(0) += 1;
        }
        hist
    }

    pub fn benign(&self) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self
                .records
                .iter()
                .filter(|r| r.label == Some(Label::Benign))
                .cloned()
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_flow_csv(writer, &self.schema, &self.records)
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader)
}

/// Load a labeled flow CSV. Extra header columns are ignored.
pub fn load_flow_csv(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_flows(file, schema, true)
}

/// Like [`load_flow_csv`] but tolerates a missing label column.
pub fn load_unlabeled_csv(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_flows(file, schema, false)
}

pub fn read_flows<R: Read>(
    mut input: R,
    schema: &DatasetSchema,
    require_label: bool,
) -> Result<Dataset> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.iter().all(u8::is_ascii_whitespace) {
        return Err(DatasetError::Empty);
    }
    let mut reader = csv_reader(raw.as_slice());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let mut feature_pos = Vec::with_capacity(schema.arity());
    for c in schema.columns() {
        feature_pos.push(position(&c.name).ok_or_else(|| DatasetError::MissingColumn(c.name.clone()))?);
    }
    let label_pos = match position(schema.label_column()) {
        Some(p) => Some(p),
        None if require_label => {
            return Err(DatasetError::MissingColumn(schema.label_column().to_string()))
        }
        None => None,
    };

    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let rec = result.map_err(|e| DatasetError::Row { row, message: e.to_string() })?;
        let mut features = Vec::with_capacity(schema.arity());
        for (col, &pos) in schema.columns().iter().zip(&feature_pos) {
            let cell = rec.get(pos).unwrap_or("").trim();
            let value = match col.kind {
                ColumnKind::Categorical => Value::Text(cell.to_string()),
                ColumnKind::Numeric => Value::Real(cell.parse::<f64>().map_err(|_| {
                    DatasetError::Row {
                        row,
                        message: format!("column `{}`: cannot parse `{cell}` as a number", col.name),
                    }
                })?),
            };
            features.push(value);
        }
        let label = label_pos.and_then(|p| rec.get(p)).and_then(|c| schema.parse_label(c));
        records.push(FlowRecord { features, label });
    }
    Ok(Dataset { schema: schema.clone(), records })
}

pub fn write_flow_csv<W: Write>(
    writer: W,
    schema: &DatasetSchema,
    records: &[FlowRecord],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    header.push(schema.label_column());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in records {
        row.clear();
        row.extend(r.features.iter().map(Value::to_string));
        row.push(schema.label_text(&r.label).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic shuffled partition into `(train, test)`; the train part
/// holds `round(train_fraction * N)` records.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::Argument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * n as f64).round() as usize;
    let take = |idx: &[usize]| Dataset {
        schema: dataset.schema.clone(),
        records: idx.iter().map(|&i| dataset.records[i].clone()).collect(),
    };
    Ok((take(&order[..n_train]), take(&order[n_train..])))
}

/// Distinct strings of a categorical column.
pub fn distinct_values(dataset: &Dataset, column: usize) -> HashSet<String> {
    dataset
        .records
        .iter()
        .filter_map(|r| r.features.get(column).and_then(Value::as_text).map(str::to_string))
        .collect()
}
