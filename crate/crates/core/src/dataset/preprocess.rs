use std::collections::HashMap;

use super::vocab::{build_vocab, tokenize, TokenSequence, TokenVocab};
use super::{ColumnKind, Dataset, DatasetError, DatasetSchema, FlowRecord, Result, Value};

/// Dense string → identifier table for one categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnCategories {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl ColumnCategories {
    pub fn from_values(values: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            if index.insert(v.clone(), i as u32).is_some() {
                return Err(DatasetError::Schema(format!("duplicate category `{v}`")));
            }
        }
        Ok(Self { values, index })
    }

    fn intern(&mut self, value: &str) {
        if !self.index.contains_key(value) {
            self.index.insert(value.to_string(), self.values.len() as u32);
            self.values.push(value.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Identifier reserved for strings not seen during fitting.
    pub fn unknown_id(&self) -> u32 {
        self.values.len() as u32
    }

    pub fn id_of(&self, value: &str) -> u32 {
        self.index.get(value).copied().unwrap_or_else(|| self.unknown_id())
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }
}

/// Per-column categorical encodings; `None` for numeric columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMap {
    pub columns: Vec<Option<ColumnCategories>>,
}

impl CategoryMap {
    pub fn column(&self, idx: usize) -> Option<&ColumnCategories> {
        self.columns.get(idx).and_then(Option::as_ref)
    }

    /// Total number of learned categories over all columns.
    pub fn total_categories(&self) -> usize {
        self.columns.iter().flatten().map(ColumnCategories::len).sum()
    }
}

/// Identifiers are assigned in order of first appearance in `train`.
pub fn fit_categorical(train: &Dataset, schema: &DatasetSchema) -> CategoryMap {
    let mut columns: Vec<Option<ColumnCategories>> = schema
        .columns()
        .iter()
        .map(|c| (c.kind == ColumnKind::Categorical).then(ColumnCategories::default))
        .collect();
    for record in &train.records {
        for (cats, value) in columns.iter_mut().zip(&record.features) {
            if let (Some(cats), Value::Text(s)) = (cats.as_mut(), value) {
                cats.intern(s);
            }
        }
    }
    CategoryMap { columns }
}

pub fn apply_categorical(record: &FlowRecord, map: &CategoryMap) -> FlowRecord {
    let features = record
        .features
        .iter()
        .enumerate()
        .map(|(i, v)| match (v, map.column(i)) {
            (Value::Text(s), Some(cats)) => Value::Id(cats.id_of(s)),
            _ => v.clone(),
        })
        .collect();
    FlowRecord { features, label: record.label.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn scale(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }
}

/// Training-set min/max per numeric column; `None` for categorical columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub columns: Vec<Option<MinMax>>,
}

pub fn fit_minmax(train: &Dataset) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(DatasetError::Empty);
    }
    let schema = &train.schema;
    let mut columns: Vec<Option<MinMax>> = schema
        .columns()
        .iter()
        .map(|c| {
            (c.kind == ColumnKind::Numeric)
                .then_some(MinMax { min: f64::INFINITY, max: f64::NEG_INFINITY })
        })
        .collect();
    for (row, record) in train.records.iter().enumerate() {
        for (i, (slot, value)) in columns.iter_mut().zip(&record.features).enumerate() {
            if let (Some(mm), Value::Real(v)) = (slot.as_mut(), value) {
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        column: schema.columns()[i].name.clone(),
                        value: *v,
                    }
                    .at_row(row));
                }
                mm.min = mm.min.min(*v);
                mm.max = mm.max.max(*v);
            }
        }
    }
    Ok(ScalerParams { columns })
}

/// Scale numeric cells by the fitted min/max. Values outside the training
/// range are not clamped.
pub fn apply_minmax(record: &FlowRecord, params: &ScalerParams) -> Result<FlowRecord> {
    let mut features = Vec::with_capacity(record.features.len());
    for (i, v) in record.features.iter().enumerate() {
        let mm = params.columns.get(i).copied().flatten();
        features.push(match (v, mm) {
            (Value::Real(x), Some(mm)) => {
                if !x.is_finite() {
                    return Err(DatasetError::NonFinite { column: format!("#{i}"), value: *x });
                }
                Value::Real(mm.scale(*x))
            }
            _ => v.clone(),
        });
    }
    Ok(FlowRecord { features, label: record.label.clone() })
}

/// A flow in every representation the detectors consume.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFlow {
    pub raw: FlowRecord,
    pub scaled: FlowRecord,
    pub tokens: TokenSequence,
}

/// All training-time preprocessing state, fitted once and then applied to
/// any split.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub schema: DatasetSchema,
    pub categories: CategoryMap,
    pub scaler: ScalerParams,
    pub vocab: TokenVocab,
    pub context: usize,
}

impl Preprocessor {
    pub fn fit(train: &Dataset, bins: u32, context: usize) -> Result<Self> {
        if context < 2 {
            return Err(DatasetError::Argument(format!("context window must be >= 2, got {context}")));
        }
        let categories = fit_categorical(train, &train.schema);
        let scaler = fit_minmax(train)?;
        let vocab = build_vocab(&train.schema, &categories, bins)?;
        Ok(Self { schema: train.schema.clone(), categories, scaler, vocab, context })
    }

    pub fn apply(&self, record: &FlowRecord) -> Result<FlowRecord> {
        if record.features.len() != self.schema.arity() {
            return Err(DatasetError::Schema(format!(
                "record has {} features, schema expects {}",
                record.features.len(),
                self.schema.arity()
            )));
        }
        let encoded = apply_categorical(record, &self.categories);
        apply_minmax(&encoded, &self.scaler)
    }

    pub fn prepare(&self, record: &FlowRecord) -> Result<PreparedFlow> {
        let scaled = self.apply(record).map_err(|e| self.name_column(e))?;
        let tokens = tokenize(&scaled, &self.vocab, self.context)?;
        Ok(PreparedFlow { raw: record.clone(), scaled, tokens })
    }

    pub fn prepare_all(&self, dataset: &Dataset) -> Result<Vec<PreparedFlow>> {
        dataset
            .records
            .iter()
            .enumerate()
            .map(|(row, r)| self.prepare(r).map_err(|e| e.at_row(row)))
            .collect()
    }

    pub fn apply_dataset(&self, dataset: &Dataset) -> Result<Dataset> {
        let records = dataset
            .records
            .iter()
            .enumerate()
            .map(|(row, r)| self.apply(r).map_err(|e| self.name_column(e).at_row(row)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { schema: self.schema.clone(), records })
    }

    fn name_column(&self, err: DatasetError) -> DatasetError {
        match err {
            DatasetError::NonFinite { column, value } => {
                let name = column
                    .strip_prefix('#')
                    .and_then(|i| i.parse::<usize>().ok())
                    .and_then(|i| self.schema.columns().get(i))
                    .map(|c| c.name.clone())
                    .unwrap_or(column);
                DatasetError::NonFinite { column: name, value }
            }
            other => other,
        }
    }
}
