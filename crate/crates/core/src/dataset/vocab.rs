use std::collections::HashMap;

use super::preprocess::CategoryMap;
use super::{ColumnKind, DatasetError, DatasetSchema, FlowRecord, Result, Value};

/// Token ids of one feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnTokens {
    /// `width` = learned identifiers + 1 unknown.
    Categorical { base: u32, width: u32 },
    Numeric { base: u32, bins: u32 },
}

/// Token vocabulary: five reserved tokens followed by per-column blocks in
/// column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    bins: u32,
    columns: Vec<ColumnTokens>,
    names: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl TokenVocab {
    pub const PAD: u32 = 0;
    pub const UNKNOWN: u32 = 1;
    pub const CLASS_QUERY: u32 = 2;
    pub const CLASS_BENIGN: u32 = 3;
    pub const CLASS_THREAT: u32 = 4;
    pub const RESERVED: u32 = 5;
    const RESERVED_NAMES: [&'static str; 5] = ["<pad>", "<unk>", "<query>", "<benign>", "<threat>"];

    /// Rebuild a vocabulary from its per-column layout.
    pub fn from_columns(bins: u32, columns: Vec<ColumnTokens>) -> Result<Self> {
        let mut names: Vec<String> = Self::RESERVED_NAMES.iter().map(|s| s.to_string()).collect();
        for (c, col) in columns.iter().enumerate() {
            let base = names.len() as u32;
            match *col {
                ColumnTokens::Categorical { base: b, width } => {
                    if b != base || width == 0 {
                        return Err(DatasetError::Vocab(format!("column {c}: bad categorical block")));
                    }
                    for id in 0..width - 1 {
                        names.push(format!("c{c}:id{id}"));
                    }
                    names.push(format!("c{c}:unk"));
                }
                ColumnTokens::Numeric { base: b, bins: nb } => {
                    if b != base || nb != bins || bins == 0 {
                        return Err(DatasetError::Vocab(format!("column {c}: bad numeric block")));
                    }
                    for bin in 0..bins {
                        names.push(format!("c{c}:b{bin}"));
                    }
                }
            }
        }
        let lookup = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Ok(Self { bins, columns, names, lookup })
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn bins(&self) -> u32 {
        self.bins
    }

    pub fn columns(&self) -> &[ColumnTokens] {
        &self.columns
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.lookup.get(name).copied()
    }

    pub fn is_reserved(id: u32) -> bool {
        id < Self::RESERVED
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Quantization bin for a scaled value; out-of-range values go to the
    /// edge bins.
    pub fn bin_of(&self, v: f64) -> u32 {
        let b = (v * self.bins as f64).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as u32).min(self.bins - 1)
        }
    }

    pub fn token_for(&self, column: usize, value: &Value) -> Result<u32> {
        let block = self
            .columns
            .get(column)
            .ok_or_else(|| DatasetError::Vocab(format!("no tokens for column {column}")))?;
        match (block, value) {
            (ColumnTokens::Categorical { base, width }, Value::Id(id)) => {
                if *id < *width {
                    Ok(base + id)
                } else {
                    Err(DatasetError::Vocab(format!("column {column}: no token for identifier {id}")))
                }
            }
            (ColumnTokens::Numeric { base, .. }, Value::Real(v)) => {
                if !v.is_finite() {
                    return Err(DatasetError::Vocab(format!("column {column}: non-finite value")));
                }
                Ok(base + self.bin_of(*v))
            }
            (_, Value::Text(s)) => Err(DatasetError::Vocab(format!(
                "column {column}: raw string `{s}` must be encoded before tokenization"
            ))),
            _ => Err(DatasetError::Vocab(format!("column {column}: value kind does not match vocabulary"))),
        }
    }
}

pub fn build_vocab(schema: &DatasetSchema, categories: &CategoryMap, bins: u32) -> Result<TokenVocab> {
    if bins == 0 {
        return Err(DatasetError::Argument("bin count must be positive".into()));
    }
    let mut next = TokenVocab::RESERVED;
    let mut columns = Vec::with_capacity(schema.arity());
    for (i, col) in schema.columns().iter().enumerate() {
        let block = match col.kind {
            ColumnKind::Categorical => {
                let width = categories.column(i).map_or(0, |c| c.len()) as u32 + 1;
                ColumnTokens::Categorical { base: next, width }
            }
            ColumnKind::Numeric => ColumnTokens::Numeric { base: next, bins },
        };
        next += match block {
            ColumnTokens::Categorical { width, .. } => width,
            ColumnTokens::Numeric { bins, .. } => bins,
        };
        columns.push(block);
    }
    TokenVocab::from_columns(bins, columns)
}

/// Token ids of a flow, bounded by the context window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<u32>);

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, vocab_size: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(DatasetError::Vocab("token sequence must not be empty".into()));
        }
        if let Some(t) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(DatasetError::Vocab(format!("token {t} outside vocabulary of {vocab_size}")));
        }
        Ok(Self(tokens))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ends_with_query(&self) -> bool {
        self.0.last() == Some(&TokenVocab::CLASS_QUERY)
    }
}

/// One token per feature, truncated to the last `context - 1`, then the
/// class-query token.
pub fn tokenize(record: &FlowRecord, vocab: &TokenVocab, context: usize) -> Result<TokenSequence> {
    if context < 2 {
        return Err(DatasetError::Argument(format!("context window must be >= 2, got {context}")));
    }
    let mut tokens = record
        .features
        .iter()
        .enumerate()
        .map(|(i, v)| vocab.token_for(i, v))
        .collect::<Result<Vec<u32>>>()?;
    if tokens.len() > context - 1 {
        tokens.drain(..tokens.len() - (context - 1));
    }
    tokens.push(TokenVocab::CLASS_QUERY);
    Ok(TokenSequence(tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fit_categorical, Column, Dataset, Label};

    fn schema(cols: &[(&str, ColumnKind)]) -> DatasetSchema {
        DatasetSchema::new(
            cols.iter().map(|(n, k)| Column { name: n.to_string(), kind: *k }).collect(),
            "Label",
            "Benign",
        )
        .unwrap()
    }

    #[test]
    fn vocab_size_counts() {
        let s = schema(&[("proto", ColumnKind::Categorical), ("bytes", ColumnKind::Numeric)]);
        let ds = Dataset::new(
            s.clone(),
            vec![
                FlowRecord::new(vec![Value::Text("tcp".into()), Value::Real(1.0)], Some(Label::Benign)),
                FlowRecord::new(vec![Value::Text("udp".into()), Value::Real(2.0)], Some(Label::Benign)),
            ],
        );
        let v = build_vocab(&s, &fit_categorical(&ds, &s), 4).unwrap();
        assert_eq!(v.size(), (2 + 1) + 4 + 5);
    }

    #[test]
    fn reserved_only_when_no_feature_tokens() {
        let v = TokenVocab::from_columns(16, vec![]).unwrap();
        assert_eq!(v.size(), 5);
    }

    #[test]
    fn two_numeric_features_bin_edges() {
        let s = schema(&[("a", ColumnKind::Numeric), ("b", ColumnKind::Numeric)]);
        let map = CategoryMap { columns: vec![None, None] };
        let v = build_vocab(&s, &map, 4).unwrap();
        let rec = FlowRecord::new(vec![Value::Real(0.0), Value::Real(0.99)], None);
        let t = tokenize(&rec, &v, 16).unwrap();
        let expected = vec![v.id("c0:b0").unwrap(), v.id("c1:b3").unwrap(), TokenVocab::CLASS_QUERY];
        assert_eq!(t.as_slice(), expected.as_slice());
        assert_eq!(tokenize(&rec, &v, 16).unwrap(), t);
    }

    #[test]
    fn out_of_range_values_clamp_to_edge_bins() {
        let v = TokenVocab::from_columns(4, vec![ColumnTokens::Numeric { base: 5, bins: 4 }]).unwrap();
        assert_eq!(v.bin_of(-3.0), 0);
        assert_eq!(v.bin_of(1.0), 3);
        assert_eq!(v.bin_of(7.5), 3);
        assert_eq!(v.bin_of(0.25), 1);
    }

    #[test]
    fn truncation_keeps_last_positions() {
        let cols: Vec<ColumnTokens> =
            (0..5).map(|i| ColumnTokens::Numeric { base: 5 + 2 * i, bins: 2 }).collect();
        let v = TokenVocab::from_columns(2, cols).unwrap();
        let rec = FlowRecord::new((0..5).map(|_| Value::Real(0.9)).collect(), None);
        let t = tokenize(&rec, &v, 3).unwrap();
        assert_eq!(t.as_slice(), &[v.id("c3:b1").unwrap(), v.id("c4:b1").unwrap(), TokenVocab::CLASS_QUERY]);
    }

    #[test]
    fn mismatched_record_is_vocab_error() {
        let v = TokenVocab::from_columns(4, vec![ColumnTokens::Numeric { base: 5, bins: 4 }]).unwrap();
        let rec = FlowRecord::new(vec![Value::Real(0.1), Value::Real(0.2)], None);
        assert!(matches!(tokenize(&rec, &v, 8), Err(DatasetError::Vocab(_))));
        let rec = FlowRecord::new(vec![Value::Id(0)], None);
        assert!(matches!(tokenize(&rec, &v, 8), Err(DatasetError::Vocab(_))));
    }

    #[test]
    fn reserved_ids_never_produced_by_features() {
        let s = schema(&[("p", ColumnKind::Categorical), ("x", ColumnKind::Numeric)]);
        let map = CategoryMap { columns: vec![Some(Default::default()), None] };
        let v = build_vocab(&s, &map, 16).unwrap();
        for (id, name) in v.names().iter().enumerate() {
            let reserved = TokenVocab::is_reserved(id as u32);
            assert_eq!(reserved, name.starts_with('<'), "{name}");
        }
        assert_eq!(v.id("<query>"), Some(TokenVocab::CLASS_QUERY));
        assert_eq!(v.id("<threat>"), Some(TokenVocab::CLASS_THREAT));
    }
}
