//! Signature-based detection: a flow is flagged when it satisfies every
//! predicate of at least one rule in the compiled set.

mod automaton;
mod rules;

pub use automaton::{Match, TokenAutomaton};
pub use rules::parse_rules;

use std::collections::HashSet;

use thiserror::Error;

use crate::dataset::{DatasetSchema, FlowRecord, TokenSequence, Value};

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("rule file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateId(String),
    #[error("rule `{id}`: {message}")]
    InvalidRule { id: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// Raw categorical cell equals `value`; numeric cells compare numerically.
    Equals { column: String, value: String },
    /// Raw numeric cell lies in the closed interval `[lo, hi]`.
    InRange { column: String, lo: f64, hi: f64 },
    /// Token ids that must occur contiguously in the flow's token sequence.
    Tokens(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRule {
    pub id: String,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone)]
enum Compiled {
    Equals { column: String, value: String, numeric: Option<f64> },
    InRange { column: String, lo: f64, hi: f64 },
    Pattern(usize),
}

#[derive(Debug, Clone)]
struct CompiledRule {
    id: String,
    predicates: Vec<Compiled>,
}

/// Immutable compiled rule set.
#[derive(Debug, Clone)]
pub struct SignatureSet {
    rules: Vec<CompiledRule>,
    source: Vec<SignatureRule>,
    automaton: TokenAutomaton,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SbdVerdict {
    pub detected: bool,
    /// Ids of every rule the flow satisfies, in rule order.
    pub matched: Vec<String>,
}

impl SignatureSet {
    pub fn compile(rules: Vec<SignatureRule>) -> Result<Self, SignatureError> {
        let mut seen = HashSet::new();
        let mut patterns = Vec::new();
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in &rules {
            if !seen.insert(rule.id.as_str()) {
                return Err(SignatureError::DuplicateId(rule.id.clone()));
            }
            let invalid = |m: &str| SignatureError::InvalidRule { id: rule.id.clone(), message: m.into() };
            if rule.predicates.is_empty() {
                return Err(invalid("a rule needs at least one predicate"));
            }
            let mut preds = Vec::with_capacity(rule.predicates.len());
            for p in &rule.predicates {
                preds.push(match p {
                    Predicate::Equals { column, value } => Compiled::Equals {
                        column: column.clone(),
                        value: value.clone(),
                        numeric: value.trim().parse().ok(),
                    },
                    Predicate::InRange { column, lo, hi } => {
                        if lo.is_nan() || hi.is_nan() || lo > hi {
                            return Err(invalid(&format!("empty interval [{lo}, {hi}]")));
                        }
                        Compiled::InRange { column: column.clone(), lo: *lo, hi: *hi }
                    }
                    Predicate::Tokens(ids) => {
                        if ids.is_empty() {
                            return Err(invalid("token pattern must not be empty"));
                        }
                        patterns.push(ids.clone());
                        Compiled::Pattern(patterns.len() - 1)
                    }
                });
            }
            compiled.push(CompiledRule { id: rule.id.clone(), predicates: preds });
        }
        Ok(Self { rules: compiled, source: rules, automaton: TokenAutomaton::new(patterns) })
    }

    pub fn from_rule_text(text: &str) -> Result<Self, SignatureError> {
        Self::compile(parse_rules(text)?)
    }

    pub fn empty() -> Self {
        Self::compile(Vec::new()).expect("empty rule set compiles")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[SignatureRule] {
        &self.source
    }

    pub fn automaton(&self) -> &TokenAutomaton {
        &self.automaton
    }

    /// Evaluate every rule against a raw record and its token sequence.
    /// Predicates on columns missing from `schema` are unsatisfied.
    pub fn detect_sbd(
        &self,
        schema: &DatasetSchema,
        record: &FlowRecord,
        tokens: &TokenSequence,
    ) -> SbdVerdict {
        if self.rules.is_empty() {
            return SbdVerdict::default();
        }
        let hits = self.automaton.matched(tokens.as_slice());
        let cell = |column: &str| schema.column_index(column).and_then(|i| record.features.get(i));
        let matched: Vec<String> = self
            .rules
            .iter()
            .filter(|rule| {
                rule.predicates.iter().all(|p| match p {
                    Compiled::Pattern(idx) => hits[*idx],
                    Compiled::Equals { column, value, numeric } => match cell(column) {
                        Some(Value::Text(s)) => s == value,
                        Some(Value::Real(v)) => numeric.is_some_and(|n| n == *v),
                        _ => false,
                    },
                    Compiled::InRange { column, lo, hi } => match cell(column) {
                        Some(Value::Real(v)) => *lo <= *v && *v <= *hi,
                        _ => false,
                    },
                })
            })
            .map(|rule| rule.id.clone())
            .collect();
        SbdVerdict { detected: !matched.is_empty(), matched }
    }
}

impl std::fmt::Display for SignatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.source {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
