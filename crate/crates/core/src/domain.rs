//! Core data model: queries, documents, interactions, label distributions,
//! judgments, labeled pairs, and hashed datasets with a deterministic merge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::content_hash_jsonl;

/// Discrete relevance scale 0..cardinality-1. Cardinality 4 means grades
/// {0, 1, 2, 3}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    cardinality: usize,
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet { cardinality: 4 }
    }
}

impl LabelSet {
    pub fn new(cardinality: usize) -> Result<Self> {
        if cardinality < 2 {
            return Err(Error::config(format!(
                "label cardinality must be at least 2, got {cardinality}"
            )));
        }
        Ok(LabelSet { cardinality })
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn max_label(&self) -> usize {
        self.cardinality - 1
    }

    pub fn contains(&self, label: usize) -> bool {
        label < self.cardinality
    }

    pub fn require(&self, label: usize) -> Result<()> {
        if self.contains(label) {
            Ok(())
        } else {
            Err(Error::input(format!(
                "label {label} outside scale 0..={}",
                self.max_label()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageFamily {
    Germanic,
    Romance,
    Minor,
}

impl LanguageFamily {
    pub const ALL: [LanguageFamily; 3] = [
        LanguageFamily::Germanic,
        LanguageFamily::Romance,
        LanguageFamily::Minor,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LanguageFamily::Germanic => "germanic",
            LanguageFamily::Romance => "romance",
            LanguageFamily::Minor => "minor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub language_family: LanguageFamily,
    /// Iteration at which the query entered the stream (0 = seed traffic).
    pub arrival_iteration: usize,
}

impl Query {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::input("query id must be non-empty"));
        }
        if self.text.trim().is_empty() {
            return Err(Error::input(format!("query {}: empty text", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub hashtags: Vec<String>,
    pub summary: String,
}

impl Document {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::input("document id must be non-empty"));
        }
        if self.title.trim().is_empty() && self.summary.trim().is_empty() {
            return Err(Error::input(format!(
                "document {}: title and summary both empty",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionRecord {
    pub query_id: String,
    pub doc_id: String,
    pub clicked: bool,
    pub dwell_seconds: f64,
    /// 1-based position at which the document was shown.
    pub impression_rank: usize,
}

impl InteractionRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.dwell_seconds.is_finite() || self.dwell_seconds < 0.0 {
            return Err(Error::input(format!(
                "interaction {}/{}: dwell must be finite and non-negative",
                self.query_id, self.doc_id
            )));
        }
        if !self.clicked && self.dwell_seconds != 0.0 {
            return Err(Error::input(format!(
                "interaction {}/{}: dwell recorded without a click",
                self.query_id, self.doc_id
            )));
        }
        if self.impression_rank == 0 {
            return Err(Error::input(format!(
                "interaction {}/{}: impression rank is 1-based",
                self.query_id, self.doc_id
            )));
        }
        Ok(())
    }
}

/// A query joined with one candidate document and every interaction record
/// observed for that exact pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDocumentPair {
    pub query: Query,
    pub document: Document,
    pub interactions: Vec<InteractionRecord>,
}

impl QueryDocumentPair {
    pub fn new(
        query: Query,
        document: Document,
        interactions: Vec<InteractionRecord>,
    ) -> Result<Self> {
        query.validate()?;
        document.validate()?;
        for rec in &interactions {
            rec.validate()?;
            if rec.query_id != query.id || rec.doc_id != document.id {
                return Err(Error::input(format!(
                    "interaction {}/{} attached to pair {}/{}",
                    rec.query_id, rec.doc_id, query.id, document.id
                )));
            }
        }
        Ok(QueryDocumentPair {
            query,
            document,
            interactions,
        })
    }

    pub fn key(&self) -> (String, String) {
        (self.query.id.clone(), self.document.id.clone())
    }
}

/// Probability vector over the label scale. Entries are non-negative and sum
/// to one within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-9;

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::input(format!(
                "distribution needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for (i, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                return Err(Error::input(format!("probability {i} is {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(Error::input(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(LabelDistribution { probs })
    }

    pub fn uniform(cardinality: usize) -> Result<Self> {
        if cardinality < 2 {
            return Err(Error::input("uniform distribution needs cardinality >= 2"));
        }
        Ok(LabelDistribution {
            probs: vec![1.0 / cardinality as f64; cardinality],
        })
    }

    pub fn point_mass(label: usize, cardinality: usize) -> Result<Self> {
        if cardinality < 2 || label >= cardinality {
            return Err(Error::input(format!(
                "point mass at {label} outside scale of {cardinality}"
            )));
        }
        let mut probs = vec![0.0; cardinality];
        probs[label] = 1.0;
        Ok(LabelDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cardinality(&self) -> usize {
        self.probs.len()
    }

    /// Expectation of the label index: sum over y of y * Pr(y).
    pub fn expected_label(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(y, p)| y as f64 * p)
            .sum()
    }

    /// Expected label rescaled to [0, 1] by the maximum grade.
    pub fn expected_score(&self) -> f64 {
        self.expected_label() / (self.probs.len() - 1) as f64
    }

    /// Most probable label; ties resolve to the lower label.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentSource {
    Model,
    AnnotatorPath,
    ConsensusAgent,
}

/// One graded relevance opinion with its justification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub label: usize,
    pub rationale: String,
    pub source: JudgmentSource,
}

impl Judgment {
    pub fn validate(&self, label_set: &LabelSet) -> Result<()> {
        label_set.require(self.label)?;
        if self.rationale.is_empty() {
            return Err(Error::input("judgment rationale must be non-empty"));
        }
        Ok(())
    }
}

/// Where a labeled record came from. Generated data carries the iteration
/// that produced it; seed data is iteration zero by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Sft,
    Serm { iteration: usize },
    SelfTraining { iteration: usize },
}

impl Provenance {
    pub fn iteration(&self) -> usize {
        match self {
            Provenance::Sft => 0,
            Provenance::Serm { iteration } | Provenance::SelfTraining { iteration } => *iteration,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Provenance::Sft => "sft",
            Provenance::Serm { .. } => "serm",
            Provenance::SelfTraining { .. } => "self_training",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iteration() == 0 && !matches!(self, Provenance::Sft) {
            return Err(Error::input(
                "generated provenance requires iteration >= 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Total order used by merge collision resolution: later iterations win;
    /// within an iteration, consensus-annotated data outranks self-labeled,
    /// which outranks seed data.
    fn recency_rank(&self) -> (usize, u8) {
        let kind_rank = match self {
            Provenance::Sft => 0,
            Provenance::SelfTraining { .. } => 1,
            Provenance::Serm { .. } => 2,
        };
        (self.iteration(), kind_rank)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceRepr {
    kind: String,
    iteration: usize,
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProvenanceRepr {
            kind: self.kind().to_string(),
            iteration: self.iteration(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ProvenanceRepr::deserialize(deserializer)?;
        let prov = match repr.kind.as_str() {
            "sft" => {
                if repr.iteration != 0 {
                    return Err(serde::de::Error::custom("sft provenance has iteration 0"));
                }
                Provenance::Sft
            }
            "serm" => Provenance::Serm {
                iteration: repr.iteration,
            },
            "self_training" => Provenance::SelfTraining {
                iteration: repr.iteration,
            },
            other => return Err(serde::de::Error::custom(format!("unknown kind {other}"))),
        };
        prov.validate().map_err(serde::de::Error::custom)?;
        Ok(prov)
    }
}

/// A pair with its assigned grade, justification, and origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair: QueryDocumentPair,
    pub label: usize,
    pub rationale: String,
    pub provenance: Provenance,
}

impl LabeledPair {
    pub fn validate(&self, label_set: &LabelSet) -> Result<()> {
        label_set.require(self.label)?;
        if self.rationale.is_empty() {
            return Err(Error::input(format!(
                "labeled pair {}/{}: empty rationale",
                self.pair.query.id, self.pair.document.id
            )));
        }
        self.provenance.validate()
    }

    pub fn record(&self) -> LabeledRecord {
        LabeledRecord {
            query_id: self.pair.query.id.clone(),
            doc_id: self.pair.document.id.clone(),
            label: self.label,
            rationale: self.rationale.clone(),
            provenance: self.provenance,
        }
    }

    fn dedup_key(&self) -> (String, String, usize, u8) {
        let (iter_rank, kind_rank) = self.provenance.recency_rank();
        (
            self.pair.query.id.clone(),
            self.pair.document.id.clone(),
            iter_rank,
            kind_rank,
        )
    }
}

/// Canonical on-disk form of one labeled pair; also the hashing unit for
/// dataset content hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledRecord {
    pub query_id: String,
    pub doc_id: String,
    pub label: usize,
    pub rationale: String,
    pub provenance: Provenance,
}

/// An immutable collection of labeled pairs over one label scale, with a
/// stable content hash. No two records share (query_id, doc_id, provenance).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    label_set: LabelSet,
    records: Vec<LabeledPair>,
    content_hash: String,
}

impl Dataset {
    pub fn empty(label_set: LabelSet) -> Self {
        Dataset {
            label_set,
            records: Vec::new(),
            content_hash: content_hash_jsonl::<LabeledRecord>(&[])
                .expect("hashing empty slice cannot fail"),
        }
    }

    pub fn from_records(label_set: LabelSet, records: Vec<LabeledPair>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for rec in &records {
            rec.validate(&label_set)?;
            let key = (
                rec.pair.query.id.clone(),
                rec.pair.document.id.clone(),
                rec.provenance.recency_rank(),
            );
            if seen.insert(key, ()).is_some() {
                return Err(Error::input(format!(
                    "duplicate record for {}/{} with provenance {}#{}",
                    rec.pair.query.id,
                    rec.pair.document.id,
                    rec.provenance.kind(),
                    rec.provenance.iteration()
                )));
            }
        }
        let hash_rows: Vec<LabeledRecord> = records.iter().map(LabeledPair::record).collect();
        let content_hash = content_hash_jsonl(&hash_rows)?;
        Ok(Dataset {
            label_set,
            records,
            content_hash,
        })
    }

    pub fn label_set(&self) -> LabelSet {
        self.label_set
    }

    pub fn records(&self) -> &[LabeledPair] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sha-256 over the canonical record serialization; replay-stable.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }
}

/// Union of datasets with collision resolution and canonical output order.
///
/// When several parts carry the same (query_id, doc_id), the record whose
/// provenance has the latest iteration wins (consensus data outranks
/// self-labeled data within an iteration; among full provenance ties the
/// later part wins). Output is sorted by (query_id, doc_id) and the content
/// hash is recomputed.
pub fn dataset_merge(parts: &[Dataset]) -> Result<Dataset> {
    let Some(first) = parts.first() else {
        return Err(Error::input("dataset_merge needs at least one part"));
    };
    let label_set = first.label_set;
    for part in parts {
        if part.label_set != label_set {
            return Err(Error::config(format!(
                "dataset_merge: mixed label cardinalities {} and {}",
                label_set.cardinality(),
                part.label_set.cardinality()
            )));
        }
    }

    let mut chosen: BTreeMap<(String, String), LabeledPair> = BTreeMap::new();
    for part in parts {
        for rec in &part.records {
            let key = rec.pair.key();
            match chosen.get(&key) {
                Some(held) if held.dedup_key() > rec.dedup_key() => {}
                _ => {
                    chosen.insert(key, rec.clone());
                }
            }
        }
    }

    let records: Vec<LabeledPair> = chosen.into_values().collect();
    Dataset::from_records(label_set, records)
}
