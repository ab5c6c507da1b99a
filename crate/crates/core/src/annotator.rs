//! Two-level agreement annotation: pluggable backends emit multiple
//! reasoning paths per pair, strict plurality inside a backend yields a
//! stable label, and exact cross-backend agreement (tolerance configurable)
//! yields a consensus annotation. Everything else is rejected with a reason.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Judgment, JudgmentSource, LabelSet, LabeledPair, Provenance, QueryDocumentPair,
};
use crate::error::{Error, Result};
use crate::miner::MinedCandidate;
use crate::parallel::ordered_map;
use crate::seeding::{derive_seed, substream};

/// Signal block sent to backends alongside the pair, mirroring the mined
/// candidate's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationContext {
    /// Click-through rate over the pair's impressions.
    pub ctr: f64,
    /// Mean dwell seconds over the pair's impressions.
    pub dwell_time: f64,
    /// Click-model probability.
    pub cm_score: f64,
    /// Model's normalized expected score.
    pub model_score: f64,
    /// Sampled-judgment spread.
    pub disagreement_score: f64,
    /// Label-distribution entropy in nats.
    pub uncertainty: f64,
}

impl AnnotationContext {
    pub fn from_candidate(candidate: &MinedCandidate) -> Self {
        let interactions = &candidate.pair.interactions;
        let ctr = if interactions.is_empty() {
            0.0
        } else {
            interactions.iter().filter(|r| r.clicked).count() as f64 / interactions.len() as f64
        };
        AnnotationContext {
            ctr,
            dwell_time: candidate.signals.engagement_u,
            cm_score: candidate.signals.click_prob,
            model_score: candidate.signals.score_f,
            disagreement_score: candidate.signals.md,
            uncertainty: candidate.signals.mu,
        }
    }
}

/// Behavioral contract for an annotator backend: exactly `num_paths`
/// judgments per call, each with a non-empty rationale, deterministic in
/// `seed`. Failures surface as backend errors, never as default labels.
pub trait AnnotatorBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn annotate_paths(
        &self,
        pair: &QueryDocumentPair,
        context: &AnnotationContext,
        num_paths: usize,
        seed: u64,
    ) -> Result<Vec<Judgment>>;
}

/// Test oracle: each path independently emits the true label with
/// probability 1 - path_error_rate, otherwise a uniformly random wrong
/// label. Per-pair substreams make concurrent calls order-independent.
#[derive(Debug, Clone)]
pub struct MockOracleBackend {
    backend_id: String,
    truth: BTreeMap<(String, String), usize>,
    path_error_rate: f64,
    label_set: LabelSet,
    seed: u64,
}

impl MockOracleBackend {
    pub fn new(
        backend_id: impl Into<String>,
        truth: BTreeMap<(String, String), usize>,
        path_error_rate: f64,
        label_set: LabelSet,
        seed: u64,
    ) -> Result<Self> {
        if !(path_error_rate.is_finite() && (0.0..0.5).contains(&path_error_rate)) {
            return Err(Error::config(format!(
                "path_error_rate must lie in [0, 0.5), got {path_error_rate}"
            )));
        }
        for ((qid, did), label) in &truth {
            if !label_set.contains(*label) {
                return Err(Error::config(format!(
                    "truth label {label} for ({qid}, {did}) outside cardinality {}",
                    label_set.cardinality()
                )));
            }
        }
        Ok(MockOracleBackend {
            backend_id: backend_id.into(),
            truth,
            path_error_rate,
            label_set,
            seed,
        })
    }
}

impl AnnotatorBackend for MockOracleBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn annotate_paths(
        &self,
        pair: &QueryDocumentPair,
        _context: &AnnotationContext,
        num_paths: usize,
        seed: u64,
    ) -> Result<Vec<Judgment>> {
        let qid = &pair.query.id;
        let did = &pair.document.id;
        let truth = *self.truth.get(&(qid.clone(), did.clone())).ok_or_else(|| {
            Error::backend(
                &self.backend_id,
                format!("no ground truth for pair ({qid}, {did})"),
            )
        })?;
        let mut rng = substream(
            self.seed ^ seed,
            &["mock-paths", &self.backend_id, qid, did],
        );
        let cardinality = self.label_set.cardinality();
        let mut out = Vec::with_capacity(num_paths);
        for path in 0..num_paths {
            let label = if rng.random::<f64>() < self.path_error_rate {
                // Uniform over the wrong labels.
                let offset = rng.random_range(1..cardinality);
                (truth + offset) % cardinality
            } else {
                truth
            };
            out.push(Judgment {
                label,
                rationale: format!(
                    "path {path}: grade {label} for ({qid}, {did}) from oracle {}",
                    self.backend_id
                ),
                source: JudgmentSource::AnnotatorPath,
            });
        }
        Ok(out)
    }
}

/// JSON-over-POST wire schema for a remote annotator.
#[derive(Serialize)]
struct WireRequest<'a> {
    query: &'a crate::domain::Query,
    document: &'a crate::domain::Document,
    context: &'a AnnotationContext,
    num_paths: usize,
    label_cardinality: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireResponse {
    paths: Vec<WirePath>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePath {
    rationale: String,
    score: i64,
}

/// Remote backend speaking the wire schema. A response that fails schema
/// validation (wrong path count, out-of-range score, empty rationale) counts
/// as a failed attempt and is retried, never coerced.
pub struct HttpBackend {
    backend_id: String,
    endpoint: String,
    label_set: LabelSet,
    max_retries: usize,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(
        backend_id: impl Into<String>,
        endpoint: impl Into<String>,
        label_set: LabelSet,
        timeout_seconds: f64,
        max_retries: usize,
    ) -> Result<Self> {
        if !(timeout_seconds.is_finite() && timeout_seconds > 0.0) {
            return Err(Error::config("timeout_seconds must be positive"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs_f64(timeout_seconds))
            .build()
            .map_err(|e| Error::config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            backend_id: backend_id.into(),
            endpoint: endpoint.into(),
            label_set,
            max_retries,
            client,
        })
    }

    fn try_once(
        &self,
        pair: &QueryDocumentPair,
        context: &AnnotationContext,
        num_paths: usize,
    ) -> std::result::Result<Vec<Judgment>, String> {
        let request = WireRequest {
            query: &pair.query,
            document: &pair.document,
            context,
            num_paths,
            label_cardinality: self.label_set.cardinality(),
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&request)
            .send()
            .map_err(|e| format!("transport: {e}"))?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("status {status}"));
        }
        let body: WireResponse = response.json().map_err(|e| format!("schema: {e}"))?;
        if body.paths.len() != num_paths {
            return Err(format!(
                "schema: expected {num_paths} paths, got {}",
                body.paths.len()
            ));
        }
        let mut out = Vec::with_capacity(num_paths);
        for p in body.paths {
            if p.rationale.is_empty() {
                return Err("schema: empty rationale".to_string());
            }
            if p.score < 0 || p.score as usize > self.label_set.max_label() {
                return Err(format!(
                    "schema: score {} outside [0, {}]",
                    p.score,
                    self.label_set.max_label()
                ));
            }
            out.push(Judgment {
                label: p.score as usize,
                rationale: p.rationale,
                source: JudgmentSource::AnnotatorPath,
            });
        }
        Ok(out)
    }
}

impl AnnotatorBackend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn annotate_paths(
        &self,
        pair: &QueryDocumentPair,
        context: &AnnotationContext,
        num_paths: usize,
        _seed: u64,
    ) -> Result<Vec<Judgment>> {
        let mut last_error = String::new();
        for _ in 0..=self.max_retries {
            match self.try_once(pair, context, num_paths) {
                Ok(paths) => return Ok(paths),
                Err(e) => last_error = e,
            }
        }
        Err(Error::backend(
            &self.backend_id,
            format!(
                "{} attempts to {} failed, last: {last_error}",
                self.max_retries + 1,
                self.endpoint
            ),
        ))
    }
}

/// One backend's verdict on one pair after multi-path voting.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerAgreementResult {
    pub backend_id: String,
    pub query_id: String,
    pub doc_id: String,
    /// Present iff one label drew strictly more votes than every other.
    pub stable_label: Option<usize>,
    /// The paths that voted for the stable label, in path order.
    pub supporting_paths: Vec<Judgment>,
    pub vote_counts: BTreeMap<usize, usize>,
}

/// Run `num_paths` reasoning paths through one backend and apply strict
/// plurality: the stable label needs strictly more votes than any rival,
/// a first-place tie yields none.
pub fn inner_agreement(
    backend: &dyn AnnotatorBackend,
    pair: &QueryDocumentPair,
    context: &AnnotationContext,
    num_paths: usize,
    seed: u64,
) -> Result<InnerAgreementResult> {
    if num_paths < 1 {
        return Err(Error::input("inner agreement needs num_paths >= 1"));
    }
    let paths = backend.annotate_paths(pair, context, num_paths, seed)?;
    if paths.len() != num_paths {
        return Err(Error::backend(
            backend.backend_id(),
            format!("returned {} paths, expected {num_paths}", paths.len()),
        ));
    }
    if paths.iter().any(|j| j.rationale.is_empty()) {
        return Err(Error::backend(
            backend.backend_id(),
            "returned a path with an empty rationale",
        ));
    }

    let mut vote_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for j in &paths {
        *vote_counts.entry(j.label).or_insert(0) += 1;
    }
    let top = *vote_counts.values().max().expect("num_paths >= 1");
    let leaders: Vec<usize> = vote_counts
        .iter()
        .filter(|(_, &c)| c == top)
        .map(|(&l, _)| l)
        .collect();
    let stable_label = if leaders.len() == 1 { Some(leaders[0]) } else { None };
    let supporting_paths = match stable_label {
        Some(label) => paths.into_iter().filter(|j| j.label == label).collect(),
        None => Vec::new(),
    };
    Ok(InnerAgreementResult {
        backend_id: backend.backend_id().to_string(),
        query_id: pair.query.id.clone(),
        doc_id: pair.document.id.clone(),
        stable_label,
        supporting_paths,
        vote_counts,
    })
}

/// A pair that cleared both agreement levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusAnnotation {
    pub pair: QueryDocumentPair,
    pub label: usize,
    pub consolidated_rationale: String,
    pub backend_ids: Vec<String>,
    pub iteration: usize,
}

impl ConsensusAnnotation {
    pub fn record(&self) -> AnnotationRecord {
        AnnotationRecord {
            query_id: self.pair.query.id.clone(),
            doc_id: self.pair.document.id.clone(),
            label: self.label,
            rationale: self.consolidated_rationale.clone(),
            backend_ids: self.backend_ids.clone(),
            iteration: self.iteration,
        }
    }

    /// Training-ready form carrying consensus provenance.
    pub fn to_labeled(&self) -> Result<LabeledPair> {
        let provenance = Provenance::Serm {
            iteration: self.iteration,
        };
        provenance.validate()?;
        Ok(LabeledPair {
            pair: self.pair.clone(),
            label: self.label,
            rationale: self.consolidated_rationale.clone(),
            provenance,
        })
    }
}

/// Wire form of an annotation, one JSON object per annotations.jsonl line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub doc_id: String,
    pub label: usize,
    pub rationale: String,
    pub backend_ids: Vec<String>,
    pub iteration: usize,
}

/// Deterministic consolidation: a header naming the consensus label, then
/// the deduplicated path rationales in their given (backend, path) order.
pub fn consolidate_rationales(paths: &[Judgment]) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::input("cannot consolidate an empty path list"));
    }
    let label = paths[0].label;
    if paths.iter().any(|j| j.label != label) {
        return Err(Error::input("cannot consolidate paths with mixed labels"));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut parts = Vec::new();
    for j in paths {
        if seen.insert(j.rationale.as_str()) {
            parts.push(j.rationale.as_str());
        }
    }
    Ok(format!("consensus label {label}: {}", parts.join(" | ")))
}

/// Cross-backend consensus for one pair: every backend must hold a stable
/// label and the labels must agree (exactly at tolerance 0, within
/// `tolerance` grades otherwise, resolved to the lower median).
pub fn inter_agreement(
    pair: &QueryDocumentPair,
    results: &[InnerAgreementResult],
    tolerance: usize,
    iteration: usize,
) -> Result<Option<ConsensusAnnotation>> {
    if results.is_empty() {
        return Err(Error::input("inter agreement needs at least one backend result"));
    }
    let mut seen_backends = std::collections::BTreeSet::new();
    for r in results {
        if !seen_backends.insert(r.backend_id.as_str()) {
            return Err(Error::input(format!(
                "duplicate backend id {} in inter agreement",
                r.backend_id
            )));
        }
        if r.query_id != pair.query.id || r.doc_id != pair.document.id {
            return Err(Error::input(format!(
                "result from {} references pair ({}, {}), expected ({}, {})",
                r.backend_id, r.query_id, r.doc_id, pair.query.id, pair.document.id
            )));
        }
    }

    let mut labels = Vec::with_capacity(results.len());
    for r in results {
        match r.stable_label {
            Some(l) => labels.push(l),
            None => return Ok(None),
        }
    }
    let min = *labels.iter().min().expect("non-empty");
    let max = *labels.iter().max().expect("non-empty");
    if max - min > tolerance {
        return Ok(None);
    }
    let mut sorted = labels.clone();
    sorted.sort_unstable();
    let label = sorted[(sorted.len() - 1) / 2];

    // Rationales come from the paths that voted for the consensus label,
    // in backend-then-path order.
    let supporting: Vec<Judgment> = results
        .iter()
        .flat_map(|r| r.supporting_paths.iter())
        .filter(|j| j.label == label)
        .cloned()
        .collect();
    let consolidated_rationale = if supporting.is_empty() {
        // Possible only with tolerance > 0 when no backend voted for the
        // median itself.
        format!("consensus label {label}: within tolerance {tolerance} of all backends")
    } else {
        consolidate_rationales(&supporting)?
    };
    Ok(Some(ConsensusAnnotation {
        pair: pair.clone(),
        label,
        consolidated_rationale,
        backend_ids: results.iter().map(|r| r.backend_id.clone()).collect(),
        iteration,
    }))
}

/// Why a mined pair produced no annotation. Backend failure outranks tie,
/// tie outranks cross-backend disagreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    BackendFailure,
    Tie,
    CrossBackendDisagreement,
}

/// Wire form of a rejection, one JSON object per rejections.jsonl line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RejectionRecord {
    pub query_id: String,
    pub doc_id: String,
    pub reason: RejectionReason,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationBatch {
    pub annotations: Vec<ConsensusAnnotation>,
    pub rejections: Vec<RejectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateOptions {
    /// Reasoning paths per backend per pair.
    #[serde(default = "default_num_paths")]
    pub num_paths: usize,
    /// Maximum cross-backend label spread still counted as consensus.
    #[serde(default)]
    pub consensus_tolerance: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_workers")]
    pub max_workers: usize,
}

fn default_num_paths() -> usize {
    3
}
fn default_max_workers() -> usize {
    1
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions {
            num_paths: default_num_paths(),
            consensus_tolerance: 0,
            seed: 0,
            max_workers: default_max_workers(),
        }
    }
}

impl AnnotateOptions {
    pub fn validate(&self) -> Result<()> {
        if self.num_paths < 1 {
            return Err(Error::config("num_paths must be >= 1"));
        }
        Ok(())
    }
}

/// Run both agreement levels over a mined batch. Per-(pair, backend) seeds
/// are derived from the batch seed, so backend fan-out cannot change any
/// output. Outputs are in (query_id, doc_id) order.
pub fn annotate_batch(
    candidates: &[MinedCandidate],
    backends: &[Box<dyn AnnotatorBackend>],
    opts: &AnnotateOptions,
) -> Result<AnnotationBatch> {
    if backends.is_empty() {
        return Err(Error::config("annotate_batch needs at least one backend"));
    }
    opts.validate()?;
    let mut seen = std::collections::BTreeSet::new();
    for b in backends {
        if !seen.insert(b.backend_id().to_string()) {
            return Err(Error::config(format!(
                "duplicate backend id {}",
                b.backend_id()
            )));
        }
    }

    enum Outcome {
        Annotated(ConsensusAnnotation),
        Rejected(RejectionRecord),
    }

    let outcomes: Vec<Result<Outcome>> = ordered_map(candidates, opts.max_workers, |candidate| {
        let pair = &candidate.pair;
        let context = AnnotationContext::from_candidate(candidate);
        let mut results = Vec::with_capacity(backends.len());
        let mut failure: Option<Error> = None;
        for backend in backends {
            let seed = derive_seed(
                opts.seed,
                &["annotate", &pair.query.id, &pair.document.id, backend.backend_id()],
            );
            match inner_agreement(backend.as_ref(), pair, &context, opts.num_paths, seed) {
                Ok(r) => results.push(r),
                Err(e @ Error::Backend { .. }) => {
                    log::warn!("backend failure on ({}, {}): {e}", pair.query.id, pair.document.id);
                    failure = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let reject = |reason| {
            Ok(Outcome::Rejected(RejectionRecord {
                query_id: pair.query.id.clone(),
                doc_id: pair.document.id.clone(),
                reason,
                iteration: candidate.mined_iteration,
            }))
        };
        if failure.is_some() {
            return reject(RejectionReason::BackendFailure);
        }
        if results.iter().any(|r| r.stable_label.is_none()) {
            return reject(RejectionReason::Tie);
        }
        match inter_agreement(
            pair,
            &results,
            opts.consensus_tolerance,
            candidate.mined_iteration,
        )? {
            Some(annotation) => Ok(Outcome::Annotated(annotation)),
            None => reject(RejectionReason::CrossBackendDisagreement),
        }
    });

    let mut annotations = Vec::new();
    let mut rejections = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Outcome::Annotated(a) => annotations.push(a),
            Outcome::Rejected(r) => rejections.push(r),
        }
    }
    annotations.sort_by(|a, b| {
        (&a.pair.query.id, &a.pair.document.id).cmp(&(&b.pair.query.id, &b.pair.document.id))
    });
    rejections.sort_by(|a, b| (&a.query_id, &a.doc_id).cmp(&(&b.query_id, &b.doc_id)));
    Ok(AnnotationBatch {
        annotations,
        rejections,
    })
}
