//! Synthetic world: a topic-token corpus with graded ground truth, per-
//! iteration query streams whose topic mix drifts, position-biased click
//! and dwell simulation, and a trainable logistic click model. Everything
//! is a pure function of (config, seed).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Dataset, Document, InteractionRecord, LabelSet, LabeledPair, LanguageFamily, Provenance,
    Query, QueryDocumentPair,
};
use crate::error::{Error, Result};
use crate::miner::ClickPredictor;
use crate::model::{tokenize, FeatureExtractor, FEATURE_DIM};
use crate::optim::{descend, TrainOptions};
use crate::seeding::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Total topics; the first half seeds iteration-0 data, the rest arrive
    /// in per-iteration blocks of `fresh_topics_per_iteration`.
    #[serde(default = "default_num_topics")]
    pub num_topics: usize,
    #[serde(default = "default_vocab_per_topic")]
    pub vocab_per_topic: usize,
    #[serde(default = "default_num_docs")]
    pub num_docs: usize,
    #[serde(default = "default_queries_per_iteration")]
    pub queries_per_iteration: usize,
    /// Fraction of each iteration's queries drawn from topics unseen in any
    /// earlier iteration.
    #[serde(default = "default_drift_rate")]
    pub drift_rate: f64,
    /// Examination probability by rank; the last entry repeats for deeper
    /// ranks. Must be non-increasing.
    #[serde(default = "default_position_examine_probs")]
    pub position_examine_probs: Vec<f64>,
    /// Mean dwell seconds per true label for clicked impressions.
    #[serde(default = "default_dwell_mean_per_label")]
    pub dwell_mean_per_label: Vec<f64>,
    /// Click probability per true label once examined.
    #[serde(default = "default_attraction_per_label")]
    pub attraction_per_label: Vec<f64>,
    /// Topics introduced by each drifted iteration.
    #[serde(default = "default_fresh_topics_per_iteration")]
    pub fresh_topics_per_iteration: usize,
    /// Topic-free trending tokens that pepper drifted queries and echo docs.
    #[serde(default = "default_trend_tokens")]
    pub trend_tokens: usize,
    /// Top-by-lexical-overlap candidates retrieved per query.
    #[serde(default = "default_candidates_per_query")]
    pub candidates_per_query: usize,
    /// Extra random candidates appended per query.
    #[serde(default = "default_random_negatives")]
    pub random_negatives: usize,
    /// Held-out evaluation queries generated per topic at world build.
    #[serde(default = "default_eval_queries_per_topic")]
    pub eval_queries_per_topic: usize,
    /// Truth-labeled candidates per iteration-0 query entering the curated
    /// dataset, sampled evenly across each retrieval list. Keeps the curated
    /// set small next to the mined stream, so later iterations are dominated
    /// by generated labels.
    #[serde(default = "default_sft_candidates_per_query")]
    pub sft_candidates_per_query: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_num_topics() -> usize {
    24
}
fn default_vocab_per_topic() -> usize {
    12
}
fn default_num_docs() -> usize {
    300
}
fn default_queries_per_iteration() -> usize {
    1000
}
fn default_drift_rate() -> f64 {
    0.3
}
fn default_position_examine_probs() -> Vec<f64> {
    vec![1.0, 0.6, 0.4, 0.25, 0.15]
}
fn default_dwell_mean_per_label() -> Vec<f64> {
    vec![1.0, 3.0, 8.0, 15.0]
}
fn default_attraction_per_label() -> Vec<f64> {
    vec![0.05, 0.2, 0.5, 0.8]
}
fn default_fresh_topics_per_iteration() -> usize {
    2
}
fn default_trend_tokens() -> usize {
    10
}
fn default_candidates_per_query() -> usize {
    10
}
fn default_random_negatives() -> usize {
    5
}
fn default_eval_queries_per_topic() -> usize {
    8
}
fn default_sft_candidates_per_query() -> usize {
    4
}

impl Default for WorldConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl WorldConfig {
    pub fn base_topics(&self) -> usize {
        self.num_topics / 2
    }

    pub fn label_set(&self) -> Result<LabelSet> {
        LabelSet::new(self.dwell_mean_per_label.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics < 2 {
            return Err(Error::config(format!(
                "num_topics must be >= 2, got {}",
                self.num_topics
            )));
        }
        if self.vocab_per_topic < 6 {
            return Err(Error::config("vocab_per_topic must be >= 6"));
        }
        if self.num_docs < self.num_topics {
            return Err(Error::config(format!(
                "num_docs {} cannot cover {} topics",
                self.num_docs, self.num_topics
            )));
        }
        if self.queries_per_iteration < 1 {
            return Err(Error::config("queries_per_iteration must be >= 1"));
        }
        if !(self.drift_rate.is_finite() && (0.0..=1.0).contains(&self.drift_rate)) {
            return Err(Error::config(format!(
                "drift_rate must lie in [0,1], got {}",
                self.drift_rate
            )));
        }
        if self.position_examine_probs.is_empty() {
            return Err(Error::config("position_examine_probs must be non-empty"));
        }
        for w in self.position_examine_probs.windows(2) {
            if w[1] > w[0] {
                return Err(Error::config(
                    "position_examine_probs must be non-increasing in rank",
                ));
            }
        }
        for p in &self.position_examine_probs {
            if !(p.is_finite() && *p > 0.0 && *p <= 1.0) {
                return Err(Error::config(format!(
                    "examine probability {p} outside (0,1]"
                )));
            }
        }
        if self.dwell_mean_per_label.len() < 2 {
            return Err(Error::config("dwell_mean_per_label needs >= 2 labels"));
        }
        for w in self.dwell_mean_per_label.windows(2) {
            if w[1] < w[0] {
                return Err(Error::config(
                    "dwell_mean_per_label must be non-decreasing in label",
                ));
            }
        }
        for m in &self.dwell_mean_per_label {
            if !(m.is_finite() && *m >= 0.0) {
                return Err(Error::config(format!("dwell mean {m} must be >= 0")));
            }
        }
        if self.attraction_per_label.len() != self.dwell_mean_per_label.len() {
            return Err(Error::config(
                "attraction_per_label and dwell_mean_per_label must cover the same labels",
            ));
        }
        for w in self.attraction_per_label.windows(2) {
            if w[1] < w[0] {
                return Err(Error::config(
                    "attraction_per_label must be non-decreasing in label",
                ));
            }
        }
        for a in &self.attraction_per_label {
            if !(a.is_finite() && *a > 0.0 && *a <= 1.0) {
                return Err(Error::config(format!("attraction {a} outside (0,1]")));
            }
        }
        if self.fresh_topics_per_iteration < 1 {
            return Err(Error::config("fresh_topics_per_iteration must be >= 1"));
        }
        if self.trend_tokens < 2 {
            return Err(Error::config("trend_tokens must be >= 2"));
        }
        if self.candidates_per_query < 1 {
            return Err(Error::config("candidates_per_query must be >= 1"));
        }
        if self.eval_queries_per_topic < 1 {
            return Err(Error::config("eval_queries_per_topic must be >= 1"));
        }
        if self.sft_candidates_per_query < 1 {
            return Err(Error::config("sft_candidates_per_query must be >= 1"));
        }
        if self.base_topics() < 1 {
            return Err(Error::config("num_topics too small for a base block"));
        }
        Ok(())
    }

    /// Highest iteration whose drifted queries still have a fresh topic
    /// block available.
    pub fn max_drift_iterations(&self) -> usize {
        (self.num_topics - self.base_topics()) / self.fresh_topics_per_iteration
    }
}

/// Ground-truth relevance for every materialized (query, document) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    relevance: BTreeMap<(String, String), usize>,
}

/// Wire form of one truth entry, one JSON object per truth.jsonl line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub query_id: String,
    pub doc_id: String,
    pub label: usize,
}

impl GroundTruth {
    pub fn label(&self, query_id: &str, doc_id: &str) -> Result<usize> {
        self.relevance
            .get(&(query_id.to_string(), doc_id.to_string()))
            .copied()
            .ok_or_else(|| {
                Error::state(format!(
                    "no ground truth for pair ({query_id}, {doc_id})"
                ))
            })
    }

    pub fn insert(&mut self, query_id: String, doc_id: String, label: usize) {
        self.relevance.insert((query_id, doc_id), label);
    }

    pub fn merge(&mut self, other: &GroundTruth) {
        for ((q, d), l) in &other.relevance {
            self.relevance.insert((q.clone(), d.clone()), *l);
        }
    }

    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn records(&self) -> Vec<TruthRecord> {
        self.relevance
            .iter()
            .map(|((q, d), l)| TruthRecord {
                query_id: q.clone(),
                doc_id: d.clone(),
                label: *l,
            })
            .collect()
    }

    /// As a truth map for mock annotator backends.
    pub fn as_map(&self) -> BTreeMap<(String, String), usize> {
        self.relevance.clone()
    }
}

/// Topic composition of one generated document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocProfile {
    pub primary_topic: usize,
    pub secondary_topic: Option<usize>,
    pub title_tokens: BTreeSet<String>,
}

/// Graded affinity rule: 3 = primary-topic match with a shared title token,
/// 2 = primary-topic match, 1 = secondary-topic match, 0 = anything else.
pub fn grade_pair(query_topic: usize, query_tokens: &BTreeSet<String>, doc: &DocProfile) -> usize {
    if doc.primary_topic == query_topic {
        if query_tokens.iter().any(|t| doc.title_tokens.contains(t)) {
            3
        } else {
            2
        }
    } else if doc.secondary_topic == Some(query_topic) {
        1
    } else {
        0
    }
}

/// One iteration's query stream with retrieved candidates and their truth.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStream {
    pub iteration: usize,
    pub queries: Vec<Query>,
    /// Per query: top-overlap candidates first, then random negatives.
    pub candidates: BTreeMap<String, Vec<Document>>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub label_set: LabelSet,
    pub documents: Vec<Document>,
    /// Truth for SFT pairs and the held-out evaluation pairs.
    pub truth: GroundTruth,
    pub sft_queries: Vec<Query>,
    pub sft_candidates: BTreeMap<String, Vec<Document>>,
    pub sft_dataset: Dataset,
    pub eval_queries: Vec<Query>,
    pub eval_candidates: BTreeMap<String, Vec<Document>>,
    doc_profiles: HashMap<String, DocProfile>,
    topic_vocab: Vec<Vec<String>>,
    trend_vocab: Vec<String>,
}

fn topic_token(topic: usize, word: usize) -> String {
    format!("t{topic:02}w{word:02}")
}

fn trend_token(i: usize) -> String {
    format!("trend{i:02}")
}

/// Parse the owning topic from a topic token ("t03w07" -> 3). Trend tokens
/// and free text return None.
fn token_topic(token: &str) -> Option<usize> {
    let rest = token.strip_prefix('t')?;
    let w = rest.find('w')?;
    let (topic, word) = rest.split_at(w);
    let word = &word[1..];
    if topic.is_empty() || word.is_empty() {
        return None;
    }
    if !topic.bytes().all(|b| b.is_ascii_digit()) || !word.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    topic.parse().ok()
}

/// Draw `count` distinct items from `pool` in pool order.
fn sample_distinct<'a, R: Rng>(rng: &mut R, pool: &'a [String], count: usize) -> Vec<&'a String> {
    let count = count.min(pool.len());
    rand::seq::index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| &pool[i])
        .collect()
}

fn family_for(index: usize) -> LanguageFamily {
    LanguageFamily::ALL[index % LanguageFamily::ALL.len()]
}

impl World {
    pub fn generate(config: &WorldConfig) -> Result<World> {
        config.validate()?;
        let label_set = config.label_set()?;

        let topic_vocab: Vec<Vec<String>> = (0..config.num_topics)
            .map(|t| (0..config.vocab_per_topic).map(|j| topic_token(t, j)).collect())
            .collect();
        let trend_vocab: Vec<String> = (0..config.trend_tokens).map(trend_token).collect();

        // Documents: round-robin primary topics so every topic (including
        // fresh blocks) is covered from the start; about 30% are echo docs
        // whose titles carry two trending tokens regardless of topic.
        let mut rng = substream(config.seed, &["world", "docs"]);
        let mut documents = Vec::with_capacity(config.num_docs);
        let mut doc_profiles = HashMap::with_capacity(config.num_docs);
        for i in 0..config.num_docs {
            let primary = i % config.num_topics;
            let secondary = if rng.random::<f64>() < 0.5 {
                let offset = rng.random_range(1..config.num_topics);
                Some((primary + offset) % config.num_topics)
            } else {
                None
            };
            let mut title_tokens: Vec<String> = sample_distinct(&mut rng, &topic_vocab[primary], 3)
                .into_iter()
                .cloned()
                .collect();
            let echo = rng.random::<f64>() < 0.3;
            if echo {
                title_tokens.extend(
                    sample_distinct(&mut rng, &trend_vocab, 2).into_iter().cloned(),
                );
            }
            let hashtags: Vec<String> = sample_distinct(&mut rng, &topic_vocab[primary], 2)
                .into_iter()
                .cloned()
                .collect();
            let mut summary_tokens: Vec<String> =
                sample_distinct(&mut rng, &topic_vocab[primary], 6)
                    .into_iter()
                    .cloned()
                    .collect();
            if let Some(s) = secondary {
                summary_tokens
                    .extend(sample_distinct(&mut rng, &topic_vocab[s], 2).into_iter().cloned());
            }
            let id = format!("doc-{i:04}");
            doc_profiles.insert(
                id.clone(),
                DocProfile {
                    primary_topic: primary,
                    secondary_topic: secondary,
                    title_tokens: title_tokens.iter().cloned().collect(),
                },
            );
            documents.push(Document {
                id,
                title: title_tokens.join(" "),
                hashtags,
                summary: summary_tokens.join(" "),
            });
        }

        let mut world = World {
            config: config.clone(),
            label_set,
            documents,
            truth: GroundTruth::default(),
            sft_queries: Vec::new(),
            sft_candidates: BTreeMap::new(),
            sft_dataset: Dataset::empty(label_set),
            eval_queries: Vec::new(),
            eval_candidates: BTreeMap::new(),
            doc_profiles,
            topic_vocab,
            trend_vocab,
        };

        // Iteration-0 queries over base topics, with truth-labeled
        // candidates forming the SFT dataset.
        let mut rng = substream(config.seed, &["stream", "0"]);
        let mut sft_records = Vec::new();
        for i in 0..config.queries_per_iteration {
            let query = world.base_query(&mut rng, format!("q0-{i:04}"), family_for(i), 0);
            let docs = world.retrieve_candidates(&query);
            let mut truth = GroundTruth::default();
            world.grade_candidates(&query, &docs, &mut truth);
            // Stride sampling spans the retrieval list from strong lexical
            // matches down to the appended negatives.
            let take = config.sft_candidates_per_query.min(docs.len()).max(1);
            let stride = docs.len().div_ceil(take);
            for doc in docs.iter().step_by(stride.max(1)) {
                let label = truth.label(&query.id, &doc.id)?;
                sft_records.push(LabeledPair {
                    pair: QueryDocumentPair::new(query.clone(), doc.clone(), vec![])?,
                    label,
                    rationale: format!("curated grade {label}"),
                    provenance: Provenance::Sft,
                });
            }
            world.truth.merge(&truth);
            world.sft_candidates.insert(query.id.clone(), docs);
            world.sft_queries.push(query);
        }
        world.sft_dataset = Dataset::from_records(label_set, sft_records)?;

        // Held-out evaluation suite: fixed at world build, covering every
        // topic; fresh-topic queries use the drifted query shape.
        let mut rng = substream(config.seed, &["world", "eval"]);
        for topic in 0..config.num_topics {
            for j in 0..config.eval_queries_per_topic {
                let id = format!("eq-{topic:02}-{j:02}");
                let family = family_for(topic * config.eval_queries_per_topic + j);
                let query = if topic < config.base_topics() {
                    world.topic_query(&mut rng, id, family, 0, topic)
                } else {
                    world.drifted_query(&mut rng, id, family, 0, topic)
                };
                let docs = world.retrieve_candidates(&query);
                let mut truth = GroundTruth::default();
                world.grade_candidates(&query, &docs, &mut truth);
                world.truth.merge(&truth);
                world.eval_candidates.insert(query.id.clone(), docs);
                world.eval_queries.push(query);
            }
        }
        Ok(world)
    }

    /// True label for any (query, document) the world can grade.
    pub fn truth_label(&self, query: &Query, doc_id: &str) -> Result<usize> {
        let profile = self
            .doc_profiles
            .get(doc_id)
            .ok_or_else(|| Error::input(format!("unknown document {doc_id}")))?;
        let tokens: BTreeSet<String> = tokenize(&query.text).into_iter().collect();
        let topic = self.query_topic(&tokens)?;
        Ok(grade_pair(topic, &tokens, profile))
    }

    fn query_topic(&self, tokens: &BTreeSet<String>) -> Result<usize> {
        tokens
            .iter()
            .find_map(|t| token_topic(t))
            .ok_or_else(|| Error::input("query has no topic token"))
    }

    fn grade_candidates(&self, query: &Query, docs: &[Document], truth: &mut GroundTruth) {
        let tokens: BTreeSet<String> = tokenize(&query.text).into_iter().collect();
        let topic = self.query_topic(&tokens).expect("generated queries carry a topic");
        for doc in docs {
            let profile = &self.doc_profiles[&doc.id];
            truth.insert(query.id.clone(), doc.id.clone(), grade_pair(topic, &tokens, profile));
        }
    }

    fn topic_query<R: Rng>(
        &self,
        rng: &mut R,
        id: String,
        family: LanguageFamily,
        arrival_iteration: usize,
        topic: usize,
    ) -> Query {
        let tokens = sample_distinct(rng, &self.topic_vocab[topic], 3);
        Query {
            id,
            text: tokens.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "),
            language_family: family,
            arrival_iteration,
        }
    }

    fn base_query<R: Rng>(
        &self,
        rng: &mut R,
        id: String,
        family: LanguageFamily,
        arrival_iteration: usize,
    ) -> Query {
        let topic = rng.random_range(0..self.config.base_topics());
        self.topic_query(rng, id, family, arrival_iteration, topic)
    }

    /// Drifted shape: two fresh-topic tokens plus two trending tokens.
    fn drifted_query<R: Rng>(
        &self,
        rng: &mut R,
        id: String,
        family: LanguageFamily,
        arrival_iteration: usize,
        topic: usize,
    ) -> Query {
        let mut tokens: Vec<String> = sample_distinct(rng, &self.topic_vocab[topic], 2)
            .into_iter()
            .cloned()
            .collect();
        tokens.extend(sample_distinct(rng, &self.trend_vocab, 2).into_iter().cloned());
        Query {
            id,
            text: tokens.join(" "),
            language_family: family,
            arrival_iteration,
        }
    }

    /// Top candidates by lexical-overlap count (ties broken by doc id), then
    /// seeded random negatives from the remaining corpus.
    fn retrieve_candidates(&self, query: &Query) -> Vec<Document> {
        let tokens: BTreeSet<String> = tokenize(&query.text).into_iter().collect();
        let mut scored: Vec<(usize, &Document)> = self
            .documents
            .iter()
            .map(|d| {
                let text = format!("{} {} {}", d.title, d.hashtags.join(" "), d.summary);
                let doc_tokens: BTreeSet<String> = tokenize(&text).into_iter().collect();
                (tokens.intersection(&doc_tokens).count(), d)
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
        let top: Vec<Document> = scored
            .iter()
            .take(self.config.candidates_per_query)
            .map(|(_, d)| (*d).clone())
            .collect();

        let taken: BTreeSet<&str> = top.iter().map(|d| d.id.as_str()).collect();
        let rest: Vec<&Document> = self
            .documents
            .iter()
            .filter(|d| !taken.contains(d.id.as_str()))
            .collect();
        let mut rng = substream(self.config.seed, &["candidates", &query.id]);
        let count = self.config.random_negatives.min(rest.len());
        let mut negatives: Vec<Document> =
            rand::seq::index::sample(&mut rng, rest.len(), count)
                .into_iter()
                .map(|i| rest[i].clone())
                .collect();
        negatives.sort_by(|a, b| a.id.cmp(&b.id));

        let mut out = top;
        out.extend(negatives);
        out
    }

    /// Queries and candidates for iteration k >= 1. Exactly
    /// round(drift_rate * queries_per_iteration) queries draw from the
    /// iteration's fresh topic block; the rest reuse base topics.
    pub fn stream_iteration(&self, iteration: usize) -> Result<IterationStream> {
        if iteration == 0 {
            return Err(Error::input(
                "iteration 0 is the curated epoch; streams start at 1",
            ));
        }
        let config = &self.config;
        let drifted = (config.drift_rate * config.queries_per_iteration as f64).round() as usize;
        if drifted > 0 && iteration > config.max_drift_iterations() {
            return Err(Error::input(format!(
                "iteration {iteration} exceeds the fresh-topic budget ({} iterations); raise num_topics",
                config.max_drift_iterations()
            )));
        }
        let block_start = config.base_topics()
            + (iteration - 1) * config.fresh_topics_per_iteration;

        let mut rng = substream(config.seed, &["stream", &iteration.to_string()]);
        let mut queries = Vec::with_capacity(config.queries_per_iteration);
        let mut candidates = BTreeMap::new();
        let mut truth = GroundTruth::default();
        for i in 0..config.queries_per_iteration {
            let id = format!("q{iteration}-{i:04}");
            let family = family_for(i);
            let query = if i < drifted {
                let topic = block_start + rng.random_range(0..config.fresh_topics_per_iteration);
                self.drifted_query(&mut rng, id, family, iteration, topic)
            } else {
                self.base_query(&mut rng, id, family, iteration)
            };
            let docs = self.retrieve_candidates(&query);
            self.grade_candidates(&query, &docs, &mut truth);
            candidates.insert(query.id.clone(), docs);
            queries.push(query);
        }
        Ok(IterationStream {
            iteration,
            queries,
            candidates,
            truth,
        })
    }
}

/// A query with its documents in display order (rank 1 first).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidates {
    pub query: Query,
    pub docs: Vec<Document>,
}

/// Position-biased interaction simulation over pre-ranked lists: each
/// impression is examined per its rank, clicked per its true label's
/// attraction, and clicked impressions dwell exponentially with the label's
/// mean. One record per impression, in display order.
pub fn simulate_interactions(
    ranked: &[RankedCandidates],
    truth: &GroundTruth,
    config: &WorldConfig,
    seed: u64,
) -> Result<Vec<InteractionRecord>> {
    config.validate()?;
    let examine = &config.position_examine_probs;
    let mut out = Vec::new();
    for list in ranked {
        let mut rng = substream(seed, &["interactions", &list.query.id]);
        for (idx, doc) in list.docs.iter().enumerate() {
            let rank = idx + 1;
            let label = truth.label(&list.query.id, &doc.id)?;
            if label >= config.attraction_per_label.len() {
                return Err(Error::state(format!(
                    "label {label} outside the configured attraction table"
                )));
            }
            let examine_p = examine[(rank - 1).min(examine.len() - 1)];
            let examined = rng.random::<f64>() < examine_p;
            let clicked = examined && rng.random::<f64>() < config.attraction_per_label[label];
            let dwell_seconds = if clicked {
                let mean = config.dwell_mean_per_label[label];
                if mean > 0.0 {
                    let u: f64 = rng.random();
                    -mean * (1.0 - u).ln()
                } else {
                    0.0
                }
            } else {
                0.0
            };
            let record = InteractionRecord {
                query_id: list.query.id.clone(),
                doc_id: doc.id.clone(),
                clicked,
                dwell_seconds,
                impression_rank: rank,
            };
            record.validate()?;
            out.push(record);
        }
    }
    Ok(out)
}

/// Rank buckets appended to the lexical features: ranks 1-4 and 5+.
pub const RANK_BUCKETS: usize = 5;

/// Logistic model of click given lexical features and a rank one-hot.
#[derive(Debug, Clone)]
pub struct ClickModel {
    weights: Vec<f64>,
    extractor: FeatureExtractor,
    fitted: bool,
}

impl ClickModel {
    pub fn unfitted(extractor: FeatureExtractor) -> Self {
        ClickModel {
            weights: vec![0.0; FEATURE_DIM + RANK_BUCKETS],
            extractor,
            fitted: false,
        }
    }

    /// Test constructor with explicit weights, marked fitted.
    pub fn from_weights(weights: Vec<f64>, extractor: FeatureExtractor) -> Result<Self> {
        if weights.len() != FEATURE_DIM + RANK_BUCKETS {
            return Err(Error::config(format!(
                "click model needs {} weights, got {}",
                FEATURE_DIM + RANK_BUCKETS,
                weights.len()
            )));
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::config("click weights must be finite"));
        }
        Ok(ClickModel {
            weights,
            extractor,
            fitted: true,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    fn input_vector(&self, pair: &QueryDocumentPair, rank: usize) -> Result<Vec<f64>> {
        if rank < 1 {
            return Err(Error::input("rank must be >= 1"));
        }
        let mut x = self.extractor.features(pair)?.values().to_vec();
        let mut one_hot = vec![0.0; RANK_BUCKETS];
        one_hot[(rank - 1).min(RANK_BUCKETS - 1)] = 1.0;
        x.extend(one_hot);
        Ok(x)
    }

    /// Click probability at an explicit rank.
    pub fn probability(&self, pair: &QueryDocumentPair, rank: usize) -> Result<f64> {
        if !self.fitted {
            return Err(Error::state("click model not fitted"));
        }
        let x = self.input_vector(pair, rank)?;
        let z: f64 = self.weights.iter().zip(&x).map(|(w, xi)| w * xi).sum();
        Ok(sigmoid(z))
    }
}

impl ClickPredictor for ClickModel {
    /// Debiased probability: the content signal evaluated at rank 1.
    fn click_probability(&self, pair: &QueryDocumentPair) -> Result<f64> {
        self.probability(pair, 1)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable -[y ln p + (1-y) ln(1-p)] at logit z: softplus(z) - y z.
fn logistic_example_loss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

/// Mean logistic loss over featurized click logs.
pub fn click_loss(weights: &[f64], examples: &[(Vec<f64>, f64)]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in examples {
        let z: f64 = weights.iter().zip(x).map(|(w, xi)| w * xi).sum();
        sum += logistic_example_loss(z, *y);
    }
    sum / examples.len() as f64
}

/// Gradient of the mean logistic loss: mean (sigmoid(z) - y) x.
pub fn click_grad(weights: &[f64], examples: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let mut grad = vec![0.0; weights.len()];
    for (x, y) in examples {
        let z: f64 = weights.iter().zip(x).map(|(w, xi)| w * xi).sum();
        let coeff = sigmoid(z) - y;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += coeff * xi;
        }
    }
    let n = examples.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    grad
}

/// Fit the click model on impression logs by full-batch gradient descent.
/// All-clicked or all-unclicked logs are a degenerate fit: warned, not an
/// error.
pub fn fit_click_model(
    logs: &[InteractionRecord],
    queries: &[Query],
    documents: &[Document],
    extractor: &FeatureExtractor,
    opts: &TrainOptions,
) -> Result<ClickModel> {
    if logs.is_empty() {
        return Err(Error::input("cannot fit a click model on empty logs"));
    }
    let by_query: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let by_doc: HashMap<&str, &Document> =
        documents.iter().map(|d| (d.id.as_str(), d)).collect();

    let mut model = ClickModel::unfitted(extractor.clone());
    let mut examples = Vec::with_capacity(logs.len());
    for log in logs {
        let query = by_query
            .get(log.query_id.as_str())
            .ok_or_else(|| Error::input(format!("log references unknown query {}", log.query_id)))?;
        let doc = by_doc
            .get(log.doc_id.as_str())
            .ok_or_else(|| Error::input(format!("log references unknown document {}", log.doc_id)))?;
        let pair = QueryDocumentPair::new((*query).clone(), (*doc).clone(), vec![])?;
        let x = model.input_vector(&pair, log.impression_rank)?;
        examples.push((x, if log.clicked { 1.0 } else { 0.0 }));
    }
    let positives = examples.iter().filter(|(_, y)| *y > 0.5).count();
    if positives == 0 || positives == examples.len() {
        log::warn!(
            "click logs are degenerate ({positives}/{} clicked); fit proceeds",
            examples.len()
        );
    }

    descend(
        &mut model.weights,
        opts,
        |w| click_loss(w, &examples),
        |w| click_grad(w, &examples),
    )?;
    model.fitted = true;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> WorldConfig {
        WorldConfig {
            num_topics: 8,
            vocab_per_topic: 8,
            num_docs: 60,
            queries_per_iteration: 30,
            trend_tokens: 6,
            candidates_per_query: 6,
            random_negatives: 3,
            eval_queries_per_topic: 2,
            seed,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        assert!(WorldConfig::default().validate().is_ok());
        for bad in [
            WorldConfig { num_topics: 1, ..WorldConfig::default() },
            WorldConfig { drift_rate: 1.5, ..WorldConfig::default() },
            WorldConfig { position_examine_probs: vec![0.5, 0.9], ..WorldConfig::default() },
            WorldConfig { position_examine_probs: vec![], ..WorldConfig::default() },
            WorldConfig { dwell_mean_per_label: vec![5.0, 1.0, 8.0, 15.0], ..WorldConfig::default() },
            WorldConfig { attraction_per_label: vec![0.1, 0.2], ..WorldConfig::default() },
            WorldConfig { num_docs: 10, ..WorldConfig::default() },
        ] {
            assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn grading_rule_rows() {
        let qtokens: BTreeSet<String> =
            ["t00w01", "t00w02", "t00w03"].iter().map(|s| s.to_string()).collect();
        let on_topic_shared_title = DocProfile {
            primary_topic: 0,
            secondary_topic: None,
            title_tokens: ["t00w02", "t00w05"].iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(grade_pair(0, &qtokens, &on_topic_shared_title), 3);

        let on_topic_other_title = DocProfile {
            primary_topic: 0,
            secondary_topic: None,
            title_tokens: ["t00w06", "t00w07"].iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(grade_pair(0, &qtokens, &on_topic_other_title), 2);

        let secondary_match = DocProfile {
            primary_topic: 1,
            secondary_topic: Some(0),
            title_tokens: ["t01w01"].iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(grade_pair(0, &qtokens, &secondary_match), 1);

        let unrelated = DocProfile {
            primary_topic: 1,
            secondary_topic: Some(2),
            title_tokens: ["t01w01"].iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(grade_pair(0, &qtokens, &unrelated), 0);
    }

    #[test]
    fn token_topic_parses_topic_tokens_only() {
        assert_eq!(token_topic("t03w07"), Some(3));
        assert_eq!(token_topic("t123w04"), Some(123));
        assert_eq!(token_topic("trend07"), None);
        assert_eq!(token_topic("w03t07"), None);
        assert_eq!(token_topic("alpha"), None);
    }

    #[test]
    fn world_generation_is_deterministic() {
        let a = World::generate(&small_config(11)).unwrap();
        let b = World::generate(&small_config(11)).unwrap();
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.sft_queries, b.sft_queries);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.sft_dataset.content_hash(), b.sft_dataset.content_hash());
        assert_eq!(a.eval_queries, b.eval_queries);

        let c = World::generate(&small_config(12)).unwrap();
        assert_ne!(a.sft_dataset.content_hash(), c.sft_dataset.content_hash());
    }

    #[test]
    fn sft_dataset_matches_truth_and_world_shape() {
        let world = World::generate(&small_config(5)).unwrap();
        assert_eq!(world.documents.len(), 60);
        assert!(!world.sft_dataset.is_empty());
        for rec in world.sft_dataset.records() {
            assert_eq!(rec.provenance, Provenance::Sft);
            let expected = world.truth.label(&rec.pair.query.id, &rec.pair.document.id).unwrap();
            assert_eq!(rec.label, expected);
            // Iteration-0 queries stay on base topics.
            let tokens: BTreeSet<String> = tokenize(&rec.pair.query.text).into_iter().collect();
            let topic = tokens.iter().find_map(|t| token_topic(t)).unwrap();
            assert!(topic < world.config.base_topics());
        }
        // Eval suite covers every topic with the configured count.
        assert_eq!(
            world.eval_queries.len(),
            world.config.num_topics * world.config.eval_queries_per_topic
        );
    }

    #[test]
    fn stream_zero_is_an_error_and_drift_counts_are_exact() {
        let world = World::generate(&small_config(5)).unwrap();
        assert_eq!(world.stream_iteration(0).unwrap_err().exit_code(), 2);

        let stream = world.stream_iteration(1).unwrap();
        assert_eq!(stream.queries.len(), 30);
        // drift 0.3 of 30 queries = 9 exactly.
        let drifted: Vec<&Query> = stream
            .queries
            .iter()
            .filter(|q| {
                let tokens: BTreeSet<String> = tokenize(&q.text).into_iter().collect();
                let topic = tokens.iter().find_map(|t| token_topic(t)).unwrap();
                topic >= world.config.base_topics()
            })
            .collect();
        assert_eq!(drifted.len(), 9);
        // Fresh block for iteration 1 is topics [4, 6).
        for q in &drifted {
            let tokens: BTreeSet<String> = tokenize(&q.text).into_iter().collect();
            let topic = tokens.iter().find_map(|t| token_topic(t)).unwrap();
            assert!(topic == 4 || topic == 5);
            assert!(tokens.iter().any(|t| t.starts_with("trend")));
        }

        // Iteration 2 uses the next block; its drifted topics are disjoint.
        let stream2 = world.stream_iteration(2).unwrap();
        for q in stream2.queries.iter().take(9) {
            let tokens: BTreeSet<String> = tokenize(&q.text).into_iter().collect();
            let topic = tokens.iter().find_map(|t| token_topic(t)).unwrap();
            assert!(topic == 6 || topic == 7);
        }
    }

    #[test]
    fn drift_extremes() {
        let mut config = small_config(5);
        config.drift_rate = 0.0;
        let world = World::generate(&config).unwrap();
        let stream = world.stream_iteration(1).unwrap();
        for q in &stream.queries {
            let tokens: BTreeSet<String> = tokenize(&q.text).into_iter().collect();
            let topic = tokens.iter().find_map(|t| token_topic(t)).unwrap();
            assert!(topic < config.base_topics());
        }
        // With no drifted queries, deep iterations never exhaust topics.
        assert!(world.stream_iteration(50).is_ok());

        config.drift_rate = 1.0;
        let world = World::generate(&config).unwrap();
        let stream = world.stream_iteration(1).unwrap();
        for q in &stream.queries {
            let tokens: BTreeSet<String> = tokenize(&q.text).into_iter().collect();
            let topic = tokens.iter().find_map(|t| token_topic(t)).unwrap();
            assert!(topic >= config.base_topics());
        }
        // Two fresh topics per iteration over 4 fresh topics: iteration 3
        // exceeds the budget.
        assert!(world.stream_iteration(3).is_err());
    }

    #[test]
    fn candidates_include_top_overlap_and_negatives() {
        let world = World::generate(&small_config(5)).unwrap();
        let stream = world.stream_iteration(1).unwrap();
        for q in &stream.queries {
            let docs = &stream.candidates[&q.id];
            assert!(docs.len() <= world.config.candidates_per_query + world.config.random_negatives);
            let ids: BTreeSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            assert_eq!(ids.len(), docs.len(), "no duplicate candidates");
            for d in docs {
                stream.truth.label(&q.id, &d.id).unwrap();
            }
        }
    }

    #[test]
    fn interactions_respect_position_and_label_bias() {
        let world = World::generate(&small_config(7)).unwrap();
        // Rank every query's candidates by true label so label 3 sits at
        // rank 1, giving a clean read on the configured probabilities.
        let stream = world.stream_iteration(1).unwrap();
        let ranked: Vec<RankedCandidates> = stream
            .queries
            .iter()
            .map(|q| {
                let mut docs = stream.candidates[&q.id].clone();
                docs.sort_by(|a, b| {
                    let la = stream.truth.label(&q.id, &a.id).unwrap();
                    let lb = stream.truth.label(&q.id, &b.id).unwrap();
                    lb.cmp(&la).then(a.id.cmp(&b.id))
                });
                RankedCandidates { query: q.clone(), docs }
            })
            .collect();
        let logs = simulate_interactions(&ranked, &stream.truth, &world.config, 99).unwrap();
        let replay = simulate_interactions(&ranked, &stream.truth, &world.config, 99).unwrap();
        assert_eq!(logs, replay);

        let total: usize = ranked.iter().map(|r| r.docs.len()).sum();
        assert_eq!(logs.len(), total);
        for log in &logs {
            log.validate().unwrap();
            if !log.clicked {
                assert_eq!(log.dwell_seconds, 0.0);
            }
        }

        // Empirical click rate by true label at rank 1 is monotone.
        let mut clicks = vec![(0usize, 0usize); 4];
        for log in logs.iter().filter(|l| l.impression_rank == 1) {
            let label = stream.truth.label(&log.query_id, &log.doc_id).unwrap();
            clicks[label].0 += usize::from(log.clicked);
            clicks[label].1 += 1;
        }
        let rate = |(c, n): (usize, usize)| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        if clicks[3].1 >= 10 && clicks[0].1 >= 10 {
            assert!(rate(clicks[3]) > rate(clicks[0]));
        }
    }

    #[test]
    fn rank_one_label_three_click_rate_matches_configuration() {
        // 2000 single-doc lists with a label-3 doc at rank 1: examine 1.0
        // times attraction 0.8 = 0.8 click rate.
        let config = WorldConfig::default();
        let mut truth = GroundTruth::default();
        let mut ranked = Vec::new();
        for i in 0..2000 {
            let qid = format!("q-{i}");
            truth.insert(qid.clone(), "d-0".into(), 3);
            ranked.push(RankedCandidates {
                query: Query {
                    id: qid,
                    text: "t00w01".into(),
                    language_family: LanguageFamily::Germanic,
                    arrival_iteration: 1,
                },
                docs: vec![Document {
                    id: "d-0".into(),
                    title: "t00w01".into(),
                    hashtags: vec![],
                    summary: "t00w01 body".into(),
                }],
            });
        }
        let logs = simulate_interactions(&ranked, &truth, &config, 3).unwrap();
        let clicked = logs.iter().filter(|l| l.clicked).count() as f64 / logs.len() as f64;
        assert!((clicked - 0.8).abs() < 0.03, "rate {clicked}");
        // Clicked dwells are strictly positive with mean near 15.
        let dwells: Vec<f64> = logs.iter().filter(|l| l.clicked).map(|l| l.dwell_seconds).collect();
        let mean = dwells.iter().sum::<f64>() / dwells.len() as f64;
        assert!(dwells.iter().all(|d| *d > 0.0));
        assert!((mean - 15.0).abs() < 1.5, "mean dwell {mean}");
    }

    fn click_fixture() -> (Vec<Query>, Vec<Document>, FeatureExtractor) {
        let queries = vec![Query {
            id: "q0".into(),
            text: "alpha beta".into(),
            language_family: LanguageFamily::Germanic,
            arrival_iteration: 1,
        }];
        let docs = vec![
            Document {
                id: "d0".into(),
                title: "alpha beta".into(),
                hashtags: vec!["alpha".into()],
                summary: "alpha beta gamma".into(),
            },
            Document {
                id: "d1".into(),
                title: "delta".into(),
                hashtags: vec![],
                summary: "delta epsilon".into(),
            },
        ];
        let extractor = FeatureExtractor::fit(&docs);
        (queries, docs, extractor)
    }

    #[test]
    fn click_model_state_and_reference_probabilities() {
        let (queries, docs, extractor) = click_fixture();
        let pair = QueryDocumentPair::new(queries[0].clone(), docs[0].clone(), vec![]).unwrap();

        let unfitted = ClickModel::unfitted(extractor.clone());
        assert!(matches!(
            unfitted.click_probability(&pair).unwrap_err(),
            Error::State(_)
        ));

        // Zero weights: sigmoid(0) = 0.5 at any rank.
        let zero = ClickModel::from_weights(vec![0.0; FEATURE_DIM + RANK_BUCKETS], extractor.clone())
            .unwrap();
        assert!((zero.click_probability(&pair).unwrap() - 0.5).abs() < 1e-12);
        assert!((zero.probability(&pair, 9).unwrap() - 0.5).abs() < 1e-12);

        // A bias-only logit of 4: sigma(4) ~= 0.982.
        let mut w = vec![0.0; FEATURE_DIM + RANK_BUCKETS];
        w[FEATURE_DIM - 1] = 4.0;
        let positive = ClickModel::from_weights(w.clone(), extractor.clone()).unwrap();
        assert!((positive.click_probability(&pair).unwrap() - 0.9820137900).abs() < 1e-6);
        w[FEATURE_DIM - 1] = -4.0;
        let negative = ClickModel::from_weights(w, extractor).unwrap();
        assert!((negative.click_probability(&pair).unwrap() - 0.0179862100).abs() < 1e-6);
    }

    #[test]
    fn click_fit_learns_separable_signal_and_zero_epochs_is_identity() {
        let (queries, docs, extractor) = click_fixture();
        // d0 always clicked, d1 never: the fit must separate them.
        let mut logs = Vec::new();
        for i in 0..40 {
            logs.push(InteractionRecord {
                query_id: "q0".into(),
                doc_id: if i % 2 == 0 { "d0".into() } else { "d1".into() },
                clicked: i % 2 == 0,
                dwell_seconds: if i % 2 == 0 { 3.0 } else { 0.0 },
                impression_rank: 1 + (i % 3),
            });
        }
        let opts = TrainOptions { epochs: 300, learning_rate: 2.0, seed: 0 };
        let model = fit_click_model(&logs, &queries, &docs, &extractor, &opts).unwrap();
        let p0 = model
            .click_probability(
                &QueryDocumentPair::new(queries[0].clone(), docs[0].clone(), vec![]).unwrap(),
            )
            .unwrap();
        let p1 = model
            .click_probability(
                &QueryDocumentPair::new(queries[0].clone(), docs[1].clone(), vec![]).unwrap(),
            )
            .unwrap();
        assert!(p0 > 0.8, "clicked doc probability {p0}");
        assert!(p1 < 0.2, "unclicked doc probability {p1}");
        assert!(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0);

        let frozen = fit_click_model(
            &logs,
            &queries,
            &docs,
            &extractor,
            &TrainOptions { epochs: 0, learning_rate: 1.0, seed: 0 },
        )
        .unwrap();
        assert!(frozen.weights().iter().all(|w| *w == 0.0));
        assert!(frozen.is_fitted());

        assert!(fit_click_model(&[], &queries, &docs, &extractor, &opts).is_err());
    }

    #[test]
    fn click_fit_with_null_signal_keeps_feature_weights_small() {
        let (queries, docs, extractor) = click_fixture();
        // Clicks alternate independently of the doc: weights stay near 0.
        let mut logs = Vec::new();
        for i in 0..5000 {
            let flip = (i / 2) % 2 == 0;
            logs.push(InteractionRecord {
                query_id: "q0".into(),
                doc_id: if i % 2 == 0 { "d0".into() } else { "d1".into() },
                clicked: flip,
                dwell_seconds: if flip { 1.0 } else { 0.0 },
                impression_rank: 1,
            });
        }
        let opts = TrainOptions { epochs: 100, learning_rate: 0.5, seed: 0 };
        let model = fit_click_model(&logs, &queries, &docs, &extractor, &opts).unwrap();
        for (i, w) in model.weights().iter().enumerate() {
            assert!(w.abs() < 0.1, "weight {i} drifted to {w}");
        }
    }

    #[test]
    fn degenerate_logs_warn_but_fit() {
        let (queries, docs, extractor) = click_fixture();
        let logs = vec![InteractionRecord {
            query_id: "q0".into(),
            doc_id: "d0".into(),
            clicked: false,
            dwell_seconds: 0.0,
            impression_rank: 1,
        }];
        let model = fit_click_model(
            &logs,
            &queries,
            &docs,
            &extractor,
            &TrainOptions { epochs: 20, learning_rate: 0.5, seed: 0 },
        )
        .unwrap();
        assert!(model.is_fitted());
    }
}
