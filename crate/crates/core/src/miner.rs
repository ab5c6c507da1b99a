//! Multi-agent sample miner: four predicates flag informative pairs from the
//! stream (engaged-but-unconfident, click-model-backed, high disagreement,
//! high uncertainty), each agent keeps at most `n` per query, and the union
//! is deduplicated into canonical (query_id, doc_id) order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{
    Document, InteractionRecord, LabelDistribution, LabelSet, Query, QueryDocumentPair,
};
use crate::error::{Error, Result};
use crate::model::RelevanceModel;
use crate::parallel::ordered_map;
use crate::seeding::{derive_seed, substream};

/// Source of debiased click probabilities for pairs as if shown at rank 1.
/// Implemented by the simulator's position-aware click model; test doubles
/// return fixed values. An unfitted predictor returns a state error.
pub trait ClickPredictor: Send + Sync {
    fn click_probability(&self, pair: &QueryDocumentPair) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerConfig {
    /// Dwell-time threshold in seconds for the engagement disjunct.
    #[serde(default = "default_tau_u")]
    pub tau_u: f64,
    /// Model-confidence threshold on the normalized expected score in [0,1].
    #[serde(default = "default_tau_c")]
    pub tau_c: f64,
    /// Click-model probability threshold.
    #[serde(default = "default_tau_cm")]
    pub tau_cm: f64,
    /// Disagreement threshold in label units.
    #[serde(default = "default_tau_md")]
    pub tau_md: f64,
    /// Uncertainty threshold in nats.
    #[serde(default = "default_tau_mu")]
    pub tau_mu: f64,
    /// Per-agent per-query candidate cap.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Judgments sampled when measuring disagreement.
    #[serde(default = "default_k", alias = "K")]
    pub k: usize,
    /// Sampling temperature for disagreement judgments.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_tau_u() -> f64 {
    5.0
}
fn default_tau_c() -> f64 {
    0.4
}
fn default_tau_cm() -> f64 {
    0.1
}
fn default_tau_md() -> f64 {
    2.0
}
fn default_tau_mu() -> f64 {
    1.0
}
fn default_n() -> usize {
    4
}
fn default_k() -> usize {
    3
}
fn default_temperature() -> f64 {
    1.0
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            tau_u: default_tau_u(),
            tau_c: default_tau_c(),
            tau_cm: default_tau_cm(),
            tau_md: default_tau_md(),
            tau_mu: default_tau_mu(),
            n: default_n(),
            k: default_k(),
            temperature: default_temperature(),
            seed: 0,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self, label_set: &LabelSet) -> Result<()> {
        let max_label = label_set.max_label() as f64;
        let max_entropy = (label_set.cardinality() as f64).ln();
        if !(self.tau_u.is_finite() && self.tau_u >= 0.0) {
            return Err(Error::config(format!("tau_u must be >= 0, got {}", self.tau_u)));
        }
        for (name, v) in [("tau_c", self.tau_c), ("tau_cm", self.tau_cm)] {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if !(self.tau_md.is_finite() && (0.0..=max_label).contains(&self.tau_md)) {
            return Err(Error::config(format!(
                "tau_md must lie in [0, {max_label}], got {}",
                self.tau_md
            )));
        }
        if !(self.tau_mu.is_finite() && (0.0..=max_entropy).contains(&self.tau_mu)) {
            return Err(Error::config(format!(
                "tau_mu must lie in [0, ln(cardinality)={max_entropy:.4}], got {}",
                self.tau_mu
            )));
        }
        if self.n < 1 {
            return Err(Error::config("n must be >= 1"));
        }
        if self.k < 2 {
            return Err(Error::config(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// The four mining agents. Ordering is the canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    UserFeedback,
    ClickModelFeedback,
    Disagreement,
    Uncertainty,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::UserFeedback,
        AgentKind::ClickModelFeedback,
        AgentKind::Disagreement,
        AgentKind::Uncertainty,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::UserFeedback => "user_feedback",
            AgentKind::ClickModelFeedback => "click_model_feedback",
            AgentKind::Disagreement => "disagreement",
            AgentKind::Uncertainty => "uncertainty",
        }
    }
}

/// Per-pair signal values captured at mining time, serialized as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSignals {
    /// Normalized expected score in [0,1].
    pub score_f: f64,
    /// Debiased click-model probability.
    pub click_prob: f64,
    /// Max pairwise spread of sampled judgment labels.
    pub md: f64,
    /// Entropy of the label distribution in nats.
    pub mu: f64,
    /// Mean dwell seconds over the pair's impressions.
    pub engagement_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinedCandidate {
    pub pair: QueryDocumentPair,
    pub fired_agents: BTreeSet<AgentKind>,
    pub signals: AgentSignals,
    pub mined_iteration: usize,
}

impl MinedCandidate {
    pub fn validate(&self) -> Result<()> {
        if self.fired_agents.is_empty() {
            return Err(Error::input(format!(
                "mined candidate ({}, {}) has no firing agent",
                self.pair.query.id, self.pair.document.id
            )));
        }
        Ok(())
    }

    pub fn record(&self) -> MinedRecord {
        MinedRecord {
            query_id: self.pair.query.id.clone(),
            doc_id: self.pair.document.id.clone(),
            fired_agents: self.fired_agents.iter().copied().collect(),
            signals: self.signals.clone(),
            iteration: self.mined_iteration,
        }
    }
}

/// Wire form of a mined candidate, one JSON object per mined.jsonl line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinedRecord {
    pub query_id: String,
    pub doc_id: String,
    pub fired_agents: Vec<AgentKind>,
    pub signals: AgentSignals,
    pub iteration: usize,
}

/// Mean dwell seconds over all impressions of the pair; 0 with none.
pub fn engagement_metric(pair: &QueryDocumentPair) -> f64 {
    if pair.interactions.is_empty() {
        return 0.0;
    }
    let total: f64 = pair.interactions.iter().map(|r| r.dwell_seconds).sum();
    total / pair.interactions.len() as f64
}

/// True if any impression of the pair was clicked.
pub fn any_click(pair: &QueryDocumentPair) -> bool {
    pair.interactions.iter().any(|r| r.clicked)
}

/// Entropy of the label distribution in nats, with 0 ln 0 = 0.
pub fn model_uncertainty(dist: &LabelDistribution) -> f64 {
    -dist
        .probs()
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Max pairwise spread of K sampled judgment labels. Temperature near zero
/// collapses every sample onto the argmax, so the spread goes to 0.
pub fn model_disagreement(
    pair: &QueryDocumentPair,
    model: &dyn RelevanceModel,
    k: usize,
    temperature: f64,
    seed: u64,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::input(format!("disagreement needs k >= 2, got {k}")));
    }
    let judgments = model.sample_judgments(pair, k, temperature, seed)?;
    let min = judgments.iter().map(|j| j.label).min().expect("k >= 2");
    let max = judgments.iter().map(|j| j.label).max().expect("k >= 2");
    Ok((max - min) as f64)
}

/// Engagement-versus-confidence rule shared by the user-feedback agent and
/// (with a synthetic click) the click-model agent.
pub fn user_feedback_fires(
    clicked: bool,
    engagement_u: f64,
    score_f: f64,
    config: &MinerConfig,
) -> bool {
    (clicked || engagement_u > config.tau_u) && score_f < config.tau_c
}

/// Click-model rule: probability above tau_cm acts as a synthetic click, so
/// only the confidence conjunct of the user-feedback rule remains.
pub fn click_model_fires(click_prob: f64, score_f: f64, config: &MinerConfig) -> bool {
    click_prob > config.tau_cm && user_feedback_fires(true, 0.0, score_f, config)
}

/// Intrinsic rule: disagreement or uncertainty at threshold.
pub fn intrinsic_fires(md: f64, mu: f64, config: &MinerConfig) -> bool {
    md >= config.tau_md || mu >= config.tau_mu
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserFeedbackOutcome {
    pub fired: bool,
    pub score_f: f64,
    pub engagement_u: f64,
}

pub fn user_feedback_agent(
    pair: &QueryDocumentPair,
    model: &dyn RelevanceModel,
    config: &MinerConfig,
) -> Result<UserFeedbackOutcome> {
    let score_f = model.label_distribution(pair)?.expected_score();
    let engagement_u = engagement_metric(pair);
    Ok(UserFeedbackOutcome {
        fired: user_feedback_fires(any_click(pair), engagement_u, score_f, config),
        score_f,
        engagement_u,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickModelOutcome {
    pub fired: bool,
    pub score_f: f64,
    pub click_prob: f64,
}

pub fn click_model_feedback_agent(
    pair: &QueryDocumentPair,
    model: &dyn RelevanceModel,
    click_model: &dyn ClickPredictor,
    config: &MinerConfig,
) -> Result<ClickModelOutcome> {
    let click_prob = click_model.click_probability(pair)?;
    let score_f = model.label_distribution(pair)?.expected_score();
    Ok(ClickModelOutcome {
        fired: click_model_fires(click_prob, score_f, config),
        score_f,
        click_prob,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicOutcome {
    pub fired: bool,
    pub md: f64,
    pub mu: f64,
}

pub fn intrinsic_agent(
    pair: &QueryDocumentPair,
    model: &dyn RelevanceModel,
    config: &MinerConfig,
) -> Result<IntrinsicOutcome> {
    let md_seed = derive_seed(config.seed, &["miner", "md"]);
    let md = model_disagreement(pair, model, config.k, config.temperature, md_seed)?;
    let mu = model_uncertainty(&model.label_distribution(pair)?);
    Ok(IntrinsicOutcome {
        fired: intrinsic_fires(md, mu, config),
        md,
        mu,
    })
}

/// Apply all four agents to every (query, candidate) pair, cap each agent at
/// `n` selections per query by uniform seeded sampling, and merge into one
/// deduplicated list in (query_id, doc_id) order. A query with no candidate
/// documents is skipped with a warning, not an error.
pub fn mine(
    queries: &[Query],
    candidate_docs: &BTreeMap<String, Vec<Document>>,
    interactions: &[InteractionRecord],
    model: &dyn RelevanceModel,
    click_model: &dyn ClickPredictor,
    config: &MinerConfig,
    max_workers: usize,
) -> Result<Vec<MinedCandidate>> {
    config.validate(&model.label_set())?;

    let mut by_pair: HashMap<(&str, &str), Vec<InteractionRecord>> = HashMap::new();
    for rec in interactions {
        by_pair
            .entry((rec.query_id.as_str(), rec.doc_id.as_str()))
            .or_default()
            .push(rec.clone());
    }

    let per_query: Vec<Result<Vec<MinedCandidate>>> = ordered_map(queries, max_workers, |query| {
        let docs = match candidate_docs.get(&query.id) {
            Some(docs) if !docs.is_empty() => docs,
            _ => {
                log::warn!("query {} has no candidate documents; skipped", query.id);
                return Ok(Vec::new());
            }
        };
        mine_one_query(query, docs, &by_pair, model, click_model, config)
    });

    let mut merged: BTreeMap<(String, String), MinedCandidate> = BTreeMap::new();
    for result in per_query {
        for candidate in result? {
            let key = (
                candidate.pair.query.id.clone(),
                candidate.pair.document.id.clone(),
            );
            match merged.get_mut(&key) {
                Some(existing) => existing.fired_agents.extend(candidate.fired_agents),
                None => {
                    merged.insert(key, candidate);
                }
            }
        }
    }
    Ok(merged.into_values().collect())
}

fn mine_one_query(
    query: &Query,
    docs: &[Document],
    interactions_by_pair: &HashMap<(&str, &str), Vec<InteractionRecord>>,
    model: &dyn RelevanceModel,
    click_model: &dyn ClickPredictor,
    config: &MinerConfig,
) -> Result<Vec<MinedCandidate>> {
    struct Evaluated {
        pair: QueryDocumentPair,
        signals: AgentSignals,
        qualifies: BTreeSet<AgentKind>,
    }

    let mut evaluated = Vec::with_capacity(docs.len());
    for doc in docs {
        let pair_interactions = interactions_by_pair
            .get(&(query.id.as_str(), doc.id.as_str()))
            .cloned()
            .unwrap_or_default();
        let pair = QueryDocumentPair::new(query.clone(), doc.clone(), pair_interactions)?;

        let uf = user_feedback_agent(&pair, model, config)?;
        let cm = click_model_feedback_agent(&pair, model, click_model, config)?;
        let intrinsic = intrinsic_agent(&pair, model, config)?;

        let mut qualifies = BTreeSet::new();
        if uf.fired {
            qualifies.insert(AgentKind::UserFeedback);
        }
        if cm.fired {
            qualifies.insert(AgentKind::ClickModelFeedback);
        }
        if intrinsic.md >= config.tau_md {
            qualifies.insert(AgentKind::Disagreement);
        }
        if intrinsic.mu >= config.tau_mu {
            qualifies.insert(AgentKind::Uncertainty);
        }

        evaluated.push(Evaluated {
            pair,
            signals: AgentSignals {
                score_f: uf.score_f,
                click_prob: cm.click_prob,
                md: intrinsic.md,
                mu: intrinsic.mu,
                engagement_u: uf.engagement_u,
            },
            qualifies,
        });
    }

    // Per-agent cap: sample n of the qualifying docs from a per-(query,
    // agent) substream, so one agent's draws never shift another's.
    let mut selected_by: Vec<BTreeSet<AgentKind>> = vec![BTreeSet::new(); evaluated.len()];
    for agent in AgentKind::ALL {
        let qualifying: Vec<usize> = evaluated
            .iter()
            .enumerate()
            .filter(|(_, e)| e.qualifies.contains(&agent))
            .map(|(i, _)| i)
            .collect();
        let chosen: Vec<usize> = if qualifying.len() > config.n {
            let mut rng = substream(config.seed, &["miner", "sample", &query.id, agent.as_str()]);
            rand::seq::index::sample(&mut rng, qualifying.len(), config.n)
                .into_iter()
                .map(|i| qualifying[i])
                .collect()
        } else {
            qualifying
        };
        for idx in chosen {
            selected_by[idx].insert(agent);
        }
    }

    let mut out = Vec::new();
    for (e, fired) in evaluated.into_iter().zip(selected_by) {
        if fired.is_empty() {
            continue;
        }
        out.push(MinedCandidate {
            pair: e.pair,
            fired_agents: fired,
            signals: e.signals,
            mined_iteration: query.arrival_iteration,
        });
    }
    Ok(out)
}
