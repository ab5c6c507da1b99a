//! The pluggable model contract and the deterministic reference
//! implementation: multinomial logistic regression over the lexical features,
//! trained full-batch, checkpointed as canonical JSON.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureExtractor, FEATURE_DIM, FEATURE_NAMES};
use super::objectives;
use crate::domain::{
    Dataset, Document, Judgment, JudgmentSource, LabelDistribution, LabelSet, Query,
    QueryDocumentPair,
};
use crate::error::{Error, Result};
use crate::hashing::canonical_json;
use crate::optim::{descend, TrainOptions};
use crate::seeding::substream;

/// Smallest probability any emitted distribution assigns to a label. Keeps
/// entropy and KL terms finite for arbitrarily confident models.
pub const PROBABILITY_FLOOR: f64 = 1e-9;

/// Sampling temperatures are clamped up to this value; at the floor the
/// tempered distribution collapses onto the argmax.
pub const TEMPERATURE_FLOOR: f64 = 1e-6;

/// Behavioral contract every relevance model satisfies: a full distribution
/// over the grade scale per pair, plus temperature-controlled sampling of
/// discrete judgments from it.
pub trait RelevanceModel: Send + Sync {
    fn label_set(&self) -> LabelSet;

    fn version(&self) -> &str;

    fn label_distribution(&self, pair: &QueryDocumentPair) -> Result<LabelDistribution>;

    /// Exactly `k` independent draws from the temperature-scaled distribution
    /// (logits divided by temperature, re-softmaxed). Deterministic in seed.
    fn sample_judgments(
        &self,
        pair: &QueryDocumentPair,
        k: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<Judgment>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModelParams {
    pub label_cardinality: usize,
    pub feature_dim: usize,
    /// Row-major: weights[row * feature_dim + col], one row per label.
    pub weights: Vec<f64>,
    pub temperature: f64,
}

impl ReferenceModelParams {
    pub fn zeros(label_cardinality: usize, feature_dim: usize, temperature: f64) -> Result<Self> {
        let params = ReferenceModelParams {
            label_cardinality,
            feature_dim,
            weights: vec![0.0; label_cardinality * feature_dim],
            temperature,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_cardinality < 2 {
            return Err(Error::config("model needs label cardinality >= 2"));
        }
        if self.feature_dim == 0 || self.feature_dim > FEATURE_DIM {
            return Err(Error::config(format!(
                "feature_dim must be in 1..={FEATURE_DIM}, got {}",
                self.feature_dim
            )));
        }
        if self.weights.len() != self.label_cardinality * self.feature_dim {
            return Err(Error::config(format!(
                "weight matrix is {} values, expected {}x{}",
                self.weights.len(),
                self.label_cardinality,
                self.feature_dim
            )));
        }
        if !self.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::config("weights must be finite"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Checkpoint schema for model.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    label_cardinality: usize,
    feature_dim: usize,
    weights: Vec<f64>,
    temperature: f64,
    version: String,
}

#[derive(Debug, Clone)]
pub struct ReferenceRelevanceModel {
    params: ReferenceModelParams,
    extractor: FeatureExtractor,
    label_set: LabelSet,
    version: String,
}

impl ReferenceRelevanceModel {
    pub fn new(label_set: LabelSet, extractor: FeatureExtractor) -> Self {
        Self::with_feature_dim(label_set, extractor, FEATURE_DIM)
            .expect("full feature width is always valid")
    }

    /// A model reading only the first `feature_dim` features; used for
    /// distilled students. The prefix must fit inside the extractor's width.
    pub fn with_feature_dim(
        label_set: LabelSet,
        extractor: FeatureExtractor,
        feature_dim: usize,
    ) -> Result<Self> {
        if feature_dim > extractor.feature_dim() {
            return Err(Error::config(format!(
                "feature_dim {feature_dim} exceeds extractor width {}",
                extractor.feature_dim()
            )));
        }
        Ok(ReferenceRelevanceModel {
            params: ReferenceModelParams::zeros(label_set.cardinality(), feature_dim, 1.0)?,
            extractor,
            label_set,
            version: "init".to_string(),
        })
    }

    pub fn params(&self) -> &ReferenceModelParams {
        &self.params
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn set_version(&mut self, version: impl Into<String>) {
        self.version = version.into();
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        let mut params = self.params.clone();
        params.temperature = temperature;
        params.validate()?;
        self.params = params;
        Ok(())
    }

    /// Test- and tooling-oriented constructor from explicit parameters.
    pub fn from_params(
        params: ReferenceModelParams,
        extractor: FeatureExtractor,
        version: impl Into<String>,
    ) -> Result<Self> {
        params.validate()?;
        if params.feature_dim > extractor.feature_dim() {
            return Err(Error::config("feature_dim exceeds extractor width"));
        }
        Ok(ReferenceRelevanceModel {
            label_set: LabelSet::new(params.label_cardinality)?,
            params,
            extractor,
            version: version.into(),
        })
    }

    fn feature_values(&self, pair: &QueryDocumentPair) -> Result<Vec<f64>> {
        let full = self.extractor.features(pair)?;
        Ok(full.values()[..self.params.feature_dim].to_vec())
    }

    fn raw_logits(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.params.feature_dim;
        (0..self.params.label_cardinality)
            .map(|row| {
                self.params.weights[row * dim..(row + 1) * dim]
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>()
            })
            .collect()
    }

    fn featurize_dataset(&self, data: &Dataset) -> Result<Vec<(Vec<f64>, usize)>> {
        if data.is_empty() {
            return Err(Error::input("cannot fit on an empty dataset"));
        }
        if data.label_set() != self.label_set {
            return Err(Error::config(format!(
                "dataset cardinality {} does not match model cardinality {}",
                data.label_set().cardinality(),
                self.label_set.cardinality()
            )));
        }
        data.records()
            .iter()
            .map(|rec| Ok((self.feature_values(&rec.pair)?, rec.label)))
            .collect()
    }

    /// Minimize mean cross-entropy -ln Pr(y | q, d) with full-batch descent.
    /// Returns the per-epoch loss trace (non-increasing by construction).
    pub fn fit_generative(&mut self, data: &Dataset, opts: &TrainOptions) -> Result<Vec<f64>> {
        let examples = self.featurize_dataset(data)?;
        let mut params = self.params.clone();
        let trace = {
            let loss_params = params.clone();
            let grad_params = params.clone();
            descend(
                &mut params.weights,
                opts,
                |w| {
                    let mut p = loss_params.clone();
                    p.weights = w.to_vec();
                    objectives::generative_loss(&p, &examples)
                },
                |w| {
                    let mut p = grad_params.clone();
                    p.weights = w.to_vec();
                    objectives::generative_grad(&p, &examples)
                },
            )?
        };
        self.params = params;
        Ok(trace)
    }

    /// Minimize the pairwise preference loss -ln sigmoid(f(q,d_more) -
    /// f(q,d_less)) where f is the unnormalized expected grade.
    pub fn fit_pairwise(
        &mut self,
        triples: &[PreferenceTriple],
        opts: &TrainOptions,
    ) -> Result<Vec<f64>> {
        if triples.is_empty() {
            return Err(Error::input("cannot fit on an empty triple list"));
        }
        let mut pairs = Vec::with_capacity(triples.len());
        for t in triples {
            t.validate()?;
            let less = QueryDocumentPair::new(t.query.clone(), t.less_relevant.clone(), vec![])?;
            let more = QueryDocumentPair::new(t.query.clone(), t.more_relevant.clone(), vec![])?;
            pairs.push((self.feature_values(&less)?, self.feature_values(&more)?));
        }
        let mut params = self.params.clone();
        let trace = {
            let loss_params = params.clone();
            let grad_params = params.clone();
            descend(
                &mut params.weights,
                opts,
                |w| {
                    let mut p = loss_params.clone();
                    p.weights = w.to_vec();
                    objectives::pairwise_loss(&p, &pairs)
                },
                |w| {
                    let mut p = grad_params.clone();
                    p.weights = w.to_vec();
                    objectives::pairwise_grad(&p, &pairs)
                },
            )?
        };
        self.params = params;
        Ok(trace)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let checkpoint = Checkpoint {
            label_cardinality: self.params.label_cardinality,
            feature_dim: self.params.feature_dim,
            weights: self.params.weights.clone(),
            temperature: self.params.temperature,
            version: self.version.clone(),
        };
        let mut body = canonical_json(&checkpoint)?;
        body.push('\n');
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path, extractor: FeatureExtractor) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| {
            Error::corrupt(path.display().to_string(), format!("cannot read: {e}"))
        })?;
        let checkpoint: Checkpoint = serde_json::from_str(&body)
            .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))?;
        let params = ReferenceModelParams {
            label_cardinality: checkpoint.label_cardinality,
            feature_dim: checkpoint.feature_dim,
            weights: checkpoint.weights,
            temperature: checkpoint.temperature,
        };
        let model = Self::from_params(params, extractor, checkpoint.version)
            .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))?;
        Ok(model)
    }

    fn dominant_feature(&self, label: usize, x: &[f64]) -> (&'static str, f64) {
        let dim = self.params.feature_dim;
        let row = &self.params.weights[label * dim..(label + 1) * dim];
        let mut best = 0;
        let mut best_mag = f64::NEG_INFINITY;
        for (j, (w, xj)) in row.iter().zip(x).enumerate() {
            let mag = (w * xj).abs();
            if mag > best_mag {
                best_mag = mag;
                best = j;
            }
        }
        if best_mag == 0.0 {
            // Untrained row: fall back to the largest feature value.
            for (j, xj) in x.iter().enumerate() {
                if *xj > x[best] {
                    best = j;
                }
            }
        }
        (FEATURE_NAMES[best], x[best])
    }
}

impl RelevanceModel for ReferenceRelevanceModel {
    fn label_set(&self) -> LabelSet {
        self.label_set
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn label_distribution(&self, pair: &QueryDocumentPair) -> Result<LabelDistribution> {
        let x = self.feature_values(pair)?;
        let logits: Vec<f64> = self
            .raw_logits(&x)
            .into_iter()
            .map(|z| z / self.params.temperature)
            .collect();
        LabelDistribution::new(objectives::softmax_with_floor(&logits))
    }

    fn sample_judgments(
        &self,
        pair: &QueryDocumentPair,
        k: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<Judgment>> {
        if k == 0 {
            return Err(Error::input("sample_judgments needs k >= 1"));
        }
        let temperature = temperature.max(TEMPERATURE_FLOOR);
        let x = self.feature_values(pair)?;
        let logits: Vec<f64> = self
            .raw_logits(&x)
            .into_iter()
            .map(|z| z / temperature)
            .collect();
        let probs = objectives::softmax_with_floor(&logits);
        let mut rng = substream(seed, &["model-sample", &pair.query.id, &pair.document.id]);
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let label = sample_index(&probs, rng.random::<f64>());
            let (feature, value) = self.dominant_feature(label, &x);
            out.push(Judgment {
                label,
                rationale: format!("sampled grade {label}; dominant feature {feature}={value:.3}"),
                source: JudgmentSource::Model,
            });
        }
        Ok(out)
    }
}

/// Inverse-CDF draw from a probability vector given a uniform variate.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Preference triple for pairwise training: the same query with a less and a
/// more relevant document.
#[derive(Debug, Clone)]
pub struct PreferenceTriple {
    pub query: Query,
    pub less_relevant: Document,
    pub more_relevant: Document,
}

impl PreferenceTriple {
    pub fn validate(&self) -> Result<()> {
        if self.less_relevant.id == self.more_relevant.id {
            return Err(Error::input(format!(
                "preference triple for {} compares document {} with itself",
                self.query.id, self.less_relevant.id
            )));
        }
        Ok(())
    }
}

/// Train `student` to match `teacher` by minimizing mean KL(teacher ||
/// student) over the dataset's pairs. Returns the loss trace. The teacher's
/// floored distribution keeps the objective finite even when it is certain.
pub fn distill(
    teacher: &dyn RelevanceModel,
    student: &mut ReferenceRelevanceModel,
    data: &Dataset,
    opts: &TrainOptions,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::input("cannot distill on an empty dataset"));
    }
    if teacher.label_set() != student.label_set {
        return Err(Error::input(format!(
            "teacher cardinality {} != student cardinality {}",
            teacher.label_set().cardinality(),
            student.label_set.cardinality()
        )));
    }
    let mut examples = Vec::with_capacity(data.len());
    for rec in data.records() {
        let x = student.feature_values(&rec.pair)?;
        let t = teacher.label_distribution(&rec.pair)?;
        examples.push((x, t.probs().to_vec()));
    }
    let mut params = student.params.clone();
    let trace = {
        let loss_params = params.clone();
        let grad_params = params.clone();
        descend(
            &mut params.weights,
            opts,
            |w| {
                let mut p = loss_params.clone();
                p.weights = w.to_vec();
                objectives::distill_loss(&p, &examples)
            },
            |w| {
                let mut p = grad_params.clone();
                p.weights = w.to_vec();
                objectives::distill_grad(&p, &examples)
            },
        )?
    };
    student.params = params;
    Ok(trace)
}

/// A model that returns one fixed distribution for every pair. Useful for
/// calibrating agents and tests against exact expected scores.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    distribution: LabelDistribution,
    label_set: LabelSet,
    version: String,
}

impl ConstantModel {
    pub fn new(distribution: LabelDistribution) -> Self {
        let label_set =
            LabelSet::new(distribution.cardinality()).expect("distribution has >= 2 entries");
        ConstantModel {
            distribution,
            label_set,
            version: "constant".to_string(),
        }
    }
}

impl RelevanceModel for ConstantModel {
    fn label_set(&self) -> LabelSet {
        self.label_set
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn label_distribution(&self, _pair: &QueryDocumentPair) -> Result<LabelDistribution> {
        Ok(self.distribution.clone())
    }

    fn sample_judgments(
        &self,
        pair: &QueryDocumentPair,
        k: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<Judgment>> {
        if k == 0 {
            return Err(Error::input("sample_judgments needs k >= 1"));
        }
        let temperature = temperature.max(TEMPERATURE_FLOOR);
        // Re-temper via log-probabilities so temperature semantics match the
        // reference model's logits/temperature contract.
        let logits: Vec<f64> = self
            .distribution
            .probs()
            .iter()
            .map(|p| p.max(PROBABILITY_FLOOR).ln() / temperature)
            .collect();
        let probs = objectives::softmax_with_floor(&logits);
        let mut rng = substream(seed, &["model-sample", &pair.query.id, &pair.document.id]);
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let label = sample_index(&probs, rng.random::<f64>());
            out.push(Judgment {
                label,
                rationale: format!("sampled grade {label} from fixed distribution"),
                source: JudgmentSource::Model,
            });
        }
        Ok(out)
    }
}
