//! Orchestration of self-evolution rounds: stream queries, simulate
//! interactions, mine informative pairs, label them (consensus agents or
//! the model itself), merge with all earlier data, retrain from scratch,
//! evaluate held-out, and write a replayable manifest per iteration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotator::{
    annotate_batch, AnnotateOptions, AnnotationRecord, AnnotatorBackend, HttpBackend,
    MockOracleBackend, RejectionReason,
};
use crate::domain::{dataset_merge, Dataset, LabelSet, LabeledPair, Provenance};
use crate::error::{Error, Result};
use crate::eval::{evaluate, rank_documents, EvalReport, MetricBlock};
use crate::hashing::{canonical_json, sha256_hex};
use crate::jsonl::write_jsonl;
use crate::miner::{mine, MinedCandidate, MinerConfig};
use crate::model::{FeatureExtractor, ReferenceRelevanceModel, RelevanceModel};
use crate::optim::TrainOptions;
use crate::seeding::{derive_seed, substream};
use crate::simulator::{simulate_interactions, GroundTruth, RankedCandidates, World, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    #[serde(rename = "serm")]
    Serm,
    #[serde(rename = "self-training")]
    SelfTraining,
    #[serde(rename = "baseline")]
    BaselineOnly,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Serm => "serm",
            RunMode::SelfTraining => "self-training",
            RunMode::BaselineOnly => "baseline",
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<RunMode> {
        match s {
            "serm" => Ok(RunMode::Serm),
            "self-training" => Ok(RunMode::SelfTraining),
            "baseline" => Ok(RunMode::BaselineOnly),
            other => Err(Error::config(format!(
                "unknown mode {other:?}; expected serm, self-training, or baseline"
            ))),
        }
    }
}

impl Default for RunMode {
    fn default() -> Self {
        RunMode::Serm
    }
}

/// One labeling backend in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum BackendSpec {
    /// Seeded noisy oracle over the simulated ground truth.
    #[serde(rename = "mock")]
    Mock {
        backend_id: String,
        #[serde(default = "default_path_error_rate")]
        path_error_rate: f64,
    },
    /// Remote annotation service speaking the JSON wire contract.
    #[serde(rename = "http")]
    Http {
        backend_id: String,
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default = "default_timeout_seconds")]
        timeout_seconds: f64,
        #[serde(default = "default_max_retries")]
        max_retries: usize,
    },
}

fn default_path_error_rate() -> f64 {
    0.2
}
fn default_timeout_seconds() -> f64 {
    10.0
}
fn default_max_retries() -> usize {
    2
}

impl BackendSpec {
    pub fn backend_id(&self) -> &str {
        match self {
            BackendSpec::Mock { backend_id, .. } => backend_id,
            BackendSpec::Http { backend_id, .. } => backend_id,
        }
    }
}

/// Consensus-annotation settings: the backend roster plus the two agreement
/// knobs (paths per backend, cross-backend tolerance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorSettings {
    #[serde(default = "default_backends")]
    pub backends: Vec<BackendSpec>,
    #[serde(default = "default_num_paths")]
    pub num_paths: usize,
    #[serde(default)]
    pub consensus_tolerance: usize,
}

fn default_backends() -> Vec<BackendSpec> {
    vec![
        BackendSpec::Mock {
            backend_id: "oracle-a".to_string(),
            path_error_rate: default_path_error_rate(),
        },
        BackendSpec::Mock {
            backend_id: "oracle-b".to_string(),
            path_error_rate: default_path_error_rate(),
        },
    ]
}
fn default_num_paths() -> usize {
    3
}

impl Default for AnnotatorSettings {
    fn default() -> Self {
        AnnotatorSettings {
            backends: default_backends(),
            num_paths: default_num_paths(),
            consensus_tolerance: 0,
        }
    }
}

impl AnnotatorSettings {
    pub fn validate(&self) -> Result<()> {
        if self.num_paths < 1 {
            return Err(Error::config("annotator.num_paths must be >= 1"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.backends {
            if spec.backend_id().is_empty() {
                return Err(Error::config("annotator backend_id must be non-empty"));
            }
            if !seen.insert(spec.backend_id()) {
                return Err(Error::config(format!(
                    "duplicate annotator backend_id {:?}",
                    spec.backend_id()
                )));
            }
            if let BackendSpec::Mock { path_error_rate, .. } = spec {
                if !(path_error_rate.is_finite() && (0.0..0.5).contains(path_error_rate)) {
                    return Err(Error::config(format!(
                        "annotator.backends: path_error_rate must lie in [0, 0.5), got {path_error_rate}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full run configuration; the effective (flag-merged) form is embedded in
/// every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_max_workers")]
    pub max_workers: usize,
    #[serde(default)]
    pub force: bool,
    /// Probability that a self-training label is replaced by a random other
    /// label (error-propagation experiments).
    #[serde(default)]
    pub self_label_corruption: f64,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub miner: MinerConfig,
    #[serde(default)]
    pub annotator: AnnotatorSettings,
    #[serde(default)]
    pub training: TrainOptions,
    #[serde(default)]
    pub click_training: TrainOptions,
}

fn default_iterations() -> usize {
    3
}
fn default_output_dir() -> String {
    "run".to_string()
}
fn default_max_workers() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        let label_set = self.world.label_set()?;
        self.miner.validate(&label_set)?;
        self.annotator.validate()?;
        if self.mode == RunMode::Serm && self.annotator.backends.is_empty() {
            return Err(Error::config("serm mode needs at least one annotator backend"));
        }
        if self.max_workers < 1 {
            return Err(Error::config("max_workers must be >= 1"));
        }
        if !(self.self_label_corruption.is_finite()
            && (0.0..1.0).contains(&self.self_label_corruption))
        {
            return Err(Error::config(format!(
                "self_label_corruption must lie in [0, 1), got {}",
                self.self_label_corruption
            )));
        }
        if self.output_dir.is_empty() {
            return Err(Error::config("output_dir must be non-empty"));
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.mode.as_str(), self.seed)
    }
}

/// Seeds derived for one iteration, recorded for replay audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedLineage {
    pub root: u64,
    pub world: u64,
    pub training: u64,
    pub interactions: Option<u64>,
    pub click_training: Option<u64>,
    pub miner: Option<u64>,
    pub annotator: Option<u64>,
}

/// The replayable record of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationManifest {
    pub iteration: usize,
    pub mode: RunMode,
    pub sft_data_hash: String,
    pub prior_data_hashes: Vec<String>,
    pub new_data_hash: String,
    pub merged_data_hash: String,
    pub mined_count: usize,
    pub annotated_count: usize,
    pub rejected_count: usize,
    pub model_checkpoint_hash: String,
    pub metrics: Vec<MetricBlock>,
    pub skipped_eval_queries: usize,
    pub seed_lineage: SeedLineage,
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// End-of-run aggregate written to report.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub run_id: String,
    pub mode: RunMode,
    pub iterations: Vec<IterationManifest>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub report: RunReport,
}

struct RunPaths {
    root: PathBuf,
}

impl RunPaths {
    fn iter_dir(&self, k: usize) -> PathBuf {
        self.root.join(format!("iter{k}"))
    }
    fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
    fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }
}

fn write_canonical_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut body = canonical_json(value)?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

/// Copy of the run config embedded in manifests. The force flag records
/// operator consent to overwrite, not an experiment input, so it is
/// normalized and a forced re-run stays byte-identical with its original.
fn manifest_config(config: &RunConfig) -> RunConfig {
    RunConfig {
        force: false,
        ..config.clone()
    }
}

/// Pseudo-label mined pairs with the current model's argmax grade,
/// optionally corrupting each label to a random different one.
pub fn self_label(
    candidates: &[MinedCandidate],
    model: &dyn RelevanceModel,
    iteration: usize,
    corruption: f64,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    if iteration < 1 {
        return Err(Error::input("self labeling starts at iteration 1"));
    }
    if !(corruption.is_finite() && (0.0..1.0).contains(&corruption)) {
        return Err(Error::input(format!(
            "corruption must lie in [0, 1), got {corruption}"
        )));
    }
    let cardinality = model.label_set().cardinality();
    let mut out = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let pair = &candidate.pair;
        let dist = model.label_distribution(pair)?;
        let mut label = dist.argmax();
        if corruption > 0.0 {
            let mut rng = substream(
                seed,
                &["self-label", &pair.query.id, &pair.document.id],
            );
            if rng.random::<f64>() < corruption {
                label = (label + rng.random_range(1..cardinality)) % cardinality;
            }
        }
        out.push(LabeledPair {
            pair: pair.clone(),
            label,
            rationale: format!("self label {label} from model {}", model.version()),
            provenance: Provenance::SelfTraining { iteration },
        });
    }
    Ok(out)
}

fn build_backends(
    settings: &AnnotatorSettings,
    truth: &GroundTruth,
    label_set: LabelSet,
    root_seed: u64,
) -> Result<Vec<Box<dyn AnnotatorBackend>>> {
    let mut out: Vec<Box<dyn AnnotatorBackend>> = Vec::with_capacity(settings.backends.len());
    for spec in &settings.backends {
        match spec {
            BackendSpec::Mock {
                backend_id,
                path_error_rate,
            } => {
                let seed = derive_seed(root_seed, &["backend", backend_id]);
                out.push(Box::new(MockOracleBackend::new(
                    backend_id.clone(),
                    truth.as_map(),
                    *path_error_rate,
                    label_set,
                    seed,
                )?));
            }
            BackendSpec::Http {
                backend_id,
                endpoint,
                timeout_seconds,
                max_retries,
            } => {
                let endpoint = endpoint.as_deref().ok_or_else(|| {
                    Error::config(format!(
                        "http backend {backend_id:?} has no endpoint; set it in the config, \
                         --annotator-endpoint, or ANNOTATOR_ENDPOINT"
                    ))
                })?;
                out.push(Box::new(HttpBackend::new(
                    backend_id.clone(),
                    endpoint,
                    label_set,
                    *timeout_seconds,
                    *max_retries,
                )?));
            }
        }
    }
    Ok(out)
}

struct RunState {
    world: World,
    extractor: FeatureExtractor,
    label_set: LabelSet,
    model: ReferenceRelevanceModel,
    /// Index 0 is the curated set; index k the data generated at iteration k.
    datasets: Vec<Dataset>,
    manifests: Vec<IterationManifest>,
    timings: BTreeMap<String, f64>,
}

fn checkpoint_and_hash(model: &ReferenceRelevanceModel, dir: &Path) -> Result<String> {
    let path = dir.join("model.json");
    model.save_checkpoint(&path)?;
    Ok(sha256_hex(&fs::read(&path)?))
}

fn metric_rows(report: &EvalReport) -> Vec<MetricBlock> {
    report.blocks.clone()
}

/// Run one self-evolution iteration (k >= 1) and append its manifest.
fn run_iteration(
    state: &mut RunState,
    k: usize,
    config: &RunConfig,
    paths: &RunPaths,
) -> Result<()> {
    let started = Instant::now();
    let dir = paths.iter_dir(k);
    fs::create_dir_all(&dir)?;
    let tag = k.to_string();
    let seed_interactions = derive_seed(config.seed, &["iter", &tag, "interactions"]);
    let seed_click = derive_seed(config.seed, &["iter", &tag, "click"]);
    let seed_miner = derive_seed(config.seed, &["iter", &tag, "mine"]);
    let seed_annotator = derive_seed(config.seed, &["iter", &tag, "annotate"]);
    let seed_training = derive_seed(config.seed, &["iter", &tag, "train"]);
    let mut warnings = Vec::new();

    // 1-2: stream the iteration's queries and simulate interactions over
    // the current model's ranking (the feedback loop under test).
    let stream = state.world.stream_iteration(k)?;
    let mut ranked = Vec::with_capacity(stream.queries.len());
    for query in &stream.queries {
        let docs = rank_documents(&state.model, query, &stream.candidates[&query.id])?;
        ranked.push(RankedCandidates {
            query: query.clone(),
            docs,
        });
    }
    let interactions =
        simulate_interactions(&ranked, &stream.truth, &state.world.config, seed_interactions)?;

    // 3: debias clicks with a model fitted on this iteration's logs.
    let click_opts = TrainOptions {
        seed: seed_click,
        ..config.click_training.clone()
    };
    let click_model = crate::simulator::fit_click_model(
        &interactions,
        &stream.queries,
        &state.world.documents,
        &state.extractor,
        &click_opts,
    )?;

    // 4: mine informative pairs.
    let miner_config = MinerConfig {
        seed: seed_miner,
        ..config.miner.clone()
    };
    let mined = mine(
        &stream.queries,
        &stream.candidates,
        &interactions,
        &state.model,
        &click_model,
        &miner_config,
        config.max_workers,
    )?;
    let mined_records: Vec<_> = mined.iter().map(|m| m.record()).collect();
    write_jsonl(&dir.join("mined.jsonl"), &mined_records)?;

    // 5: label via consensus agents (serm) or the model itself.
    let (labeled, annotation_records, rejections) = match config.mode {
        RunMode::Serm => {
            let backends =
                build_backends(&config.annotator, &stream.truth, state.label_set, config.seed)?;
            let opts = AnnotateOptions {
                num_paths: config.annotator.num_paths,
                consensus_tolerance: config.annotator.consensus_tolerance,
                seed: seed_annotator,
                max_workers: config.max_workers,
            };
            let batch = annotate_batch(&mined, &backends, &opts)?;
            let records: Vec<AnnotationRecord> =
                batch.annotations.iter().map(|a| a.record()).collect();
            let mut labeled = Vec::with_capacity(batch.annotations.len());
            for a in &batch.annotations {
                let mut item = a.to_labeled()?;
                // Interactions served their purpose at mining time; the
                // training datasets stay lean without them.
                item.pair.interactions.clear();
                labeled.push(item);
            }
            (labeled, records, batch.rejections)
        }
        RunMode::SelfTraining => {
            let mut labeled = self_label(
                &mined,
                &state.model,
                k,
                config.self_label_corruption,
                seed_annotator,
            )?;
            for item in &mut labeled {
                item.pair.interactions.clear();
            }
            let records: Vec<AnnotationRecord> = labeled
                .iter()
                .map(|l| AnnotationRecord {
                    query_id: l.pair.query.id.clone(),
                    doc_id: l.pair.document.id.clone(),
                    label: l.label,
                    rationale: l.rationale.clone(),
                    backend_ids: vec!["self".to_string()],
                    iteration: k,
                })
                .collect();
            (labeled, records, Vec::new())
        }
        RunMode::BaselineOnly => {
            return Err(Error::state("baseline mode runs no iterations"));
        }
    };
    write_jsonl(&dir.join("annotations.jsonl"), &annotation_records)?;
    write_jsonl(&dir.join("rejections.jsonl"), &rejections)?;

    // A wholly failed backend roster is an infrastructure failure, not an
    // empty yield: abort with the partial artifacts preserved.
    if labeled.is_empty()
        && !rejections.is_empty()
        && rejections
            .iter()
            .all(|r| r.reason == RejectionReason::BackendFailure)
    {
        let backend_id = config
            .annotator
            .backends
            .first()
            .map(|b| b.backend_id().to_string())
            .unwrap_or_else(|| "annotator".to_string());
        return Err(Error::backend(
            backend_id,
            format!("every annotation failed at iteration {k}"),
        ));
    }

    let labeled_records: Vec<_> = labeled.iter().map(|l| l.record()).collect();
    write_jsonl(&dir.join("labeled.jsonl"), &labeled_records)?;

    // 6-7: merge everything seen so far and retrain from the zero
    // initialization; an empty yield leaves the model untouched.
    let new_dataset = Dataset::from_records(state.label_set, labeled)?;
    if mined.is_empty() {
        warnings.push(format!("iteration {k}: no candidates mined; model unchanged"));
    } else if new_dataset.is_empty() {
        warnings.push(format!(
            "iteration {k}: zero annotation yield; model unchanged"
        ));
    }
    let mut parts = state.datasets.clone();
    parts.push(new_dataset.clone());
    let merged = dataset_merge(&parts)?;
    if !new_dataset.is_empty() {
        let mut fresh = ReferenceRelevanceModel::new(state.label_set, state.extractor.clone());
        fresh.set_version(format!("iter{k}"));
        let train_opts = TrainOptions {
            seed: seed_training,
            ..config.training.clone()
        };
        fresh.fit_generative(&merged, &train_opts)?;
        state.model = fresh;
    }

    // 8: held-out evaluation and the manifest.
    let report = evaluate(
        &state.model,
        &state.world.eval_queries,
        &state.world.eval_candidates,
        &state.world.truth,
    )?;
    write_jsonl(&dir.join("metrics.jsonl"), &report.blocks)?;
    let checkpoint_hash = checkpoint_and_hash(&state.model, &dir)?;

    let manifest = IterationManifest {
        iteration: k,
        mode: config.mode,
        sft_data_hash: state.datasets[0].content_hash().to_string(),
        prior_data_hashes: state.datasets[1..]
            .iter()
            .map(|d| d.content_hash().to_string())
            .collect(),
        new_data_hash: new_dataset.content_hash().to_string(),
        merged_data_hash: merged.content_hash().to_string(),
        mined_count: mined.len(),
        annotated_count: annotation_records.len(),
        rejected_count: rejections.len(),
        model_checkpoint_hash: checkpoint_hash,
        metrics: metric_rows(&report),
        skipped_eval_queries: report.skipped_queries,
        seed_lineage: SeedLineage {
            root: config.seed,
            world: state.world.config.seed,
            training: seed_training,
            interactions: Some(seed_interactions),
            click_training: Some(seed_click),
            miner: Some(seed_miner),
            annotator: Some(seed_annotator),
        },
        config: manifest_config(config),
        warnings,
    };
    write_canonical_json(&dir.join("manifest.json"), &manifest)?;
    state.datasets.push(new_dataset);
    state.manifests.push(manifest);
    state
        .timings
        .insert(format!("iter{k}"), started.elapsed().as_secs_f64());
    Ok(())
}

/// Execute a full run: world build, iteration-0 baseline, `iterations`
/// self-evolution rounds, report. A pure function of the config onto the
/// artifact directory (timings.json aside).
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mut config = config.clone();
    // The root seed governs the whole run; the world seed is derived so one
    // flag replays everything.
    config.world.seed = derive_seed(config.seed, &["world"]);

    let run_id = config.run_id();
    let root = PathBuf::from(&config.output_dir).join(&run_id);
    if root.exists() && root.read_dir()?.next().is_some() && !config.force {
        return Err(Error::UnsafeOverwrite(root.display().to_string()));
    }
    if root.exists() {
        fs::remove_dir_all(&root)?;
    }
    fs::create_dir_all(&root)?;
    let paths = RunPaths { root: root.clone() };

    let started = Instant::now();
    let world = World::generate(&config.world)?;
    let label_set = world.label_set;
    let extractor = FeatureExtractor::fit(&world.documents);

    // Iteration 0: the curated baseline.
    let seed_training0 = derive_seed(config.seed, &["iter", "0", "train"]);
    let mut model = ReferenceRelevanceModel::new(label_set, extractor.clone());
    model.set_version("iter0");
    let train_opts = TrainOptions {
        seed: seed_training0,
        ..config.training.clone()
    };
    let t0 = Instant::now();
    model.fit_generative(&world.sft_dataset, &train_opts)?;
    let mut state = RunState {
        extractor,
        label_set,
        model,
        datasets: vec![world.sft_dataset.clone()],
        manifests: Vec::new(),
        timings: BTreeMap::new(),
        world,
    };

    let dir0 = paths.iter_dir(0);
    fs::create_dir_all(&dir0)?;
    let report0 = evaluate(
        &state.model,
        &state.world.eval_queries,
        &state.world.eval_candidates,
        &state.world.truth,
    )?;
    write_jsonl(&dir0.join("metrics.jsonl"), &report0.blocks)?;
    let checkpoint_hash = checkpoint_and_hash(&state.model, &dir0)?;
    let manifest0 = IterationManifest {
        iteration: 0,
        mode: config.mode,
        sft_data_hash: state.datasets[0].content_hash().to_string(),
        prior_data_hashes: Vec::new(),
        new_data_hash: Dataset::empty(label_set).content_hash().to_string(),
        merged_data_hash: state.datasets[0].content_hash().to_string(),
        mined_count: 0,
        annotated_count: 0,
        rejected_count: 0,
        model_checkpoint_hash: checkpoint_hash,
        metrics: metric_rows(&report0),
        skipped_eval_queries: report0.skipped_queries,
        seed_lineage: SeedLineage {
            root: config.seed,
            world: state.world.config.seed,
            training: seed_training0,
            interactions: None,
            click_training: None,
            miner: None,
            annotator: None,
        },
        config: manifest_config(&config),
        warnings: Vec::new(),
    };
    write_canonical_json(&dir0.join("manifest.json"), &manifest0)?;
    state.manifests.push(manifest0);
    state
        .timings
        .insert("iter0".to_string(), t0.elapsed().as_secs_f64());

    let iterations = if config.mode == RunMode::BaselineOnly {
        0
    } else {
        config.iterations
    };
    for k in 1..=iterations {
        run_iteration(&mut state, k, &config, &paths)?;
    }

    let report = RunReport {
        run_id: run_id.clone(),
        mode: config.mode,
        iterations: state.manifests.clone(),
    };
    write_canonical_json(&paths.report(), &report)?;

    // Wall-clock sidecar, excluded from replayable artifacts.
    let mut timings = serde_json::Map::new();
    for (k, v) in &state.timings {
        timings.insert(k.clone(), serde_json::json!(v));
    }
    timings.insert(
        "total_seconds".to_string(),
        serde_json::json!(started.elapsed().as_secs_f64()),
    );
    fs::write(
        paths.timings(),
        serde_json::to_string_pretty(&serde_json::Value::Object(timings))? + "\n",
    )?;

    Ok(RunOutcome {
        run_id,
        run_dir: root,
        report,
    })
}
