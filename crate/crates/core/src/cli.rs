//! Command-line surface: strict JSON config loading, flag overrides, and
//! the simulate / run / report subcommands with a stable exit-code
//! contract (0 ok, 2 config or usage, 3 unsafe overwrite, 4 backend
//! failure, 5 corrupt artifacts).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::domain::Query;
use crate::error::{Error, Result};
use crate::eval::{ab_absolute_gain, sbs_delta, MetricBlock};
use crate::jsonl::write_jsonl;
use crate::pipeline::{run, BackendSpec, RunConfig, RunReport};
use crate::seeding::derive_seed;
use crate::simulator::{simulate_interactions, RankedCandidates, World};

#[derive(Debug, Parser)]
#[command(
    name = "serm",
    version,
    about = "Self-evolving relevance pipeline: mine, annotate, retrain, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic world and write its artifacts.
    Simulate(SimulateArgs),
    /// Execute a full run: iteration-0 baseline plus self-evolution rounds.
    Run(RunArgs),
    /// Summarize completed run directories into a comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the world seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Stream iterations to materialize (world queries run 0..=N).
    #[arg(long)]
    iterations: Option<usize>,
    /// Output directory (default <output_dir>/world-s<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// serm, self-training, or baseline.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    max_workers: Option<usize>,
    /// HTTP annotation endpoint; beats ANNOTATOR_ENDPOINT and the config.
    #[arg(long)]
    annotator_endpoint: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Completed run directories (each holding report.json).
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
    /// Win-count JSON files: {"scope", "good", "bad", "same"}.
    #[arg(long)]
    sbs: Vec<PathBuf>,
    /// Rate-gain JSON files: {"scope", "rate_gain", "population"}.
    #[arg(long)]
    ab: Vec<PathBuf>,
    /// Write the JSON comparison here instead of printing it.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Strict config load: unknown keys and malformed values fail with the
/// offending path in the message.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&body)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn effective_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = &args.mode {
        config.mode = mode.parse()?;
    }
    if let Some(iterations) = args.iterations {
        config.iterations = iterations;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(max_workers) = args.max_workers {
        config.max_workers = max_workers;
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.display().to_string();
    }
    if args.force {
        config.force = true;
    }
    // Endpoint resolution: flag beats environment beats config file.
    let fallback = args
        .annotator_endpoint
        .clone()
        .or_else(|| std::env::var("ANNOTATOR_ENDPOINT").ok().filter(|s| !s.is_empty()));
    if let Some(url) = fallback {
        for spec in &mut config.annotator.backends {
            if let BackendSpec::Http { endpoint, .. } = spec {
                if args.annotator_endpoint.is_some() || endpoint.is_none() {
                    *endpoint = Some(url.clone());
                }
            }
        }
    }
    config.validate()?;
    Ok(config)
}

fn guard_overwrite(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && dir.read_dir()?.next().is_some() {
        if !force {
            return Err(Error::UnsafeOverwrite(dir.display().to_string()));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.world.seed = seed;
    }
    if let Some(iterations) = args.iterations {
        config.iterations = iterations;
    }
    config.world.validate()?;

    let out = args.out.clone().unwrap_or_else(|| {
        PathBuf::from(&config.output_dir).join(format!("world-s{}", config.world.seed))
    });
    guard_overwrite(&out, args.force)?;

    let world = World::generate(&config.world)?;
    let mut queries: Vec<Query> = world.sft_queries.clone();
    let mut truth = world.truth.clone();
    let mut interactions = Vec::new();

    // Iteration 0 interactions replay the curated queries under the
    // retrieval (lexical) ranking; streamed iterations follow.
    let seed = derive_seed(config.world.seed, &["simulate-interactions"]);
    let ranked0: Vec<RankedCandidates> = world
        .sft_queries
        .iter()
        .map(|q| RankedCandidates {
            query: q.clone(),
            docs: world.sft_candidates[&q.id].clone(),
        })
        .collect();
    interactions.extend(simulate_interactions(&ranked0, &truth, &world.config, seed)?);

    for k in 1..=config.iterations {
        let stream = world.stream_iteration(k)?;
        let ranked: Vec<RankedCandidates> = stream
            .queries
            .iter()
            .map(|q| RankedCandidates {
                query: q.clone(),
                docs: stream.candidates[&q.id].clone(),
            })
            .collect();
        interactions.extend(simulate_interactions(
            &ranked,
            &stream.truth,
            &world.config,
            seed,
        )?);
        truth.merge(&stream.truth);
        queries.extend(stream.queries);
    }
    queries.extend(world.eval_queries.iter().cloned());

    write_jsonl(&out.join("docs.jsonl"), &world.documents)?;
    write_jsonl(&out.join("queries.jsonl"), &queries)?;
    write_jsonl(&out.join("interactions.jsonl"), &interactions)?;
    write_jsonl(&out.join("truth.jsonl"), &truth.records())?;
    println!(
        "world written to {}: {} docs, {} queries, {} interactions, {} truth labels",
        out.display(),
        world.documents.len(),
        queries.len(),
        interactions.len(),
        truth.len()
    );
    Ok(())
}

fn percent(x: f64) -> String {
    format!("{:6.2}", x * 100.0)
}

/// One table row per iteration: family column groups of ND@1 / ND@4 / Acc,
/// values scaled to percentages.
fn metric_table(title: &str, iterations: &[(usize, &[MetricBlock])]) -> String {
    let mut scopes: Vec<String> = Vec::new();
    for (_, blocks) in iterations {
        for b in *blocks {
            if !scopes.contains(&b.scope) {
                scopes.push(b.scope.clone());
            }
        }
    }
    let mut out = String::new();
    out.push_str(&format!("== {title} ==\n"));
    out.push_str("iter");
    for scope in &scopes {
        out.push_str(&format!("  | {scope:^20}"));
    }
    out.push('\n');
    out.push_str("    ");
    for _ in &scopes {
        out.push_str(&format!("  | {:>6} {:>6} {:>6}", "nd@1", "nd@4", "acc"));
    }
    out.push('\n');
    for (iteration, blocks) in iterations {
        out.push_str(&format!("{iteration:<4}"));
        for scope in &scopes {
            match blocks.iter().find(|b| &b.scope == scope) {
                Some(b) => out.push_str(&format!(
                    "  | {} {} {}",
                    percent(b.ndcg1),
                    percent(b.ndcg4),
                    percent(b.accuracy)
                )),
                None => out.push_str(&format!("  | {:>6} {:>6} {:>6}", "-", "-", "-")),
            }
        }
        out.push('\n');
    }
    out
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = effective_run_config(args)?;
    let outcome = run(&config)?;
    let last = outcome
        .report
        .iterations
        .last()
        .ok_or_else(|| Error::state("run produced no manifests"))?;
    println!(
        "run {} complete: {} iterations, artifacts in {}",
        outcome.run_id,
        outcome.report.iterations.len(),
        outcome.run_dir.display()
    );
    print!(
        "{}",
        metric_table(
            &format!("{} final (iteration {})", outcome.run_id, last.iteration),
            &[(last.iteration, last.metrics.as_slice())],
        )
    );
    Ok(())
}

fn read_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("report.json");
    let body = fs::read_to_string(&path).map_err(|e| Error::CorruptArtifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&body).map_err(|e| Error::CorruptArtifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SbsCounts {
    scope: String,
    good: u64,
    bad: u64,
    same: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AbCounts {
    scope: String,
    rate_gain: f64,
    population: u64,
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).map_err(|e| Error::CorruptArtifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&body).map_err(|e| Error::CorruptArtifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for dir in &args.run_dirs {
        reports.push(read_report(dir)?);
    }

    let mut text = String::new();
    for report in &reports {
        let rows: Vec<(usize, &[MetricBlock])> = report
            .iterations
            .iter()
            .map(|m| (m.iteration, m.metrics.as_slice()))
            .collect();
        text.push_str(&metric_table(
            &format!("{} ({})", report.run_id, report.mode.as_str()),
            &rows,
        ));
        text.push('\n');
    }

    let mut sbs_rows: Vec<serde_json::Value> = Vec::new();
    for path in &args.sbs {
        let counts: SbsCounts = read_json_file(path)?;
        let delta = sbs_delta(counts.good, counts.bad, counts.same)?;
        text.push_str(&format!(
            "sbs {:<12} G={} B={} S={}  delta {:+.2}%\n",
            counts.scope,
            counts.good,
            counts.bad,
            counts.same,
            delta * 100.0
        ));
        sbs_rows.push(serde_json::json!({
            "scope": counts.scope,
            "good": counts.good,
            "bad": counts.bad,
            "same": counts.same,
            "delta": delta,
        }));
    }
    let mut ab_rows: Vec<serde_json::Value> = Vec::new();
    for path in &args.ab {
        let counts: AbCounts = read_json_file(path)?;
        let gain = ab_absolute_gain(counts.rate_gain, counts.population);
        text.push_str(&format!(
            "gain {:<12} rate {:+.6} over {}  absolute {:+.0}\n",
            counts.scope, counts.rate_gain, counts.population, gain
        ));
        ab_rows.push(serde_json::json!({
            "scope": counts.scope,
            "rate_gain": counts.rate_gain,
            "population": counts.population,
            "absolute_gain": gain,
        }));
    }

    print!("{text}");

    let mut comparison = BTreeMap::new();
    comparison.insert("runs", serde_json::to_value(&reports)?);
    comparison.insert("sbs", serde_json::Value::Array(sbs_rows));
    comparison.insert("ab", serde_json::Value::Array(ab_rows));
    let json = serde_json::to_string_pretty(&comparison)? + "\n";
    match &args.json {
        Some(path) => {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, json)?;
            println!("comparison json written to {}", path.display());
        }
        None => {
            println!();
            print!("{json}");
        }
    }
    Ok(())
}

/// Parse argv and dispatch; clap handles usage errors with exit code 2.
pub fn main_entry() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::RunMode;
    use tempfile::TempDir;

    #[test]
    fn strict_config_loading_names_bad_fields() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("config.json");

        fs::write(&path, r#"{"iterations": 2, "seed": 5}"#).unwrap();
        let config = load_config(&path).unwrap();
        assert_eq!(config.iterations, 2);
        assert_eq!(config.seed, 5);

        fs::write(&path, r#"{"iteratons": 2}"#).unwrap();
        let err = load_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("iteratons"), "{err}");

        fs::write(&path, r#"{"miner": {"tau_c": 2.0}}"#).unwrap();
        let err = load_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("tau_c"), "{err}");

        fs::write(&path, r#"{"world": {"drift_rate": -0.5}}"#).unwrap();
        let err = load_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("drift_rate"), "{err}");
    }

    #[test]
    fn flags_override_file_values() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("config.json");
        fs::write(
            &path,
            r#"{"mode": "baseline", "iterations": 1, "seed": 3, "annotator": {"backends": [
                {"kind": "http", "backend_id": "remote"}
            ]}}"#,
        )
        .unwrap();
        let args = RunArgs {
            config: Some(path),
            mode: Some("self-training".into()),
            iterations: Some(4),
            seed: Some(11),
            force: true,
            max_workers: Some(2),
            annotator_endpoint: Some("http://flag.example/annotate".into()),
            output_dir: Some(tmp.path().join("out")),
        };
        let config = effective_run_config(&args).unwrap();
        assert_eq!(config.mode, RunMode::SelfTraining);
        assert_eq!(config.iterations, 4);
        assert_eq!(config.seed, 11);
        assert!(config.force);
        assert_eq!(config.max_workers, 2);
        match &config.annotator.backends[0] {
            BackendSpec::Http { endpoint, .. } => {
                assert_eq!(endpoint.as_deref(), Some("http://flag.example/annotate"));
            }
            other => panic!("unexpected backend {other:?}"),
        }
    }

    #[test]
    fn metric_table_formats_percentages() {
        let blocks = vec![
            MetricBlock {
                scope: "overall".into(),
                ndcg1: 0.8474,
                ndcg4: 0.8696,
                accuracy: 0.7012,
                num_queries: 100,
                num_pairs: 1500,
            },
            MetricBlock {
                scope: "germanic".into(),
                ndcg1: 0.8756,
                ndcg4: 0.88,
                accuracy: 0.75,
                num_queries: 30,
                num_pairs: 450,
            },
        ];
        let table = metric_table("demo", &[(0, blocks.as_slice())]);
        assert!(table.contains("84.74"), "{table}");
        assert!(table.contains("87.56"), "{table}");
        assert!(table.contains("overall"), "{table}");
        assert!(table.contains("germanic"), "{table}");
    }

    #[test]
    fn report_on_missing_run_is_corrupt_artifact() {
        let tmp = TempDir::new().unwrap();
        let err = read_report(&tmp.path().join("nope")).unwrap_err();
        assert_eq!(err.exit_code(), 5);
        assert!(err.to_string().contains("report.json"));

        let dir = tmp.path().join("bad-run");
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("report.json"), "{ not json").unwrap();
        let err = read_report(&dir).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }

    #[test]
    fn simulate_writes_world_artifacts_and_respects_force() {
        let tmp = TempDir::new().unwrap();
        let config_path = tmp.path().join("config.json");
        fs::write(
            &config_path,
            serde_json::json!({
                "output_dir": tmp.path().join("artifacts").display().to_string(),
                "iterations": 1,
                "world": {
                    "num_topics": 8,
                    "vocab_per_topic": 8,
                    "num_docs": 48,
                    "queries_per_iteration": 12,
                    "trend_tokens": 6,
                    "candidates_per_query": 5,
                    "random_negatives": 2,
                    "eval_queries_per_topic": 1,
                    "seed": 21
                }
            })
            .to_string(),
        )
        .unwrap();
        let args = SimulateArgs {
            config: Some(config_path),
            seed: None,
            iterations: None,
            out: None,
            force: false,
        };
        cmd_simulate(&args).unwrap();
        let out = tmp.path().join("artifacts/world-s21");
        for name in ["docs.jsonl", "queries.jsonl", "interactions.jsonl", "truth.jsonl"] {
            let path = out.join(name);
            assert!(path.exists(), "{name} missing");
            assert!(fs::metadata(&path).unwrap().len() > 0, "{name} empty");
        }

        // Second run without --force refuses to overwrite.
        let err = cmd_simulate(&args).unwrap_err();
        assert_eq!(err.exit_code(), 3);

        let forced = SimulateArgs { force: true, ..args };
        cmd_simulate(&forced).unwrap();
    }
}
