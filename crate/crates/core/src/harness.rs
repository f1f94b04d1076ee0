//! Command implementations behind the CLI: corpus generation, evaluation,
//! prompt ablation and report merging.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action_space::RankedActions;
use crate::dataset::{
    build_corpus, dataset_hash, load_jsonl, render_sample_image, revalidate, save_jsonl, split, write_atomic,
    DatasetError, DatasetHeader, DifficultyMix, Sample,
};
use crate::metrics::{aggregate, score_sample, AggregateReport, MetricMeans, MetricsError, SampleScore, Table};
use crate::pedestrian_sim::SfmParams;
use crate::policy::{
    run_policy, GreedyForward, NoisyOracle, OraclePolicy, Policy, PolicyError, PolicyOutput, RemoteClient,
    RemoteEndpointConfig, RemotePolicy, RunOptions,
};
use crate::prompts::{build_system_prompt, constrained_zero_shot_prompt, Competitor, PromptConfig};
use crate::ranking_oracle::RolloutConfig;
use crate::scenario::DifficultyLevel;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCORES_FILE: &str = "scores.jsonl";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadFile { path: String, message: String },
    #[error("score files come from different datasets: {first} ({first_hash}) vs {other} ({other_hash})")]
    HashMismatch {
        first: String,
        first_hash: String,
        other: String,
        other_hash: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgs(String),
}

fn io_err(context: impl fmt::Display) -> impl FnOnce(std::io::Error) -> HarnessError {
    let context = context.to_string();
    move |source| HarnessError::Io { context, source }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(io_err(format!("writing {}", path.display())))
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicySpec {
    Oracle,
    Noisy { epsilon: f64, seed: u64 },
    Greedy,
    Remote,
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Oracle => f.write_str("oracle"),
            PolicySpec::Noisy { epsilon, seed } => write!(f, "noisy:{epsilon}:{seed}"),
            PolicySpec::Greedy => f.write_str("greedy"),
            PolicySpec::Remote => f.write_str("remote"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    /// `oracle`, `greedy`, `remote`, `noisy:EPS` or `noisy:EPS:SEED`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split(':');
        match parts.next() {
            Some("oracle") if parts.next().is_none() => Ok(PolicySpec::Oracle),
            Some("greedy") if parts.next().is_none() => Ok(PolicySpec::Greedy),
            Some("remote") if parts.next().is_none() => Ok(PolicySpec::Remote),
            Some("noisy") => {
                let epsilon: f64 = parts
                    .next()
                    .ok_or("noisy needs an epsilon, e.g. noisy:0.3")?
                    .parse()
                    .map_err(|e| format!("bad epsilon: {e}"))?;
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(format!("epsilon {epsilon} outside [0, 1]"));
                }
                let seed = match parts.next() {
                    Some(p) => p.parse().map_err(|e| format!("bad seed: {e}"))?,
                    None => 0,
                };
                if parts.next().is_some() {
                    return Err(format!("unrecognized policy `{s}`"));
                }
                Ok(PolicySpec::Noisy { epsilon, seed })
            }
            _ => Err(format!("unrecognized policy `{s}` (oracle|greedy|remote|noisy:EPS[:SEED])")),
        }
    }
}

/// Remote endpoint settings, used only by [`PolicySpec::Remote`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RemoteSettings {
    pub endpoint: RemoteEndpointConfig,
    pub record: Option<PathBuf>,
}

pub fn make_policy(
    spec: &PolicySpec,
    header: &DatasetHeader,
    remote: &RemoteSettings,
) -> Result<Box<dyn Policy>, HarnessError> {
    let oracle = OraclePolicy::new(header);
    Ok(match *spec {
        PolicySpec::Oracle => Box::new(oracle),
        PolicySpec::Noisy { epsilon, seed } => Box::new(NoisyOracle::new(epsilon, seed, oracle)?),
        PolicySpec::Greedy => Box::new(GreedyForward),
        PolicySpec::Remote => {
            let mut client = RemoteClient::new(remote.endpoint.clone())?;
            if let Some(path) = &remote.record {
                client = client.with_record(path)?;
            }
            Box::new(RemotePolicy { client })
        }
    })
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateArgs {
    pub n: usize,
    pub seed: u64,
    pub mix: DifficultyMix,
    pub out: PathBuf,
    pub images: bool,
    /// Also write `train.jsonl` / `test.jsonl` with this many test samples.
    pub test_count: Option<usize>,
    pub split_seed: u64,
    pub config: RolloutConfig,
    pub params: SfmParams,
}

impl GenerateArgs {
    pub fn new(n: usize, seed: u64, out: impl Into<PathBuf>) -> Self {
        GenerateArgs {
            n,
            seed,
            mix: DifficultyMix::default(),
            out: out.into(),
            images: true,
            test_count: None,
            split_seed: 0,
            config: RolloutConfig::default(),
            params: SfmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateManifest {
    pub n: usize,
    pub seed: u64,
    pub mix: DifficultyMix,
    pub counts: BTreeMap<DifficultyLevel, usize>,
    pub corpus: String,
    pub dataset_hash: String,
    pub split: Option<SplitManifest>,
    pub header: DatasetHeader,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: String,
    pub train_count: usize,
    pub test: String,
    pub test_count: usize,
    pub test_hash: String,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<GenerateManifest, HarnessError> {
    let header = DatasetHeader::new(args.config, args.params);
    let samples = build_corpus(args.n, args.seed, &args.mix, &args.config, &args.params)?;
    fs::create_dir_all(&args.out).map_err(io_err(format!("creating {}", args.out.display())))?;

    if args.images {
        fs::create_dir_all(args.out.join("images")).map_err(io_err("creating images directory"))?;
        samples.par_iter().try_for_each(|s| -> Result<(), HarnessError> {
            let Some(rel) = &s.image_path else { return Ok(()) };
            let raster = render_sample_image(&s.scene).map_err(DatasetError::from)?;
            let path = args.out.join(rel);
            write_atomic(&path, &raster.to_ppm()).map_err(io_err(format!("writing {}", path.display())))
        })?;
    }

    let corpus_path = args.out.join(CORPUS_FILE);
    save_jsonl(&corpus_path, &header, &samples)?;
    let mut counts = BTreeMap::new();
    for s in &samples {
        *counts.entry(s.difficulty.level).or_insert(0) += 1;
    }

    let split_manifest = match args.test_count {
        None => None,
        Some(test_count) => {
            let parts = split(samples, test_count, args.split_seed)?;
            let train = args.out.join(TRAIN_FILE);
            let test = args.out.join(TEST_FILE);
            save_jsonl(&train, &header, &parts.train)?;
            save_jsonl(&test, &header, &parts.test)?;
            Some(SplitManifest {
                seed: args.split_seed,
                train: TRAIN_FILE.into(),
                train_count: parts.train.len(),
                test: TEST_FILE.into(),
                test_count: parts.test.len(),
                test_hash: dataset_hash(&test)?,
            })
        }
    };

    let manifest = GenerateManifest {
        n: args.n,
        seed: args.seed,
        mix: args.mix,
        counts,
        corpus: CORPUS_FILE.into(),
        dataset_hash: dataset_hash(&corpus_path)?,
        split: split_manifest,
        header,
        tool_version: TOOL_VERSION.into(),
    };
    write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

// -------------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq)]
pub struct EvalArgs {
    pub data: PathBuf,
    pub policy: PolicySpec,
    pub prompt: PromptConfig,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub options: RunOptions,
    pub remote: RemoteSettings,
}

impl EvalArgs {
    pub fn new(data: impl Into<PathBuf>, policy: PolicySpec) -> Self {
        EvalArgs {
            data: data.into(),
            policy,
            prompt: PromptConfig::NONE,
            jobs: 1,
            out: None,
            options: RunOptions::default(),
            remote: RemoteSettings::default(),
        }
    }
}

/// First line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFileHeader {
    pub dataset_hash: String,
    pub method: String,
    pub policy: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub difficulty: DifficultyLevel,
    pub raw_text: String,
    pub actions: RankedActions,
    pub gt_actions: RankedActions,
    pub score: SampleScore,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: String,
    pub dataset_hash: String,
    pub policy: String,
    pub prompt: PromptConfig,
    pub prompt_name: String,
    pub options: RunOptions,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub samples: usize,
    pub total_policy_seconds: f64,
    pub timestamp: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub method: String,
    pub header: ScoreFileHeader,
    pub records: Vec<ScoreRecord>,
    pub report: AggregateReport,
    pub total_policy_seconds: f64,
    pub manifest: RunManifest,
}

pub fn method_label(policy: &str, prompt: &PromptConfig) -> String {
    if *prompt == PromptConfig::NONE {
        policy.to_string()
    } else {
        format!("{policy} [{prompt}]")
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    if jobs == 0 {
        return Err(HarnessError::InvalidArgs("jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::InvalidArgs(format!("cannot start {jobs} workers: {e}")))
}

/// Runs a policy over samples on `jobs` workers; output order follows input.
pub fn evaluate_policy(
    policy: &dyn Policy,
    samples: &[Sample],
    prompt: &PromptConfig,
    options: &RunOptions,
    jobs: usize,
) -> Result<Vec<PolicyOutput>, HarnessError> {
    let system = build_system_prompt(*prompt);
    let pool = thread_pool(jobs)?;
    Ok(pool.install(|| {
        samples
            .par_iter()
            .map(|s| run_policy(policy, s, &system, options))
            .collect()
    }))
}

pub fn score_outputs(samples: &[Sample], outputs: &[PolicyOutput]) -> Result<Vec<ScoreRecord>, HarnessError> {
    samples
        .iter()
        .zip(outputs)
        .map(|(s, o)| {
            Ok(ScoreRecord {
                id: s.id.clone(),
                difficulty: s.difficulty.level,
                raw_text: o.raw_text.clone(),
                actions: o.actions.clone(),
                gt_actions: s.gt_actions.clone(),
                score: score_sample(&o.actions, &s.gt_actions)?,
                error: o.error.clone(),
            })
        })
        .collect()
}

pub fn report_from_records(records: &[ScoreRecord], total_policy_seconds: Option<f64>) -> Result<AggregateReport, HarnessError> {
    let scores: Vec<SampleScore> = records.iter().map(|r| r.score).collect();
    let levels: Vec<DifficultyLevel> = records.iter().map(|r| r.difficulty).collect();
    Ok(aggregate(&scores, total_policy_seconds, Some(&levels))?)
}

/// Loads and fully revalidates a dataset file.
pub fn load_validated(path: &Path) -> Result<(DatasetHeader, Vec<Sample>, String), HarnessError> {
    let (header, samples) = load_jsonl(path)?;
    if samples.is_empty() {
        return Err(HarnessError::BadFile {
            path: path.display().to_string(),
            message: "dataset has no samples".into(),
        });
    }
    revalidate(&header, &samples)?;
    Ok((header, samples, dataset_hash(path)?))
}

fn to_jsonl_lines<T: Serialize>(header: &impl Serialize, rows: &[T]) -> String {
    let mut out = serde_json::to_string(header).expect("serializable");
    out.push('\n');
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    out
}

fn run_eval(
    args: &EvalArgs,
    header: &DatasetHeader,
    samples: &[Sample],
    hash: &str,
) -> Result<EvalResult, HarnessError> {
    let policy = make_policy(&args.policy, header, &args.remote)?;
    let outputs = evaluate_policy(policy.as_ref(), samples, &args.prompt, &args.options, args.jobs)?;
    let total: f64 = outputs.iter().map(|o| o.latency).sum();
    let records = score_outputs(samples, &outputs)?;
    let report = report_from_records(&records, Some(total))?;
    let method = method_label(&policy.name(), &args.prompt);
    let seed = match args.policy {
        PolicySpec::Noisy { seed, .. } => Some(seed),
        _ => None,
    };
    Ok(EvalResult {
        header: ScoreFileHeader {
            dataset_hash: hash.to_string(),
            method: method.clone(),
            policy: args.policy.to_string(),
            prompt: args.prompt.name(),
        },
        method,
        records,
        report,
        total_policy_seconds: total,
        manifest: RunManifest {
            dataset: args.data.display().to_string(),
            dataset_hash: hash.to_string(),
            policy: args.policy.to_string(),
            prompt: args.prompt,
            prompt_name: args.prompt.name(),
            options: args.options.clone(),
            seed,
            jobs: args.jobs,
            samples: samples.len(),
            total_policy_seconds: total,
            timestamp: unix_time(),
            tool_version: TOOL_VERSION.into(),
        },
    })
}

/// Validates the dataset, evaluates, and writes `scores.jsonl`,
/// `report.md`, `report.csv` and `manifest.json` under `out` when given.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalResult, HarnessError> {
    let (header, samples, hash) = load_validated(&args.data)?;
    let result = run_eval(args, &header, &samples, &hash)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
        let scores = to_jsonl_lines(&result.header, &result.records);
        write_atomic(&out.join(SCORES_FILE), scores.as_bytes()).map_err(io_err("writing scores"))?;
        let table = result.report.table(&result.method);
        write_atomic(&out.join("report.md"), table.to_markdown().as_bytes()).map_err(io_err("writing report"))?;
        write_atomic(&out.join("report.csv"), table.to_csv().as_bytes()).map_err(io_err("writing report"))?;
        write_json(&out.join(MANIFEST_FILE), &result.manifest)?;
    }
    Ok(result)
}

// ------------------------------------------------------------------ ablate

/// Prompt names one per line; blank lines and `#` comments are skipped.
pub fn parse_grid(text: &str) -> Result<Vec<PromptConfig>, HarnessError> {
    let grid: Vec<PromptConfig> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.parse().map_err(HarnessError::InvalidArgs))
        .collect::<Result<_, _>>()?;
    if grid.is_empty() {
        return Err(HarnessError::InvalidArgs("ablation grid is empty".into()));
    }
    Ok(grid)
}

fn check(b: bool) -> String {
    if b { "✓".into() } else { String::new() }
}

/// One independent evaluation per grid row over the same dataset.
pub fn cmd_ablate(args: &EvalArgs, grid: &[PromptConfig]) -> Result<Table, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::InvalidArgs("ablation grid is empty".into()));
    }
    let (header, samples, hash) = load_validated(&args.data)?;
    let mut table = Table::new(&["Meta", "Human", "Self", "AI"]);
    let mut rows = Vec::new();
    for prompt in grid {
        let row_args = EvalArgs {
            prompt: *prompt,
            ..args.clone()
        };
        let result = run_eval(&row_args, &header, &samples, &hash)?;
        table.push(
            vec![
                check(prompt.use_meta),
                check(prompt.competitor == Competitor::Human),
                check(prompt.competitor == Competitor::SelfModel),
                check(prompt.competitor == Competitor::Ai),
            ],
            result.report.overall,
            result.report.fps,
        );
        rows.push(serde_json::json!({
            "prompt": prompt.name(),
            "method": result.method,
            "overall": result.report.overall,
            "fps": result.report.fps,
        }));
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
        write_atomic(&out.join("ablation.md"), table.to_markdown().as_bytes()).map_err(io_err("writing ablation"))?;
        write_atomic(&out.join("ablation.csv"), table.to_csv().as_bytes()).map_err(io_err("writing ablation"))?;
        let lines = to_jsonl_lines(&serde_json::json!({"dataset_hash": hash}), &rows);
        write_atomic(&out.join("ablation.jsonl"), lines.as_bytes()).map_err(io_err("writing ablation"))?;
    }
    Ok(table)
}

// ------------------------------------------------------------------ report

pub fn read_score_file(path: &Path) -> Result<(ScoreFileHeader, Vec<ScoreRecord>), HarnessError> {
    let bad = |message: String| HarnessError::BadFile {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| bad("empty score file".into()))?;
    let header: ScoreFileHeader = serde_json::from_str(first).map_err(|e| bad(format!("line 1: {e}")))?;
    let records = lines
        .map(|(k, l)| serde_json::from_str(l).map_err(|e| bad(format!("line {}: {e}", k + 1))))
        .collect::<Result<Vec<ScoreRecord>, _>>()?;
    Ok((header, records))
}

/// Summed policy time from a `manifest.json` next to the score file.
fn sibling_policy_seconds(score_path: &Path) -> Option<f64> {
    let manifest = score_path.parent()?.join(MANIFEST_FILE);
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(manifest).ok()?).ok()?;
    Some(m.total_policy_seconds)
}

/// One row per score file; refuses files from different datasets.
pub fn cmd_report(files: &[PathBuf]) -> Result<Table, HarnessError> {
    if files.is_empty() {
        return Err(HarnessError::InvalidArgs("no score files given".into()));
    }
    let mut table = Table::new(&["Method"]);
    let mut first: Option<(String, String)> = None;
    for path in files {
        let (header, records) = read_score_file(path)?;
        match &first {
            None => first = Some((path.display().to_string(), header.dataset_hash.clone())),
            Some((p, h)) if *h != header.dataset_hash => {
                return Err(HarnessError::HashMismatch {
                    first: p.clone(),
                    first_hash: h.clone(),
                    other: path.display().to_string(),
                    other_hash: header.dataset_hash,
                });
            }
            Some(_) => {}
        }
        let report = report_from_records(&records, sibling_policy_seconds(path))?;
        table.push(vec![header.method], report.overall, report.fps);
    }
    Ok(table)
}

/// Means of a report restricted to one difficulty level, if present.
pub fn level_means(report: &AggregateReport, level: DifficultyLevel) -> Option<MetricMeans> {
    report.by_difficulty.get(&level).copied()
}

// ------------------------------------------------------------------ prompt

/// Text of a system prompt, or of the constrained single-shot prompt.
pub fn prompt_text(config: Option<PromptConfig>) -> String {
    match config {
        Some(c) => build_system_prompt(c).text,
        None => constrained_zero_shot_prompt().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_specs() {
        assert_eq!("oracle".parse::<PolicySpec>().unwrap(), PolicySpec::Oracle);
        assert_eq!(
            "noisy:0.3".parse::<PolicySpec>().unwrap(),
            PolicySpec::Noisy { epsilon: 0.3, seed: 0 }
        );
        assert_eq!(
            "noisy:0.5:7".parse::<PolicySpec>().unwrap(),
            PolicySpec::Noisy { epsilon: 0.5, seed: 7 }
        );
        for bad in ["noisy", "noisy:2", "noisy:0.1:x", "oracle:1", "gpt"] {
            assert!(bad.parse::<PolicySpec>().is_err(), "{bad}");
        }
        let s = PolicySpec::Noisy { epsilon: 0.25, seed: 3 };
        assert_eq!(s.to_string().parse::<PolicySpec>().unwrap(), s);
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("# rows\nnone\nmeta  # meta only\n\nmcp-ai\nmcp-ai\n").unwrap();
        assert_eq!(g.len(), 4);
        assert!(parse_grid("# nothing\n").is_err());
        assert!(parse_grid("mcp-dog").is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(method_label("oracle", &PromptConfig::NONE), "oracle");
        assert_eq!(
            method_label("remote:gpt-4o", &"mcp-ai".parse().unwrap()),
            "remote:gpt-4o [mcp-ai]"
        );
    }
}
