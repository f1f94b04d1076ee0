use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use socialnav::dataset::DifficultyMix;
use socialnav::harness::{
    cmd_ablate, cmd_eval, cmd_generate, cmd_report, parse_grid, prompt_text, EvalArgs, GenerateArgs, PolicySpec,
    RemoteSettings,
};
use socialnav::policy::{QueryMode, RemoteEndpointConfig, RunOptions};
use socialnav::prompts::{ablation_grid, PromptConfig};

#[derive(Parser)]
#[command(name = "socialnav", version, about = "Multi-action social navigation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus with rendered images and a manifest.
    Generate {
        #[arg(long, default_value_t = 789)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Easy,Medium,Difficult weights.
        #[arg(long, default_value = "29,29,21")]
        mix: DifficultyMix,
        #[arg(long)]
        out: PathBuf,
        /// Also write train.jsonl / test.jsonl with this many test samples.
        #[arg(long)]
        test_count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        no_images: bool,
    },
    /// Evaluate a policy on a dataset.
    Eval {
        #[command(flatten)]
        eval: EvalOpts,
        #[arg(long, default_value = "none")]
        prompt: PromptConfig,
    },
    /// Evaluate a policy once per prompt configuration.
    Ablate {
        #[command(flatten)]
        eval: EvalOpts,
        /// File with one prompt name per line; defaults to the 8-row grid.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Merge score files from runs on the same dataset.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Print a system prompt, or the constrained single-shot prompt.
    Prompt {
        /// none|meta|com-*|mcp-*; omit for the constrained prompt.
        config: Option<PromptConfig>,
    },
}

#[derive(Args)]
struct EvalOpts {
    #[arg(long)]
    data: PathBuf,
    /// oracle | greedy | noisy:EPS[:SEED] | remote
    #[arg(long, default_value = "oracle")]
    policy: PolicySpec,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// conversational | single-shot
    #[arg(long, default_value = "single-shot")]
    mode: QueryMode,
    /// Extra user turn asked before the action question.
    #[arg(long)]
    reasoning_turn: Option<String>,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    base_url: String,
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// Append raw request/response pairs to this JSONL file.
    #[arg(long)]
    record: Option<PathBuf>,
}

impl EvalOpts {
    fn into_args(self, prompt: PromptConfig) -> EvalArgs {
        EvalArgs {
            data: self.data,
            policy: self.policy,
            prompt,
            jobs: self.jobs,
            out: self.out,
            options: RunOptions {
                mode: self.mode,
                reasoning_turn: self.reasoning_turn,
            },
            remote: RemoteSettings {
                endpoint: RemoteEndpointConfig {
                    base_url: self.base_url,
                    model_name: self.model,
                    api_key_env: self.api_key_env,
                    timeout: self.timeout,
                    max_retries: self.max_retries,
                    max_in_flight: self.max_in_flight,
                    ..RemoteEndpointConfig::default()
                },
                record: self.record,
            },
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            n,
            seed,
            mix,
            out,
            test_count,
            split_seed,
            no_images,
        } => {
            let mut args = GenerateArgs::new(n, seed, out);
            args.mix = mix;
            args.test_count = test_count;
            args.split_seed = split_seed;
            args.images = !no_images;
            let m = cmd_generate(&args).context("generate failed")?;
            println!("wrote {} samples to {} (sha256 {})", m.n, args.out.display(), m.dataset_hash);
            for (level, count) in &m.counts {
                println!("  {level}: {count}");
            }
            if let Some(s) = &m.split {
                println!("  split: {} train / {} test", s.train_count, s.test_count);
            }
        }
        Command::Eval { eval, prompt } => {
            let args = eval.into_args(prompt);
            let result = cmd_eval(&args).context("eval failed")?;
            print!("{}", result.report.table(&result.method).to_markdown());
            let degenerate = result.report.overall.degenerate;
            if degenerate > 0 {
                eprintln!("{degenerate} of {} outputs were degenerate", result.records.len());
            }
        }
        Command::Ablate { eval, grid } => {
            let grid = match grid {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    parse_grid(&text)?
                }
                None => ablation_grid(),
            };
            let table = cmd_ablate(&eval.into_args(PromptConfig::NONE), &grid).context("ablate failed")?;
            print!("{}", table.to_markdown());
        }
        Command::Report { files, csv } => {
            let table = cmd_report(&files).context("report failed")?;
            if csv {
                print!("{}", table.to_csv());
            } else {
                print!("{}", table.to_markdown());
            }
        }
        Command::Prompt { config } => println!("{}", prompt_text(config)),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
