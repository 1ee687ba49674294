use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use semiforge::dataset::{funnel_report, ReportFormat};
use semiforge::metrics::{evaluate_candidates, load_eval_problems};
use semiforge::pipeline::{load_stats, run_stages, ClientMode, PipelineConfig, Stage};
use semiforge::{CorpusFormat, OrderKind, Sandbox};

/// Curate natural-instruct code corpora into validated instruction/code pairs.
#[derive(Parser)]
#[command(name = "semiforge", version)]
struct Cli {
    /// Pipeline config (TOML, or JSON when the extension is .json).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    format: Option<CorpusFormat>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,
    /// Directory of recorded completions; selects the replay client.
    #[arg(long, global = true)]
    replay_dir: Option<PathBuf>,
    /// Use the live chat-completions endpoint (key from SEMIFORGE_API_KEY).
    #[arg(long, global = true, conflicts_with = "replay_dir")]
    live: bool,
    #[arg(long, global = true)]
    base_url: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    template: Option<PathBuf>,
    #[arg(long, global = true)]
    input_count: Option<usize>,
    #[arg(long, global = true)]
    interpreter: Option<PathBuf>,
    #[arg(long, global = true)]
    timeout_secs: Option<f64>,
    #[arg(long, global = true)]
    dedup_threshold: Option<f64>,
    #[arg(long, global = true)]
    order: Option<OrderKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    scale: Option<usize>,
    /// Self-instruct records for the SI and combined orderings.
    #[arg(long, global = true)]
    si: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter, merge and cap the corpus.
    Ingest,
    /// Ask the LLM for instruction, refined code, answer type and inputs.
    Generate,
    /// Build test cases, validate refined code, deduplicate instructions.
    Validate,
    /// Order the records by the configured strategy.
    Rank,
    /// Write the dataset, its metadata and the funnel report.
    Emit,
    /// Run every stage, optionally resuming from one.
    Run {
        #[arg(long)]
        resume_from: Option<Stage>,
    },
    /// pass@k of candidate programs against reference test cases.
    Eval {
        /// JSONL of {problem_id, answer_type, test_cases}; cases as {input, expected_output}.
        #[arg(long)]
        problems: PathBuf,
        /// JSONL of {problem_id, candidate_code}.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        k: Vec<u64>,
    },
    /// Print the funnel report from a stats checkpoint.
    Report {
        /// Defaults to the latest checkpoint in the work dir.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(config)
}

impl Overrides {
    fn apply(self, c: &mut PipelineConfig) {
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field {
                    c.$($target)+ = v;
                }
            };
        }
        set!(corpus => corpus_path);
        set!(format => corpus_format);
        set!(work_dir => work_dir);
        set!(output => output_path);
        set!(input_count => input_count);
        set!(interpreter => interpreter);
        set!(timeout_secs => limits.wall_timeout_secs);
        set!(dedup_threshold => dedup_threshold);
        set!(order => order);
        set!(seed => seed);
        set!(workers => workers);
        set!(base_url => client.base_url);
        set!(model => client.model);
        if self.report_dir.is_some() {
            c.report_dir = self.report_dir;
        }
        if self.template.is_some() {
            c.template_path = self.template;
        }
        if self.scale.is_some() {
            c.scale = self.scale;
        }
        if self.si.is_some() {
            c.si_path = self.si;
        }
        if self.replay_dir.is_some() {
            c.client.mode = ClientMode::Replay;
            c.client.replay_dir = self.replay_dir;
        }
        if self.live {
            c.client.mode = ClientMode::Live;
        }
    }
}

fn latest_stats(config: &PipelineConfig) -> Result<PathBuf> {
    Stage::ALL
        .iter()
        .rev()
        .map(|s| config.work_dir.join("stats").join(format!("{s}.json")))
        .find(|p| p.exists())
        .with_context(|| format!("no stats checkpoint under {}", config.work_dir.display()))
}

fn stages(config: &PipelineConfig, first: Stage, last: Stage) -> Result<()> {
    let stats = run_stages(config, first, last)?;
    info!("funnel after {last}: {:?}", stats.counts());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(cli.config.as_deref())?;
    cli.overrides.apply(&mut config);

    match cli.command {
        Command::Ingest => stages(&config, Stage::Ingest, Stage::Ingest)?,
        Command::Generate => stages(&config, Stage::Generate, Stage::Generate)?,
        Command::Validate => stages(&config, Stage::Construct, Stage::Dedup)?,
        Command::Rank => stages(&config, Stage::Order, Stage::Order)?,
        Command::Emit => stages(&config, Stage::Emit, Stage::Emit)?,
        Command::Run { resume_from } => {
            stages(&config, resume_from.unwrap_or(Stage::Ingest), Stage::Emit)?;
            print!(
                "{}",
                fs::read_to_string(config.report_dir().join("report.txt"))?
            );
        }
        Command::Eval {
            problems,
            candidates,
            k,
        } => {
            if k.is_empty() {
                bail!("--k needs at least one value");
            }
            let problems = load_eval_problems(&problems, &candidates)?;
            let sandbox = Sandbox::new(&config.interpreter)?;
            let limits = config.limits.to_limits()?;
            let report = evaluate_candidates(&sandbox, &problems, &limits, &k)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Report { stats, json } => {
            let path = match stats {
                Some(p) => p,
                None => latest_stats(&config)?,
            };
            let stats = load_stats(&path)?;
            let format = if json {
                ReportFormat::Json
            } else {
                ReportFormat::Text
            };
            print!("{}", funnel_report(&stats, format)?);
        }
        Command::ShowConfig => print!("{}", toml::to_string_pretty(&config)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
