//! Staged, resumable pipeline:
//! ingest → generate → construct → validate → dedup → order → emit.
//!
//! Every stage writes its output under the work directory together with a
//! cumulative [`FunnelStats`] checkpoint and a per-record event log, so any
//! stage can be re-run from the files of the previous one.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    self, cap_solutions, filter_problems, load_corpus, merge_duplicate_problems, CorpusError,
    CorpusFormat, MergeKey, Problem, TokenCounting,
};
use crate::curriculum::{order_records, CurriculumError, OrderKind, OrderingStrategy};
use crate::dataset::{
    emit_jsonl, funnel_report, load_si_records, read_jsonl, DatasetError, DatasetRecord,
    FunnelStats, ReportFormat,
};
use crate::executor::{ExecutorError, ResourceLimits, Sandbox};
use crate::generation::{
    build_generation_prompt, parse_components, ClientError, CompletionClient, CompletionRequest,
    GenerationBundle, LiveClient, PromptTemplate, ReplayClient, RetryPolicy, TemplateError,
};
use crate::validation::{
    construct_test_cases, dedup_instructions, validate_refined_code, DedupScope, Provenance,
    ValidatedSample, ValidationError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Generate,
    Construct,
    Validate,
    Dedup,
    Order,
    Emit,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Self::Ingest,
        Self::Generate,
        Self::Construct,
        Self::Validate,
        Self::Dedup,
        Self::Order,
        Self::Emit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ingest => "ingest",
            Self::Generate => "generate",
            Self::Construct => "construct",
            Self::Validate => "validate",
            Self::Dedup => "dedup",
            Self::Order => "order",
            Self::Emit => "emit",
        }
    }

    fn previous(self) -> Option<Stage> {
        let i = Self::ALL.iter().position(|s| *s == self)?;
        i.checked_sub(1).map(|j| Self::ALL[j])
    }

    /// Stage output file name inside the work dir.
    pub fn output_file(self) -> &'static str {
        match self {
            Self::Ingest => "corpus.jsonl",
            Self::Generate => "generated.jsonl",
            Self::Construct => "cases.jsonl",
            Self::Validate => "validated.jsonl",
            Self::Dedup => "deduped.jsonl",
            Self::Order => "ordered.jsonl",
            Self::Emit => "emitted.marker",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PipelineError::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("stage {stage}, problem {problem_id}: {source}")]
    Client {
        stage: Stage,
        problem_id: String,
        #[source]
        source: ClientError,
    },
    #[error("cannot resume from {stage}: missing {path}")]
    MissingStageFile { stage: Stage, path: PathBuf },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn stage_err(stage: Stage, e: impl fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientMode {
    Replay,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub mode: ClientMode,
    pub replay_dir: Option<PathBuf>,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            mode: ClientMode::Replay,
            replay_dir: None,
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: 2048,
            max_attempts: 5,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub wall_timeout_secs: f64,
    pub memory_cap_bytes: u64,
    pub output_cap_bytes: usize,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let d = ResourceLimits::default();
        Self {
            wall_timeout_secs: d.wall_timeout.as_secs_f64(),
            memory_cap_bytes: d.memory_cap,
            output_cap_bytes: d.output_cap,
        }
    }
}

impl LimitsConfig {
    pub fn to_limits(&self) -> Result<ResourceLimits, PipelineError> {
        if !(self.wall_timeout_secs.is_finite() && self.wall_timeout_secs > 0.0) {
            return Err(PipelineError::Config(
                "wall_timeout_secs must be positive".into(),
            ));
        }
        let limits = ResourceLimits {
            wall_timeout: Duration::from_secs_f64(self.wall_timeout_secs),
            memory_cap: self.memory_cap_bytes,
            output_cap: self.output_cap_bytes,
        };
        limits.validate().map_err(PipelineError::Config)?;
        Ok(limits)
    }
}

/// Full pipeline configuration. Every field has a default; the whole struct is
/// echoed into `manifest.json` of each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub corpus_format: CorpusFormat,
    pub token_counting: TokenCounting,
    pub max_tokens: usize,
    pub solution_cap: usize,
    /// JSON object mapping problem ids to merge groups; overrides description matching.
    pub id_map: Option<PathBuf>,
    pub template_path: Option<PathBuf>,
    pub input_count: usize,
    pub client: ClientConfig,
    pub interpreter: PathBuf,
    pub limits: LimitsConfig,
    pub dedup_threshold: f64,
    pub dedup_scope: DedupScope,
    pub order: OrderKind,
    pub seed: u64,
    pub scale: Option<usize>,
    pub si_path: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub output_path: PathBuf,
    /// Directory for `report.txt` / `report.json`; defaults to the work dir.
    pub report_dir: Option<PathBuf>,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus_path: PathBuf::new(),
            corpus_format: CorpusFormat::Apps,
            token_counting: TokenCounting::Whitespace,
            max_tokens: corpus::DEFAULT_MAX_TOKENS,
            solution_cap: corpus::DEFAULT_SOLUTION_CAP,
            id_map: None,
            template_path: None,
            input_count: crate::generation::DEFAULT_INPUT_COUNT,
            client: ClientConfig::default(),
            interpreter: PathBuf::from("python3"),
            limits: LimitsConfig::default(),
            dedup_threshold: crate::validation::DEFAULT_DEDUP_THRESHOLD,
            dedup_scope: DedupScope::Retained,
            order: OrderKind::SemiRanked,
            seed: 0,
            scale: None,
            si_path: None,
            work_dir: PathBuf::from("semiforge-work"),
            output_path: PathBuf::from("dataset.jsonl"),
            report_dir: None,
            workers: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.solution_cap == 0 {
            return bad("solution_cap must be at least 1");
        }
        if self.input_count == 0 {
            return bad("input_count must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            return bad("dedup_threshold must lie in [0, 1]");
        }
        if self.client.mode == ClientMode::Replay && self.client.replay_dir.is_none() {
            return bad("replay mode needs client.replay_dir");
        }
        self.limits.to_limits()?;
        Ok(())
    }

    pub fn report_dir(&self) -> &Path {
        self.report_dir.as_deref().unwrap_or(&self.work_dir)
    }

    fn stage_path(&self, stage: Stage) -> PathBuf {
        self.work_dir.join(stage.output_file())
    }

    fn stats_path(&self, stage: Stage) -> PathBuf {
        self.work_dir.join("stats").join(format!("{stage}.json"))
    }

    fn events_path(&self, stage: Stage) -> PathBuf {
        self.work_dir.join("events").join(format!("{stage}.jsonl"))
    }

    pub fn template(&self) -> Result<PromptTemplate, PipelineError> {
        Ok(match &self.template_path {
            Some(p) => PromptTemplate::load(p, self.input_count)?,
            None => PromptTemplate::default().with_input_count(self.input_count)?,
        })
    }

    fn client(&self) -> Result<Box<dyn CompletionClient>, PipelineError> {
        let c = &self.client;
        Ok(match c.mode {
            ClientMode::Replay => {
                Box::new(ReplayClient::new(c.replay_dir.clone().expect("validated")))
            }
            ClientMode::Live => {
                let retry = RetryPolicy {
                    max_attempts: c.max_attempts,
                    base_delay: Duration::from_millis(c.backoff_ms),
                    ..RetryPolicy::default()
                };
                Box::new(LiveClient::from_env(&c.base_url, retry).map_err(|source| {
                    PipelineError::Client {
                        stage: Stage::Generate,
                        problem_id: "-".into(),
                        source,
                    }
                })?)
            }
        })
    }
}

/// One generation result kept for the next stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedItem {
    pub provenance: Provenance,
    pub original_code: String,
    pub bundle: GenerationBundle,
}

#[derive(Debug, Serialize)]
struct Event<'a> {
    stage: Stage,
    provenance: &'a Provenance,
    outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<serde_json::Value>,
}

struct EventLog {
    stage: Stage,
    out: std::io::BufWriter<fs::File>,
}

impl EventLog {
    fn create(config: &PipelineConfig, stage: Stage) -> Result<Self, PipelineError> {
        let path = config.events_path(stage);
        fs::create_dir_all(path.parent().expect("events dir"))?;
        Ok(Self {
            stage,
            out: std::io::BufWriter::new(fs::File::create(path)?),
        })
    }

    fn record(
        &mut self,
        provenance: &Provenance,
        reason: Option<&str>,
        detail: Option<serde_json::Value>,
    ) -> Result<(), PipelineError> {
        let e = Event {
            stage: self.stage,
            provenance,
            outcome: if reason.is_some() { "dropped" } else { "kept" },
            reason: reason.map(str::to_string),
            detail,
        };
        serde_json::to_writer(&mut self.out, &e).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    fn finish(mut self) -> Result<(), PipelineError> {
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
struct StageTiming {
    stage: Stage,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    semiforge_version: &'static str,
    config: &'a PipelineConfig,
    seed: u64,
    order: OrderKind,
    template_version: String,
    stages_run: Vec<StageTiming>,
    resumed_from: Option<Stage>,
    funnel: &'a FunnelStats,
}

/// Runs the whole pipeline, optionally resuming from `resume_from`.
pub fn run_pipeline(
    config: &PipelineConfig,
    resume_from: Option<Stage>,
) -> Result<FunnelStats, PipelineError> {
    run_stages(config, resume_from.unwrap_or(Stage::Ingest), Stage::Emit)
}

/// Runs stages `first..=last`, reading the output of the stage before `first`
/// from the work dir.
pub fn run_stages(
    config: &PipelineConfig,
    first: Stage,
    last: Stage,
) -> Result<FunnelStats, PipelineError> {
    config.validate()?;
    if first > last {
        return Err(PipelineError::Config(format!(
            "stage {first} comes after {last}"
        )));
    }
    fs::create_dir_all(&config.work_dir)?;
    fs::create_dir_all(config.work_dir.join("stats"))?;

    let mut stats = match first.previous() {
        None => FunnelStats::default(),
        Some(prev) => {
            for path in [config.stage_path(prev), config.stats_path(prev)] {
                if !path.exists() {
                    return Err(PipelineError::MissingStageFile { stage: first, path });
                }
            }
            load_stats(&config.stats_path(prev))?
        }
    };

    let template = config.template()?;
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut timings = Vec::new();

    for stage in Stage::ALL
        .into_iter()
        .filter(|s| (first..=last).contains(s))
    {
        let started = Instant::now();
        info!("stage {stage}: start");
        match stage {
            Stage::Ingest => ingest(config, &mut stats)?,
            Stage::Generate => workers.install(|| generate(config, &template, &mut stats))?,
            Stage::Construct => workers.install(|| construct(config, &mut stats))?,
            Stage::Validate => workers.install(|| validate(config, &mut stats))?,
            Stage::Dedup => dedup(config, &mut stats)?,
            Stage::Order => order(config)?,
            Stage::Emit => emit(config, &stats)?,
        }
        save_stats(&config.stats_path(stage), &stats)?;
        let seconds = started.elapsed().as_secs_f64();
        info!("stage {stage}: done in {seconds:.2}s");
        timings.push(StageTiming { stage, seconds });
    }

    let manifest = Manifest {
        semiforge_version: env!("CARGO_PKG_VERSION"),
        config,
        seed: config.seed,
        order: config.order,
        template_version: template.version().to_string(),
        stages_run: timings,
        resumed_from: (first != Stage::Ingest).then_some(first),
        funnel: &stats,
    };
    fs::write(
        config.work_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(std::io::Error::from)?,
    )?;
    Ok(stats)
}

pub fn load_stats(path: &Path) -> Result<FunnelStats, PipelineError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn save_stats(path: &Path, stats: &FunnelStats) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(stats).map_err(std::io::Error::from)?;
    fs::write(path, text)?;
    Ok(())
}

fn ingest(config: &PipelineConfig, stats: &mut FunnelStats) -> Result<(), PipelineError> {
    let loaded = load_corpus(
        &config.corpus_path,
        config.corpus_format,
        config.token_counting,
    )?;
    let count = |ps: &[Problem]| Problem::solution_count(ps) as u64;
    let raw_codes = count(&loaded);
    let special: u64 = loaded
        .iter()
        .filter(|p| p.special_judge)
        .map(|p| p.solutions.len() as u64)
        .sum();
    let filtered = filter_problems(loaded, config.max_tokens);
    let key = match &config.id_map {
        Some(p) => MergeKey::load_id_map(p)?,
        None => MergeKey::NormalizedDescription,
    };
    let merged = merge_duplicate_problems(filtered, &key);
    let after_filter = count(&merged);
    let capped = cap_solutions(merged, config.solution_cap)?;
    let kept = count(&capped);

    *stats = FunnelStats::default();
    let mut note = |reason: &str, n: u64| {
        if n > 0 {
            stats
                .drop_reasons
                .entry("ingest".into())
                .or_default()
                .insert(reason.into(), n);
        }
    };
    note("special_judge", special);
    note("too_many_tokens", raw_codes - special - after_filter);
    note("over_solution_cap", after_filter - kept);
    stats.loaded_codes = kept;
    corpus::write_corpus(&capped, &config.stage_path(Stage::Ingest))?;
    info!(
        "ingest: {} problems, {kept} codes (from {raw_codes} raw)",
        capped.len()
    );
    Ok(())
}

fn generate(
    config: &PipelineConfig,
    template: &PromptTemplate,
    stats: &mut FunnelStats,
) -> Result<(), PipelineError> {
    let problems = corpus::read_corpus(&config.stage_path(Stage::Ingest))?;
    let client = config.client()?;
    let jobs: Vec<(Provenance, &str)> = problems
        .iter()
        .flat_map(|p| {
            p.solutions
                .iter()
                .enumerate()
                .map(move |(i, s)| (p.problem_id.as_str(), i, s.code.as_str()))
        })
        .enumerate()
        .map(|(seq, (id, i, code))| {
            (
                Provenance {
                    problem_id: Some(id.to_string()),
                    solution_index: Some(i),
                    sequence: Some(seq as u64),
                },
                code,
            )
        })
        .collect();

    let outcomes: Vec<Result<Result<GenerationBundle, String>, PipelineError>> = jobs
        .par_iter()
        .map(|(prov, code)| {
            let prompt = match build_generation_prompt(code, template) {
                Ok(p) => p,
                Err(TemplateError::EmptyCode) => return Ok(Err("empty_code".into())),
                Err(e) => return Err(e.into()),
            };
            let mut request = CompletionRequest::new(prompt, &config.client.model);
            request.temperature = config.client.temperature;
            request.top_p = config.client.top_p;
            request.max_tokens = config.client.max_tokens;
            match client.complete(&request) {
                Ok(c) => Ok(parse_components(&c.text).map_err(|e| format!("parse:{}", e.reason()))),
                Err(ClientError::Rejected { status, .. }) => Ok(Err(format!("rejected:{status}"))),
                Err(ClientError::MalformedResponse(_)) => Ok(Err("malformed_response".into())),
                Err(source) => Err(PipelineError::Client {
                    stage: Stage::Generate,
                    problem_id: prov.problem_id.clone().unwrap_or_default(),
                    source,
                }),
            }
        })
        .collect();

    let mut log = EventLog::create(config, Stage::Generate)?;
    let mut kept = Vec::new();
    for ((prov, code), outcome) in jobs.iter().zip(outcomes) {
        match outcome? {
            Ok(bundle) => {
                log.record(prov, None, None)?;
                kept.push(GeneratedItem {
                    provenance: prov.clone(),
                    original_code: code.to_string(),
                    bundle,
                });
            }
            Err(reason) => {
                log.record(prov, Some(&reason), None)?;
                stats.add_drop("generate", &reason);
            }
        }
    }
    log.finish()?;
    stats.generated_ok = kept.len() as u64;
    reset_after(stats, Stage::Generate);
    emit_jsonl(&kept, &config.stage_path(Stage::Generate))?;
    Ok(())
}

/// Clears counts and drop reasons of stages after `stage`, so a re-run does not
/// carry stale numbers.
fn reset_after(stats: &mut FunnelStats, stage: Stage) {
    let later: &[(&str, fn(&mut FunnelStats))] = &[
        ("construct", |s| s.with_test_cases = 0),
        ("validate", |s| s.refined_passed = 0),
        ("dedup", |s| s.after_dedup = 0),
    ];
    let skip = match stage {
        Stage::Ingest | Stage::Generate => 0,
        Stage::Construct => 1,
        Stage::Validate => 2,
        _ => 3,
    };
    for (name, clear) in &later[skip..] {
        clear(stats);
        stats.drop_reasons.remove(*name);
    }
}

fn construct(config: &PipelineConfig, stats: &mut FunnelStats) -> Result<(), PipelineError> {
    let items: Vec<GeneratedItem> = read_jsonl(&config.stage_path(Stage::Generate))?;
    let sandbox = Sandbox::new(&config.interpreter)?;
    let limits = config.limits.to_limits()?;
    let outcomes: Vec<_> = items
        .par_iter()
        .map(|item| construct_test_cases(&sandbox, &item.original_code, &item.bundle, &limits))
        .collect();

    stats.drop_reasons.remove("construct");
    let mut log = EventLog::create(config, Stage::Construct)?;
    let mut kept = Vec::new();
    for (item, outcome) in items.into_iter().zip(outcomes) {
        match outcome {
            Ok(built) => {
                let detail = (!built.dropped.is_empty())
                    .then(|| serde_json::json!({ "dropped_inputs": built.dropped }));
                log.record(&item.provenance, None, detail)?;
                let sample = ValidatedSample::new(
                    &item.bundle,
                    &item.original_code,
                    built.cases,
                    item.provenance,
                )
                .expect("non-empty cases");
                kept.push(sample);
            }
            Err(ValidationError::EmptyTestCases { dropped }) => {
                log.record(
                    &item.provenance,
                    Some("no_test_cases"),
                    Some(serde_json::json!({ "dropped_inputs": dropped })),
                )?;
                stats.add_drop("construct", "no_test_cases");
            }
            Err(ValidationError::Executor(ExecutorError::SandboxSetupFailure(msg))) => {
                log.record(
                    &item.provenance,
                    Some("sandbox_setup_failure"),
                    Some(msg.into()),
                )?;
                stats.add_drop("construct", "sandbox_setup_failure");
            }
            Err(e) => return Err(stage_err(Stage::Construct, e)),
        }
    }
    log.finish()?;
    stats.with_test_cases = kept.len() as u64;
    reset_after(stats, Stage::Construct);
    emit_jsonl(&kept, &config.stage_path(Stage::Construct))?;
    Ok(())
}

fn validate(config: &PipelineConfig, stats: &mut FunnelStats) -> Result<(), PipelineError> {
    let samples: Vec<ValidatedSample> = read_jsonl(&config.stage_path(Stage::Construct))?;
    let sandbox = Sandbox::new(&config.interpreter)?;
    let limits = config.limits.to_limits()?;
    let verdicts: Vec<_> = samples
        .par_iter()
        .map(|s| validate_refined_code(&sandbox, &s.refined_code, &s.test_cases, &limits))
        .collect();

    stats.drop_reasons.remove("validate");
    let mut log = EventLog::create(config, Stage::Validate)?;
    let mut kept = Vec::new();
    for (sample, verdict) in samples.into_iter().zip(verdicts) {
        match verdict {
            Ok(v) if v.passed() => {
                log.record(&sample.provenance, None, None)?;
                kept.push(sample);
            }
            Ok(v) => {
                let crate::validation::Verdict::Fail { case_index, reason } = v else {
                    unreachable!()
                };
                log.record(
                    &sample.provenance,
                    Some(reason.as_str()),
                    Some(serde_json::json!({ "case_index": case_index })),
                )?;
                stats.add_drop("validate", reason.as_str());
            }
            Err(ValidationError::Executor(ExecutorError::SandboxSetupFailure(msg))) => {
                log.record(
                    &sample.provenance,
                    Some("sandbox_setup_failure"),
                    Some(msg.into()),
                )?;
                stats.add_drop("validate", "sandbox_setup_failure");
            }
            Err(e) => return Err(stage_err(Stage::Validate, e)),
        }
    }
    log.finish()?;
    stats.refined_passed = kept.len() as u64;
    reset_after(stats, Stage::Validate);
    emit_jsonl(&kept, &config.stage_path(Stage::Validate))?;
    Ok(())
}

fn dedup(config: &PipelineConfig, stats: &mut FunnelStats) -> Result<(), PipelineError> {
    let samples: Vec<ValidatedSample> = read_jsonl(&config.stage_path(Stage::Validate))?;
    let (kept, dropped) = dedup_instructions(samples, config.dedup_threshold, config.dedup_scope);
    stats.drop_reasons.remove("dedup");
    let mut log = EventLog::create(config, Stage::Dedup)?;
    for s in &kept {
        log.record(&s.provenance, None, None)?;
    }
    for s in &dropped {
        log.record(&s.provenance, Some("similar_instruction"), None)?;
        stats.add_drop("dedup", "similar_instruction");
    }
    log.finish()?;
    stats.after_dedup = kept.len() as u64;
    emit_jsonl(&kept, &config.stage_path(Stage::Dedup))?;
    Ok(())
}

fn si_records(config: &PipelineConfig) -> Result<Vec<DatasetRecord>, PipelineError> {
    let path = config
        .si_path
        .as_ref()
        .ok_or_else(|| PipelineError::Config(format!("ordering {} needs si_path", config.order)))?;
    Ok(load_si_records(path)?)
}

fn order(config: &PipelineConfig) -> Result<(), PipelineError> {
    let semi = || -> Result<Vec<DatasetRecord>, PipelineError> {
        let samples: Vec<ValidatedSample> = read_jsonl(&config.stage_path(Stage::Dedup))?;
        Ok(samples.into_iter().map(DatasetRecord::from_semi).collect())
    };
    let records = match config.order {
        OrderKind::SemiRanked | OrderKind::SemiUnranked => semi()?,
        OrderKind::NiShuffled => {
            DatasetRecord::from_ni(&corpus::read_corpus(&config.stage_path(Stage::Ingest))?)
        }
        OrderKind::SiGeneratedOrder => si_records(config)?,
        OrderKind::CombinedSiThenSemi | OrderKind::AllShuffled => {
            let mut all = si_records(config)?;
            all.extend(semi()?);
            all
        }
    };
    for r in &records {
        r.check()?;
    }
    let strategy = OrderingStrategy::new(config.order, config.seed);
    let mut ordered = order_records(records, &strategy)?;
    if let Some(n) = config.scale {
        ordered.truncate(n);
    }
    emit_jsonl(&ordered, &config.stage_path(Stage::Order))?;
    Ok(())
}

#[derive(Serialize)]
struct DatasetMeta<'a> {
    order: OrderKind,
    seed: u64,
    scale: Option<usize>,
    records: usize,
    output: &'a Path,
}

fn emit(config: &PipelineConfig, stats: &FunnelStats) -> Result<(), PipelineError> {
    let ordered: Vec<DatasetRecord> = read_jsonl(&config.stage_path(Stage::Order))?;
    if let Some(parent) = config
        .output_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
    {
        fs::create_dir_all(parent)?;
    }
    let written = emit_jsonl(&ordered, &config.output_path)?;
    let meta = DatasetMeta {
        order: config.order,
        seed: config.seed,
        scale: config.scale,
        records: written,
        output: &config.output_path,
    };
    let meta_path = config.output_path.with_extension("meta.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).map_err(std::io::Error::from)?,
    )?;

    let report_dir = config.report_dir();
    fs::create_dir_all(report_dir)?;
    fs::write(
        report_dir.join("report.txt"),
        funnel_report(stats, ReportFormat::Text)?,
    )?;
    fs::write(
        report_dir.join("report.json"),
        funnel_report(stats, ReportFormat::Json)?,
    )?;
    fs::write(config.stage_path(Stage::Emit), format!("{written}\n"))?;
    info!(
        "emit: {written} records -> {}",
        config.output_path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_parse() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("train".parse::<Stage>().is_err());
        assert_eq!(Stage::Validate.previous(), Some(Stage::Construct));
        assert_eq!(Stage::Ingest.previous(), None);
    }

    #[test]
    fn config_defaults_hold_fixed_constants() {
        let c = PipelineConfig::default();
        assert_eq!(c.max_tokens, 1000);
        assert_eq!(c.solution_cap, 25);
        assert_eq!(c.dedup_threshold, 0.7);
        assert_eq!(c.order, OrderKind::SemiRanked);
        assert_eq!(c.input_count, 8);
        assert_eq!((c.client.temperature, c.client.top_p), (0.7, 0.95));
    }

    #[test]
    fn config_validation() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_err(), "replay without dir");
        c.client.replay_dir = Some("x".into());
        assert!(c.validate().is_ok());
        c.workers = 0;
        assert!(c.validate().is_err());
        c.workers = 1;
        c.dedup_threshold = 1.5;
        assert!(c.validate().is_err());
        c.dedup_threshold = 0.7;
        c.limits.wall_timeout_secs = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_parses_partial_json() {
        let c: PipelineConfig = serde_json::from_str(
            r#"{"corpus_path":"c","order":"all-shuffled","seed":9,"limits":{"wall_timeout_secs":2.5}}"#,
        )
        .unwrap();
        assert_eq!(c.order, OrderKind::AllShuffled);
        assert_eq!(
            c.limits.to_limits().unwrap().wall_timeout,
            Duration::from_millis(2500)
        );
        assert_eq!(c.solution_cap, 25);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn resume_without_files_fails() {
        let dir = tempfile::tempdir().unwrap();
        let config = PipelineConfig {
            work_dir: dir.path().to_path_buf(),
            client: ClientConfig {
                replay_dir: Some(dir.path().into()),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(
            run_pipeline(&config, Some(Stage::Validate)),
            Err(PipelineError::MissingStageFile {
                stage: Stage::Validate,
                ..
            })
        ));
    }
}
