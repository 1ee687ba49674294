//! semiforge: turns diverse natural-instruct code corpora into validated
//! instruction/code pairs.
//!
//! Original solutions are sent to an LLM for an instruction, a refined
//! rewrite, an answer type and a fixed number of test inputs. Running the
//! original code on those inputs yields test cases; refined code is kept only
//! if it passes all of them. Survivors are deduplicated by instruction
//! similarity and ordered from many to few test cases.
//!
//! The numeric pieces ([`metrics::pass_at_k`], [`validation::rouge_l`],
//! [`dataset::FunnelStats::retention_percent`]) are generic over
//! [`num_traits::Float`]; the aliases below fix them to `f64`.

pub mod corpus;
pub mod curriculum;
pub mod dataset;
pub mod executor;
pub mod generation;
pub mod metrics;
pub mod pipeline;
pub mod validation;

/// Scalar used for scores and probabilities throughout the pipeline.
pub type Score = f64;

/// pass@k report at the default precision.
pub type PassAtKReport = metrics::PassAtKReport<Score>;

/// pass@k at the default precision.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<Score, metrics::MetricsError> {
    metrics::pass_at_k::<Score>(n, c, k)
}

/// ROUGE-L F1 between two texts at the default precision.
pub fn rouge_l_text(candidate: &str, reference: &str) -> Score {
    validation::rouge_l_text::<Score>(candidate, reference)
}

pub use corpus::{CorpusFormat, Problem, Solution};
pub use curriculum::{OrderKind, OrderingStrategy};
pub use dataset::{DatasetRecord, FunnelStats};
pub use executor::{ExecStatus, ExecutionResult, Invocation, ResourceLimits, Sandbox};
pub use generation::{AnswerType, GenerationBundle, PromptTemplate};
pub use pipeline::{run_pipeline, run_stages, PipelineConfig, Stage};
pub use validation::{TestCase, ValidatedSample, Verdict};
